#include "edgellm/registry.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

using json = nlohmann::json;

std::string_view to_string(SizeClass c) noexcept {
  switch (c) {
    case SizeClass::Large: return "Large";
    case SizeClass::Medium: return "Medium";
    case SizeClass::Small: return "Small";
  }
  return "Small";
}

std::string_view to_string(ChatTemplate t) noexcept {
  return t == ChatTemplate::Generic ? "generic" : "passthrough";
}

std::string_view to_string(BackendKind k) noexcept {
  return k == BackendKind::HttpCompletion ? "http" : "sim";
}

SizeClass classify_size(double params_billions) {
  if (!std::isfinite(params_billions) || params_billions <= 0.0) {
    throw Error(ErrorCode::InvalidParamCount,
                "params_billions must be positive, got " + format_double(params_billions));
  }
  if (params_billions > 6.0) return SizeClass::Large;
  if (params_billions >= 3.0) return SizeClass::Medium;
  return SizeClass::Small;
}

namespace {

[[noreturn]] void syntax(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigSyntax, where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) syntax(where, std::string("missing field '") + key + "'");
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) syntax(where, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) syntax(where, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<SizeClass> parse_size_class(const std::string& s) {
  if (s == "Large" || s == "large") return SizeClass::Large;
  if (s == "Medium" || s == "medium") return SizeClass::Medium;
  if (s == "Small" || s == "small") return SizeClass::Small;
  return std::nullopt;
}

SimConfig parse_sim(const json& j, const std::string& where) {
  if (!j.is_object()) syntax(where, "'sim' must be an object");
  SimConfig sim;
  sim.prefill_ms_per_token = require_number(j, "prefill_ms_per_token", where);
  sim.decode_ms_per_token = require_number(j, "decode_ms_per_token", where);
  if (!(sim.prefill_ms_per_token > 0.0) || !std::isfinite(sim.prefill_ms_per_token)) {
    syntax(where, "prefill_ms_per_token must be positive");
  }
  if (!(sim.decode_ms_per_token > 0.0) || !std::isfinite(sim.decode_ms_per_token)) {
    syntax(where, "decode_ms_per_token must be positive");
  }
  if (j.contains("jitter_sigma_ms")) {
    sim.jitter_sigma_ms = require_number(j, "jitter_sigma_ms", where);
    if (!(sim.jitter_sigma_ms >= 0.0) || !std::isfinite(sim.jitter_sigma_ms)) {
      syntax(where, "jitter_sigma_ms must be non-negative");
    }
  }
  if (j.contains("clock")) {
    std::string clock = require_string(j, "clock", where);
    if (clock == "injected") {
      sim.clock = SimClock::Injected;
    } else if (clock == "wall") {
      sim.clock = SimClock::Wall;
    } else {
      syntax(where, "clock must be 'injected' or 'wall'");
    }
  }
  if (j.contains("seed")) {
    const json& s = j["seed"];
    if (!s.is_number_integer()) syntax(where, "seed must be an integer");
    sim.seed = s.is_number_unsigned() ? s.get<std::uint64_t>()
                                      : static_cast<std::uint64_t>(s.get<std::int64_t>());
  }
  if (j.contains("stop_after_tokens") && !j["stop_after_tokens"].is_null()) {
    const json& s = j["stop_after_tokens"];
    if (!s.is_number_integer() || s.get<long long>() < 1) {
      syntax(where, "stop_after_tokens must be a positive integer");
    }
    sim.stop_after_tokens = s.get<int>();
  }
  if (j.contains("score_table")) {
    const json& table = j["score_table"];
    if (!table.is_array()) syntax(where, "score_table must be an array");
    for (const json& e : table) {
      std::string entry_where = where + ".score_table";
      std::uint64_t hash = 0;
      if (e.contains("context")) {
        hash = fnv1a64(require_string(e, "context", entry_where));
      } else {
        std::string hex = require_string(e, "context_hash", entry_where);
        try {
          std::size_t used = 0;
          hash = std::stoull(hex, &used, 16);
          if (used != hex.size()) throw std::invalid_argument(hex);
        } catch (const std::exception&) {
          syntax(entry_where, "context_hash must be hex");
        }
      }
      std::string continuation = require_string(e, "continuation", entry_where);
      sim.score_table[{hash, continuation}] = require_number(e, "ll", entry_where);
    }
  }
  return sim;
}

BackendEndpoint parse_backend(const json& j, const std::string& where) {
  if (!j.is_object()) syntax(where, "'backend' must be an object");
  BackendEndpoint ep;
  std::string kind = require_string(j, "kind", where);
  bool has_url = j.contains("url") && !j["url"].is_null();
  bool has_sim = j.contains("sim") && !j["sim"].is_null();
  if (kind == "http") {
    ep.kind = BackendKind::HttpCompletion;
    if (!has_url) throw Error(ErrorCode::IncompleteEndpoint, where + ": http backend requires 'url'");
    if (has_sim) throw Error(ErrorCode::IncompleteEndpoint, where + ": http backend must not carry 'sim'");
    ep.url = require_string(j, "url", where);
    if (ep.url.empty()) throw Error(ErrorCode::IncompleteEndpoint, where + ": empty 'url'");
  } else if (kind == "sim") {
    ep.kind = BackendKind::Simulated;
    if (!has_sim) throw Error(ErrorCode::IncompleteEndpoint, where + ": sim backend requires 'sim'");
    if (has_url) throw Error(ErrorCode::IncompleteEndpoint, where + ": sim backend must not carry 'url'");
    ep.sim = parse_sim(j["sim"], where + ".sim");
  } else {
    syntax(where, "backend kind must be 'http' or 'sim'");
  }
  if (j.contains("pid") && !j["pid"].is_null()) {
    if (!j["pid"].is_number_integer()) syntax(where, "pid must be an integer");
    ep.pid = j["pid"].get<int>();
  }
  return ep;
}

ModelSpec parse_model(const json& j, std::size_t index) {
  std::string where = "models[" + std::to_string(index) + "]";
  if (!j.is_object()) syntax(where, "entry must be an object");
  ModelSpec m;
  m.name = require_string(j, "name", where);
  if (m.name.empty()) syntax(where, "empty model name");
  where += " (" + m.name + ")";
  m.params_billions = require_number(j, "params_billions", where);
  m.size_class = classify_size(m.params_billions);
  if (j.contains("size_class") && !j["size_class"].is_null()) {
    auto declared = parse_size_class(require_string(j, "size_class", where));
    if (!declared) syntax(where, "unknown size_class");
    if (*declared != m.size_class) {
      throw Error(ErrorCode::ClassMismatch,
                  where + ": declared " + std::string(to_string(*declared)) + " but " +
                      format_double(m.params_billions) + "B is " + std::string(to_string(m.size_class)));
    }
  }
  m.quantization = require_string(j, "quantization", where);
  m.backend = parse_backend(require(j, "backend", where), where + ".backend");
  const json& ctx = require(j, "max_context_tokens", where);
  if (!ctx.is_number_integer() || ctx.get<long long>() < 1) {
    syntax(where, "max_context_tokens must be a positive integer");
  }
  m.max_context_tokens = ctx.get<int>();
  if (j.contains("chat_template") && !j["chat_template"].is_null()) {
    std::string t = require_string(j, "chat_template", where);
    if (t == "generic") {
      m.chat_template = ChatTemplate::Generic;
    } else if (t == "passthrough") {
      m.chat_template = ChatTemplate::Passthrough;
    } else {
      syntax(where, "chat_template must be 'generic' or 'passthrough'");
    }
  }
  return m;
}

json sim_to_json(const SimConfig& sim) {
  json j = {
      {"prefill_ms_per_token", sim.prefill_ms_per_token},
      {"decode_ms_per_token", sim.decode_ms_per_token},
      {"jitter_sigma_ms", sim.jitter_sigma_ms},
      {"clock", sim.clock == SimClock::Injected ? "injected" : "wall"},
      {"seed", sim.seed},
  };
  if (sim.stop_after_tokens) j["stop_after_tokens"] = *sim.stop_after_tokens;
  if (!sim.score_table.empty()) {
    json table = json::array();
    for (const auto& [key, ll] : sim.score_table) {
      table.push_back({{"context_hash", hex64(key.first)}, {"continuation", key.second}, {"ll", ll}});
    }
    j["score_table"] = std::move(table);
  }
  return j;
}

}  // namespace

Registry Registry::from_models(std::vector<ModelSpec> models) {
  if (models.empty()) throw Error(ErrorCode::ConfigSyntax, "registry must contain at least one model");
  std::set<std::string_view> seen;
  for (const ModelSpec& m : models) {
    if (m.name.empty()) throw Error(ErrorCode::ConfigSyntax, "empty model name");
    if (!seen.insert(m.name).second) {
      throw Error(ErrorCode::DuplicateModel, "model '" + m.name + "' is registered twice");
    }
    if (classify_size(m.params_billions) != m.size_class) {
      throw Error(ErrorCode::ClassMismatch, "model '" + m.name + "' has inconsistent size_class");
    }
    if (m.max_context_tokens < 1) {
      throw Error(ErrorCode::ConfigSyntax, "model '" + m.name + "' needs positive max_context_tokens");
    }
    bool http = m.backend.kind == BackendKind::HttpCompletion;
    if (http ? (m.backend.url.empty() || m.backend.sim) : (!m.backend.sim || !m.backend.url.empty())) {
      throw Error(ErrorCode::IncompleteEndpoint, "model '" + m.name + "' endpoint fields do not match kind");
    }
  }
  return Registry(std::move(models));
}

Registry Registry::load(std::string_view json_document) {
  json doc;
  try {
    doc = json::parse(json_document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigSyntax, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ConfigSyntax, "document must be an object");
  auto it = doc.find("models");
  if (it == doc.end() || !it->is_array()) throw Error(ErrorCode::ConfigSyntax, "missing 'models' array");
  if (it->empty()) throw Error(ErrorCode::ConfigSyntax, "'models' is empty");

  std::vector<ModelSpec> models;
  models.reserve(it->size());
  for (std::size_t i = 0; i < it->size(); ++i) models.push_back(parse_model((*it)[i], i));
  return from_models(std::move(models));
}

Registry Registry::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open registry config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load(buf.str());
}

const ModelSpec* Registry::find(std::string_view name) const noexcept {
  for (const ModelSpec& m : models_) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

const ModelSpec& Registry::model(std::string_view name) const {
  if (const ModelSpec* m = find(name)) return *m;
  throw Error(ErrorCode::ModelNotFound, "no model named '" + std::string(name) + "'");
}

const BackendEndpoint& Registry::resolve_backend(std::string_view name) const {
  return model(name).backend;
}

std::string Registry::to_json() const {
  json models = json::array();
  for (const ModelSpec& m : models_) {
    json backend = {{"kind", to_string(m.backend.kind)}};
    if (m.backend.kind == BackendKind::HttpCompletion) {
      backend["url"] = m.backend.url;
    } else {
      backend["sim"] = sim_to_json(*m.backend.sim);
    }
    if (m.backend.pid) backend["pid"] = *m.backend.pid;
    models.push_back({
        {"name", m.name},
        {"params_billions", m.params_billions},
        {"size_class", to_string(m.size_class)},
        {"quantization", m.quantization},
        {"backend", std::move(backend)},
        {"max_context_tokens", m.max_context_tokens},
        {"chat_template", to_string(m.chat_template)},
    });
  }
  return json{{"models", std::move(models)}}.dump(2) + "\n";
}

}  // namespace edgellm
