#include "edgellm/http_server.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <thread>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

using json = nlohmann::ordered_json;

void ResourceBoard::publish(const std::string& model, const ResourceSample& sample) {
  std::lock_guard lock(mu_);
  latest_[model] = sample;
}

std::map<std::string, ResourceSample> ResourceBoard::snapshot() const {
  std::lock_guard lock(mu_);
  return latest_;
}

std::vector<MetricSample> metrics_snapshot(const Gateway& gateway, const ResourceBoard* resources) {
  std::vector<MetricSample> out;
  auto registry = gateway.registry();
  auto live = gateway.live_stats();
  std::map<std::string, ResourceSample> res;
  if (resources) res = resources->snapshot();

  for (const ModelSpec& m : registry->models()) {
    std::vector<std::pair<std::string, std::string>> labels = {
        {"model", m.name}, {"backend_kind", std::string(to_string(m.backend.kind))}};
    auto gauge = [&](const char* name, double value) {
      out.push_back({name, labels, value, MetricType::Gauge});
    };
    auto it = live.find(m.name);
    out.push_back({"edgellm_requests_total", labels,
                   it == live.end() ? 0.0 : static_cast<double>(it->second.requests_total), MetricType::Counter});
    if (it != live.end()) {
      if (it->second.prefill_tps) gauge("edgellm_prefill_tokens_per_second", *it->second.prefill_tps);
      if (it->second.decode_tps) gauge("edgellm_decode_tokens_per_second", *it->second.decode_tps);
    }
    if (auto r = res.find(m.name); r != res.end()) {
      gauge("edgellm_rss_bytes", static_cast<double>(r->second.rss_bytes));
      if (r->second.cpu_total_fraction) gauge("edgellm_cpu_total_fraction", *r->second.cpu_total_fraction);
      if (r->second.cpu_core_fraction) gauge("edgellm_cpu_core_fraction", *r->second.cpu_core_fraction);
    }
  }
  return out;
}

namespace {

json timing_json(const PhaseTiming& t) {
  return json{{"prompt_tokens", t.prompt_tokens},
              {"prefill_ms", t.prefill_ms},
              {"generated_tokens", t.generated_tokens},
              {"decode_ms", t.decode_ms},
              {"total_ms", t.total_ms}};
}

json completion_json(const CompletionResult& r) {
  json j = {{"model", r.model},
            {"text", r.text},
            {"finish_reason", to_string(r.finish_reason)},
            {"timing", timing_json(r.timing)},
            {"timing_source", r.timing_from_backend ? "backend" : "gateway"},
            {"created", r.created}};
  if (r.request_id) j["request_id"] = *r.request_id;
  if (r.error) j["error"] = *r.error;
  return j;
}

std::string error_body(const std::string& code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ModelNotFound: return 404;
    case ErrorCode::ContextOverflow: return 413;
    case ErrorCode::InvalidRequest: return 400;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ProtocolError: return 502;
    default: return 500;
  }
}

std::string sse_event(std::string_view event, const std::string& data) {
  std::string out = "event: ";
  out += event;
  out += "\ndata: ";
  out += data;
  out += "\n\n";
  return out;
}

}  // namespace

std::string completion_to_json(const CompletionResult& r) { return completion_json(r).dump(); }

std::string models_to_json(const std::vector<ModelDescriptor>& models) {
  json data = json::array();
  for (const ModelDescriptor& m : models) {
    data.push_back({{"name", m.name},
                    {"size_class", to_string(m.size_class)},
                    {"params_billions", m.params_billions},
                    {"quantization", m.quantization}});
  }
  return json{{"models", std::move(data)}}.dump();
}

ChatRequest parse_chat_request(std::string_view body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidRequest, "body must be a JSON object");
  ChatRequest req;
  if (!j.contains("model") || !j["model"].is_string()) throw Error(ErrorCode::InvalidRequest, "missing 'model'");
  req.model = j["model"].get<std::string>();
  if (!j.contains("messages") || !j["messages"].is_array()) {
    throw Error(ErrorCode::InvalidRequest, "missing 'messages' array");
  }
  for (const auto& m : j["messages"]) {
    if (!m.is_object() || !m.contains("role") || !m["role"].is_string() || !m.contains("text") ||
        !m["text"].is_string()) {
      throw Error(ErrorCode::InvalidRequest, "each message needs string 'role' and 'text'");
    }
    auto role = parse_role(m["role"].get<std::string>());
    if (!role) throw Error(ErrorCode::InvalidRequest, "unknown role '" + m["role"].get<std::string>() + "'");
    req.messages.push_back({*role, m["text"].get<std::string>()});
  }
  if (j.contains("max_new_tokens") && !j["max_new_tokens"].is_null()) {
    if (!j["max_new_tokens"].is_number_integer()) throw Error(ErrorCode::InvalidRequest, "max_new_tokens must be an integer");
    long long n = j["max_new_tokens"].get<long long>();
    if (n < 1 || n > 1'000'000) throw Error(ErrorCode::InvalidRequest, "max_new_tokens out of range");
    req.max_new_tokens = static_cast<int>(n);
  }
  if (j.contains("stream") && !j["stream"].is_null()) {
    if (!j["stream"].is_boolean()) throw Error(ErrorCode::InvalidRequest, "stream must be a boolean");
    req.stream = j["stream"].get<bool>();
  }
  if (j.contains("request_id") && j["request_id"].is_string()) req.request_id = j["request_id"].get<std::string>();
  validate(req);
  return req;
}

struct GatewayServer::Impl {
  Gateway& gateway;
  const ResourceBoard* resources;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  Impl(Gateway& g, const ResourceBoard* r) : gateway(g), resources(r) { routes(); }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });

    server.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(models_to_json(gateway.list_models()), "application/json");
    });

    server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      auto snapshot = metrics_snapshot(gateway, resources);
      res.set_content(render_prometheus(snapshot), "text/plain; version=0.0.4; charset=utf-8");
    });

    server.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) { chat(req, res); });
  }

  void chat(const httplib::Request& http_req, httplib::Response& res) {
    ChatRequest req;
    try {
      req = parse_chat_request(http_req.body);
      // Routing errors must surface as status codes before any stream opens.
      gateway.registry()->model(req.model);
    } catch (const Error& e) {
      res.status = status_for(e.code());
      res.set_content(error_body(std::string(to_string(e.code())), e.what()), "application/json");
      return;
    }

    if (!req.stream) {
      try {
        CompletionResult r = gateway.handle_chat(req);
        if (r.finish_reason == FinishReason::BackendError) res.status = 502;
        res.set_content(completion_to_json(r), "application/json");
      } catch (const Error& e) {
        res.status = status_for(e.code());
        res.set_content(error_body(std::string(to_string(e.code())), e.what()), "application/json");
      }
      return;
    }

    // Context overflow is detectable up front; check it before committing to 200.
    {
      auto reg = gateway.registry();
      const ModelSpec& spec = reg->model(req.model);
      auto prompt = build_prompt(req.messages, spec.chat_template);
      if (prompt.token_estimate > spec.max_context_tokens) {
        res.status = 413;
        res.set_content(error_body("ContextOverflow", "prompt exceeds max_context_tokens"), "application/json");
        return;
      }
    }

    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, req](size_t, httplib::DataSink& sink) {
          std::stop_source cancel;
          bool client_gone = false;
          auto write = [&](const std::string& chunk) {
            if (client_gone) return;
            if (!sink.write(chunk.data(), chunk.size())) {
              client_gone = true;
              cancel.request_stop();
            }
          };
          try {
            CompletionResult r = gateway.handle_chat(
                req,
                [&](const TokenEvent& ev) {
                  write(sse_event("token", json{{"index", ev.index}, {"text", ev.text}}.dump()));
                },
                cancel.get_token());
            write(sse_event("done", completion_to_json(r)));
          } catch (const Error& e) {
            write(sse_event("error", error_body(std::string(to_string(e.code())), e.what())));
          }
          sink.done();
          return true;
        });
  }
};

GatewayServer::GatewayServer(Gateway& gateway, const ResourceBoard* resources)
    : impl_(std::make_unique<Impl>(gateway, resources)) {}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound_port = -1;
  }
  if (bound_port < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound_port;
}

void GatewayServer::serve() {
  if (!impl_->bound) throw Error(ErrorCode::IoError, "serve() before bind()");
  impl_->server.listen_after_bind();
}

void GatewayServer::start() {
  if (!impl_->bound) throw Error(ErrorCode::IoError, "start() before bind()");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void GatewayServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace edgellm
