#include "edgellm/backends.hpp"

#include <algorithm>
#include <cmath>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <random>
#include <thread>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Simulated backend

SimulatedBackend::SimulatedBackend(SimConfig config) : config_(std::move(config)) {}

namespace {

std::mt19937_64 request_rng(std::uint64_t seed, std::uint64_t ordinal) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(ordinal), static_cast<std::uint32_t>(ordinal >> 32)};
  return std::mt19937_64(seq);
}

// Sleeps in short slices so a stop request is noticed promptly.
void paced_sleep(double ms, const std::stop_token& stop) {
  using namespace std::chrono;
  auto deadline = steady_clock::now() + duration_cast<steady_clock::duration>(duration<double, std::milli>(ms));
  while (true) {
    if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "simulated completion cancelled");
    auto now = steady_clock::now();
    if (now >= deadline) return;
    std::this_thread::sleep_for(std::min<steady_clock::duration>(deadline - now, milliseconds(20)));
  }
}

}  // namespace

BackendCompletion SimulatedBackend::complete(std::string_view prompt, int max_new_tokens,
                                             const TokenCallback& on_token, std::stop_token stop) {
  if (max_new_tokens < 1) throw Error(ErrorCode::InvalidRequest, "max_new_tokens must be >= 1");
  const std::uint64_t ordinal = ordinal_.fetch_add(1, std::memory_order_relaxed);
  std::mt19937_64 rng = request_rng(config_.seed, ordinal);
  std::normal_distribution<double> noise(0.0, config_.jitter_sigma_ms > 0.0 ? config_.jitter_sigma_ms : 1.0);
  const bool jitter = config_.jitter_sigma_ms > 0.0;
  auto token_cost = [&](double base) { return jitter ? std::max(0.0, base + noise(rng)) : base; };

  const auto prompt_tokens = static_cast<std::int64_t>(count_words(prompt));
  const bool stops_early = config_.stop_after_tokens && *config_.stop_after_tokens < max_new_tokens;
  const int budget = stops_early ? *config_.stop_after_tokens : max_new_tokens;

  BackendCompletion out;
  out.finish_reason = stops_early ? FinishReason::Stop : FinishReason::MaxTokens;

  double prompt_ms = 0.0;
  if (jitter) {
    for (std::int64_t i = 0; i < prompt_tokens; ++i) prompt_ms += token_cost(config_.prefill_ms_per_token);
  } else {
    prompt_ms = static_cast<double>(prompt_tokens) * config_.prefill_ms_per_token;
  }
  const bool wall = config_.clock == SimClock::Wall;
  if (wall) paced_sleep(prompt_ms, stop);

  double generation_ms = 0.0;
  out.tokens.reserve(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) {
    double cost = token_cost(config_.decode_ms_per_token);
    if (jitter) generation_ms += cost;
    if (wall) {
      paced_sleep(cost, stop);
    } else if (stop.stop_requested()) {
      throw Error(ErrorCode::Cancelled, "simulated completion cancelled");
    }
    std::string fragment = (i == 0 ? "tok" : " tok") + std::to_string(i);
    if (on_token) on_token(fragment);
    out.tokens.push_back(std::move(fragment));
  }
  if (!jitter) generation_ms = static_cast<double>(budget) * config_.decode_ms_per_token;

  // Wall mode reports the nominal paced schedule, the simulator's equivalent
  // of engine-side instrumentation.
  out.timings = BackendTimings{prompt_tokens, prompt_ms, budget, generation_ms};
  return out;
}

double SimulatedBackend::score(const ScoreRequest& req) {
  if (req.continuation.empty()) throw Error(ErrorCode::InvalidRequest, "empty continuation");
  auto it = config_.score_table.find({fnv1a64(req.context), req.continuation});
  if (it != config_.score_table.end()) return it->second;
  return -1.0 * static_cast<double>(count_words(req.continuation));
}

// ---------------------------------------------------------------------------
// llama.cpp-server style HTTP backend

std::optional<BackendTimings> parse_timings_block(std::string_view json_object) {
  json j = json::parse(json_object, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto num = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number()) return std::nullopt;
    double v = it->get<double>();
    if (!std::isfinite(v) || v < 0.0) return std::nullopt;
    return v;
  };
  auto prompt_n = num("prompt_n");
  auto prompt_ms = num("prompt_ms");
  auto predicted_n = num("predicted_n");
  auto predicted_ms = num("predicted_ms");
  if (!prompt_n || !prompt_ms || !predicted_n || !predicted_ms) return std::nullopt;
  if (*prompt_n != std::floor(*prompt_n) || *predicted_n != std::floor(*predicted_n)) return std::nullopt;
  return BackendTimings{static_cast<std::int64_t>(*prompt_n), *prompt_ms,
                        static_cast<std::int64_t>(*predicted_n), *predicted_ms};
}

namespace {

struct SplitUrl {
  std::string origin;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  if (scheme_end == std::string::npos) out.origin = "http://" + out.origin;
  return out;
}

void configure(httplib::Client& cli, std::chrono::milliseconds timeout) {
  auto secs = static_cast<time_t>(timeout.count() / 1000);
  auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
}

bool is_2xx(int status) { return status >= 200 && status < 300; }

// Accumulates SSE bytes and hands back complete "data:" payloads.
class SseParser {
 public:
  template <typename F>
  void feed(std::string_view bytes, F&& on_data) {
    buffer_.append(bytes);
    std::size_t pos;
    while ((pos = buffer_.find('\n')) != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind("data:", 0) == 0) {
        std::string_view payload(line);
        payload.remove_prefix(5);
        if (!payload.empty() && payload.front() == ' ') payload.remove_prefix(1);
        on_data(payload);
      }
    }
  }
  std::string_view rest() const { return buffer_; }

 private:
  std::string buffer_;
};

}  // namespace

HttpCompletionBackend::HttpCompletionBackend(std::string base_url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  SplitUrl parts = split_url(base_url);
  origin_ = std::move(parts.origin);
  path_prefix_ = std::move(parts.prefix);
}

BackendCompletion HttpCompletionBackend::complete(std::string_view prompt, int max_new_tokens,
                                                  const TokenCallback& on_token, std::stop_token stop) {
  if (max_new_tokens < 1) throw Error(ErrorCode::InvalidRequest, "max_new_tokens must be >= 1");
  httplib::Client cli(origin_);
  configure(cli, timeout_);

  json body = {{"prompt", prompt}, {"n_predict", max_new_tokens}, {"stream", true}, {"cache_prompt", false}};

  BackendCompletion out;
  bool limit_hit = false;
  bool saw_stop = false;
  std::optional<std::string> protocol_failure;
  std::string error_body;
  std::string plain_body;
  int status = 0;
  bool event_stream = false;
  SseParser sse;

  auto handle_chunk = [&](const json& chunk) {
    if (auto c = chunk.find("content"); c != chunk.end() && c->is_string()) {
      std::string fragment = c->get<std::string>();
      if (!fragment.empty()) {
        if (on_token) on_token(fragment);
        out.tokens.push_back(std::move(fragment));
      }
    }
    if (chunk.value("stop", false)) {
      saw_stop = true;
      limit_hit = chunk.value("stopped_limit", false);
      if (auto t = chunk.find("timings"); t != chunk.end()) {
        out.timings = parse_timings_block(t->dump());
        if (!out.timings) out.protocol_error = "malformed timings block: " + t->dump();
      } else {
        out.protocol_error = "no timings block in final chunk";
      }
    }
  };

  httplib::Request req;
  req.method = "POST";
  req.path = path_prefix_ + "/completion";
  req.body = body.dump();
  req.set_header("Content-Type", "application/json");
  req.set_header("Accept", "text/event-stream");
  req.response_handler = [&](const httplib::Response& res) {
    status = res.status;
    event_stream = res.get_header_value("Content-Type").find("text/event-stream") != std::string::npos;
    return true;
  };
  req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
    if (stop.stop_requested()) return false;
    std::string_view bytes(data, len);
    if (!is_2xx(status)) {
      error_body.append(bytes);
      return true;
    }
    if (!event_stream) {
      plain_body.append(bytes);
      return true;
    }
    sse.feed(bytes, [&](std::string_view payload) {
      if (payload == "[DONE]" || protocol_failure) return;
      json chunk = json::parse(payload, nullptr, false);
      if (chunk.is_discarded() || !chunk.is_object()) {
        protocol_failure = "unparseable stream chunk: " + std::string(payload);
        return;
      }
      handle_chunk(chunk);
    });
    return !protocol_failure;
  };

  httplib::Response res;
  httplib::Error err = httplib::Error::Success;
  bool sent = cli.send(req, res, err);
  if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "completion cancelled");
  if (protocol_failure) throw Error(ErrorCode::ProtocolError, *protocol_failure);
  if (!sent) {
    throw Error(ErrorCode::BackendUnavailable, origin_ + ": " + httplib::to_string(err));
  }
  if (!is_2xx(status)) {
    throw Error(ErrorCode::BackendUnavailable,
                origin_ + " returned HTTP " + std::to_string(status) + ": " + error_body.substr(0, 200));
  }
  if (!event_stream) {
    json chunk = json::parse(plain_body, nullptr, false);
    if (chunk.is_discarded() || !chunk.is_object()) {
      throw Error(ErrorCode::ProtocolError, "unparseable completion body");
    }
    chunk["stop"] = true;
    handle_chunk(chunk);
  } else if (!saw_stop) {
    // Tolerate a final event without a trailing newline.
    sse.feed("\n", [&](std::string_view payload) {
      json chunk = json::parse(payload, nullptr, false);
      if (chunk.is_object()) handle_chunk(chunk);
    });
    if (!saw_stop) out.protocol_error = "stream ended without a final chunk";
  }

  if (limit_hit || static_cast<int>(out.tokens.size()) >= max_new_tokens) {
    out.finish_reason = FinishReason::MaxTokens;
  } else if (out.timings && out.timings->generated_tokens >= max_new_tokens) {
    out.finish_reason = FinishReason::MaxTokens;
  } else {
    out.finish_reason = FinishReason::Stop;
  }
  return out;
}

double HttpCompletionBackend::score(const ScoreRequest& req) {
  if (req.continuation.empty()) throw Error(ErrorCode::InvalidRequest, "empty continuation");
  httplib::Client cli(origin_);
  configure(cli, timeout_);
  json body = {{"prompt", req.context + req.continuation},
               {"max_tokens", 0},
               {"echo", true},
               {"logprobs", 1},
               {"temperature", 0}};
  auto res = cli.Post(path_prefix_ + "/v1/completions", body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::BackendUnavailable, origin_ + ": " + httplib::to_string(res.error()));
  if (res->status == 404 || res->status == 405 || res->status == 501) {
    throw Error(ErrorCode::CapabilityMissing, origin_ + " does not offer echo log-probabilities");
  }
  if (!is_2xx(res->status)) {
    throw Error(ErrorCode::BackendUnavailable, origin_ + " returned HTTP " + std::to_string(res->status));
  }
  json j = json::parse(res->body, nullptr, false);
  const json* lp = nullptr;
  if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const json& choice = j["choices"][0];
    if (choice.contains("logprobs") && choice["logprobs"].is_object()) lp = &choice["logprobs"];
  }
  if (!lp || !lp->contains("token_logprobs") || !lp->contains("text_offset")) {
    throw Error(ErrorCode::CapabilityMissing, "response carries no token log-probabilities");
  }
  const json& logprobs = (*lp)["token_logprobs"];
  const json& offsets = (*lp)["text_offset"];
  if (!logprobs.is_array() || !offsets.is_array() || logprobs.size() != offsets.size()) {
    throw Error(ErrorCode::ProtocolError, "mismatched logprob arrays");
  }
  double total = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    if (!offsets[i].is_number() || offsets[i].get<std::size_t>() < req.context.size()) continue;
    if (!logprobs[i].is_number()) continue;  // first token of a prompt has no logprob
    total += logprobs[i].get<double>();
    ++scored;
  }
  if (scored == 0) throw Error(ErrorCode::ProtocolError, "no continuation tokens were scored");
  return total;
}

ProbeResult HttpCompletionBackend::probe() {
  httplib::Client cli(origin_);
  configure(cli, std::chrono::seconds(2));
  ProbeResult out;
  auto health = cli.Get(path_prefix_ + "/health");
  if (!health || !is_2xx(health->status)) return out;
  out.alive = true;
  auto models = cli.Get(path_prefix_ + "/v1/models");
  if (models && is_2xx(models->status)) {
    json j = json::parse(models->body, nullptr, false);
    if (j.is_object() && j.contains("data") && j["data"].is_array() && !j["data"].empty() &&
        j["data"][0].contains("id") && j["data"][0]["id"].is_string()) {
      out.reported_model = j["data"][0]["id"].get<std::string>();
    }
  }
  return out;
}

std::unique_ptr<Backend> make_backend(const BackendEndpoint& endpoint) {
  if (endpoint.kind == BackendKind::Simulated) {
    if (!endpoint.sim) throw Error(ErrorCode::IncompleteEndpoint, "simulated backend without sim config");
    return std::make_unique<SimulatedBackend>(*endpoint.sim);
  }
  if (endpoint.url.empty()) throw Error(ErrorCode::IncompleteEndpoint, "http backend without url");
  return std::make_unique<HttpCompletionBackend>(endpoint.url);
}

}  // namespace edgellm
