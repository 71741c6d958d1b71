#pragma once

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>
#include <vector>

#include "edgellm/registry.hpp"

namespace testsupport {

inline edgellm::ModelSpec sim_model(const std::string& name, double params_billions, double prefill_ms,
                                    double decode_ms, double jitter_ms = 0.0, std::uint64_t seed = 1) {
  edgellm::SimConfig sim;
  sim.prefill_ms_per_token = prefill_ms;
  sim.decode_ms_per_token = decode_ms;
  sim.jitter_sigma_ms = jitter_ms;
  sim.seed = seed;
  edgellm::ModelSpec m;
  m.name = name;
  m.params_billions = params_billions;
  m.size_class = edgellm::classify_size(params_billions);
  m.quantization = "Q4_K_M";
  m.backend.kind = edgellm::BackendKind::Simulated;
  m.backend.sim = sim;
  m.max_context_tokens = 1 << 20;
  return m;
}

inline std::shared_ptr<const edgellm::Registry> registry_of(std::vector<edgellm::ModelSpec> models) {
  return std::make_shared<const edgellm::Registry>(edgellm::Registry::from_models(std::move(models)));
}

// Two-pass population statistics in long double, kept deliberately naive so
// it shares nothing with the streaming implementation under test.
struct NaiveStats {
  std::size_t n = 0;
  long double mean = 0;
  long double stddev = 0;
  long double min = 0;
  long double max = 0;
};

inline NaiveStats naive_stats(const std::vector<double>& xs) {
  NaiveStats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  long double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<long double>(xs.size());
  long double sq = 0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<long double>(xs.size()));
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  return s;
}

inline bool close_rel(long double a, long double b, long double tol) {
  long double scale = std::max({std::fabs(a), std::fabs(b), static_cast<long double>(1e-300)});
  return std::fabs(a - b) <= tol * scale;
}

// Absolute floor for quantities whose true value is zero.
inline bool close_rel_or_abs(long double a, long double b, long double tol, long double abs_floor) {
  return std::fabs(a - b) <= abs_floor || close_rel(a, b, tol);
}

struct StubBehavior {
  std::vector<std::string> tokens = {"Hello", " there", ","};
  std::optional<nlohmann::json> timings = nlohmann::json{
      {"prompt_n", 12}, {"prompt_ms", 345.5}, {"predicted_n", 3}, {"predicted_ms", 61.25}};
  bool stream = true;
  bool stopped_limit = false;
  int completion_status = 200;
  bool garbage_chunk = false;
  bool logprobs_supported = true;
  // (text, logprob) pieces of the echoed prompt, in order
  std::vector<std::pair<std::string, double>> logprob_pieces;
  std::string model_id = "stub-model.gguf";
};

// Minimal stand-in for a llama.cpp server: streaming /completion with a
// trailing timings block, /health, /v1/models and /v1/completions.
struct StubLlama {
  using Behavior = StubBehavior;

  Behavior behavior;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  nlohmann::json last_completion_body;

  explicit StubLlama(Behavior b = {}) : behavior(std::move(b)) {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    server.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"object", "list"}, {"data", {{{"id", behavior.model_id}}}}}.dump(),
                      "application/json");
    });
    server.Post("/completion", [this](const httplib::Request& req, httplib::Response& res) {
      last_completion_body = nlohmann::json::parse(req.body);
      if (behavior.completion_status != 200) {
        res.status = behavior.completion_status;
        res.set_content("upstream trouble", "text/plain");
        return;
      }
      nlohmann::json final_chunk = {{"content", ""}, {"stop", true}, {"stopped_limit", behavior.stopped_limit}};
      if (behavior.timings) final_chunk["timings"] = *behavior.timings;
      if (!behavior.stream) {
        std::string all;
        for (const auto& t : behavior.tokens) all += t;
        final_chunk["content"] = all;
        res.set_content(final_chunk.dump(), "application/json");
        return;
      }
      std::string body;
      for (const auto& t : behavior.tokens) {
        body += "data: " + nlohmann::json{{"content", t}, {"stop", false}}.dump() + "\n\n";
      }
      if (behavior.garbage_chunk) body += "data: {not json\n\n";
      body += "data: " + final_chunk.dump() + "\n\n";
      res.set_content(body, "text/event-stream");
    });
    server.Post("/v1/completions", [this](const httplib::Request&, httplib::Response& res) {
      if (!behavior.logprobs_supported) {
        res.status = 404;
        return;
      }
      nlohmann::json lps = nlohmann::json::array();
      nlohmann::json offs = nlohmann::json::array();
      nlohmann::json toks = nlohmann::json::array();
      std::size_t off = 0;
      bool first = true;
      for (const auto& [text, lp] : behavior.logprob_pieces) {
        toks.push_back(text);
        offs.push_back(off);
        if (first) {
          lps.push_back(nullptr);
        } else {
          lps.push_back(lp);
        }
        first = false;
        off += text.size();
      }
      nlohmann::json choice = {{"text", ""},
                               {"logprobs", {{"tokens", toks}, {"token_logprobs", lps}, {"text_offset", offs}}}};
      res.set_content(nlohmann::json{{"choices", {choice}}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~StubLlama() {
    server.stop();
    if (thread.joinable()) thread.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

// A port that nothing listens on, found by binding and releasing.
// Port that was free a moment ago and has nothing listening on it.
inline int unused_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("edgellm-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
