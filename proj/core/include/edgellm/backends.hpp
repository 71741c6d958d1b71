#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "edgellm/metrics.hpp"
#include "edgellm/registry.hpp"

namespace edgellm {

/// Phase timings as reported by the inference engine itself.
struct BackendTimings {
  std::int64_t prompt_tokens = 0;
  double prompt_ms = 0.0;
  std::int64_t generated_tokens = 0;
  double generation_ms = 0.0;

  bool operator==(const BackendTimings&) const = default;
};

struct ScoreRequest {
  std::string context;
  std::string continuation;
};

struct ProbeResult {
  bool alive = false;
  std::optional<std::string> reported_model;
};

struct BackendCompletion {
  std::vector<std::string> tokens;
  std::optional<BackendTimings> timings;
  FinishReason finish_reason = FinishReason::MaxTokens;
  /// Set when the backend answered but its timing block was unusable.
  std::optional<std::string> protocol_error;
};

/// Receives each generated text fragment as soon as the backend emits it.
using TokenCallback = std::function<void(std::string_view fragment)>;

/// Adapter contract shared by every backend kind. Implementations are safe
/// for concurrent use; each call owns its own connection or RNG stream.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendKind kind() const noexcept = 0;

  /// Throws BackendUnavailable, ProtocolError or Cancelled.
  virtual BackendCompletion complete(std::string_view prompt, int max_new_tokens,
                                     const TokenCallback& on_token = {},
                                     std::stop_token stop = {}) = 0;

  /// Cumulative natural-log likelihood of continuation given context.
  virtual double score(const ScoreRequest& req) = 0;

  virtual ProbeResult probe() = 0;
};

/// Deterministic in-process backend. Emits "tok0", " tok1", ... and reports
/// timings from its per-token cost model. Each call draws jitter from its own
/// generator seeded by (seed, call ordinal).
class SimulatedBackend final : public Backend {
 public:
  explicit SimulatedBackend(SimConfig config);

  BackendKind kind() const noexcept override { return BackendKind::Simulated; }
  BackendCompletion complete(std::string_view prompt, int max_new_tokens,
                             const TokenCallback& on_token = {},
                             std::stop_token stop = {}) override;
  double score(const ScoreRequest& req) override;
  ProbeResult probe() override { return {true, std::nullopt}; }

  const SimConfig& config() const noexcept { return config_; }

 private:
  SimConfig config_;
  std::atomic<std::uint64_t> ordinal_{0};
};

/// Client for llama.cpp-server style endpoints: streaming POST /completion
/// with a trailing timings block, GET /health, and OpenAI-style
/// /v1/completions echo+logprobs for scoring.
class HttpCompletionBackend final : public Backend {
 public:
  explicit HttpCompletionBackend(std::string base_url,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(600));

  BackendKind kind() const noexcept override { return BackendKind::HttpCompletion; }
  BackendCompletion complete(std::string_view prompt, int max_new_tokens,
                             const TokenCallback& on_token = {},
                             std::stop_token stop = {}) override;
  double score(const ScoreRequest& req) override;
  ProbeResult probe() override;

 private:
  std::string origin_;       // scheme://host:port
  std::string path_prefix_;  // optional mount prefix without trailing slash
  std::chrono::milliseconds timeout_;
};

std::unique_ptr<Backend> make_backend(const BackendEndpoint& endpoint);

/// Parses a llama.cpp "timings" object. Returns nullopt when fields are
/// missing, negative or non-numeric.
std::optional<BackendTimings> parse_timings_block(std::string_view json_object);

}  // namespace edgellm
