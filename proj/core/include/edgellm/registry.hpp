#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace edgellm {

enum class SizeClass { Large, Medium, Small };
enum class ChatTemplate { Generic, Passthrough };
enum class BackendKind { HttpCompletion, Simulated };
enum class SimClock { Wall, Injected };

std::string_view to_string(SizeClass c) noexcept;
std::string_view to_string(ChatTemplate t) noexcept;
std::string_view to_string(BackendKind k) noexcept;

/// Large above 6B parameters, Small below 3B, Medium on the closed interval
/// [3, 6]. Throws InvalidParamCount for non-positive or non-finite input.
SizeClass classify_size(double params_billions);

/// Key of an explicit log-likelihood entry: (fnv1a64(context), continuation).
using ScoreKey = std::pair<std::uint64_t, std::string>;

/// Per-token cost model of the in-process simulated backend.
struct SimConfig {
  double prefill_ms_per_token = 1.0;
  double decode_ms_per_token = 1.0;
  double jitter_sigma_ms = 0.0;
  SimClock clock = SimClock::Injected;
  std::uint64_t seed = 0;
  std::optional<int> stop_after_tokens;
  std::map<ScoreKey, double> score_table;

  bool operator==(const SimConfig&) const = default;
};

struct BackendEndpoint {
  BackendKind kind = BackendKind::Simulated;
  std::string url;                 // HttpCompletion only
  std::optional<SimConfig> sim;    // Simulated only
  std::optional<int> pid;          // backend process to sample, if known

  bool operator==(const BackendEndpoint&) const = default;
};

struct ModelSpec {
  std::string name;
  double params_billions = 0.0;
  SizeClass size_class = SizeClass::Small;
  std::string quantization;
  BackendEndpoint backend;
  ChatTemplate chat_template = ChatTemplate::Generic;
  int max_context_tokens = 0;

  bool operator==(const ModelSpec&) const = default;
};

/// Immutable, validated pool of models. Share it as shared_ptr<const Registry>.
class Registry {
 public:
  /// Parses and validates the JSON registry document.
  static Registry load(std::string_view json_document);
  static Registry load_file(const std::string& path);

  /// Validates an already-built model list (same rules as load).
  static Registry from_models(std::vector<ModelSpec> models);

  const std::vector<ModelSpec>& models() const noexcept { return models_; }
  const ModelSpec* find(std::string_view name) const noexcept;

  /// Case-sensitive exact lookup; throws ModelNotFound.
  const ModelSpec& model(std::string_view name) const;
  const BackendEndpoint& resolve_backend(std::string_view name) const;

  /// Serializes back to the configuration schema (pretty-printed JSON).
  std::string to_json() const;

  bool operator==(const Registry&) const = default;

 private:
  explicit Registry(std::vector<ModelSpec> models) : models_(std::move(models)) {}
  std::vector<ModelSpec> models_;
};

}  // namespace edgellm
