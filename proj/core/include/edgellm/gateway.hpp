#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "edgellm/backends.hpp"
#include "edgellm/metrics.hpp"
#include "edgellm/registry.hpp"

namespace edgellm {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r) noexcept;
std::optional<Role> parse_role(std::string_view s) noexcept;

struct Message {
  Role role = Role::User;
  std::string text;

  bool operator==(const Message&) const = default;
};

/// Identifies a replayed request so the record sink can file it.
struct RunTag {
  std::string conversation_id;
  int turn_index = 1;
  int repetition = 1;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  int max_new_tokens = 500;
  bool stream = false;
  std::optional<std::string> request_id;
  std::optional<RunTag> tag;
};

struct TokenEvent {
  std::int64_t index = 0;
  std::string text;
  std::int64_t at_ns = 0;  // monotonic
};

struct CompletionResult {
  std::string text;
  PhaseTiming timing;
  FinishReason finish_reason = FinishReason::MaxTokens;
  std::string model;
  std::optional<std::string> request_id;
  std::string created;                // RFC 3339
  std::optional<std::string> error;   // set when finish_reason == BackendError
  bool timing_from_backend = false;
};

struct PromptBuild {
  std::string text;
  std::int64_t token_estimate = 0;
};

/// Renders a chat history. Generic writes "<role>: <text>\n" per message and
/// ends with "assistant:"; Passthrough joins the texts with single newlines.
PromptBuild build_prompt(const std::vector<Message>& history, ChatTemplate tmpl);

/// Backend timings win when present. Otherwise time-to-first-token stands in
/// for prefill and the remainder of the stream is decode. Throws ClockSkew
/// unless dispatch <= first <= last.
PhaseTiming derive_phase_timing(std::int64_t dispatch_ns, std::int64_t first_token_ns, std::int64_t last_token_ns,
                                const std::optional<BackendTimings>& backend_timings,
                                std::int64_t streamed_tokens, std::int64_t prompt_token_estimate);

/// Throws InvalidRequest when the request breaks its invariants.
void validate(const ChatRequest& req);

struct ModelDescriptor {
  std::string name;
  SizeClass size_class = SizeClass::Small;
  double params_billions = 0.0;
  std::string quantization;
};

class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void append(const RunRecord& record) = 0;
};

class MemoryRecordSink final : public RecordSink {
 public:
  void append(const RunRecord& record) override;
  std::vector<RunRecord> records() const;

 private:
  mutable std::mutex mu_;
  std::vector<RunRecord> records_;
};

/// Appends records.csv rows (header written when the file is new or empty).
class CsvRecordSink final : public RecordSink {
 public:
  explicit CsvRecordSink(std::string path);
  void append(const RunRecord& record) override;

 private:
  std::mutex mu_;
  std::string path_;
};

/// Live per-model counters behind the /metrics endpoint.
struct ModelLiveStats {
  std::int64_t requests_total = 0;
  std::optional<double> prefill_tps;
  std::optional<double> decode_tps;
};

using BackendFactory = std::function<std::unique_ptr<Backend>(const ModelSpec&)>;

/// Routes chat requests to the backend of the named model. The registry is
/// immutable; reload() swaps it as a whole.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<const Registry> registry, BackendFactory factory = {});

  void reload(std::shared_ptr<const Registry> registry);
  std::shared_ptr<const Registry> registry() const;

  std::vector<ModelDescriptor> list_models() const;

  /// Runs one completion. on_token sees every fragment in backend order.
  /// Throws ModelNotFound, InvalidRequest or ContextOverflow before any
  /// backend call; backend failures come back as finish_reason BackendError.
  CompletionResult handle_chat(const ChatRequest& req,
                               const std::function<void(const TokenEvent&)>& on_token = {},
                               std::stop_token stop = {});

  void attach_sink(std::shared_ptr<RecordSink> sink);

  std::map<std::string, ModelLiveStats> live_stats() const;

  /// Backend instance for a model (created on first use, kept until reload).
  std::shared_ptr<Backend> backend_for(const std::string& model);

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Registry> registry_;
  BackendFactory factory_;
  std::map<std::string, std::shared_ptr<Backend>> backends_;
  std::shared_ptr<RecordSink> sink_;
  std::map<std::string, ModelLiveStats> live_;
};

}  // namespace edgellm
