#include "edgellm/gateway.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <spdlog/spdlog.h>

#include "edgellm/error.hpp"
#include "edgellm/record_io.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) noexcept {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  return std::nullopt;
}

PromptBuild build_prompt(const std::vector<Message>& history, ChatTemplate tmpl) {
  PromptBuild out;
  if (tmpl == ChatTemplate::Generic) {
    for (const Message& m : history) {
      out.text += to_string(m.role);
      out.text += ": ";
      out.text += m.text;
      out.text += '\n';
    }
    out.text += "assistant:";
  } else {
    for (std::size_t i = 0; i < history.size(); ++i) {
      if (i > 0) out.text += '\n';
      out.text += history[i].text;
    }
  }
  out.token_estimate = static_cast<std::int64_t>(count_words(out.text));
  return out;
}

PhaseTiming derive_phase_timing(std::int64_t dispatch_ns, std::int64_t first_token_ns, std::int64_t last_token_ns,
                                const std::optional<BackendTimings>& backend_timings,
                                std::int64_t streamed_tokens, std::int64_t prompt_token_estimate) {
  if (!(dispatch_ns <= first_token_ns && first_token_ns <= last_token_ns)) {
    throw Error(ErrorCode::ClockSkew, "timestamps out of order: dispatch " + std::to_string(dispatch_ns) +
                                          ", first " + std::to_string(first_token_ns) + ", last " +
                                          std::to_string(last_token_ns));
  }
  if (backend_timings) {
    return make_phase_timing(backend_timings->prompt_tokens, backend_timings->prompt_ms,
                             backend_timings->generated_tokens, backend_timings->generation_ms);
  }
  double prefill_ms = static_cast<double>(first_token_ns - dispatch_ns) / 1e6;
  double decode_ms = static_cast<double>(last_token_ns - first_token_ns) / 1e6;
  return make_phase_timing(prompt_token_estimate, prefill_ms, streamed_tokens, decode_ms);
}

void validate(const ChatRequest& req) {
  if (req.model.empty()) throw Error(ErrorCode::InvalidRequest, "missing model");
  if (req.messages.empty()) throw Error(ErrorCode::InvalidRequest, "messages must not be empty");
  if (req.messages.back().role != Role::User) {
    throw Error(ErrorCode::InvalidRequest, "last message must have role user");
  }
  if (req.max_new_tokens < 1) throw Error(ErrorCode::InvalidRequest, "max_new_tokens must be >= 1");
}

void MemoryRecordSink::append(const RunRecord& record) {
  std::lock_guard lock(mu_);
  records_.push_back(record);
}

std::vector<RunRecord> MemoryRecordSink::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

CsvRecordSink::CsvRecordSink(std::string path) : path_(std::move(path)) {
  std::error_code ec;
  bool fresh = !std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open records file '" + path_ + "'");
  if (fresh) out << kRecordsCsvHeader << '\n';
}

void CsvRecordSink::append(const RunRecord& record) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to '" + path_ + "'");
  out << record_to_csv_row(record) << '\n';
}

Gateway::Gateway(std::shared_ptr<const Registry> registry, BackendFactory factory)
    : registry_(std::move(registry)), factory_(std::move(factory)) {
  if (!registry_) throw Error(ErrorCode::ConfigSyntax, "gateway requires a registry");
  if (!factory_) factory_ = [](const ModelSpec& m) { return make_backend(m.backend); };
}

void Gateway::reload(std::shared_ptr<const Registry> registry) {
  if (!registry) throw Error(ErrorCode::ConfigSyntax, "gateway requires a registry");
  std::lock_guard lock(mu_);
  registry_ = std::move(registry);
  backends_.clear();
}

std::shared_ptr<const Registry> Gateway::registry() const {
  std::lock_guard lock(mu_);
  return registry_;
}

std::vector<ModelDescriptor> Gateway::list_models() const {
  auto reg = registry();
  std::vector<ModelDescriptor> out;
  out.reserve(reg->models().size());
  for (const ModelSpec& m : reg->models()) {
    out.push_back({m.name, m.size_class, m.params_billions, m.quantization});
  }
  return out;
}

void Gateway::attach_sink(std::shared_ptr<RecordSink> sink) {
  std::lock_guard lock(mu_);
  sink_ = std::move(sink);
}

std::map<std::string, ModelLiveStats> Gateway::live_stats() const {
  std::lock_guard lock(mu_);
  return live_;
}

std::shared_ptr<Backend> Gateway::backend_for(const std::string& model) {
  std::lock_guard lock(mu_);
  const ModelSpec& spec = registry_->model(model);
  auto it = backends_.find(model);
  if (it != backends_.end()) return it->second;
  std::shared_ptr<Backend> backend = factory_(spec);
  backends_.emplace(model, backend);
  return backend;
}

CompletionResult Gateway::handle_chat(const ChatRequest& req,
                                      const std::function<void(const TokenEvent&)>& on_token,
                                      std::stop_token stop) {
  validate(req);
  auto reg = registry();
  const ModelSpec& spec = reg->model(req.model);
  PromptBuild prompt = build_prompt(req.messages, spec.chat_template);
  if (prompt.token_estimate > spec.max_context_tokens) {
    throw Error(ErrorCode::ContextOverflow, "prompt of " + std::to_string(prompt.token_estimate) +
                                                " tokens exceeds " + spec.name + "'s context of " +
                                                std::to_string(spec.max_context_tokens));
  }
  std::shared_ptr<Backend> backend = backend_for(req.model);

  CompletionResult result;
  result.model = spec.name;
  result.request_id = req.request_id;
  auto started = std::chrono::system_clock::now();
  result.created = rfc3339(started);

  std::int64_t index = 0;
  std::int64_t first_ns = -1;
  std::int64_t last_ns = -1;
  const std::int64_t dispatch_ns = monotonic_ns();
  auto relay = [&](std::string_view fragment) {
    std::int64_t now = monotonic_ns();
    if (first_ns < 0) first_ns = now;
    last_ns = now;
    result.text += fragment;
    if (on_token) on_token(TokenEvent{index, std::string(fragment), now});
    ++index;
  };

  try {
    BackendCompletion completion = backend->complete(prompt.text, req.max_new_tokens, relay, stop);
    std::int64_t end_ns = monotonic_ns();
    if (first_ns < 0) first_ns = last_ns = end_ns;
    if (completion.protocol_error) {
      spdlog::warn("{}: {}; falling back to wall-clock phase timing", spec.name, *completion.protocol_error);
    }
    result.timing = derive_phase_timing(dispatch_ns, first_ns, last_ns, completion.timings, index,
                                        prompt.token_estimate);
    result.timing_from_backend = completion.timings.has_value();
    result.finish_reason = completion.finish_reason;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidRequest) throw;
    spdlog::warn("{}: backend failure: {}", spec.name, e.what());
    result.finish_reason = FinishReason::BackendError;
    result.error = e.what();
    result.timing = make_phase_timing(prompt.token_estimate, 0.0, 0, 0.0);
  }

  RunRecord record;
  record.model = spec.name;
  if (req.tag) {
    record.conversation_id = req.tag->conversation_id;
    record.turn_index = req.tag->turn_index;
    record.repetition = req.tag->repetition;
  } else {
    record.conversation_id = req.request_id.value_or("");
  }
  record.timing = result.timing;
  record.throughput = throughput_of(result.timing);
  record.started_at = result.created;
  record.finish_reason = result.finish_reason;

  std::shared_ptr<RecordSink> sink;
  {
    std::lock_guard lock(mu_);
    ModelLiveStats& live = live_[spec.name];
    ++live.requests_total;
    if (record.throughput.prefill_tps) live.prefill_tps = record.throughput.prefill_tps;
    if (record.throughput.decode_tps) live.decode_tps = record.throughput.decode_tps;
    sink = sink_;
  }
  if (sink) sink->append(record);
  return result;
}

}  // namespace edgellm
