#include "edgellm/bench.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

std::vector<Conversation> parse_dataset(std::istream& in) {
  std::vector<Conversation> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::DatasetSyntax, where + ": not a JSON object");
    if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer())) {
      throw Error(ErrorCode::DatasetSyntax, where + ": missing 'id'");
    }
    Conversation c;
    c.id = j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(j["id"].get<long long>());
    if (!j.contains("turns") || !j["turns"].is_array()) {
      throw Error(ErrorCode::DatasetSyntax, where + ": missing 'turns' array");
    }
    if (j["turns"].empty()) throw Error(ErrorCode::EmptyPrompt, where + ": conversation '" + c.id + "' has no turns");
    for (const auto& t : j["turns"]) {
      if (!t.is_string()) throw Error(ErrorCode::DatasetSyntax, where + ": turns must be strings");
      std::string text = t.get<std::string>();
      if (trim(text).empty()) {
        throw Error(ErrorCode::EmptyPrompt, where + ": conversation '" + c.id + "' has an empty turn");
      }
      c.turns.push_back(std::move(text));
    }
    if (!ids.insert(c.id).second) {
      throw Error(ErrorCode::DuplicateConversation, where + ": duplicate conversation id '" + c.id + "'");
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Conversation> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

DatasetStats dataset_stats(std::span<const Conversation> convs) {
  if (convs.empty()) throw Error(ErrorCode::EmptySample, "empty dataset");
  Accumulator words;
  DatasetStats s;
  s.conversation_count = static_cast<std::int64_t>(convs.size());
  for (const Conversation& c : convs) {
    for (const std::string& t : c.turns) {
      words.add(static_cast<double>(count_words(t)));
      ++s.turn_count;
    }
  }
  AggregateStats a = words.stats();
  s.prompt_word_mean = a.mean;
  s.prompt_word_std = a.stddev;
  s.prompt_word_min = static_cast<std::int64_t>(a.min);
  s.prompt_word_max = static_cast<std::int64_t>(a.max);
  return s;
}

ReplayResult replay(const RunConfig& config, Gateway& gateway, std::span<const Conversation> conversations,
                    const ReplayHooks& hooks) {
  if (config.repetitions < 1) throw Error(ErrorCode::InvalidRequest, "repetitions must be >= 1");
  if (config.max_new_tokens < 1) throw Error(ErrorCode::InvalidRequest, "max_new_tokens must be >= 1");
  if (conversations.empty()) throw Error(ErrorCode::EmptySample, "no conversations to replay");
  auto registry = gateway.registry();
  for (const std::string& m : config.models) registry->model(m);

  ReplayResult result;
  for (const std::string& model : config.models) {
    const ModelSpec& spec = registry->model(model);

    for (int w = 0; w < config.warmup_requests; ++w) {
      ChatRequest warm;
      warm.model = model;
      warm.max_new_tokens = config.max_new_tokens;
      warm.messages = {{Role::User, conversations.front().turns.front()}};
      gateway.handle_chat(warm);
    }

    std::optional<SampleRecorder> recorder;
    std::optional<Sampler> sampler;
    if (config.monitor_resources) {
      int pid = spec.backend.pid.value_or(static_cast<int>(getpid()));
      recorder.emplace();
      SampleSink sink = recorder->sink();
      if (hooks.on_resource) {
        sink.on_sample = [inner = sink.on_sample, &hooks, model](const ResourceSample& s) {
          inner(s);
          hooks.on_resource(model, s);
        };
      }
      try {
        sampler.emplace(pid, std::chrono::milliseconds(config.resource_interval_ms), std::move(sink));
      } catch (const Error& e) {
        spdlog::warn("{}: resource sampling disabled: {}", model, e.what());
        recorder.reset();
      }
    }

    std::int64_t issued = 0;
    std::int64_t failed = 0;
    for (int rep = 1; rep <= config.repetitions; ++rep) {
      for (const Conversation& conv : conversations) {
        std::vector<Message> history;
        for (std::size_t t = 0; t < conv.turns.size(); ++t) {
          history.push_back({Role::User, conv.turns[t]});
          ChatRequest req;
          req.model = model;
          req.messages = history;
          req.max_new_tokens = config.max_new_tokens;
          req.tag = RunTag{conv.id, static_cast<int>(t) + 1, rep};

          RunRecord record;
          record.model = model;
          record.conversation_id = conv.id;
          record.turn_index = static_cast<int>(t) + 1;
          record.repetition = rep;
          try {
            CompletionResult r = gateway.handle_chat(req);
            record.timing = r.timing;
            record.throughput = throughput_of(r.timing);
            record.started_at = r.created;
            record.finish_reason = r.finish_reason;
            history.push_back({Role::Assistant, r.text});
          } catch (const Error& e) {
            spdlog::warn("{} {} turn {}: {}", model, conv.id, t + 1, e.what());
            record.finish_reason = FinishReason::BackendError;
            record.started_at = rfc3339(std::chrono::system_clock::now());
            history.push_back({Role::Assistant, ""});
          }
          ++issued;
          if (!record.ok()) ++failed;
          if (hooks.on_record) hooks.on_record(record);
          result.records.push_back(std::move(record));
        }
      }
    }

    if (sampler) {
      sampler->stop();
      auto samples = recorder->samples();
      try {
        result.resources[model] = summarize(samples);
      } catch (const Error&) {
        spdlog::warn("{}: run too short for a resource summary", model);
      }
    }
    if (failed * 2 > issued) {
      spdlog::error("{}: {} of {} requests failed", model, failed, issued);
      result.failed_models.push_back(model);
    }
  }
  return result;
}

std::string tool_version() {
#ifdef EDGELLM_VERSION
  return std::string("edgellm ") + EDGELLM_VERSION;
#else
  return "edgellm";
#endif
}

Report build_report(const ReportInputs& in) {
  if (in.records.empty()) throw Error(ErrorCode::EmptySample, "no records to report on");
  std::vector<std::string> order = in.models;
  if (order.empty()) {
    std::set<std::string> seen;
    for (const RunRecord& r : in.records) {
      if (seen.insert(r.model).second) order.push_back(r.model);
    }
  }

  Report report;
  report.dataset = in.dataset;
  report.config = in.config;
  report.tool_version = tool_version();

  for (const std::string& model : order) {
    ModelReport mr;
    mr.model = model;
    Accumulator prefill_tps, decode_tps, prefill_ppt, decode_ppt, total_s;
    std::vector<RunRecord> ok;
    for (const RunRecord& r : in.records) {
      if (r.model != model) continue;
      if (!r.ok()) {
        ++mr.failed_count;
        continue;
      }
      ok.push_back(r);
      ThroughputSample tps = throughput_of(r.timing);
      if (tps.prefill_tps) prefill_tps.add(*tps.prefill_tps);
      if (tps.decode_tps) decode_tps.add(*tps.decode_tps);
      if (r.timing.prompt_tokens > 0) prefill_ppt.add(per_token_time(r.timing.prefill_ms, r.timing.prompt_tokens));
      if (r.timing.generated_tokens > 0) {
        decode_ppt.add(per_token_time(r.timing.decode_ms, r.timing.generated_tokens));
      }
      total_s.add(r.timing.total_ms / 1000.0);
    }
    report.failed_records += mr.failed_count;
    mr.record_count = static_cast<std::int64_t>(ok.size());
    if (ok.empty()) {
      mr.absent_reason = mr.failed_count > 0 ? "all " + std::to_string(mr.failed_count) + " requests failed"
                                             : std::string("no records for this model");
    } else {
      auto stats_or_none = [](const Accumulator& a) -> std::optional<AggregateStats> {
        if (a.count() == 0) return std::nullopt;
        return a.stats();
      };
      mr.prefill_tps = stats_or_none(prefill_tps);
      mr.decode_tps = stats_or_none(decode_tps);
      mr.prefill_ms_per_token = stats_or_none(prefill_ppt);
      mr.decode_ms_per_token = stats_or_none(decode_ppt);
      mr.total_time_s = stats_or_none(total_s);
      double p = mr.prefill_ms_per_token ? mr.prefill_ms_per_token->mean : 0.0;
      double d = mr.decode_ms_per_token ? mr.decode_ms_per_token->mean : 0.0;
      PhaseTiming equalized = make_phase_timing(1, p, 1, d);
      mr.total_ms_per_token = equalized.total_ms;
      if (equalized.total_ms > 0.0) mr.phase_shares = phase_share(equalized);
      mr.cv = cv_by_turn(ok);
      mr.cv_by_prompt_quartile = cv_by_prompt_quartile(ok);
    }
    if (auto it = in.resources.find(model); it != in.resources.end()) mr.resources = it->second;
    if (auto it = in.accuracy.find(model); it != in.accuracy.end()) mr.accuracy = it->second;
    report.models.push_back(std::move(mr));
  }
  return report;
}

}  // namespace edgellm
