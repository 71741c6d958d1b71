#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgellm/gateway.hpp"
#include "edgellm/metrics.hpp"
#include "edgellm/monitor.hpp"

namespace edgellm {

struct Conversation {
  std::string id;
  std::vector<std::string> turns;  // user prompts in order

  bool operator==(const Conversation&) const = default;
};

/// JSON-Lines, one {"id": ..., "turns": [...]} per line; blank lines are
/// ignored. Errors carry the 1-based line number.
std::vector<Conversation> parse_dataset(std::istream& in);
std::vector<Conversation> load_dataset(const std::string& path);

struct DatasetStats {
  std::int64_t conversation_count = 0;
  std::int64_t turn_count = 0;
  double prompt_word_mean = 0.0;
  double prompt_word_std = 0.0;  // population
  std::int64_t prompt_word_min = 0;
  std::int64_t prompt_word_max = 0;

  bool operator==(const DatasetStats&) const = default;
};

DatasetStats dataset_stats(std::span<const Conversation> convs);

struct RunConfig {
  std::vector<std::string> models;
  std::string dataset_path;
  int repetitions = 3;
  int max_new_tokens = 500;
  int warmup_requests = 1;
  std::int64_t seed = 0;
  bool monitor_resources = false;
  int resource_interval_ms = 500;

  bool operator==(const RunConfig&) const = default;
};

struct ReplayResult {
  std::vector<RunRecord> records;
  std::map<std::string, ResourceSummary> resources;
  std::vector<std::string> failed_models;  // more than half of their requests failed
};

struct ReplayHooks {
  /// Called after each recorded request (not warmups).
  std::function<void(const RunRecord&)> on_record;
  /// Receives live resource samples per model while it runs.
  std::function<void(const std::string& model, const ResourceSample&)> on_resource;
};

/// Replays every conversation turn by turn for each model and repetition,
/// one request in flight at a time. Each turn's history is the prior user
/// turns interleaved with the replies generated earlier in the same
/// repetition. Warmup requests are sent first per model and discarded.
ReplayResult replay(const RunConfig& config, Gateway& gateway, std::span<const Conversation> conversations,
                    const ReplayHooks& hooks = {});

struct ModelReport {
  std::string model;
  std::optional<std::string> absent_reason;  // set when no record succeeded
  std::int64_t record_count = 0;             // successful records
  std::int64_t failed_count = 0;
  std::optional<AggregateStats> prefill_tps;
  std::optional<AggregateStats> decode_tps;
  std::optional<AggregateStats> prefill_ms_per_token;
  std::optional<AggregateStats> decode_ms_per_token;
  std::optional<AggregateStats> total_time_s;
  /// Shares of one prompt token plus one generated token, from the mean
  /// per-token times.
  std::optional<PhaseShare> phase_shares;
  std::optional<double> total_ms_per_token;
  CVReport cv;
  CVReport cv_by_prompt_quartile;
  std::optional<ResourceSummary> resources;
  std::optional<double> accuracy;

  bool operator==(const ModelReport&) const = default;
};

struct Report {
  std::vector<ModelReport> models;
  std::optional<DatasetStats> dataset;
  std::optional<RunConfig> config;
  std::int64_t failed_records = 0;
  std::string tool_version;

  bool operator==(const Report&) const = default;
};

struct ReportInputs {
  std::span<const RunRecord> records;
  /// Models to report, in order. Empty means first-appearance order in records.
  std::vector<std::string> models;
  std::map<std::string, ResourceSummary> resources;
  std::map<std::string, double> accuracy;
  std::optional<DatasetStats> dataset;
  std::optional<RunConfig> config;
};

/// Per-model aggregates over successful records; failed records are only
/// counted. Throws EmptySample when records is empty.
Report build_report(const ReportInputs& inputs);

std::string tool_version();

std::string report_to_json(const Report& report);
Report report_from_json(std::string_view document);

enum class EmitFormat { Json, Csv };

/// Writes report.json (Json) or records.csv + summary.csv (Csv) into
/// out_dir, creating it if needed. Throws IoError.
void emit(const Report& report, std::span<const RunRecord> records, const std::string& out_dir,
          EmitFormat format);

inline constexpr std::string_view kSummaryCsvHeader =
    "model,status,records,failed,prefill_tps_mean,prefill_tps_std,decode_tps_mean,decode_tps_std,"
    "prefill_ms_per_token_mean,prefill_ms_per_token_std,decode_ms_per_token_mean,decode_ms_per_token_std,"
    "total_time_s_mean,total_time_s_std,prefill_share,decode_share,total_ms_per_token,"
    "cpu_total_fraction_mean,cpu_total_fraction_std,rss_bytes_mean,peak_rss_bytes,accuracy";

std::string summary_to_csv(const Report& report);

}  // namespace edgellm
