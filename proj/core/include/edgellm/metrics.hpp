#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace edgellm {

/// Prefill/decode split of one completion. total_ms is always the exact sum
/// prefill_ms + decode_ms; use make_phase_timing to keep that true.
struct PhaseTiming {
  std::int64_t prompt_tokens = 0;
  double prefill_ms = 0.0;
  std::int64_t generated_tokens = 0;
  double decode_ms = 0.0;
  double total_ms = 0.0;

  bool operator==(const PhaseTiming&) const = default;
};

PhaseTiming make_phase_timing(std::int64_t prompt_tokens, double prefill_ms,
                              std::int64_t generated_tokens, double decode_ms);

/// Tokens per second for each phase. A phase with no tokens or zero duration
/// has no throughput and is left empty so it never enters an aggregate.
struct ThroughputSample {
  std::optional<double> prefill_tps;
  std::optional<double> decode_tps;

  bool operator==(const ThroughputSample&) const = default;
};

ThroughputSample throughput_of(const PhaseTiming& t);

struct AggregateStats {
  std::int64_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0;
  double max = 0.0;

  bool operator==(const AggregateStats&) const = default;
};

/// Streaming mean/variance (Welford) with an exact merge of partial results,
/// so a sample split across workers aggregates to the same statistics.
class Accumulator {
 public:
  void add(double x);
  void merge(const Accumulator& other);

  std::int64_t count() const noexcept { return n_; }
  AggregateStats stats() const;

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = 0.0;
  double max_ = 0.0;
};

enum class Phase { Prefill, Decode };

struct PhaseShare {
  double prefill_fraction = 0.0;
  double decode_fraction = 0.0;

  bool operator==(const PhaseShare&) const = default;
};

double throughput(std::int64_t tokens, double duration_ms);
double per_token_time(double duration_ms, std::int64_t tokens);
PhaseShare phase_share(const PhaseTiming& t);
AggregateStats aggregate(std::span<const double> values);
double coefficient_of_variation(const AggregateStats& stats);

enum class FinishReason { Stop, MaxTokens, BackendError };

std::string_view to_string(FinishReason r) noexcept;
std::optional<FinishReason> parse_finish_reason(std::string_view s) noexcept;

/// One (model, conversation, turn, repetition) measurement.
struct RunRecord {
  std::string model;
  std::string conversation_id;
  int turn_index = 1;   // 1-based
  int repetition = 1;   // 1-based
  PhaseTiming timing;
  ThroughputSample throughput;
  std::string started_at;  // RFC 3339 wall time
  FinishReason finish_reason = FinishReason::MaxTokens;

  bool ok() const noexcept { return finish_reason != FinishReason::BackendError; }
  bool operator==(const RunRecord&) const = default;
};

struct CVEntry {
  int bucket = 0;  // 1-based turn index, or quartile 1..4
  Phase phase = Phase::Prefill;
  double cv = 0.0;
  std::int64_t n = 0;

  bool operator==(const CVEntry&) const = default;
};

struct CVReport {
  std::vector<CVEntry> entries;  // sorted by (bucket, phase)

  bool operator==(const CVReport&) const = default;
};

/// CV of prefill and decode throughput per turn index, pooled across
/// conversations and repetitions. Failed records and empty phases are skipped.
CVReport cv_by_turn(std::span<const RunRecord> records);

/// Same computation bucketed by prompt-token quartile (1 = shortest prompts).
CVReport cv_by_prompt_quartile(std::span<const RunRecord> records);

}  // namespace edgellm
