#include "edgellm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

PhaseTiming make_phase_timing(std::int64_t prompt_tokens, double prefill_ms,
                              std::int64_t generated_tokens, double decode_ms) {
  PhaseTiming t;
  t.prompt_tokens = prompt_tokens;
  t.prefill_ms = prefill_ms;
  t.generated_tokens = generated_tokens;
  t.decode_ms = generated_tokens == 0 ? 0.0 : decode_ms;
  t.total_ms = t.prefill_ms + t.decode_ms;
  return t;
}

ThroughputSample throughput_of(const PhaseTiming& t) {
  ThroughputSample s;
  if (t.prompt_tokens > 0 && t.prefill_ms > 0.0) s.prefill_tps = throughput(t.prompt_tokens, t.prefill_ms);
  if (t.generated_tokens > 0 && t.decode_ms > 0.0) s.decode_tps = throughput(t.generated_tokens, t.decode_ms);
  return s;
}

void Accumulator::add(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteInput, "non-finite sample " + format_double(x));
  if (n_ == 0) {
    min_ = max_ = x;
  } else {
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
  }
  ++n_;
  double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void Accumulator::merge(const Accumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  double na = static_cast<double>(n_);
  double nb = static_cast<double>(other.n_);
  double n = na + nb;
  double delta = other.mean_ - mean_;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  n_ += other.n_;
  min_ = std::min(min_, other.min_);
  max_ = std::max(max_, other.max_);
}

AggregateStats Accumulator::stats() const {
  if (n_ == 0) throw Error(ErrorCode::EmptySample, "no samples to aggregate");
  AggregateStats s;
  s.n = n_;
  // Rounding can leave the running mean a hair outside [min, max].
  s.mean = std::clamp(mean_, min_, max_);
  s.stddev = n_ == 1 ? 0.0 : std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_)));
  s.min = min_;
  s.max = max_;
  return s;
}

double throughput(std::int64_t tokens, double duration_ms) {
  if (!(duration_ms > 0.0) || !std::isfinite(duration_ms)) {
    throw Error(ErrorCode::NonPositiveDuration, "duration_ms must be positive, got " + format_double(duration_ms));
  }
  if (tokens < 1) throw Error(ErrorCode::EmptyPhase, "throughput of a phase with no tokens");
  return static_cast<double>(tokens) / (duration_ms / 1000.0);
}

double per_token_time(double duration_ms, std::int64_t tokens) {
  if (tokens < 1) throw Error(ErrorCode::EmptyPhase, "per-token time of a phase with no tokens");
  return duration_ms / static_cast<double>(tokens);
}

PhaseShare phase_share(const PhaseTiming& t) {
  if (!(t.total_ms > 0.0)) throw Error(ErrorCode::DegenerateTiming, "phase share of a zero-length completion");
  PhaseShare s;
  s.prefill_fraction = t.prefill_ms / t.total_ms;
  s.decode_fraction = t.decode_ms / t.total_ms;
  return s;
}

AggregateStats aggregate(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySample, "aggregate of an empty sample");
  Accumulator acc;
  for (double v : values) acc.add(v);
  return acc.stats();
}

double coefficient_of_variation(const AggregateStats& stats) {
  if (stats.mean == 0.0) throw Error(ErrorCode::ZeroMeanCV, "coefficient of variation with zero mean");
  return stats.stddev / stats.mean;
}

std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::MaxTokens: return "max_tokens";
    case FinishReason::BackendError: return "backend_error";
  }
  return "backend_error";
}

std::optional<FinishReason> parse_finish_reason(std::string_view s) noexcept {
  if (s == "stop") return FinishReason::Stop;
  if (s == "max_tokens") return FinishReason::MaxTokens;
  if (s == "backend_error") return FinishReason::BackendError;
  return std::nullopt;
}

namespace {

using Buckets = std::map<int, std::pair<Accumulator, Accumulator>>;

CVReport report_from_buckets(const Buckets& buckets, const char* what) {
  CVReport report;
  for (const auto& [bucket, accs] : buckets) {
    const auto& [prefill, decode] = accs;
    for (auto [phase, acc] : {std::pair{Phase::Prefill, &prefill}, std::pair{Phase::Decode, &decode}}) {
      if (acc->count() == 0) continue;
      AggregateStats s = acc->stats();
      CVEntry e;
      e.bucket = bucket;
      e.phase = phase;
      e.n = s.n;
      if (s.n == 1) {
        e.cv = 0.0;
      } else {
        if (s.mean == 0.0) {
          throw Error(ErrorCode::ZeroMeanCV, std::string(what) + " bucket " + std::to_string(bucket) +
                                                 (phase == Phase::Prefill ? " prefill" : " decode") +
                                                 " has zero mean throughput");
        }
        e.cv = coefficient_of_variation(s);
      }
      report.entries.push_back(e);
    }
  }
  return report;
}

void add_sample(Buckets& buckets, int bucket, const ThroughputSample& t) {
  auto& [prefill, decode] = buckets[bucket];
  if (t.prefill_tps) prefill.add(*t.prefill_tps);
  if (t.decode_tps) decode.add(*t.decode_tps);
}

}  // namespace

CVReport cv_by_turn(std::span<const RunRecord> records) {
  Buckets buckets;
  for (const RunRecord& r : records) {
    if (!r.ok()) continue;
    if (r.turn_index < 1) throw Error(ErrorCode::InvalidRequest, "turn_index must be >= 1");
    add_sample(buckets, r.turn_index, r.throughput);
  }
  return report_from_buckets(buckets, "turn");
}

CVReport cv_by_prompt_quartile(std::span<const RunRecord> records) {
  std::vector<std::int64_t> lengths;
  for (const RunRecord& r : records) {
    if (r.ok()) lengths.push_back(r.timing.prompt_tokens);
  }
  if (lengths.empty()) return {};
  std::sort(lengths.begin(), lengths.end());
  // Upper bounds of quartiles 1..3 by nearest-rank; quartile 4 takes the rest.
  auto rank = [&](double q) {
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(lengths.size())));
    return lengths[std::min(lengths.size() - 1, idx == 0 ? 0 : idx - 1)];
  };
  const std::int64_t q1 = rank(0.25), q2 = rank(0.5), q3 = rank(0.75);

  Buckets buckets;
  for (const RunRecord& r : records) {
    if (!r.ok()) continue;
    std::int64_t p = r.timing.prompt_tokens;
    int quartile = p <= q1 ? 1 : p <= q2 ? 2 : p <= q3 ? 3 : 4;
    add_sample(buckets, quartile, r.throughput);
  }
  return report_from_buckets(buckets, "quartile");
}

}  // namespace edgellm
