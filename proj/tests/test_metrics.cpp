#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "edgellm/error.hpp"
#include "edgellm/metrics.hpp"
#include "support.hpp"

using namespace edgellm;
using testsupport::close_rel;
using testsupport::naive_stats;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edgellm::Error");
  return ErrorCode::IoError;
}

RunRecord record(int turn, std::int64_t prompt_tokens, double prefill_ms, std::int64_t gen, double decode_ms) {
  RunRecord r;
  r.model = "m";
  r.conversation_id = "c";
  r.turn_index = turn;
  r.timing = make_phase_timing(prompt_tokens, prefill_ms, gen, decode_ms);
  r.throughput = throughput_of(r.timing);
  return r;
}

}  // namespace

TEST_CASE("throughput and per-token time worked values") {
  CHECK(throughput(10, 500.0) == doctest::Approx(20.0));
  CHECK(per_token_time(500.0, 10) == doctest::Approx(50.0));
  CHECK(throughput(1, 13.79) == doctest::Approx(72.5163).epsilon(1e-5));
  CHECK(code_of([] { throughput(5, 0.0); }) == ErrorCode::NonPositiveDuration);
  CHECK(code_of([] { throughput(5, -1.0); }) == ErrorCode::NonPositiveDuration);
  CHECK(code_of([] { throughput(0, 10.0); }) == ErrorCode::EmptyPhase);
  CHECK(code_of([] { per_token_time(10.0, 0); }) == ErrorCode::EmptyPhase);
}

TEST_CASE("throughput and per_token_time are inverses through the 1000 ms/s factor") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> tokens(1, 5000);
  std::uniform_real_distribution<double> ms(0.01, 1e6);
  for (int i = 0; i < 20000; ++i) {
    std::int64_t n = tokens(rng);
    double d = ms(rng);
    REQUIRE(close_rel(throughput(n, d) * per_token_time(d, n), 1000.0, 1e-12));
  }
}

TEST_CASE("phase timing keeps total equal to the sum") {
  PhaseTiming t = make_phase_timing(40, 3280.8, 100, 23893.0);
  CHECK(t.total_ms == t.prefill_ms + t.decode_ms);
  PhaseTiming nothing_generated = make_phase_timing(40, 12.0, 0, 99.0);
  CHECK(nothing_generated.decode_ms == 0.0);
  CHECK(nothing_generated.total_ms == 12.0);
  ThroughputSample s = throughput_of(nothing_generated);
  CHECK(s.prefill_tps.has_value());
  CHECK_FALSE(s.decode_tps.has_value());
}

TEST_CASE("phase shares sum to one within an ulp") {
  PhaseShare gemma = phase_share(make_phase_timing(1, 82.02, 1, 238.93));
  CHECK(gemma.prefill_fraction == doctest::Approx(0.2556).epsilon(0.001 / 0.2556));
  CHECK(code_of([] { phase_share(make_phase_timing(0, 0.0, 0, 0.0)); }) == ErrorCode::DegenerateTiming);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ms(1e-3, 1e5);
  for (int i = 0; i < 20000; ++i) {
    PhaseShare s = phase_share(make_phase_timing(3, ms(rng), 7, ms(rng)));
    double sum = s.prefill_fraction + s.decode_fraction;
    REQUIRE(std::fabs(sum - 1.0) <= std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("aggregate matches a two-pass oracle") {
  AggregateStats s = aggregate(std::vector<double>{1, 2, 3});
  CHECK(s.n == 3);
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(aggregate(std::vector<double>{4.5}).stddev == 0.0);
  CHECK(code_of([] { aggregate(std::vector<double>{}); }) == ErrorCode::EmptySample);
  CHECK(code_of([] { aggregate(std::vector<double>{1.0, std::nan("")}); }) == ErrorCode::NonFiniteInput);
  CHECK(code_of([] { aggregate(std::vector<double>{1.0, INFINITY}); }) == ErrorCode::NonFiniteInput);

  std::mt19937_64 rng(23);
  std::lognormal_distribution<double> dist(3.0, 1.2);
  std::uniform_int_distribution<int> len(1, 400);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> xs(static_cast<std::size_t>(len(rng)));
    for (double& x : xs) x = dist(rng);
    AggregateStats got = aggregate(xs);
    auto want = naive_stats(xs);
    REQUIRE(got.n == static_cast<std::int64_t>(want.n));
    REQUIRE(close_rel(got.mean, want.mean, 1e-12));
    REQUIRE(testsupport::close_rel_or_abs(got.stddev, want.stddev, 1e-9, 1e-12 * std::fabs(want.mean)));
    REQUIRE(got.min == want.min);
    REQUIRE(got.max == want.max);
  }
}

TEST_CASE("aggregate is permutation invariant and merge matches a single pass") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> dist(100.0, 15.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(64);
    for (double& x : xs) x = dist(rng);
    AggregateStats base = aggregate(xs);
    std::shuffle(xs.begin(), xs.end(), rng);
    AggregateStats shuffled = aggregate(xs);
    REQUIRE(close_rel(base.mean, shuffled.mean, 1e-13));
    REQUIRE(close_rel(base.stddev, shuffled.stddev, 1e-10));
    REQUIRE(base.min == shuffled.min);
    REQUIRE(base.max == shuffled.max);

    std::size_t cut = std::uniform_int_distribution<std::size_t>(0, xs.size())(rng);
    Accumulator left, right;
    for (std::size_t i = 0; i < cut; ++i) left.add(xs[i]);
    for (std::size_t i = cut; i < xs.size(); ++i) right.add(xs[i]);
    left.merge(right);
    AggregateStats merged = left.stats();
    REQUIRE(merged.n == base.n);
    REQUIRE(close_rel(merged.mean, base.mean, 1e-13));
    REQUIRE(close_rel(merged.stddev, base.stddev, 1e-10));
  }
}

TEST_CASE("coefficient of variation is scale and permutation invariant") {
  CHECK(code_of([] { coefficient_of_variation(aggregate(std::vector<double>{0.0, 0.0})); }) ==
        ErrorCode::ZeroMeanCV);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(1.0, 50.0);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> xs(20);
    for (double& x : xs) x = dist(rng);
    double cv = coefficient_of_variation(aggregate(xs));
    double k = scale(rng);
    std::vector<double> scaled = xs;
    for (double& x : scaled) x *= k;
    std::shuffle(scaled.begin(), scaled.end(), rng);
    REQUIRE(close_rel(coefficient_of_variation(aggregate(scaled)), cv, 1e-9));
  }
}

TEST_CASE("cv_by_turn buckets per turn and ignores repetition of identical data") {
  std::vector<RunRecord> rs = {record(1, 10, 100.0, 5, 50.0), record(1, 10, 200.0, 5, 100.0),
                               record(2, 20, 100.0, 5, 50.0)};
  CVReport r = cv_by_turn(rs);
  REQUIRE(r.entries.size() == 4);
  CHECK(r.entries[0].bucket == 1);
  CHECK(r.entries[0].phase == Phase::Prefill);
  // turn 1 prefill throughputs 100 and 50 tok/s: mean 75, std 25
  CHECK(r.entries[0].cv == doctest::Approx(25.0 / 75.0));
  CHECK(r.entries[2].bucket == 2);
  CHECK(r.entries[2].n == 1);
  CHECK(r.entries[2].cv == 0.0);

  RunRecord failed = record(1, 10, 1.0, 1, 1.0);
  failed.finish_reason = FinishReason::BackendError;
  std::vector<RunRecord> with_failure = rs;
  with_failure.push_back(failed);
  CHECK(cv_by_turn(with_failure) == r);

  std::vector<RunRecord> tripled;
  for (int k = 0; k < 3; ++k) tripled.insert(tripled.end(), rs.begin(), rs.end());
  CVReport t = cv_by_turn(tripled);
  REQUIRE(t.entries.size() == r.entries.size());
  for (std::size_t i = 0; i < t.entries.size(); ++i) {
    CHECK(t.entries[i].cv == doctest::Approx(r.entries[i].cv).epsilon(1e-12));
  }
}

TEST_CASE("cv_by_prompt_quartile uses nearest-rank bounds") {
  std::vector<RunRecord> rs;
  for (int p = 1; p <= 8; ++p) rs.push_back(record(1, p, 10.0 * p, 2, 20.0));
  CVReport r = cv_by_prompt_quartile(rs);
  std::map<int, std::int64_t> n_prefill;
  for (const CVEntry& e : r.entries) {
    if (e.phase == Phase::Prefill) n_prefill[e.bucket] = e.n;
  }
  CHECK(n_prefill == std::map<int, std::int64_t>{{1, 2}, {2, 2}, {3, 2}, {4, 2}});
  CHECK(cv_by_prompt_quartile(std::vector<RunRecord>{}).entries.empty());
}

TEST_CASE("finish reasons round-trip through their wire names") {
  for (FinishReason f : {FinishReason::Stop, FinishReason::MaxTokens, FinishReason::BackendError}) {
    CHECK(parse_finish_reason(to_string(f)) == f);
  }
  CHECK_FALSE(parse_finish_reason("length").has_value());
}
