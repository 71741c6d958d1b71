#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "edgellm/metrics.hpp"

namespace edgellm {

/// CPU and resident memory of one process at one instant. The CPU fields
/// cover the interval since the previous reading and are empty on the first
/// (baseline) reading.
struct ResourceSample {
  std::int64_t at_ns = 0;  // monotonic
  std::optional<double> cpu_total_fraction;  // share of all logical cores, [0, 1]
  std::optional<double> cpu_core_fraction;   // share of one core, may exceed 1
  std::int64_t rss_bytes = 0;
  bool baseline = false;

  bool operator==(const ResourceSample&) const = default;
};

struct ResourceSummary {
  AggregateStats cpu;  // over cpu_total_fraction
  AggregateStats rss;  // over rss_bytes
  std::int64_t peak_rss_bytes = 0;
  double duration_s = 0.0;
  std::int64_t sample_count = 0;

  bool operator==(const ResourceSummary&) const = default;
};

/// Reads /proc/<pid>/stat and /proc/<pid>/statm. Keeps the previous CPU
/// reading as the baseline for the next delta.
class ProcessProbe {
 public:
  explicit ProcessProbe(int pid, unsigned core_count = 0);

  /// Throws TargetGone once the process has exited (zombies count as gone).
  ResourceSample sample();

  int pid() const noexcept { return pid_; }
  unsigned core_count() const noexcept { return cores_; }

 private:
  int pid_;
  unsigned cores_;
  std::optional<std::int64_t> last_cpu_ticks_;
  std::int64_t last_at_ns_ = 0;
};

/// Samples that carry CPU data are aggregated; baseline readings are skipped.
/// Throws EmptySample when nothing usable remains.
ResourceSummary summarize(std::span<const ResourceSample> samples);

enum class SamplerEnd { Stopped, TargetGone };

struct SampleSink {
  std::function<void(const ResourceSample&)> on_sample;
  std::function<void(SamplerEnd)> on_end;
};

/// Background sampler on a fixed cadence. stop() is idempotent, joins the
/// worker and delivers on_end exactly once.
class Sampler {
 public:
  Sampler(int pid, std::chrono::milliseconds interval, SampleSink sink);
  ~Sampler();

  Sampler(const Sampler&) = delete;
  Sampler& operator=(const Sampler&) = delete;

  void stop();
  bool running() const;

 private:
  void run(std::stop_token stop);

  ProcessProbe probe_;
  std::chrono::milliseconds interval_;
  SampleSink sink_;
  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  bool ended_ = false;
  std::jthread worker_;
};

/// Collects every sample from a Sampler and keeps the most recent one for
/// point-in-time reads.
class SampleRecorder {
 public:
  SampleSink sink();
  std::vector<ResourceSample> samples() const;
  std::optional<ResourceSample> latest() const;
  std::optional<SamplerEnd> end() const;

 private:
  mutable std::mutex mu_;
  std::vector<ResourceSample> samples_;
  std::optional<SamplerEnd> end_;
};

}  // namespace edgellm
