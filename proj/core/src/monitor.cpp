#include "edgellm/monitor.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

namespace {

struct ProcStat {
  char state = '?';
  std::int64_t cpu_ticks = 0;  // utime + stime
};

ProcStat read_stat(int pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
  std::string line;
  if (!in || !std::getline(in, line)) {
    throw Error(ErrorCode::TargetGone, "process " + std::to_string(pid) + " is not running");
  }
  // comm may contain spaces and parentheses; fields resume after the last ')'.
  auto close = line.rfind(')');
  if (close == std::string::npos) throw Error(ErrorCode::TargetGone, "unreadable stat for " + std::to_string(pid));
  std::istringstream rest(line.substr(close + 2));
  ProcStat st;
  rest >> st.state;
  std::string skip;
  // Fields 4..13 precede utime (14) and stime (15).
  for (int i = 0; i < 10; ++i) rest >> skip;
  std::int64_t utime = 0, stime = 0;
  rest >> utime >> stime;
  if (!rest) throw Error(ErrorCode::TargetGone, "unreadable stat for " + std::to_string(pid));
  st.cpu_ticks = utime + stime;
  return st;
}

std::int64_t read_rss_bytes(int pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/statm");
  std::int64_t size = 0, resident = 0;
  if (!(in >> size >> resident)) {
    throw Error(ErrorCode::TargetGone, "process " + std::to_string(pid) + " is not running");
  }
  return resident * static_cast<std::int64_t>(sysconf(_SC_PAGESIZE));
}

}  // namespace

ProcessProbe::ProcessProbe(int pid, unsigned core_count) : pid_(pid), cores_(core_count) {
  if (cores_ == 0) {
    long n = sysconf(_SC_NPROCESSORS_ONLN);
    cores_ = n > 0 ? static_cast<unsigned>(n) : 1U;
  }
}

ResourceSample ProcessProbe::sample() {
  ProcStat st = read_stat(pid_);
  if (st.state == 'Z' || st.state == 'X') {
    throw Error(ErrorCode::TargetGone, "process " + std::to_string(pid_) + " has exited");
  }
  ResourceSample s;
  s.at_ns = monotonic_ns();
  s.rss_bytes = read_rss_bytes(pid_);
  if (!last_cpu_ticks_ || s.at_ns <= last_at_ns_) {
    s.baseline = true;
  } else {
    static const double ticks_per_second = static_cast<double>(sysconf(_SC_CLK_TCK));
    double cpu_s = static_cast<double>(st.cpu_ticks - *last_cpu_ticks_) / ticks_per_second;
    double wall_s = static_cast<double>(s.at_ns - last_at_ns_) / 1e9;
    double core = std::max(0.0, cpu_s / wall_s);
    s.cpu_core_fraction = core;
    s.cpu_total_fraction = core / static_cast<double>(cores_);
  }
  last_cpu_ticks_ = st.cpu_ticks;
  last_at_ns_ = s.at_ns;
  return s;
}

ResourceSummary summarize(std::span<const ResourceSample> samples) {
  Accumulator cpu, rss;
  std::optional<std::int64_t> first_at, last_at;
  for (const ResourceSample& s : samples) {
    if (!s.cpu_total_fraction) continue;
    cpu.add(*s.cpu_total_fraction);
    rss.add(static_cast<double>(s.rss_bytes));
    if (!first_at) first_at = s.at_ns;
    last_at = s.at_ns;
  }
  if (cpu.count() == 0) throw Error(ErrorCode::EmptySample, "no resource samples with CPU readings");
  ResourceSummary out;
  out.cpu = cpu.stats();
  out.rss = rss.stats();
  out.peak_rss_bytes = static_cast<std::int64_t>(out.rss.max);
  out.duration_s = static_cast<double>(*last_at - *first_at) / 1e9;
  out.sample_count = out.cpu.n;
  return out;
}

Sampler::Sampler(int pid, std::chrono::milliseconds interval, SampleSink sink)
    : probe_(pid), interval_(interval), sink_(std::move(sink)) {
  if (interval_ < std::chrono::milliseconds(50)) {
    throw Error(ErrorCode::InvalidInterval, "sampling interval must be at least 50 ms");
  }
  // Baseline now so the first delivered sample already has CPU fields.
  probe_.sample();
  worker_ = std::jthread([this](std::stop_token st) { run(st); });
}

Sampler::~Sampler() { stop(); }

void Sampler::run(std::stop_token stop) {
  auto next = std::chrono::steady_clock::now() + interval_;
  SamplerEnd reason = SamplerEnd::Stopped;
  while (true) {
    {
      std::unique_lock lock(mu_);
      if (cv_.wait_until(lock, stop, next, [] { return false; }) || stop.stop_requested()) break;
    }
    try {
      ResourceSample s = probe_.sample();
      if (sink_.on_sample) sink_.on_sample(s);
    } catch (const std::exception&) {
      reason = SamplerEnd::TargetGone;
      break;
    }
    next += interval_;
    auto now = std::chrono::steady_clock::now();
    // Skip missed ticks instead of bursting to catch up.
    while (next <= now) next += interval_;
  }
  std::lock_guard lock(mu_);
  if (!ended_) {
    ended_ = true;
    if (sink_.on_end) sink_.on_end(reason);
  }
}

void Sampler::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
}

bool Sampler::running() const {
  std::lock_guard lock(mu_);
  return !ended_;
}

SampleSink SampleRecorder::sink() {
  return SampleSink{
      [this](const ResourceSample& s) {
        std::lock_guard lock(mu_);
        samples_.push_back(s);
      },
      [this](SamplerEnd end) {
        std::lock_guard lock(mu_);
        end_ = end;
      },
  };
}

std::vector<ResourceSample> SampleRecorder::samples() const {
  std::lock_guard lock(mu_);
  return samples_;
}

std::optional<ResourceSample> SampleRecorder::latest() const {
  std::lock_guard lock(mu_);
  if (samples_.empty()) return std::nullopt;
  return samples_.back();
}

std::optional<SamplerEnd> SampleRecorder::end() const {
  std::lock_guard lock(mu_);
  return end_;
}

}  // namespace edgellm
