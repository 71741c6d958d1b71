#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace edgellm {

enum class MetricType { Gauge, Counter };

struct MetricSample {
  std::string name;
  std::vector<std::pair<std::string, std::string>> labels;
  double value = 0.0;
  MetricType type = MetricType::Gauge;

  bool operator==(const MetricSample&) const = default;
};

bool is_valid_metric_name(std::string_view name) noexcept;

/// Text exposition format 0.0.4. One "# TYPE" line per metric family, then
/// its samples. Families are ordered by name and samples by their sorted
/// label set, so identical snapshots render byte-identical text. Throws
/// InvalidMetricName.
std::string render_prometheus(std::span<const MetricSample> snapshot);

}  // namespace edgellm
