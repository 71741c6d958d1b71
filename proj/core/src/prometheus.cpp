#include "edgellm/prometheus.hpp"

#include <algorithm>
#include <map>

#include "edgellm/error.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

namespace {

bool name_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':'; }
bool name_char(char c) { return name_start(c) || (c >= '0' && c <= '9'); }
bool label_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool label_char(char c) { return label_start(c) || (c >= '0' && c <= '9'); }

bool is_valid_label_name(std::string_view name) {
  if (name.empty() || !label_start(name.front())) return false;
  if (name.size() >= 2 && name[0] == '_' && name[1] == '_') return false;
  return std::all_of(name.begin(), name.end(), label_char);
}

std::string escape_label_value(std::string_view v) {
  std::string out;
  out.reserve(v.size());
  for (char c : v) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

bool is_valid_metric_name(std::string_view name) noexcept {
  if (name.empty() || !name_start(name.front())) return false;
  return std::all_of(name.begin(), name.end(), name_char);
}

std::string render_prometheus(std::span<const MetricSample> snapshot) {
  using Labels = std::vector<std::pair<std::string, std::string>>;
  struct Family {
    MetricType type = MetricType::Gauge;
    std::vector<std::pair<Labels, double>> samples;
  };
  std::map<std::string, Family> families;

  for (const MetricSample& m : snapshot) {
    if (!is_valid_metric_name(m.name)) {
      throw Error(ErrorCode::InvalidMetricName, "invalid metric name '" + m.name + "'");
    }
    Labels labels = m.labels;
    for (const auto& [k, v] : labels) {
      if (!is_valid_label_name(k)) {
        throw Error(ErrorCode::InvalidMetricName, "invalid label name '" + k + "' on " + m.name);
      }
    }
    std::sort(labels.begin(), labels.end());
    auto [it, inserted] = families.try_emplace(m.name);
    if (inserted) {
      it->second.type = m.type;
    } else if (it->second.type != m.type) {
      throw Error(ErrorCode::InvalidMetricName, "metric '" + m.name + "' declared with two types");
    }
    it->second.samples.emplace_back(std::move(labels), m.value);
  }

  std::string out;
  for (auto& [name, family] : families) {
    std::stable_sort(family.samples.begin(), family.samples.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    out += "# TYPE ";
    out += name;
    out += family.type == MetricType::Counter ? " counter\n" : " gauge\n";
    for (const auto& [labels, value] : family.samples) {
      out += name;
      if (!labels.empty()) {
        out += '{';
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (i > 0) out += ',';
          out += labels[i].first;
          out += "=\"";
          out += escape_label_value(labels[i].second);
          out += '"';
        }
        out += '}';
      }
      out += ' ';
      out += format_double(value);
      out += '\n';
    }
  }
  return out;
}

}  // namespace edgellm
