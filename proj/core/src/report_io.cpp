#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "edgellm/bench.hpp"
#include "edgellm/error.hpp"
#include "edgellm/record_io.hpp"
#include "edgellm/util.hpp"

namespace edgellm {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// records.csv

std::string csv_escape(std::string_view cell) {
  bool quote = cell.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!quote) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string record_to_csv_row(const RunRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::string row = csv_escape(r.model);
  row += ',' + csv_escape(r.conversation_id);
  row += ',' + std::to_string(r.turn_index);
  row += ',' + std::to_string(r.repetition);
  row += ',' + std::to_string(r.timing.prompt_tokens);
  row += ',' + std::to_string(r.timing.generated_tokens);
  row += ',' + format_double(r.timing.prefill_ms);
  row += ',' + format_double(r.timing.decode_ms);
  row += ',' + format_double(r.timing.total_ms);
  row += ',' + opt(r.throughput.prefill_tps);
  row += ',' + opt(r.throughput.decode_tps);
  row += ',';
  row += to_string(r.finish_reason);
  row += ',' + csv_escape(r.started_at);
  return row;
}

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kRecordsCsvHeader << '\n';
  for (const RunRecord& r : records) out << record_to_csv_row(r) << '\n';
}

namespace {

template <typename T>
T parse_int(const std::string& s, const std::string& where) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error(ErrorCode::DatasetSyntax, where + ": expected an integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::DatasetSyntax, where + ": expected a number, got '" + s + "'");
  }
  return v;
}

bool close_enough(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(std::fabs(a), std::fabs(b)); }

}  // namespace

std::vector<RunRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::DatasetSyntax, "records file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordsCsvHeader) throw Error(ErrorCode::DatasetSyntax, "line 1: unexpected records header");

  std::vector<RunRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    auto cells = csv_split_row(line);
    if (cells.size() != 13) {
      throw Error(ErrorCode::DatasetSyntax, where + ": expected 13 columns, got " + std::to_string(cells.size()));
    }
    RunRecord r;
    r.model = cells[0];
    r.conversation_id = cells[1];
    r.turn_index = parse_int<int>(cells[2], where);
    r.repetition = parse_int<int>(cells[3], where);
    std::int64_t prompt_tokens = parse_int<std::int64_t>(cells[4], where);
    std::int64_t generated = parse_int<std::int64_t>(cells[5], where);
    double prefill_ms = parse_double(cells[6], where);
    double decode_ms = parse_double(cells[7], where);
    double total_ms = parse_double(cells[8], where);
    r.timing = make_phase_timing(prompt_tokens, prefill_ms, generated, decode_ms);
    if (!close_enough(r.timing.total_ms, total_ms)) {
      throw Error(ErrorCode::DatasetSyntax, where + ": total_ms is not prefill_ms + decode_ms");
    }
    if (!cells[9].empty()) r.throughput.prefill_tps = parse_double(cells[9], where);
    if (!cells[10].empty()) r.throughput.decode_tps = parse_double(cells[10], where);
    auto reason = parse_finish_reason(cells[11]);
    if (!reason) throw Error(ErrorCode::DatasetSyntax, where + ": unknown finish_reason '" + cells[11] + "'");
    r.finish_reason = *reason;
    r.started_at = cells[12];
    if (r.ok()) {
      ThroughputSample expect = throughput_of(r.timing);
      auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
        return a.has_value() == b.has_value() && (!a || close_enough(*a, *b));
      };
      if (!same(expect.prefill_tps, r.throughput.prefill_tps) || !same(expect.decode_tps, r.throughput.decode_tps)) {
        throw Error(ErrorCode::DatasetSyntax, where + ": throughput does not match timing");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunRecord> read_records_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open records file '" + path + "'");
  return read_records_csv(in);
}

// ---------------------------------------------------------------------------
// report.json

namespace {

ojson stats_json(const std::optional<AggregateStats>& s) {
  if (!s) return nullptr;
  return ojson{{"n", s->n}, {"mean", s->mean}, {"std", s->stddev}, {"min", s->min}, {"max", s->max}};
}

std::optional<AggregateStats> stats_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  AggregateStats s;
  s.n = j.at("n").get<std::int64_t>();
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

ojson cv_json(const CVReport& cv) {
  ojson entries = ojson::array();
  for (const CVEntry& e : cv.entries) {
    entries.push_back({{"bucket", e.bucket},
                       {"phase", e.phase == Phase::Prefill ? "prefill" : "decode"},
                       {"cv", e.cv},
                       {"n", e.n}});
  }
  return entries;
}

CVReport cv_from(const ojson& j) {
  CVReport cv;
  for (const auto& e : j) {
    CVEntry entry;
    entry.bucket = e.at("bucket").get<int>();
    entry.phase = e.at("phase").get<std::string>() == "prefill" ? Phase::Prefill : Phase::Decode;
    entry.cv = e.at("cv").get<double>();
    entry.n = e.at("n").get<std::int64_t>();
    cv.entries.push_back(entry);
  }
  return cv;
}

template <typename T>
ojson opt_json(const std::optional<T>& v) {
  if (!v) return nullptr;
  return *v;
}

template <typename T>
std::optional<T> opt_from(const ojson& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

ojson resources_json(const std::optional<ResourceSummary>& r) {
  if (!r) return nullptr;
  return ojson{{"cpu_total_fraction", stats_json(r->cpu)},
               {"rss_bytes", stats_json(r->rss)},
               {"peak_rss_bytes", r->peak_rss_bytes},
               {"duration_s", r->duration_s},
               {"sample_count", r->sample_count}};
}

std::optional<ResourceSummary> resources_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  ResourceSummary r;
  r.cpu = *stats_from(j.at("cpu_total_fraction"));
  r.rss = *stats_from(j.at("rss_bytes"));
  r.peak_rss_bytes = j.at("peak_rss_bytes").get<std::int64_t>();
  r.duration_s = j.at("duration_s").get<double>();
  r.sample_count = j.at("sample_count").get<std::int64_t>();
  return r;
}

}  // namespace

std::string report_to_json(const Report& report) {
  ojson models = ojson::array();
  for (const ModelReport& m : report.models) {
    ojson shares = nullptr;
    if (m.phase_shares) {
      shares = ojson{{"prefill", m.phase_shares->prefill_fraction}, {"decode", m.phase_shares->decode_fraction}};
    }
    models.push_back({{"model", m.model},
                      {"status", m.absent_reason ? "absent" : "ok"},
                      {"absent_reason", opt_json(m.absent_reason)},
                      {"records", m.record_count},
                      {"failed", m.failed_count},
                      {"prefill_tps", stats_json(m.prefill_tps)},
                      {"decode_tps", stats_json(m.decode_tps)},
                      {"prefill_ms_per_token", stats_json(m.prefill_ms_per_token)},
                      {"decode_ms_per_token", stats_json(m.decode_ms_per_token)},
                      {"total_time_s", stats_json(m.total_time_s)},
                      {"phase_shares", shares},
                      {"total_ms_per_token", opt_json(m.total_ms_per_token)},
                      {"cv_by_turn", cv_json(m.cv)},
                      {"cv_by_prompt_quartile", cv_json(m.cv_by_prompt_quartile)},
                      {"resources", resources_json(m.resources)},
                      {"accuracy", opt_json(m.accuracy)}});
  }
  ojson dataset = nullptr;
  if (report.dataset) {
    const DatasetStats& d = *report.dataset;
    dataset = ojson{{"conversation_count", d.conversation_count},
                    {"turn_count", d.turn_count},
                    {"prompt_word_mean", d.prompt_word_mean},
                    {"prompt_word_std", d.prompt_word_std},
                    {"prompt_word_min", d.prompt_word_min},
                    {"prompt_word_max", d.prompt_word_max}};
  }
  ojson config = nullptr;
  if (report.config) {
    const RunConfig& c = *report.config;
    config = ojson{{"models", c.models},
                   {"dataset_path", c.dataset_path},
                   {"repetitions", c.repetitions},
                   {"max_new_tokens", c.max_new_tokens},
                   {"warmup_requests", c.warmup_requests},
                   {"seed", c.seed},
                   {"monitor_resources", c.monitor_resources},
                   {"resource_interval_ms", c.resource_interval_ms}};
  }
  ojson doc = {{"tool_version", report.tool_version},
               {"config", config},
               {"dataset", dataset},
               {"failed_records", report.failed_records},
               {"models", models}};
  return doc.dump(2) + "\n";
}

Report report_from_json(std::string_view document) {
  ojson doc = ojson::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::DatasetSyntax, "report is not a JSON object");
  try {
    Report report;
    report.tool_version = doc.at("tool_version").get<std::string>();
    report.failed_records = doc.at("failed_records").get<std::int64_t>();
    if (!doc.at("config").is_null()) {
      const ojson& c = doc["config"];
      RunConfig cfg;
      cfg.models = c.at("models").get<std::vector<std::string>>();
      cfg.dataset_path = c.at("dataset_path").get<std::string>();
      cfg.repetitions = c.at("repetitions").get<int>();
      cfg.max_new_tokens = c.at("max_new_tokens").get<int>();
      cfg.warmup_requests = c.at("warmup_requests").get<int>();
      cfg.seed = c.at("seed").get<std::int64_t>();
      cfg.monitor_resources = c.at("monitor_resources").get<bool>();
      cfg.resource_interval_ms = c.at("resource_interval_ms").get<int>();
      report.config = cfg;
    }
    if (!doc.at("dataset").is_null()) {
      const ojson& d = doc["dataset"];
      DatasetStats s;
      s.conversation_count = d.at("conversation_count").get<std::int64_t>();
      s.turn_count = d.at("turn_count").get<std::int64_t>();
      s.prompt_word_mean = d.at("prompt_word_mean").get<double>();
      s.prompt_word_std = d.at("prompt_word_std").get<double>();
      s.prompt_word_min = d.at("prompt_word_min").get<std::int64_t>();
      s.prompt_word_max = d.at("prompt_word_max").get<std::int64_t>();
      report.dataset = s;
    }
    for (const auto& m : doc.at("models")) {
      ModelReport mr;
      mr.model = m.at("model").get<std::string>();
      mr.absent_reason = opt_from<std::string>(m, "absent_reason");
      mr.record_count = m.at("records").get<std::int64_t>();
      mr.failed_count = m.at("failed").get<std::int64_t>();
      mr.prefill_tps = stats_from(m.at("prefill_tps"));
      mr.decode_tps = stats_from(m.at("decode_tps"));
      mr.prefill_ms_per_token = stats_from(m.at("prefill_ms_per_token"));
      mr.decode_ms_per_token = stats_from(m.at("decode_ms_per_token"));
      mr.total_time_s = stats_from(m.at("total_time_s"));
      if (!m.at("phase_shares").is_null()) {
        mr.phase_shares = PhaseShare{m["phase_shares"].at("prefill").get<double>(),
                                     m["phase_shares"].at("decode").get<double>()};
      }
      mr.total_ms_per_token = opt_from<double>(m, "total_ms_per_token");
      mr.cv = cv_from(m.at("cv_by_turn"));
      mr.cv_by_prompt_quartile = cv_from(m.at("cv_by_prompt_quartile"));
      mr.resources = resources_from(m.at("resources"));
      mr.accuracy = opt_from<double>(m, "accuracy");
      report.models.push_back(std::move(mr));
    }
    return report;
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::DatasetSyntax, std::string("malformed report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// summary.csv and emit

std::string summary_to_csv(const Report& report) {
  std::string out(kSummaryCsvHeader);
  out += '\n';
  auto num = [](std::optional<double> v) { return v ? format_double(*v) : std::string(); };
  auto mean = [](const std::optional<AggregateStats>& s) { return s ? std::optional(s->mean) : std::nullopt; };
  auto sd = [](const std::optional<AggregateStats>& s) { return s ? std::optional(s->stddev) : std::nullopt; };
  for (const ModelReport& m : report.models) {
    std::vector<std::string> cells = {
        csv_escape(m.model),
        m.absent_reason ? "absent" : "ok",
        std::to_string(m.record_count),
        std::to_string(m.failed_count),
        num(mean(m.prefill_tps)),
        num(sd(m.prefill_tps)),
        num(mean(m.decode_tps)),
        num(sd(m.decode_tps)),
        num(mean(m.prefill_ms_per_token)),
        num(sd(m.prefill_ms_per_token)),
        num(mean(m.decode_ms_per_token)),
        num(sd(m.decode_ms_per_token)),
        num(mean(m.total_time_s)),
        num(sd(m.total_time_s)),
        num(m.phase_shares ? std::optional(m.phase_shares->prefill_fraction) : std::nullopt),
        num(m.phase_shares ? std::optional(m.phase_shares->decode_fraction) : std::nullopt),
        num(m.total_ms_per_token),
        num(m.resources ? std::optional(m.resources->cpu.mean) : std::nullopt),
        num(m.resources ? std::optional(m.resources->cpu.stddev) : std::nullopt),
        num(m.resources ? std::optional(m.resources->rss.mean) : std::nullopt),
        m.resources ? std::to_string(m.resources->peak_rss_bytes) : std::string(),
        num(m.accuracy),
    };
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += ',';
      out += cells[i];
    }
    out += '\n';
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path.string() + "' failed");
}

}  // namespace

void emit(const Report& report, std::span<const RunRecord> records, const std::string& out_dir, EmitFormat format) {
  std::filesystem::path dir(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "cannot create output directory '" + out_dir + "'");
  }
  if (format == EmitFormat::Json) {
    write_file(dir / "report.json", report_to_json(report));
    return;
  }
  std::ostringstream rows;
  write_records_csv(rows, std::vector<RunRecord>(records.begin(), records.end()));
  write_file(dir / "records.csv", rows.str());
  write_file(dir / "summary.csv", summary_to_csv(report));
}

}  // namespace edgellm
