#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <thread>
#include <unistd.h>

#include "edgellm/accuracy.hpp"
#include "edgellm/bench.hpp"
#include "edgellm/error.hpp"
#include "edgellm/gateway.hpp"
#include "edgellm/http_server.hpp"
#include "edgellm/monitor.hpp"
#include "edgellm/record_io.hpp"
#include "edgellm/registry.hpp"
#include "edgellm/util.hpp"

using namespace edgellm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRunFailure = 3;
constexpr int kExitIo = 4;

std::atomic<bool> g_shutdown{false};

void on_signal(int) { g_shutdown.store(true); }

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
      return kExitIo;
    case ErrorCode::ModelRunFailed:
      return kExitRunFailure;
    default:
      return kExitConfig;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("edgellm");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("EDGELLM_LOG")) {
    auto parsed = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only honour "off" when asked for
    if (parsed != spdlog::level::off || std::string_view(level) == "off") {
      spdlog::set_level(parsed);
    } else {
      spdlog::warn("ignoring unknown EDGELLM_LOG level '{}'", level);
    }
  }
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!trim(cur).empty()) out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.emplace_back(trim(cur));
  return out;
}

std::pair<std::string, int> parse_listen(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ConfigSyntax, "--listen expects host:port");
  std::string host = addr.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigSyntax, "--listen has a bad port in '" + addr + "'");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::ConfigSyntax, "--listen port out of range");
  return {host, port};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path.string() + "'");
}

struct ServeOptions {
  std::string config;
  std::string listen = "127.0.0.1:8080";
  std::string records;
  int interval_ms = 500;
};

int run_serve(const ServeOptions& opt) {
  auto registry = std::make_shared<const Registry>(Registry::load_file(opt.config));
  Gateway gateway(registry);
  if (!opt.records.empty()) gateway.attach_sink(std::make_shared<CsvRecordSink>(opt.records));

  ResourceBoard board;
  std::map<int, std::vector<std::string>> models_by_pid;
  for (const ModelSpec& m : registry->models()) {
    models_by_pid[m.backend.pid.value_or(static_cast<int>(getpid()))].push_back(m.name);
  }
  std::vector<std::unique_ptr<Sampler>> samplers;
  for (const auto& [pid, models] : models_by_pid) {
    SampleSink sink;
    sink.on_sample = [&board, models = models](const ResourceSample& s) {
      for (const std::string& m : models) board.publish(m, s);
    };
    sink.on_end = [pid = pid](SamplerEnd end) {
      if (end == SamplerEnd::TargetGone) spdlog::warn("backend process {} is gone; resource gauges frozen", pid);
    };
    try {
      samplers.push_back(std::make_unique<Sampler>(pid, std::chrono::milliseconds(opt.interval_ms), std::move(sink)));
    } catch (const Error& e) {
      spdlog::warn("not sampling pid {}: {}", pid, e.what());
    }
  }

  GatewayServer server(gateway, &board);
  auto [host, port] = parse_listen(opt.listen);
  int bound = server.bind(host, port);
  spdlog::info("serving {} models on {}:{}", registry->models().size(), host, bound);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  while (!g_shutdown.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  spdlog::info("shutting down");
  server.stop();
  for (auto& s : samplers) s->stop();
  return kExitOk;
}

struct BenchRunOptions {
  std::string config;
  std::string dataset;
  std::string models;
  int reps = 3;
  int max_new_tokens = 500;
  int warmup = 1;
  std::string out;
  bool sim_only = false;
  bool no_monitor = false;
  int interval_ms = 500;
  std::string items;
};

int run_bench(const BenchRunOptions& opt) {
  auto registry = std::make_shared<const Registry>(Registry::load_file(opt.config));
  RunConfig cfg;
  cfg.models = opt.models.empty() ? std::vector<std::string>{} : split_csv_list(opt.models);
  if (cfg.models.empty()) {
    for (const ModelSpec& m : registry->models()) cfg.models.push_back(m.name);
  }
  for (const std::string& name : cfg.models) {
    const ModelSpec& m = registry->model(name);
    if (opt.sim_only && m.backend.kind != BackendKind::Simulated) {
      throw Error(ErrorCode::ConfigSyntax, "model '" + name + "' is not simulated and --sim-only is set");
    }
  }
  cfg.dataset_path = opt.dataset;
  cfg.repetitions = opt.reps;
  cfg.max_new_tokens = opt.max_new_tokens;
  cfg.warmup_requests = opt.warmup;
  cfg.monitor_resources = !opt.no_monitor;
  cfg.resource_interval_ms = opt.interval_ms;

  std::vector<Conversation> conversations = load_dataset(opt.dataset);
  DatasetStats stats = dataset_stats(conversations);
  std::vector<MCItem> items;
  if (!opt.items.empty()) items = load_items(opt.items);

  std::filesystem::path out_dir(opt.out);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + opt.out + "': " + ec.message());

  Gateway gateway(registry);
  spdlog::info("replaying {} conversations ({} turns) x {} reps on {} models", stats.conversation_count,
               stats.turn_count, cfg.repetitions, cfg.models.size());
  ReplayResult result = replay(cfg, gateway, conversations);

  std::map<std::string, double> accuracy;
  if (!items.empty()) {
    for (const std::string& name : cfg.models) {
      EvalResult eval = evaluate(items, *gateway.backend_for(name));
      accuracy[name] = eval.accuracy;
      write_text(out_dir / ("accuracy-" + name + ".json"), eval_result_to_json(eval, name));
    }
  }

  ReportInputs in;
  in.records = result.records;
  in.models = cfg.models;
  in.resources = result.resources;
  in.accuracy = accuracy;
  in.dataset = stats;
  in.config = cfg;
  Report report = build_report(in);
  emit(report, result.records, opt.out, EmitFormat::Json);
  emit(report, result.records, opt.out, EmitFormat::Csv);
  spdlog::info("wrote {} records to {}", result.records.size(), opt.out);

  if (!result.failed_models.empty()) {
    std::string names;
    for (const std::string& m : result.failed_models) names += (names.empty() ? "" : ", ") + m;
    spdlog::error("more than half of the requests failed for: {}", names);
    return kExitRunFailure;
  }
  return kExitOk;
}

int run_report(const std::string& records_path, const std::string& out) {
  std::vector<RunRecord> records = read_records_csv_file(records_path);
  ReportInputs in;
  in.records = records;
  Report report = build_report(in);
  emit(report, records, out, EmitFormat::Json);
  emit(report, records, out, EmitFormat::Csv);
  return kExitOk;
}

int run_dataset_stats(const std::string& path) {
  std::vector<Conversation> conversations = load_dataset(path);
  DatasetStats s = dataset_stats(conversations);
  std::size_t min_turns = conversations.front().turns.size();
  for (const Conversation& c : conversations) min_turns = std::min(min_turns, c.turns.size());
  std::cout << "conversations     " << s.conversation_count << "\n"
            << "turns             " << s.turn_count << " (min per conversation " << min_turns << ")\n"
            << "prompt words mean " << format_double(s.prompt_word_mean) << "\n"
            << "prompt words std  " << format_double(s.prompt_word_std) << "\n"
            << "prompt words min  " << s.prompt_word_min << "\n"
            << "prompt words max  " << s.prompt_word_max << "\n"
            << "reference corpus  mean 25, std 30.67, range 1..241 (for comparison only)\n";
  return kExitOk;
}

int run_eval(const std::string& config, const std::string& items_path, const std::string& model,
             const std::string& out) {
  auto registry = std::make_shared<const Registry>(Registry::load_file(config));
  registry->model(model);
  std::vector<MCItem> items = load_items(items_path);
  Gateway gateway(registry);
  EvalResult result = evaluate(items, *gateway.backend_for(model));
  std::string doc = eval_result_to_json(result, model);
  if (out.empty() || out == "-") {
    std::cout << doc;
  } else {
    write_text(out, doc);
  }
  spdlog::info("{}: {}/{} correct ({} unscored)", model, result.correct, result.total, result.unscored.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"edge LLM serving gateway and benchmark harness"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP gateway");
  serve_cmd->add_option("--config", serve.config, "model registry JSON")->required();
  serve_cmd->add_option("--listen", serve.listen, "host:port (port 0 picks a free one)");
  serve_cmd->add_option("--records", serve.records, "append every completion to this records.csv");
  serve_cmd->add_option("--sample-interval-ms", serve.interval_ms, "resource sampling cadence")
      ->check(CLI::Range(50, 60000));

  auto* bench_cmd = app.add_subcommand("bench", "replay benchmarks and reports");
  bench_cmd->require_subcommand(1);
  BenchRunOptions run;
  auto* run_cmd = bench_cmd->add_subcommand("run", "replay the dataset against the selected models");
  run_cmd->add_option("--config", run.config, "model registry JSON")->required();
  run_cmd->add_option("--dataset", run.dataset, "conversation JSON-Lines file")->required();
  run_cmd->add_option("--models", run.models, "comma-separated model names (default: all)");
  run_cmd->add_option("--reps", run.reps, "repetitions")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-new-tokens", run.max_new_tokens, "generation cap per request")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--warmup", run.warmup, "discarded warmup requests per model")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--out", run.out, "output directory")->required();
  run_cmd->add_flag("--sim-only", run.sim_only, "refuse to touch non-simulated backends");
  run_cmd->add_flag("--no-monitor", run.no_monitor, "skip resource sampling");
  run_cmd->add_option("--sample-interval-ms", run.interval_ms, "resource sampling cadence")
      ->check(CLI::Range(50, 60000));
  run_cmd->add_option("--items", run.items, "also score this multiple-choice item file per model");

  std::string report_records, report_out;
  auto* report_cmd = bench_cmd->add_subcommand("report", "rebuild report files from a records.csv");
  report_cmd->add_option("--records", report_records, "records.csv")->required();
  report_cmd->add_option("--out", report_out, "output directory")->required();

  auto* dataset_cmd = app.add_subcommand("dataset", "dataset utilities");
  dataset_cmd->require_subcommand(1);
  std::string stats_path;
  auto* stats_cmd = dataset_cmd->add_subcommand("stats", "prompt length statistics");
  stats_cmd->add_option("file", stats_path, "conversation JSON-Lines file")->required();

  auto* eval_cmd = app.add_subcommand("eval", "accuracy evaluation");
  eval_cmd->require_subcommand(1);
  std::string eval_config = "data/registry.json", eval_items, eval_model, eval_out;
  auto* acc_cmd = eval_cmd->add_subcommand("accuracy", "two-option log-likelihood accuracy");
  acc_cmd->add_option("--config", eval_config, "model registry JSON");
  acc_cmd->add_option("--items", eval_items, "item JSON-Lines file")->required();
  acc_cmd->add_option("--model", eval_model, "model name")->required();
  acc_cmd->add_option("--out", eval_out, "output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*serve_cmd) return run_serve(serve);
    if (*run_cmd) return run_bench(run);
    if (*report_cmd) return run_report(report_records, report_out);
    if (*stats_cmd) return run_dataset_stats(stats_path);
    if (*acc_cmd) return run_eval(eval_config, eval_items, eval_model, eval_out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 1;
  }
  return kExitConfig;
}
