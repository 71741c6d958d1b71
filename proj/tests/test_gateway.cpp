#include <doctest.h>

#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "edgellm/error.hpp"
#include "edgellm/gateway.hpp"
#include "edgellm/http_server.hpp"
#include "edgellm/record_io.hpp"
#include "support.hpp"

using namespace edgellm;
using nlohmann::json;

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

ChatRequest ask(const std::string& model, const std::string& text, int max_new = 6) {
  ChatRequest r;
  r.model = model;
  r.messages = {{Role::User, text}};
  r.max_new_tokens = max_new;
  return r;
}

struct SseEvent {
  std::string event;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& body) {
  std::vector<SseEvent> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t end = body.find("\n\n", pos);
    if (end == std::string::npos) end = body.size();
    std::string block = body.substr(pos, end - pos);
    pos = end + 2;
    SseEvent ev;
    std::istringstream lines(block);
    std::string line, data;
    while (std::getline(lines, line)) {
      if (line.rfind("event: ", 0) == 0) ev.event = line.substr(7);
      if (line.rfind("data: ", 0) == 0) data += line.substr(6);
    }
    if (ev.event.empty()) continue;
    ev.data = json::parse(data);
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace

TEST_CASE("build_prompt renders both templates") {
  std::vector<Message> h = {{Role::System, "be brief"}, {Role::User, "hi there"}, {Role::Assistant, "hello"},
                            {Role::User, "why"}};
  PromptBuild g = build_prompt(h, ChatTemplate::Generic);
  CHECK(g.text == "system: be brief\nuser: hi there\nassistant: hello\nuser: why\nassistant:");
  CHECK(g.token_estimate == 11);
  PromptBuild p = build_prompt(h, ChatTemplate::Passthrough);
  CHECK(p.text == "be brief\nhi there\nhello\nwhy");
  CHECK(p.token_estimate == 6);
}

TEST_CASE("derive_phase_timing prefers backend timings and falls back to TTFT") {
  BackendTimings bt{12, 345.5, 3, 61.25};
  PhaseTiming relayed = derive_phase_timing(0, 5'000'000, 9'000'000, bt, 3, 99);
  CHECK(relayed == make_phase_timing(12, 345.5, 3, 61.25));

  PhaseTiming wall = derive_phase_timing(1'000'000, 251'000'000, 1'251'000'000, std::nullopt, 4, 10);
  CHECK(wall.prompt_tokens == 10);
  CHECK(wall.prefill_ms == doctest::Approx(250.0));
  CHECK(wall.decode_ms == doctest::Approx(1000.0));
  CHECK(wall.total_ms == wall.prefill_ms + wall.decode_ms);

  CHECK(code_of([] { derive_phase_timing(10, 5, 20, std::nullopt, 1, 1); }) == ErrorCode::ClockSkew);
  CHECK(code_of([] { derive_phase_timing(0, 20, 10, std::nullopt, 1, 1); }) == ErrorCode::ClockSkew);
}

TEST_CASE("request validation and routing errors") {
  Gateway gw(testsupport::registry_of({testsupport::sim_model("Gemma", 2.61, 82.02, 238.93)}));
  CHECK(code_of([&] { gw.handle_chat(ask("gemma", "hi")); }) == ErrorCode::ModelNotFound);
  CHECK(code_of([&] { gw.handle_chat(ask("Gemma", "hi", 0)); }) == ErrorCode::InvalidRequest);
  ChatRequest empty;
  empty.model = "Gemma";
  CHECK(code_of([&] { gw.handle_chat(empty); }) == ErrorCode::InvalidRequest);
  ChatRequest trailing = ask("Gemma", "hi");
  trailing.messages.push_back({Role::Assistant, "hello"});
  CHECK(code_of([&] { gw.handle_chat(trailing); }) == ErrorCode::InvalidRequest);

  ModelSpec tiny = testsupport::sim_model("Tiny", 1.0, 1, 1);
  tiny.max_context_tokens = 4;
  Gateway small(testsupport::registry_of({tiny}));
  CHECK(code_of([&] { small.handle_chat(ask("Tiny", "one two three four")); }) == ErrorCode::ContextOverflow);
  CHECK(small.handle_chat(ask("Tiny", "one two")).timing.prompt_tokens == 4);
}

TEST_CASE("simulated completions re-emit tokens in order with exact totals") {
  Gateway gw(testsupport::registry_of({testsupport::sim_model("Zephyr", 2.8, 102.62, 233.88)}));
  std::vector<TokenEvent> events;
  CompletionResult r = gw.handle_chat(ask("Zephyr", "tell me a story", 5), [&](const TokenEvent& e) {
    events.push_back(e);
  });
  REQUIRE(events.size() == 5);
  std::string joined;
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(events[i].index == static_cast<std::int64_t>(i));
    CHECK(events[i].text == (i == 0 ? "tok0" : " tok" + std::to_string(i)));
    if (i > 0) CHECK(events[i].at_ns >= events[i - 1].at_ns);
    joined += events[i].text;
  }
  CHECK(r.text == joined);
  CHECK(r.timing_from_backend);
  CHECK(r.timing.total_ms == r.timing.prefill_ms + r.timing.decode_ms);
  CHECK(r.timing.prompt_tokens == 6);  // "user: tell me a story\nassistant:"

  // injected clock: identical requests give bit-identical timing
  CompletionResult again = gw.handle_chat(ask("Zephyr", "tell me a story", 5));
  CHECK(again.timing == r.timing);
}

TEST_CASE("stub llama.cpp timings are relayed verbatim") {
  testsupport::StubLlama stub;
  ModelSpec remote;
  remote.name = "Remote";
  remote.params_billions = 3.21;
  remote.size_class = SizeClass::Medium;
  remote.quantization = "Q4_K_M";
  remote.backend.kind = BackendKind::HttpCompletion;
  remote.backend.url = stub.url();
  remote.max_context_tokens = 4096;
  Gateway gw(testsupport::registry_of({remote}));
  CompletionResult r = gw.handle_chat(ask("Remote", "hi", 8));
  CHECK(r.text == "Hello there,");
  CHECK(r.timing_from_backend);
  CHECK(r.timing.prompt_tokens == 12);
  CHECK(r.timing.prefill_ms == 345.5);
  CHECK(r.timing.generated_tokens == 3);
  CHECK(r.timing.decode_ms == 61.25);
  CHECK(r.timing.total_ms == 345.5 + 61.25);

  testsupport::StubLlama::Behavior untimed;
  untimed.timings = std::nullopt;
  testsupport::StubLlama stub2(untimed);
  remote.backend.url = stub2.url();
  gw.reload(testsupport::registry_of({remote}));
  CompletionResult fallback = gw.handle_chat(ask("Remote", "hi", 8));
  CHECK_FALSE(fallback.timing_from_backend);
  CHECK(fallback.timing.generated_tokens == 3);
  CHECK(fallback.timing.total_ms == fallback.timing.prefill_ms + fallback.timing.decode_ms);
}

TEST_CASE("backend failures come back as BackendError results") {
  ModelSpec dead;
  dead.name = "Dead";
  dead.params_billions = 7.0;
  dead.size_class = SizeClass::Large;
  dead.quantization = "Q4_K_M";
  dead.backend.kind = BackendKind::HttpCompletion;
  dead.backend.url = "http://127.0.0.1:" + std::to_string(testsupport::unused_port());
  dead.max_context_tokens = 100;
  Gateway gw(testsupport::registry_of({dead}));
  auto sink = std::make_shared<MemoryRecordSink>();
  gw.attach_sink(sink);
  CompletionResult r = gw.handle_chat(ask("Dead", "hello"));
  CHECK(r.finish_reason == FinishReason::BackendError);
  CHECK(r.error.has_value());
  REQUIRE(sink->records().size() == 1);
  CHECK_FALSE(sink->records()[0].ok());
  CHECK(gw.live_stats()["Dead"].requests_total == 1);
}

TEST_CASE("record sinks receive tagged records") {
  Gateway gw(testsupport::registry_of({testsupport::sim_model("Yi", 1.48, 13.79, 95.0)}));
  auto dir = testsupport::scratch_dir("sink");
  auto csv = std::make_shared<CsvRecordSink>((dir / "records.csv").string());
  gw.attach_sink(csv);
  ChatRequest req = ask("Yi", "hello world");
  req.tag = RunTag{"conv-9", 2, 3};
  gw.handle_chat(req);
  gw.handle_chat(req);
  auto records = read_records_csv_file((dir / "records.csv").string());
  REQUIRE(records.size() == 2);
  CHECK(records[0].conversation_id == "conv-9");
  CHECK(records[0].turn_index == 2);
  CHECK(records[0].repetition == 3);
  CHECK(records[0].timing == records[1].timing);
}

TEST_CASE("parse_chat_request rejects malformed bodies") {
  CHECK(code_of([] { parse_chat_request("nope"); }) == ErrorCode::InvalidRequest);
  CHECK(code_of([] { parse_chat_request(R"({"messages":[]})"); }) == ErrorCode::InvalidRequest);
  CHECK(code_of([] { parse_chat_request(R"({"model":"a","messages":[{"role":"robot","text":"x"}]})"); }) ==
        ErrorCode::InvalidRequest);
  CHECK(code_of([] {
          parse_chat_request(R"({"model":"a","messages":[{"role":"user","text":"x"}],"max_new_tokens":0})");
        }) == ErrorCode::InvalidRequest);
  ChatRequest ok = parse_chat_request(
      R"({"model":"a","messages":[{"role":"user","text":"x"}],"max_new_tokens":7,"stream":true})");
  CHECK(ok.max_new_tokens == 7);
  CHECK(ok.stream);
}

TEST_CASE("HTTP API conformance") {
  Gateway gw(testsupport::registry_of({testsupport::sim_model("Gemma", 2.61, 82.02, 238.93),
                                       testsupport::sim_model("Llama2", 6.74, 252.64, 420.0)}));
  ResourceBoard board;
  GatewayServer server(gw, &board);
  int port = server.bind("127.0.0.1", 0);
  server.start();
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body) == json{{"status", "ok"}});

  auto models = cli.Get("/v1/models");
  REQUIRE(models);
  json m = json::parse(models->body);
  REQUIRE(m["models"].size() == 2);
  CHECK(m["models"][0]["name"] == "Gemma");
  CHECK(m["models"][0]["size_class"] == "Small");
  CHECK(m["models"][1]["size_class"] == "Large");

  auto unknown = cli.Post("/v1/chat", R"({"model":"GPT","messages":[{"role":"user","text":"hi"}]})",
                          "application/json");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
  auto unknown_stream = cli.Post(
      "/v1/chat", R"({"model":"GPT","messages":[{"role":"user","text":"hi"}],"stream":true})", "application/json");
  REQUIRE(unknown_stream);
  CHECK(unknown_stream->status == 404);
  auto bad = cli.Post("/v1/chat", "{", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  std::string body = R"({"model":"Gemma","messages":[{"role":"user","text":"name three rivers"}],"max_new_tokens":7)";
  auto plain = cli.Post("/v1/chat", body + "}", "application/json");
  REQUIRE(plain);
  CHECK(plain->status == 200);
  json done_plain = json::parse(plain->body);
  CHECK(done_plain["timing_source"] == "backend");
  json tp = done_plain["timing"];
  CHECK(tp["total_ms"].get<double>() == tp["prefill_ms"].get<double>() + tp["decode_ms"].get<double>());

  auto streamed = cli.Post("/v1/chat", body + R"(,"stream":true})", "application/json");
  REQUIRE(streamed);
  CHECK(streamed->status == 200);
  CHECK(streamed->get_header_value("Content-Type").find("text/event-stream") != std::string::npos);
  auto events = parse_sse(streamed->body);
  REQUIRE(events.size() == 8);
  std::string text;
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    CHECK(events[i].event == "token");
    CHECK(events[i].data["index"] == i);
    text += events[i].data["text"].get<std::string>();
  }
  CHECK(events.back().event == "done");
  CHECK(events.back().data["text"] == text);
  CHECK(text == done_plain["text"]);
  CHECK(events.back().data["timing"] == done_plain["timing"]);

  board.publish("Gemma", ResourceSample{1, 0.25, 1.0, 123456, false});
  auto metrics = cli.Get("/metrics");
  REQUIRE(metrics);
  CHECK(metrics->get_header_value("Content-Type").find("version=0.0.4") != std::string::npos);
  CHECK(metrics->body.find("edgellm_requests_total{backend_kind=\"sim\",model=\"Gemma\"} 2\n") != std::string::npos);
  CHECK(metrics->body.find("edgellm_rss_bytes{backend_kind=\"sim\",model=\"Gemma\"} 123456\n") != std::string::npos);
  CHECK(metrics->body.find("edgellm_cpu_total_fraction{backend_kind=\"sim\",model=\"Gemma\"} 0.25\n") !=
        std::string::npos);
  CHECK(metrics->body.find("edgellm_rss_bytes{backend_kind=\"sim\",model=\"Llama2\"}") == std::string::npos);

  server.stop();
}
