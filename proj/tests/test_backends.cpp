#include <doctest.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <thread>

#include "edgellm/backends.hpp"
#include "edgellm/error.hpp"
#include "edgellm/util.hpp"
#include "support.hpp"

using namespace edgellm;

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

SimConfig sim(double prefill, double decode, double jitter = 0.0, std::uint64_t seed = 42) {
  SimConfig c;
  c.prefill_ms_per_token = prefill;
  c.decode_ms_per_token = decode;
  c.jitter_sigma_ms = jitter;
  c.seed = seed;
  return c;
}

std::string words(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

bool within_ulps(double a, double b, int ulps) {
  double x = a;
  for (int i = 0; i < ulps && x != b; ++i) x = std::nextafter(x, b);
  return x == b;
}

}  // namespace

TEST_CASE("simulated backend emits deterministic tokens and nominal timings") {
  SimulatedBackend b(sim(82.02, 238.93));
  std::vector<std::string> streamed;
  BackendCompletion c = b.complete("one two three four", 5, [&](std::string_view f) { streamed.emplace_back(f); });
  CHECK(c.tokens == std::vector<std::string>{"tok0", " tok1", " tok2", " tok3", " tok4"});
  CHECK(streamed == c.tokens);
  CHECK(c.finish_reason == FinishReason::MaxTokens);
  REQUIRE(c.timings.has_value());
  CHECK(c.timings->prompt_tokens == 4);
  CHECK(c.timings->generated_tokens == 5);
  CHECK(c.timings->prompt_ms == doctest::Approx(4 * 82.02));
  CHECK(c.timings->generation_ms == doctest::Approx(5 * 238.93));
  CHECK(code_of([&] { b.complete("x", 0); }) == ErrorCode::InvalidRequest);
}

TEST_CASE("zero-jitter per-token times recover the configured rates") {
  // Division of P*r by P can land one ulp away from r; two ulps is the bound.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> rate(0.5, 600.0);
  std::uniform_int_distribution<int> n(1, 300);
  for (int i = 0; i < 300; ++i) {
    double p = rate(rng), d = rate(rng);
    SimulatedBackend b(sim(p, d));
    int prompt = n(rng), gen = n(rng);
    BackendCompletion c = b.complete(words(prompt), gen);
    REQUIRE(within_ulps(c.timings->prompt_ms / static_cast<double>(prompt), p, 2));
    REQUIRE(within_ulps(c.timings->generation_ms / static_cast<double>(gen), d, 2));
  }
}

TEST_CASE("same seed gives bit-identical runs, jitter stays non-negative") {
  auto run = [](std::uint64_t seed) {
    SimulatedBackend b(sim(0.5, 1.0, 5.0, seed));
    std::vector<BackendCompletion> out;
    for (int i = 0; i < 5; ++i) out.push_back(b.complete(words(20 + i), 30));
    return out;
  };
  auto a = run(7), again = run(7), other = run(8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == again[i].tokens);
    CHECK(*a[i].timings == *again[i].timings);
    CHECK(a[i].timings->prompt_ms >= 0.0);
    CHECK(a[i].timings->generation_ms >= 0.0);
  }
  CHECK_FALSE(*a[0].timings == *other[0].timings);
  // successive calls on one instance draw different jitter
  CHECK_FALSE(a[0].timings->generation_ms == a[1].timings->generation_ms);
}

TEST_CASE("stop_after_tokens ends the completion early") {
  SimConfig c = sim(1, 1);
  c.stop_after_tokens = 3;
  SimulatedBackend b(c);
  BackendCompletion early = b.complete("hi", 10);
  CHECK(early.tokens.size() == 3);
  CHECK(early.finish_reason == FinishReason::Stop);
  BackendCompletion capped = b.complete("hi", 2);
  CHECK(capped.tokens.size() == 2);
  CHECK(capped.finish_reason == FinishReason::MaxTokens);
}

TEST_CASE("wall clock mode paces tokens and honours cancellation") {
  SimConfig c = sim(2.0, 4.0);
  c.clock = SimClock::Wall;
  SimulatedBackend b(c);
  auto t0 = std::chrono::steady_clock::now();
  BackendCompletion done = b.complete(words(10), 20);
  double elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  double nominal = 10 * 2.0 + 20 * 4.0;
  CHECK(elapsed_ms >= nominal * 0.8);
  CHECK(done.tokens.size() == 20);

  std::stop_source source;
  std::thread canceller([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    source.request_stop();
  });
  CHECK(code_of([&] { b.complete(words(10), 10000, {}, source.get_token()); }) == ErrorCode::Cancelled);
  canceller.join();
}

TEST_CASE("default simulated scoring is additive over word concatenation") {
  SimulatedBackend b(sim(1, 1));
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> n(1, 12);
  for (int i = 0; i < 200; ++i) {
    std::string ctx = words(n(rng)), a = words(n(rng)), c = words(n(rng));
    double joint = b.score({ctx, a + " " + c});
    REQUIRE(joint == b.score({ctx, a}) + b.score({ctx, c}));
  }
  SimConfig table = sim(1, 1);
  table.score_table[{fnv1a64("The cat "), "sat down."}] = -0.25;
  SimulatedBackend t(table);
  CHECK(t.score({"The cat ", "sat down."}) == -0.25);
  CHECK(t.score({"A cat ", "sat down."}) == -2.0);
  CHECK(code_of([&] { t.score({"ctx", ""}); }) == ErrorCode::InvalidRequest);
}

TEST_CASE("timings block parsing") {
  auto t = parse_timings_block(R"({"prompt_n":12,"prompt_ms":345.5,"predicted_n":3,"predicted_ms":61.25,
                                   "prompt_per_token_ms":28.79})");
  REQUIRE(t.has_value());
  CHECK(*t == BackendTimings{12, 345.5, 3, 61.25});
  CHECK_FALSE(parse_timings_block(R"({"prompt_n":12,"prompt_ms":345.5,"predicted_n":3})").has_value());
  CHECK_FALSE(parse_timings_block(R"({"prompt_n":-1,"prompt_ms":1,"predicted_n":3,"predicted_ms":1})").has_value());
  CHECK_FALSE(parse_timings_block(R"({"prompt_n":1.5,"prompt_ms":1,"predicted_n":3,"predicted_ms":1})").has_value());
  CHECK_FALSE(parse_timings_block(R"({"prompt_n":"1","prompt_ms":1,"predicted_n":3,"predicted_ms":1})").has_value());
  CHECK_FALSE(parse_timings_block("[]").has_value());
}

TEST_CASE("http backend relays a streamed llama.cpp completion") {
  testsupport::StubLlama stub;
  HttpCompletionBackend b(stub.url(), std::chrono::seconds(5));
  std::vector<std::string> streamed;
  BackendCompletion c = b.complete("user: hi\nassistant:", 8, [&](std::string_view f) { streamed.emplace_back(f); });
  CHECK(c.tokens == std::vector<std::string>{"Hello", " there", ","});
  CHECK(streamed == c.tokens);
  REQUIRE(c.timings.has_value());
  CHECK(*c.timings == BackendTimings{12, 345.5, 3, 61.25});
  CHECK_FALSE(c.protocol_error.has_value());
  CHECK(c.finish_reason == FinishReason::Stop);
  CHECK(stub.last_completion_body["n_predict"] == 8);
  CHECK(stub.last_completion_body["stream"] == true);
  CHECK(stub.last_completion_body["prompt"] == "user: hi\nassistant:");
}

TEST_CASE("http backend accepts a plain JSON completion body") {
  testsupport::StubLlama::Behavior plain;
  plain.stream = false;
  plain.stopped_limit = true;
  testsupport::StubLlama stub(plain);
  BackendCompletion c = HttpCompletionBackend(stub.url()).complete("p", 3);
  CHECK(c.tokens == std::vector<std::string>{"Hello there,"});
  CHECK(c.finish_reason == FinishReason::MaxTokens);
  CHECK(c.timings.has_value());
}

TEST_CASE("http backend treats a missing timings block as a soft protocol error") {
  testsupport::StubLlama::Behavior b;
  b.timings = std::nullopt;
  testsupport::StubLlama stub(b);
  BackendCompletion c = HttpCompletionBackend(stub.url()).complete("p", 8);
  CHECK(c.tokens.size() == 3);
  CHECK_FALSE(c.timings.has_value());
  CHECK(c.protocol_error.has_value());

  testsupport::StubLlama::Behavior bad;
  bad.timings = nlohmann::json{{"prompt_n", "twelve"}};
  testsupport::StubLlama stub2(bad);
  BackendCompletion c2 = HttpCompletionBackend(stub2.url()).complete("p", 8);
  CHECK_FALSE(c2.timings.has_value());
  CHECK(c2.protocol_error.has_value());
}

TEST_CASE("http backend error mapping") {
  testsupport::StubLlama::Behavior garbage;
  garbage.garbage_chunk = true;
  testsupport::StubLlama stub(garbage);
  CHECK(code_of([&] { HttpCompletionBackend(stub.url()).complete("p", 8); }) == ErrorCode::ProtocolError);

  testsupport::StubLlama::Behavior failing;
  failing.completion_status = 503;
  testsupport::StubLlama stub503(failing);
  CHECK(code_of([&] { HttpCompletionBackend(stub503.url()).complete("p", 8); }) == ErrorCode::BackendUnavailable);

  std::string dead = "http://127.0.0.1:" + std::to_string(testsupport::unused_port());
  HttpCompletionBackend nobody(dead, std::chrono::seconds(2));
  CHECK(code_of([&] { nobody.complete("p", 8); }) == ErrorCode::BackendUnavailable);
  CHECK_FALSE(nobody.probe().alive);
}

TEST_CASE("http backend probe reports the served model") {
  testsupport::StubLlama stub;
  ProbeResult p = HttpCompletionBackend(stub.url()).probe();
  CHECK(p.alive);
  CHECK(p.reported_model == std::optional<std::string>("stub-model.gguf"));
}

TEST_CASE("http scoring sums log-probabilities of continuation tokens only") {
  testsupport::StubLlama::Behavior b;
  b.logprob_pieces = {{"The", 0.0}, {" cat", -3.0}, {" sat", -1.5}, {" down", -0.5}};
  testsupport::StubLlama stub(b);
  HttpCompletionBackend backend(stub.url());
  CHECK(backend.score({"The cat", " sat down"}) == doctest::Approx(-2.0));
  CHECK(backend.score({"The", " cat sat down"}) == doctest::Approx(-5.0));

  testsupport::StubLlama::Behavior none;
  none.logprobs_supported = false;
  testsupport::StubLlama stub404(none);
  CHECK(code_of([&] { HttpCompletionBackend(stub404.url()).score({"a", " b"}); }) == ErrorCode::CapabilityMissing);
}

TEST_CASE("make_backend picks the adapter by kind") {
  BackendEndpoint sim_ep;
  sim_ep.sim = sim(1, 1);
  CHECK(make_backend(sim_ep)->kind() == BackendKind::Simulated);
  BackendEndpoint http_ep;
  http_ep.kind = BackendKind::HttpCompletion;
  http_ep.url = "http://127.0.0.1:1";
  CHECK(make_backend(http_ep)->kind() == BackendKind::HttpCompletion);
  BackendEndpoint broken;
  CHECK(code_of([&] { make_backend(broken); }) == ErrorCode::IncompleteEndpoint);
}
