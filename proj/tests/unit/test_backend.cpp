#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <map>
#include <mutex>

#include "aquilt/backend.hpp"
#include "aquilt/error.hpp"
#include "aquilt/synthesis.hpp"
#include "stub_server.hpp"
#include "testsupport.hpp"

using namespace aquilt;
using namespace aquilt::backend;
using nlohmann::json;

namespace {

BackendProfile http_profile(const std::string& endpoint, int max_retries = 3) {
  BackendProfile p;
  p.kind = BackendKind::HttpChat;
  p.endpoint = endpoint;
  p.model_name = "stub-model";
  p.max_retries = max_retries;
  p.backoff_base = std::chrono::milliseconds(1);
  p.backoff_ceiling = std::chrono::milliseconds(4);
  p.timeout = std::chrono::milliseconds(2000);
  return p;
}

CompletionRequest gen_request(const std::string& id, const std::string& u,
                              TaskType task = TaskType::ClosedBookQa,
                              Language lang = Language::En) {
  return {"Generate.\n<text>\n" + u + "\n</text>", id, {"generation", task, lang}};
}

}  // namespace

TEST(Sampling, PaperDefaults) {
  const SamplingParams s;
  EXPECT_DOUBLE_EQ(s.temperature, 0.7);
  EXPECT_DOUBLE_EQ(s.top_p, 0.95);
  EXPECT_EQ(s.max_tokens, 1024);
  const auto p = profile_from_json(json{{"kind", "mock"}}, ".");
  EXPECT_EQ(p.sampling, s);
}

TEST(Sampling, Validation) {
  EXPECT_THROW((SamplingParams{-0.1, 0.9, 10}.validate()), ConfigError);
  EXPECT_THROW((SamplingParams{0.7, 0.0, 10}.validate()), ConfigError);
  EXPECT_THROW((SamplingParams{0.7, 1.1, 10}.validate()), ConfigError);
  EXPECT_THROW((SamplingParams{0.7, 0.9, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((SamplingParams{0.0, 1.0, 1}.validate()));
}

TEST(Profile, FromJson) {
  const auto p = profile_from_json(json::parse(R"({"kind":"http-chat","endpoint":"http://h:1/v1",
    "model":"m","sampling":{"temperature":0.2},"max_retries":5,"timeout_ms":100,
    "price":{"per_input_token":0.1,"per_output_token":0.2},"api_key_env":"K"})"),
                                   ".");
  EXPECT_EQ(p.kind, BackendKind::HttpChat);
  EXPECT_EQ(p.model_name, "m");
  EXPECT_DOUBLE_EQ(p.sampling.temperature, 0.2);
  EXPECT_DOUBLE_EQ(p.sampling.top_p, 0.95);
  EXPECT_EQ(p.max_retries, 5);
  EXPECT_EQ(p.timeout.count(), 100);
  ASSERT_TRUE(p.price);
  EXPECT_DOUBLE_EQ(p.price->per_output_token, 0.2);
  EXPECT_EQ(p.api_key_env, "K");
  EXPECT_EQ(to_json(p).dump().find("api_key"), std::string::npos);
}

TEST(Profile, Invalid) {
  EXPECT_THROW(profile_from_json(json{{"kind", "grpc"}}, "."), ConfigError);
  EXPECT_THROW(profile_from_json(json{{"kind", "http-chat"}}, "."), ConfigError);
  EXPECT_THROW(profile_from_json(json{{"kind", "mock"}, {"fault", "explode"}}, "."), ConfigError);
}

TEST(Backoff, ExponentialAndCapped) {
  BackendProfile p;
  p.backoff_base = std::chrono::milliseconds(100);
  p.backoff_ceiling = std::chrono::milliseconds(1000);
  EXPECT_EQ(backoff_delay(p, 1).count(), 100);
  EXPECT_EQ(backoff_delay(p, 2).count(), 200);
  EXPECT_EQ(backoff_delay(p, 4).count(), 800);
  for (int r = 1; r < 80; ++r) EXPECT_LE(backoff_delay(p, r), p.backoff_ceiling);
}

TEST(Mock, DeterministicPerRequest) {
  MockBackend a(BackendProfile{}), b(BackendProfile{});
  const auto req = gen_request("p-1:distilled", "The harbour authority restored a building.");
  EXPECT_EQ(a.complete(req).text, a.complete(req).text);
  EXPECT_EQ(a.complete(req).text, b.complete(req).text);
  auto other = req;
  other.request_id = "p-2:distilled";
  EXPECT_NE(a.complete(req).text, a.complete(other).text);
}

TEST(Mock, OrderIndependentUnderConcurrency) {
  std::vector<CompletionRequest> reqs;
  for (int i = 0; i < 200; ++i) {
    reqs.push_back(gen_request("p-" + std::to_string(i), "Text number " + std::to_string(i) +
                                                            " about engineers and bridges."));
  }
  MockBackend serial(BackendProfile{});
  std::vector<std::string> expected;
  for (const auto& r : reqs) expected.push_back(serial.complete(r).text);

  MockBackend parallel(BackendProfile{});
  std::vector<std::string> got(reqs.size());
  // Reverse order across 8 threads.
  parallel_for(reqs.size(), 8, [&](std::size_t i) {
    const std::size_t j = reqs.size() - 1 - i;
    got[j] = parallel.complete(reqs[j]).text;
  });
  EXPECT_EQ(got, expected);
  const auto s = serial.usage_report(), p = parallel.usage_report();
  EXPECT_EQ(s.requests, p.requests);
  EXPECT_EQ(s.input_tokens, p.input_tokens);
  EXPECT_EQ(s.output_tokens, p.output_tokens);
}

TEST(Mock, GenerationPayloadParses) {
  MockBackend m(BackendProfile{});
  for (auto task : taskspec::kAllTasks) {
    for (auto lang : taskspec::kLanguages) {
      const auto text = m.complete(gen_request("x", "水质报告显示成本下降 water quality", task, lang)).text;
      EXPECT_NO_THROW(synthesis::parse_generation(text)) << text;
    }
  }
}

TEST(Mock, FixtureRowsWin) {
  aquilt::testing::TempDir dir("fx");
  const auto p = dir.write("f.jsonl",
                           R"({"match":{"task":"closed-book-qa","language":"en"},"body":"{\"question\":\"Q\",\"thinking_steps\":\"T\",\"answer\":\"A\"}"}
)");
  BackendProfile prof;
  prof.fixtures = p;
  auto be = make_backend(prof);
  const auto text = be->complete(gen_request("a", "u")).text;
  const auto parsed = synthesis::parse_generation(text);
  EXPECT_EQ(parsed.question, "Q");
  const auto other = be->complete(gen_request("a", "u", TaskType::Nli)).text;
  EXPECT_NE(other, text);
}

TEST(Mock, FaultModes) {
  BackendProfile prof;
  prof.fault = MockFault::Malformed;
  MockBackend bad(prof);
  EXPECT_ANY_THROW(synthesis::parse_generation(bad.complete(gen_request("a", "u")).text));

  prof.fault = MockFault::MalformedThenValid;
  MockBackend flaky(prof);
  EXPECT_ANY_THROW(synthesis::parse_generation(flaky.complete(gen_request("a", "u")).text));
  EXPECT_NO_THROW(synthesis::parse_generation(flaky.complete(gen_request("a#1", "u")).text));

  prof.fault = MockFault::Fenced;
  MockBackend fenced(prof);
  const auto text = fenced.complete(gen_request("a", "u")).text;
  EXPECT_NE(text.find("```json"), std::string::npos);
  EXPECT_NO_THROW(synthesis::parse_generation(text));
}

TEST(Mock, AttemptSuffix) {
  EXPECT_EQ(attempt_of("p-000001:distilled"), 0);
  EXPECT_EQ(attempt_of("p-000001:distilled#2"), 2);
  EXPECT_EQ(attempt_of("odd#x"), 0);
}

TEST(Usage, FreshReportIsZero) {
  MockBackend m(BackendProfile{});
  const auto r = m.usage_report();
  EXPECT_EQ(r.requests, 0u);
  EXPECT_EQ(r.input_tokens + r.output_tokens + r.failures, 0u);
  EXPECT_EQ(r.estimated_cost, 0.0);
}

TEST(Usage, CostFromPrice) {
  aquilt::testing::TempDir dir("fx");
  const auto p = dir.write("f.jsonl",
                           R"({"match":{},"body":"one two three four five six seven eight nine ten"}
)");
  BackendProfile prof;
  prof.fixtures = p;
  prof.price = Price{0.0, 0.5};
  auto be = make_backend(prof);
  for (int i = 0; i < 3; ++i) be->complete("prompt", "r" + std::to_string(i));
  const auto r = be->usage_report();
  EXPECT_EQ(r.output_tokens, 30u);
  EXPECT_DOUBLE_EQ(r.estimated_cost, 15.0);
}

TEST(Usage, PriceUnsetMeansZeroCost) {
  MockBackend m(BackendProfile{});
  m.complete("a b c", "r");
  EXPECT_EQ(m.usage_report().input_tokens, 3u);
  EXPECT_EQ(m.usage_report().estimated_cost, 0.0);
}

TEST(Backend, EmptyPromptRejected) {
  MockBackend m(BackendProfile{});
  EXPECT_THROW(m.complete("   ", "r"), PreconditionError);
}

TEST(EstimateTokens, Whitespace) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("  a\tb\nc  "), 3u);
}

TEST(Http, WireMapping) {
  aquilt::testing::StubServer stub;
  stub.push({200, R"({"choices":[{"message":{"content":"hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}})"});
  HttpChatBackend be(http_profile(stub.endpoint()));
  const auto r = be.complete("Say hi", "req-1");
  EXPECT_EQ(r.text, "hi");
  EXPECT_EQ(r.usage.input_tokens, 5u);
  EXPECT_EQ(r.usage.output_tokens, 1u);
  const auto body = stub.bodies().at(0);
  EXPECT_EQ(body["model"], "stub-model");
  EXPECT_EQ(body["messages"].size(), 1u);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "Say hi");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.7);
  EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.95);
  EXPECT_EQ(body["max_tokens"], 1024);
}

TEST(Http, RetriesOn429ThenSucceeds) {
  aquilt::testing::StubServer stub;
  stub.push({429, ""});
  stub.push({429, ""});
  HttpChatBackend be(http_profile(stub.endpoint(), 3));
  EXPECT_NO_THROW(be.complete("p", "r"));
  EXPECT_EQ(be.usage_report().failures, 2u);
  EXPECT_EQ(stub.hits(), 3);
}

TEST(Http, GivesUpAfterMaxRetries) {
  aquilt::testing::StubServer stub;
  for (int i = 0; i < 10; ++i) stub.push({503, ""});
  HttpChatBackend be(http_profile(stub.endpoint(), 2));
  EXPECT_THROW(be.complete("p", "r"), TransportError);
  EXPECT_EQ(stub.hits(), 3);
  EXPECT_EQ(be.usage_report().failures, 3u);
}

TEST(Http, NonJsonBodyIsProtocolError) {
  aquilt::testing::StubServer stub;
  stub.push({200, "<html>oops</html>"});
  HttpChatBackend be(http_profile(stub.endpoint()));
  EXPECT_THROW(be.complete("p", "r"), ProtocolError);
  EXPECT_EQ(stub.hits(), 1);
}

TEST(Http, ClientErrorIsProtocolError) {
  aquilt::testing::StubServer stub;
  stub.push({400, ""});
  HttpChatBackend be(http_profile(stub.endpoint()));
  EXPECT_THROW(be.complete("p", "r"), ProtocolError);
}

TEST(Http, TimeoutError) {
  aquilt::testing::StubServer stub;
  stub.push({200, "", 600});
  stub.push({200, "", 600});
  auto prof = http_profile(stub.endpoint(), 1);
  prof.timeout = std::chrono::milliseconds(150);
  HttpChatBackend be(prof);
  EXPECT_THROW(be.complete("p", "r"), TimeoutError);
}

TEST(Http, ConnectionRefusedIsTransportError) {
  auto prof = http_profile("http://127.0.0.1:1/v1", 1);
  HttpChatBackend be(prof);
  EXPECT_THROW(be.complete("p", "r"), TransportError);
}

TEST(Http, BearerFromEnvironment) {
  aquilt::testing::StubServer stub;
  ::setenv("AQUILT_TEST_KEY", "sekret", 1);
  auto prof = http_profile(stub.endpoint());
  prof.api_key_env = "AQUILT_TEST_KEY";
  HttpChatBackend be(prof);
  be.complete("p", "r");
  EXPECT_EQ(stub.auth_headers().at(0), "Bearer sekret");
  ::unsetenv("AQUILT_TEST_KEY");
}

TEST(Http, ConcurrentUsageMatchesLedger) {
  aquilt::testing::StubServer stub;
  auto prof = http_profile(stub.endpoint());
  HttpChatBackend be(prof);
  parallel_for(40, 6, [&](std::size_t i) { be.complete("p", "r" + std::to_string(i)); });
  const auto u = be.usage_report();
  EXPECT_EQ(u.requests, 40u);
  EXPECT_EQ(u.input_tokens, stub.prompt_tokens());
  EXPECT_EQ(u.output_tokens, stub.completion_tokens());
}
