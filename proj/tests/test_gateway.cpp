#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kamac/gateway.hpp"

using namespace kamac;

namespace {

ChatRequest make_request(Phase phase, int round = 1, const std::string& role = "internist",
                         const std::string& text = "hello") {
  ChatRequest req;
  req.model_id = "test-model";
  req.messages = {{Speaker::user, "", round, text}};
  req.tag = {"case-1", role, phase, round, 0};
  return req;
}

}  // namespace

TEST_CASE("request validation") {
  ChatRequest empty;
  CHECK_THROWS_AS(empty.validate(), ValidationError);

  ChatRequest bad = make_request(Phase::assess);
  bad.messages.push_back({Speaker::system, "", 0, "late system"});
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  ChatRequest good;
  good.messages = {{Speaker::system, "", 0, "sys"}, {Speaker::user, "", 0, "hi"}};
  CHECK_NOTHROW(good.validate());
}

TEST_CASE("request digest tracks content") {
  auto a = make_request(Phase::assess);
  auto b = make_request(Phase::assess);
  CHECK(request_digest(a) == request_digest(b));
  b.messages[0].content = "changed";
  CHECK(request_digest(a) != request_digest(b));
}

TEST_CASE("scripted backend matches phase, round, and role in order") {
  ScriptedBackend backend({
      {Phase::assess, 0, std::string("Internist"), "first reply", 1, 0},
      {Phase::assess, std::nullopt, std::nullopt, "generic assess", -1, 0},
      {std::nullopt, std::nullopt, std::nullopt, "catch-all", -1, 0},
  });
  auto req0 = make_request(Phase::assess, 0, "internist");
  CHECK(backend.chat(req0).content == "first reply");
  // entry exhausted (times=1) -> falls through to the generic one
  CHECK(backend.chat(req0).content == "generic assess");
  CHECK(backend.chat(make_request(Phase::moderate, 3, "")).content == "catch-all");
  CHECK(backend.live_calls() == 3);
}

TEST_CASE("scripted backend synthesizes token counts") {
  ScriptedBackend backend({{std::nullopt, std::nullopt, std::nullopt, "12345", -1, 0}});
  auto reply = backend.chat(make_request(Phase::assess, 1, "x", "abcdefgh"));
  CHECK(reply.completion_tokens == 2);  // ceil(5/4)
  CHECK(reply.prompt_tokens == 2);      // ceil(8/4)
  CHECK(reply.latency_s == 0.0);
}

TEST_CASE("unscripted calls fail loudly") {
  ScriptedBackend backend({{Phase::moderate, std::nullopt, std::nullopt, "x", -1, 0}});
  CHECK_THROWS_WITH_AS(backend.chat(make_request(Phase::assess)),
                       doctest::Contains("unscripted"), GatewayError);
}

TEST_CASE("retry backoff follows the schedule and stops at max attempts") {
  ScriptedBackend flaky({{std::nullopt, std::nullopt, std::nullopt, "ok", -1, 2}});
  FakeClock clock;
  RetryingBackend retrying(flaky, RetryPolicy{3, {0.1, 0.2}}, clock);
  auto reply = retrying.chat(make_request(Phase::assess));
  CHECK(reply.content == "ok");
  CHECK(flaky.live_calls() == 3);  // two failures, one success
  REQUIRE(clock.sleeps.size() == 2);
  CHECK(clock.sleeps[0] == doctest::Approx(0.1));
  CHECK(clock.sleeps[1] == doctest::Approx(0.2));
}

TEST_CASE("backoff schedule clamps to its last entry") {
  ScriptedBackend flaky({{std::nullopt, std::nullopt, std::nullopt, "ok", -1, 4}});
  FakeClock clock;
  RetryingBackend retrying(flaky, RetryPolicy{5, {0.1, 0.2}}, clock);
  CHECK(retrying.chat(make_request(Phase::assess)).content == "ok");
  REQUIRE(clock.sleeps.size() == 4);
  CHECK(clock.sleeps[2] == doctest::Approx(0.2));
  CHECK(clock.sleeps[3] == doctest::Approx(0.2));
}

TEST_CASE("retries exhausted surfaces the last cause") {
  ScriptedBackend dead({{std::nullopt, std::nullopt, std::nullopt, "never", -1, 100}});
  FakeClock clock;
  RetryingBackend retrying(dead, RetryPolicy{3, {0.0}}, clock);
  CHECK_THROWS_WITH_AS(retrying.chat(make_request(Phase::assess)),
                       doctest::Contains("3 attempts"), GatewayError);
}

TEST_CASE("max_attempts=1 means no retry") {
  ScriptedBackend flaky({{std::nullopt, std::nullopt, std::nullopt, "ok", -1, 1}});
  FakeClock clock;
  RetryingBackend retrying(flaky, RetryPolicy{1, {0.5}}, clock);
  CHECK_THROWS_AS(retrying.chat(make_request(Phase::assess)), GatewayError);
  CHECK(clock.sleeps.empty());
  CHECK(flaky.live_calls() == 1);
}

TEST_CASE("caching gateway is write-through and idempotent") {
  ScriptedBackend backend({{std::nullopt, std::nullopt, std::nullopt, "reply", -1, 0}});
  std::vector<ReplyRecord> persisted;
  int persist_calls = 0;
  CachingGateway gateway(backend, {}, [&](const std::vector<ReplyRecord>& r) {
    persisted = r;
    ++persist_calls;
  });

  auto req = make_request(Phase::assess);
  auto first = gateway.chat(req);
  CHECK(first.content == "reply");
  CHECK(persist_calls == 1);
  REQUIRE(persisted.size() == 1);
  CHECK(persisted[0].key == req.tag);

  // identical tag -> cache hit, no inner call, no persist
  auto second = gateway.chat(req);
  CHECK(second.content == first.content);
  CHECK(backend.live_calls() == 1);
  CHECK(persist_calls == 1);
  CHECK(gateway.logical_calls() == 2);
  CHECK(gateway.cache_hits() == 1);
}

TEST_CASE("preloaded records replay without touching the inner backend") {
  ScriptedBackend backend({});  // would throw if ever reached
  auto req = make_request(Phase::update, 2, "cardiologist");
  std::vector<ReplyRecord> preloaded = {
      {req.tag, request_digest(req), {"cached answer", 10, 5, 1.5}}};
  CachingGateway gateway(backend, preloaded, nullptr);
  auto reply = gateway.chat(req);
  CHECK(reply.content == "cached answer");
  CHECK(reply.latency_s == doctest::Approx(1.5));
  CHECK(backend.live_calls() == 0);
  CHECK(gateway.warnings().empty());
}

TEST_CASE("digest drift on replay warns but still replays") {
  ScriptedBackend backend({});
  auto req = make_request(Phase::update, 2, "cardiologist");
  std::vector<ReplyRecord> preloaded = {{req.tag, "stale-digest", {"old reply", 1, 1, 0}}};
  CachingGateway gateway(backend, preloaded, nullptr);
  CHECK(gateway.chat(req).content == "old reply");
  REQUIRE(gateway.warnings().size() == 1);
  CHECK(gateway.warnings()[0].find("drift") != std::string::npos);
  CHECK(backend.live_calls() == 0);
}

TEST_CASE("cache keys and reply records round-trip through json") {
  ReplyRecord rec{{"case-9", "pathologist", Phase::kg_detect, 2, 7},
                  "abc123",
                  {"content here", 42, 17, 0.25}};
  auto rec2 = nlohmann::json(rec).get<ReplyRecord>();
  CHECK(rec2.key == rec.key);
  CHECK(rec2.digest == rec.digest);
  CHECK(rec2.reply.content == rec.reply.content);
  CHECK(rec2.reply.prompt_tokens == 42);
  CHECK(rec2.reply.latency_s == doctest::Approx(0.25));
}

TEST_CASE("phase names round-trip") {
  for (Phase p : {Phase::recruit_initial, Phase::assess, Phase::interact, Phase::kg_detect,
                  Phase::recruit_more, Phase::update, Phase::moderate})
    CHECK(phase_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(phase_from_string("bogus"), InputError);
}

TEST_CASE("script entries load from json") {
  auto entries = ScriptedBackend::entries_from_json(nlohmann::json::parse(R"([
    {"phase": "assess", "round": 1, "role": "Internist", "content": "hi", "times": 2},
    {"content": "fallback", "times": -1, "fail_first": 1}
  ])"));
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].phase == Phase::assess);
  CHECK(entries[0].role == "internist");  // normalized
  CHECK(entries[0].times == 2);
  CHECK(entries[1].fail_first == 1);
  CHECK_FALSE(entries[1].phase.has_value());
}
