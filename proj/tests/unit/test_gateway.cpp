#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "scihier/gateway.hpp"
#include "scihier/mock_provider.hpp"
#include "support.hpp"

using namespace scihier;
using scihier::testing::mock_gateway;
using nlohmann::json;

namespace {

class FlakyProvider : public ChatProvider {
public:
  explicit FlakyProvider(int failures) : failures_(failures) {}
  std::string name() const override { return "flaky"; }
  std::string complete(const ChatRequest& r) override {
    if (failures_-- > 0) throw TransientError("503");
    return "ok:" + r.prompt;
  }

private:
  int failures_;
};

class BadKeyProvider : public ChatProvider {
public:
  std::string name() const override { return "badkey"; }
  std::string complete(const ChatRequest&) override {
    ++calls;
    throw ConfigError("401 unauthorized");
  }
  int calls = 0;
};

class ConcurrencyProbe : public ChatProvider {
public:
  std::string name() const override { return "probe"; }
  std::string complete(const ChatRequest&) override {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --active;
    return "x";
  }
  std::atomic<int> active{0}, peak{0};
};

}  // namespace

TEST(Gateway, ScriptedResponseByPromptHash) {
  auto mock = std::make_shared<MockProvider>();
  ScriptEntry e;
  e.prompt_hash = sha256_hex("exact prompt");
  e.responses = {"scripted"};
  mock->add_script(e);
  auto gw = mock_gateway(mock);
  EXPECT_EQ(gw->chat(Role::extractor, "exact prompt"), "scripted");
}

TEST(Gateway, TwoTransientFailuresThenSuccess) {
  auto gw = mock_gateway(std::make_shared<FlakyProvider>(2));
  EXPECT_EQ(gw->chat(Role::judge, "hi"), "ok:hi");
  const auto ledger = gw->ledger_report();
  EXPECT_EQ(ledger.of(Role::judge).calls, 1u);
  EXPECT_EQ(ledger.of(Role::judge).attempts, 3u);
  ASSERT_EQ(ledger.entries.size(), 1u);
  EXPECT_EQ(ledger.entries[0].attempts, 3);
  EXPECT_TRUE(ledger.entries[0].ok);
}

TEST(Gateway, RetriesExhaustedAfterMaxRetries) {
  auto gw = mock_gateway(std::make_shared<FlakyProvider>(100));
  try {
    gw->chat(Role::judge, "hi");
    FAIL();
  } catch (const RetriesExhausted& e) {
    EXPECT_EQ(e.attempts(), 4);
  }
  EXPECT_EQ(gw->ledger_report().of(Role::judge).failed_calls, 1u);
}

TEST(Gateway, BackoffDelaysGrowAndCap) {
  std::vector<std::chrono::milliseconds> slept;
  GatewayOptions opts;
  opts.retry.base_delay = std::chrono::milliseconds(100);
  opts.retry.max_delay = std::chrono::milliseconds(300);
  opts.sleeper = [&](std::chrono::milliseconds d) { slept.push_back(d); };
  Gateway gw(std::make_shared<FlakyProvider>(3), opts);
  gw.chat(Role::extractor, "x");
  EXPECT_EQ(slept, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(100),
                                                           std::chrono::milliseconds(200),
                                                           std::chrono::milliseconds(300)}));
}

TEST(Gateway, ConfigErrorsAreNotRetried) {
  auto bad = std::make_shared<BadKeyProvider>();
  auto gw = mock_gateway(bad);
  EXPECT_THROW(gw->chat(Role::extractor, "x"), ConfigError);
  EXPECT_EQ(bad->calls, 1);
}

TEST(Gateway, EmptyPromptIsRejected) {
  auto gw = mock_gateway(std::make_shared<MockProvider>());
  EXPECT_THROW(gw->chat(Role::extractor, ""), InvalidArgument);
  EXPECT_EQ(gw->ledger_report().total_calls(), 0u);
}

TEST(Gateway, FreshLedgerIsZeroAndCountsCalls) {
  auto gw = mock_gateway(std::make_shared<FlakyProvider>(0));
  const auto fresh = gw->ledger_report();
  EXPECT_EQ(fresh.total_calls(), 0u);
  EXPECT_EQ(fresh.total_input_tokens(), 0u);
  for (int i = 0; i < 7; ++i) gw->chat(Role::summarizer, "two words");
  const auto l = gw->ledger_report();
  EXPECT_EQ(l.of(Role::summarizer).calls, 7u);
  EXPECT_EQ(l.of(Role::summarizer).input_tokens, 14u);
  EXPECT_DOUBLE_EQ(l.of(Role::summarizer).mean_input_tokens(), 2.0);
  EXPECT_EQ(l.of(Role::judge).calls, 0u);
  gw->reset_ledger();
  EXPECT_EQ(gw->ledger_report().total_calls(), 0u);
}

TEST(Gateway, LedgerJsonOmitsTimingUnlessAsked) {
  auto gw = mock_gateway(std::make_shared<FlakyProvider>(0));
  gw->chat(Role::flmsci, "x");
  const auto j = gw->ledger_report().to_json();
  EXPECT_EQ(j["roles"]["flmsci"]["calls"], 1);
  EXPECT_FALSE(j["roles"]["flmsci"].contains("millis"));
  EXPECT_TRUE(gw->ledger_report().to_json(true)["roles"]["flmsci"].contains("millis"));
}

TEST(Gateway, PerRoleRouting) {
  auto gw = mock_gateway(std::make_shared<FlakyProvider>(0));
  auto judge = std::make_shared<MockProvider>();
  ScriptEntry e;
  e.responses = {"from judge provider"};
  judge->add_script(e);
  gw->set_provider(Role::judge, judge);
  EXPECT_EQ(gw->chat(Role::judge, "q"), "from judge provider");
  EXPECT_EQ(gw->chat(Role::extractor, "q"), "ok:q");
}

TEST(Gateway, InFlightBoundIsRespected) {
  auto probe = std::make_shared<ConcurrencyProbe>();
  auto gw = mock_gateway(probe, 3);
  parallel_for(40, 10, [&](std::size_t) { gw->chat(Role::extractor, "x"); });
  EXPECT_LE(probe->peak.load(), 3);
  EXPECT_EQ(gw->ledger_report().of(Role::extractor).calls, 40u);
}

TEST(Roles, NamesRoundTrip) {
  for (Role r : kAllRoles) EXPECT_EQ(parse_role(role_name(r)), r);
  EXPECT_THROW(parse_role("critic"), InvalidArgument);
}

TEST(MockScript, ResponsesWalkThenStick) {
  auto mock = std::make_shared<MockProvider>();
  mock->add_script(parse_script(json::parse(R"([{"role":"judge","prompt_contains":"pick","responses":["1","2"]}])")));
  auto gw = mock_gateway(mock);
  EXPECT_EQ(gw->chat(Role::judge, "please pick"), "1");
  EXPECT_EQ(gw->chat(Role::judge, "please pick"), "2");
  EXPECT_EQ(gw->chat(Role::judge, "please pick"), "2");
}

TEST(MockScript, FailTimesProduceTransientErrors) {
  auto mock = std::make_shared<MockProvider>();
  mock->add_script(parse_script(json::parse(R"([{"response":"fine","fail_times":2}])")));
  auto gw = mock_gateway(mock);
  EXPECT_EQ(gw->chat(Role::extractor, "x"), "fine");
  EXPECT_EQ(gw->ledger_report().entries.at(0).attempts, 3);
}

TEST(MockScript, MalformedScriptsAreRejected) {
  EXPECT_THROW(parse_script(json::parse(R"({"response":"x"})")), ParseError);
  EXPECT_THROW(parse_script(json::parse(R"([{"role":"judge"}])")), ParseError);
}

TEST(MockJudge, PoliciesAnswerAsSpecified) {
  ChatRequest r;
  r.role = Role::judge;
  r.prompt = "choose";
  r.meta = {{"kind", "judge"}, {"num_options", 5}, {"correct", 3}};
  EXPECT_EQ(mock_rules::judge(r, JudgePolicy::oracle, 0), "3");
  EXPECT_NE(mock_rules::judge(r, JudgePolicy::adversarial, 0), "3");
  for (int s = 0; s < 50; ++s) {
    r.params.seed = s;
    const int pick = std::stoi(mock_rules::judge(r, JudgePolicy::random, 9));
    EXPECT_GE(pick, 1);
    EXPECT_LE(pick, 5);
  }
  EXPECT_EQ(parse_judge_policy("adversarial"), JudgePolicy::adversarial);
  EXPECT_THROW(parse_judge_policy("lenient"), InvalidArgument);
}

TEST(MockJudge, RandomPolicyIsReproducibleAndSeedSensitive) {
  ChatRequest r;
  r.role = Role::judge;
  r.prompt = "choose";
  r.meta = {{"kind", "judge"}, {"num_options", 1000}, {"correct", 1}};
  r.params.seed = 42;
  EXPECT_EQ(mock_rules::judge(r, JudgePolicy::random, 1), mock_rules::judge(r, JudgePolicy::random, 1));
  int differ = 0;
  for (std::uint64_t s = 0; s < 20; ++s) differ += mock_rules::judge(r, JudgePolicy::random, s) != mock_rules::judge(r, JudgePolicy::random, s + 100);
  EXPECT_GT(differ, 15);
}
