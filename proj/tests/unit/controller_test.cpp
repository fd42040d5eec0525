#include <gtest/gtest.h>

#include "dctl/controller.hpp"
#include "dctl/runtime.hpp"
#include "testkit.hpp"

using namespace dctl;

namespace {

struct AdvisorSession : ::testing::Test {
  static void SetUpTestSuite() {
    rt = new Runtime(testkit::session_config("advisor"));
    run = new testkit::SessionRun(testkit::run_session(*rt, testkit::load_session("advisor")));
  }
  static void TearDownTestSuite() {
    delete run;
    delete rt;
  }
  static const TurnRecord& turn(std::size_t n) { return run->records.at(n - 1); }

  static Runtime* rt;
  static testkit::SessionRun* run;
};

Runtime* AdvisorSession::rt = nullptr;
testkit::SessionRun* AdvisorSession::run = nullptr;

}  // namespace

TEST_F(AdvisorSession, IncompleteRegistrationClarifies) {
  const TurnRecord& r = turn(1);
  ASSERT_TRUE(r.decision);
  EXPECT_EQ(r.decision->control, Control::Clarify);
  EXPECT_EQ(r.response.response_kind, ResponseKind::ClarificationQuestion);
  EXPECT_EQ(r.response.claims.size(), 4u);
  EXPECT_TRUE(r.queries.empty());
  EXPECT_TRUE(r.evidence.empty());
}

TEST_F(AdvisorSession, FollowUpCompletesFromPendingSlots) {
  const TurnRecord& r = turn(2);
  EXPECT_EQ(r.decision->control, Control::Proceed);
  EXPECT_EQ(r.params["user"], "bob");
  EXPECT_EQ(r.params["daily_calories"], 2000);
  EXPECT_TRUE(r.filled.contains("user"));
  EXPECT_NE(r.response.rendered_text.find("2000 kcal"), std::string::npos);
}

TEST_F(AdvisorSession, GroundedAnswersCiteEvidence) {
  const TurnRecord& r = turn(3);
  EXPECT_EQ(r.decision->tool_needed, 1);
  EXPECT_FALSE(r.evidence.empty());
  EXPECT_TRUE(r.faithfulness.pass);
  EXPECT_EQ(r.response.rendered_text, "Tiramisu contains 52 g of carbohydrates.");
  const TurnRecord& safe = turn(4);
  EXPECT_NE(safe.response.rendered_text.find("lactose"), std::string::npos);
}

TEST_F(AdvisorSession, CalorieQuestionUsesMemory) {
  const TurnRecord& r = turn(7);
  EXPECT_EQ(r.decision->control, Control::Proceed);
  EXPECT_EQ(r.decision->tool_needed, 0);
  EXPECT_TRUE(r.queries.empty());
  EXPECT_NE(r.response.rendered_text.find("2000"), std::string::npos);
}

TEST_F(AdvisorSession, PolicyRefusal) {
  const TurnRecord& r = turn(10);
  EXPECT_EQ(r.decision->control, Control::Reject);
  EXPECT_EQ(r.response.response_kind, ResponseKind::Refusal);
  EXPECT_TRUE(r.queries.empty());
}

TEST_F(AdvisorSession, TurnsAreNumberedAndTimestamped) {
  auto s = testkit::load_session("advisor");
  for (std::size_t i = 0; i < run->records.size(); ++i) {
    EXPECT_EQ(run->records[i].turn_id, i + 1);
    EXPECT_EQ(run->records[i].timestamp_ms, s.start_ms + static_cast<std::int64_t>(i) * s.step_ms);
    EXPECT_FALSE(run->records[i].error) << run->records[i].error->message;
  }
}

TEST_F(AdvisorSession, BuildTraceCarriesVerdictFacts) {
  TurnTrace t = build_trace(turn(3));
  bool carbs = false;
  for (const auto& f : t.facts) carbs = carbs || (f.key == "dish.tiramisu.carbs" && f.value == 52);
  EXPECT_TRUE(carbs);
  EXPECT_EQ(t.control, "Proceed");
}

TEST(Controller, ScriptMissBecomesStageError) {
  Runtime rt(testkit::session_config("advisor"));
  std::string sid = rt.create_session("miss");
  TurnRecord r = rt.run_turn(sid, "this sentence is not scripted", 1);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->stage, "scope");
  EXPECT_EQ(r.error->code, "ScriptMiss");
  EXPECT_EQ(r.response.response_kind, ResponseKind::Refusal);
}

TEST(Controller, StripLatencyRemovesEveryLatencyField) {
  json j = {{"latency_ms", 3.0},
            {"timings", json::array({{{"stage", "scope"}, {"latency_ms", 1.5}, {"usage", {{"model_latency_ms", 2}}}}})},
            {"keep", 1}};
  EXPECT_EQ(strip_latency(j), (json{{"timings", json::array({{{"stage", "scope"}, {"usage", json::object()}}})}, {"keep", 1}}));
}

TEST(Controller, OutOfScopeNeedsNoTask) {
  Runtime rt(testkit::session_config("advisor"));
  std::string sid = rt.create_session("oos");
  auto cfg = testkit::session_config("advisor");
  ScriptedProvider p;
  p.add(ModuleId::ScopeDetection, "tell me a joke", {{"domain", "OutOfScope"}});
  Runtime rt2(cfg, std::make_shared<ScriptedProvider>(p));
  std::string s2 = rt2.create_session();
  TurnRecord r = rt2.run_turn(s2, "tell me a joke", 5);
  EXPECT_FALSE(r.error);
  EXPECT_EQ(r.domain, "OutOfScope");
  EXPECT_FALSE(r.decision);
  EXPECT_EQ(r.response.response_kind, ResponseKind::Refusal);
}
