#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "dctl/error.hpp"
#include "dctl/runtime.hpp"
#include "dctl/service.hpp"
#include "testkit.hpp"

using namespace dctl;

TEST(Runtime, ConfigFromJsonResolvesPaths) {
  json j = {{"provider", {{"kind", "scripted"}, {"script_path", "s.jsonl"}}},
            {"budgets", {{"H_max", 5}, {"B_core", 100}, {"B_W", 200}, {"k", 2}}},
            {"domains_dir", "domains"},
            {"state_dir", "state"},
            {"port", 9000}};
  RuntimeConfig c = RuntimeConfig::from_json(j, "/base");
  EXPECT_EQ(c.provider.kind, ProviderKind::Scripted);
  EXPECT_EQ(*c.provider.script_path, std::filesystem::path("/base/s.jsonl"));
  EXPECT_EQ(c.domains_dir, std::filesystem::path("/base/domains"));
  EXPECT_EQ(c.budgets.h_max, 5u);
  EXPECT_EQ(c.budgets.b_core, 100u);
  EXPECT_EQ(c.port, 9000);
}

TEST(Runtime, BundledConfigLoads) {
  RuntimeConfig c = RuntimeConfig::load(testkit::source_dir() / "config" / "dctl.json");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.budgets.h_max, 10u);
  EXPECT_EQ(c.budgets.b_core, 4000u);
}

TEST(Runtime, UnknownSessionRejected) {
  Runtime rt(testkit::session_config("advisor"));
  EXPECT_THROW(rt.run_turn("nope", "hi"), Error);
  EXPECT_FALSE(rt.has_session("nope"));
}

TEST(Runtime, PersistsTracesAndReplaysIdentically) {
  auto dir = testkit::temp_dir("runtime");
  {
    Runtime rt(testkit::session_config("advisor", dir));
    testkit::run_session(rt, testkit::load_session("advisor"));
    EXPECT_TRUE(std::filesystem::exists(rt.trace_path("advisor-demo")));
    EXPECT_EQ(rt.traces("advisor-demo").size(), 10u);
    ReplayReport r = rt.replay_session("advisor-demo");
    EXPECT_TRUE(r.identical) << r.detail;
    EXPECT_EQ(r.turns, 10u);
  }
  Runtime again(testkit::session_config("advisor", dir));
  EXPECT_TRUE(again.has_session("advisor-demo"));
  EXPECT_EQ(again.memory_snapshot("advisor-demo").H.size(), 10u);
  auto rec = again.trace("advisor-demo", 3);
  ASSERT_TRUE(rec);
  EXPECT_EQ((*rec)["utterance"], "How many carbs does tiramisu have?");
  std::filesystem::remove_all(dir);
}

TEST(Runtime, ReplayDetectsTamperedTrace) {
  Runtime rt(testkit::session_config("advisor"));
  testkit::run_session(rt, testkit::load_session("advisor"));
  auto records = rt.traces("advisor-demo");
  records[2]["response"]["rendered_text"] = "Tiramisu contains 53 g of carbohydrates.";
  ReplayReport r = rt.replay_records(records, "advisor-demo");
  EXPECT_FALSE(r.identical);
  EXPECT_EQ(r.divergent_turn, 3u);
}

TEST(Runtime, SessionsAreIsolated) {
  Runtime rt(testkit::session_config("advisor"));
  auto s = testkit::load_session("advisor");
  std::string a = rt.create_session("a");
  std::string b = rt.create_session("b");
  rt.run_turn(a, s.turns[0], s.start_ms);
  EXPECT_EQ(rt.memory_snapshot(a).H.size(), 1u);
  EXPECT_EQ(rt.memory_snapshot(b).H.size(), 0u);
}

TEST(Runtime, ConcurrentTurnsOnOneSessionSerialize) {
  Runtime rt(testkit::session_config("advisor"));
  std::string sid = rt.create_session("c");
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] { rt.run_turn(sid, "How many carbs does tiramisu have?", 1000 + i); });
  }
  for (auto& t : threads) t.join();
  auto traces = rt.traces(sid);
  ASSERT_EQ(traces.size(), 4u);
  for (std::size_t i = 0; i < traces.size(); ++i) EXPECT_EQ(traces[i]["turn_id"], i + 1);
}

TEST(Runtime, ReplPrintsTurnsAndCommands) {
  Runtime rt(testkit::session_config("advisor"));
  std::string sid = rt.create_session("repl");
  std::istringstream in("How many carbs does tiramisu have?\n\n:memory\n:quit\nignored\n");
  std::ostringstream out;
  run_repl(rt, sid, in, out, false);
  EXPECT_NE(out.str().find("52 g"), std::string::npos);
  EXPECT_EQ(rt.traces(sid).size(), 1u);
}
