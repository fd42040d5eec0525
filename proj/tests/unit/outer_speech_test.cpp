#include <gtest/gtest.h>

#include "dctl/error.hpp"
#include "dctl/outer_speech.hpp"
#include "testkit.hpp"

using namespace dctl;

namespace {

Claim grounded(std::string text, std::vector<std::string> refs, std::vector<SupportRef> support = {}) {
  Claim c;
  c.text = std::move(text);
  c.evidence_refs = std::move(refs);
  c.support = std::move(support);
  return c;
}

ClaimedResponse answer(std::vector<Claim> claims) {
  ClaimedResponse y;
  y.claims = std::move(claims);
  y.rendered_text = render(y);
  return y;
}

struct Outer : ::testing::Test {
  WorkingContext W;
  std::vector<EvidenceItem> E{{"E1", "dish", json::array({{{"name", "tiramisu"}, {"carbs", 52}, {"fat", 24}}}), "dish: 1 row", false}};
  EvidenceBundle B() const { return {&W, E}; }
};

}  // namespace

TEST_F(Outer, SupportedLiteralsPass) {
  auto r = check_faithfulness(answer({grounded("Tiramisu contains 52 g of carbohydrates.", {"E1"}, {{"E1", 0, "carbs"}})}), B());
  EXPECT_TRUE(r.pass);
}

TEST_F(Outer, WrongSupportedLiteralFails) {
  auto r = check_faithfulness(answer({grounded("Tiramisu contains 53 g of carbohydrates.", {"E1"}, {{"E1", 0, "carbs"}})}), B());
  ASSERT_FALSE(r.pass);
  EXPECT_EQ(r.violations[0].claim_index, 0u);
}

TEST_F(Outer, LiteralMustAppearInCitedEvidence) {
  EXPECT_TRUE(check_faithfulness(answer({grounded("It has 24 g of fat.", {"E1"})}), B()).pass);
  EXPECT_FALSE(check_faithfulness(answer({grounded("It has 25 g of fat.", {"E1"})}), B()).pass);
}

TEST_F(Outer, UngroundedClaimsFail) {
  EXPECT_FALSE(check_faithfulness(answer({grounded("Tiramisu is tasty.", {})}), B()).pass);
  EXPECT_FALSE(check_faithfulness(answer({grounded("Tiramisu is tasty.", {"E7"})}), B()).pass);
  EXPECT_FALSE(check_faithfulness(answer({grounded("52", {"E1"}, {{"E1", 3, "carbs"}})}), B()).pass);
  EXPECT_FALSE(check_faithfulness(answer({grounded("52 and 24", {"E1"}, {{"E1", 0, "carbs"}})}), B()).pass);
}

TEST_F(Outer, SafeDefaultsMustMatchTemplate) {
  Claim ok = SafeDefaults::builtin().make("clarify.slot", {{"label", "daily fat target (grams)"}});
  EXPECT_EQ(ok.text, "Please provide the daily fat target (grams).");
  EXPECT_TRUE(check_faithfulness(answer({ok}), B()).pass);
  Claim edited = ok;
  edited.text = "Please provide the daily fat target (grams), 70 is fine.";
  EXPECT_FALSE(check_faithfulness(answer({edited}), B()).pass);
  Claim unknown = ok;
  unknown.template_id = "made.up";
  EXPECT_FALSE(check_faithfulness(answer({unknown}), B()).pass);
  EXPECT_THROW(SafeDefaults::builtin().instantiate("clarify.slot", json::object()), Error);
}

TEST_F(Outer, MemoryFactsAreEvidence) {
  WorkingItem w;
  w.id = "W:core:3";
  w.key = "person.bob.daily_calories";
  w.value = 2000;
  W.items.push_back(w);
  EXPECT_TRUE(check_faithfulness(answer({grounded("bob has 2000 kcal.", {"W:core:3"}, {{"W:core:3", 0, "daily_calories"}})}), B()).pass);
  EXPECT_FALSE(check_faithfulness(answer({grounded("bob has 2100 kcal.", {"W:core:3"}, {{"W:core:3", 0, "daily_calories"}})}), B()).pass);
}

TEST_F(Outer, ClarifyAsksForEachMissingSlot) {
  DomainRegistry reg = testkit::bundled_domains();
  const TaskSchema* add = reg.get("Advisor")->schema("AddToDatabase");
  json params = {{"user", "bob"}};
  ControlDecision d;
  d.control = Control::Clarify;
  d.missing_slots = {"daily_calories", "daily_protein", "daily_carbs", "daily_fat"};
  std::vector<EvidenceItem> none;
  ComposeInput in{"register bob", "Advisor", add, &params, &W, &d, &none, nullptr};
  ComposeResult r = compose(in, nullptr);
  EXPECT_EQ(r.response.response_kind, ResponseKind::ClarificationQuestion);
  ASSERT_EQ(r.response.claims.size(), 4u);
  EXPECT_EQ(r.response.claims[0].slot, "daily_calories");
  EXPECT_EQ(r.response.claims[0].text, "Please provide the daily calorie target.");
}

TEST_F(Outer, RejectAndSwitchReplies) {
  DomainRegistry reg = testkit::bundled_domains();
  const TaskSchema* dish = reg.get("Advisor")->schema("DishInfo");
  json params = {{"dish", "tiramisu"}};
  std::vector<EvidenceItem> none;
  ControlDecision d;
  d.control = Control::Reject;
  ComposeInput in{"x", "Advisor", dish, &params, &W, &d, &none, nullptr};
  EXPECT_EQ(compose(in, nullptr).response.rendered_text, "I cannot help with that request in Advisor.");
  d.control = Control::SwitchDomain;
  d.suggested_domain = "Movies";
  EXPECT_EQ(compose(in, nullptr).response.response_kind, ResponseKind::SwitchNotice);
  EXPECT_EQ(out_of_scope_reply({"Advisor", "Movies"}).rendered_text,
            "That request is outside what I can help with. I can help with: Advisor, Movies.");
}

TEST_F(Outer, UnfaithfulModelClaimsFallBackToTemplates) {
  DomainRegistry reg = testkit::bundled_domains();
  const TaskSchema* dish = reg.get("Advisor")->schema("DishInfo");
  json params = {{"dish", "tiramisu"}};
  ControlDecision d;
  d.control = Control::Proceed;
  d.complete = 1;
  d.tool_needed = 1;
  Verdict v;
  v.semantics = "advisor.dish_info";
  v.record = {{"dish", "tiramisu"}, {"found", true}, {"ref", "E1"}, {"nutrition", E[0].rows[0]}};
  ScriptedProvider p;
  p.add(ModuleId::OuterSpeech, "how many carbs in tiramisu",
        {{"claims", json::array({{{"text", "Tiramisu has 99 g of carbs."}, {"kind", "Grounded"}, {"evidence_refs", {"E1"}}}})}});
  ProviderConfig cfg;
  cfg.kind = ProviderKind::Scripted;
  Gateway gw(std::make_shared<ScriptedProvider>(p), cfg);
  ComposeInput in{"how many carbs in tiramisu", "Advisor", dish, &params, &W, &d, &E, &v};
  ComposeResult r = compose(in, &gw);
  EXPECT_EQ(r.model_attempts, 2u);
  EXPECT_TRUE(r.response.template_fallback);
  EXPECT_TRUE(r.faithfulness.pass);
  EXPECT_EQ(r.response.rendered_text.find("99"), std::string::npos);
  EXPECT_NE(r.response.rendered_text.find("52"), std::string::npos);
}

TEST_F(Outer, FaithfulModelClaimsAreKept) {
  DomainRegistry reg = testkit::bundled_domains();
  const TaskSchema* dish = reg.get("Advisor")->schema("DishInfo");
  json params = {{"dish", "tiramisu"}};
  ControlDecision d;
  d.control = Control::Proceed;
  d.complete = 1;
  d.tool_needed = 1;
  ScriptedProvider p;
  p.add(ModuleId::OuterSpeech, "fat in tiramisu",
        {{"claims", json::array({{{"text", "Tiramisu has 24 g of fat."}, {"kind", "Grounded"}, {"evidence_refs", {"E1"}}}})}});
  ProviderConfig cfg;
  cfg.kind = ProviderKind::Scripted;
  Gateway gw(std::make_shared<ScriptedProvider>(p), cfg);
  ComposeInput in{"fat in tiramisu", "Advisor", dish, &params, &W, &d, &E, nullptr};
  ComposeResult r = compose(in, &gw);
  EXPECT_FALSE(r.response.template_fallback);
  EXPECT_EQ(r.response.rendered_text, "Tiramisu has 24 g of fat.");
}
