#include <gtest/gtest.h>

#include "dctl/error.hpp"
#include "dctl/interpreters.hpp"
#include "testkit.hpp"

using namespace dctl;

namespace {

Utterance say(std::string text) { return Utterance{std::move(text), "s1", 1, 0}; }

struct Fixture : ::testing::Test {
  DomainRegistry reg = testkit::bundled_domains();
  ActiveConfig advisor = activate_domain(ActiveConfig::from_registry(reg), "Advisor");
  const TaskSchema* add = advisor.schema("AddToDatabase");

  Gateway scripted(ScriptedProvider p) {
    ProviderConfig cfg;
    cfg.kind = ProviderKind::Scripted;
    return Gateway(std::make_shared<ScriptedProvider>(std::move(p)), cfg);
  }
};

}  // namespace

TEST_F(Fixture, ScopeUsesModelDomain) {
  ScriptedProvider p;
  p.add(ModuleId::ScopeDetection, "what is on tonight", {{"domain", "Movies"}, {"rationale", "cinema"}});
  Gateway gw = scripted(p);
  ScopeResult r = detect_scope(say("what is on tonight"), "Advisor", ActiveConfig::from_registry(reg), gw);
  EXPECT_EQ(r.domain, "Movies");
  EXPECT_FALSE(r.coerced);
}

TEST_F(Fixture, ScopeCoercesUnknownDomain) {
  ScriptedProvider p;
  p.add(ModuleId::ScopeDetection, "book a spaceship", {{"domain", "Space"}});
  Gateway gw = scripted(p);
  ScopeResult r = detect_scope(say("book a spaceship"), "OutOfScope", ActiveConfig::from_registry(reg), gw);
  EXPECT_EQ(r.domain, "OutOfScope");
  EXPECT_TRUE(r.coerced);
}

TEST_F(Fixture, IntentRejectsUnknownSchema) {
  ScriptedProvider p;
  p.add(ModuleId::IntentRecognition, "do the thing", {{"schema", "Nope"}, {"params", json::object()}});
  Gateway gw = scripted(p);
  try {
    recognize_intent(say("do the thing"), "Advisor", advisor, gw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSchemaMatch);
  }
}

TEST_F(Fixture, IntentReturnsRawParams) {
  ScriptedProvider p;
  p.add(ModuleId::IntentRecognition, "register Bob",
        {{"schema", "AddToDatabase"}, {"params", {{"user", "Bob"}}}});
  Gateway gw = scripted(p);
  IntentResult r = recognize_intent(say("register Bob"), "Advisor", advisor, gw);
  EXPECT_EQ(r.schema, "AddToDatabase");
  EXPECT_EQ(r.raw_params["user"], "Bob");
}

TEST_F(Fixture, PostprocessConvertsUnitsAndLowercasesIdentifiers) {
  json raw = {{"user", "Bob"},
              {"daily_calories", {{"value", 8368}, {"unit", "kJ"}}},
              {"daily_protein", {{"value", 0.12}, {"unit", "kg"}}},
              {"daily_carbs", 249.6},
              {"daily_fat", 70.0},
              {"intolerances", {"Lactose", "lactose"}}};
  PostprocessOutcome out = postprocess_checked(*add, raw, advisor);
  EXPECT_TRUE(out.violations.empty());
  EXPECT_EQ(out.params["user"], "bob");
  EXPECT_EQ(out.params["daily_calories"], 2000);
  EXPECT_EQ(out.params["daily_protein"], 120);
  EXPECT_EQ(out.params["daily_carbs"], 250);
  EXPECT_TRUE(out.params["daily_fat"].is_number_integer());
  EXPECT_EQ(out.params["intolerances"], json({"lactose"}));
}

TEST_F(Fixture, PostprocessReportsConstraintViolations) {
  json raw = {{"user", "bob"}, {"daily_calories", -5}, {"daily_protein", {{"value", 3}, {"unit", "parsecs"}}}};
  PostprocessOutcome out = postprocess_checked(*add, raw, advisor);
  std::set<std::string> fields;
  for (const auto& v : out.violations) fields.insert(v.field);
  EXPECT_TRUE(fields.count("daily_calories"));
  EXPECT_TRUE(fields.count("daily_protein"));
  EXPECT_EQ(out.params["daily_calories"], -5);
  EXPECT_FALSE(out.params.contains("daily_protein"));
  try {
    postprocess_intent(*add, raw, advisor);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConstraintViolation);
    EXPECT_GE(e.issues().size(), 2u);
  }
}

TEST_F(Fixture, TypeCheck) {
  EXPECT_NO_THROW(check_param_types(*add, {{"user", "bob"}, {"daily_calories", 2000}}));
  EXPECT_THROW(check_param_types(*add, {{"user", 3}}), Error);
}

TEST(Units, Conversions) {
  EXPECT_NEAR(*convert_unit(8368, "kj", "kcal"), 2000.0, 1e-9);
  EXPECT_NEAR(*convert_unit(0.12, "kg", "g"), 120.0, 1e-9);
  EXPECT_NEAR(*convert_unit(500, "mg", "g"), 0.5, 1e-9);
  EXPECT_EQ(*convert_unit(7, "g", "g"), 7.0);
  EXPECT_FALSE(convert_unit(1, "kcal", "g"));
}
