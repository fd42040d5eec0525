#include <gtest/gtest.h>

#include "dctl/error.hpp"
#include "dctl/grounding.hpp"
#include "testkit.hpp"

using namespace dctl;

namespace {

struct Grounding : ::testing::Test {
  DomainRegistry reg = testkit::bundled_domains();
  ActiveConfig advisor = activate_domain(ActiveConfig::from_registry(reg), "Advisor");
  AdapterRegistry adapters = AdapterRegistry::from_manifests(reg, testkit::source_dir());
  WorkingContext W;
  ControlDecision proceed = [] {
    ControlDecision d;
    d.control = Control::Proceed;
    d.complete = 1;
    d.tool_needed = 1;
    return d;
  }();

  std::vector<QuerySpec> generate(const std::string& schema, const json& params) {
    GenerateInput in{"q", "Advisor", advisor.schema(schema), &params, &W, &proceed, &advisor};
    return generate_queries(in, nullptr).specs;
  }

  std::pair<Verdict, std::vector<EvidenceItem>> ground(const std::string& schema, const json& params) {
    auto specs = generate(schema, params);
    std::vector<EvidenceItem> evidence;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      evidence.push_back(execute("Advisor", specs[i], adapters, "E" + std::to_string(i + 1)));
    }
    SemanticsContext ctx;
    ctx.domain = "Advisor";
    ctx.schema = advisor.schema(schema);
    ctx.params = &params;
    ctx.evidence = &evidence;
    ctx.queries = &specs;
    ctx.adapters = &adapters;
    Verdict v = apply_execution_semantics(ctx);
    return {v, evidence};
  }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Unsupported;
}

}  // namespace

TEST_F(Grounding, TemplatesFollowOptionalFields) {
  EXPECT_EQ(generate("DishInfo", {{"dish", "tiramisu"}}).size(), 1u);
  auto with_user = generate("DishInfo", {{"dish", "tiramisu"}, {"user", "alice"}});
  ASSERT_EQ(with_user.size(), 3u);
  EXPECT_EQ(with_user[1].label, "dish_allergens");
}

TEST_F(Grounding, RequiresProceedWithTool) {
  json p = {{"dish", "tiramisu"}};
  ControlDecision clarify;
  GenerateInput in{"q", "Advisor", advisor.schema("DishInfo"), &p, &W, &clarify, &advisor};
  EXPECT_EQ(code_of([&] { generate_queries(in, nullptr); }), ErrorCode::PreconditionViolated);
  ControlDecision memory = proceed;
  memory.tool_needed = 0;
  in.decision = &memory;
  EXPECT_EQ(code_of([&] { generate_queries(in, nullptr); }), ErrorCode::PreconditionViolated);
}

TEST_F(Grounding, DishInfoFlagsNestedLactose) {
  auto [v, evidence] = ground("DishInfo", {{"dish", "tiramisu"}, {"user", "alice"}});
  EXPECT_EQ(v.record["nutrition"]["carbs"], 52);
  const json& c = v.record["compatibility"];
  EXPECT_FALSE(c["compatible"].get<bool>());
  EXPECT_EQ(c["offending"], json({"lactose"}));
  EXPECT_EQ(v.facts.size(), 4u);
}

TEST_F(Grounding, IngredientChecks) {
  auto [v, evidence] = ground("DishInfo", {{"dish", "tiramisu"}, {"ingredients", {"milk", "basil", "unicorn"}}});
  json want = json::array({{{"ingredient", "milk"}, {"status", "contained"}},
                           {{"ingredient", "basil"}, {"status", "not_contained"}},
                           {{"ingredient", "unicorn"}, {"status", "unknown"}}});
  EXPECT_EQ(v.record["ingredient_checks"], want);
}

TEST_F(Grounding, AddPersonWritesAndRejectsDuplicates) {
  json p = {{"user", "erin"}, {"daily_calories", 1800}, {"daily_protein", 90}, {"daily_carbs", 200},
            {"daily_fat", 60}, {"intolerances", {"gluten", "kryptonite"}}};
  auto [v, evidence] = ground("AddToDatabase", p);
  EXPECT_EQ(v.record["created"], "person:erin");
  EXPECT_EQ(v.record["unknown_intolerances"], json({"kryptonite"}));
  const EvidenceItem& verify = evidence.back();
  EXPECT_EQ(verify.rows[0]["allergies"], json({"gluten"}));
  EXPECT_EQ(code_of([&] { ground("AddToDatabase", p); }), ErrorCode::DuplicatePerson);
  EXPECT_EQ(code_of([&] { ground("AddToDatabase", {{"user", "alice"}, {"daily_calories", 1}, {"daily_protein", 1},
                                                   {"daily_carbs", 1}, {"daily_fat", 1}}); }),
            ErrorCode::DuplicatePerson);
}

TEST_F(Grounding, SubstitutionAvoidsAllergensAndExclusions) {
  auto [v, evidence] = ground("SubstituteDish", {{"user", "alice"}, {"meal", "dessert"}});
  ASSERT_FALSE(v.record["ranked"].empty());
  for (const auto& r : v.record["ranked"]) EXPECT_TRUE(r["meal_match"].get<bool>());
  std::string first = v.record["ranked"][0]["name"];
  EXPECT_NE(first, "tiramisu");
}

TEST_F(Grounding, MissingAdapterAndCapability) {
  QuerySpec q = QuerySpec::from_json(json::parse(R"({"steps": [{"match": {"label": "Dish"}}]})"));
  EXPECT_EQ(code_of([&] { execute("Nowhere", q, adapters, "E1"); }), ErrorCode::AdapterMissing);
  AdapterRegistry only_vector;
  only_vector.bind("Advisor", std::make_shared<ExternalVectorAdapter>());
  EXPECT_EQ(code_of([&] { execute("Advisor", q, only_vector, "E1"); }), ErrorCode::CapabilityMissing);
  EXPECT_EQ(code_of([&] { make_adapter({"quantum-db", json::object()}, "."); }), ErrorCode::AdapterMissing);
}

TEST_F(Grounding, BackendFailureBecomesFailedItem) {
  AdapterRegistry remote;
  remote.bind("Advisor", std::make_shared<ExternalGraphAdapter>("http://127.0.0.1:9/query", std::nullopt));
  QuerySpec q;
  q.raw_passthrough = "MATCH (n) RETURN n";
  EvidenceItem e = execute("Advisor", q, remote, "E1");
  EXPECT_TRUE(e.failed);
  EXPECT_NE(e.rows.dump().find(std::string{kFailureMarker}), std::string::npos);
}

TEST_F(Grounding, EvidenceBundleResolvesFacts) {
  WorkingItem w;
  w.id = "W:core:1";
  w.key = "person.bob.daily_calories";
  w.value = 2000;
  W.items.push_back(w);
  EvidenceBundle B{&W, {EvidenceItem{"E1", "q", json::array({{{"x", 1}}}), "c", false}}};
  EXPECT_EQ(*B.rows("E1"), json::array({{{"x", 1}}}));
  EXPECT_EQ(*B.rows("W:core:1"), json::array({{{"daily_calories", 2000}}}));
  EXPECT_FALSE(B.rows("E9"));
}
