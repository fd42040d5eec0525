#include <gtest/gtest.h>

#include "dctl/customization.hpp"
#include "dctl/error.hpp"
#include "testkit.hpp"

using namespace dctl;

namespace {

json toy_manifest() {
  return json::parse(R"({
    "domain_id": "Toy",
    "description": "A toy domain.",
    "tasks": [{
      "name": "Lookup",
      "description": "Look something up.",
      "execution_semantics": "rows",
      "fields": [
        {"name": "thing", "type": "text", "required": true, "identifier": true},
        {"name": "count", "type": "integer", "constraint": {"min": 1, "max": 5}},
        {"name": "color", "type": "text", "constraint": {"enum": ["red", "blue"]}}
      ]
    }],
    "qg_templates": {"Lookup": [{"label": "thing", "spec": {"steps": [{"match": {"label": "Thing"}}]}}]}
  })");
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Unsupported;
}

}  // namespace

TEST(Customization, ParsesManifest) {
  DomainManifest m = DomainManifest::from_json(toy_manifest());
  ASSERT_EQ(m.task_schemas.size(), 1u);
  const TaskSchema* s = m.schema("Lookup");
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->required_fields(), std::vector<std::string>{"thing"});
  EXPECT_EQ(s->field("count")->constraint.max, 5.0);
  EXPECT_EQ(s->field("thing")->display_label(), "thing");
}

TEST(Customization, ConstraintCheck) {
  Constraint c;
  c.min = 1;
  c.max = 5;
  EXPECT_FALSE(c.check(3));
  EXPECT_TRUE(c.check(0));
  EXPECT_TRUE(c.check(6));
  Constraint e;
  e.one_of = {"red", "blue"};
  EXPECT_FALSE(e.check("red"));
  EXPECT_TRUE(e.check("green"));
  Constraint r;
  r.regex = "[a-z]+";
  EXPECT_FALSE(r.check("abc"));
  EXPECT_TRUE(r.check("ab1"));
}

TEST(Customization, RejectsDuplicateField) {
  json j = toy_manifest();
  j["tasks"][0]["fields"].push_back({{"name", "thing"}, {"type", "text"}});
  EXPECT_EQ(code_of([&] { DomainManifest::from_json(j); }), ErrorCode::DuplicateField);
}

TEST(Customization, RejectsSchemaWithoutTemplate) {
  json j = toy_manifest();
  j["qg_templates"] = json::object();
  EXPECT_EQ(code_of([&] { DomainManifest::from_json(j); }), ErrorCode::DanglingTemplate);
}

TEST(Customization, RejectsUnknownPluginAndType) {
  json a = toy_manifest();
  a["plugins"] = {"nope"};
  EXPECT_EQ(code_of([&] { DomainManifest::from_json(a); }), ErrorCode::ParseError);
  json b = toy_manifest();
  b["tasks"][0]["fields"][1]["type"] = "complex";
  EXPECT_EQ(code_of([&] { DomainManifest::from_json(b); }), ErrorCode::ParseError);
}

TEST(Customization, RegistryRejectsDuplicatesAndUnknowns) {
  DomainRegistry reg;
  reg.register_domain(DomainManifest::from_json(toy_manifest()));
  EXPECT_EQ(code_of([&] { reg.register_domain(DomainManifest::from_json(toy_manifest())); }),
            ErrorCode::DuplicateDomain);
  EXPECT_EQ(code_of([&] { reg.get("Nope"); }), ErrorCode::UnknownDomain);
  EXPECT_EQ(reg.list(), (std::vector<std::string>{"Toy", "OutOfScope"}));
}

TEST(Customization, LoadsBundledDomains) {
  DomainRegistry reg = testkit::bundled_domains();
  EXPECT_EQ(reg.size(), 11u);
  auto advisor = reg.get("Advisor");
  EXPECT_EQ(advisor->task_list(), (std::vector<std::string>{"AddToDatabase", "DishInfo", "SubstituteDish"}));
  ASSERT_TRUE(advisor->backend);
  EXPECT_EQ(advisor->backend->adapter, "in-memory-graph");
}

TEST(Customization, ActivateDomainSwapsSchemas) {
  DomainRegistry reg = testkit::bundled_domains();
  ActiveConfig cfg = ActiveConfig::from_registry(reg);
  EXPECT_EQ(cfg.active_manifest(), nullptr);
  EXPECT_TRUE(cfg.schemas().empty());
  ActiveConfig advisor = activate_domain(cfg, "Advisor");
  EXPECT_EQ(advisor.active_domain(), "Advisor");
  EXPECT_NE(advisor.schema("DishInfo"), nullptr);
  EXPECT_EQ(advisor.schema("MovieInfo"), nullptr);
  ActiveConfig movies = activate_domain(advisor, "Movies");
  EXPECT_NE(movies.schema("MovieInfo"), nullptr);
  EXPECT_FALSE(movies == advisor);
  EXPECT_TRUE(activate_domain(movies, "Advisor") == advisor);
  EXPECT_EQ(code_of([&] { activate_domain(cfg, "Cooking"); }), ErrorCode::UnknownDomain);
}

TEST(Customization, ExpandMemoryKey) {
  EXPECT_EQ(expand_memory_key("person.${user}.daily_calories", {{"user", "Pesto Lover"}}),
            "person.pesto_lover.daily_calories");
  EXPECT_FALSE(expand_memory_key("person.${user}.x", {{"user", nullptr}}));
  EXPECT_FALSE(expand_memory_key("person.${user}.x", json::object()));
}

TEST(Customization, EvidenceRequirementsInstantiate) {
  DomainRegistry reg = testkit::bundled_domains();
  const TaskSchema* dish = reg.get("Advisor")->schema("DishInfo");
  auto plain = dish->instantiate_requirements({{"dish", "tiramisu"}});
  ASSERT_EQ(plain.size(), 1u);
  EXPECT_EQ(plain[0].kind, "Dish");
  EXPECT_EQ(plain[0].key, "tiramisu");
  EXPECT_FALSE(plain[0].live);
  auto with_user = dish->instantiate_requirements({{"dish", "tiramisu"}, {"user", "alice"}});
  ASSERT_EQ(with_user.size(), 2u);
  EXPECT_TRUE(with_user[1].live);
}

TEST(Customization, BuiltinPluginDedupsLists) {
  const Plugin* p = PluginRegistry::builtin().find("dedup_lowercase_lists");
  ASSERT_NE(p, nullptr);
  DomainRegistry reg = testkit::bundled_domains();
  const TaskSchema* dish = reg.get("Advisor")->schema("DishInfo");
  json out = (*p)(*dish, {{"dish", "tiramisu"}, {"ingredients", {"Milk", "milk", " Eggs "}}});
  EXPECT_EQ(out["ingredients"], json({"milk", "eggs"}));
}

TEST(Customization, DescriptionOnlyManifest) {
  DomainManifest m = DomainManifest::from_json(json::parse(R"({
    "domain_id": "Travel", "description": "Plan trips.", "task_names": ["FlightSearch", "HotelBooking"]})"));
  EXPECT_TRUE(m.description_only());
  EXPECT_EQ(m.task_list(), (std::vector<std::string>{"FlightSearch", "HotelBooking"}));
  EXPECT_EQ(m.schema("FlightSearch"), nullptr);
}
