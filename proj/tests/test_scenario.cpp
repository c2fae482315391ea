#include <gtest/gtest.h>

#include "sou/error.hpp"
#include "sou/scenario.hpp"
#include "support.hpp"

using namespace sou;

namespace {

std::string fixture(const std::string& name) {
  return test::read_file(test::data_dir() / "scenarios" / name);
}

bool has_finding(const ValidationReport& r, Severity sev, const std::string& needle) {
  for (const auto& f : r.findings) {
    if (f.severity == sev && (f.message.find(needle) != std::string::npos ||
                              f.dimension.find(needle) != std::string::npos)) {
      return true;
    }
  }
  return false;
}

ScenarioOfUse table3() { return parse_scenario(fixture("gender_protection.json")); }

}  // namespace

TEST(Scenario, Table3ParsesAndValidates) {
  const auto s = table3();
  EXPECT_EQ(s.id, "gender-protection-parkinson");
  EXPECT_EQ(s.attacker.resources.size(), 2u);
  EXPECT_EQ(s.protector.defense_objectives.size(), 1u);
  EXPECT_EQ(s.protector.utility_objectives.size(), 1u);
  const auto r = validate_scenario(s);
  EXPECT_TRUE(r.complete) << to_string(r);
  EXPECT_EQ(r.error_count(), 0u);
  EXPECT_TRUE(has_finding(r, Severity::warning, "declared empty"));
}

TEST(Scenario, FixturesRoundTripByteIdentical) {
  for (const char* name : {"gender_protection.json", "voiceprivacy_2024.json",
                           "variational_feature_extraction.json", "gender_ambiguous_voices.json"}) {
    const std::string text = fixture(name);
    EXPECT_EQ(serialize_scenario(parse_scenario(text)), text) << name;
  }
}

TEST(Scenario, Table2Fixtures) {
  const auto vp = validate_scenario(parse_scenario(fixture("voiceprivacy_2024.json")));
  EXPECT_TRUE(vp.complete) << to_string(vp);
  EXPECT_FALSE(has_finding(vp, Severity::warning, "declared empty"));

  for (const char* name : {"variational_feature_extraction.json", "gender_ambiguous_voices.json"}) {
    const auto r = validate_scenario(parse_scenario(fixture(name)));
    EXPECT_TRUE(r.complete) << name << "\n" << to_string(r);
    EXPECT_TRUE(has_finding(r, Severity::warning, "declared empty")) << name;
  }
}

TEST(Scenario, MissingUtilityObjectiveIsAnError) {
  auto s = table3();
  s.protector.utility_objectives.clear();
  const auto r = validate_scenario(s);
  EXPECT_FALSE(r.complete);
  EXPECT_TRUE(has_finding(r, Severity::error, "missing utility objective"));
}

TEST(Scenario, MissingDefenseObjectiveIsAnError) {
  auto s = table3();
  s.protector.defense_objectives.clear();
  EXPECT_TRUE(has_finding(validate_scenario(s), Severity::error, "missing defense objective"));
}

TEST(Scenario, OmittedResourcesDimension) {
  auto s = table3();
  s.attacker.resources.clear();
  const auto r = validate_scenario(s);
  EXPECT_FALSE(r.complete);
  EXPECT_TRUE(has_finding(r, Severity::error, "attacker.resources"));
}

TEST(Scenario, MissingKeyParsesButFailsValidation) {
  const std::string doc = R"({
  "id": "x",
  "attacker": {"objective": "o", "opportunity": "p"},
  "protector": {"defense_objectives": ["d"], "utility_objectives": ["u"], "opportunity": "p",
                "resources": [{"resource_id": "none", "kind": "data", "declared_empty": true}]}
})";
  const auto r = validate_scenario(parse_scenario(doc));
  EXPECT_FALSE(r.complete);
  EXPECT_TRUE(has_finding(r, Severity::error, "attacker.resources"));
}

TEST(Scenario, UnknownKeyReportsPosition) {
  const std::string doc = "{\n  \"id\": \"x\",\n  \"attackr\": {}\n}";
  try {
    parse_scenario(doc);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 0u);
  }
}

TEST(Scenario, MalformedJsonReportsPosition) {
  try {
    parse_scenario("{\n  \"id\": ,\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Scenario, MixedDeclaredEmptyIsAnError) {
  auto s = table3();
  s.attacker.resources.push_back({"nothing", ResourceKind::data, "", true});
  EXPECT_FALSE(validate_scenario(s).complete);
}

TEST(Scenario, ValidatorIsMonotoneUnderDeletion) {
  const auto base = validate_scenario(table3()).error_count();
  auto s = table3();
  s.attacker.objective.clear();
  const auto one = validate_scenario(s).error_count();
  s.protector.opportunity.clear();
  const auto two = validate_scenario(s).error_count();
  EXPECT_LT(base, one);
  EXPECT_LT(one, two);
}

TEST(Ledger, DefaultPlanPasses) {
  RunLedger l;
  l.record(Party::attacker, "attacker_training_data", Phase::train);
  l.record(Party::attacker, "attacker_gender_classifier", Phase::train);
  l.record(Party::protector, "target_speaker_data", Phase::protect);
  l.record(Party::protector, "attacker_gender_classifier", Phase::protect);
  l.record(Party::attacker, "target_speaker_data", Phase::attack);
  l.record(Party::attacker, "attacker_gender_classifier", Phase::attack);
  l.record(Party::protector, "diagnosis_classifier", Phase::evaluate);
  const auto r = check_ledger(table3(), l);
  EXPECT_TRUE(r.complete) << to_string(r);
}

TEST(Ledger, ProtectorUsingUndeclaredResourceFails) {
  RunLedger l;
  l.record(Party::protector, "attacker_training_data", Phase::protect);
  const auto r = check_ledger(table3(), l);
  EXPECT_FALSE(r.complete);
  EXPECT_TRUE(has_finding(r, Severity::error, "not granted to protector"));
}

TEST(Ledger, UnknownAndEmptyAndWrongPhase) {
  RunLedger l;
  l.record(Party::attacker, "oracle", Phase::attack);
  l.record(Party::protector, "protector_additional_resources", Phase::protect);
  l.record(Party::attacker, "target_speaker_data", Phase::protect);
  l.record(Party::protector, "target_speaker_data", Phase::attack);
  const auto r = check_ledger(table3(), l);
  EXPECT_EQ(r.error_count(), 4u) << to_string(r);
}

TEST(Ledger, JsonRoundTrip) {
  RunLedger l;
  l.record(Party::protector, "target_speaker_data", Phase::protect);
  l.record(Party::attacker, "attacker_gender_classifier", Phase::attack);
  const std::string text = serialize_ledger(l);
  EXPECT_EQ(parse_ledger(text), l);
  EXPECT_EQ(serialize_ledger(parse_ledger(text)), text);
}
