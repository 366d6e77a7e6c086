#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kamac/core.hpp"

using namespace kamac;

TEST_CASE("normalize_role folds case and whitespace, keeps qualifiers") {
  CHECK(normalize_role("Cardiologist") == "cardiologist");
  CHECK(normalize_role("  cardiologist ") == "cardiologist");
  CHECK(normalize_role("CARDIOLOGIST") == "cardiologist");
  CHECK(normalize_role("Pediatric   Cardiologist") == "pediatric cardiologist");
  CHECK(normalize_role("Surgical Oncologist (Recurrence/Secondary Cancers)") ==
        "surgical oncologist (recurrence/secondary cancers)");
  CHECK(normalize_role("a") == "a");
  CHECK_THROWS_AS(normalize_role(""), ValidationError);
  CHECK_THROWS_AS(normalize_role("   \t\n "), ValidationError);
}

TEST_CASE("normalize_role is idempotent") {
  for (const char* raw : {"Internist", "  Radiation   Oncologist ", "HPV Specialist (Head/Neck)"}) {
    const std::string once = normalize_role(raw);
    CHECK(normalize_role(once) == once);
  }
}

TEST_CASE("collapse_whitespace preserves case") {
  CHECK(collapse_whitespace("  A  B\tC\n") == "A B C");
  CHECK(collapse_whitespace("") == "");
}

TEST_CASE("peer edges are canonical regardless of argument order") {
  auto e1 = HierarchyEdge::peer("Pulmonologist", "Cardiologist");
  auto e2 = HierarchyEdge::peer("cardiologist", "Pulmonologist");
  CHECK(e1.kind == EdgeKind::peer);
  CHECK(e1.from_role == "Cardiologist");
  CHECK(e1.to_role == "Pulmonologist");
  CHECK(normalize_role(e2.from_role) == normalize_role(e1.from_role));
  CHECK(normalize_role(e2.to_role) == normalize_role(e1.to_role));
}

TEST_CASE("directed edges keep their orientation") {
  auto e = HierarchyEdge::directed("Pediatrician", "Cardiologist");
  CHECK(e.kind == EdgeKind::directed);
  CHECK(e.from_role == "Pediatrician");
  CHECK(e.to_role == "Cardiologist");
  CHECK(e != HierarchyEdge::directed("Cardiologist", "Pediatrician"));
}

TEST_CASE("opinion board keeps one entry per role per round, ordered") {
  OpinionBoard b;
  b.add("Internist", "first", 1);
  b.add("Cardiologist", "second", 1);
  b.add("internist", "revised", 1);  // same role, same round -> replace
  REQUIRE(b.entries.size() == 2);
  CHECK(b.entries[0].role == "Internist");
  CHECK(b.entries[0].text == "revised");
  CHECK(b.entries[1].role == "Cardiologist");

  b.add("Internist", "later", 2);  // new round -> new entry
  REQUIRE(b.entries.size() == 3);
  CHECK(b.render() ==
        "[Round 1] Internist: revised\n\n[Round 1] Cardiologist: second\n\n"
        "[Round 2] Internist: later");
}

TEST_CASE("case record validation") {
  CaseRecord c;
  c.case_id = "x";
  c.stem = "q";
  c.options = {{"A", "one"}, {"B", "two"}};
  c.gold_label = "A";
  CHECK_NOTHROW(c.validate());
  CHECK(c.labels() == std::vector<std::string>{"A", "B"});
  CHECK(c.has_label("B"));
  CHECK_FALSE(c.has_label("C"));

  CaseRecord bad = c;
  bad.gold_label = "Z";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.options.push_back({"A", "dup"});
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.options = {{"a", "lower"}};
  bad.gold_label = "a";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.roi_boxes.push_back({});
  CHECK_THROWS_AS(bad.validate(), ValidationError);  // boxes without image modality
}

TEST_CASE("box validation enforces unit cube and ordering") {
  Box3D b{0.1, 0.9, 0.2, 0.8, 0.0, 1.0};
  CHECK_NOTHROW(b.validate());
  Box3D inverted{0.9, 0.1, 0.2, 0.8, 0.0, 1.0};
  CHECK_THROWS_AS(inverted.validate(), ValidationError);
  Box3D outside{0.0, 1.5, 0.0, 1.0, 0.0, 1.0};
  CHECK_THROWS_AS(outside.validate(), ValidationError);
}

TEST_CASE("run config validation") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_rounds_R = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.initial_experts_N = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.retry_policy.max_attempts = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("ledger merge averages usage and sums cost") {
  UsageLedger a{"c1", 3, 22, 1000, 500, 2.0, 0.10};
  UsageLedger b{"c2", 1, 6, 200, 100, 1.0, 0.02};
  auto s = ledger_merge({a, b});
  CHECK(s.cases == 2);
  CHECK(s.avg_experts == doctest::Approx(2.0));
  CHECK(s.avg_calls == doctest::Approx(14.0));
  CHECK(s.avg_prompt_tokens == doctest::Approx(600.0));
  CHECK(s.avg_completion_tokens == doctest::Approx(300.0));
  CHECK(s.avg_wall_time_s == doctest::Approx(1.5));
  CHECK(s.total_cost == doctest::Approx(0.12));
  CHECK_THROWS_AS(ledger_merge({}), InputError);
}

TEST_CASE("method names round-trip") {
  for (Method m : {Method::kamac, Method::single, Method::cot, Method::static_majority,
                   Method::static_consensus})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("nope"), InputError);
}

TEST_CASE("core json round-trips") {
  ExpertSpec e{"Cardiologist", "heart specialist",
               {HierarchyEdge::peer("Cardiologist", "Internist")}, 2};
  auto e2 = nlohmann::json(e).get<ExpertSpec>();
  CHECK(e2.role == e.role);
  CHECK(e2.edges == e.edges);
  CHECK(e2.recruited_round == 2);

  Verdict v;
  v.label = "A";
  v.strategy = VerdictStrategy::majority_vote;
  v.per_agent = {{"internist", "A"}, {"pathologist", "B"}};
  v.tally = {{"A", 2}, {"B", 1}};
  auto v2 = nlohmann::json(v).get<Verdict>();
  CHECK(v2.label == "A");
  CHECK(v2.tally == v.tally);
  CHECK(v2.per_agent == v.per_agent);

  UsageLedger l{"c", 2, 9, 10, 20, 0.5, 0.01};
  auto l2 = nlohmann::json(l).get<UsageLedger>();
  CHECK(l2.backend_calls == 9);
  CHECK(l2.monetary_cost == doctest::Approx(0.01));
}
