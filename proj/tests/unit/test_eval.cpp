#include <doctest.h>

#include "synthetic.hpp"
#include "tacitree/error.hpp"
#include "tacitree/eval.hpp"
#include "tacitree/fact_extractor.hpp"

using namespace tacitree;
using namespace tacitree::testing;

namespace {

EvalRecord record(std::string id, double f1, bool correct, std::size_t tokens, double is, std::string error = {}) {
  EvalRecord r;
  r.task_id = std::move(id);
  r.strategy = "brute_force";
  r.retrieval_f1 = f1;
  r.correct = correct;
  r.retrieved_tokens = tokens;
  r.implicitness = is;
  r.retrieval_failed = !error.empty();
  r.error = std::move(error);
  return r;
}

struct Fixture {
  std::unique_ptr<Gateway> gw = mock_gateway();
  Example ex;
  MemoryTree tree;

  Fixture() {
    auto ps = personas(7, 2);
    CorpusConfig cfg;
    cfg.seed = 2;
    cfg.kinds = KindSelection::opposed;
    ex = generate_example(*gw, ps, make_pool(ps, 1, 150, 2), cfg);
    auto facts = extract_all(*gw, ex.history).facts;
    tree = build_tree(*gw, std::move(facts), BuildConfig{});
  }

  EvalInputs inputs() const {
    EvalInputs in;
    in.history = &ex.history;
    in.tasks = ex.tasks;
    in.tree = &tree;
    return in;
  }
};

}  // namespace

TEST_CASE("retrieval f1 edge cases") {
  CHECK(retrieval_f1({}, {}) == 1.0);
  CHECK(retrieval_f1({"a"}, {}) == 0.0);
  CHECK(retrieval_f1({}, {"a"}) == 0.0);
  CHECK(retrieval_f1({"a", "b"}, {"c"}) == 0.0);
  CHECK(retrieval_f1({"a", "b", "c", "d"}, {"a", "b"}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("implicitness is bounded and rejects empty text") {
  auto gw = mock_gateway();
  CHECK(implicitness_score(*gw, "What should I cook?", "What should I cook?") == doctest::Approx(0.0));
  const double v = implicitness_score(*gw, "What should I cook?", "My oven broke yesterday.");
  CHECK(v >= 0.0);
  CHECK(v <= 2.0);
  CHECK_THROWS_AS(implicitness_score(*gw, "", "x"), Error);
  QaTask t;
  t.gold_answer = "gold";
  CHECK(implicitness_target(t) == "gold");
  t.evidence_texts = {"one.", "two."};
  CHECK(implicitness_target(t).find("two.") != std::string::npos);
}

TEST_CASE("judging short-circuits identical answers and defaults on garbage") {
  auto gw = mock_gateway();
  auto same = judge_answer(*gw, "q?", "Yes", "Yes");
  CHECK(same.correct);
  CHECK(same.calls == 0);
  auto backend = std::make_shared<ScriptedBackend>([](const ChatRequest&) { return std::string("perhaps"); });
  auto sgw = scripted_gateway(backend);
  auto bad = judge_answer(*sgw, "q?", "a", "b");
  CHECK_FALSE(bad.correct);
  CHECK(bad.defaulted);
  CHECK(bad.calls == 2);
}

TEST_CASE("flat top-k orders by similarity then fact id") {
  auto gw = mock_gateway();
  std::vector<Fact> facts(3);
  facts[0].fact_id = "b";
  facts[0].text = "The user plays chess.";
  facts[1].fact_id = "a";
  facts[1].text = "The user plays chess.";
  facts[2].fact_id = "c";
  facts[2].text = "The user bakes bread.";
  embed_facts(*gw, facts);
  auto top = flat_topk_baseline(*gw, facts, "chess games", 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].fact_id == "a");
  CHECK(top[1].fact_id == "b");
}

TEST_CASE("aggregates skip errored records and leave the ratio null at zero accuracy") {
  std::vector<EvalRecord> rs = {record("1", 1.0, true, 100, 0.5), record("2", 0.0, false, 300, 0.7),
                                record("3", 0.0, false, 0, 0.0, "boom")};
  auto a = compute_aggregates(rs);
  CHECK(a.tasks == 3);
  CHECK(a.scored == 2);
  CHECK(a.errors == 1);
  CHECK(a.accuracy == doctest::Approx(0.5));
  CHECK(a.mean_f1 == doctest::Approx(0.5));
  CHECK(a.mean_tokens == doctest::Approx(200.0));
  REQUIRE(a.token_to_accuracy);
  CHECK(*a.token_to_accuracy == doctest::Approx(400.0));
  CHECK(a.implicitness.min == doctest::Approx(0.5));
  CHECK(a.implicitness.max == doctest::Approx(0.7));
  auto zero = compute_aggregates({record("1", 0.0, false, 50, 0.1)});
  CHECK_FALSE(zero.token_to_accuracy);
}

TEST_CASE("reports round-trip and tampering is detected") {
  Report r;
  r.run_id = "r";
  r.strategy = "brute_force";
  r.records = {record("1", 1.0, true, 10, 0.2), record("2", 0.5, false, 30, 0.4)};
  r.aggregates = compute_aggregates(r.records);
  auto j = to_json(r);
  CHECK(to_json(report_from_json(j)) == j);
  auto tampered = j;
  tampered["aggregates"]["accuracy"] = 0.99;
  try {
    report_from_json(tampered);
    FAIL("expected corrupt_report");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_report);
  }
  auto cmp = comparison_json({r, r});
  auto back = reports_from_comparison(cmp);
  REQUIRE(back.size() == 2);
  CHECK(to_json(back[1]) == j);
  const auto csv = report_csv({r});
  CHECK(csv.rfind("run_id,strategy", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 3);
}

TEST_CASE("every strategy runs end to end on a generated example") {
  Fixture fx;
  EvalConfig cfg;
  const auto total = history_stats(fx.ex.history).total_tokens;
  for (auto s : parse_strategy_list("tacitree_summary,tacitree_facts,flat_topk,brute_force,full_context")) {
    auto r = run_eval(*fx.gw, fx.inputs(), s, cfg);
    CHECK(r.strategy == strategy_name(s));
    CHECK(r.records.size() == fx.ex.tasks.size());
    CHECK(r.aggregates.errors == 0);
    for (const auto& rec : r.records) {
      CHECK(rec.retrieval_f1 >= 0.0);
      CHECK(rec.retrieval_f1 <= 1.0);
      CHECK(std::is_sorted(rec.retrieved_session_ids.begin(), rec.retrieved_session_ids.end()));
      if (s == Strategy::full_context) CHECK(rec.retrieved_tokens == total);
    }
  }
}

TEST_CASE("fact-unit f1 and determinism of reports") {
  Fixture fx;
  EvalConfig cfg;
  cfg.unit = F1Unit::fact;
  auto a = run_eval(*fx.gw, fx.inputs(), Strategy::brute_force, cfg);
  auto b = run_eval(*fx.gw, fx.inputs(), Strategy::brute_force, cfg);
  CHECK(a.f1_unit == "fact");
  CHECK(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("strategy names parse and unknown ones are rejected") {
  CHECK(parse_strategy("flat_topk") == Strategy::flat_topk);
  CHECK(parse_f1_unit("fact") == F1Unit::fact);
  CHECK_THROWS_AS(parse_strategy("nope"), Error);
  CHECK_THROWS_AS(parse_strategy_list("brute_force,,x"), Error);
}
