#include <doctest.h>

#include <filesystem>

#include "synthetic.hpp"
#include "tacitree/corpus.hpp"
#include "tacitree/error.hpp"
#include "tacitree/gateway/prompts.hpp"

using namespace tacitree;
using namespace tacitree::testing;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

PersonaTrait trait(std::string text) {
  return {"h-p0-t0", std::move(text), TraitCategory::everyday};
}

}  // namespace

TEST_CASE("trait text is normalized to one 'This person' sentence") {
  CHECK(normalize_trait_text("enjoys hiking. Also likes tea.") == "This person enjoys hiking.");
  CHECK(normalize_trait_text("This person works as a nurse") == "This person works as a nurse.");
  CHECK(trait_predicate("This person enjoys hiking.") == "enjoys hiking");
}

TEST_CASE("persona responses parse into categorized traits") {
  const std::string reply = R"(Here you go:
```json
{"demographics": {"age": "This person is 34 years old."},
 "career_life_and_goals": ["This person works as a nurse."],
 "everyday_life_and_hobbies": ["This person enjoys hiking.", "collects stamps"]}
```)";
  auto traits = parse_persona_response(reply, "h-p1");
  REQUIRE(traits.size() == 4);
  CHECK(traits[0].category == TraitCategory::demographics);
  CHECK(traits[1].category == TraitCategory::career);
  CHECK(traits[2].category == TraitCategory::everyday);
  CHECK(traits[3].text == "This person collects stamps.");
  CHECK(traits[0].trait_id == "h-p1-t0");
  CHECK(traits[3].trait_id == "h-p1-t3");
}

TEST_CASE("persona standardization re-asks once, then gives up") {
  auto backend = std::make_shared<ScriptedBackend>([](const ChatRequest&) { return std::string("no json here"); });
  auto gw = scripted_gateway(backend);
  CHECK(code_of([&] { standardize_persona(*gw, "a surfer", "p"); }) == Errc::unparseable_output);
  CHECK(backend->calls == 2);
  CHECK(code_of([&] { standardize_persona(*gw, "   ", "p"); }) == Errc::empty_input);
}

TEST_CASE("supportive questions turn the trait into a yes/no question") {
  CHECK(supportive_question("This person is a nurse.") == "Is this person a nurse?");
  CHECK(supportive_question("This person can swim.") == "Can this person swim?");
  CHECK(supportive_question("This person enjoys hiking.") == "Does this person enjoy hiking?");
  CHECK(supportive_question("This person often watches birds.") == "Does this person often watch birds?");
  CHECK(supportive_question("This person has two dogs.") == "Does this person have two dogs?");
}

TEST_CASE("numbered lists accept several markers") {
  CHECK(parse_numbered_list("1. first\n2) second\n3: third\n* 4. **fourth**\nnot numbered") ==
        std::vector<std::string>{"first", "second", "third", "fourth"});
}

TEST_CASE("scenarios may not reuse the trait's words") {
  CHECK(violates_banned_words("My stamp album burned.", "This person collects stamps."));
  CHECK_FALSE(violates_banned_words("My garage flooded.", "This person collects stamps."));
}

TEST_CASE("opposed questions are short first-person open questions") {
  CHECK(valid_opposed_question("What can I cook tonight with what I have?"));
  CHECK_FALSE(valid_opposed_question("Can I cook tonight?"));
  CHECK_FALSE(valid_opposed_question("What should we cook tonight?"));
  CHECK_FALSE(valid_opposed_question("What can I cook"));
  CHECK_FALSE(valid_opposed_question(
      "What can I do with all of the many different things that I have lying around my house on a rainy day?"));
}

TEST_CASE("scenario generation ids, filtering and near-threshold flags") {
  auto gw = mock_gateway();
  CorpusConfig cfg;
  AuditLog log;
  auto t = trait("This person enjoys surfing winter swells.");
  auto sc = generate_scenarios(*gw, t, ScenarioKind::opposed, cfg, &log);
  REQUIRE(sc.size() == 20);
  CHECK(sc[0].scenario_id == "h-p0-t0-o0");
  CHECK(sc[19].scenario_id == "h-p0-t0-o19");
  filter_by_similarity(*gw, sc, t, cfg, &log);
  const auto tv = gw->embed_one(t.text);
  for (const auto& s : sc) {
    const double sim = cosine(tv, gw->embed_one(s.text));
    CHECK(s.similarity_to_trait == doctest::Approx(sim));
    CHECK(s.status == (sim < cfg.beta ? ScenarioStatus::filtered : ScenarioStatus::rejected));
  }
  for (const auto& f : log.flags("near_threshold")) CHECK(std::abs(*f.value - cfg.beta) <= cfg.near_threshold_band + 1e-12);
}

TEST_CASE("too few usable scenarios is an error") {
  auto backend = std::make_shared<ScriptedBackend>([](const ChatRequest&) { return std::string("1: only one"); });
  auto gw = scripted_gateway(backend);
  CorpusConfig cfg;
  CHECK(code_of([&] { generate_scenarios(*gw, trait("This person bakes bread."), ScenarioKind::opposed, cfg); }) ==
        Errc::too_few_scenarios);
}

TEST_CASE("transcripts map speaker labels and locate first mentions") {
  auto turns = parse_transcript("Speaker1: Hi there.\nAssistant: Hello!\n\nUser: I fell off my bike.\nAI: Ouch.");
  REQUIRE(turns.size() == 4);
  CHECK(turns[0].role == Speaker::user);
  CHECK(turns[1].role == Speaker::assistant);
  CHECK(turns[3].role == Speaker::assistant);
  CHECK(first_mention(turns, "bike accident") == 2);
  CHECK(first_mention(turns, "volcano") == -1);
}

TEST_CASE("expanded sessions keep the scenario late in the conversation") {
  auto gw = mock_gateway();
  CorpusConfig cfg;
  const std::string scenario = "The zaxkyo at my quawix broke.";
  auto s = expand_to_session(*gw, scenario, "x-s001", cfg.window_start, cfg);
  CHECK(s.session_id == "x-s001");
  CHECK(s.turns.size() >= static_cast<std::size_t>(cfg.min_turns));
  CHECK(s.turns.front().role == Speaker::user);
  CHECK(first_mention(s.turns, scenario) >= cfg.late_mention_turn);
  validate_session(s);
}

TEST_CASE("relabeling alternates user and assistant") {
  Session s;
  s.session_id = "p";
  for (int i = 0; i < 4; ++i) s.turns.push_back({Speaker::assistant, "t" + std::to_string(i)});
  auto r = relabel_alternating(s);
  CHECK(r.turns[0].role == Speaker::user);
  CHECK(r.turns[1].role == Speaker::assistant);
  CHECK(r.turns[2].role == Speaker::user);
}

TEST_CASE("ordering requires a gap between p and R*") {
  CHECK(ordering_ok({"p", "x", "r"}, {{"p", "r"}}));
  CHECK_FALSE(ordering_ok({"p", "r", "x"}, {{"p", "r"}}));
  CHECK_FALSE(ordering_ok({"r", "x", "p"}, {{"p", "r"}}));
  CHECK_FALSE(ordering_ok({"p", "x"}, {{"p", "r"}}));
}

TEST_CASE("generated examples satisfy the corpus constraints") {
  auto gw = mock_gateway();
  auto ps = personas(7, 5);
  auto pool = make_pool(ps, 1, 150, 5);
  CorpusConfig cfg;
  cfg.seed = 5;
  cfg.history_id = "ex";
  auto ex = generate_example(*gw, ps, pool, cfg);
  CHECK(ex.history.sessions.size() >= cfg.min_sessions);
  CHECK(ex.history.sessions.size() <= cfg.max_sessions);
  CHECK(ex.tasks.size() == 7);
  validate_history(ex.history);
  for (const auto& t : ex.tasks) {
    CHECK_FALSE(t.evidence_session_ids.empty());
    for (const auto& id : t.evidence_session_ids) CHECK(ex.history.find_session(id) != nullptr);
    if (t.kind == TaskKind::supportive) {
      CHECK(t.yes_no);
      CHECK((t.gold_answer == "yes" || t.gold_answer == "no"));
    } else {
      CHECK(valid_opposed_question(t.question));
    }
  }
  CHECK(ex.history.header_extra.contains("config"));
  for (const auto& f : ex.review_queue) CHECK(f.kind == "near_threshold");
  CHECK(ex.audit.size() >= ex.review_queue.size());

  auto again = generate_example(*mock_gateway(), ps, pool, cfg);
  CHECK(serialize_history(again.history) == serialize_history(ex.history));
  CHECK(serialize_tasks(again.tasks) == serialize_tasks(ex.tasks));
}

TEST_CASE("an undersized pool is reported") {
  auto gw = mock_gateway();
  auto ps = personas(2, 1);
  CorpusConfig cfg;
  cfg.kinds = KindSelection::opposed;
  CHECK(code_of([&] { generate_example(*gw, ps, make_pool(ps, 1, 4, 1), cfg); }) == Errc::pool_too_small);
}

TEST_CASE("tasks round-trip through jsonl") {
  QaTask t;
  t.task_id = "q1";
  t.trait_id = "p0-t0";
  t.kind = TaskKind::supportive;
  t.question = "Does this person enjoy hiking?";
  t.gold_answer = "Yes";
  t.evidence_session_ids = {"s1", "s2"};
  t.yes_no = true;
  t.trait_text = "This person enjoys hiking.";
  t.evidence_texts = {"a", "b"};
  t.distractor_texts = {"c"};
  t.evidence_similarity = 0.25;
  const auto text = serialize_tasks({t, t});
  auto back = parse_tasks(text);
  REQUIRE(back.size() == 2);
  CHECK(serialize_tasks(back) == text);
  CHECK(back[0].evidence_session_ids == t.evidence_session_ids);
  CHECK(code_of([] { parse_tasks("{broken"); }) == Errc::malformed_line);
}

TEST_CASE("pool directories load one source per file") {
  const auto dir = (std::filesystem::temp_directory_path() / "tacitree_pool_test").string();
  std::filesystem::remove_all(dir);
  auto pool = make_pool(personas(2, 0), 2, 3, 0);
  write_pool(pool, dir);
  auto back = load_pool(dir);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "source0");
  CHECK(back[1].sessions.size() == 3);
  std::filesystem::remove_all(dir);
  CHECK(code_of([&] { load_pool(dir); }) == Errc::io_error);
}

TEST_CASE("corpus config validation") {
  CorpusConfig c;
  c.validate();
  c.beta = 0.0;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
  c = {};
  c.min_sessions = 130;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
  c = {};
  c.window_days = 50;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
}
