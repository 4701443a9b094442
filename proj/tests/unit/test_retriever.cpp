#include <doctest.h>

#include <set>

#include "synthetic.hpp"
#include "tacitree/error.hpp"
#include "tacitree/fact_extractor.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/retriever.hpp"

using namespace tacitree;
using namespace tacitree::testing;

namespace {

struct Built {
  std::unique_ptr<Gateway> gw;
  std::vector<Fact> facts;
  MemoryTree tree;
};

Built built(std::size_t n, std::size_t topics, std::uint64_t seed) {
  Built b{mock_gateway(), topic_facts(n, topics, seed).facts, {}};
  embed_facts(*b.gw, b.facts);
  b.tree = build_tree(*b.gw, b.facts, BuildConfig{});
  return b;
}

std::set<std::string> ids(const std::vector<Fact>& facts) {
  std::set<std::string> out;
  for (const auto& f : facts) out.insert(f.fact_id);
  return out;
}

}  // namespace

TEST_CASE("index lists parse NONE, numbers and junk") {
  CHECK(parse_index_list("NONE", 5) == std::vector<std::size_t>{});
  CHECK(parse_index_list("3, 1, 3, 9", 5) == std::vector<std::size_t>{3, 1});
  CHECK(parse_index_list("[2] and [4]", 5) == std::vector<std::size_t>{2, 4});
  CHECK_FALSE(parse_index_list("I am not sure", 5));
  CHECK_FALSE(parse_index_list("7, 8", 5));
}

TEST_CASE("unparseable batch answers fall back to one call per candidate") {
  auto backend = std::make_shared<ScriptedBackend>([](const ChatRequest& r) {
    if (r.template_id == prompts::relevance_batch().id()) return std::string("hmm");
    return std::string(r.prompt.find("apple") != std::string_view::npos ? "Yes" : "No");
  });
  auto gw = scripted_gateway(backend);
  std::vector<Candidate> c{{"a", "red apple"}, {"b", "blue car"}, {"c", "green apple"}};
  auto r = judge_relevance(*gw, "fruit", c);
  CHECK(r.used_single_fallback);
  CHECK(r.calls == 4);
  CHECK(r.ids == std::vector<std::string>{"a", "c"});
  CHECK(judge_relevance(*gw, "fruit", c, 1).ids == std::vector<std::string>{"a"});
  CHECK(judge_relevance(*gw, "fruit", {}).calls == 0);
}

TEST_CASE("tree retrieval with per-fact filtering equals brute force") {
  auto b = built(200, 8, 21);
  RetrievalConfig rcfg;
  rcfg.leaf_fact_filter = true;
  rcfg.max_selected_per_level = rcfg.batch_size;
  rcfg.fallback_top_m = 0;
  for (std::size_t t = 0; t < 8; ++t) {
    const auto q = "Tell me about " + topic_word(t, t);
    auto tr = retrieve(*b.gw, b.tree, q, rcfg);
    auto bf = brute_force_retrieve(*b.gw, b.facts, q, rcfg);
    CHECK(ids(tr.facts) == ids(bf.facts));
    CHECK(bf.judged_nodes == b.facts.size());
  }
}

TEST_CASE("retrieved facts are chronological and tokens are counted") {
  auto b = built(90, 4, 5);
  auto r = retrieve(*b.gw, b.tree, "Tell me about " + topic_word(1, 2));
  for (std::size_t i = 1; i < r.facts.size(); ++i) {
    const auto& x = r.facts[i - 1];
    const auto& y = r.facts[i];
    CHECK((x.source_timestamp < y.source_timestamp ||
           (x.source_timestamp == y.source_timestamp && x.fact_id < y.fact_id)));
  }
  CHECK(r.judge_calls >= 1);
  CHECK(r.selected_per_level.count(0) == 1);
  std::size_t summary_tokens = 0;
  for (const auto& s : r.leaf_summaries) summary_tokens += count_tokens(s);
  CHECK(r.retrieved_tokens == summary_tokens);

  RetrievalConfig facts_cfg;
  facts_cfg.answer_granularity = Granularity::facts;
  auto rf = retrieve(*b.gw, b.tree, "Tell me about " + topic_word(1, 2), facts_cfg);
  std::size_t fact_tokens = 0;
  for (const auto& f : rf.facts) fact_tokens += f.token_count;
  CHECK(rf.retrieved_tokens == fact_tokens);
  CHECK(retrieval_context(rf).find(rf.facts.front().text) != std::string::npos);
}

TEST_CASE("an irrelevant query falls back to the most similar roots") {
  auto b = built(120, 6, 6);
  RetrievalConfig rcfg;
  auto r = retrieve(*b.gw, b.tree, "zzzz qqqq unrelated", rcfg);
  CHECK(r.used_fallback);
  CHECK(r.selected_per_level.at(b.tree.root_level).size() == 2);
  rcfg.fallback_top_m = 0;
  auto none = retrieve(*b.gw, b.tree, "zzzz qqqq unrelated", rcfg);
  CHECK_FALSE(none.used_fallback);
  CHECK(none.facts.empty());
}

TEST_CASE("retrieval config validation") {
  RetrievalConfig c;
  c.validate();
  c.fallback_top_m = 99;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_granularity("facts") == Granularity::facts);
  CHECK(std::string(granularity_name(Granularity::summaries)) == "summaries");
  CHECK_THROWS_AS(parse_granularity("bogus"), Error);
}
