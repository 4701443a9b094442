#include <doctest.h>

#include "synthetic.hpp"
#include "tacitree/error.hpp"
#include "tacitree/fact_extractor.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/tree.hpp"

using namespace tacitree;
using namespace tacitree::testing;

namespace {

std::vector<Fact> facts_for(Gateway& gw, std::size_t n, std::uint64_t seed = 1) {
  auto f = topic_facts(n, std::max<std::size_t>(2, n / 20), seed).facts;
  embed_facts(gw, f);
  return f;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

}  // namespace

TEST_CASE("node ids encode level and index") {
  CHECK(make_node_id(0, 3) == "L0-3");
  CHECK(make_node_id(2, 10) == "L2-10");
}

TEST_CASE("a small fact set is a single root level") {
  auto gw = mock_gateway();
  auto t = build_tree(*gw, facts_for(*gw, 12), BuildConfig{});
  CHECK(t.root_level == 0);
  CHECK(t.levels.size() == 1);
  CHECK(t.levels[0].size() == 2);
  CHECK(t.facts.size() == 12);
  validate_tree(t);
}

TEST_CASE("every fact hangs under exactly one leaf and every node under one parent") {
  auto gw = mock_gateway();
  auto t = build_tree(*gw, facts_for(*gw, 150, 3), BuildConfig{});
  validate_tree(t);
  CHECK(t.roots().size() < 15);
  std::size_t owned = 0;
  for (const auto& leaf : t.levels[0]) {
    CHECK(leaf.child_node_ids.empty());
    CHECK_FALSE(leaf.fact_ids.empty());
    CHECK(leaf.summary_tokens == count_tokens(leaf.summary));
    owned += leaf.fact_ids.size();
  }
  CHECK(owned == 150);
  CHECK(t.node_count() > t.levels[0].size());
  CHECK(t.find("L0-0") != nullptr);
  CHECK(t.find("L9-0") == nullptr);
  CHECK(t.find("garbage") == nullptr);
}

TEST_CASE("persist and load are structural identities") {
  auto gw = mock_gateway();
  BuildConfig cfg;
  cfg.seed = 8;
  auto t = build_tree(*gw, facts_for(*gw, 60), cfg);
  const auto bytes = persist_tree(t);
  auto back = load_tree(bytes);
  CHECK(back == t);
  CHECK(persist_tree(back) == bytes);
  CHECK(back.config == cfg);
}

TEST_CASE("builds are byte-identical for the same seed") {
  auto gw1 = mock_gateway(), gw2 = mock_gateway();
  auto a = build_tree(*gw1, facts_for(*gw1, 80), BuildConfig{});
  auto b = build_tree(*gw2, facts_for(*gw2, 80), BuildConfig{});
  CHECK(persist_tree(a) == persist_tree(b));
}

TEST_CASE("stored trees are validated on load") {
  auto gw = mock_gateway();
  auto t = build_tree(*gw, facts_for(*gw, 30), BuildConfig{});
  auto j = tree_to_json(t);

  auto wrong_version = j;
  wrong_version["schema_version"] = 99;
  CHECK(code_of([&] { load_tree(wrong_version.dump()); }) == Errc::schema_version_mismatch);

  auto dangling = j;
  dangling["nodes"][0]["fact_ids"].push_back("nope#f0");
  CHECK(code_of([&] { load_tree(dangling.dump()); }) == Errc::corrupt_node_ref);

  MemoryTree empty;
  CHECK(code_of([&] { validate_tree(empty); }) == Errc::empty_tree);
}

TEST_CASE("empty summaries are re-asked once and then replaced by first sentences") {
  auto backend = std::make_shared<ScriptedBackend>([](const ChatRequest&) { return std::string("   "); });
  auto gw = scripted_gateway(backend);
  auto s = summarize_cluster(*gw, {"The user runs. Often.", "The user swims."}, 0);
  CHECK(backend->calls == 2);
  CHECK(s.find("The user runs.") != std::string::npos);
  CHECK(s.find("The user swims.") != std::string::npos);
  CHECK(s.find("Often") == std::string::npos);
}

TEST_CASE("leaf and higher levels use different prompts") {
  std::vector<std::string> seen;
  std::mutex mu;
  auto backend = std::make_shared<ScriptedBackend>([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    seen.emplace_back(r.template_id);
    return std::string("summary");
  });
  auto gw = scripted_gateway(backend);
  summarize_cluster(*gw, {"a"}, 0);
  summarize_cluster(*gw, {"a"}, 1);
  REQUIRE(seen.size() == 2);
  CHECK(seen[0] == prompts::summarize_leaf().id());
  CHECK(seen[1] == prompts::summarize_high().id());
}
