#include "tacitree/retriever.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <set>

#include "tacitree/error.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/parallel.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace {

std::string one_line(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

bool says_yes(std::string_view response) {
  auto w = text::words(response);
  return !w.empty() && w.front() == "yes";
}

// Judges `cands` in batches (concurrently) and returns the selected
// candidate positions in ascending order.
std::vector<std::size_t> judge_batched(Gateway& gw, std::string_view query, const std::vector<Candidate>& cands,
                                       std::size_t batch_size, std::size_t max_selected, std::size_t& calls) {
  const std::size_t n_batches = (cands.size() + batch_size - 1) / batch_size;
  std::vector<JudgeResult> results(n_batches);
  parallel_for(n_batches, gw.max_inflight(), [&](std::size_t b) {
    const std::size_t lo = b * batch_size, hi = std::min(cands.size(), lo + batch_size);
    results[b] = judge_relevance(gw, query, std::span<const Candidate>(cands.data() + lo, hi - lo), max_selected);
  });
  std::vector<std::size_t> picked;
  for (std::size_t b = 0; b < n_batches; ++b) {
    calls += results[b].calls;
    const std::size_t lo = b * batch_size, hi = std::min(cands.size(), lo + batch_size);
    for (const auto& id : results[b].ids) {
      for (std::size_t i = lo; i < hi; ++i) {
        if (cands[i].id == id) {
          picked.push_back(i);
          break;
        }
      }
    }
  }
  std::sort(picked.begin(), picked.end());
  picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  return picked;
}

std::size_t node_index(std::string_view id) { return std::stoul(std::string(id.substr(id.find('-') + 1))); }

}  // namespace

const char* granularity_name(Granularity g) { return g == Granularity::facts ? "facts" : "summaries"; }

Granularity parse_granularity(std::string_view s) {
  if (s == "facts") return Granularity::facts;
  if (s == "summaries") return Granularity::summaries;
  throw Error(Errc::invalid_config, "granularity", std::string(s));
}

void RetrievalConfig::validate() const {
  if (batch_size < 1) throw Error(Errc::invalid_config, "batch_size", "must be >= 1");
  if (max_selected_per_level < 1) throw Error(Errc::invalid_config, "max_selected_per_level", "must be >= 1");
  if (fallback_top_m < 0 || fallback_top_m > max_selected_per_level)
    throw Error(Errc::invalid_config, "fallback_top_m", "must lie in [0, max_selected_per_level]");
}

std::optional<std::vector<std::size_t>> parse_index_list(std::string_view response, std::size_t n) {
  const auto trimmed = text::trim(response);
  auto w = text::words(trimmed);
  if (!w.empty() && w.front() == "none") return std::vector<std::size_t>{};
  std::vector<std::size_t> out;
  bool any_number = false;
  std::size_t i = 0;
  while (i < trimmed.size()) {
    if (!std::isdigit(static_cast<unsigned char>(trimmed[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[j]))) ++j;
    any_number = true;
    if (j - i <= 9) {
      const std::size_t v = std::stoul(trimmed.substr(i, j - i));
      if (v >= 1 && v <= n && std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    i = j;
  }
  if (!any_number || out.empty()) return std::nullopt;
  return out;
}

JudgeResult judge_relevance(Gateway& gw, std::string_view query, std::span<const Candidate> candidates,
                            std::size_t max_selected) {
  JudgeResult res;
  if (candidates.empty()) return res;
  std::string block;
  for (std::size_t i = 0; i < candidates.size(); ++i) block += fmt::format("[{}] {}\n", i + 1, one_line(candidates[i].text));
  TemplateVars vars{{"query", std::string(query)}, {"candidates", block}};
  auto reply = gw.chat(Role::framework_m2, prompts::relevance_batch(), vars);
  res.calls = 1;
  if (auto idx = parse_index_list(reply.text, candidates.size())) {
    for (auto i : *idx) res.ids.push_back(candidates[i - 1].id);
  } else {
    res.used_single_fallback = true;
    for (const auto& c : candidates) {
      TemplateVars one{{"query", std::string(query)}, {"candidate", one_line(c.text)}};
      ++res.calls;
      if (says_yes(gw.chat(Role::framework_m2, prompts::relevance_single(), one).text)) res.ids.push_back(c.id);
    }
  }
  if (res.ids.size() > max_selected) res.ids.resize(max_selected);
  return res;
}

void sort_facts_chronologically(std::vector<Fact>& facts) {
  std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) {
    if (a.source_timestamp != b.source_timestamp) return a.source_timestamp < b.source_timestamp;
    return a.fact_id < b.fact_id;
  });
}

RetrievalResult retrieve(Gateway& gw, const MemoryTree& tree, std::string_view query, const RetrievalConfig& rcfg) {
  rcfg.validate();
  if (tree.levels.empty() || tree.roots().empty()) throw Error(Errc::empty_tree, tree.tree_id);
  RetrievalResult r;
  r.query = std::string(query);
  r.granularity = rcfg.answer_granularity;
  const auto batch = static_cast<std::size_t>(rcfg.batch_size);
  const auto cap = static_cast<std::size_t>(rcfg.max_selected_per_level);

  std::vector<const TreeNode*> frontier;
  for (const auto& n : tree.roots()) frontier.push_back(&n);
  std::vector<const TreeNode*> selected;
  for (int level = tree.root_level; level >= 0; --level) {
    std::vector<Candidate> cands;
    for (const auto* n : frontier) cands.push_back({n->node_id, n->summary});
    r.judged_nodes += cands.size();
    auto picked = judge_batched(gw, query, cands, batch, cap, r.judge_calls);

    if (level == tree.root_level && picked.empty() && rcfg.fallback_top_m > 0) {
      const Embedding q = gw.embed_one(query);
      std::vector<std::string> summaries;
      for (const auto* n : frontier) summaries.push_back(n->summary);
      auto vecs = gw.embed(summaries);
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t i = 0; i < vecs.size(); ++i) scored.emplace_back(cosine(q, vecs[i]), i);
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      const auto m = std::min(scored.size(), static_cast<std::size_t>(rcfg.fallback_top_m));
      for (std::size_t i = 0; i < m; ++i) picked.push_back(scored[i].second);
      std::sort(picked.begin(), picked.end());
      r.used_fallback = true;
    }

    selected.clear();
    auto& ids = r.selected_per_level[level];
    for (auto i : picked) {
      selected.push_back(frontier[i]);
      ids.push_back(frontier[i]->node_id);
    }
    if (level == 0) break;

    frontier.clear();
    for (const auto* n : selected) {
      for (const auto& c : n->child_node_ids) {
        const TreeNode* child = tree.find(c);
        if (!child) throw Error(Errc::corrupt_node_ref, c);
        frontier.push_back(child);
      }
    }
    std::sort(frontier.begin(), frontier.end(),
              [](const TreeNode* a, const TreeNode* b) { return node_index(a->node_id) < node_index(b->node_id); });
    if (frontier.empty()) {
      for (int l = level - 1; l >= 0; --l) r.selected_per_level[l];
      selected.clear();
      break;
    }
  }

  std::vector<Fact> facts;
  for (const auto* leaf : selected) {
    if (leaf->level != 0) continue;
    r.leaf_summaries.push_back(leaf->summary);
    for (const auto& fid : leaf->fact_ids) {
      auto it = tree.facts.find(fid);
      if (it == tree.facts.end()) throw Error(Errc::corrupt_node_ref, fid);
      facts.push_back(it->second);
    }
  }
  if (rcfg.leaf_fact_filter && !facts.empty()) {
    std::vector<Candidate> cands;
    for (const auto& f : facts) cands.push_back({f.fact_id, f.text});
    r.judged_nodes += cands.size();
    auto keep = judge_batched(gw, query, cands, batch, std::numeric_limits<std::size_t>::max(), r.judge_calls);
    std::vector<Fact> kept;
    for (auto i : keep) kept.push_back(std::move(facts[i]));
    facts = std::move(kept);
  }
  sort_facts_chronologically(facts);
  r.facts = std::move(facts);

  if (r.granularity == Granularity::summaries) {
    for (const auto& s : r.leaf_summaries) r.retrieved_tokens += gw.tokenizer().count(s);
  } else {
    for (const auto& f : r.facts) r.retrieved_tokens += f.token_count;
  }
  return r;
}

RetrievalResult brute_force_retrieve(Gateway& gw, std::span<const Fact> facts, std::string_view query,
                                     const RetrievalConfig& rcfg) {
  rcfg.validate();
  RetrievalResult r;
  r.query = std::string(query);
  r.granularity = Granularity::facts;
  std::vector<Candidate> cands;
  for (const auto& f : facts) cands.push_back({f.fact_id, f.text});
  r.judged_nodes = cands.size();
  auto keep = judge_batched(gw, query, cands, static_cast<std::size_t>(rcfg.batch_size),
                            std::numeric_limits<std::size_t>::max(), r.judge_calls);
  for (auto i : keep) r.facts.push_back(facts[i]);
  sort_facts_chronologically(r.facts);
  for (const auto& f : r.facts) r.retrieved_tokens += f.token_count;
  return r;
}

std::string retrieval_context(const RetrievalResult& r) {
  std::vector<std::string> lines;
  if (r.granularity == Granularity::summaries) {
    for (const auto& s : r.leaf_summaries) lines.push_back(one_line(s));
  } else {
    for (const auto& f : r.facts) lines.push_back(one_line(f.text));
  }
  return text::join(lines, "\n");
}

json to_json(const RetrievalResult& r) {
  json levels = json::object();
  for (const auto& [l, ids] : r.selected_per_level) levels[std::to_string(l)] = ids;
  json facts = json::array();
  for (const auto& f : r.facts) {
    facts.push_back({{"fact_id", f.fact_id},
                     {"source_session_id", f.source_session_id},
                     {"source_timestamp", format_timestamp(f.source_timestamp)},
                     {"text", f.text}});
  }
  return {{"query", r.query},
          {"granularity", granularity_name(r.granularity)},
          {"selected_per_level", std::move(levels)},
          {"leaf_summaries", r.leaf_summaries},
          {"facts", std::move(facts)},
          {"judge_calls", r.judge_calls},
          {"judged_nodes", r.judged_nodes},
          {"retrieved_tokens", r.retrieved_tokens},
          {"used_fallback", r.used_fallback}};
}

}  // namespace tacitree
