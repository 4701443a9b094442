#include "tacitree/tree.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "tacitree/cluster/cluster.hpp"
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

ClusterParams level_params(const BuildConfig& cfg, int level, std::size_t n) {
  ClusterParams p;
  p.k = cfg.k;
  p.n_components = initial_cluster_count(n, cfg.k);
  p.sizing = cfg.level_sizing;
  p.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(level)});
  p.reduce = reduce_options(cfg, derive_seed(cfg.seed, {static_cast<std::uint64_t>(level), 1}));
  return p;
}

MatrixX<double> stack(const std::vector<Embedding>& vs) {
  MatrixX<double> x(static_cast<Eigen::Index>(vs.size()), vs.front().size());
  for (std::size_t i = 0; i < vs.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
  return x;
}

std::vector<std::string> summarize_all(Gateway& gw, const std::vector<std::vector<std::string>>& groups, int level) {
  std::vector<std::string> out(groups.size());
  parallel_for(groups.size(), gw.max_inflight(), [&](std::size_t i) { out[i] = summarize_cluster(gw, groups[i], level); });
  return out;
}

std::string compute_tree_id(const MemoryTree& t) {
  std::string material = to_json(t.config).dump();
  for (const auto& [id, f] : t.facts) {
    material += '\x1f';
    material += id;
    material += '\x1e';
    material += f.text;
  }
  return text::hex64(text::fnv1a64(material));
}

json node_to_json(const TreeNode& n) {
  return {{"node_id", n.node_id},       {"level", n.level},       {"summary", n.summary},
          {"child_node_ids", n.child_node_ids}, {"fact_ids", n.fact_ids}, {"summary_tokens", n.summary_tokens}};
}

TreeNode node_from_json(const json& j) {
  TreeNode n;
  n.node_id = j.at("node_id").get<std::string>();
  n.level = j.at("level").get<int>();
  n.summary = j.at("summary").get<std::string>();
  n.child_node_ids = j.at("child_node_ids").get<std::vector<std::string>>();
  n.fact_ids = j.at("fact_ids").get<std::vector<std::string>>();
  n.summary_tokens = j.at("summary_tokens").get<std::size_t>();
  return n;
}

}  // namespace

std::string make_node_id(int level, std::size_t index) { return fmt::format("L{}-{}", level, index); }

const TreeNode* MemoryTree::find(std::string_view id) const {
  if (id.size() < 4 || id[0] != 'L') return nullptr;
  auto dash = id.find('-');
  if (dash == std::string_view::npos) return nullptr;
  std::size_t level = 0, index = 0;
  auto r1 = std::from_chars(id.data() + 1, id.data() + dash, level);
  auto r2 = std::from_chars(id.data() + dash + 1, id.data() + id.size(), index);
  if (r1.ec != std::errc() || r1.ptr != id.data() + dash || r2.ec != std::errc() || r2.ptr != id.data() + id.size())
    return nullptr;
  if (level >= levels.size() || index >= levels[level].size()) return nullptr;
  const TreeNode& n = levels[level][index];
  return n.node_id == id ? &n : nullptr;
}

std::size_t MemoryTree::node_count() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.size();
  return n;
}

std::string summarize_cluster(Gateway& gw, const std::vector<std::string>& texts, int level) {
  if (texts.empty()) throw Error(Errc::empty_input, "summarize_cluster");
  std::vector<std::string> lines;
  lines.reserve(texts.size());
  for (const auto& t : texts) lines.push_back(one_line(t));
  TemplateVars vars{{"text", text::join(lines, "\n")}};
  const auto& tmpl = level == 0 ? prompts::summarize_leaf() : prompts::summarize_high();
  auto s = text::trim(gw.chat(Role::framework_m2, tmpl, vars).text);
  if (s.empty()) s = text::trim(gw.chat(Role::framework_m2, tmpl, vars, prompts::kReaskSuffix).text);
  if (!s.empty()) return s;
  std::vector<std::string> firsts;
  for (const auto& t : lines) {
    auto sentences = text::split_sentences(t);
    if (!sentences.empty()) firsts.push_back(sentences.front());
  }
  auto fallback = text::join(firsts, " ");
  return fallback.empty() ? std::string("(empty)") : fallback;
}

std::vector<TreeNode> build_level(Gateway& gw, const std::vector<TreeNode>& prev, int level, const BuildConfig& cfg) {
  if (prev.empty()) throw Error(Errc::empty_input, "build_level");
  std::vector<std::vector<std::size_t>> clusters;
  if (prev.size() == 1) {
    clusters = {{0}};
  } else {
    std::vector<std::string> summaries;
    for (const auto& n : prev) summaries.push_back(n.summary);
    clusters = cluster_vectors(stack(gw.embed(summaries)), level_params(cfg, level, prev.size())).clusters;
  }

  std::vector<std::vector<std::string>> groups;
  for (const auto& c : clusters) {
    auto& g = groups.emplace_back();
    for (auto i : c) g.push_back(prev[i].summary);
  }
  auto summaries = summarize_all(gw, groups, level);

  std::vector<TreeNode> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    TreeNode n;
    n.node_id = make_node_id(level, c);
    n.level = level;
    n.summary = std::move(summaries[c]);
    n.summary_tokens = gw.tokenizer().count(n.summary);
    for (auto i : clusters[c]) n.child_node_ids.push_back(prev[i].node_id);
    out.push_back(std::move(n));
  }
  return out;
}

MemoryTree build_tree(Gateway& gw, std::vector<Fact> facts, const BuildConfig& cfg) {
  cfg.validate();
  if (facts.empty()) throw Error(Errc::empty_input, "build_tree", "no facts");
  std::set<std::string> seen;
  for (const auto& f : facts) {
    if (!seen.insert(f.fact_id).second) throw Error(Errc::invalid_history, f.fact_id, "duplicate fact id");
  }

  {
    std::vector<std::string> missing_texts;
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < facts.size(); ++i) {
      if (!facts[i].embedding) {
        missing.push_back(i);
        missing_texts.push_back(facts[i].text);
      }
    }
    if (!missing.empty()) {
      auto vecs = gw.embed(missing_texts);
      for (std::size_t j = 0; j < missing.size(); ++j) facts[missing[j]].embedding = std::move(vecs[j]);
    }
  }

  ClusterAssignment leaves;
  if (cfg.level_sizing == LevelSizing::hard_cap) {
    leaves = cluster_facts(facts, cfg);
  } else if (facts.size() == 1) {
    leaves = canonicalize({0});
  } else {
    leaves = cluster_vectors(embedding_matrix(facts), level_params(cfg, 0, facts.size()));
  }

  std::vector<std::vector<std::string>> groups;
  for (const auto& c : leaves.clusters) {
    auto& g = groups.emplace_back();
    for (auto i : c) g.push_back(facts[i].text);
  }
  auto summaries = summarize_all(gw, groups, 0);

  MemoryTree t;
  t.config = cfg;
  auto& level0 = t.levels.emplace_back();
  for (std::size_t c = 0; c < leaves.clusters.size(); ++c) {
    TreeNode n;
    n.node_id = make_node_id(0, c);
    n.summary = std::move(summaries[c]);
    n.summary_tokens = gw.tokenizer().count(n.summary);
    for (auto i : leaves.clusters[c]) n.fact_ids.push_back(facts[i].fact_id);
    level0.push_back(std::move(n));
  }

  while (true) {
    const auto& top = t.levels.back();
    if (static_cast<int>(top.size()) < cfg.root_size || top.size() == 1) break;
    auto next = build_level(gw, top, static_cast<int>(t.levels.size()), cfg);
    const bool progressed = next.size() < top.size();
    t.levels.push_back(std::move(next));
    if (!progressed) break;
  }
  t.root_level = static_cast<int>(t.levels.size()) - 1;

  for (auto& f : facts) {
    if (!cfg.store_embeddings) f.embedding.reset();
    auto id = f.fact_id;
    t.facts.emplace(std::move(id), std::move(f));
  }
  t.tree_id = compute_tree_id(t);
  return t;
}

void validate_tree(const MemoryTree& t) {
  if (t.levels.empty() || t.levels.front().empty()) throw Error(Errc::empty_tree, t.tree_id);
  if (t.root_level != static_cast<int>(t.levels.size()) - 1)
    throw Error(Errc::corrupt_node_ref, "root_level", "does not name the top level");

  std::set<std::string> fact_refs;
  std::set<std::string> child_refs;
  for (std::size_t l = 0; l < t.levels.size(); ++l) {
    if (t.levels[l].empty()) throw Error(Errc::corrupt_node_ref, fmt::format("level {}", l), "empty level");
    for (std::size_t i = 0; i < t.levels[l].size(); ++i) {
      const auto& n = t.levels[l][i];
      if (n.node_id != make_node_id(static_cast<int>(l), i) || n.level != static_cast<int>(l))
        throw Error(Errc::corrupt_node_ref, n.node_id, "id does not match position");
      if (n.summary.empty()) throw Error(Errc::corrupt_node_ref, n.node_id, "empty summary");
      if (l == 0) {
        if (n.fact_ids.empty() || !n.child_node_ids.empty())
          throw Error(Errc::corrupt_node_ref, n.node_id, "leaf must own facts only");
        for (const auto& f : n.fact_ids) {
          if (!t.facts.count(f)) throw Error(Errc::corrupt_node_ref, f, "unknown fact");
          if (!fact_refs.insert(f).second) throw Error(Errc::corrupt_node_ref, f, "fact owned twice");
        }
      } else {
        if (n.child_node_ids.empty() || !n.fact_ids.empty())
          throw Error(Errc::corrupt_node_ref, n.node_id, "inner node must own children only");
        for (const auto& c : n.child_node_ids) {
          const TreeNode* child = t.find(c);
          if (!child || child->level != static_cast<int>(l) - 1) throw Error(Errc::corrupt_node_ref, c, "bad child reference");
          if (!child_refs.insert(c).second) throw Error(Errc::corrupt_node_ref, c, "node has two parents");
        }
      }
    }
    if (l > 0 && child_refs.size() != [&] {
          std::size_t below = 0;
          for (std::size_t j = 0; j < l; ++j) below += t.levels[j].size();
          return below;
        }())
      throw Error(Errc::corrupt_node_ref, fmt::format("level {}", l - 1), "orphan node");
  }
  if (fact_refs.size() != t.facts.size()) throw Error(Errc::corrupt_node_ref, "facts", "unreferenced fact");
}

json tree_to_json(const MemoryTree& t) {
  json nodes = json::array();
  for (const auto& l : t.levels) {
    for (const auto& n : l) nodes.push_back(node_to_json(n));
  }
  json facts = json::array();
  for (const auto& [_, f] : t.facts) facts.push_back(to_json(f));
  return {{"schema_version", kTreeSchemaVersion},
          {"tree_id", t.tree_id},
          {"config", to_json(t.config)},
          {"root_level", t.root_level},
          {"nodes", std::move(nodes)},
          {"facts", std::move(facts)}};
}

MemoryTree tree_from_json(const json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kTreeSchemaVersion)
      throw Error(Errc::schema_version_mismatch, std::to_string(version), fmt::format("expected {}", kTreeSchemaVersion));
    MemoryTree t;
    t.tree_id = j.at("tree_id").get<std::string>();
    t.config = build_config_from_json(j.at("config"));
    t.root_level = j.at("root_level").get<int>();
    for (const auto& jn : j.at("nodes")) {
      auto n = node_from_json(jn);
      if (n.level < 0 || n.level > static_cast<int>(t.levels.size()))
        throw Error(Errc::corrupt_node_ref, n.node_id, "levels out of order");
      if (n.level == static_cast<int>(t.levels.size())) t.levels.emplace_back();
      t.levels[static_cast<std::size_t>(n.level)].push_back(std::move(n));
    }
    for (const auto& jf : j.at("facts")) {
      auto f = fact_from_json(jf);
      auto id = f.fact_id;
      if (!t.facts.emplace(std::move(id), std::move(f)).second)
        throw Error(Errc::corrupt_node_ref, jf.at("fact_id").get<std::string>(), "duplicate fact");
    }
    validate_tree(t);
    return t;
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_node_ref, "tree", e.what());
  }
}

std::string persist_tree(const MemoryTree& t) { return tree_to_json(t).dump(1) + "\n"; }

MemoryTree load_tree(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_node_ref, "tree", e.what());
  }
  return tree_from_json(j);
}

void save_tree_file(const MemoryTree& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, path.string(), "cannot write tree file");
  out << persist_tree(t);
}

MemoryTree load_tree_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, path.string(), "cannot open tree file");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_tree(ss.str());
}

}  // namespace tacitree
