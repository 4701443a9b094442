#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tacitree/gateway/gateway.hpp"
#include "tacitree/memory_model.hpp"

namespace tacitree {

inline constexpr int kTreeSchemaVersion = 1;

struct TreeNode {
  std::string node_id;  // "L{level}-{index}"
  int level = 0;
  std::string summary;
  std::vector<std::string> child_node_ids;
  std::vector<std::string> fact_ids;
  std::size_t summary_tokens = 0;

  bool operator==(const TreeNode&) const = default;
};

struct MemoryTree {
  std::string tree_id;
  std::vector<std::vector<TreeNode>> levels;
  int root_level = 0;
  BuildConfig config;
  std::map<std::string, Fact> facts;

  const std::vector<TreeNode>& roots() const { return levels.at(static_cast<std::size_t>(root_level)); }
  // nullptr for unknown or malformed ids.
  const TreeNode* find(std::string_view node_id) const;
  std::size_t node_count() const;

  bool operator==(const MemoryTree&) const = default;
};

std::string make_node_id(int level, std::size_t index);

// Level 0 asks for a detail-preserving condensation, higher levels for a
// one-sentence high-level summary. An empty answer is re-asked once, then
// replaced by the first sentence of every input.
std::string summarize_cluster(Gateway& gw, const std::vector<std::string>& texts, int level);

// Clusters `prev` (summaries re-embedded) into max(1, floor(|prev|/k))
// groups and summarizes each; nodes get ids at `level`.
std::vector<TreeNode> build_level(Gateway& gw, const std::vector<TreeNode>& prev, int level, const BuildConfig& cfg);

// Builds levels until one has fewer than L nodes (or a single node); that
// level is the root set.
MemoryTree build_tree(Gateway& gw, std::vector<Fact> facts, const BuildConfig& cfg);

// Throws CorruptNodeRef / EmptyTree on structural violations.
void validate_tree(const MemoryTree& t);

json tree_to_json(const MemoryTree& t);
MemoryTree tree_from_json(const json& j);
std::string persist_tree(const MemoryTree& t);
MemoryTree load_tree(std::string_view bytes);
void save_tree_file(const MemoryTree& t, const std::filesystem::path& path);
MemoryTree load_tree_file(const std::filesystem::path& path);

}  // namespace tacitree
