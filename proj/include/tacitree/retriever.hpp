#pragma once

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tacitree/gateway/gateway.hpp"
#include "tacitree/tree.hpp"

namespace tacitree {

enum class Granularity { summaries, facts };

const char* granularity_name(Granularity g);
Granularity parse_granularity(std::string_view s);

struct RetrievalConfig {
  // Cap on the ids a single judge call may return.
  int max_selected_per_level = 8;
  int fallback_top_m = 2;
  Granularity answer_granularity = Granularity::summaries;
  int batch_size = 15;
  // Judge the facts of the selected leaves one by one and keep only the
  // relevant ones, instead of returning every fact of a selected leaf.
  bool leaf_fact_filter = false;

  void validate() const;
};

struct RetrievalResult {
  std::string query;
  std::map<int, std::vector<std::string>> selected_per_level;
  std::vector<std::string> leaf_summaries;
  std::vector<Fact> facts;
  std::size_t judge_calls = 0;
  std::size_t judged_nodes = 0;
  std::size_t retrieved_tokens = 0;
  bool used_fallback = false;
  Granularity granularity = Granularity::summaries;
};

struct Candidate {
  std::string id;
  std::string text;
};

struct JudgeResult {
  std::vector<std::string> ids;  // in the order the judge listed them
  std::size_t calls = 0;
  bool used_single_fallback = false;
};

// "NONE" -> empty; otherwise the in-range 1-based indices in listed order
// (duplicates and junk ignored). nullopt when nothing usable was found.
std::optional<std::vector<std::size_t>> parse_index_list(std::string_view response, std::size_t n);

// One batched call; falls back to one yes/no call per candidate when the
// answer cannot be parsed. At most `max_selected` ids are returned.
JudgeResult judge_relevance(Gateway& gw, std::string_view query, std::span<const Candidate> candidates,
                            std::size_t max_selected = std::numeric_limits<std::size_t>::max());

// Level-order descent from the root set, judging only the children of
// selected parents.
RetrievalResult retrieve(Gateway& gw, const MemoryTree& tree, std::string_view query, const RetrievalConfig& rcfg = {});

// Judges every fact (batched); the recall reference.
RetrievalResult brute_force_retrieve(Gateway& gw, std::span<const Fact> facts, std::string_view query,
                                     const RetrievalConfig& rcfg = {});

// Orders by (source timestamp, fact id).
void sort_facts_chronologically(std::vector<Fact>& facts);

// Payload text handed to the answering model.
std::string retrieval_context(const RetrievalResult& r);

json to_json(const RetrievalResult& r);

}  // namespace tacitree
