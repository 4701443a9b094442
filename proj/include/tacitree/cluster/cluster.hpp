#pragma once

#include <span>
#include <string>
#include <vector>

#include "tacitree/cluster/gmm.hpp"
#include "tacitree/cluster/reduce.hpp"
#include "tacitree/memory_model.hpp"

namespace tacitree {

// A partition of n items. Clusters are numbered by their smallest member
// index and list members in ascending order.
struct ClusterAssignment {
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> clusters;
  bool degenerate_input = false;

  std::size_t max_cluster_size() const;
};

// max(1, floor(n / k))
int initial_cluster_count(std::size_t n, int k);

// Rebuilds `clusters` from `labels` and renumbers so that cluster ids follow
// the order of each cluster's smallest member.
ClusterAssignment canonicalize(std::vector<int> labels);

// Argmax posterior (ties to the lowest component id), then every cluster
// larger than k is re-fit with ceil(size/k) components on its members; after
// 5 failed attempts the members are dealt round-robin.
ClusterAssignment assign_with_cap(const GmmModel<double>& model, const MatrixX<double>& m, int k, std::uint64_t seed);

// Exactly model.n_components() non-empty clusters, none larger than
// ceil(n / n_components). Each component first takes its best point, then
// points are placed greedily by descending posterior.
ClusterAssignment assign_exact_count(const GmmModel<double>& model, const MatrixX<double>& m);

struct ClusterParams {
  int k = 6;
  int n_components = 1;
  LevelSizing sizing = LevelSizing::hard_cap;
  ReduceOptions reduce;
  std::uint64_t seed = 0;
};

// reduce -> fit_gmm -> assignment, on row vectors.
ClusterAssignment cluster_vectors(const MatrixX<double>& vectors, const ClusterParams& p);

// Stacks embeddings as rows; throws MissingEmbedding.
MatrixX<double> embedding_matrix(std::span<const Fact> facts);

// Facts -> clusters with the hard cap k and H0 = initial_cluster_count.
ClusterAssignment cluster_facts(std::span<const Fact> facts, const BuildConfig& cfg);

std::vector<std::vector<std::string>> cluster_fact_ids(const ClusterAssignment& a, std::span<const Fact> facts);

ReduceOptions reduce_options(const BuildConfig& cfg, std::uint64_t seed);

}  // namespace tacitree
