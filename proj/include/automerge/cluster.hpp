#pragma once

#include "automerge/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace automerge {

/// Overlap evidence behind one graph edge.
struct OverlapMeta {
  double length = 0.0;       // L_ij, meters
  double feature_gap = 0.0;  // aggregated descriptor distance over matched places
};

/// Agents and their symmetric overlap weights. Agents are kept sorted by id so
/// W's layout depends only on the set of agents, never on arrival order.
struct ConnectionGraph {
  std::vector<SegmentId> agents;
  Eigen::MatrixXd W;
  std::map<std::pair<SegmentId, SegmentId>, OverlapMeta> overlap_meta;

  int size() const { return static_cast<int>(agents.size()); }
  bool contains(SegmentId id) const;
  int index_of(SegmentId id) const;
  /// Inserts an agent with no connections; no-op when already present.
  void add_agent(SegmentId id);
  double weight(SegmentId a, SegmentId b) const;
  void set_weight(SegmentId a, SegmentId b, double w);
};

struct Partition {
  /// Disjoint cover of the agents; each cluster sorted, clusters ordered by
  /// their smallest member.
  std::vector<std::vector<SegmentId>> clusters;
  /// Laplacian spectrum, ascending.
  std::vector<double> eigenvalues;
  double theta = 0.0;

  int k() const { return static_cast<int>(clusters.size()); }
  /// Index of the cluster holding `id`, or -1.
  int cluster_of(SegmentId id) const;

  friend bool operator==(const Partition&, const Partition&) = default;
};

/// exp(-(gap^2 + C_w) / (2 L^2 + 1e-4))
double connection_weight(double feature_gap, double overlap_length, double c_w);

/// Diagonal of the degree matrix, d_ii = sum_j w_ij.
Eigen::VectorXd degree_matrix(const ConnectionGraph& g);

/// L = D - W.
Eigen::MatrixXd laplacian(const ConnectionGraph& g);

/// 1/2 sum_i cut(A_i, complement) / vol(A_i). Throws ZeroVolume for a cluster
/// without any degree and InvalidArgument when p does not cover g.
double ncut_value(const ConnectionGraph& g, const Partition& p);

/// Canonical ordering for a set of clusters.
void canonicalize(std::vector<std::vector<SegmentId>>& clusters);

struct SpectralParams {
  double theta = 0.1;
  /// 0 means "number of agents".
  int k_max = 0;
  std::uint64_t seed = 5;
  int restarts = 10;
};

/// Unnormalized spectral clustering: k = #(eigenvalues <= theta) capped at
/// k_max, then k-means over the rows of the first k eigenvectors.
/// Zero-degree agents become singletons before the decomposition.
Partition spectral_cluster(const ConnectionGraph& g, const SpectralParams& params);

struct WeightUpdate {
  SegmentId a = 0;
  SegmentId b = 0;
  double weight = 0.0;
  OverlapMeta meta;
  /// Overwrite the stored weight instead of max-merging; 0 removes the edge.
  bool replace = false;
};

struct ClusterState {
  ConnectionGraph graph;
  Partition partition;
  /// Clusters whose membership changed in the last update.
  std::vector<std::vector<SegmentId>> dirty;
};

/// Applies weight updates with the monotone-max rule (a weight only ever
/// grows, unless the update says replace), re-clusters when the graph changed,
/// and flags clusters that are new relative to the previous partition.
ClusterState incremental_update(ClusterState state, const std::vector<WeightUpdate>& changes,
                                const SpectralParams& params);

}  // namespace automerge
