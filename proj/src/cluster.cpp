#include "automerge/cluster.hpp"

#include "automerge/errors.hpp"
#include "automerge/kmeans.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

namespace automerge {

bool ConnectionGraph::contains(SegmentId id) const {
  return std::binary_search(agents.begin(), agents.end(), id);
}

int ConnectionGraph::index_of(SegmentId id) const {
  const auto it = std::lower_bound(agents.begin(), agents.end(), id);
  if (it == agents.end() || *it != id) {
    throw Error(ErrorCode::InvalidArgument, "cluster", "unknown agent " + std::to_string(id));
  }
  return static_cast<int>(it - agents.begin());
}

void ConnectionGraph::add_agent(SegmentId id) {
  const auto it = std::lower_bound(agents.begin(), agents.end(), id);
  if (it != agents.end() && *it == id) return;
  const auto pos = static_cast<Eigen::Index>(it - agents.begin());
  agents.insert(it, id);
  const auto n = static_cast<Eigen::Index>(agents.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index r = 0; r < n - 1; ++r) {
    for (Eigen::Index c = 0; c < n - 1; ++c) {
      w(r < pos ? r : r + 1, c < pos ? c : c + 1) = W(r, c);
    }
  }
  W = std::move(w);
}

double ConnectionGraph::weight(SegmentId a, SegmentId b) const { return W(index_of(a), index_of(b)); }

void ConnectionGraph::set_weight(SegmentId a, SegmentId b, double w) {
  if (a == b) throw Error(ErrorCode::InvalidArgument, "cluster", "self connections are not allowed");
  const int i = index_of(a);
  const int j = index_of(b);
  W(i, j) = w;
  W(j, i) = w;
}

int Partition::cluster_of(SegmentId id) const {
  for (std::size_t c = 0; c < clusters.size(); ++c)
    if (std::binary_search(clusters[c].begin(), clusters[c].end(), id)) return static_cast<int>(c);
  return -1;
}

double connection_weight(double feature_gap, double overlap_length, double c_w) {
  constexpr double kEps = 1e-4;
  return std::exp(-(feature_gap * feature_gap + c_w) / (2.0 * overlap_length * overlap_length + kEps));
}

Eigen::VectorXd degree_matrix(const ConnectionGraph& g) { return g.W.rowwise().sum(); }

Eigen::MatrixXd laplacian(const ConnectionGraph& g) {
  Eigen::MatrixXd l = -g.W;
  l.diagonal() += degree_matrix(g);
  return l;
}

double ncut_value(const ConnectionGraph& g, const Partition& p) {
  const Eigen::VectorXd deg = degree_matrix(g);
  std::vector<int> label(static_cast<std::size_t>(g.size()), -1);
  for (std::size_t c = 0; c < p.clusters.size(); ++c) {
    for (SegmentId id : p.clusters[c]) {
      auto& l = label[static_cast<std::size_t>(g.index_of(id))];
      if (l >= 0) throw Error(ErrorCode::InvalidArgument, "cluster", "clusters overlap");
      l = static_cast<int>(c);
    }
  }
  if (std::find(label.begin(), label.end(), -1) != label.end()) {
    throw Error(ErrorCode::InvalidArgument, "cluster", "partition does not cover the graph");
  }
  std::vector<double> cut(p.clusters.size(), 0.0);
  std::vector<double> vol(p.clusters.size(), 0.0);
  for (int a = 0; a < g.size(); ++a) {
    const auto la = static_cast<std::size_t>(label[static_cast<std::size_t>(a)]);
    vol[la] += deg(a);
    for (int b = 0; b < g.size(); ++b)
      if (label[static_cast<std::size_t>(b)] != label[static_cast<std::size_t>(a)]) cut[la] += g.W(a, b);
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < cut.size(); ++c) {
    if (!(vol[c] > 0.0)) throw Error(ErrorCode::ZeroVolume, "cluster", "cluster has zero volume");
    sum += cut[c] / vol[c];
  }
  return 0.5 * sum;
}

void canonicalize(std::vector<std::vector<SegmentId>>& clusters) {
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  std::erase_if(clusters, [](const auto& c) { return c.empty(); });
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

Partition spectral_cluster(const ConnectionGraph& g, const SpectralParams& params) {
  const int n = g.size();
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "cluster", "spectral clustering needs agents");
  if (!(params.theta > 0.0)) throw Error(ErrorCode::InvalidArgument, "cluster", "theta must be > 0");
  const int k_max = params.k_max <= 0 ? n : params.k_max;
  if (k_max > n) throw Error(ErrorCode::InvalidArgument, "cluster", "k_max exceeds the agent count");

  Partition out;
  out.theta = params.theta;
  const Eigen::VectorXd deg = degree_matrix(g);
  std::vector<int> active;
  for (int a = 0; a < n; ++a) {
    if (deg(a) > 0.0) {
      active.push_back(a);
    } else {
      out.clusters.push_back({g.agents[static_cast<std::size_t>(a)]});
      out.eigenvalues.push_back(0.0);
    }
  }

  if (!active.empty()) {
    const auto m = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd l(m, m);
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < m; ++c)
        l(r, c) = -g.W(active[static_cast<std::size_t>(r)], active[static_cast<std::size_t>(c)]);
    for (Eigen::Index r = 0; r < m; ++r) l(r, r) += deg(active[static_cast<std::size_t>(r)]);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    if (es.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularSystem, "cluster", "Laplacian eigendecomposition failed");
    }
    const Eigen::VectorXd& lambda = es.eigenvalues();  // ascending
    int count = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      out.eigenvalues.push_back(lambda(i));
      if (lambda(i) <= params.theta) ++count;
    }
    const int k = std::clamp(count, 1, std::min<int>(k_max, static_cast<int>(m)));
    const Eigen::MatrixXd key = es.eigenvectors().leftCols(k);
    const KMeansResult km = kmeans(key, k, params.seed, params.restarts);
    std::vector<std::vector<SegmentId>> groups(static_cast<std::size_t>(km.centroids.rows()));
    for (Eigen::Index r = 0; r < m; ++r)
      groups[static_cast<std::size_t>(km.labels[static_cast<std::size_t>(r)])].push_back(
          g.agents[static_cast<std::size_t>(active[static_cast<std::size_t>(r)])]);
    for (auto& grp : groups) out.clusters.push_back(std::move(grp));
  }
  canonicalize(out.clusters);
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  return out;
}

ClusterState incremental_update(ClusterState state, const std::vector<WeightUpdate>& changes,
                                const SpectralParams& params) {
  state.dirty.clear();
  bool changed = false;
  for (const auto& u : changes) {
    state.graph.add_agent(u.a);
    state.graph.add_agent(u.b);
    const double current = state.graph.weight(u.a, u.b);
    if (u.replace ? u.weight != current : u.weight > current) {
      state.graph.set_weight(u.a, u.b, u.weight);
      if (u.weight > 0.0) {
        state.graph.overlap_meta[std::minmax(u.a, u.b)] = u.meta;
      } else {
        state.graph.overlap_meta.erase(std::minmax(u.a, u.b));
      }
      changed = true;
    }
  }
  std::size_t covered = 0;
  for (const auto& c : state.partition.clusters) covered += c.size();
  if (covered != state.graph.agents.size()) changed = true;
  if (!changed || state.graph.size() == 0) return state;

  Partition next = spectral_cluster(state.graph, params);
  const std::set<std::vector<SegmentId>> before(state.partition.clusters.begin(),
                                                state.partition.clusters.end());
  for (const auto& c : next.clusters)
    if (!before.contains(c)) state.dirty.push_back(c);
  state.partition = std::move(next);
  return state;
}

}  // namespace automerge
