#include "automerge/cluster.hpp"
#include "automerge/errors.hpp"
#include "automerge/random.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace automerge;

namespace {

ConnectionGraph graph_of(const Eigen::MatrixXd& w) {
  ConnectionGraph g;
  for (int i = 0; i < w.rows(); ++i) g.add_agent(i);
  for (int i = 0; i < w.rows(); ++i)
    for (int j = i + 1; j < w.cols(); ++j)
      if (w(i, j) != 0.0) g.set_weight(i, j, w(i, j));
  return g;
}

ConnectionGraph random_graph(Rng& rng, int n, double density) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < density) w(i, j) = w(j, i) = rng.uniform(0.01, 1.0);
  return graph_of(w);
}

/// Blocks of the given sizes, dense inside, optional weak links between
/// consecutive blocks.
ConnectionGraph block_graph(Rng& rng, const std::vector<int>& sizes, double cross = 0.0) {
  const int n = std::accumulate(sizes.begin(), sizes.end(), 0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  int start = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    for (int i = start; i < start + sizes[b]; ++i)
      for (int j = i + 1; j < start + sizes[b]; ++j) w(i, j) = w(j, i) = rng.uniform(0.5, 1.0);
    if (cross > 0.0 && b + 1 < sizes.size()) {
      const int i = start + sizes[b] - 1, j = start + sizes[b];
      w(i, j) = w(j, i) = cross;
    }
    start += sizes[b];
  }
  return graph_of(w);
}

std::vector<std::vector<SegmentId>> blocks_of(const std::vector<int>& sizes) {
  std::vector<std::vector<SegmentId>> out;
  int start = 0;
  for (int s : sizes) {
    std::vector<SegmentId> b(static_cast<std::size_t>(s));
    std::iota(b.begin(), b.end(), start);
    out.push_back(b);
    start += s;
  }
  return out;
}

void check_cover(const Partition& p, const ConnectionGraph& g) {
  std::vector<SegmentId> all;
  for (const auto& c : p.clusters) {
    CHECK_FALSE(c.empty());
    CHECK(std::is_sorted(c.begin(), c.end()));
    all.insert(all.end(), c.begin(), c.end());
  }
  std::sort(all.begin(), all.end());
  CHECK(all == g.agents);
}

}  // namespace

TEST_CASE("connection_weight") {
  CHECK(connection_weight(0.0, 0.0, 0.0) == 1.0);
  CHECK(connection_weight(0.0, 123.0, 0.0) == 1.0);
  CHECK(connection_weight(1.0, 0.0, 0.0) == std::exp(-1.0 / 1e-4));
  CHECK(connection_weight(1.0, 0.0, 0.0) < 1e-300);
  CHECK(connection_weight(0.5, 10.0, 1.0) == doctest::Approx(std::exp(-1.25 / 200.0001)).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double gap = rng.uniform(0, 2), len = rng.uniform(0, 300), cw = rng.uniform(0, 10);
    const double w = connection_weight(gap, len, cw);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    CHECK(connection_weight(gap, len + 10.0, cw) >= w);
  }
}

TEST_CASE("degree_matrix and laplacian") {
  ConnectionGraph g;
  for (int i = 0; i < 3; ++i) g.add_agent(i);
  g.W = Eigen::MatrixXd::Zero(3, 3);
  CHECK(degree_matrix(g).isZero());

  ConnectionGraph two;
  two.add_agent(4);
  two.add_agent(9);
  two.set_weight(9, 4, 0.7);
  CHECK(two.weight(4, 9) == 0.7);
  CHECK(degree_matrix(two) == Eigen::Vector2d(0.7, 0.7));

  Rng rng(2);
  const ConnectionGraph r = random_graph(rng, 5, 0.7);
  const Eigen::VectorXd d = degree_matrix(r);
  for (int i = 0; i < 5; ++i) {
    double sum = 0;
    for (int j = 0; j < 5; ++j) sum += r.W(i, j);
    CHECK(d(i) == doctest::Approx(sum).epsilon(1e-15));
  }

  for (int t = 0; t < 100; ++t) {
    const ConnectionGraph q = random_graph(rng, 2 + static_cast<int>(rng.below(12)), rng.uniform(0.1, 1.0));
    const Eigen::MatrixXd l = laplacian(q);
    CHECK((l - l.transpose()).isZero());
    CHECK(l.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
}

TEST_CASE("ConnectionGraph keeps agents sorted") {
  ConnectionGraph g;
  for (int id : {7, 2, 5, 2}) g.add_agent(id);
  CHECK(g.agents == std::vector<SegmentId>{2, 5, 7});
  g.set_weight(7, 2, 0.4);
  g.add_agent(3);
  CHECK(g.weight(2, 7) == 0.4);
  CHECK(g.weight(7, 2) == 0.4);
  CHECK(g.W.diagonal().isZero());
  CHECK_THROWS_AS(g.set_weight(5, 5, 1.0), Error);
  CHECK_THROWS_AS(g.index_of(42), Error);
}

TEST_CASE("ncut_value") {
  Rng rng(3);
  SUBCASE("disconnected cliques split along components") {
    const ConnectionGraph g = block_graph(rng, {3, 4});
    Partition p;
    p.clusters = blocks_of({3, 4});
    CHECK(ncut_value(g, p) == 0.0);
  }
  SUBCASE("path graph hand sum") {
    ConnectionGraph g;
    for (int i = 1; i <= 3; ++i) g.add_agent(i);
    g.set_weight(1, 2, 1.0);
    g.set_weight(2, 3, 1.0);
    Partition p;
    p.clusters = {{1}, {2, 3}};
    CHECK(ncut_value(g, p) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("single cluster") {
    const ConnectionGraph g = random_graph(rng, 6, 1.0);
    Partition p;
    p.clusters = {g.agents};
    CHECK(ncut_value(g, p) == 0.0);
  }
  SUBCASE("errors") {
    ConnectionGraph g;
    for (int i = 0; i < 3; ++i) g.add_agent(i);
    g.set_weight(0, 1, 1.0);
    Partition p;
    p.clusters = {{0, 1}, {2}};
    try {
      ncut_value(g, p);
      FAIL("expected ZeroVolume");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroVolume);
    }
    p.clusters = {{0, 1}};
    CHECK_THROWS_AS(ncut_value(g, p), Error);
  }
}

TEST_CASE("spectral_cluster") {
  Rng rng(4);
  SUBCASE("k disconnected blocks") {
    const std::vector<std::vector<int>> layouts = {{5}, {3, 4}, {2, 3, 4}, {3, 3, 2, 4}};
    for (const auto& sizes : layouts) {
      const ConnectionGraph g = block_graph(rng, sizes);
      const Partition p = spectral_cluster(g, {});
      CHECK(p.clusters == blocks_of(sizes));
      const auto zeros = std::count_if(p.eigenvalues.begin(), p.eigenvalues.end(),
                                       [](double l) { return l <= 1e-9; });
      CHECK(zeros == static_cast<long>(sizes.size()));
      check_cover(p, g);
    }
  }
  SUBCASE("any theta below the first nonzero eigenvalue recovers the blocks") {
    const std::vector<int> sizes = {4, 3, 5};
    const ConnectionGraph g = block_graph(rng, sizes);
    const Partition ref = spectral_cluster(g, {});
    const double gap = ref.eigenvalues[3];
    REQUIRE(gap > 1e-6);
    for (double f : {1e-6, 0.01, 0.3, 0.9, 0.999}) {
      SpectralParams sp;
      sp.theta = std::max(2e-9, f * gap);
      CHECK(spectral_cluster(g, sp).clusters == blocks_of(sizes));
    }
  }
  SUBCASE("single agent") {
    ConnectionGraph g;
    g.add_agent(11);
    const Partition p = spectral_cluster(g, {});
    CHECK(p.clusters == std::vector<std::vector<SegmentId>>{{11}});
  }
  SUBCASE("weakly joined dense blocks") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(6, 6);
    for (int b = 0; b < 2; ++b)
      for (int i = 3 * b; i < 3 * b + 3; ++i)
        for (int j = i + 1; j < 3 * b + 3; ++j) w(i, j) = w(j, i) = 0.9;
    w(2, 3) = w(3, 2) = 0.01;
    const Partition p = spectral_cluster(graph_of(w), {});
    CHECK(p.clusters == blocks_of({3, 3}));
    CHECK(p.eigenvalues[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.eigenvalues[1] < 0.1);
    CHECK(p.eigenvalues[2] > 0.1);
  }
  SUBCASE("isolated agents are singletons") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(5, 5);
    w(0, 1) = w(1, 0) = 0.8;
    w(3, 4) = w(4, 3) = 0.8;
    const Partition p = spectral_cluster(graph_of(w), {});
    CHECK(p.clusters == std::vector<std::vector<SegmentId>>{{0, 1}, {2}, {3, 4}});
  }
  SUBCASE("k_max caps the cluster count") {
    SpectralParams sp;
    sp.k_max = 2;
    const Partition p = spectral_cluster(block_graph(rng, {2, 2, 2}), sp);
    CHECK(p.k() == 2);
    sp.k_max = 7;
    CHECK_THROWS_AS(spectral_cluster(block_graph(rng, {2, 2, 2}), sp), Error);
  }
  SUBCASE("no single move lowers the ncut") {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> sizes;
      int n = 0;
      while (n < 5) {
        sizes.push_back(2 + static_cast<int>(rng.below(3)));
        n += sizes.back();
      }
      if (n > 8) sizes.back() -= n - 8;
      ConnectionGraph g = block_graph(rng, sizes, 0.02);
      const Partition p = spectral_cluster(g, {});
      const double base = ncut_value(g, p);
      for (std::size_t from = 0; from < p.clusters.size(); ++from) {
        if (p.clusters[from].size() < 2) continue;
        for (SegmentId id : p.clusters[from]) {
          for (std::size_t to = 0; to < p.clusters.size(); ++to) {
            if (to == from) continue;
            Partition q = p;
            std::erase(q.clusters[from], id);
            q.clusters[to].push_back(id);
            canonicalize(q.clusters);
            CHECK(base <= ncut_value(g, q) + 1e-12);
          }
        }
      }
    }
  }
  SUBCASE("deterministic") {
    const ConnectionGraph g = random_graph(rng, 10, 0.4);
    CHECK(spectral_cluster(g, {}) == spectral_cluster(g, {}));
  }
}

TEST_CASE("incremental_update") {
  Rng rng(5);
  ClusterState s;
  s = incremental_update(std::move(s), {{0, 1, 0.9, {}}, {1, 2, 0.9, {}}, {3, 4, 0.9, {}}}, {});
  REQUIRE(s.partition.clusters == std::vector<std::vector<SegmentId>>{{0, 1, 2}, {3, 4}});

  SUBCASE("empty change set") {
    const Partition before = s.partition;
    s = incremental_update(std::move(s), {}, {});
    CHECK(s.partition == before);
    CHECK(s.dirty.empty());
  }
  SUBCASE("a strong new edge joins two clusters") {
    s = incremental_update(std::move(s), {{2, 3, 0.9, {120.0, 0.1}}}, {});
    CHECK(s.partition.clusters == std::vector<std::vector<SegmentId>>{{0, 1, 2, 3, 4}});
    CHECK(s.dirty == s.partition.clusters);
    CHECK(s.graph.overlap_meta.at({2, 3}).length == 120.0);
  }
  SUBCASE("smaller weights never lower W") {
    const Eigen::MatrixXd before = s.graph.W;
    s = incremental_update(std::move(s), {{0, 1, 0.2, {}}, {4, 3, 0.0, {}}}, {});
    CHECK(s.graph.W == before);
    CHECK(s.dirty.empty());
  }
  SUBCASE("replace overwrites and zero removes the edge") {
    s = incremental_update(std::move(s), {{1, 2, 0.0, {}, true}}, {});
    CHECK(s.graph.weight(1, 2) == 0.0);
    CHECK_FALSE(s.graph.overlap_meta.contains({1, 2}));
    CHECK(s.partition.clusters == std::vector<std::vector<SegmentId>>{{0, 1}, {2}, {3, 4}});
    s = incremental_update(std::move(s), {{0, 1, 0.3, {}, true}}, {});
    CHECK(s.graph.weight(0, 1) == 0.3);
  }
  SUBCASE("new agents join as singletons") {
    s = incremental_update(std::move(s), {{7, 8, 0.0, {}}}, {});
    CHECK(s.graph.contains(7));
    CHECK(s.partition.cluster_of(7) >= 0);
    CHECK(s.partition.cluster_of(7) != s.partition.cluster_of(8));
  }
  SUBCASE("W stays symmetric with a zero diagonal") {
    for (int i = 0; i < 100; ++i) {
      const auto a = static_cast<SegmentId>(rng.below(8));
      auto b = static_cast<SegmentId>(rng.below(8));
      if (a == b) b = (b + 1) % 8;
      s = incremental_update(std::move(s), {{a, b, rng.uniform(), {}, rng.uniform() < 0.2}}, {});
      CHECK((s.graph.W - s.graph.W.transpose()).isZero(0.0));
      CHECK(s.graph.W.diagonal().isZero(0.0));
      check_cover(s.partition, s.graph);
    }
  }
}

TEST_CASE("incremental_update is order invariant under max merging") {
  Rng rng(6);
  std::vector<WeightUpdate> updates;
  for (int i = 0; i < 40; ++i) {
    const auto a = static_cast<SegmentId>(rng.below(10));
    const auto b = static_cast<SegmentId>((a + 1 + rng.below(9)) % 10);
    updates.push_back({a, b, rng.uniform() < 0.5 ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.05), {}});
  }
  ClusterState ref;
  for (const auto& u : updates) ref = incremental_update(std::move(ref), {u}, {});
  for (int perm = 0; perm < 20; ++perm) {
    rng.shuffle(updates);
    ClusterState s;
    for (std::size_t i = 0; i < updates.size(); i += 3) {
      const std::vector<WeightUpdate> chunk(updates.begin() + static_cast<std::ptrdiff_t>(i),
                                            updates.begin() + static_cast<std::ptrdiff_t>(std::min(i + 3, updates.size())));
      s = incremental_update(std::move(s), chunk, {});
    }
    CHECK(s.graph.W == ref.graph.W);
    CHECK(s.partition == ref.partition);
  }
}
