#include "automerge/kmeans.hpp"

#include "automerge/errors.hpp"
#include "automerge/random.hpp"

#include <algorithm>
#include <limits>

namespace automerge {

namespace {

KMeansResult lloyd(const Eigen::MatrixXd& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centroids(k, x.cols());

  // k-means++ seeding.
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - centroids.row(c - 1)).squaredNorm());
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2[static_cast<std::size_t>(pick)];
        if (target < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = x.row(pick);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
  }

  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    inertia += (x.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return {std::move(labels), std::move(centroids), inertia};
}

void canonicalize(KMeansResult& r) {
  std::vector<int> remap(static_cast<std::size_t>(r.centroids.rows()), -1);
  int next = 0;
  for (int& l : r.labels) {
    auto& m = remap[static_cast<std::size_t>(l)];
    if (m < 0) m = next++;
    l = m;
  }
  Eigen::MatrixXd c(next, r.centroids.cols());
  for (std::size_t old = 0; old < remap.size(); ++old)
    if (remap[old] >= 0) c.row(remap[old]) = r.centroids.row(static_cast<Eigen::Index>(old));
  r.centroids = std::move(c);
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts,
                    int max_iter) {
  if (points.rows() == 0 || k < 1) {
    throw Error(ErrorCode::InvalidArgument, "kmeans", "k-means needs points and k >= 1");
  }
  k = std::min<int>(k, static_cast<int>(points.rows()));
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult cur = lloyd(points, k, rng, max_iter);
    // Strict improvement only: ties keep the earliest run.
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  canonicalize(best);
  return best;
}

}  // namespace automerge
