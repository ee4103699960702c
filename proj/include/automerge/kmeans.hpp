#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace automerge {

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // k x dim
  double inertia = 0.0;
};

/// Lloyd's k-means over the rows of `points`, k-means++ seeding, best inertia
/// of `restarts` runs. Labels are renumbered by first appearance, so equal
/// partitions produce equal label vectors.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts = 10,
                    int max_iter = 100);

}  // namespace automerge
