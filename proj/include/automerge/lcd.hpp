#pragma once

#include "automerge/descriptor.hpp"
#include "automerge/geometry.hpp"
#include "automerge/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace automerge {

/// Pairwise descriptor distances between two segments, N_i x N_j, in [0, 2].
struct DifferenceMatrix {
  SegmentId seg_i = 0;
  SegmentId seg_j = 0;
  Eigen::MatrixXd d;

  int rows() const { return static_cast<int>(d.rows()); }
  int cols() const { return static_cast<int>(d.cols()); }
};

struct LoopCandidate {
  int k_i = 0;
  int k_j = 0;
  /// Mean contrast-normalized difference along the best line; lower is better.
  double score = 0.0;
  int zone = -1;

  friend bool operator==(const LoopCandidate&, const LoopCandidate&) = default;
};

struct LoopClosure {
  SegmentId seg_i = 0;
  SegmentId seg_j = 0;
  LoopCandidate candidate;
  /// Pose of keyframe (seg_j, k_j) expressed in the frame of (seg_i, k_i).
  Pose2 relative_pose;
  /// Inlier ratio of the zone the closure came from.
  double confidence = 0.0;
  /// Raw descriptor distance D[k_i][k_j].
  double descriptor_distance = 0.0;

  friend bool operator==(const LoopClosure&, const LoopClosure&) = default;
};

struct SequenceMatchParams {
  int win = 7;
  double v_min = 0.8;
  double v_max = 1.2;
  int v_steps = 5;
  double score_thresh = -2.4;
  bool allow_reverse = true;
};

struct LcdConfig {
  SequenceMatchParams seq;
  /// Half-width of the column window used for contrast normalization.
  int norm_window = 10;
  double norm_eps = 1e-6;

  int max_zones = 4;
  /// k -> k+1 zones is accepted only if inertia drops below this fraction.
  double elbow_ratio = 0.15;
  std::uint64_t kmeans_seed = 7;

  double beta = 0.9;
  int ransac_iterations = 200;
  int sample_n = 4;
  int min_inliers = 3;
  std::uint64_t ransac_seed = 11;

  /// > 0 selects shift-searched distances for polar histogram descriptors.
  int rotation_bins = 0;
  IcpOptions icp;
};

/// Distance between two descriptors under the configured metric.
double descriptor_distance(const Descriptor& a, const Descriptor& b, int rotation_bins = 0);

/// Throws EmptySequence when either side is empty.
DifferenceMatrix difference_matrix(std::span<const Descriptor> f_i, std::span<const Descriptor> f_j,
                                   SegmentId seg_i = 0, SegmentId seg_j = 1, int rotation_bins = 0);

/// Grows D in place to cover the (longer) sequences, computing only the new
/// rows and columns. Existing entries are kept as-is.
void extend_difference_matrix(DifferenceMatrix& D, std::span<const Descriptor> f_i,
                              std::span<const Descriptor> f_j, int rotation_bins = 0);

/// Each entry becomes (d - mean) / std over 2 window + 1 rows of its own column,
/// centred on the entry and shifted inward at the borders. Windows with std <= eps
/// map to 0.
DifferenceMatrix local_contrast_normalize(const DifferenceMatrix& D, int window, double eps = 1e-6);

/// linspace(v_min, v_max, v_steps), followed by the negated slopes when
/// reverse traversal is allowed.
std::vector<double> slope_grid(const SequenceMatchParams& p);

/// Straight-line search over an already normalized matrix. For a centre
/// (a, b) and slope v the line visits (a + t, b + round(v t)), t in [-h, h],
/// h = win / 2; lines leaving the matrix are skipped. A line scoring below
/// score_thresh nominates its centre and every other visited cell whose own
/// value is negative. Each row keeps its best nomination (lowest score, then
/// lowest k_j).
std::vector<LoopCandidate> line_search(const Eigen::MatrixXd& normalized, const SequenceMatchParams& p);

/// local_contrast_normalize followed by line_search.
std::vector<LoopCandidate> sequence_match(const DifferenceMatrix& D, const SequenceMatchParams& p,
                                          int norm_window = 10, double norm_eps = 1e-6);

/// Assigns zones by k-means over (k_i, k_j) scaled to the unit square, with k
/// picked by an elbow rule up to max_k.
std::vector<LoopCandidate> cluster_zones(std::vector<LoopCandidate> cands, int max_k,
                                         std::uint64_t seed, int rows, int cols,
                                         double elbow_ratio = 0.15);

/// True iff |e_i| >= beta |e_j| and |e_j| >= beta |e_i| for the edges the two
/// candidates span in each segment.
bool edge_consistent(const LoopCandidate& a, const LoopCandidate& b, std::span<const Pose2> poses_i,
                     std::span<const Pose2> poses_j, double beta);

/// RANSAC over the edge-length consistency test. Returns a pairwise consistent
/// subset of at least min_inliers candidates, or an empty list.
std::vector<LoopCandidate> ransac_edge_filter(const std::vector<LoopCandidate>& zone_cands,
                                              std::span<const Pose2> poses_i,
                                              std::span<const Pose2> poses_j, double beta,
                                              int iterations, int sample_n, int min_inliers,
                                              std::uint64_t seed);

/// Full pipeline for one segment pair. Requires distinct ids.
std::vector<LoopClosure> detect_loops(const Segment& seg_i, const Segment& seg_j, const LcdConfig& cfg);

/// Same, reusing a raw difference matrix already computed for the pair.
std::vector<LoopClosure> detect_loops(const Segment& seg_i, const Segment& seg_j,
                                      const DifferenceMatrix& raw, const LcdConfig& cfg);

}  // namespace automerge
