#pragma once

#include "automerge/lcd.hpp"
#include "automerge/types.hpp"

#include <Eigen/Core>

#include <map>
#include <vector>

namespace automerge {

using PoseMap = std::map<NodeKey, Pose2>;
using SegmentMap = std::map<SegmentId, Segment>;

struct PoseNode {
  NodeKey key;
  Pose2 pose;
};

enum class EdgeKind { Odometry, Loop };

struct PoseEdge {
  NodeKey from;
  NodeKey to;
  Pose2 measurement;
  Eigen::Matrix3d information = Eigen::Matrix3d::Identity();
  EdgeKind kind = EdgeKind::Odometry;
};

struct OptimizerConfig {
  int max_iter = 50;
  double lambda_init = 1e-4;
  /// Stop when the relative chi2 decrease of an accepted step falls below tol.
  double tol = 1e-10;
  /// Diagonal information of odometry edges (x, y, yaw).
  Eigen::Vector3d odom_information{2000.0, 2000.0, 1e6};
  /// Diagonal information of loop edges before confidence scaling.
  Eigen::Vector3d loop_information{1e4, 1e4, 1e6};
};

/// SE(2) logarithm (rho, theta) with rho = V(theta)^-1 t.
Eigen::Vector3d se2_log(const Pose2& p);

struct EdgeLinearization {
  Eigen::Vector3d residual;
  Eigen::Matrix3d d_from;  // d residual / d (x, y, yaw) of the from-pose
  Eigen::Matrix3d d_to;
};

/// r = log(measurement^-1 * between(from, to)) with analytic Jacobians.
EdgeLinearization linearize_edge(const Pose2& from, const Pose2& to, const Pose2& measurement);

double edge_chi2(const PoseEdge& e, const PoseMap& poses);
double total_chi2(const std::vector<PoseEdge>& edges, const PoseMap& poses);

struct OptimizeResult {
  PoseMap poses;
  double initial_chi2 = 0.0;
  double final_chi2 = 0.0;
  int iterations = 0;
  /// chi2 after the initial state and after every accepted step.
  std::vector<double> chi2_history;
};

/// Levenberg-Marquardt over additive (x, y, yaw) updates. nodes.front() is
/// held fixed to remove the gauge freedom. Throws SingularSystem when a node is
/// not connected to the fixed one or the normal equations cannot be factored.
OptimizeResult optimize(const std::vector<PoseNode>& nodes, const std::vector<PoseEdge>& edges,
                        const OptimizerConfig& cfg = {});

/// Places every keyframe of the cluster in the frame of its lowest-id segment
/// by chaining pairwise rigid fits along a maximum-confidence spanning tree.
/// Throws DisconnectedCluster when the closures do not connect the cluster.
PoseMap rough_align(const std::vector<SegmentId>& cluster, const SegmentMap& segments,
                    const std::vector<LoopClosure>& closures);

/// Odometry edges between consecutive keyframes plus one edge per closure
/// inside the cluster (information scaled by closure confidence). The first
/// node belongs to the root segment.
void build_pose_graph(const std::vector<SegmentId>& cluster, const SegmentMap& segments,
                      const std::vector<LoopClosure>& closures, const PoseMap& initial,
                      const OptimizerConfig& cfg, std::vector<PoseNode>& nodes,
                      std::vector<PoseEdge>& edges);

/// rough_align followed by optimize.
OptimizeResult align_and_optimize(const std::vector<SegmentId>& cluster, const SegmentMap& segments,
                                  const std::vector<LoopClosure>& closures, const OptimizerConfig& cfg);

/// RMSE of positions after a single best-fit rigid alignment of `estimated`
/// onto `ground_truth`. Throws KeyMismatch when the key sets differ.
double ate(const PoseMap& estimated, const PoseMap& ground_truth);

}  // namespace automerge
