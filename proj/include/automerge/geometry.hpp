#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace automerge {

using Vec2 = Eigen::Vector2d;
using Points2 = std::vector<Vec2>;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

/// Planar rigid-body pose. yaw is kept in (-pi, pi] by every operation.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(normalize_angle(yaw_)) {}

  Vec2 translation() const { return {x, y}; }
  Eigen::Matrix2d rotation() const;

  /// Applies the pose to a point expressed in its local frame.
  Vec2 apply(const Vec2& p) const;

  Pose2 inverse() const;

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

Pose2 compose(const Pose2& a, const Pose2& b);

/// Pose of b expressed in the frame of a, so that compose(a, between(a, b)) == b.
Pose2 between(const Pose2& a, const Pose2& b);

/// A 2D point cloud. Finite coordinates.
struct PointCloud2 {
  Points2 points;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

PointCloud2 transform_cloud(const Pose2& pose, const PointCloud2& cloud);

/// Closed-form least-squares rigid motion T minimizing sum |T(src_k) - dst_k|^2
/// over index-paired correspondences. Throws DegenerateInput on fewer than two
/// pairs, coincident sources, or a vanishing cross-covariance.
Pose2 estimate_rigid_transform(std::span<const Vec2> src, std::span<const Vec2> dst);

struct IcpOptions {
  int max_iter = 30;
  double tol = 1e-6;
  double reject_radius = 2.0;
};

struct IcpResult {
  Pose2 pose;
  /// Mean nearest-neighbor distance over accepted correspondences.
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Point-to-point ICP aligning src onto dst starting from init. Never returns a
/// pose whose residual is worse than init's. converged == false signals
/// NoConvergence (no correspondences, or max_iter reached); the best pose found
/// is still returned.
IcpResult icp_refine(const PointCloud2& src, const PointCloud2& dst, const Pose2& init,
                     const IcpOptions& opts = {});

}  // namespace automerge
