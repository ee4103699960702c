#include "automerge/geometry.hpp"

#include "automerge/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace automerge {

double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

Eigen::Matrix2d Pose2::rotation() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Vec2 Pose2::apply(const Vec2& p) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
}

Pose2 Pose2::inverse() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {-(c * x + s * y), s * x - c * y, -yaw};
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const Vec2 t = a.apply(b.translation());
  return {t.x(), t.y(), a.yaw + b.yaw};
}

Pose2 between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.yaw);
  const double s = std::sin(a.yaw);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy, b.yaw - a.yaw};
}

PointCloud2 transform_cloud(const Pose2& pose, const PointCloud2& cloud) {
  PointCloud2 out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(pose.apply(p));
  return out;
}

Pose2 estimate_rigid_transform(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::DegenerateInput, "geometry", "correspondence lists differ in length");
  }
  if (src.size() < 2) {
    throw Error(ErrorCode::DegenerateInput, "geometry", "need at least two correspondences");
  }
  const double n = static_cast<double>(src.size());
  Vec2 cs = Vec2::Zero();
  Vec2 cd = Vec2::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) {
    cs += src[k];
    cd += dst[k];
  }
  cs /= n;
  cd /= n;

  double spread = 0.0;
  double dot = 0.0;    // sum of a . b
  double cross = 0.0;  // sum of a x b
  for (std::size_t k = 0; k < src.size(); ++k) {
    const Vec2 a = src[k] - cs;
    const Vec2 b = dst[k] - cd;
    spread += a.squaredNorm();
    dot += a.x() * b.x() + a.y() * b.y();
    cross += a.x() * b.y() - a.y() * b.x();
  }
  if (!(spread > 0.0)) {
    throw Error(ErrorCode::DegenerateInput, "geometry", "source points coincide");
  }
  // The rotation is the polar part of the 2x2 cross-covariance; it is undefined
  // when the covariance vanishes (e.g. all targets coincide).
  if (std::hypot(dot, cross) <= 1e-12 * spread) {
    throw Error(ErrorCode::DegenerateInput, "geometry", "cross-covariance is degenerate");
  }
  const double yaw = std::atan2(cross, dot);
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const Vec2 t(cd.x() - (c * cs.x() - s * cs.y()), cd.y() - (s * cs.x() + c * cs.y()));
  return {t.x(), t.y(), yaw};
}

namespace {

// Mean nearest-neighbor distance of T(src) against dst, keeping pairs within
// the reject radius. Returns +inf when nothing pairs up.
double match(const PointCloud2& src, const PointCloud2& dst, const Pose2& T, double radius,
             Points2* src_out, Points2* dst_out) {
  const double r2 = radius * radius;
  double sum = 0.0;
  std::size_t count = 0;
  if (src_out) src_out->clear();
  if (dst_out) dst_out->clear();
  for (const auto& p : src.points) {
    const Vec2 q = T.apply(p);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t j = 0; j < dst.points.size(); ++j) {
      const double d2 = (dst.points[j] - q).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_idx = j;
      }
    }
    if (best <= r2) {
      sum += std::sqrt(best);
      ++count;
      if (src_out) src_out->push_back(p);
      if (dst_out) dst_out->push_back(dst.points[best_idx]);
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  return sum / static_cast<double>(count);
}

}  // namespace

IcpResult icp_refine(const PointCloud2& src, const PointCloud2& dst, const Pose2& init,
                     const IcpOptions& opts) {
  if (src.empty() || dst.empty()) {
    throw Error(ErrorCode::EmptyCloud, "geometry", "icp_refine needs two non-empty clouds");
  }
  IcpResult best{init, match(src, dst, init, opts.reject_radius, nullptr, nullptr), false, 0};
  if (!std::isfinite(best.residual)) return best;

  Points2 ps;
  Points2 pd;
  Pose2 current = init;
  for (int it = 1; it <= opts.max_iter; ++it) {
    best.iterations = it;
    const double res = match(src, dst, current, opts.reject_radius, &ps, &pd);
    if (res < best.residual) {
      best.pose = current;
      best.residual = res;
    }
    if (ps.size() < 2) break;

    Pose2 next;
    try {
      next = estimate_rigid_transform(ps, pd);
    } catch (const Error&) {
      break;
    }
    const Pose2 step = between(current, next);
    current = next;
    if (std::hypot(step.x, step.y) + std::abs(step.yaw) < opts.tol) {
      const double final_res = match(src, dst, current, opts.reject_radius, nullptr, nullptr);
      if (final_res <= best.residual) {
        best.pose = current;
        best.residual = final_res;
      }
      best.converged = true;
      break;
    }
  }
  return best;
}

}  // namespace automerge
