#include "automerge/descriptor.hpp"

#include "automerge/errors.hpp"
#include "automerge/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace automerge {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Eigen::VectorXd as_vector(const Descriptor& d) {
  return Eigen::Map<const Eigen::VectorXd>(d.values.data(), static_cast<Eigen::Index>(d.size()));
}

Descriptor from_vector(const Eigen::VectorXd& v) {
  return Descriptor(std::vector<double>(v.data(), v.data() + v.size()));
}

double sigmoid_open(double x) {
  // Keep the gate strictly inside (0, 1) even where exp saturates.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(1.0 / (1.0 + std::exp(-x)), lo, hi);
}

}  // namespace

Descriptor l2_normalized(const Descriptor& d) {
  const double n = std::sqrt(dot(d.values, d.values));
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroVector, "descriptor", "cannot normalize a zero vector");
  Descriptor out(d.values, true);
  for (auto& v : out.values) v /= n;
  return out;
}

double cosine_distance(const Descriptor& f, const Descriptor& g) {
  if (f.size() != g.size()) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor", "descriptor lengths differ");
  }
  const double ff = dot(f.values, f.values);
  const double gg = dot(g.values, g.values);
  if (!(ff > 0.0) || !(gg > 0.0)) {
    throw Error(ErrorCode::ZeroVector, "descriptor", "cosine distance of a zero vector");
  }
  const double fg = dot(f.values, g.values);
  const double d = 1.0 - fg / std::sqrt(ff * gg);
  return std::clamp(d, 0.0, 2.0);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(r, c) = std::exp(m(r, c) - mx);
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return out;
}

Descriptor self_attention(const Descriptor& v, double gamma) {
  if (v.size() == 0) throw Error(ErrorCode::DimensionMismatch, "descriptor", "empty descriptor");
  const Eigen::VectorXd x = as_vector(v);
  const Eigen::MatrixXd attention = softmax_rows(x * x.transpose());
  const Eigen::VectorXd out = x + gamma * (attention.transpose() * x);
  return from_vector(out);
}

FusionParams FusionParams::identity(std::size_t channels) {
  const auto n = static_cast<Eigen::Index>(2 * channels);
  return {Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)};
}

FusionParams FusionParams::random(std::size_t channels, std::uint64_t seed, double scale) {
  const auto n = static_cast<Eigen::Index>(2 * channels);
  Rng rng(seed);
  FusionParams p{Eigen::MatrixXd(n, n), Eigen::VectorXd::Zero(n)};
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) p.fc_weights(r, c) = rng.uniform(-scale, scale);
  return p;
}

Descriptor cross_attention_fuse(const Descriptor& v_point, const Descriptor& v_sphere,
                                const FusionParams& params, FusionTrace* trace) {
  if (v_point.size() != v_sphere.size()) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor", "branch descriptors differ in length");
  }
  const auto n = static_cast<Eigen::Index>(2 * v_point.size());
  if (params.fc_weights.rows() != n || params.fc_weights.cols() != n || params.fc_bias.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor", "fusion parameters do not match 2C");
  }
  Eigen::VectorXd v_cat(n);
  v_cat << as_vector(v_point), as_vector(v_sphere);

  const Eigen::MatrixXd e = v_cat * v_cat.transpose();
  const Eigen::VectorXd row_mean = e.rowwise().mean();
  const Eigen::VectorXd alpha_corr = e * row_mean;
  const Eigen::VectorXd logits = params.fc_weights * alpha_corr + params.fc_bias;
  Eigen::VectorXd alpha_w(n);
  for (Eigen::Index i = 0; i < n; ++i) alpha_w(i) = sigmoid_open(logits(i));

  const Eigen::VectorXd out = alpha_w.cwiseProduct(v_cat);
  if (trace) *trace = {v_cat, e, alpha_corr, alpha_w};
  return from_vector(out);
}

double lazy_quadruplet_loss(const QuadrupletTuple& t, double margin1, double margin2) {
  if (t.positives.empty() || t.negatives.empty()) {
    throw Error(ErrorCode::EmptySet, "descriptor", "quadruplet needs positives and negatives");
  }
  double max_pos = -std::numeric_limits<double>::infinity();
  for (const auto& p : t.positives) max_pos = std::max(max_pos, cosine_distance(t.anchor, p));
  double min_neg = std::numeric_limits<double>::infinity();
  double min_neg_star = std::numeric_limits<double>::infinity();
  for (const auto& n : t.negatives) {
    min_neg = std::min(min_neg, cosine_distance(t.anchor, n));
    min_neg_star = std::min(min_neg_star, cosine_distance(t.hard_negative, n));
  }
  // The hinge is monotone, so the max over (i, j) pairs is attained at the
  // largest positive distance and the smallest negative distance.
  return std::max(0.0, margin1 + max_pos - min_neg) + std::max(0.0, margin2 + max_pos - min_neg_star);
}

Descriptor polar_histogram_descriptor(const PointCloud2& cloud, const PolarLayout& layout) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "descriptor", "empty cloud");
  if (layout.bins_radial < 1 || layout.bins_angular < 1 || !(layout.max_range > 0.0)) {
    throw Error(ErrorCode::LayoutMismatch, "descriptor", "invalid polar layout");
  }
  std::vector<double> hist(static_cast<std::size_t>(layout.size()), 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  bool any = false;
  for (const auto& p : cloud.points) {
    const double r = p.norm();
    if (!(r < layout.max_range)) continue;
    const int rb = std::min(layout.bins_radial - 1,
                            static_cast<int>(std::floor(r / layout.max_range * layout.bins_radial)));
    const double angle = std::atan2(p.y(), p.x()) + std::numbers::pi;
    int ab = static_cast<int>(std::floor(angle / two_pi * layout.bins_angular));
    ab = ((ab % layout.bins_angular) + layout.bins_angular) % layout.bins_angular;
    hist[static_cast<std::size_t>(rb * layout.bins_angular + ab)] += 1.0;
    any = true;
  }
  if (!any) throw Error(ErrorCode::EmptyCloud, "descriptor", "no points inside max_range");
  return l2_normalized(Descriptor(std::move(hist)));
}

Descriptor shift_angular(const Descriptor& d, int bins_angular, int k) {
  if (bins_angular < 1 || d.size() % static_cast<std::size_t>(bins_angular) != 0) {
    throw Error(ErrorCode::LayoutMismatch, "descriptor", "descriptor does not match angular layout");
  }
  const int rings = static_cast<int>(d.size()) / bins_angular;
  Descriptor out(std::vector<double>(d.size(), 0.0), d.normalized);
  const int s = ((k % bins_angular) + bins_angular) % bins_angular;
  for (int r = 0; r < rings; ++r)
    for (int a = 0; a < bins_angular; ++a)
      out.values[static_cast<std::size_t>(r * bins_angular + (a + s) % bins_angular)] =
          d.values[static_cast<std::size_t>(r * bins_angular + a)];
  return out;
}

ShiftMatch rotation_search_distance(const Descriptor& f_ref, const Descriptor& f_test,
                                    int bins_angular) {
  if (f_ref.size() != f_test.size() || bins_angular < 1 ||
      f_ref.size() % static_cast<std::size_t>(bins_angular) != 0) {
    throw Error(ErrorCode::LayoutMismatch, "descriptor", "descriptors do not share a polar layout");
  }
  ShiftMatch best{std::numeric_limits<double>::infinity(), 0};
  for (int k = 0; k < bins_angular; ++k) {
    const double d = cosine_distance(shift_angular(f_ref, bins_angular, k), f_test);
    if (d < best.distance) best = {d, k};
  }
  return best;
}

namespace {

constexpr std::uint64_t kCellTag = 0x63656c6cULL;
constexpr std::uint64_t kAliasTag = 0x616c6961ULL;
constexpr std::uint64_t kNoiseTag = 0x6e6f6973ULL;

void add_gaussian(std::vector<double>& acc, double weight, std::uint64_t seed) {
  if (weight == 0.0) return;
  Rng rng(seed);
  for (auto& v : acc) v += weight * rng.normal();
}

}  // namespace

Descriptor synthetic_descriptor(std::uint64_t world_seed, const Vec2& location, double /*yaw*/,
                                double noise_sigma, std::optional<std::int64_t> alias_group,
                                std::uint64_t noise_seed, const SyntheticDescriptorConfig& cfg) {
  if (noise_sigma < 0.0 || cfg.dim == 0 || !(cfg.cell > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "descriptor", "invalid synthetic descriptor settings");
  }
  std::vector<double> v(cfg.dim, 0.0);
  if (alias_group) {
    add_gaussian(v, 1.0, derive_seed(world_seed, kAliasTag, static_cast<std::uint64_t>(*alias_group)));
  } else {
    const double gx = location.x() / cfg.cell;
    const double gy = location.y() / cfg.cell;
    const double fx0 = std::floor(gx);
    const double fy0 = std::floor(gy);
    const double fx = gx - fx0;
    const double fy = gy - fy0;
    const auto ix = static_cast<std::int64_t>(fx0);
    const auto iy = static_cast<std::int64_t>(fy0);
    const auto cell_seed = [&](std::int64_t cx, std::int64_t cy) {
      return derive_seed(world_seed, kCellTag, static_cast<std::uint64_t>(cx),
                         static_cast<std::uint64_t>(cy));
    };
    add_gaussian(v, (1.0 - fx) * (1.0 - fy), cell_seed(ix, iy));
    add_gaussian(v, fx * (1.0 - fy), cell_seed(ix + 1, iy));
    add_gaussian(v, (1.0 - fx) * fy, cell_seed(ix, iy + 1));
    add_gaussian(v, fx * fy, cell_seed(ix + 1, iy + 1));
  }
  Descriptor base = l2_normalized(Descriptor(std::move(v)));
  if (noise_sigma > 0.0) {
    Rng rng(derive_seed(world_seed, kNoiseTag, noise_seed));
    for (auto& x : base.values) x += noise_sigma * rng.normal();
    base = l2_normalized(base);
  }
  return base;
}

}  // namespace automerge
