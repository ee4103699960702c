#pragma once

#include "automerge/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace automerge {

/// Fixed-length place descriptor.
struct Descriptor {
  std::vector<double> values;
  bool normalized = false;

  Descriptor() = default;
  explicit Descriptor(std::vector<double> v, bool is_normalized = false)
      : values(std::move(v)), normalized(is_normalized) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

/// Returns a unit-L2 copy. Throws ZeroVector on an all-zero input.
Descriptor l2_normalized(const Descriptor& d);

/// 1 - cos(angle(f, g)), clamped to [0, 2].
double cosine_distance(const Descriptor& f, const Descriptor& g);

// -- attention fusion -------------------------------------------------------

/// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& m);

/// V + gamma * softmax_rows(V V^T)^T V.
Descriptor self_attention(const Descriptor& v, double gamma);

struct FusionParams {
  Eigen::MatrixXd fc_weights;  // 2C x 2C
  Eigen::VectorXd fc_bias;     // 2C

  static FusionParams identity(std::size_t channels);
  /// Uniform weights in [-scale, scale], zero bias. For property tests.
  static FusionParams random(std::size_t channels, std::uint64_t seed, double scale = 1.0);
};

struct FusionTrace {
  Eigen::VectorXd v_cat;
  Eigen::MatrixXd correlation;   // E = V_cat V_cat^T
  Eigen::VectorXd alpha_corr;    // E * rowmean(E)
  Eigen::VectorXd alpha_w;       // sigmoid(W alpha_corr + b), strictly inside (0, 1)
};

/// Cross-attention channel reweighing of [V_point, V_sphere]. Output has 2C
/// channels. Throws DimensionMismatch when inputs or params disagree in size.
Descriptor cross_attention_fuse(const Descriptor& v_point, const Descriptor& v_sphere,
                                const FusionParams& params, FusionTrace* trace = nullptr);

// -- metric learning --------------------------------------------------------

struct QuadrupletTuple {
  Descriptor anchor;
  std::vector<Descriptor> positives;
  std::vector<Descriptor> negatives;
  Descriptor hard_negative;
};

/// max_ij [m1 + d(a,pos_i) - d(a,neg_j)]_+  +  max_ik [m2 + d(a,pos_i) - d(neg*,neg_k)]_+
double lazy_quadruplet_loss(const QuadrupletTuple& t, double margin1 = 0.5, double margin2 = 0.2);

// -- descriptor sources -----------------------------------------------------

struct PolarLayout {
  int bins_radial = 4;
  int bins_angular = 16;
  double max_range = 50.0;

  int size() const { return bins_radial * bins_angular; }
};

/// Occupancy histogram over polar cells centred on the cloud origin, L2
/// normalized. Cell index = radial * bins_angular + angular.
Descriptor polar_histogram_descriptor(const PointCloud2& cloud, const PolarLayout& layout);

/// Circularly shifts the angular axis by k bins.
Descriptor shift_angular(const Descriptor& d, int bins_angular, int k);

struct ShiftMatch {
  double distance = 0.0;
  int shift = 0;
};

/// Minimum cosine distance over all circular angular shifts of f_ref.
ShiftMatch rotation_search_distance(const Descriptor& f_ref, const Descriptor& f_test,
                                    int bins_angular);

struct SyntheticDescriptorConfig {
  std::size_t dim = 64;
  /// Grid pitch of the location field; nearby points blend the same cells.
  double cell = 10.0;
};

/// World-conditioned stand-in for a viewpoint-tolerant learned descriptor.
/// The base vector is a smooth function of location (or of alias_group when
/// given, which makes distant places identical). yaw is accepted for
/// interface parity and does not change the output. Noise, when sigma > 0,
/// is drawn from noise_seed.
Descriptor synthetic_descriptor(std::uint64_t world_seed, const Vec2& location, double yaw,
                                double noise_sigma, std::optional<std::int64_t> alias_group,
                                std::uint64_t noise_seed = 0,
                                const SyntheticDescriptorConfig& cfg = {});

}  // namespace automerge
