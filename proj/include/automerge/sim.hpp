#pragma once

#include "automerge/descriptor.hpp"
#include "automerge/posegraph.hpp"
#include "automerge/server.hpp"
#include "automerge/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace automerge {

enum class Direction { Forward, Reverse };

/// Segment b re-traverses `length` meters of segment a.
struct PlannedOverlap {
  SegmentId a = 0;
  SegmentId b = 1;
  double length = 100.0;
  Direction direction = Direction::Forward;
};

/// A perceptual-aliasing decoy: `keyframes` places of segment a get the same
/// descriptors as places of segment b that are far away. With consistent =
/// false the decoy in b is a tight double loop, whose geometry no edge
/// consistency check accepts; with consistent = true it is a rigid copy of a's
/// stretch, which passes every geometric test.
struct AliasSpec {
  SegmentId a = 0;
  SegmentId b = 1;
  int keyframes = 12;
  bool consistent = false;
};

enum class DescriptorSource { Synthetic, PolarHistogram };

struct WorldSpec {
  std::uint64_t seed = 1;
  int n_segments = 12;
  double segment_length = 1000.0;
  double keyframe_spacing = 5.0;
  std::vector<PlannedOverlap> overlap_plan;
  /// Odometry noise per meter travelled (translation per axis, rotation).
  double sigma_trans = 0.0;
  double sigma_rot = 0.0;
  double descriptor_noise = 0.0;
  std::vector<AliasSpec> alias_groups;
  DescriptorSource descriptor_source = DescriptorSource::Synthetic;
  SyntheticDescriptorConfig synthetic;
  PolarLayout polar;
  /// Attach simulated landmark scans to synthetic-descriptor keyframes too,
  /// so closures can be refined by scan registration.
  bool scans = false;
  /// Landmark grid pitch and per-point jitter of simulated scans.
  double landmark_cell = 25.0;
  double scan_noise = 0.02;
  /// Minimum separation between unplanned parts of different segments.
  double clearance = 30.0;
  int max_attempts = 200;

  int keyframes_per_segment() const;
};

struct TrueOverlap {
  SegmentId a = 0;
  SegmentId b = 0;
  Direction direction = Direction::Forward;
  /// Matched keyframe indices (k_a, k_b).
  std::vector<std::pair<int, int>> pairs;
};

struct GroundTruth {
  PoseMap poses;
  std::vector<TrueOverlap> overlaps;
  std::vector<std::vector<SegmentId>> partition;
};

struct World {
  std::vector<Segment> segments;
  GroundTruth truth;
};

/// Deterministic in spec.seed. Throws InfeasibleOverlapPlan when the plan
/// cannot be realized with the required clearances.
World generate_world(const WorldSpec& spec);

/// Interleaves the keyframes of all segments in a seeded random order (each
/// segment's own order preserved) and cuts the stream into batches.
std::vector<std::vector<Keyframe>> stream(const std::vector<Segment>& world, std::uint64_t order_seed,
                                          int batch);

/// 12 segments of 1 km in four groups, mixing forward and reverse overlaps.
WorldSpec default_world_spec(std::uint64_t seed = 1);

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

struct ClusterAte {
  std::vector<SegmentId> cluster;
  double ate = 0.0;
};

struct MetricsReport {
  int top_n = 1;
  /// recall_at[k - 1] = recall@k.
  std::vector<double> recall_at;
  int queries = 0;
  std::vector<PrPoint> pr_curve;
  /// Over all accepted closures; 1 when there are none.
  double precision = 1.0;
  int closures = 0;
  int true_closures = 0;
  double merging_accuracy = 0.0;
  int overlaps_found = 0;
  int overlaps_total = 0;
  int false_merges = 0;
  std::vector<ClusterAte> ate;
  double max_ate = 0.0;
  bool partition_exact = false;
  double rand_index = 0.0;
};

/// A closure or retrieval counts as correct within this many meters.
inline constexpr double kSuccessRadius = 10.0;

MetricsReport evaluate(const MergeState& result, const GroundTruth& gt, int top_n, int rotation_bins = 0);

double rand_index(const std::vector<std::vector<SegmentId>>& a, const std::vector<std::vector<SegmentId>>& b);

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);
std::string to_string(DescriptorSource s);
DescriptorSource descriptor_source_from_string(const std::string& s);

}  // namespace automerge
