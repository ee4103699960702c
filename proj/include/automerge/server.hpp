#pragma once

#include "automerge/cluster.hpp"
#include "automerge/lcd.hpp"
#include "automerge/posegraph.hpp"
#include "automerge/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace automerge {

using SegmentPair = std::pair<SegmentId, SegmentId>;  // first < second

struct ClusterConfig {
  double theta = 0.1;
  double c_w = 1.0;
  /// 0 means "number of agents".
  int k_max = 0;
  std::uint64_t seed = 5;
  int restarts = 10;
};

struct ServerConfig {
  LcdConfig lcd;
  ClusterConfig cluster;
  OptimizerConfig opt;
  /// Worker threads for pairwise detection and per-cluster optimization;
  /// 0 picks the hardware concurrency.
  int jobs = 0;
  /// A pair is skipped while min D over every prefilter_stride-th row of the
  /// first segment exceeds this distance.
  double prefilter_distance = 0.6;
  int prefilter_stride = 4;
};

/// Rows and columns of D already compared for a pair.
struct PairCursor {
  int rows = 0;
  int cols = 0;

  friend bool operator==(const PairCursor&, const PairCursor&) = default;
};

struct MergeState {
  SegmentMap segments;
  /// Closures of each pair from its latest detection run.
  std::map<SegmentPair, std::vector<LoopClosure>> pair_closures;
  std::map<SegmentPair, PairCursor> pair_cursor;
  /// Raw difference matrices, grown in place as segments extend.
  std::map<SegmentPair, DifferenceMatrix> pair_matrix;
  /// Pairs awaiting detection.
  std::set<SegmentPair> queue;
  /// Segments extended since the last step.
  std::set<SegmentId> touched;
  ClusterState clusters;
  /// Optimized poses of every segment inside an optimized cluster.
  PoseMap global_poses;
  /// Clusters whose last optimization failed, with the reason.
  std::map<std::vector<SegmentId>, std::string> failed;
  /// Input fingerprint of each cluster's last optimization.
  std::map<std::vector<SegmentId>, std::uint64_t> optimized;
  std::uint64_t batches = 0;

  const Partition& partition() const { return clusters.partition; }
  const ConnectionGraph& graph() const { return clusters.graph; }
  /// All closures ordered by (seg_i, seg_j, k_i, k_j).
  std::vector<LoopClosure> closures() const;
  std::size_t keyframe_count() const;
  bool quiescent() const;
};

/// Appends keyframes to their segments and queues every pair touching a
/// changed segment. Throws OutOfOrderKeyframe (state untouched) when an index
/// is not the next one of its segment.
void ingest(MergeState& state, const std::vector<Keyframe>& batch);

/// Runs queued detections, updates weights and the partition, and
/// re-optimizes clusters whose inputs changed. No-op at quiescence.
void step(MergeState& state, const ServerConfig& cfg);

MergeState run_offline(const std::vector<Segment>& segments, const ServerConfig& cfg);

struct TimelineEntry {
  int batch = 0;
  std::size_t keyframes = 0;
  int clusters = 0;
  std::size_t closures = 0;
};

/// ingest + step per batch.
MergeState run_incremental(const std::vector<std::vector<Keyframe>>& batches, const ServerConfig& cfg,
                           std::vector<TimelineEntry>* timeline = nullptr);

/// Overlap evidence of one pair: L = sum over zones of the first segment's
/// path length between the zone's extreme k_i, and the mean closure
/// descriptor distance.
OverlapMeta overlap_meta(const Segment& seg_i, const std::vector<LoopClosure>& closures);

/// Runs fn(0..n-1) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace automerge
