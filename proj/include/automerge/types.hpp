#pragma once

#include "automerge/descriptor.hpp"
#include "automerge/geometry.hpp"

#include <optional>
#include <vector>

namespace automerge {

using SegmentId = int;

/// One streamed sub-map sample.
struct Keyframe {
  SegmentId segment = 0;
  int index = 0;
  Pose2 odom;
  Descriptor descriptor;
  std::optional<PointCloud2> cloud;
};

/// An agent's ordered keyframes with odometry-frame poses. clouds is either
/// empty or parallel to odom.
struct Segment {
  SegmentId id = 0;
  std::vector<Pose2> odom;
  std::vector<Descriptor> descriptors;
  std::vector<PointCloud2> clouds;

  int size() const { return static_cast<int>(odom.size()); }
  bool has_clouds() const { return !clouds.empty() && clouds.size() == odom.size(); }
  Vec2 position(int k) const { return odom[static_cast<std::size_t>(k)].translation(); }

  void append(const Keyframe& kf);
};

/// Node key in the global pose graph.
struct NodeKey {
  SegmentId segment = 0;
  int index = 0;

  friend auto operator<=>(const NodeKey&, const NodeKey&) = default;
};

}  // namespace automerge
