#include "automerge/types.hpp"

namespace automerge {

void Segment::append(const Keyframe& kf) {
  odom.push_back(kf.odom);
  descriptors.push_back(kf.descriptor);
  if (kf.cloud) {
    // Clouds are all-or-nothing per segment.
    if (clouds.size() + 1 == odom.size()) clouds.push_back(*kf.cloud);
  }
}

}  // namespace automerge
