#pragma once

#include "automerge/server.hpp"
#include "automerge/sim.hpp"

#include <string>
#include <utility>
#include <vector>

namespace automerge {

template <typename T>
using Series = std::vector<std::pair<std::string, T>>;

/// One polyline per segment, colored by cluster when a partition is given,
/// and one line per closure whose endpoints both have poses.
std::string map_svg(const PoseMap& poses, const std::vector<LoopClosure>& closures,
                    const Partition* partition = nullptr);

/// One recall-precision polyline per series.
std::string pr_svg(const Series<std::vector<PrPoint>>& series);

/// recall@k bars, one group per k with one bar per series.
std::string recall_svg(const Series<std::vector<double>>& series);

/// Cluster count against batch index.
std::string timeline_svg(const std::vector<TimelineEntry>& timeline);

}  // namespace automerge
