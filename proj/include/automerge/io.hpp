#pragma once

#include "automerge/server.hpp"
#include "automerge/sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace automerge::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Everything a run needs. Seeds live in their owning structs; the [seeds]
/// table of the TOML file maps onto them.
struct RunConfig {
  WorldSpec world = default_world_spec();
  ServerConfig server;
  /// Keyframes per streamed batch in incremental mode.
  int batch = 300;
  std::uint64_t order_seed = 1;
};

/// Starts from the defaults and applies every key present. Unknown keys and
/// type mismatches throw InvalidConfig with "source:line:column: message".
RunConfig parse_run_config(std::string_view toml_text, const std::string& source = "config");
RunConfig load_run_config(const fs::path& path);
/// Canonical TOML of a config; parse_run_config(to_toml(c)) reproduces c.
std::string to_toml(const RunConfig& cfg);

// -- dataset ----------------------------------------------------------------

struct Dataset {
  std::vector<Segment> segments;
  /// Ground-truth pose of every keyframe.
  PoseMap gt;
};

/// One keyframe per line:
/// {"seg":id,"k":index,"odom":[x,y,yaw],"gt":[x,y,yaw],"desc":[...],"unit":bool}
/// plus "cloud":[x0,y0,x1,y1,...] when the segment carries scans.
std::string world_jsonl(const std::vector<Segment>& segments, const PoseMap& gt);
/// Throws MalformedInput naming the offending line.
Dataset parse_world_jsonl(std::string_view text);

json truth_json(const GroundTruth& gt);
/// Overlaps and partition from truth.json, poses from the dataset.
GroundTruth parse_truth(const json& j, PoseMap poses);

// -- results ----------------------------------------------------------------

std::string closures_csv(const std::vector<LoopClosure>& closures);
std::vector<LoopClosure> parse_closures_csv(std::string_view text);
std::string poses_csv(const PoseMap& poses);
PoseMap parse_poses_csv(std::string_view text);
json partition_json(const Partition& p);
Partition parse_partition(const json& j);
json state_json(const MergeState& s, const ServerConfig& cfg);
std::string timeline_csv(const std::vector<TimelineEntry>& timeline);
std::vector<TimelineEntry> parse_timeline_csv(std::string_view text);
json metrics_json(const MetricsReport& m);
std::string pr_curve_csv(const std::vector<PrPoint>& pr);
std::vector<PrPoint> parse_pr_curve_csv(std::string_view text);

/// A MergeState holding just what evaluate reads: segments, closures,
/// partition and poses.
MergeState result_state(const std::vector<Segment>& segments, const std::vector<LoopClosure>& closures,
                        const Partition& partition, const PoseMap& poses);

// -- files ------------------------------------------------------------------

/// Shortest decimal text that parses back to exactly v.
std::string format_double(double v);

/// Throws MissingInput when the file cannot be read.
std::string read_file(const fs::path& path);
/// Writes next to the target and renames over it, creating parent
/// directories as needed.
void write_file_atomic(const fs::path& path, std::string_view content);
/// JSON text with two-space indent and a trailing newline.
std::string dump(const json& j);

}  // namespace automerge::io
