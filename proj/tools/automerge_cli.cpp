#include "automerge/errors.hpp"
#include "automerge/io.hpp"
#include "automerge/plot.hpp"
#include "automerge/server.hpp"
#include "automerge/sim.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using namespace automerge;

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kPipeline = 3, kEval = 4, kPlot = 5 };

int fail(int code, const std::string& msg) {
  std::cerr << "automerge: " << msg << "\n";
  return code;
}

std::string describe(const Error& e) { return e.module() + ": " + e.what(); }

io::RunConfig config_or_default(const std::string& path) {
  return path.empty() ? io::RunConfig{} : io::load_run_config(path);
}

int cmd_gen(const std::string& config, const fs::path& out) {
  io::RunConfig cfg;
  try {
    cfg = config_or_default(config);
  } catch (const Error& e) {
    return fail(kConfig, describe(e));
  }
  try {
    const World w = generate_world(cfg.world);
    const std::string world = io::world_jsonl(w.segments, w.truth.poses);
    const std::string truth = io::dump(io::truth_json(w.truth));
    io::write_file_atomic(out / "world.jsonl", world);
    io::write_file_atomic(out / "truth.json", truth);
  } catch (const Error& e) {
    return fail(kPipeline, describe(e));
  }
  return kOk;
}

int cmd_merge(const fs::path& dataset, const std::string& mode, const std::string& config, const fs::path& out,
              std::optional<std::uint64_t> order_seed, std::optional<int> jobs) {
  io::RunConfig cfg;
  try {
    cfg = config_or_default(config);
  } catch (const Error& e) {
    return fail(kConfig, describe(e));
  }
  if (order_seed) cfg.order_seed = *order_seed;
  if (jobs) cfg.server.jobs = *jobs;
  try {
    const io::Dataset data = io::parse_world_jsonl(io::read_file(dataset / "world.jsonl"));
    if (data.segments.empty()) return fail(kPipeline, "io: no segments");
    MergeState state;
    std::vector<TimelineEntry> timeline;
    if (mode == "offline") {
      state = run_offline(data.segments, cfg.server);
      timeline.push_back({0, state.keyframe_count(), state.partition().k(), state.closures().size()});
    } else {
      state = run_incremental(stream(data.segments, cfg.order_seed, cfg.batch), cfg.server, &timeline);
    }
    const std::vector<std::pair<std::string, std::string>> files = {
        {"partition.json", io::dump(io::partition_json(state.partition()))},
        {"closures.csv", io::closures_csv(state.closures())},
        {"poses.csv", io::poses_csv(state.global_poses)},
        {"state.json", io::dump(io::state_json(state, cfg.server))},
        {"timeline.csv", io::timeline_csv(timeline)},
    };
    for (const auto& [name, content] : files) io::write_file_atomic(out / name, content);
    for (const auto& [cluster, why] : state.failed) {
      std::cerr << "automerge: warning: optimization failed for cluster of " << cluster.size()
                << " segments: " << why << "\n";
    }
  } catch (const Error& e) {
    return fail(kPipeline, describe(e));
  }
  return kOk;
}

int cmd_eval(const fs::path& result, const fs::path& truth_dir, int top_n, const fs::path& out) {
  MetricsReport rep;
  try {
    const io::Dataset data = io::parse_world_jsonl(io::read_file(truth_dir / "world.jsonl"));
    const GroundTruth gt = io::parse_truth(io::json::parse(io::read_file(truth_dir / "truth.json")), data.gt);
    const Partition partition = io::parse_partition(io::json::parse(io::read_file(result / "partition.json")));
    const io::json state = io::json::parse(io::read_file(result / "state.json"));
    const MergeState s = io::result_state(data.segments, io::parse_closures_csv(io::read_file(result / "closures.csv")),
                                          partition, io::parse_poses_csv(io::read_file(result / "poses.csv")));
    rep = evaluate(s, gt, top_n, state.value("rotation_bins", 0));
    io::write_file_atomic(out / "metrics.json", io::dump(io::metrics_json(rep)));
    io::write_file_atomic(out / "pr_curve.csv", io::pr_curve_csv(rep.pr_curve));
  } catch (const Error& e) {
    return fail(kEval, describe(e));
  } catch (const io::json::exception& e) {
    return fail(kEval, std::string("io: ") + e.what());
  }
  const auto row = [](const std::string& name, const std::string& value) {
    std::printf("%-18s %s\n", name.c_str(), value.c_str());
  };
  const auto f3 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  row("metric", "value");
  std::set<int> shown{1, 5, top_n};
  for (int k : shown)
    if (k <= top_n) row("recall@" + std::to_string(k), f3(rep.recall_at[static_cast<std::size_t>(k - 1)]));
  row("precision", f3(rep.precision));
  row("merging_accuracy", f3(rep.merging_accuracy));
  row("false_merges", std::to_string(rep.false_merges));
  row("max_ate", f3(rep.max_ate));
  row("rand_index", f3(rep.rand_index));
  row("partition_exact", rep.partition_exact ? "yes" : "no");
  return kOk;
}

int cmd_plot(const std::vector<fs::path>& results, const std::string& kind, const fs::path& out) {
  std::string svg;
  try {
    if (kind == "map") {
      const fs::path& r = results.front();
      const Partition p = io::parse_partition(io::json::parse(io::read_file(r / "partition.json")));
      svg = map_svg(io::parse_poses_csv(io::read_file(r / "poses.csv")),
                    io::parse_closures_csv(io::read_file(r / "closures.csv")), &p);
    } else if (kind == "pr") {
      Series<std::vector<PrPoint>> series;
      for (const auto& r : results)
        series.emplace_back(r.filename().string(), io::parse_pr_curve_csv(io::read_file(r / "pr_curve.csv")));
      svg = pr_svg(series);
    } else if (kind == "recall") {
      Series<std::vector<double>> series;
      for (const auto& r : results) {
        const io::json m = io::json::parse(io::read_file(r / "metrics.json"));
        series.emplace_back(r.filename().string(), m.at("recall_at").get<std::vector<double>>());
      }
      svg = recall_svg(series);
    } else {
      svg = timeline_svg(io::parse_timeline_csv(io::read_file(results.front() / "timeline.csv")));
    }
    io::write_file_atomic(out, svg);
  } catch (const Error& e) {
    return fail(kPlot, describe(e));
  } catch (const io::json::exception& e) {
    return fail(kPlot, std::string("io: ") + e.what());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-segment map merging: world generation, merging, evaluation and plots."};
  app.require_subcommand(1);

  std::string config;
  fs::path out;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic world (world.jsonl, truth.json).");
  gen->add_option("--config", config, "TOML run configuration");
  gen->add_option("--out", out, "Output directory")->required();

  fs::path dataset;
  std::string mode = "offline";
  std::optional<std::uint64_t> order_seed;
  std::optional<int> jobs;
  auto* merge = app.add_subcommand("merge", "Merge a dataset offline or incrementally.");
  merge->add_option("dataset", dataset, "Dataset directory holding world.jsonl")->required();
  merge->add_option("--mode", mode, "offline or incremental")->check(CLI::IsMember({"offline", "incremental"}));
  merge->add_option("--config", config, "TOML run configuration");
  merge->add_option("--out", out, "Result directory")->required();
  merge->add_option("--order-seed", order_seed, "Streaming order seed (overrides the config)");
  merge->add_option("--jobs", jobs, "Worker threads, 0 = logical cores (overrides the config)");

  fs::path result;
  fs::path truth;
  int top_n = 5;
  auto* eval = app.add_subcommand("eval", "Score a merge result against ground truth.");
  eval->add_option("result", result, "Result directory")->required();
  eval->add_option("--truth", truth, "Dataset directory holding world.jsonl and truth.json")->required();
  eval->add_option("--top-n", top_n, "Largest N for recall@N")->check(CLI::PositiveNumber);
  eval->add_option("--out", out, "Where metrics go (default: the result directory)");

  std::vector<fs::path> results;
  std::string kind = "map";
  auto* plot = app.add_subcommand("plot", "Render an SVG figure from result files.");
  plot->add_option("results", results, "Result directories (pr and recall accept several)")->required();
  plot->add_option("--kind", kind, "map, pr, recall or timeline")
      ->check(CLI::IsMember({"map", "pr", "recall", "timeline"}));
  plot->add_option("--out", out, "Output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*gen) return cmd_gen(config, out);
  if (*merge) return cmd_merge(dataset, mode, config, out, order_seed, jobs);
  if (*eval) return cmd_eval(result, truth, top_n, out.empty() ? result : out);
  if (results.size() > 1 && (kind == "map" || kind == "timeline"))
    return fail(kPlot, "--kind " + kind + " takes a single result directory");
  return cmd_plot(results, kind, out);
}
