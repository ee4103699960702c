#include "automerge/io.hpp"

#include "automerge/errors.hpp"

#include <toml++/toml.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace automerge::io {

namespace {

[[noreturn]] void config_error(const std::string& source, const toml::source_region& where, const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, "io",
              source + ":" + std::to_string(where.begin.line) + ":" + std::to_string(where.begin.column) + ": " + msg);
}

/// A TOML table whose keys must all be consumed; leftovers are reported.
class Table {
 public:
  Table(const toml::table& t, std::string source, std::string prefix)
      : t_(t), source_(std::move(source)), prefix_(std::move(prefix)) {}

  const toml::node* take(const std::string& key) {
    seen_.insert(key);
    return t_.get(key);
  }

  void number(const std::string& key, double& out) {
    const toml::node* n = take(key);
    if (n == nullptr) return;
    if (n->is_floating_point()) {
      out = *n->value<double>();
    } else if (n->is_integer()) {
      out = static_cast<double>(*n->value<std::int64_t>());
    } else {
      config_error(source_, n->source(), "'" + prefix_ + key + "' must be a number");
    }
  }

  void integer(const std::string& key, int& out, int min = std::numeric_limits<int>::min()) {
    const toml::node* n = take(key);
    if (n == nullptr) return;
    if (!n->is_integer()) config_error(source_, n->source(), "'" + prefix_ + key + "' must be an integer");
    const std::int64_t v = *n->value<std::int64_t>();
    if (v < min || v > std::numeric_limits<int>::max())
      config_error(source_, n->source(), "'" + prefix_ + key + "' must be >= " + std::to_string(min));
    out = static_cast<int>(v);
  }

  void seed(const std::string& key, std::uint64_t& out) {
    const toml::node* n = take(key);
    if (n == nullptr) return;
    if (!n->is_integer() || *n->value<std::int64_t>() < 0)
      config_error(source_, n->source(), "'" + prefix_ + key + "' must be a non-negative integer");
    out = static_cast<std::uint64_t>(*n->value<std::int64_t>());
  }

  void boolean(const std::string& key, bool& out) {
    const toml::node* n = take(key);
    if (n == nullptr) return;
    if (!n->is_boolean()) config_error(source_, n->source(), "'" + prefix_ + key + "' must be true or false");
    out = *n->value<bool>();
  }

  void string(const std::string& key, std::string& out) {
    const toml::node* n = take(key);
    if (n == nullptr) return;
    if (!n->is_string()) config_error(source_, n->source(), "'" + prefix_ + key + "' must be a string");
    out = *n->value<std::string>();
  }

  void vec3(const std::string& key, Eigen::Vector3d& out) {
    const toml::node* n = take(key);
    if (n == nullptr) return;
    const toml::array* a = n->as_array();
    if (a == nullptr || a->size() != 3)
      config_error(source_, n->source(), "'" + prefix_ + key + "' must be an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      const toml::node& e = *a->get(i);
      if (!e.is_number()) config_error(source_, e.source(), "'" + prefix_ + key + "' must hold numbers");
      out[static_cast<Eigen::Index>(i)] = *e.value<double>();
    }
  }

  /// Sub-table, or nullptr when absent.
  const toml::table* table(const std::string& key) {
    const toml::node* n = take(key);
    if (n == nullptr) return nullptr;
    if (!n->is_table()) config_error(source_, n->source(), "'" + prefix_ + key + "' must be a table");
    return n->as_table();
  }

  const toml::array* array(const std::string& key) {
    const toml::node* n = take(key);
    if (n == nullptr) return nullptr;
    if (!n->is_array()) config_error(source_, n->source(), "'" + prefix_ + key + "' must be an array of tables");
    return n->as_array();
  }

  void finish() const {
    for (const auto& [k, v] : t_) {
      if (!seen_.contains(std::string(k.str())))
        config_error(source_, v.source(), "unknown key '" + prefix_ + std::string(k.str()) + "'");
    }
  }

  const std::string& source() const { return source_; }

 private:
  const toml::table& t_;
  std::string source_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void require(bool ok, const Table& t, const toml::node* n, const std::string& msg) {
  if (!ok) config_error(t.source(), n != nullptr ? n->source() : toml::source_region{}, msg);
}

template <typename Fn>
void each_table(const toml::array* arr, const std::string& source, const std::string& prefix, Fn fn) {
  if (arr == nullptr) return;
  for (const toml::node& n : *arr) {
    if (!n.is_table()) config_error(source, n.source(), "'" + prefix + "' entries must be tables");
    Table t(*n.as_table(), source, prefix + ".");
    fn(t, n);
    t.finish();
  }
}

void read_world(Table& t, WorldSpec& w) {
  t.integer("n_segments", w.n_segments, 0);
  t.number("segment_length", w.segment_length);
  t.number("keyframe_spacing", w.keyframe_spacing);
  t.number("sigma_trans", w.sigma_trans);
  t.number("sigma_rot", w.sigma_rot);
  t.number("descriptor_noise", w.descriptor_noise);
  std::string source = to_string(w.descriptor_source);
  t.string("descriptor_source", source);
  try {
    w.descriptor_source = descriptor_source_from_string(source);
  } catch (const Error&) {
    config_error(t.source(), t.take("descriptor_source")->source(),
                 "'world.descriptor_source' must be \"synthetic\" or \"polar_histogram\"");
  }
  t.boolean("scans", w.scans);
  t.number("landmark_cell", w.landmark_cell);
  t.number("scan_noise", w.scan_noise);
  t.number("clearance", w.clearance);
  t.integer("max_attempts", w.max_attempts, 1);
  int dim = static_cast<int>(w.synthetic.dim);
  t.integer("descriptor_dim", dim, 1);
  w.synthetic.dim = static_cast<std::size_t>(dim);
  t.number("descriptor_cell", w.synthetic.cell);
  t.integer("polar_bins_radial", w.polar.bins_radial, 1);
  t.integer("polar_bins_angular", w.polar.bins_angular, 1);
  t.number("polar_max_range", w.polar.max_range);
  require(w.keyframe_spacing > 0.0, t, t.take("keyframe_spacing"), "'world.keyframe_spacing' must be > 0");
  require(w.segment_length > 0.0, t, t.take("segment_length"), "'world.segment_length' must be > 0");

  if (const toml::array* arr = t.array("overlap")) {
    w.overlap_plan.clear();
    each_table(arr, t.source(), "world.overlap", [&](Table& o, const toml::node& n) {
      PlannedOverlap p;
      require(o.take("a") && o.take("b") && o.take("length"), o, &n, "'world.overlap' needs a, b and length");
      o.integer("a", p.a, 0);
      o.integer("b", p.b, 0);
      o.number("length", p.length);
      std::string dir = to_string(p.direction);
      o.string("direction", dir);
      if (dir != "forward" && dir != "reverse")
        config_error(o.source(), o.take("direction")->source(), "'direction' must be \"forward\" or \"reverse\"");
      p.direction = direction_from_string(dir);
      w.overlap_plan.push_back(p);
    });
  }
  if (const toml::array* arr = t.array("alias")) {
    w.alias_groups.clear();
    each_table(arr, t.source(), "world.alias", [&](Table& o, const toml::node& n) {
      AliasSpec a;
      require(o.take("a") && o.take("b"), o, &n, "'world.alias' needs a and b");
      o.integer("a", a.a, 0);
      o.integer("b", a.b, 0);
      o.integer("keyframes", a.keyframes, 1);
      o.boolean("consistent", a.consistent);
      w.alias_groups.push_back(a);
    });
  }
}

void read_lcd(Table& t, LcdConfig& c) {
  t.integer("win", c.seq.win, 3);
  require(c.seq.win % 2 == 1, t, t.take("win"), "'lcd.win' must be odd");
  t.number("v_min", c.seq.v_min);
  t.number("v_max", c.seq.v_max);
  require(c.seq.v_min > 0.0 && c.seq.v_min <= c.seq.v_max, t, t.take("v_min"), "'lcd' needs 0 < v_min <= v_max");
  t.integer("v_steps", c.seq.v_steps, 1);
  t.number("score_thresh", c.seq.score_thresh);
  t.boolean("allow_reverse", c.seq.allow_reverse);
  t.integer("norm_window", c.norm_window, 1);
  t.number("norm_eps", c.norm_eps);
  t.integer("max_zones", c.max_zones, 1);
  t.number("elbow_ratio", c.elbow_ratio);
  t.number("beta", c.beta);
  require(c.beta >= 0.0 && c.beta <= 1.0, t, t.take("beta"), "'lcd.beta' must lie in [0, 1]");
  t.integer("ransac_iterations", c.ransac_iterations, 1);
  t.integer("sample_n", c.sample_n, 2);
  t.integer("min_inliers", c.min_inliers, 1);
  t.integer("rotation_bins", c.rotation_bins, 0);
  t.integer("icp_max_iter", c.icp.max_iter, 0);
  t.number("icp_tol", c.icp.tol);
  t.number("icp_reject_radius", c.icp.reject_radius);
}

void read_cluster(Table& t, ClusterConfig& c) {
  t.number("theta", c.theta);
  require(c.theta > 0.0, t, t.take("theta"), "'cluster.theta' must be > 0");
  t.number("c_w", c.c_w);
  t.integer("k_max", c.k_max, 0);
  t.integer("restarts", c.restarts, 1);
}

void read_opt(Table& t, OptimizerConfig& c) {
  t.integer("max_iter", c.max_iter, 0);
  t.number("lambda_init", c.lambda_init);
  t.number("tol", c.tol);
  t.vec3("odom_information", c.odom_information);
  t.vec3("loop_information", c.loop_information);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

/// Non-empty lines without trailing '\r'.
std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  for (std::string_view l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what, std::size_t line) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::MalformedInput, "io",
                std::string(what) + " line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

/// Rows of a CSV file with the expected header, split into fields.
std::vector<std::vector<std::string_view>> csv_rows(std::string_view text, std::string_view header,
                                                    std::string_view what) {
  const auto ls = lines(text);
  if (ls.empty() || ls.front() != header)
    throw Error(ErrorCode::MalformedInput, "io", std::string(what) + ": expected header '" + std::string(header) + "'");
  const std::size_t cols = split(header, ',').size();
  std::vector<std::vector<std::string_view>> rows;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    auto f = split(ls[i], ',');
    if (f.size() != cols)
      throw Error(ErrorCode::MalformedInput, "io",
                  std::string(what) + " line " + std::to_string(i + 1) + ": expected " + std::to_string(cols) + " fields");
    rows.push_back(std::move(f));
  }
  return rows;
}

json pose_json(const Pose2& p) { return json::array({p.x, p.y, p.yaw}); }

Pose2 pose_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::MalformedInput, "io", "pose must be [x, y, yaw]");
  Pose2 p;
  p.x = j[0].get<double>();
  p.y = j[1].get<double>();
  p.yaw = j[2].get<double>();
  return p;
}

json closure_json(const LoopClosure& c) {
  json j;
  j["seg_i"] = c.seg_i;
  j["k_i"] = c.candidate.k_i;
  j["seg_j"] = c.seg_j;
  j["k_j"] = c.candidate.k_j;
  j["score"] = c.candidate.score;
  j["zone"] = c.candidate.zone;
  j["relative_pose"] = pose_json(c.relative_pose);
  j["confidence"] = c.confidence;
  j["descriptor_distance"] = c.descriptor_distance;
  return j;
}

}  // namespace

// -- config -----------------------------------------------------------------

RunConfig parse_run_config(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    config_error(source, e.source(), std::string(e.description()));
  }
  RunConfig cfg;
  Table top(root, source, "");
  if (const toml::table* t = top.table("seeds")) {
    Table s(*t, source, "seeds.");
    s.seed("world", cfg.world.seed);
    s.seed("order", cfg.order_seed);
    s.seed("kmeans", cfg.server.lcd.kmeans_seed);
    s.seed("ransac", cfg.server.lcd.ransac_seed);
    s.seed("cluster", cfg.server.cluster.seed);
    s.finish();
  }
  if (const toml::table* t = top.table("world")) {
    Table w(*t, source, "world.");
    read_world(w, cfg.world);
    w.finish();
  }
  if (const toml::table* t = top.table("lcd")) {
    Table l(*t, source, "lcd.");
    read_lcd(l, cfg.server.lcd);
    l.finish();
  }
  if (const toml::table* t = top.table("cluster")) {
    Table c(*t, source, "cluster.");
    read_cluster(c, cfg.server.cluster);
    c.finish();
  }
  if (const toml::table* t = top.table("opt")) {
    Table o(*t, source, "opt.");
    read_opt(o, cfg.server.opt);
    o.finish();
  }
  if (const toml::table* t = top.table("server")) {
    Table s(*t, source, "server.");
    s.integer("jobs", cfg.server.jobs, 0);
    s.number("prefilter_distance", cfg.server.prefilter_distance);
    s.integer("prefilter_stride", cfg.server.prefilter_stride, 1);
    s.integer("batch", cfg.batch, 1);
    s.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path), path.string()); }

std::string to_toml(const RunConfig& cfg) {
  std::ostringstream o;
  const auto num = [](double v) {
    std::string s = format_double(v);
    if (s.find_first_of(".eni") == std::string::npos) s += ".0";
    return s;
  };
  const auto vec = [&](const Eigen::Vector3d& v) { return "[" + num(v[0]) + ", " + num(v[1]) + ", " + num(v[2]) + "]"; };
  const auto flag = [](bool b) { return b ? "true" : "false"; };
  const WorldSpec& w = cfg.world;
  const LcdConfig& l = cfg.server.lcd;
  o << "[seeds]\n"
    << "world = " << w.seed << "\norder = " << cfg.order_seed << "\nkmeans = " << l.kmeans_seed
    << "\nransac = " << l.ransac_seed << "\ncluster = " << cfg.server.cluster.seed << "\n\n";
  o << "[world]\n"
    << "n_segments = " << w.n_segments << "\nsegment_length = " << num(w.segment_length)
    << "\nkeyframe_spacing = " << num(w.keyframe_spacing) << "\nsigma_trans = " << num(w.sigma_trans)
    << "\nsigma_rot = " << num(w.sigma_rot) << "\ndescriptor_noise = " << num(w.descriptor_noise)
    << "\ndescriptor_source = \"" << to_string(w.descriptor_source) << "\"\nscans = " << flag(w.scans)
    << "\nlandmark_cell = " << num(w.landmark_cell) << "\nscan_noise = " << num(w.scan_noise)
    << "\nclearance = " << num(w.clearance) << "\nmax_attempts = " << w.max_attempts
    << "\ndescriptor_dim = " << w.synthetic.dim << "\ndescriptor_cell = " << num(w.synthetic.cell)
    << "\npolar_bins_radial = " << w.polar.bins_radial << "\npolar_bins_angular = " << w.polar.bins_angular
    << "\npolar_max_range = " << num(w.polar.max_range) << "\n";
  o << "overlap = [\n";
  for (const auto& p : w.overlap_plan)
    o << "  { a = " << p.a << ", b = " << p.b << ", length = " << num(p.length) << ", direction = \""
      << to_string(p.direction) << "\" },\n";
  o << "]\nalias = [\n";
  for (const auto& a : w.alias_groups)
    o << "  { a = " << a.a << ", b = " << a.b << ", keyframes = " << a.keyframes
      << ", consistent = " << flag(a.consistent) << " },\n";
  o << "]\n\n";
  o << "[lcd]\n"
    << "win = " << l.seq.win << "\nv_min = " << num(l.seq.v_min) << "\nv_max = " << num(l.seq.v_max)
    << "\nv_steps = " << l.seq.v_steps << "\nscore_thresh = " << num(l.seq.score_thresh)
    << "\nallow_reverse = " << flag(l.seq.allow_reverse) << "\nnorm_window = " << l.norm_window
    << "\nnorm_eps = " << num(l.norm_eps) << "\nmax_zones = " << l.max_zones
    << "\nelbow_ratio = " << num(l.elbow_ratio) << "\nbeta = " << num(l.beta)
    << "\nransac_iterations = " << l.ransac_iterations << "\nsample_n = " << l.sample_n
    << "\nmin_inliers = " << l.min_inliers << "\nrotation_bins = " << l.rotation_bins
    << "\nicp_max_iter = " << l.icp.max_iter << "\nicp_tol = " << num(l.icp.tol)
    << "\nicp_reject_radius = " << num(l.icp.reject_radius) << "\n\n";
  const ClusterConfig& c = cfg.server.cluster;
  o << "[cluster]\ntheta = " << num(c.theta) << "\nc_w = " << num(c.c_w) << "\nk_max = " << c.k_max
    << "\nrestarts = " << c.restarts << "\n\n";
  const OptimizerConfig& p = cfg.server.opt;
  o << "[opt]\nmax_iter = " << p.max_iter << "\nlambda_init = " << num(p.lambda_init) << "\ntol = " << num(p.tol)
    << "\nodom_information = " << vec(p.odom_information) << "\nloop_information = " << vec(p.loop_information)
    << "\n\n";
  o << "[server]\njobs = " << cfg.server.jobs << "\nprefilter_distance = " << num(cfg.server.prefilter_distance)
    << "\nprefilter_stride = " << cfg.server.prefilter_stride << "\nbatch = " << cfg.batch << "\n";
  return o.str();
}

// -- dataset ----------------------------------------------------------------

std::string world_jsonl(const std::vector<Segment>& segments, const PoseMap& gt) {
  std::vector<const Segment*> order;
  for (const auto& s : segments) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const Segment* a, const Segment* b) { return a->id < b->id; });
  std::string out;
  for (const Segment* s : order) {
    for (int k = 0; k < s->size(); ++k) {
      const auto i = static_cast<std::size_t>(k);
      const auto g = gt.find({s->id, k});
      if (g == gt.end())
        throw Error(ErrorCode::KeyMismatch, "io", "no ground truth for segment " + std::to_string(s->id));
      json j;
      j["seg"] = s->id;
      j["k"] = k;
      j["odom"] = pose_json(s->odom[i]);
      j["gt"] = pose_json(g->second);
      j["desc"] = s->descriptors[i].values;
      j["unit"] = s->descriptors[i].normalized;
      if (s->has_clouds()) {
        json pts = json::array();
        for (const Vec2& p : s->clouds[i].points) {
          pts.push_back(p.x());
          pts.push_back(p.y());
        }
        j["cloud"] = std::move(pts);
      }
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

Dataset parse_world_jsonl(std::string_view text) {
  std::map<SegmentId, std::vector<std::pair<Keyframe, Pose2>>> by_seg;
  std::size_t n = 0;
  for (std::string_view l : split(text, '\n')) {
    ++n;
    if (l.empty() || l == "\r") continue;
    try {
      const json j = json::parse(l);
      Keyframe kf;
      kf.segment = j.at("seg").get<SegmentId>();
      kf.index = j.at("k").get<int>();
      kf.odom = pose_from(j.at("odom"));
      kf.descriptor = Descriptor(j.at("desc").get<std::vector<double>>(), j.value("unit", false));
      if (j.contains("cloud")) {
        const auto flat = j.at("cloud").get<std::vector<double>>();
        if (flat.size() % 2 != 0) throw Error(ErrorCode::MalformedInput, "io", "cloud needs x,y pairs");
        PointCloud2 c;
        for (std::size_t i = 0; i < flat.size(); i += 2) c.points.emplace_back(flat[i], flat[i + 1]);
        kf.cloud = std::move(c);
      }
      by_seg[kf.segment].emplace_back(std::move(kf), pose_from(j.at("gt")));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedInput, "io", "world.jsonl line " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedInput, "io", "world.jsonl line " + std::to_string(n) + ": " + e.what());
    }
  }
  Dataset d;
  for (auto& [id, kfs] : by_seg) {
    std::sort(kfs.begin(), kfs.end(), [](const auto& a, const auto& b) { return a.first.index < b.first.index; });
    Segment s;
    s.id = id;
    for (std::size_t k = 0; k < kfs.size(); ++k) {
      if (kfs[k].first.index != static_cast<int>(k)) {
        throw Error(ErrorCode::MalformedInput, "io",
                    "segment " + std::to_string(id) + " is missing keyframe " + std::to_string(k));
      }
      if (k > 0 && kfs[k].first.cloud.has_value() != kfs[0].first.cloud.has_value())
        throw Error(ErrorCode::MalformedInput, "io", "segment " + std::to_string(id) + " mixes scans and no scans");
      d.gt[{id, static_cast<int>(k)}] = kfs[k].second;
      s.append(kfs[k].first);
    }
    d.segments.push_back(std::move(s));
  }
  return d;
}

json truth_json(const GroundTruth& gt) {
  json j;
  j["partition"] = gt.partition;
  json ovs = json::array();
  for (const auto& o : gt.overlaps) {
    json oj;
    oj["a"] = o.a;
    oj["b"] = o.b;
    oj["direction"] = to_string(o.direction);
    json pairs = json::array();
    for (const auto& [ka, kb] : o.pairs) pairs.push_back(json::array({ka, kb}));
    oj["pairs"] = std::move(pairs);
    ovs.push_back(std::move(oj));
  }
  j["overlaps"] = std::move(ovs);
  j["keyframes"] = gt.poses.size();
  return j;
}

GroundTruth parse_truth(const json& j, PoseMap poses) {
  GroundTruth gt;
  try {
    gt.partition = j.at("partition").get<std::vector<std::vector<SegmentId>>>();
    for (const auto& oj : j.at("overlaps")) {
      TrueOverlap o;
      o.a = oj.at("a").get<SegmentId>();
      o.b = oj.at("b").get<SegmentId>();
      o.direction = direction_from_string(oj.at("direction").get<std::string>());
      for (const auto& p : oj.at("pairs")) o.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
      gt.overlaps.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedInput, "io", std::string("truth.json: ") + e.what());
  }
  gt.poses = std::move(poses);
  return gt;
}

// -- results ----------------------------------------------------------------

std::string closures_csv(const std::vector<LoopClosure>& closures) {
  std::string out = "seg_i,k_i,seg_j,k_j,dx,dy,dyaw,confidence\n";
  for (const auto& c : closures) {
    out += std::to_string(c.seg_i) + ',' + std::to_string(c.candidate.k_i) + ',' + std::to_string(c.seg_j) + ',' +
           std::to_string(c.candidate.k_j) + ',' + format_double(c.relative_pose.x) + ',' +
           format_double(c.relative_pose.y) + ',' + format_double(c.relative_pose.yaw) + ',' +
           format_double(c.confidence) + '\n';
  }
  return out;
}

std::vector<LoopClosure> parse_closures_csv(std::string_view text) {
  std::vector<LoopClosure> out;
  std::size_t line = 1;
  for (const auto& f : csv_rows(text, "seg_i,k_i,seg_j,k_j,dx,dy,dyaw,confidence", "closures.csv")) {
    ++line;
    LoopClosure c;
    c.seg_i = parse_number<int>(f[0], "closures.csv", line);
    c.candidate.k_i = parse_number<int>(f[1], "closures.csv", line);
    c.seg_j = parse_number<int>(f[2], "closures.csv", line);
    c.candidate.k_j = parse_number<int>(f[3], "closures.csv", line);
    c.relative_pose.x = parse_number<double>(f[4], "closures.csv", line);
    c.relative_pose.y = parse_number<double>(f[5], "closures.csv", line);
    c.relative_pose.yaw = parse_number<double>(f[6], "closures.csv", line);
    c.confidence = parse_number<double>(f[7], "closures.csv", line);
    out.push_back(c);
  }
  return out;
}

std::string poses_csv(const PoseMap& poses) {
  std::string out = "segment,index,x,y,yaw\n";
  for (const auto& [key, p] : poses) {
    out += std::to_string(key.segment) + ',' + std::to_string(key.index) + ',' + format_double(p.x) + ',' +
           format_double(p.y) + ',' + format_double(p.yaw) + '\n';
  }
  return out;
}

PoseMap parse_poses_csv(std::string_view text) {
  PoseMap out;
  std::size_t line = 1;
  for (const auto& f : csv_rows(text, "segment,index,x,y,yaw", "poses.csv")) {
    ++line;
    Pose2 p;
    p.x = parse_number<double>(f[2], "poses.csv", line);
    p.y = parse_number<double>(f[3], "poses.csv", line);
    p.yaw = parse_number<double>(f[4], "poses.csv", line);
    out[{parse_number<int>(f[0], "poses.csv", line), parse_number<int>(f[1], "poses.csv", line)}] = p;
  }
  return out;
}

json partition_json(const Partition& p) {
  json j;
  j["clusters"] = p.clusters;
  j["eigenvalues"] = p.eigenvalues;
  j["theta"] = p.theta;
  j["k"] = p.k();
  return j;
}

Partition parse_partition(const json& j) {
  Partition p;
  try {
    p.clusters = j.at("clusters").get<std::vector<std::vector<SegmentId>>>();
    p.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    p.theta = j.at("theta").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedInput, "io", std::string("partition.json: ") + e.what());
  }
  return p;
}

json state_json(const MergeState& s, const ServerConfig& cfg) {
  json j;
  j["batches"] = s.batches;
  j["rotation_bins"] = cfg.lcd.rotation_bins;
  json segs = json::array();
  for (const auto& [id, seg] : s.segments) segs.push_back({{"id", id}, {"keyframes", seg.size()}});
  j["segments"] = std::move(segs);
  json cls = json::array();
  for (const auto& c : s.closures()) cls.push_back(closure_json(c));
  j["closures"] = std::move(cls);
  json weights = json::array();
  const ConnectionGraph& g = s.graph();
  for (int a = 0; a < g.size(); ++a) {
    for (int b = a + 1; b < g.size(); ++b) {
      const double w = g.W(a, b);
      if (w == 0.0) continue;
      const SegmentPair key{g.agents[static_cast<std::size_t>(a)], g.agents[static_cast<std::size_t>(b)]};
      json e{{"a", key.first}, {"b", key.second}, {"weight", w}};
      if (const auto m = g.overlap_meta.find(key); m != g.overlap_meta.end()) {
        e["length"] = m->second.length;
        e["feature_gap"] = m->second.feature_gap;
      }
      weights.push_back(std::move(e));
    }
  }
  j["weights"] = std::move(weights);
  j["partition"] = partition_json(s.partition());
  json poses = json::array();
  for (const auto& [key, p] : s.global_poses) poses.push_back(json::array({key.segment, key.index, p.x, p.y, p.yaw}));
  j["poses"] = std::move(poses);
  json failed = json::array();
  for (const auto& [cluster, why] : s.failed) failed.push_back({{"cluster", cluster}, {"reason", why}});
  j["failed"] = std::move(failed);
  return j;
}

std::string timeline_csv(const std::vector<TimelineEntry>& timeline) {
  std::string out = "batch,keyframes,clusters,closures\n";
  for (const auto& t : timeline) {
    out += std::to_string(t.batch) + ',' + std::to_string(t.keyframes) + ',' + std::to_string(t.clusters) + ',' +
           std::to_string(t.closures) + '\n';
  }
  return out;
}

std::vector<TimelineEntry> parse_timeline_csv(std::string_view text) {
  std::vector<TimelineEntry> out;
  std::size_t line = 1;
  for (const auto& f : csv_rows(text, "batch,keyframes,clusters,closures", "timeline.csv")) {
    ++line;
    out.push_back({parse_number<int>(f[0], "timeline.csv", line), parse_number<std::size_t>(f[1], "timeline.csv", line),
                   parse_number<int>(f[2], "timeline.csv", line), parse_number<std::size_t>(f[3], "timeline.csv", line)});
  }
  return out;
}

json metrics_json(const MetricsReport& m) {
  json j;
  j["top_n"] = m.top_n;
  j["queries"] = m.queries;
  j["recall_at"] = m.recall_at;
  j["precision"] = m.precision;
  j["closures"] = m.closures;
  j["true_closures"] = m.true_closures;
  j["merging_accuracy"] = m.merging_accuracy;
  j["overlaps_found"] = m.overlaps_found;
  j["overlaps_total"] = m.overlaps_total;
  j["false_merges"] = m.false_merges;
  json ate = json::array();
  for (const auto& a : m.ate) ate.push_back({{"cluster", a.cluster}, {"ate", a.ate}});
  j["ate"] = std::move(ate);
  j["max_ate"] = m.max_ate;
  j["partition_exact"] = m.partition_exact;
  j["rand_index"] = m.rand_index;
  return j;
}

std::string pr_curve_csv(const std::vector<PrPoint>& pr) {
  std::string out = "threshold,precision,recall\n";
  for (const auto& p : pr)
    out += format_double(p.threshold) + ',' + format_double(p.precision) + ',' + format_double(p.recall) + '\n';
  return out;
}

std::vector<PrPoint> parse_pr_curve_csv(std::string_view text) {
  std::vector<PrPoint> out;
  std::size_t line = 1;
  for (const auto& f : csv_rows(text, "threshold,precision,recall", "pr_curve.csv")) {
    ++line;
    out.push_back({parse_number<double>(f[0], "pr_curve.csv", line), parse_number<double>(f[1], "pr_curve.csv", line),
                   parse_number<double>(f[2], "pr_curve.csv", line)});
  }
  return out;
}

MergeState result_state(const std::vector<Segment>& segments, const std::vector<LoopClosure>& closures,
                        const Partition& partition, const PoseMap& poses) {
  MergeState s;
  for (const auto& seg : segments) s.segments[seg.id] = seg;
  const auto check = [&](SegmentId id, int k) {
    const auto it = s.segments.find(id);
    if (it == s.segments.end() || k < 0 || k >= it->second.size()) {
      throw Error(ErrorCode::KeyMismatch, "io",
                  "keyframe (" + std::to_string(id) + ", " + std::to_string(k) + ") is not in the dataset");
    }
  };
  for (const auto& c : closures) {
    check(c.seg_i, c.candidate.k_i);
    check(c.seg_j, c.candidate.k_j);
    s.pair_closures[std::minmax(c.seg_i, c.seg_j)].push_back(c);
  }
  for (const auto& [key, p] : poses) check(key.segment, key.index);
  std::set<SegmentId> covered;
  for (const auto& c : partition.clusters) covered.insert(c.begin(), c.end());
  for (const auto& [id, seg] : s.segments) s.clusters.graph.add_agent(id);
  if (covered != std::set<SegmentId>(s.clusters.graph.agents.begin(), s.clusters.graph.agents.end()))
    throw Error(ErrorCode::KeyMismatch, "io", "partition does not cover the dataset's segments");
  s.clusters.partition = partition;
  s.global_poses = poses;
  return s;
}

// -- files ------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "io", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::InvalidArgument, "io", "cannot write " + path.string());
    }
  }
  fs::rename(tmp, path);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace automerge::io
