#include "automerge/sim.hpp"

#include "automerge/errors.hpp"
#include "automerge/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

namespace automerge {

namespace {

constexpr double kPi = std::numbers::pi;

enum Tag : std::uint64_t {
  kTagSegment = 1,
  kTagOdom = 2,
  kTagDescriptor = 3,
  kTagLandmark = 4,
  kTagScan = 5,
};

// Keyframes next to a piece boundary that may approach the piece's source.
constexpr int kCornerExempt = 6;
// Distance from segment ends and between pieces, in keyframes.
constexpr int kMargin = 10;
constexpr double kMaxTurn = 0.15;
constexpr double kFarOffset = 2100.0;

Vec2 heading_vec(double h) { return {std::cos(h), std::sin(h)}; }

struct Track {
  std::vector<Vec2> pos;
  std::vector<double> yaw;
  std::vector<int> source;        // -1 for free keyframes
  std::vector<char> reserved;     // unusable as an overlap source or decoy stretch
  std::vector<std::int64_t> alias;  // -1 when none
  std::vector<char> fixed_yaw;    // yaw copied from another segment
};

struct Point {
  Vec2 p;
  std::int64_t alias = -1;
};

class SpatialIndex {
 public:
  explicit SpatialIndex(double cell) : cell_(cell) {}

  void add(const Vec2& p, SegmentId seg) { cells_[key(p)].push_back({p, seg}); }

  /// Ids of segments with a point closer than `radius` (<= cell) to p.
  template <typename F>
  void visit(const Vec2& p, double radius, F&& f) const {
    const auto [cx, cy] = coords(p);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = cells_.find(pack(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (const auto& e : it->second)
          if ((e.p - p).norm() < radius) f(e.seg);
      }
    }
  }

 private:
  struct Entry {
    Vec2 p;
    SegmentId seg;
  };
  std::pair<std::int64_t, std::int64_t> coords(const Vec2& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_))};
  }
  static std::uint64_t pack(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) << 32) ^ (static_cast<std::uint64_t>(y) & 0xffffffffULL);
  }
  std::uint64_t key(const Vec2& p) const {
    const auto [x, y] = coords(p);
    return pack(x, y);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<Entry>> cells_;
};

struct Decoy {
  int alias_base = 0;
  int count = 0;
  bool consistent = false;
  std::vector<Vec2> shape;  // source stretch, used when consistent
};

// Smooth random walk with bounded turn rate; optionally embeds a decoy.
std::vector<Point> walk(const Vec2& start, double heading, int count, double spacing, Rng& rng,
                        const std::optional<Decoy>& decoy) {
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(count));
  out.push_back({start});
  double omega = 0.0;
  int insert_at = -1;
  if (decoy && count >= decoy->count + 8) {
    insert_at = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(count - decoy->count - 5)));
  }
  Vec2 p = start;
  while (static_cast<int>(out.size()) < count) {
    if (static_cast<int>(out.size()) == insert_at) {
      const int n = std::min(decoy->count, count - static_cast<int>(out.size()));
      if (decoy->consistent) {
        const Vec2 d0 = decoy->shape[1] - decoy->shape[0];
        const double rot = heading - std::atan2(d0.y(), d0.x());
        const Eigen::Matrix2d r = Pose2(0, 0, rot).rotation();
        const Vec2 origin = p + spacing * heading_vec(heading);
        for (int j = 0; j < n; ++j) {
          out.push_back({origin + r * (decoy->shape[static_cast<std::size_t>(j)] - decoy->shape[0]),
                         decoy->alias_base + j});
        }
        const Vec2 tail = out.back().p - out[out.size() - 2].p;
        heading = std::atan2(tail.y(), tail.x());
      } else {
        const double turn = rng.uniform() < 0.5 ? kPi / 3.0 : -kPi / 3.0;
        for (int j = 0; j < n; ++j) {
          heading += turn;
          p += spacing * heading_vec(heading);
          out.push_back({p, decoy->alias_base + j});
        }
      }
      p = out.back().p;
      omega = 0.0;
      continue;
    }
    omega = std::clamp(0.9 * omega + rng.normal(0.0, 0.03), -kMaxTurn, kMaxTurn);
    heading += omega;
    p += spacing * heading_vec(heading);
    out.push_back({p});
  }
  return out;
}

// Cubic Hermite curve from a to b resampled at (about) the keyframe spacing;
// both endpoints included.
std::vector<Vec2> connector(const Vec2& a, const Vec2& da, const Vec2& b, const Vec2& db, double spacing) {
  const double scale = std::max((b - a).norm(), spacing);
  auto eval = [&](double u) {
    const double u2 = u * u;
    const double u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * a + (u3 - 2 * u2 + u) * scale * da + (-2 * u3 + 3 * u2) * b +
           (u3 - u2) * scale * db;
  };
  constexpr int kSamples = 2000;
  std::vector<Vec2> dense(kSamples + 1);
  std::vector<double> arc(kSamples + 1, 0.0);
  for (int i = 0; i <= kSamples; ++i) {
    dense[static_cast<std::size_t>(i)] = eval(static_cast<double>(i) / kSamples);
    if (i > 0)
      arc[static_cast<std::size_t>(i)] =
          arc[static_cast<std::size_t>(i - 1)] +
          (dense[static_cast<std::size_t>(i)] - dense[static_cast<std::size_t>(i - 1)]).norm();
  }
  const double len = arc.back();
  const int c = std::max(1, static_cast<int>(std::lround(len / spacing)));
  std::vector<Vec2> out{a};
  std::size_t j = 0;
  for (int i = 1; i < c; ++i) {
    const double s = len * i / c;
    while (j + 1 < arc.size() && arc[j + 1] < s) ++j;
    const double t = (s - arc[j]) / std::max(arc[j + 1] - arc[j], 1e-12);
    out.push_back(dense[j] + t * (dense[j + 1] - dense[j]));
  }
  out.push_back(b);
  return out;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

struct PieceLayout {
  int overlap = 0;  // index into the normalized plan
  SegmentId source = 0;
  int src_start = 0;
  int m = 0;
  bool reverse = false;
  int b_start = 0;
};

struct Candidate {
  Track track;
  std::vector<PieceLayout> pieces;
  std::optional<std::pair<int, int>> decoy_stretch;  // alias index, start in source segment
};

void validate(const WorldSpec& spec) {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, "sim", msg); };
  if (spec.n_segments < 1) bad("n_segments must be >= 1");
  if (!(spec.keyframe_spacing > 0.0)) bad("keyframe_spacing must be > 0");
  if (spec.keyframes_per_segment() < 2) bad("segments need at least two keyframes");
  if (spec.sigma_trans < 0.0 || spec.sigma_rot < 0.0 || spec.descriptor_noise < 0.0) bad("noise must be >= 0");
  if (!(spec.clearance > 0.0)) bad("clearance must be > 0");
  if (spec.max_attempts < 1) bad("max_attempts must be >= 1");
  std::set<std::pair<SegmentId, SegmentId>> seen;
  for (const auto& o : spec.overlap_plan) {
    if (o.a == o.b || o.a < 0 || o.b < 0 || o.a >= spec.n_segments || o.b >= spec.n_segments) {
      bad("overlap references an invalid segment pair");
    }
    if (o.length < 2.0 * spec.keyframe_spacing) bad("overlap_length must be >= 2 x keyframe_spacing");
    if (!seen.insert(std::minmax(o.a, o.b)).second) bad("duplicate overlap pair");
  }
  for (const auto& a : spec.alias_groups) {
    if (a.a == a.b || a.a < 0 || a.b < 0 || a.a >= spec.n_segments || a.b >= spec.n_segments) {
      bad("alias group references an invalid segment pair");
    }
    if (a.keyframes < 3) bad("alias groups need at least 3 keyframes");
  }
}

PointCloud2 scan(const WorldSpec& spec, const Pose2& pose, SegmentId seg, int k) {
  const double range = spec.polar.max_range;
  const double cell = spec.landmark_cell;
  const auto x0 = static_cast<std::int64_t>(std::floor((pose.x - range) / cell));
  const auto x1 = static_cast<std::int64_t>(std::floor((pose.x + range) / cell));
  const auto y0 = static_cast<std::int64_t>(std::floor((pose.y - range) / cell));
  const auto y1 = static_cast<std::int64_t>(std::floor((pose.y + range) / cell));
  Rng noise(derive_seed(spec.seed, kTagScan, seg, k));
  const Pose2 inv = pose.inverse();
  PointCloud2 cloud;
  for (auto ix = x0; ix <= x1; ++ix) {
    for (auto iy = y0; iy <= y1; ++iy) {
      Rng rng(derive_seed(spec.seed, kTagLandmark, ix, iy));
      const int count = 1 + static_cast<int>(rng.below(4));
      for (int i = 0; i < count; ++i) {
        const Vec2 l{(static_cast<double>(ix) + rng.uniform()) * cell, (static_cast<double>(iy) + rng.uniform()) * cell};
        if ((l - pose.translation()).norm() >= range) continue;
        Vec2 local = inv.apply(l);
        if (spec.scan_noise > 0.0) local += Vec2(noise.normal(0.0, spec.scan_noise), noise.normal(0.0, spec.scan_noise));
        cloud.points.push_back(local);
      }
    }
  }
  return cloud;
}

}  // namespace

int WorldSpec::keyframes_per_segment() const {
  return static_cast<int>(std::lround(segment_length / keyframe_spacing));
}

World generate_world(const WorldSpec& spec) {
  validate(spec);
  const int n = spec.n_segments;
  const int N = spec.keyframes_per_segment();
  const double step = spec.keyframe_spacing;

  struct Normalized {
    SegmentId src;
    SegmentId dst;
    int m;
    bool reverse;
  };
  std::vector<Normalized> plan;
  for (const auto& o : spec.overlap_plan) {
    const int m = static_cast<int>(std::lround(o.length / step));
    if (m > N - 2 * kMargin) {
      throw Error(ErrorCode::InfeasibleOverlapPlan, "sim", "overlap longer than a segment allows");
    }
    plan.push_back({std::min(o.a, o.b), std::max(o.a, o.b), m, o.direction == Direction::Reverse});
  }
  UnionFind components(n);
  for (const auto& p : plan) components.unite(p.src, p.dst);

  std::vector<Track> tracks(static_cast<std::size_t>(n));
  SpatialIndex index(spec.clearance);
  std::vector<bool> placed(static_cast<std::size_t>(n), false);
  Vec2 lo(0, 0);
  Vec2 hi(0, 0);
  std::vector<TrueOverlap> overlaps;

  for (SegmentId b = 0; b < n; ++b) {
    std::vector<int> sources;
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (plan[i].dst == b) sources.push_back(static_cast<int>(i));
    std::vector<int> decoys;
    for (std::size_t i = 0; i < spec.alias_groups.size(); ++i)
      if (std::max(spec.alias_groups[i].a, spec.alias_groups[i].b) == b) decoys.push_back(static_cast<int>(i));
    if (decoys.size() > 1) {
      throw Error(ErrorCode::InfeasibleOverlapPlan, "sim", "at most one decoy per segment is supported");
    }

    std::optional<Candidate> accepted;
    for (int attempt = 0; attempt < spec.max_attempts && !accepted; ++attempt) {
      Rng rng(derive_seed(spec.seed, kTagSegment, b, attempt));
      Candidate cand;
      Track& t = cand.track;

      std::optional<Decoy> decoy;
      if (!decoys.empty()) {
        const auto& ag = spec.alias_groups[static_cast<std::size_t>(decoys.front())];
        const SegmentId p = std::min(ag.a, ag.b);
        const Track& tp = tracks[static_cast<std::size_t>(p)];
        const int len = ag.keyframes;
        std::vector<int> valid;
        for (int u = kMargin; u + len + kMargin <= N; ++u) {
          bool ok = true;
          for (int k = u - kMargin; k < u + len + kMargin && ok; ++k)
            ok = !tp.reserved[static_cast<std::size_t>(k)] && tp.source[static_cast<std::size_t>(k)] < 0;
          if (ok) valid.push_back(u);
        }
        if (valid.empty()) continue;
        const int u = valid[static_cast<std::size_t>(rng.below(valid.size()))];
        Decoy d;
        d.alias_base = decoys.front() * 100000;
        d.count = len;
        d.consistent = ag.consistent;
        for (int k = 0; k < len; ++k) d.shape.push_back(tp.pos[static_cast<std::size_t>(u + k)]);
        decoy = d;
        cand.decoy_stretch = {{decoys.front(), u}};
      }

      auto set_free = [&](const std::vector<Point>& pts) {
        for (const auto& pt : pts) {
          t.pos.push_back(pt.p);
          t.yaw.push_back(0.0);
          t.source.push_back(-1);
          t.alias.push_back(pt.alias);
          t.fixed_yaw.push_back(0);
        }
      };

      if (sources.empty()) {
        Vec2 start(0, 0);
        double heading = 0.0;
        if (b > 0) {
          heading = rng.uniform(-kPi, kPi);
          std::vector<SegmentId> mates;
          for (SegmentId s = 0; s < b; ++s)
            if (placed[static_cast<std::size_t>(s)] && components.find(s) == components.find(b)) mates.push_back(s);
          if (mates.empty()) {
            start = Vec2(hi.x() + kFarOffset, 0.5 * (lo.y() + hi.y()) + rng.uniform(-200.0, 200.0));
          } else {
            const Track& m = tracks[static_cast<std::size_t>(mates[static_cast<std::size_t>(rng.below(mates.size()))])];
            const Vec2 anchor = m.pos[static_cast<std::size_t>(rng.below(m.pos.size()))];
            start = anchor + rng.uniform(150.0, 400.0) * heading_vec(rng.uniform(-kPi, kPi));
          }
        }
        set_free(walk(start, heading, N, step, rng, decoy));
      } else {
        std::vector<int> order = sources;
        rng.shuffle(order);
        // Pick source ranges and corner sides.
        std::vector<std::vector<Vec2>> piece_pos;
        std::vector<std::vector<double>> piece_yaw;
        bool ok = true;
        Vec2 prev_exit(0, 0);
        std::map<SegmentId, std::vector<std::pair<int, int>>> used;  // ranges taken in this attempt
        for (std::size_t pi = 0; pi < order.size() && ok; ++pi) {
          const auto& ov = plan[static_cast<std::size_t>(order[pi])];
          const Track& ta = tracks[static_cast<std::size_t>(ov.src)];
          const int na = static_cast<int>(ta.pos.size());
          std::vector<int> valid;
          for (int s = kMargin; s + ov.m + kMargin <= na; ++s) {
            bool good = true;
            for (int k = std::max(0, s - kCornerExempt); k < std::min(na, s + ov.m + kCornerExempt) && good; ++k)
              good = !ta.reserved[static_cast<std::size_t>(k)];
            for (const auto& [us, ue] : used[ov.src])
              if (s < ue + kMargin && us < s + ov.m + kMargin) good = false;
            if (good) valid.push_back(s);
          }
          if (valid.empty()) {
            ok = false;
            break;
          }
          int s = valid[static_cast<std::size_t>(rng.below(valid.size()))];
          if (pi > 0) {
            double best = std::numeric_limits<double>::infinity();
            for (int v : valid) {
              const int entry = ov.reverse ? v + ov.m - 1 : v;
              const double d = (ta.pos[static_cast<std::size_t>(entry)] - prev_exit).norm();
              if (d < best) {
                best = d;
                s = v;
              }
            }
          }
          used[ov.src].push_back({s, s + ov.m});
          std::vector<Vec2> pp;
          std::vector<double> py;
          for (int j = 0; j < ov.m; ++j) {
            const int k = ov.reverse ? s + ov.m - 1 - j : s + j;
            pp.push_back(ta.pos[static_cast<std::size_t>(k)]);
            py.push_back(ov.reverse ? normalize_angle(ta.yaw[static_cast<std::size_t>(k)] + kPi)
                                    : ta.yaw[static_cast<std::size_t>(k)]);
          }
          prev_exit = pp.back();
          piece_pos.push_back(std::move(pp));
          piece_yaw.push_back(std::move(py));
          cand.pieces.push_back({order[pi], ov.src, s, ov.m, ov.reverse, 0});
        }
        if (!ok) continue;

        auto side = [&]() { return rng.uniform() < 0.5 ? 1.0 : -1.0; };
        // Entry/exit corner points around each piece.
        std::vector<Vec2> entry_pt;
        std::vector<Vec2> entry_dir;
        std::vector<Vec2> exit_pt;
        std::vector<Vec2> exit_dir;
        for (std::size_t pi = 0; pi < piece_pos.size(); ++pi) {
          const double h_in = piece_yaw[pi].front();
          const double h_out = piece_yaw[pi].back();
          const Vec2 u_in = heading_vec(h_in + side() * kPi / 2.0);
          const Vec2 u_out = heading_vec(h_out + side() * kPi / 2.0);
          entry_pt.push_back(piece_pos[pi].front() + step * u_in);
          entry_dir.push_back(-u_in);
          exit_pt.push_back(piece_pos[pi].back() + step * u_out);
          exit_dir.push_back(u_out);
        }
        std::vector<std::vector<Vec2>> conns;
        int fixed = 0;
        for (std::size_t pi = 0; pi < piece_pos.size(); ++pi) fixed += static_cast<int>(piece_pos[pi].size());
        for (std::size_t pi = 0; pi + 1 < piece_pos.size(); ++pi) {
          conns.push_back(connector(exit_pt[pi], exit_dir[pi], entry_pt[pi + 1], entry_dir[pi + 1], step));
          fixed += static_cast<int>(conns.back().size());
        }
        const int free = N - fixed;
        if (free < 2 * kMargin) continue;
        const bool decoy_in_head = rng.uniform() < 0.5;
        const int head = kMargin + static_cast<int>(rng.below(static_cast<std::uint64_t>(free - 2 * kMargin + 1)));
        const int tail = free - head;

        const Vec2 away = -entry_dir.front();
        std::vector<Point> hw = walk(entry_pt.front(), std::atan2(away.y(), away.x()), head, step, rng,
                                     decoy_in_head ? decoy : std::nullopt);
        std::reverse(hw.begin(), hw.end());
        set_free(hw);
        for (std::size_t pi = 0; pi < piece_pos.size(); ++pi) {
          cand.pieces[pi].b_start = static_cast<int>(t.pos.size());
          for (std::size_t j = 0; j < piece_pos[pi].size(); ++j) {
            t.pos.push_back(piece_pos[pi][j]);
            t.yaw.push_back(piece_yaw[pi][j]);
            t.source.push_back(cand.pieces[pi].source);
            t.alias.push_back(-1);
            t.fixed_yaw.push_back(1);
          }
          if (pi < conns.size()) {
            std::vector<Point> cp;
            for (const auto& v : conns[pi]) cp.push_back({v});
            set_free(cp);
          }
        }
        const Vec2 d = exit_dir.back();
        set_free(walk(exit_pt.back(), std::atan2(d.y(), d.x()), tail, step, rng,
                      decoy_in_head ? std::nullopt : decoy));
      }
      if (decoy) {
        const bool placed_decoy = std::any_of(t.alias.begin(), t.alias.end(), [](std::int64_t a) { return a >= 0; });
        if (!placed_decoy) continue;
      }

      // Headings of free keyframes follow the direction of travel.
      const int nt = static_cast<int>(t.pos.size());
      for (int k = 0; k < nt; ++k) {
        if (t.fixed_yaw[static_cast<std::size_t>(k)]) continue;
        const Vec2 d = k + 1 < nt ? Vec2(t.pos[static_cast<std::size_t>(k + 1)] - t.pos[static_cast<std::size_t>(k)])
                                  : Vec2(t.pos[static_cast<std::size_t>(k)] - t.pos[static_cast<std::size_t>(k - 1)]);
        t.yaw[static_cast<std::size_t>(k)] = normalize_angle(std::atan2(d.y(), d.x()));
      }

      // Clearance against every segment already placed.
      std::vector<std::set<SegmentId>> exempt(static_cast<std::size_t>(nt));
      for (const auto& pc : cand.pieces) {
        for (int k = std::max(0, pc.b_start - kCornerExempt); k < std::min(nt, pc.b_start + pc.m + kCornerExempt); ++k)
          exempt[static_cast<std::size_t>(k)].insert(pc.source);
      }
      bool clear = true;
      for (int k = 0; k < nt && clear; ++k) {
        index.visit(t.pos[static_cast<std::size_t>(k)], spec.clearance, [&](SegmentId s) {
          if (!exempt[static_cast<std::size_t>(k)].contains(s)) clear = false;
        });
      }
      if (!clear) continue;
      accepted = std::move(cand);
    }
    if (!accepted) {
      throw Error(ErrorCode::InfeasibleOverlapPlan, "sim",
                  "could not place segment " + std::to_string(b) + " with the planned overlaps");
    }

    Track& t = tracks[static_cast<std::size_t>(b)];
    t = std::move(accepted->track);
    t.reserved.assign(t.pos.size(), 0);
    for (const auto& pc : accepted->pieces) {
      const int nb = static_cast<int>(t.pos.size());
      for (int k = std::max(0, pc.b_start - kMargin); k < std::min(nb, pc.b_start + pc.m + kMargin); ++k)
        t.reserved[static_cast<std::size_t>(k)] = 1;
    }
    for (const auto& pc : accepted->pieces) {
      Track& ta = tracks[static_cast<std::size_t>(pc.source)];
      const int na = static_cast<int>(ta.pos.size());
      for (int k = std::max(0, pc.src_start - kMargin); k < std::min(na, pc.src_start + pc.m + kMargin); ++k)
        ta.reserved[static_cast<std::size_t>(k)] = 1;
    }
    if (accepted->decoy_stretch) {
      const auto [ai, u] = *accepted->decoy_stretch;
      const auto& ag = spec.alias_groups[static_cast<std::size_t>(ai)];
      Track& tp = tracks[static_cast<std::size_t>(std::min(ag.a, ag.b))];
      for (int k = std::max(0, u - kMargin); k < std::min(N, u + ag.keyframes + kMargin); ++k)
        tp.reserved[static_cast<std::size_t>(k)] = 1;
      for (int k = 0; k < ag.keyframes; ++k) tp.alias[static_cast<std::size_t>(u + k)] = ai * 100000 + k;
      for (std::size_t k = 0; k < t.pos.size(); ++k)
        if (t.alias[k] >= 0) t.reserved[k] = 1;
    }
    for (const auto& p : t.pos) {
      index.add(p, b);
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    placed[static_cast<std::size_t>(b)] = true;

    for (const auto& pc : accepted->pieces) {
      TrueOverlap to;
      to.a = pc.source;
      to.b = b;
      to.direction = pc.reverse ? Direction::Reverse : Direction::Forward;
      for (int j = 0; j < pc.m; ++j) {
        const int ka = pc.reverse ? pc.src_start + pc.m - 1 - j : pc.src_start + j;
        to.pairs.push_back({ka, pc.b_start + j});
      }
      std::sort(to.pairs.begin(), to.pairs.end());
      overlaps.push_back(std::move(to));
    }
  }

  World world;
  world.truth.overlaps = std::move(overlaps);
  std::sort(world.truth.overlaps.begin(), world.truth.overlaps.end(),
            [](const TrueOverlap& x, const TrueOverlap& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });

  std::map<int, std::vector<SegmentId>> groups;
  for (SegmentId s = 0; s < n; ++s) groups[components.find(s)].push_back(s);
  for (auto& [root, members] : groups) world.truth.partition.push_back(members);
  canonicalize(world.truth.partition);

  for (SegmentId s = 0; s < n; ++s) {
    const Track& t = tracks[static_cast<std::size_t>(s)];
    Segment seg;
    seg.id = s;
    Rng odo(derive_seed(spec.seed, kTagOdom, s));
    std::vector<Pose2> gt;
    for (std::size_t k = 0; k < t.pos.size(); ++k) {
      gt.emplace_back(t.pos[k].x(), t.pos[k].y(), t.yaw[k]);
      world.truth.poses[{s, static_cast<int>(k)}] = gt.back();
    }
    seg.odom.push_back(Pose2{});
    for (std::size_t k = 1; k < gt.size(); ++k) {
      const Pose2 delta = between(gt[k - 1], gt[k]);
      const double d = std::hypot(delta.x, delta.y);
      const double st = spec.sigma_trans * std::sqrt(d);
      const double sr = spec.sigma_rot * std::sqrt(d);
      const double nx = st > 0.0 ? odo.normal(0.0, st) : 0.0;
      const double ny = st > 0.0 ? odo.normal(0.0, st) : 0.0;
      const double nr = sr > 0.0 ? odo.normal(0.0, sr) : 0.0;
      seg.odom.push_back(compose(seg.odom.back(), Pose2(delta.x + nx, delta.y + ny, delta.yaw + nr)));
    }
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const auto ki = static_cast<int>(k);
      if (spec.descriptor_source == DescriptorSource::Synthetic) {
        std::optional<std::int64_t> alias;
        if (t.alias[k] >= 0) alias = t.alias[k];
        seg.descriptors.push_back(synthetic_descriptor(spec.seed, t.pos[k], gt[k].yaw, spec.descriptor_noise, alias,
                                                       derive_seed(spec.seed, kTagDescriptor, s, ki), spec.synthetic));
        if (spec.scans) seg.clouds.push_back(scan(spec, gt[k], s, ki));
      } else {
        seg.clouds.push_back(scan(spec, gt[k], s, ki));
        seg.descriptors.push_back(l2_normalized(polar_histogram_descriptor(seg.clouds.back(), spec.polar)));
      }
    }
    world.segments.push_back(std::move(seg));
  }
  return world;
}

std::vector<std::vector<Keyframe>> stream(const std::vector<Segment>& world, std::uint64_t order_seed, int batch) {
  if (batch < 1) throw Error(ErrorCode::InvalidArgument, "sim", "batch must be >= 1");
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < world.size(); ++s) order.insert(order.end(), world[s].odom.size(), s);
  Rng rng(order_seed);
  rng.shuffle(order);
  std::vector<int> next(world.size(), 0);
  std::vector<std::vector<Keyframe>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i % static_cast<std::size_t>(batch) == 0) out.emplace_back();
    const Segment& seg = world[order[i]];
    const int k = next[order[i]]++;
    Keyframe kf;
    kf.segment = seg.id;
    kf.index = k;
    kf.odom = seg.odom[static_cast<std::size_t>(k)];
    kf.descriptor = seg.descriptors[static_cast<std::size_t>(k)];
    if (seg.has_clouds()) kf.cloud = seg.clouds[static_cast<std::size_t>(k)];
    out.back().push_back(std::move(kf));
  }
  return out;
}

WorldSpec default_world_spec(std::uint64_t seed) {
  WorldSpec spec;
  spec.seed = seed;
  spec.n_segments = 12;
  spec.segment_length = 1000.0;
  spec.sigma_trans = 0.01;
  spec.descriptor_noise = 0.05;
  spec.scans = true;
  spec.overlap_plan = {
      {0, 1, 150.0, Direction::Forward},  {1, 2, 120.0, Direction::Reverse},
      {3, 4, 200.0, Direction::Forward},  {4, 5, 150.0, Direction::Reverse},
      {3, 6, 100.0, Direction::Reverse},  {7, 8, 180.0, Direction::Forward},
      {9, 10, 120.0, Direction::Forward}, {10, 11, 160.0, Direction::Reverse},
  };
  spec.alias_groups = {{2, 5, 12, false}, {8, 10, 12, false}};
  return spec;
}

double rand_index(const std::vector<std::vector<SegmentId>>& a, const std::vector<std::vector<SegmentId>>& b) {
  std::map<SegmentId, int> la;
  std::map<SegmentId, int> lb;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (SegmentId s : a[i]) la[s] = static_cast<int>(i);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (SegmentId s : b[i]) lb[s] = static_cast<int>(i);
  std::vector<SegmentId> ids;
  for (const auto& [s, _] : la) {
    if (!lb.contains(s)) throw Error(ErrorCode::KeyMismatch, "sim", "partitions cover different segments");
    ids.push_back(s);
  }
  if (la.size() != lb.size()) throw Error(ErrorCode::KeyMismatch, "sim", "partitions cover different segments");
  if (ids.size() < 2) return 1.0;
  std::size_t agree = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const bool sa = la[ids[i]] == la[ids[j]];
      const bool sb = lb[ids[i]] == lb[ids[j]];
      agree += sa == sb ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

MetricsReport evaluate(const MergeState& result, const GroundTruth& gt, int top_n, int rotation_bins) {
  if (top_n < 1) throw Error(ErrorCode::InvalidArgument, "sim", "top_n must be >= 1");
  MetricsReport rep;
  rep.top_n = top_n;
  auto gt_pos = [&](SegmentId s, int k) {
    const auto it = gt.poses.find({s, k});
    if (it == gt.poses.end()) throw Error(ErrorCode::KeyMismatch, "sim", "keyframe missing from ground truth");
    return it->second.translation();
  };
  for (const auto& [id, seg] : result.segments)
    for (int k = 0; k < seg.size(); ++k) gt_pos(id, k);

  // (a) recall@k over revisit queries.
  rep.recall_at.assign(static_cast<std::size_t>(top_n), 0.0);
  std::vector<int> hits(static_cast<std::size_t>(top_n), 0);
  struct Hit {
    double d;
    SegmentId s;
    int k;
  };
  for (const auto& ov : gt.overlaps) {
    const auto qs = result.segments.find(ov.b);
    if (qs == result.segments.end()) continue;
    for (const auto& [ka, kb] : ov.pairs) {
      if (kb >= qs->second.size()) continue;
      const Descriptor& q = qs->second.descriptors[static_cast<std::size_t>(kb)];
      std::vector<Hit> all;
      for (const auto& [id, seg] : result.segments) {
        if (id == ov.b) continue;
        for (int k = 0; k < seg.size(); ++k)
          all.push_back({descriptor_distance(q, seg.descriptors[static_cast<std::size_t>(k)], rotation_bins), id, k});
      }
      const auto top = std::min<std::size_t>(all.size(), static_cast<std::size_t>(top_n));
      std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top), all.end(),
                        [](const Hit& x, const Hit& y) { return std::tie(x.d, x.s, x.k) < std::tie(y.d, y.s, y.k); });
      ++rep.queries;
      const Vec2 truth = gt_pos(ov.b, kb);
      for (std::size_t r = 0; r < top; ++r) {
        if ((gt_pos(all[r].s, all[r].k) - truth).norm() <= kSuccessRadius) {
          for (std::size_t j = r; j < static_cast<std::size_t>(top_n); ++j) ++hits[j];
          break;
        }
      }
    }
  }
  if (rep.queries > 0)
    for (int k = 0; k < top_n; ++k)
      rep.recall_at[static_cast<std::size_t>(k)] = static_cast<double>(hits[static_cast<std::size_t>(k)]) / rep.queries;

  // (b) precision and PR sweep over confidence.
  const std::vector<LoopClosure> closures = result.closures();
  std::map<SegmentPair, const TrueOverlap*> truth_pairs;
  std::size_t gt_pairs = 0;
  for (const auto& ov : gt.overlaps) {
    truth_pairs[std::minmax(ov.a, ov.b)] = &ov;
    gt_pairs += ov.pairs.size();
  }
  std::vector<double> pair_best(gt_pairs, -1.0);
  std::map<const TrueOverlap*, std::size_t> offset;
  {
    std::size_t o = 0;
    for (const auto& ov : gt.overlaps) {
      offset[&ov] = o;
      o += ov.pairs.size();
    }
  }
  std::vector<std::pair<double, bool>> scored;
  std::set<SegmentPair> found;
  for (const auto& c : closures) {
    const bool tp = (gt_pos(c.seg_i, c.candidate.k_i) - gt_pos(c.seg_j, c.candidate.k_j)).norm() <= kSuccessRadius;
    scored.push_back({c.confidence, tp});
    const auto key = std::minmax(c.seg_i, c.seg_j);
    const auto it = truth_pairs.find(key);
    if (it == truth_pairs.end()) {
      ++rep.false_merges;
      continue;
    }
    found.insert(key);
    const TrueOverlap& ov = *it->second;
    const int ka = c.seg_i == ov.a ? c.candidate.k_i : c.candidate.k_j;
    const int kb = c.seg_i == ov.a ? c.candidate.k_j : c.candidate.k_i;
    const Vec2 pa = gt_pos(ov.a, ka);
    const Vec2 pb = gt_pos(ov.b, kb);
    for (std::size_t i = 0; i < ov.pairs.size(); ++i) {
      const auto& [ta, tb] = ov.pairs[i];
      if ((gt_pos(ov.a, ta) - pa).norm() <= kSuccessRadius && (gt_pos(ov.b, tb) - pb).norm() <= kSuccessRadius) {
        double& best = pair_best[offset[&ov] + i];
        best = std::max(best, c.confidence);
      }
    }
  }
  rep.closures = static_cast<int>(closures.size());
  rep.true_closures = static_cast<int>(std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.second; }));
  rep.precision = closures.empty() ? 1.0 : static_cast<double>(rep.true_closures) / rep.closures;

  std::vector<double> thresholds;
  for (const auto& s : scored) thresholds.push_back(s.first);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  for (double th : thresholds) {
    PrPoint p;
    p.threshold = th;
    int acc = 0;
    int tp = 0;
    for (const auto& s : scored) {
      if (s.first >= th) {
        ++acc;
        tp += s.second ? 1 : 0;
      }
    }
    p.precision = acc > 0 ? static_cast<double>(tp) / acc : 1.0;
    const auto hit = std::count_if(pair_best.begin(), pair_best.end(), [&](double b) { return b >= th; });
    p.recall = gt_pairs > 0 ? static_cast<double>(hit) / static_cast<double>(gt_pairs) : 0.0;
    rep.pr_curve.push_back(p);
  }
  if (rep.pr_curve.empty()) rep.pr_curve.push_back({1.0, 1.0, 0.0});

  // (c) merging accuracy.
  rep.overlaps_total = static_cast<int>(gt.overlaps.size());
  rep.overlaps_found = static_cast<int>(found.size());
  rep.merging_accuracy = rep.overlaps_total > 0 ? static_cast<double>(rep.overlaps_found) / rep.overlaps_total : 1.0;

  // (d) ATE per optimized cluster.
  for (const auto& cluster : result.partition().clusters) {
    PoseMap est;
    PoseMap ref;
    bool complete = true;
    for (SegmentId s : cluster) {
      const auto it = result.segments.find(s);
      if (it == result.segments.end()) continue;
      for (int k = 0; k < it->second.size(); ++k) {
        const auto p = result.global_poses.find({s, k});
        if (p == result.global_poses.end()) {
          complete = false;
          break;
        }
        est[{s, k}] = p->second;
        ref[{s, k}] = gt.poses.at({s, k});
      }
    }
    if (!complete || est.size() < 2) continue;
    const double e = ate(est, ref);
    rep.ate.push_back({cluster, e});
    rep.max_ate = std::max(rep.max_ate, e);
  }

  // (e) partition correctness over the segments present in the result.
  std::vector<std::vector<SegmentId>> truth;
  for (const auto& c : gt.partition) {
    std::vector<SegmentId> kept;
    for (SegmentId s : c)
      if (result.segments.contains(s)) kept.push_back(s);
    if (!kept.empty()) truth.push_back(std::move(kept));
  }
  canonicalize(truth);
  rep.partition_exact = truth == result.partition().clusters;
  rep.rand_index = rand_index(truth, result.partition().clusters);
  return rep;
}

std::string to_string(Direction d) { return d == Direction::Forward ? "forward" : "reverse"; }

Direction direction_from_string(const std::string& s) {
  if (s == "forward") return Direction::Forward;
  if (s == "reverse") return Direction::Reverse;
  throw Error(ErrorCode::InvalidArgument, "sim", "unknown direction '" + s + "'");
}

std::string to_string(DescriptorSource s) {
  return s == DescriptorSource::Synthetic ? "synthetic" : "polar_histogram";
}

DescriptorSource descriptor_source_from_string(const std::string& s) {
  if (s == "synthetic") return DescriptorSource::Synthetic;
  if (s == "polar_histogram") return DescriptorSource::PolarHistogram;
  throw Error(ErrorCode::InvalidArgument, "sim", "unknown descriptor source '" + s + "'");
}

}  // namespace automerge
