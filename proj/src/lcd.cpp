#include "automerge/lcd.hpp"

#include "automerge/errors.hpp"
#include "automerge/kmeans.hpp"
#include "automerge/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace automerge {

double descriptor_distance(const Descriptor& a, const Descriptor& b, int rotation_bins) {
  if (rotation_bins > 0) return rotation_search_distance(a, b, rotation_bins).distance;
  return cosine_distance(a, b);
}

DifferenceMatrix difference_matrix(std::span<const Descriptor> f_i, std::span<const Descriptor> f_j,
                                   SegmentId seg_i, SegmentId seg_j, int rotation_bins) {
  if (f_i.empty() || f_j.empty()) {
    throw Error(ErrorCode::EmptySequence, "lcd", "difference matrix needs two non-empty sequences");
  }
  DifferenceMatrix D{seg_i, seg_j, Eigen::MatrixXd(0, 0)};
  extend_difference_matrix(D, f_i, f_j, rotation_bins);
  return D;
}

void extend_difference_matrix(DifferenceMatrix& D, std::span<const Descriptor> f_i,
                              std::span<const Descriptor> f_j, int rotation_bins) {
  const auto ni = static_cast<Eigen::Index>(f_i.size());
  const auto nj = static_cast<Eigen::Index>(f_j.size());
  const Eigen::Index old_i = D.d.rows();
  const Eigen::Index old_j = D.d.cols();
  if (ni < old_i || nj < old_j) {
    throw Error(ErrorCode::InvalidArgument, "lcd", "sequences shrank since the matrix was built");
  }
  if (ni == old_i && nj == old_j) return;
  D.d.conservativeResize(ni, nj);
  for (Eigen::Index b = 0; b < nj; ++b) {
    const Eigen::Index a0 = b < old_j ? old_i : 0;
    for (Eigen::Index a = a0; a < ni; ++a) {
      D.d(a, b) = descriptor_distance(f_i[static_cast<std::size_t>(a)], f_j[static_cast<std::size_t>(b)],
                                      rotation_bins);
    }
  }
}

DifferenceMatrix local_contrast_normalize(const DifferenceMatrix& D, int window, double eps) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "lcd", "normalization window must be >= 1");
  DifferenceMatrix out{D.seg_i, D.seg_j, Eigen::MatrixXd(D.d.rows(), D.d.cols())};
  const Eigen::Index n = D.d.rows();
  for (Eigen::Index b = 0; b < D.d.cols(); ++b) {
    const double* col = D.d.col(b).data();
    for (Eigen::Index a = 0; a < n; ++a) {
      const Eigen::Index span = std::min<Eigen::Index>(n, 2 * window + 1);
      const Eigen::Index lo = std::clamp<Eigen::Index>(a - window, 0, n - span);
      const Eigen::Index hi = lo + span - 1;
      const double count = static_cast<double>(hi - lo + 1);
      double mean = 0.0;
      for (Eigen::Index r = lo; r <= hi; ++r) mean += col[r];
      mean /= count;
      double var = 0.0;
      for (Eigen::Index r = lo; r <= hi; ++r) var += (col[r] - mean) * (col[r] - mean);
      const double sd = std::sqrt(var / count);
      out.d(a, b) = sd > eps ? (col[a] - mean) / sd : 0.0;
    }
  }
  return out;
}

std::vector<double> slope_grid(const SequenceMatchParams& p) {
  std::vector<double> v;
  if (p.v_steps <= 1) {
    v.push_back(p.v_min);
  } else {
    for (int s = 0; s < p.v_steps; ++s)
      v.push_back(p.v_min + (p.v_max - p.v_min) * static_cast<double>(s) / static_cast<double>(p.v_steps - 1));
  }
  if (p.allow_reverse) {
    const std::size_t n = v.size();
    for (std::size_t s = 0; s < n; ++s) v.push_back(-v[s]);
  }
  return v;
}

namespace {

void validate(const SequenceMatchParams& p) {
  if (p.win < 3 || p.win % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "lcd", "sequence window must be odd and >= 3");
  }
  if (!(p.v_min > 0.0) || p.v_min > p.v_max) {
    throw Error(ErrorCode::InvalidArgument, "lcd", "slope range must satisfy 0 < v_min <= v_max");
  }
}

}  // namespace

std::vector<LoopCandidate> line_search(const Eigen::MatrixXd& dn, const SequenceMatchParams& p) {
  validate(p);
  const int ni = static_cast<int>(dn.rows());
  const int nj = static_cast<int>(dn.cols());
  if (p.win > std::min(ni, nj)) {
    throw Error(ErrorCode::WindowTooLarge, "lcd", "sequence window exceeds the matrix size");
  }
  const int h = p.win / 2;
  const std::vector<double> slopes = slope_grid(p);

  struct Line {
    std::vector<int> offset;
    int lo;
    int hi;
  };
  std::vector<Line> lines;
  for (double v : slopes) {
    Line l;
    for (int t = -h; t <= h; ++t) l.offset.push_back(static_cast<int>(std::lround(v * t)));
    l.lo = *std::min_element(l.offset.begin(), l.offset.end());
    l.hi = *std::max_element(l.offset.begin(), l.offset.end());
    lines.push_back(std::move(l));
  }

  std::vector<double> best(static_cast<std::size_t>(ni), std::numeric_limits<double>::infinity());
  std::vector<int> best_b(static_cast<std::size_t>(ni), -1);
  const double inv_win = 1.0 / static_cast<double>(p.win);
  for (int a = h; a < ni - h; ++a) {
    for (int b = 0; b < nj; ++b) {
      for (const Line& l : lines) {
        if (b + l.lo < 0 || b + l.hi >= nj) continue;
        double sum = 0.0;
        for (int t = 0; t < p.win; ++t) sum += dn(a - h + t, b + l.offset[static_cast<std::size_t>(t)]);
        const double score = sum * inv_win;
        if (!(score < p.score_thresh)) continue;
        for (int t = 0; t < p.win; ++t) {
          const auto r = static_cast<std::size_t>(a - h + t);
          const int c = b + l.offset[static_cast<std::size_t>(t)];
          if (t != h && !(dn(a - h + t, c) < 0.0)) continue;
          if (score < best[r] || (score == best[r] && c < best_b[r])) {
            best[r] = score;
            best_b[r] = c;
          }
        }
      }
    }
  }
  std::vector<LoopCandidate> out;
  for (int a = 0; a < ni; ++a) {
    const auto r = static_cast<std::size_t>(a);
    if (best_b[r] >= 0) out.push_back({a, best_b[r], best[r], -1});
  }
  return out;
}

std::vector<LoopCandidate> sequence_match(const DifferenceMatrix& D, const SequenceMatchParams& p,
                                          int norm_window, double norm_eps) {
  validate(p);
  if (p.win > std::min(D.rows(), D.cols())) {
    throw Error(ErrorCode::WindowTooLarge, "lcd", "sequence window exceeds the matrix size");
  }
  return line_search(local_contrast_normalize(D, norm_window, norm_eps).d, p);
}

std::vector<LoopCandidate> cluster_zones(std::vector<LoopCandidate> cands, int max_k,
                                         std::uint64_t seed, int rows, int cols, double elbow_ratio) {
  if (cands.empty()) return cands;
  if (max_k < 1) throw Error(ErrorCode::InvalidArgument, "lcd", "max_k must be >= 1");
  const auto n = static_cast<Eigen::Index>(cands.size());
  Eigen::MatrixXd x(n, 2);
  const double si = 1.0 / std::max(1, rows - 1);
  const double sj = 1.0 / std::max(1, cols - 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    x(r, 0) = cands[static_cast<std::size_t>(r)].k_i * si;
    x(r, 1) = cands[static_cast<std::size_t>(r)].k_j * sj;
  }
  KMeansResult chosen = kmeans(x, 1, derive_seed(seed, 1));
  const int k_cap = std::min<int>(max_k, static_cast<int>(n));
  for (int k = 2; k <= k_cap; ++k) {
    KMeansResult next = kmeans(x, k, derive_seed(seed, static_cast<std::uint64_t>(k)));
    if (!(next.inertia < elbow_ratio * chosen.inertia)) break;
    chosen = std::move(next);
  }
  for (std::size_t i = 0; i < cands.size(); ++i) cands[i].zone = chosen.labels[i];
  return cands;
}

bool edge_consistent(const LoopCandidate& a, const LoopCandidate& b, std::span<const Pose2> poses_i,
                     std::span<const Pose2> poses_j, double beta) {
  const auto& pa_i = poses_i[static_cast<std::size_t>(a.k_i)];
  const auto& pb_i = poses_i[static_cast<std::size_t>(b.k_i)];
  const auto& pa_j = poses_j[static_cast<std::size_t>(a.k_j)];
  const auto& pb_j = poses_j[static_cast<std::size_t>(b.k_j)];
  const double ei = std::hypot(pa_i.x - pb_i.x, pa_i.y - pb_i.y);
  const double ej = std::hypot(pa_j.x - pb_j.x, pa_j.y - pb_j.y);
  return ei >= beta * ej && ej >= beta * ei;
}

std::vector<LoopCandidate> ransac_edge_filter(const std::vector<LoopCandidate>& zone_cands,
                                              std::span<const Pose2> poses_i,
                                              std::span<const Pose2> poses_j, double beta,
                                              int iterations, int sample_n, int min_inliers,
                                              std::uint64_t seed) {
  if (beta < 0.0 || beta > 1.0 || sample_n < 2) {
    throw Error(ErrorCode::InvalidArgument, "lcd", "ransac needs beta in [0,1] and sample_n >= 2");
  }
  const std::size_t n = zone_cands.size();
  if (n == 0 || n < static_cast<std::size_t>(std::max(1, min_inliers))) return {};
  for (const auto& c : zone_cands) {
    if (c.k_i < 0 || c.k_j < 0 || static_cast<std::size_t>(c.k_i) >= poses_i.size() ||
        static_cast<std::size_t>(c.k_j) >= poses_j.size()) {
      throw Error(ErrorCode::InvalidArgument, "lcd", "candidate index outside pose list");
    }
  }

  std::vector<char> ok(n * n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    ok[a * n + a] = 1;
    for (std::size_t b = a + 1; b < n; ++b) {
      const char c = edge_consistent(zone_cands[a], zone_cands[b], poses_i, poses_j, beta) ? 1 : 0;
      ok[a * n + b] = c;
      ok[b * n + a] = c;
    }
  }

  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(sample_n), n);
  Rng rng(seed);
  std::vector<std::size_t> pool(n);
  std::vector<std::size_t> best;
  const int iters = n == m ? 1 : std::max(1, iterations);
  for (int it = 0; it < iters && best.size() < n; ++it) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t j = s + static_cast<std::size_t>(rng.below(n - s));
      std::swap(pool[s], pool[j]);
    }
    bool sample_ok = true;
    for (std::size_t s = 0; s < m && sample_ok; ++s)
      for (std::size_t t = s + 1; t < m && sample_ok; ++t) sample_ok = ok[pool[s] * n + pool[t]] != 0;
    if (!sample_ok) continue;

    std::vector<std::size_t> consensus;
    for (std::size_t c = 0; c < n; ++c) {
      bool agrees = true;
      for (std::size_t s = 0; s < m && agrees; ++s) agrees = ok[c * n + pool[s]] != 0;
      if (agrees) consensus.push_back(c);
    }
    if (consensus.size() > best.size()) best = std::move(consensus);
  }

  // Consensus members agree with the sample but not necessarily with each
  // other; drop the worst offender until the set is pairwise consistent.
  while (best.size() > 1) {
    std::size_t worst = 0;
    int worst_count = 0;
    for (std::size_t x = 0; x < best.size(); ++x) {
      int bad = 0;
      for (std::size_t y = 0; y < best.size(); ++y) bad += ok[best[x] * n + best[y]] ? 0 : 1;
      if (bad >= worst_count && bad > 0) {
        worst = x;
        worst_count = bad;
      }
    }
    if (worst_count == 0) break;
    best.erase(best.begin() + static_cast<std::ptrdiff_t>(worst));
  }

  if (best.size() < static_cast<std::size_t>(min_inliers)) return {};
  std::vector<LoopCandidate> out;
  out.reserve(best.size());
  for (std::size_t idx : best) out.push_back(zone_cands[idx]);
  return out;
}

std::vector<LoopClosure> detect_loops(const Segment& seg_i, const Segment& seg_j, const LcdConfig& cfg) {
  if (seg_i.size() == 0 || seg_j.size() == 0) {
    throw Error(ErrorCode::EmptySequence, "lcd", "segments must be non-empty");
  }
  const DifferenceMatrix raw =
      difference_matrix(seg_i.descriptors, seg_j.descriptors, seg_i.id, seg_j.id, cfg.rotation_bins);
  return detect_loops(seg_i, seg_j, raw, cfg);
}

std::vector<LoopClosure> detect_loops(const Segment& seg_i, const Segment& seg_j,
                                      const DifferenceMatrix& raw, const LcdConfig& cfg) {
  if (seg_i.id == seg_j.id) {
    throw Error(ErrorCode::InvalidArgument, "lcd", "loop detection needs two distinct segments");
  }
  if (raw.rows() != seg_i.size() || raw.cols() != seg_j.size()) {
    throw Error(ErrorCode::DimensionMismatch, "lcd", "difference matrix does not match segments");
  }
  std::vector<LoopCandidate> cands = sequence_match(raw, cfg.seq, cfg.norm_window, cfg.norm_eps);
  if (cands.empty()) return {};
  cands = cluster_zones(std::move(cands), cfg.max_zones, cfg.kmeans_seed, raw.rows(), raw.cols(),
                        cfg.elbow_ratio);

  int n_zones = 0;
  for (const auto& c : cands) n_zones = std::max(n_zones, c.zone + 1);

  const bool clouds = seg_i.has_clouds() && seg_j.has_clouds();
  std::vector<LoopClosure> out;
  for (int z = 0; z < n_zones; ++z) {
    std::vector<LoopCandidate> zone;
    for (const auto& c : cands)
      if (c.zone == z) zone.push_back(c);
    const auto seed = derive_seed(cfg.ransac_seed, static_cast<std::uint64_t>(seg_i.id),
                                  static_cast<std::uint64_t>(seg_j.id), static_cast<std::uint64_t>(z));
    const auto inliers = ransac_edge_filter(zone, seg_i.odom, seg_j.odom, cfg.beta,
                                            cfg.ransac_iterations, cfg.sample_n, cfg.min_inliers, seed);
    if (inliers.empty()) continue;

    Points2 src;
    Points2 dst;
    for (const auto& c : inliers) {
      src.push_back(seg_j.position(c.k_j));
      dst.push_back(seg_i.position(c.k_i));
    }
    Pose2 j_to_i;
    try {
      j_to_i = estimate_rigid_transform(src, dst);
    } catch (const Error&) {
      continue;
    }
    const double confidence = static_cast<double>(inliers.size()) / static_cast<double>(zone.size());
    for (const auto& c : inliers) {
      const auto& oi = seg_i.odom[static_cast<std::size_t>(c.k_i)];
      const auto& oj = seg_j.odom[static_cast<std::size_t>(c.k_j)];
      Pose2 rel = between(oi, compose(j_to_i, oj));
      if (clouds) {
        const auto& ci = seg_i.clouds[static_cast<std::size_t>(c.k_i)];
        const auto& cj = seg_j.clouds[static_cast<std::size_t>(c.k_j)];
        if (!ci.empty() && !cj.empty()) rel = icp_refine(cj, ci, rel, cfg.icp).pose;
      }
      out.push_back({seg_i.id, seg_j.id, c, rel, confidence, raw.d(c.k_i, c.k_j)});
    }
  }
  std::sort(out.begin(), out.end(), [](const LoopClosure& a, const LoopClosure& b) {
    return std::tie(a.candidate.k_i, a.candidate.k_j) < std::tie(b.candidate.k_i, b.candidate.k_j);
  });
  return out;
}

}  // namespace automerge
