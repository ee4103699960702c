#include "automerge/posegraph.hpp"

#include "automerge/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

namespace automerge {

namespace {

const Eigen::Matrix2d kJ = (Eigen::Matrix2d() << 0.0, -1.0, 1.0, 0.0).finished();

// alpha(theta) = (theta/2) cot(theta/2) and its derivative.
void alpha_terms(double theta, double& alpha, double& dalpha) {
  if (std::abs(theta) < 1e-4) {
    const double t2 = theta * theta;
    alpha = 1.0 - t2 / 12.0 - t2 * t2 / 720.0;
    dalpha = -theta / 6.0 - t2 * theta / 180.0;
    return;
  }
  const double h = 0.5 * theta;
  const double s = std::sin(h);
  const double cot = std::cos(h) / s;
  alpha = h * cot;
  dalpha = 0.5 * cot - 0.25 * theta / (s * s);
}

}  // namespace

Eigen::Vector3d se2_log(const Pose2& p) {
  double alpha = 0.0;
  double dalpha = 0.0;
  alpha_terms(p.yaw, alpha, dalpha);
  const Vec2 t = p.translation();
  const Vec2 rho = alpha * t - 0.5 * p.yaw * (kJ * t);
  return {rho.x(), rho.y(), p.yaw};
}

EdgeLinearization linearize_edge(const Pose2& from, const Pose2& to, const Pose2& measurement) {
  const Eigen::Matrix2d RaT = from.rotation().transpose();
  const Eigen::Matrix2d RzT = measurement.rotation().transpose();
  const Vec2 dt = to.translation() - from.translation();
  const Vec2 t_ab = RaT * dt;
  const Vec2 t = RzT * (t_ab - measurement.translation());
  const double theta = normalize_angle(to.yaw - from.yaw - measurement.yaw);

  double alpha = 0.0;
  double dalpha = 0.0;
  alpha_terms(theta, alpha, dalpha);

  EdgeLinearization out;
  const Vec2 rho = alpha * t - 0.5 * theta * (kJ * t);
  out.residual << rho.x(), rho.y(), theta;

  // d(rho, theta) / d(t, theta)
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  M.topLeftCorner<2, 2>() = alpha * Eigen::Matrix2d::Identity() - 0.5 * theta * kJ;
  M.topRightCorner<2, 1>() = dalpha * t - 0.5 * (kJ * t);
  M(2, 2) = 1.0;

  const Eigen::Matrix2d RzRa = RzT * RaT;
  Eigen::Matrix3d Ga = Eigen::Matrix3d::Zero();
  Ga.topLeftCorner<2, 2>() = -RzRa;
  Ga.topRightCorner<2, 1>() = -RzRa * (kJ * dt);
  Ga(2, 2) = -1.0;
  Eigen::Matrix3d Gb = Eigen::Matrix3d::Zero();
  Gb.topLeftCorner<2, 2>() = RzRa;
  Gb(2, 2) = 1.0;

  out.d_from = M * Ga;
  out.d_to = M * Gb;
  return out;
}

double edge_chi2(const PoseEdge& e, const PoseMap& poses) {
  const auto a = poses.find(e.from);
  const auto b = poses.find(e.to);
  if (a == poses.end() || b == poses.end()) {
    throw Error(ErrorCode::KeyMismatch, "posegraph", "edge references an unknown node");
  }
  const Eigen::Vector3d r = se2_log(compose(e.measurement.inverse(), between(a->second, b->second)));
  return r.dot(e.information * r);
}

double total_chi2(const std::vector<PoseEdge>& edges, const PoseMap& poses) {
  double sum = 0.0;
  for (const auto& e : edges) sum += edge_chi2(e, poses);
  return sum;
}

OptimizeResult optimize(const std::vector<PoseNode>& nodes, const std::vector<PoseEdge>& edges,
                        const OptimizerConfig& cfg) {
  if (nodes.empty()) throw Error(ErrorCode::InvalidArgument, "posegraph", "no nodes to optimize");
  if (cfg.max_iter < 0 || !(cfg.lambda_init > 0.0) || cfg.tol < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "posegraph", "invalid optimizer configuration");
  }

  OptimizeResult res;
  std::map<NodeKey, int> index;  // -1 for the fixed node
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!index.emplace(nodes[i].key, static_cast<int>(i) - 1).second) {
      throw Error(ErrorCode::InvalidArgument, "posegraph", "duplicate node key");
    }
    res.poses[nodes[i].key] = nodes[i].pose;
  }
  for (const auto& e : edges) {
    if (!index.contains(e.from) || !index.contains(e.to)) {
      throw Error(ErrorCode::KeyMismatch, "posegraph", "edge references an unknown node");
    }
    if (e.from == e.to) throw Error(ErrorCode::InvalidArgument, "posegraph", "self edge");
    Eigen::LLT<Eigen::Matrix3d> llt(e.information);
    if (llt.info() != Eigen::Success || !e.information.isApprox(e.information.transpose())) {
      throw Error(ErrorCode::InvalidArgument, "posegraph", "information matrix is not SPD");
    }
  }

  // Every node must be reachable from the fixed one.
  {
    std::map<NodeKey, std::vector<NodeKey>> adj;
    for (const auto& e : edges) {
      adj[e.from].push_back(e.to);
      adj[e.to].push_back(e.from);
    }
    std::set<NodeKey> seen{nodes.front().key};
    std::queue<NodeKey> q;
    q.push(nodes.front().key);
    while (!q.empty()) {
      const NodeKey k = q.front();
      q.pop();
      for (const auto& n : adj[k])
        if (seen.insert(n).second) q.push(n);
    }
    if (seen.size() != nodes.size()) {
      throw Error(ErrorCode::SingularSystem, "posegraph", "pose graph is not connected to the fixed node");
    }
  }

  double chi2 = total_chi2(edges, res.poses);
  res.initial_chi2 = chi2;
  res.chi2_history.push_back(chi2);
  const auto nvar = static_cast<Eigen::Index>(3 * (nodes.size() - 1));
  if (nvar == 0 || chi2 == 0.0) {
    res.final_chi2 = chi2;
    return res;
  }

  std::vector<int> slot_from(edges.size());
  std::vector<int> slot_to(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    slot_from[i] = index.at(edges[i].from);
    slot_to[i] = index.at(edges[i].to);
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;
  double lambda = cfg.lambda_init;
  constexpr double kLambdaMax = 1e12;

  Eigen::SparseMatrix<double> H(nvar, nvar);
  Eigen::VectorXd g(nvar);
  Eigen::VectorXd diag(nvar);
  bool relinearize = true;
  while (res.iterations < cfg.max_iter && lambda <= kLambdaMax) {
    ++res.iterations;
    if (relinearize) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(edges.size() * 36);
      g.setZero();
      auto add_block = [&](int r, int c, const Eigen::Matrix3d& m) {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) trip.emplace_back(3 * r + a, 3 * c + b, m(a, b));
      };
      for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& e = edges[i];
        const auto lin = linearize_edge(res.poses.at(e.from), res.poses.at(e.to), e.measurement);
        const int a = slot_from[i];
        const int b = slot_to[i];
        const Eigen::Vector3d wr = e.information * lin.residual;
        if (a >= 0) {
          add_block(a, a, lin.d_from.transpose() * e.information * lin.d_from);
          g.segment<3>(3 * a) += lin.d_from.transpose() * wr;
        }
        if (b >= 0) {
          add_block(b, b, lin.d_to.transpose() * e.information * lin.d_to);
          g.segment<3>(3 * b) += lin.d_to.transpose() * wr;
        }
        if (a >= 0 && b >= 0) {
          const Eigen::Matrix3d off = lin.d_from.transpose() * e.information * lin.d_to;
          add_block(a, b, off);
          add_block(b, a, off.transpose());
        }
      }
      for (Eigen::Index i = 0; i < nvar; ++i) trip.emplace_back(i, i, 0.0);
      H.setFromTriplets(trip.begin(), trip.end());
      diag = H.diagonal();
      relinearize = false;
    }

    Eigen::SparseMatrix<double> A = H;
    for (Eigen::Index i = 0; i < nvar; ++i) A.coeffRef(i, i) += lambda * std::max(diag(i), 1e-12);
    if (!analyzed) {
      solver.analyzePattern(A);
      analyzed = true;
    }
    solver.factorize(A);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularSystem, "posegraph", "normal equations are singular");
    }
    const Eigen::VectorXd delta = solver.solve(-g);
    if (solver.info() != Eigen::Success || !delta.allFinite()) {
      throw Error(ErrorCode::SingularSystem, "posegraph", "normal equations are singular");
    }
    PoseMap trial = res.poses;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      auto& p = trial[nodes[i].key];
      const auto o = static_cast<Eigen::Index>(3 * (i - 1));
      p = Pose2(p.x + delta(o), p.y + delta(o + 1), p.yaw + delta(o + 2));
    }
    const double next = total_chi2(edges, trial);
    if (next < chi2) {
      const double rel = (chi2 - next) / chi2;
      res.poses = std::move(trial);
      chi2 = next;
      res.chi2_history.push_back(chi2);
      lambda = std::max(lambda / 10.0, 1e-15);
      relinearize = true;
      if (rel < cfg.tol || chi2 == 0.0) break;
    } else {
      lambda *= 10.0;
    }
  }
  res.final_chi2 = chi2;
  return res;
}

namespace {

struct PairKey {
  SegmentId a;
  SegmentId b;
  auto operator<=>(const PairKey&) const = default;
};

const Segment& segment_at(const SegmentMap& segments, SegmentId id) {
  const auto it = segments.find(id);
  if (it == segments.end()) {
    throw Error(ErrorCode::KeyMismatch, "posegraph", "unknown segment " + std::to_string(id));
  }
  return it->second;
}

// Transform mapping the child segment's odometry frame into the parent's.
Pose2 pair_transform(SegmentId parent, SegmentId child, const SegmentMap& segments,
                     const std::vector<const LoopClosure*>& links) {
  const Segment& sp = segment_at(segments, parent);
  const Segment& sc = segment_at(segments, child);
  Points2 src;
  Points2 dst;
  for (const LoopClosure* c : links) {
    const bool parent_is_i = c->seg_i == parent;
    const int kp = parent_is_i ? c->candidate.k_i : c->candidate.k_j;
    const int kc = parent_is_i ? c->candidate.k_j : c->candidate.k_i;
    src.push_back(sc.position(kc));
    dst.push_back(sp.position(kp));
  }
  try {
    return estimate_rigid_transform(src, dst);
  } catch (const Error&) {
    // Single or coincident correspondences: fall back to the best closure's
    // relative pose.
    const LoopClosure* best = *std::max_element(
        links.begin(), links.end(),
        [](const LoopClosure* x, const LoopClosure* y) { return x->confidence < y->confidence; });
    const Segment& si = segment_at(segments, best->seg_i);
    const Segment& sj = segment_at(segments, best->seg_j);
    const Pose2& oi = si.odom[static_cast<std::size_t>(best->candidate.k_i)];
    const Pose2& oj = sj.odom[static_cast<std::size_t>(best->candidate.k_j)];
    const Pose2 t_ij = compose(oi, compose(best->relative_pose, oj.inverse()));  // j frame -> i frame
    return best->seg_i == parent ? t_ij : t_ij.inverse();
  }
}

}  // namespace

PoseMap rough_align(const std::vector<SegmentId>& cluster, const SegmentMap& segments,
                    const std::vector<LoopClosure>& closures) {
  if (cluster.empty()) throw Error(ErrorCode::InvalidArgument, "posegraph", "empty cluster");
  std::vector<SegmentId> members = cluster;
  std::sort(members.begin(), members.end());
  const std::set<SegmentId> in(members.begin(), members.end());

  std::map<PairKey, std::vector<const LoopClosure*>> links;
  std::map<PairKey, double> weight;
  for (const auto& c : closures) {
    if (!in.contains(c.seg_i) || !in.contains(c.seg_j) || c.seg_i == c.seg_j) continue;
    const PairKey key{std::min(c.seg_i, c.seg_j), std::max(c.seg_i, c.seg_j)};
    links[key].push_back(&c);
    weight[key] += c.confidence;
  }

  std::map<SegmentId, Pose2> frame{{members.front(), Pose2{}}};
  while (frame.size() < members.size()) {
    const PairKey* best = nullptr;
    double best_w = -1.0;
    SegmentId parent = 0;
    SegmentId child = 0;
    for (const auto& [key, w] : weight) {
      const bool ha = frame.contains(key.a);
      const bool hb = frame.contains(key.b);
      if (ha == hb) continue;
      if (w > best_w) {
        best_w = w;
        best = &key;
        parent = ha ? key.a : key.b;
        child = ha ? key.b : key.a;
      }
    }
    if (best == nullptr) {
      throw Error(ErrorCode::DisconnectedCluster, "posegraph",
                  "closures do not connect the cluster rooted at segment " + std::to_string(members.front()));
    }
    frame[child] = compose(frame.at(parent), pair_transform(parent, child, segments, links.at(*best)));
  }

  PoseMap out;
  for (SegmentId id : members) {
    const Segment& s = segment_at(segments, id);
    const Pose2& f = frame.at(id);
    for (int k = 0; k < s.size(); ++k) out[{id, k}] = compose(f, s.odom[static_cast<std::size_t>(k)]);
  }
  return out;
}

void build_pose_graph(const std::vector<SegmentId>& cluster, const SegmentMap& segments,
                      const std::vector<LoopClosure>& closures, const PoseMap& initial,
                      const OptimizerConfig& cfg, std::vector<PoseNode>& nodes,
                      std::vector<PoseEdge>& edges) {
  nodes.clear();
  edges.clear();
  std::vector<SegmentId> members = cluster;
  std::sort(members.begin(), members.end());
  const std::set<SegmentId> in(members.begin(), members.end());
  const Eigen::Matrix3d odom_info = cfg.odom_information.asDiagonal();
  const Eigen::Matrix3d loop_info = cfg.loop_information.asDiagonal();

  for (SegmentId id : members) {
    const Segment& s = segment_at(segments, id);
    for (int k = 0; k < s.size(); ++k) {
      const auto it = initial.find({id, k});
      if (it == initial.end()) throw Error(ErrorCode::KeyMismatch, "posegraph", "missing initial pose");
      nodes.push_back({{id, k}, it->second});
      if (k > 0) {
        edges.push_back({{id, k - 1},
                         {id, k},
                         between(s.odom[static_cast<std::size_t>(k - 1)], s.odom[static_cast<std::size_t>(k)]),
                         odom_info,
                         EdgeKind::Odometry});
      }
    }
  }
  for (const auto& c : closures) {
    if (!in.contains(c.seg_i) || !in.contains(c.seg_j)) continue;
    edges.push_back({{c.seg_i, c.candidate.k_i},
                     {c.seg_j, c.candidate.k_j},
                     c.relative_pose,
                     c.confidence * loop_info,
                     EdgeKind::Loop});
  }
}

OptimizeResult align_and_optimize(const std::vector<SegmentId>& cluster, const SegmentMap& segments,
                                  const std::vector<LoopClosure>& closures, const OptimizerConfig& cfg) {
  const PoseMap initial = rough_align(cluster, segments, closures);
  std::vector<PoseNode> nodes;
  std::vector<PoseEdge> edges;
  build_pose_graph(cluster, segments, closures, initial, cfg, nodes, edges);
  return optimize(nodes, edges, cfg);
}

double ate(const PoseMap& estimated, const PoseMap& ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw Error(ErrorCode::KeyMismatch, "posegraph", "trajectories have different node sets");
  }
  if (estimated.size() < 2) throw Error(ErrorCode::InvalidArgument, "posegraph", "ATE needs two nodes");
  Points2 src;
  Points2 dst;
  for (auto a = estimated.begin(), b = ground_truth.begin(); a != estimated.end(); ++a, ++b) {
    if (a->first != b->first) {
      throw Error(ErrorCode::KeyMismatch, "posegraph", "trajectories have different node sets");
    }
    src.push_back(a->second.translation());
    dst.push_back(b->second.translation());
  }
  Pose2 t;
  try {
    t = estimate_rigid_transform(src, dst);
  } catch (const Error&) {
    // All estimated positions coincide; only the translation is observable.
    Vec2 mean = Vec2::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) mean += dst[i] - src[i];
    mean /= static_cast<double>(src.size());
    t = Pose2(mean.x(), mean.y(), 0.0);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (t.apply(src[i]) - dst[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(src.size()));
}

}  // namespace automerge
