#include "automerge/server.hpp"

#include "automerge/errors.hpp"
#include "automerge/random.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <exception>
#include <thread>

namespace automerge {

namespace {

std::uint64_t hash_double(std::uint64_t h, double v) { return mix64(h ^ std::bit_cast<std::uint64_t>(v)); }

std::uint64_t fingerprint(const MergeState& s, const std::vector<SegmentId>& cluster) {
  std::uint64_t h = mix64(cluster.size());
  for (SegmentId id : cluster) {
    h = mix64(h ^ static_cast<std::uint64_t>(id));
    h = mix64(h ^ static_cast<std::uint64_t>(s.segments.at(id).size()));
  }
  for (const auto& [pair, cl] : s.pair_closures) {
    if (!std::binary_search(cluster.begin(), cluster.end(), pair.first) ||
        !std::binary_search(cluster.begin(), cluster.end(), pair.second))
      continue;
    for (const auto& c : cl) {
      h = mix64(h ^ static_cast<std::uint64_t>(c.seg_i));
      h = mix64(h ^ static_cast<std::uint64_t>(c.seg_j));
      h = mix64(h ^ static_cast<std::uint64_t>(c.candidate.k_i));
      h = mix64(h ^ static_cast<std::uint64_t>(c.candidate.k_j));
      h = hash_double(h, c.confidence);
      h = hash_double(h, c.relative_pose.x);
      h = hash_double(h, c.relative_pose.y);
      h = hash_double(h, c.relative_pose.yaw);
    }
  }
  return h;
}

bool prefilter_pass(const DifferenceMatrix& D, int stride, double threshold) {
  for (int r = 0; r < D.rows(); r += stride)
    if (D.d.row(r).minCoeff() <= threshold) return true;
  return false;
}

}  // namespace

std::vector<LoopClosure> MergeState::closures() const {
  std::vector<LoopClosure> out;
  for (const auto& [pair, cl] : pair_closures) out.insert(out.end(), cl.begin(), cl.end());
  return out;
}

std::size_t MergeState::keyframe_count() const {
  std::size_t n = 0;
  for (const auto& [id, seg] : segments) n += static_cast<std::size_t>(seg.size());
  return n;
}

bool MergeState::quiescent() const { return queue.empty() && touched.empty(); }

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

OverlapMeta overlap_meta(const Segment& seg_i, const std::vector<LoopClosure>& closures) {
  OverlapMeta meta;
  if (closures.empty()) return meta;
  std::map<int, std::pair<int, int>> zones;
  double gap = 0.0;
  for (const auto& c : closures) {
    auto [it, fresh] = zones.try_emplace(c.candidate.zone, c.candidate.k_i, c.candidate.k_i);
    if (!fresh) {
      it->second.first = std::min(it->second.first, c.candidate.k_i);
      it->second.second = std::max(it->second.second, c.candidate.k_i);
    }
    gap += c.descriptor_distance;
  }
  for (const auto& [z, range] : zones)
    for (int k = range.first; k < range.second; ++k) meta.length += (seg_i.position(k + 1) - seg_i.position(k)).norm();
  meta.feature_gap = gap / static_cast<double>(closures.size());
  return meta;
}

void ingest(MergeState& state, const std::vector<Keyframe>& batch) {
  std::map<SegmentId, int> next;
  for (const auto& kf : batch) {
    auto it = next.find(kf.segment);
    if (it == next.end()) {
      const auto seg = state.segments.find(kf.segment);
      it = next.emplace(kf.segment, seg == state.segments.end() ? 0 : seg->second.size()).first;
    }
    if (kf.index != it->second) {
      throw Error(ErrorCode::OutOfOrderKeyframe, "server",
                  "segment " + std::to_string(kf.segment) + " expected keyframe " + std::to_string(it->second) +
                      " but got " + std::to_string(kf.index));
    }
    ++it->second;
  }
  if (batch.empty()) return;
  ++state.batches;
  for (const auto& kf : batch) {
    auto [it, fresh] = state.segments.try_emplace(kf.segment);
    if (fresh) {
      it->second.id = kf.segment;
      state.clusters.graph.add_agent(kf.segment);
    }
    it->second.append(kf);
    state.touched.insert(kf.segment);
  }
  for (SegmentId s : state.touched) {
    for (const auto& [other, seg] : state.segments) {
      if (other == s) continue;
      state.queue.insert(std::minmax(s, other));
    }
  }
}

void step(MergeState& state, const ServerConfig& cfg) {
  if (state.quiescent()) return;
  const std::vector<SegmentPair> pairs(state.queue.begin(), state.queue.end());

  // Pairwise detection; each job owns its pair's cached matrix.
  std::vector<DifferenceMatrix*> mats;
  for (const auto& p : pairs) {
    auto [it, fresh] = state.pair_matrix.try_emplace(p);
    if (fresh) {
      it->second.seg_i = p.first;
      it->second.seg_j = p.second;
    }
    mats.push_back(&it->second);
  }
  std::vector<std::vector<LoopClosure>> found(pairs.size());
  parallel_for(pairs.size(), cfg.jobs, [&](std::size_t i) {
    const Segment& si = state.segments.at(pairs[i].first);
    const Segment& sj = state.segments.at(pairs[i].second);
    DifferenceMatrix& D = *mats[i];
    extend_difference_matrix(D, si.descriptors, sj.descriptors, cfg.lcd.rotation_bins);
    if (std::min(si.size(), sj.size()) < cfg.lcd.seq.win) return;
    if (!prefilter_pass(D, std::max(1, cfg.prefilter_stride), cfg.prefilter_distance)) return;
    found[i] = detect_loops(si, sj, D, cfg.lcd);
  });

  std::vector<WeightUpdate> updates;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    state.pair_cursor[p] = {mats[i]->rows(), mats[i]->cols()};
    if (found[i].empty()) {
      if (state.pair_closures.erase(p) > 0) updates.push_back({p.first, p.second, 0.0, {}, true});
      continue;
    }
    const OverlapMeta meta = overlap_meta(state.segments.at(p.first), found[i]);
    updates.push_back(
        {p.first, p.second, connection_weight(meta.feature_gap, meta.length, cfg.cluster.c_w), meta, true});
    state.pair_closures[p] = std::move(found[i]);
  }
  state.queue.clear();
  state.touched.clear();

  SpectralParams sp;
  sp.theta = cfg.cluster.theta;
  sp.k_max = cfg.cluster.k_max > 0 ? std::min(cfg.cluster.k_max, state.clusters.graph.size()) : 0;
  sp.seed = cfg.cluster.seed;
  sp.restarts = cfg.cluster.restarts;
  state.clusters = incremental_update(std::move(state.clusters), updates, sp);

  // Re-optimize every cluster whose inputs changed since its last run.
  const auto& clusters = state.clusters.partition.clusters;
  std::vector<std::size_t> todo;
  std::vector<std::uint64_t> prints(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    prints[c] = fingerprint(state, clusters[c]);
    const auto it = state.optimized.find(clusters[c]);
    if (it == state.optimized.end() || it->second != prints[c]) todo.push_back(c);
  }
  std::vector<PoseMap> poses(todo.size());
  std::vector<std::string> errors(todo.size());
  const std::vector<LoopClosure> all = state.closures();
  parallel_for(todo.size(), cfg.jobs, [&](std::size_t i) {
    const auto& cluster = clusters[todo[i]];
    try {
      if (cluster.size() == 1) {
        const Segment& s = state.segments.at(cluster.front());
        for (int k = 0; k < s.size(); ++k) poses[i][{s.id, k}] = s.odom[static_cast<std::size_t>(k)];
      } else {
        poses[i] = align_and_optimize(cluster, state.segments, all, cfg.opt).poses;
      }
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::map<std::vector<SegmentId>, std::uint64_t> optimized;
  std::map<std::vector<SegmentId>, std::string> failed;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    optimized[clusters[c]] = prints[c];
    const auto f = state.failed.find(clusters[c]);
    if (f != state.failed.end()) failed.insert(*f);
  }
  for (std::size_t i = 0; i < todo.size(); ++i) {
    const auto& cluster = clusters[todo[i]];
    for (SegmentId s : cluster) {
      auto lo = state.global_poses.lower_bound({s, 0});
      auto hi = state.global_poses.lower_bound({s + 1, 0});
      state.global_poses.erase(lo, hi);
    }
    if (errors[i].empty()) {
      state.global_poses.insert(poses[i].begin(), poses[i].end());
      failed.erase(cluster);
    } else {
      failed[cluster] = errors[i];
    }
  }
  state.optimized = std::move(optimized);
  state.failed = std::move(failed);
}

MergeState run_offline(const std::vector<Segment>& segments, const ServerConfig& cfg) {
  MergeState state;
  std::vector<Keyframe> all;
  for (const auto& seg : segments) {
    for (int k = 0; k < seg.size(); ++k) {
      Keyframe kf;
      kf.segment = seg.id;
      kf.index = k;
      kf.odom = seg.odom[static_cast<std::size_t>(k)];
      kf.descriptor = seg.descriptors[static_cast<std::size_t>(k)];
      if (seg.has_clouds()) kf.cloud = seg.clouds[static_cast<std::size_t>(k)];
      all.push_back(std::move(kf));
    }
  }
  ingest(state, all);
  while (!state.quiescent()) step(state, cfg);
  return state;
}

MergeState run_incremental(const std::vector<std::vector<Keyframe>>& batches, const ServerConfig& cfg,
                           std::vector<TimelineEntry>* timeline) {
  MergeState state;
  int b = 0;
  for (const auto& batch : batches) {
    ingest(state, batch);
    while (!state.quiescent()) step(state, cfg);
    if (timeline != nullptr) {
      timeline->push_back({b, state.keyframe_count(), state.partition().k(), state.closures().size()});
    }
    ++b;
  }
  return state;
}

}  // namespace automerge
