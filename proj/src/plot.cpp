#include "automerge/plot.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <map>

namespace automerge {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 600.0;
constexpr double kMargin = 50.0;

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(kWidth) + "\" height=\"" + f2(kHeight) +
         "\" viewBox=\"0 0 " + f2(kWidth) + " " + f2(kHeight) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         "<text x=\"" + f2(kWidth / 2) + "\" y=\"25.00\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         escape(title) + "</text>\n";
}

/// Maps a data box onto the plot area; y grows upwards.
struct Frame {
  double x0, x1, y0, y1;
  bool keep_aspect = false;

  double sx() const { return (kWidth - 2 * kMargin) / std::max(x1 - x0, 1e-12); }
  double sy() const { return (kHeight - 2 * kMargin) / std::max(y1 - y0, 1e-12); }
  double scale_x() const { return keep_aspect ? std::min(sx(), sy()) : sx(); }
  double scale_y() const { return keep_aspect ? std::min(sx(), sy()) : sy(); }
  double px(double x) const { return kMargin + (x - x0) * scale_x(); }
  double py(double y) const { return kHeight - kMargin - (y - y0) * scale_y(); }
};

/// Axis box with tick labels at both ends of each range.
std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double l = kMargin, r = kWidth - kMargin, t = kMargin, b = kHeight - kMargin;
  std::string s = "<path d=\"M" + f2(l) + " " + f2(t) + " L" + f2(l) + " " + f2(b) + " L" + f2(r) + " " + f2(b) +
                  "\" fill=\"none\" stroke=\"black\"/>\n";
  const auto text = [](double x, double y, const std::string& anchor, const std::string& v) {
    return "<text x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" text-anchor=\"" + anchor +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(v) + "</text>\n";
  };
  s += text(l, b + 16, "middle", f2(f.x0));
  s += text(r, b + 16, "middle", f2(f.x1));
  s += text(l - 6, b, "end", f2(f.y0));
  s += text(l - 6, t + 4, "end", f2(f.y1));
  s += text((l + r) / 2, b + 36, "middle", xlabel);
  s += "<text x=\"15.00\" y=\"" + f2((t + b) / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15.00 " +
       f2((t + b) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                     const std::string& cls) {
  std::string s = "<polyline class=\"" + cls + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) s += ' ';
    s += f2(pts[i].first) + "," + f2(pts[i].second);
  }
  return s + "\"/>\n";
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kMargin + 15.0 * static_cast<double>(i);
    s += "<text x=\"" + f2(kWidth - kMargin) + "\" y=\"" + f2(y) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" +
         kPalette[i % kPalette.size()] + "\">" + escape(names[i]) + "</text>\n";
  }
  return s;
}

}  // namespace

std::string map_svg(const PoseMap& poses, const std::vector<LoopClosure>& closures, const Partition* partition) {
  Frame f{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(), true};
  for (const auto& [k, p] : poses) {
    f.x0 = std::min(f.x0, p.x);
    f.x1 = std::max(f.x1, p.x);
    f.y0 = std::min(f.y0, p.y);
    f.y1 = std::max(f.y1, p.y);
  }
  if (poses.empty()) f = {0.0, 1.0, 0.0, 1.0, true};
  std::string s = header("Merged trajectories");
  std::map<SegmentId, std::vector<std::pair<double, double>>> tracks;
  for (const auto& [k, p] : poses) tracks[k.segment].emplace_back(f.px(p.x), f.py(p.y));
  for (const auto& [id, pts] : tracks) {
    const int c = partition != nullptr ? std::max(0, partition->cluster_of(id)) : id;
    s += polyline(pts, kPalette[static_cast<std::size_t>(c) % kPalette.size()], "segment");
  }
  for (const auto& c : closures) {
    const auto a = poses.find({c.seg_i, c.candidate.k_i});
    const auto b = poses.find({c.seg_j, c.candidate.k_j});
    if (a == poses.end() || b == poses.end()) continue;
    if (partition != nullptr && partition->cluster_of(c.seg_i) != partition->cluster_of(c.seg_j)) continue;
    s += "<line class=\"closure\" x1=\"" + f2(f.px(a->second.x)) + "\" y1=\"" + f2(f.py(a->second.y)) + "\" x2=\"" +
         f2(f.px(b->second.x)) + "\" y2=\"" + f2(f.py(b->second.y)) + "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
  }
  return s + "</svg>\n";
}

std::string pr_svg(const Series<std::vector<PrPoint>>& series) {
  const Frame f{0.0, 1.0, 0.0, 1.0};
  std::string s = header("Precision-recall");
  s += axes(f, "recall", "precision");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : series[i].second) pts.emplace_back(f.px(p.recall), f.py(p.precision));
    s += polyline(pts, kPalette[i % kPalette.size()], "pr");
    names.push_back(series[i].first);
  }
  return s + legend(names) + "</svg>\n";
}

std::string recall_svg(const Series<std::vector<double>>& series) {
  std::size_t groups = 0;
  for (const auto& [name, r] : series) groups = std::max(groups, r.size());
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(groups, 1)), 0.0, 1.0};
  std::string s = header("Recall@N");
  s += axes(f, "N", "recall");
  const double group_w = f.px(1.0) - f.px(0.0);
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& r = series[i].second;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double x = f.px(static_cast<double>(k)) + 0.1 * group_w + bar_w * static_cast<double>(i);
      const double top = f.py(r[k]);
      s += "<rect class=\"bar\" x=\"" + f2(x) + "\" y=\"" + f2(top) + "\" width=\"" + f2(bar_w) + "\" height=\"" +
           f2(f.py(0.0) - top) + "\" fill=\"" + kPalette[i % kPalette.size()] + "\"/>\n";
    }
    names.push_back(series[i].first);
  }
  for (std::size_t k = 0; k < groups; ++k) {
    s += "<text x=\"" + f2(f.px(static_cast<double>(k) + 0.5)) + "\" y=\"" + f2(kHeight - kMargin + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">@" + std::to_string(k + 1) + "</text>\n";
  }
  return s + legend(names) + "</svg>\n";
}

std::string timeline_svg(const std::vector<TimelineEntry>& timeline) {
  double max_k = 1.0;
  double lo = 0.0;
  double hi = 1.0;
  if (!timeline.empty()) {
    lo = hi = timeline.front().batch;
    for (const auto& t : timeline) {
      lo = std::min(lo, static_cast<double>(t.batch));
      hi = std::max(hi, static_cast<double>(t.batch));
    }
    if (hi == lo) hi = lo + 1.0;
  }
  for (const auto& t : timeline) max_k = std::max(max_k, static_cast<double>(t.clusters));
  const Frame f{lo, hi, 0.0, max_k};
  std::string s = header("Clusters over time");
  s += axes(f, "batch", "clusters");
  std::vector<std::pair<double, double>> pts;
  for (const auto& t : timeline) pts.emplace_back(f.px(t.batch), f.py(t.clusters));
  s += polyline(pts, kPalette[0], "timeline");
  return s + "</svg>\n";
}

}  // namespace automerge
