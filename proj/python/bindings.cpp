#include "automerge/cluster.hpp"
#include "automerge/descriptor.hpp"
#include "automerge/errors.hpp"
#include "automerge/geometry.hpp"
#include "automerge/server.hpp"
#include "automerge/sim.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace automerge;

namespace {

Descriptor to_descriptor(const std::vector<double>& v) { return Descriptor(v); }

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["top_n"] = m.top_n;
  d["queries"] = m.queries;
  d["recall_at"] = m.recall_at;
  d["precision"] = m.precision;
  d["closures"] = m.closures;
  d["true_closures"] = m.true_closures;
  d["merging_accuracy"] = m.merging_accuracy;
  d["overlaps_found"] = m.overlaps_found;
  d["overlaps_total"] = m.overlaps_total;
  d["false_merges"] = m.false_merges;
  d["max_ate"] = m.max_ate;
  d["partition_exact"] = m.partition_exact;
  d["rand_index"] = m.rand_index;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Map merging core: poses, descriptors, spectral clustering and the synthetic pipeline.";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + " (" + e.module() + "): " + e.what()).c_str());
    }
  });

  py::class_<Pose2>(m, "Pose2")
      .def(py::init<double, double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("yaw") = 0.0)
      .def_readwrite("x", &Pose2::x)
      .def_readwrite("y", &Pose2::y)
      .def_readwrite("yaw", &Pose2::yaw)
      .def("inverse", &Pose2::inverse)
      .def("apply", [](const Pose2& p, double x, double y) {
        const Vec2 q = p.apply({x, y});
        return py::make_tuple(q.x(), q.y());
      })
      .def("__eq__", [](const Pose2& a, const Pose2& b) { return a == b; })
      .def("__repr__", [](const Pose2& p) {
        return "Pose2(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.yaw) + ")";
      });

  m.def("normalize_angle", &normalize_angle);
  m.def("compose", &compose);
  m.def("between", &between);
  m.def("estimate_rigid_transform", [](const std::vector<std::pair<double, double>>& src,
                                       const std::vector<std::pair<double, double>>& dst) {
    Points2 s, d;
    for (const auto& [x, y] : src) s.emplace_back(x, y);
    for (const auto& [x, y] : dst) d.emplace_back(x, y);
    return estimate_rigid_transform(s, d);
  });

  m.def("cosine_distance", [](const std::vector<double>& f, const std::vector<double>& g) {
    return cosine_distance(to_descriptor(f), to_descriptor(g));
  });
  m.def("self_attention", [](const std::vector<double>& v, double gamma) {
    return self_attention(to_descriptor(v), gamma).values;
  });
  m.def(
      "lazy_quadruplet_loss",
      [](const std::vector<double>& anchor, const std::vector<std::vector<double>>& positives,
         const std::vector<std::vector<double>>& negatives, const std::vector<double>& hard_negative,
         double margin1, double margin2) {
        QuadrupletTuple t;
        t.anchor = to_descriptor(anchor);
        for (const auto& p : positives) t.positives.push_back(to_descriptor(p));
        for (const auto& n : negatives) t.negatives.push_back(to_descriptor(n));
        t.hard_negative = to_descriptor(hard_negative);
        return lazy_quadruplet_loss(t, margin1, margin2);
      },
      py::arg("anchor"), py::arg("positives"), py::arg("negatives"), py::arg("hard_negative"),
      py::arg("margin1") = 0.5, py::arg("margin2") = 0.2);

  m.def("connection_weight", &connection_weight, py::arg("feature_gap"), py::arg("overlap_length"),
        py::arg("c_w") = 1.0);
  m.def(
      "spectral_cluster",
      [](const Eigen::MatrixXd& W, double theta, int k_max, std::uint64_t seed) {
        ConnectionGraph g;
        for (int i = 0; i < W.rows(); ++i) g.add_agent(i);
        for (int i = 0; i < W.rows(); ++i)
          for (int j = i + 1; j < W.cols(); ++j)
            if (W(i, j) != 0.0) g.set_weight(i, j, W(i, j));
        SpectralParams p;
        p.theta = theta;
        p.k_max = k_max;
        p.seed = seed;
        const Partition part = spectral_cluster(g, p);
        return py::make_tuple(part.clusters, part.eigenvalues);
      },
      py::arg("W"), py::arg("theta") = 0.1, py::arg("k_max") = 0, py::arg("seed") = 5,
      "Clusters agents 0..n-1 of a symmetric weight matrix; returns (clusters, eigenvalues).");

  py::class_<WorldSpec>(m, "WorldSpec")
      .def(py::init([](std::uint64_t seed) { return default_world_spec(seed); }), py::arg("seed") = 1,
           "The default 12-segment world.")
      .def_readwrite("seed", &WorldSpec::seed)
      .def_readwrite("n_segments", &WorldSpec::n_segments)
      .def_readwrite("segment_length", &WorldSpec::segment_length)
      .def_readwrite("keyframe_spacing", &WorldSpec::keyframe_spacing)
      .def_readwrite("sigma_trans", &WorldSpec::sigma_trans)
      .def_readwrite("sigma_rot", &WorldSpec::sigma_rot)
      .def_readwrite("descriptor_noise", &WorldSpec::descriptor_noise)
      .def_readwrite("scans", &WorldSpec::scans)
      .def_readwrite("scan_noise", &WorldSpec::scan_noise)
      .def("clear_overlaps", [](WorldSpec& s) { s.overlap_plan.clear(); })
      .def("clear_aliases", [](WorldSpec& s) { s.alias_groups.clear(); })
      .def(
          "add_overlap",
          [](WorldSpec& s, int a, int b, double length, bool reverse) {
            s.overlap_plan.push_back({a, b, length, reverse ? Direction::Reverse : Direction::Forward});
          },
          py::arg("a"), py::arg("b"), py::arg("length"), py::arg("reverse") = false);

  py::class_<World>(m, "World")
      .def_property_readonly("n_segments", [](const World& w) { return w.segments.size(); })
      .def_property_readonly("keyframes",
                             [](const World& w) {
                               std::size_t n = 0;
                               for (const auto& s : w.segments) n += static_cast<std::size_t>(s.size());
                               return n;
                             })
      .def_property_readonly("partition", [](const World& w) { return w.truth.partition; });

  m.def("generate_world", &generate_world);

  py::class_<MergeState>(m, "MergeState")
      .def_property_readonly("partition", [](const MergeState& s) { return s.partition().clusters; })
      .def_property_readonly("eigenvalues", [](const MergeState& s) { return s.partition().eigenvalues; })
      .def_property_readonly("n_closures", [](const MergeState& s) { return s.closures().size(); })
      .def_property_readonly("n_poses", [](const MergeState& s) { return s.global_poses.size(); });

  m.def(
      "run_offline",
      [](const World& w, int jobs) {
        ServerConfig cfg;
        cfg.jobs = jobs;
        py::gil_scoped_release release;
        return run_offline(w.segments, cfg);
      },
      py::arg("world"), py::arg("jobs") = 0);
  m.def(
      "run_incremental",
      [](const World& w, std::uint64_t order_seed, int batch, int jobs) {
        ServerConfig cfg;
        cfg.jobs = jobs;
        py::gil_scoped_release release;
        return run_incremental(stream(w.segments, order_seed, batch), cfg);
      },
      py::arg("world"), py::arg("order_seed") = 1, py::arg("batch") = 300, py::arg("jobs") = 0);
  m.def(
      "evaluate",
      [](const MergeState& s, const World& w, int top_n) { return metrics_dict(evaluate(s, w.truth, top_n)); },
      py::arg("state"), py::arg("world"), py::arg("top_n") = 5);
}
