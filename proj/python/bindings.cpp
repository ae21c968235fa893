#include "desknav/clustering.hpp"
#include "desknav/config.hpp"
#include "desknav/dynamics.hpp"
#include "desknav/errors.hpp"
#include "desknav/geometry.hpp"
#include "desknav/io.hpp"
#include "desknav/nmpc.hpp"
#include "desknav/sim.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <chrono>
#include <sstream>

namespace py = pybind11;
using namespace desknav;
using nlohmann::json;

namespace {

PointCloud to_cloud(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>& xyz) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(xyz.rows()));
    for (Eigen::Index i = 0; i < xyz.rows(); ++i) cloud.points.emplace_back(xyz.row(i).transpose());
    return cloud;
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("/", e.what());
    }
}

}  // namespace

PYBIND11_MODULE(_desknav, m) {
    m.doc() = "Plane segmentation and adaptive NMPC for a micro aerial vehicle";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<InsufficientPointsError>(m, "InsufficientPointsError", base.ptr());
    py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());
    py::register_exception<DegenerateGeometryError>(m, "DegenerateGeometryError", base.ptr());
    py::register_exception<InvalidPlaneError>(m, "InvalidPlaneError", base.ptr());
    py::register_exception<InvalidArgumentError>(m, "InvalidArgumentError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());

    py::class_<Plane>(m, "Plane")
        .def(py::init([](double a, double b, double g, double z) { return Plane{a, b, g, z}; }),
             py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("zeta"))
        .def_readwrite("alpha", &Plane::alpha)
        .def_readwrite("beta", &Plane::beta)
        .def_readwrite("gamma", &Plane::gamma)
        .def_readwrite("zeta", &Plane::zeta)
        .def("normal", &Plane::normal)
        .def("evaluate", &Plane::evaluate, py::arg("point"))
        .def("normalized", &Plane::normalized)
        .def("__repr__", [](const Plane& p) {
            std::ostringstream s;
            s << "Plane(" << p.alpha << ", " << p.beta << ", " << p.gamma << ", " << p.zeta << ")";
            return s.str();
        });

    m.def("point_plane_distance", &point_plane_distance, py::arg("plane"), py::arg("point"));
    m.def("fit_plane_three_points", &fit_plane_three_points, py::arg("p1"), py::arg("p2"), py::arg("p3"));
    m.def(
        "fit_plane_tls",
        [](const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>& xyz) {
            const PlaneFit fit = fit_plane_tls(to_cloud(xyz));
            return py::make_tuple(fit.plane, fit.rms_residual);
        },
        py::arg("points"));
    m.def("normal_angle", &normal_angle, py::arg("a"), py::arg("b"));

    m.def(
        "_segment",
        [](const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>& xyz,
           const std::string& config) {
            const ClusteringConfig cfg = config.empty() ? ClusteringConfig{} : clustering_from_json(parse(config));
            const PointCloud cloud = to_cloud(xyz);
            const auto start = std::chrono::steady_clock::now();
            const SegmentationResult result = segment_planes(cloud, cfg);
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return segmentation_to_json(result, {seconds, cloud.points.size()}).dump();
        },
        py::arg("points"), py::arg("config"));

    m.def("shannon_entropy", [](const Eigen::VectorXd& v) { return shannon_entropy(v); }, py::arg("variances"));

    m.def(
        "step_euler",
        [](const StateVector& x, const InputVector& u, double ts) {
            ModelParams params;
            params.ts = ts;
            params.validate();
            return euler_step(x, u, params);
        },
        py::arg("state"), py::arg("input"), py::arg("ts") = 0.05);

    m.def("_default_scenario", [](const std::string& preset) {
        ScenarioConfig c;
        if (preset == "corridor") c.environment = corridor_environment();
        else if (preset == "confined_room") c.environment = confined_room_environment();
        else if (preset != "empty") throw InvalidArgumentError("unknown preset '" + preset + "'");
        return scenario_to_json(c).dump();
    });

    m.def(
        "_run",
        [](const std::string& scenario) {
            const ScenarioConfig cfg = scenario_from_json(parse(scenario));
            RunTrace trace;
            {
                py::gil_scoped_release release;
                trace = run_scenario(cfg);
            }
            json metrics = metrics_to_json(compute_metrics(trace, cfg.environment, cfg.sim.collision_distance));
            metrics["scenario"] = cfg.environment.name;
            metrics["seed"] = cfg.seed;
            metrics["mode"] = to_string(cfg.mode);
            std::ostringstream csv;
            write_trace_csv(trace, csv);
            return py::make_tuple(metrics.dump(), csv.str(), snapshots_to_json(trace).dump());
        },
        py::arg("scenario"));
}
