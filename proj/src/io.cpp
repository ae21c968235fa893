#include "desknav/io.hpp"

#include "desknav/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace desknav {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_number(const std::string& s, int line) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (s.empty() || end != begin + s.size() || !std::isfinite(v)) {
        throw IoError("line " + std::to_string(line) + ": '" + s + "' is not a finite number");
    }
    return v;
}

/// Rows of exactly `columns.size()` numbers below the given header.
std::vector<std::vector<double>> read_table(std::istream& in, const std::vector<std::string>& columns) {
    std::string line;
    int number = 0;
    bool header = false;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto fields = split(t);
        if (!header) {
            if (fields != columns) {
                std::string expected;
                for (const auto& c : columns) expected += (expected.empty() ? "" : ",") + c;
                throw IoError("line " + std::to_string(number) + ": expected header '" + expected + "'");
            }
            header = true;
            continue;
        }
        if (fields.size() != columns.size()) {
            throw IoError("line " + std::to_string(number) + ": expected " + std::to_string(columns.size()) +
                          " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(to_number(f, number));
        rows.push_back(std::move(row));
    }
    if (!header) throw IoError("missing header");
    return rows;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Row {
public:
    explicit Row(std::ostream& out) : out_(out) {}
    ~Row() { out_ << '\n'; }
    Row& operator<<(double v) { return put(num(v)); }
    Row& operator<<(int v) { return put(std::to_string(v)); }
    Row& operator<<(bool v) { return put(v ? "1" : "0"); }

private:
    Row& put(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }
    std::ostream& out_;
    bool first_ = true;
};

void header(std::ostream& out, const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json stats(const std::vector<double>& xs) {
    if (xs.empty()) return {{"count", 0}};
    double sum = 0.0;
    for (double x : xs) sum += x;
    return {{"count", xs.size()},
            {"mean", sum / static_cast<double>(xs.size())},
            {"max", *std::max_element(xs.begin(), xs.end())}};
}

}  // namespace

PointCloud read_cloud_csv(std::istream& in) {
    PointCloud cloud;
    for (const auto& row : read_table(in, {"x", "y", "z"})) cloud.points.emplace_back(row[0], row[1], row[2]);
    return cloud;
}

PointCloud read_cloud_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return read_cloud_csv(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_cloud_csv(const PointCloud& cloud, std::ostream& out) {
    header(out, {"x", "y", "z"});
    for (const auto& p : cloud.points) Row(out) << p.x() << p.y() << p.z();
}

std::vector<Plane> read_planes_csv(std::istream& in) {
    std::vector<Plane> planes;
    for (const auto& row : read_table(in, {"alpha", "beta", "gamma", "zeta"})) {
        planes.push_back({row[0], row[1], row[2], row[3]});
    }
    return planes;
}

void write_planes_csv(const std::vector<Plane>& planes, std::ostream& out) {
    header(out, {"alpha", "beta", "gamma", "zeta"});
    for (const auto& p : planes) Row(out) << p.alpha << p.beta << p.gamma << p.zeta;
}

json plane_to_json(const Plane& p) {
    return {{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"zeta", p.zeta}};
}

json segmentation_to_json(const SegmentationResult& result, const SegmentationTiming& timing) {
    json planes = json::array();
    for (const auto& p : result.planes) planes.push_back(plane_to_json(p));
    return {{"labels", result.labels},
            {"planes", planes},
            {"sampled_indices", result.sampled_indices},
            {"status", result.status == SegmentationStatus::ok ? "ok" : "no_planes"},
            {"rank_deficient", result.rank_deficient},
            {"timing", {{"seconds", timing.seconds}, {"points", timing.points}}}};
}

const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> columns = {
        "tick",   "t",      "px",     "py",     "pz",     "vx",     "vy",     "vz",     "phi",
        "theta",  "est_px", "est_py", "est_pz", "est_vx", "est_vy", "est_vz", "est_phi", "est_theta",
        "thrust", "phi_d",  "theta_d", "ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz",
        "w_px",   "w_py",   "w_pz",   "w_vx",   "w_vy",   "w_vz",   "w_phi",  "w_theta",
        "inner_iterations", "penalty_rounds", "violation", "converged", "plane_count", "panel_distance",
        "cloud_distance"};
    return columns;
}

void write_trace_csv(const RunTrace& trace, std::ostream& out) {
    header(out, trace_columns());
    for (const auto& r : trace.records) {
        Row row(out);
        row << r.tick << r.t;
        for (const MavState* s : {&r.truth, &r.estimate}) {
            row << s->p.x() << s->p.y() << s->p.z() << s->v.x() << s->v.y() << s->v.z() << s->phi << s->theta;
        }
        row << r.input.thrust << r.input.phi_d << r.input.theta_d;
        for (int k = 0; k < 3; ++k) row << r.ref_position[k];
        for (int k = 0; k < 3; ++k) row << r.ref_velocity[k];
        for (int k = 0; k < 8; ++k) row << r.weights[k];
        row << r.inner_iterations << r.penalty_rounds << r.violation << r.solver_converged << r.plane_count
            << r.panel_distance << r.cloud_distance;
    }
}

void write_plot_csv(const RunTrace& trace, std::ostream& out) {
    header(out, {"t", "x", "y", "z", "ref_x", "ref_y", "ref_z", "panel_distance", "min_distance",
                 "cloud_distance", "w_px", "w_py", "w_vx", "w_vy"});
    double running = std::numeric_limits<double>::infinity();
    for (const auto& r : trace.records) {
        running = std::min(running, r.panel_distance);
        Row(out) << r.t << r.truth.p.x() << r.truth.p.y() << r.truth.p.z() << r.ref_position.x()
                 << r.ref_position.y() << r.ref_position.z() << r.panel_distance << running << r.cloud_distance
                 << r.weights[0] << r.weights[1] << r.weights[3] << r.weights[4];
    }
}

json snapshots_to_json(const RunTrace& trace) {
    json out = json::object();
    for (const auto& s : trace.snapshots) {
        json planes = json::array();
        for (const auto& p : s.planes) planes.push_back(plane_to_json(p));
        out[std::to_string(s.tick)] = planes;
    }
    return out;
}

json metrics_to_json(const Metrics& m) {
    return {{"waypoint_mae", m.waypoint_mae},
            {"velocity_mae", m.velocity_mae},
            {"path_length", m.path_length},
            {"min_distance", finite_or_null(m.min_distance)},
            {"collision", m.collision},
            {"reached_goal", m.reached_goal},
            {"duration", m.duration},
            {"ticks", m.ticks},
            {"solver_failures", m.solver_failures},
            {"segmentation_failures", m.segmentation_failures}};
}

json timing_to_json(const RunTrace& trace) {
    return {{"control_step", stats(trace.solve_times)}, {"segmentation", stats(trace.segmentation_times)}};
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << contents;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace desknav
