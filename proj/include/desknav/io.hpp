#pragma once

#include "desknav/clustering.hpp"
#include "desknav/geometry.hpp"
#include "desknav/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace desknav {

/// CSV with header `x,y,z`. Throws IoError on a missing file, a bad header
/// or a malformed row (the message names the line).
PointCloud read_cloud_csv(const std::filesystem::path& path);
PointCloud read_cloud_csv(std::istream& in);
void write_cloud_csv(const PointCloud& cloud, std::ostream& out);

/// CSV with header `alpha,beta,gamma,zeta`.
std::vector<Plane> read_planes_csv(std::istream& in);
void write_planes_csv(const std::vector<Plane>& planes, std::ostream& out);

nlohmann::json plane_to_json(const Plane& plane);

struct SegmentationTiming {
    double seconds = 0.0;
    std::size_t points = 0;
};

/// {"labels", "planes", "sampled_indices", "status", "rank_deficient", "timing"}
nlohmann::json segmentation_to_json(const SegmentationResult& result, const SegmentationTiming& timing);

/// Per-tick trace. Columns, in order:
///   tick, t,
///   px, py, pz, vx, vy, vz, phi, theta                 true state (world)
///   est_px, ..., est_theta                             estimate
///   thrust, phi_d, theta_d                             applied input
///   ref_px, ref_py, ref_pz, ref_vx, ref_vy, ref_vz     reference
///   w_px, w_py, w_pz, w_vx, w_vy, w_vz, w_phi, w_theta Q_x diagonal (0 for apf)
///   inner_iterations, penalty_rounds, violation, converged,
///   plane_count, panel_distance, cloud_distance
/// Doubles use 17 significant digits so equal runs give equal bytes.
void write_trace_csv(const RunTrace& trace, std::ostream& out);
const std::vector<std::string>& trace_columns();

/// Plot-ready series: t, x, y, z, ref_x, ref_y, ref_z, panel_distance,
/// min_distance (running minimum), cloud_distance, w_px, w_py, w_vx, w_vy.
void write_plot_csv(const RunTrace& trace, std::ostream& out);

/// {"<tick>": [plane, ...], ...} with planes in the body frame at scan time.
nlohmann::json snapshots_to_json(const RunTrace& trace);

/// Deterministic summary; wall-clock timings are kept out of it.
nlohmann::json metrics_to_json(const Metrics& metrics);

/// Solve and segmentation wall-clock statistics.
nlohmann::json timing_to_json(const RunTrace& trace);

void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace desknav
