#pragma once

#include "desknav/clustering.hpp"
#include "desknav/dynamics.hpp"
#include "desknav/geometry.hpp"
#include "desknav/nmpc.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace desknav {

using Rng = std::mt19937_64;

/// Axis-aligned rectangle in the world frame: `min` and `max` agree in
/// exactly one coordinate (the panel's normal axis).
struct Panel {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();

    int normal_axis() const;
    Plane plane() const;
    double distance(const Eigen::Vector3d& p) const;
    /// Ray parameter of the hit, if any, with t in (0, max_t].
    std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                    double max_t) const;
};

struct Waypoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double speed = 0.3;  ///< m/s along the segment that ends here
};

struct Environment {
    std::string name;
    std::vector<Panel> panels;
    Eigen::Vector3d spawn = Eigen::Vector3d::Zero();
    std::vector<Waypoint> waypoints;

    double distance(const Eigen::Vector3d& p) const;  ///< to the nearest panel; inf if none
    /// Throws InvalidArgumentError for degenerate panels or a spawn within d_s.
    void validate(double d_s) const;
};

Environment corridor_environment(double speed = 0.3);
Environment confined_room_environment();

struct LidarConfig {
    int channels = 16;
    double min_elevation_deg = -15.0;
    double max_elevation_deg = 15.0;
    double azimuth_resolution_deg = 2.0;
    double max_range = 20.0;
    double range_noise = 0.01;

    void validate() const;
};

/// Casts every (channel, azimuth) ray from the sensor at the true position
/// and returns the noisy nearest hits in the body frame.
PointCloud synthetic_scan(const Environment& env, const MavState& truth, const LidarConfig& lidar, Rng& rng);

enum class VarianceMode { known, estimated };

struct NoiseConfig {
    double position_std = 1.5;
    double velocity_std = 0.5;
    double activation_time = 0.0;
    VarianceMode variance_mode = VarianceMode::known;

    void validate() const;
};

struct Measurement {
    MavState estimate;
    Vector6 variance = Vector6::Zero();  ///< px, py, pz, vx, vy, vz
};

/// Odometry noise on x/y position and velocity. In known mode the variance
/// sample is the active noise variance; in estimated mode it is the squared
/// innovation of each noisy axis against the mean of its previous n_max
/// measurements. Before activation the estimate is exact and samples are 0.
class OdometryNoise {
public:
    OdometryNoise(NoiseConfig config, int n_max);
    Measurement measure(const MavState& truth, double t, Rng& rng);

private:
    NoiseConfig config_;
    int n_max_;
    std::vector<std::vector<double>> history_;  // per noisy axis
};

/// Single-shot known-mode injection.
Measurement inject_noise(const MavState& truth, const NoiseConfig& noise, Rng& rng, double t);

/// Spawn followed by the waypoints, traversed at each segment's speed.
class ReferenceTrajectory {
public:
    ReferenceTrajectory(const Eigen::Vector3d& spawn, const std::vector<Waypoint>& waypoints);

    struct Sample {
        Eigen::Vector3d position;
        Eigen::Vector3d velocity;
    };
    Sample at(double t) const;
    double duration() const noexcept { return times_.back(); }
    const Eigen::Vector3d& final_point() const noexcept { return points_.back(); }

private:
    std::vector<Eigen::Vector3d> points_;
    std::vector<double> times_;
};

struct PotentialFieldGains {
    double attraction = 1.0;
    double damping = 1.5;
    double repulsion = 2.0;
    double influence = 1.0;  ///< repulsion radius, m
};

/// Attraction to the reference plus mean inverse-square repulsion from the
/// points within the influence radius, mapped to (T, phi_d, theta_d) by
/// small-angle inversion of the dynamics and clipped to the box. The cloud
/// is in the body frame of x_est.
ControlInput potential_field_step(const MavState& x_est, const PointCloud& cloud, const StateVector& x_ref,
                                  const PotentialFieldGains& gains, const ModelParams& model,
                                  const InputVector& u_min, const InputVector& u_max);

enum class ControllerMode { adaptive, fixed, potential_field };

struct SimConfig {
    double time_limit = 120.0;
    double min_duration = 0.0;       ///< keep running at least this long
    double segmentation_rate = 2.0;  ///< Hz
    double goal_tolerance = 0.3;
    double collision_distance = 0.05;
};

struct ScenarioConfig {
    Environment environment;
    LidarConfig lidar;
    NoiseConfig noise;
    ModelParams model;
    ClusteringConfig clustering;
    NmpcConfig nmpc;
    ControllerMode mode = ControllerMode::adaptive;
    PotentialFieldGains potential_field;
    SimConfig sim;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TraceRecord {
    int tick = 0;
    double t = 0.0;
    MavState truth;
    MavState estimate;
    ControlInput input;
    Eigen::Vector3d ref_position = Eigen::Vector3d::Zero();
    Eigen::Vector3d ref_velocity = Eigen::Vector3d::Zero();
    WeightVector weights = WeightVector::Zero();
    int inner_iterations = 0;
    int penalty_rounds = 0;
    double violation = 0.0;
    bool solver_converged = true;
    int plane_count = 0;
    double panel_distance = 0.0;  ///< true position to nearest panel
    double cloud_distance = 0.0;  ///< sensor to nearest point of the latest scan
};

struct PlaneSnapshot {
    int tick = 0;
    std::vector<Plane> planes;  ///< body frame at scan time
};

struct RunTrace {
    std::vector<TraceRecord> records;
    std::vector<PlaneSnapshot> snapshots;
    std::vector<double> solve_times;         ///< wall clock per control tick
    std::vector<double> segmentation_times;  ///< wall clock per scan
    int segmentation_failures = 0;
    bool reached_goal = false;
};

RunTrace run_scenario(const ScenarioConfig& config);

struct Metrics {
    double waypoint_mae = 0.0;
    double velocity_mae = 0.0;
    double path_length = 0.0;
    double min_distance = 0.0;
    bool collision = false;
    bool reached_goal = false;
    double duration = 0.0;
    int ticks = 0;
    int solver_failures = 0;
    int segmentation_failures = 0;
};

Metrics compute_metrics(const RunTrace& trace, const Environment& env, double collision_distance = 0.05);

}  // namespace desknav
