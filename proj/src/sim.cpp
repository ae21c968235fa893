#include "desknav/errors.hpp"
#include "desknav/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace desknav {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double elapsed_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void LidarConfig::validate() const {
    if (channels < 1) throw InvalidArgumentError("lidar needs at least one channel");
    if (!(azimuth_resolution_deg > 0.0)) throw InvalidArgumentError("lidar azimuth resolution must be positive");
    if (!(max_range > 0.0)) throw InvalidArgumentError("lidar range must be positive");
    if (!(range_noise >= 0.0)) throw InvalidArgumentError("lidar range noise must be non-negative");
    if (max_elevation_deg < min_elevation_deg) throw InvalidArgumentError("lidar elevation span is inverted");
}

PointCloud synthetic_scan(const Environment& env, const MavState& truth, const LidarConfig& lidar, Rng& rng) {
    lidar.validate();
    PointCloud cloud;
    cloud.frame = Frame::body;
    if (env.panels.empty()) return cloud;

    const Eigen::Matrix3d rotation = body_to_world(truth.phi, truth.theta);
    const int azimuths = static_cast<int>(std::lround(360.0 / lidar.azimuth_resolution_deg));
    std::normal_distribution<double> noise(0.0, 1.0);
    cloud.points.reserve(static_cast<std::size_t>(azimuths * lidar.channels));
    for (int c = 0; c < lidar.channels; ++c) {
        const double elevation =
            lidar.channels == 1
                ? lidar.min_elevation_deg * kDeg
                : (lidar.min_elevation_deg +
                   (lidar.max_elevation_deg - lidar.min_elevation_deg) * c / (lidar.channels - 1)) *
                      kDeg;
        for (int a = 0; a < azimuths; ++a) {
            const double azimuth = a * lidar.azimuth_resolution_deg * kDeg;
            const Eigen::Vector3d dir_body(std::cos(elevation) * std::cos(azimuth),
                                           std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
            const Eigen::Vector3d dir_world = rotation * dir_body;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& panel : env.panels) {
                if (auto t = panel.intersect(truth.p, dir_world, lidar.max_range)) best = std::min(best, *t);
            }
            if (!std::isfinite(best)) continue;
            // Draw even when the noise is zero so hit topology and the RNG
            // stream do not depend on sigma.
            const double range = best + lidar.range_noise * noise(rng);
            cloud.points.push_back(range * dir_body);
        }
    }
    return cloud;
}

void NoiseConfig::validate() const {
    if (!(position_std >= 0.0) || !(velocity_std >= 0.0)) throw InvalidArgumentError("noise stds must be non-negative");
    if (!(activation_time >= 0.0)) throw InvalidArgumentError("noise activation time must be non-negative");
}

OdometryNoise::OdometryNoise(NoiseConfig config, int n_max)
    : config_(config), n_max_(n_max), history_(4) {
    config_.validate();
    if (n_max < 1) throw InvalidArgumentError("innovation window must be >= 1");
}

Measurement OdometryNoise::measure(const MavState& truth, double t, Rng& rng) {
    Measurement m;
    m.estimate = truth;
    std::normal_distribution<double> unit(0.0, 1.0);
    // Always draw four samples so the stream is independent of activation.
    const double n_px = unit(rng), n_py = unit(rng), n_vx = unit(rng), n_vy = unit(rng);
    if (t < config_.activation_time) return m;

    const double sp = config_.position_std;
    const double sv = config_.velocity_std;
    m.estimate.p.x() += sp * n_px;
    m.estimate.p.y() += sp * n_py;
    m.estimate.v.x() += sv * n_vx;
    m.estimate.v.y() += sv * n_vy;

    const int axes[4] = {0, 1, 3, 4};
    const double values[4] = {m.estimate.p.x(), m.estimate.p.y(), m.estimate.v.x(), m.estimate.v.y()};
    const double stds[4] = {sp, sp, sv, sv};
    for (int k = 0; k < 4; ++k) {
        if (stds[k] == 0.0) continue;
        if (config_.variance_mode == VarianceMode::known) {
            m.variance[axes[k]] = stds[k] * stds[k];
            continue;
        }
        auto& hist = history_[static_cast<std::size_t>(k)];
        if (!hist.empty()) {
            const double mean = std::accumulate(hist.begin(), hist.end(), 0.0) / static_cast<double>(hist.size());
            m.variance[axes[k]] = (values[k] - mean) * (values[k] - mean);
        }
        hist.push_back(values[k]);
        if (static_cast<int>(hist.size()) > n_max_) hist.erase(hist.begin());
    }
    return m;
}

Measurement inject_noise(const MavState& truth, const NoiseConfig& noise, Rng& rng, double t) {
    NoiseConfig known = noise;
    known.variance_mode = VarianceMode::known;
    OdometryNoise injector(known, 1);
    return injector.measure(truth, t, rng);
}

ReferenceTrajectory::ReferenceTrajectory(const Eigen::Vector3d& spawn, const std::vector<Waypoint>& waypoints) {
    points_.push_back(spawn);
    times_.push_back(0.0);
    for (const auto& w : waypoints) {
        if (!(w.speed > 0.0)) throw InvalidArgumentError("waypoint speed must be positive");
        const double length = (w.position - points_.back()).norm();
        points_.push_back(w.position);
        times_.push_back(times_.back() + length / w.speed);
    }
}

ReferenceTrajectory::Sample ReferenceTrajectory::at(double t) const {
    if (t >= times_.back()) return {points_.back(), Eigen::Vector3d::Zero()};
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const auto k = static_cast<std::size_t>(std::distance(times_.begin(), it));
    const double t0 = times_[k - 1];
    const double t1 = times_[k];
    const Eigen::Vector3d& a = points_[k - 1];
    const Eigen::Vector3d& b = points_[k];
    if (t1 <= t0) return {b, Eigen::Vector3d::Zero()};
    const double s = (t - t0) / (t1 - t0);
    return {a + s * (b - a), (b - a) / (t1 - t0)};
}

ControlInput potential_field_step(const MavState& x_est, const PointCloud& cloud, const StateVector& x_ref,
                                  const PotentialFieldGains& gains, const ModelParams& model,
                                  const InputVector& u_min, const InputVector& u_max) {
    Eigen::Vector3d force = gains.attraction * (x_ref.head<3>() - x_est.p) +
                            gains.damping * (x_ref.segment<3>(3) - x_est.v);
    const Eigen::Matrix3d rotation = body_to_world(x_est.phi, x_est.theta);
    Eigen::Vector3d repulsion = Eigen::Vector3d::Zero();
    int count = 0;
    for (const auto& q : cloud.points) {
        const Eigen::Vector3d offset = rotation * q;
        const double d = offset.norm();
        if (!(d > 1e-6) || d >= gains.influence) continue;
        repulsion -= (1.0 / d - 1.0 / gains.influence) / (d * d) * (offset / d);
        ++count;
    }
    if (count > 0) force += gains.repulsion * repulsion / static_cast<double>(count);

    InputVector u(model.g + force.z(), -force.y() / model.g, force.x() / model.g);
    return ControlInput::from_vector(u.cwiseMax(u_min).cwiseMin(u_max));
}

void ScenarioConfig::validate() const {
    lidar.validate();
    noise.validate();
    model.validate();
    clustering.validate();
    nmpc.validate();
    environment.validate(nmpc.d_s);
    if (!(sim.time_limit > 0.0) || !(sim.segmentation_rate > 0.0) || !(sim.goal_tolerance > 0.0)) {
        throw InvalidArgumentError("sim time limit, segmentation rate and goal tolerance must be positive");
    }
    if (!(sim.min_duration >= 0.0) || !(sim.collision_distance >= 0.0)) {
        throw InvalidArgumentError("sim min duration and collision distance must be non-negative");
    }
    if (std::abs(model.ts - nmpc.ts) > 1e-12) throw InvalidArgumentError("model ts and nmpc ts differ");
}

RunTrace run_scenario(const ScenarioConfig& config) {
    config.validate();
    const double ts = config.nmpc.ts;
    Rng rng(config.seed);
    Rng scan_rng(config.seed ^ 0xa5a5a5a5a5a5a5a5ULL);

    const ReferenceTrajectory reference(config.environment.spawn, config.environment.waypoints);
    OdometryNoise odometry(config.noise, config.nmpc.n_max);
    const WeightMode weight_mode =
        config.mode == ControllerMode::fixed ? WeightMode::fixed : WeightMode::adaptive;
    NmpcController controller(config.nmpc, config.model, weight_mode);

    MavState truth;
    truth.p = config.environment.spawn;

    const int scan_period = std::max(1, static_cast<int>(std::lround(1.0 / (config.sim.segmentation_rate * ts))));
    const auto max_ticks = static_cast<int>(std::floor(config.sim.time_limit / ts + 1e-9));

    RunTrace trace;
    std::vector<Plane> level_planes;  // level frame at the latest scan
    Eigen::Vector3d drift = Eigen::Vector3d::Zero();
    PointCloud cloud;
    int scans = 0;

    for (int tick = 0; tick <= max_ticks; ++tick) {
        const double t = tick * ts;
        const Measurement meas = odometry.measure(truth, t, rng);
        const MavState& est = meas.estimate;
        const Eigen::Matrix3d level_from_body = body_to_world(est.phi, est.theta);

        if (tick % scan_period == 0) {
            cloud = synthetic_scan(config.environment, truth, config.lidar, scan_rng);
            ClusteringConfig clustering = config.clustering;
            clustering.seed = config.clustering.seed + static_cast<std::uint64_t>(scans++);
            const auto start = std::chrono::steady_clock::now();
            if (cloud.empty()) {
                // Open space: nothing to avoid.
                level_planes.clear();
                trace.snapshots.push_back({tick, {}});
            } else {
                try {
                    const SegmentationResult seg = segment_planes(cloud, clustering);
                    level_planes.clear();
                    for (const auto& p : seg.planes) {
                        level_planes.push_back(transform_plane(p, level_from_body, Eigen::Vector3d::Zero()));
                    }
                    trace.snapshots.push_back({tick, seg.planes});
                } catch (const Error&) {
                    // Keep the previous snapshot, carried along by the drift.
                    for (auto& p : level_planes) p = transform_plane(p, Eigen::Matrix3d::Identity(), -drift);
                    ++trace.segmentation_failures;
                }
            }
            trace.segmentation_times.push_back(elapsed_since(start));
            drift.setZero();
        }

        // Planes transported by the estimated displacement since the scan,
        // then expressed in the current body frame.
        std::vector<Plane> body_planes;
        body_planes.reserve(level_planes.size());
        for (const auto& p : level_planes) {
            const Plane moved = transform_plane(p, Eigen::Matrix3d::Identity(), -drift);
            body_planes.push_back(transform_plane(moved, level_from_body.transpose(), Eigen::Vector3d::Zero()));
        }

        const auto ref = reference.at(t);
        StateVector x_ref = StateVector::Zero();
        x_ref.head<3>() = ref.position;
        x_ref.segment<3>(3) = ref.velocity;

        TraceRecord rec;
        rec.tick = tick;
        rec.t = t;
        rec.truth = truth;
        rec.estimate = est;
        rec.ref_position = ref.position;
        rec.ref_velocity = ref.velocity;
        rec.plane_count = static_cast<int>(body_planes.size());
        rec.panel_distance = config.environment.distance(truth.p);
        rec.cloud_distance = std::numeric_limits<double>::infinity();
        for (const auto& q : cloud.points) rec.cloud_distance = std::min(rec.cloud_distance, q.norm());

        if (config.mode == ControllerMode::potential_field) {
            const auto start = std::chrono::steady_clock::now();
            rec.input = potential_field_step(est, cloud, x_ref, config.potential_field, config.model,
                                             config.nmpc.u_min, config.nmpc.u_max);
            trace.solve_times.push_back(elapsed_since(start));
        } else {
            const auto step = controller.control_step(est, meas.variance, x_ref, body_planes);
            rec.input = step.u;
            rec.weights = step.weights;
            rec.inner_iterations = step.solution.inner_iterations;
            rec.penalty_rounds = step.solution.penalty_rounds;
            rec.violation = step.solution.max_constraint_violation;
            rec.solver_converged = step.solution.converged;
            trace.solve_times.push_back(step.solution.solve_time);
        }
        trace.records.push_back(rec);

        const bool done = t >= reference.duration() && t >= config.sim.min_duration &&
                          (truth.p - reference.final_point()).norm() <= config.sim.goal_tolerance;
        if (done) {
            trace.reached_goal = true;
            break;
        }
        drift += ts * est.v;
        truth = step_euler(truth, rec.input, config.model);
    }
    return trace;
}

Metrics compute_metrics(const RunTrace& trace, const Environment& env, double collision_distance) {
    if (trace.records.empty()) throw InvalidArgumentError("trace is empty");
    Metrics m;
    m.min_distance = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < trace.records.size(); ++k) {
        const auto& r = trace.records[k];
        m.waypoint_mae += (r.truth.p - r.ref_position).norm();
        m.velocity_mae += (r.truth.v - r.ref_velocity).norm();
        if (k > 0) m.path_length += (r.truth.p - trace.records[k - 1].truth.p).norm();
        m.min_distance = std::min(m.min_distance, env.distance(r.truth.p));
        if (!r.solver_converged) ++m.solver_failures;
    }
    const auto n = static_cast<double>(trace.records.size());
    m.waypoint_mae /= n;
    m.velocity_mae /= n;
    m.collision = m.min_distance < collision_distance;
    m.reached_goal = trace.reached_goal;
    m.duration = trace.records.back().t;
    m.ticks = static_cast<int>(trace.records.size());
    m.segmentation_failures = trace.segmentation_failures;
    return m;
}

}  // namespace desknav
