#include "desknav/errors.hpp"
#include "desknav/sim.hpp"

#include <cmath>
#include <limits>

namespace desknav {

int Panel::normal_axis() const {
    int axis = -1;
    for (int k = 0; k < 3; ++k) {
        if (min[k] == max[k]) {
            if (axis >= 0) return -1;
            axis = k;
        } else if (min[k] > max[k]) {
            return -1;
        }
    }
    return axis;
}

Plane Panel::plane() const {
    const int axis = normal_axis();
    if (axis < 0) throw DegenerateGeometryError("panel is not an axis-aligned rectangle");
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    n[axis] = 1.0;
    return Plane::from_normal_offset(n, -min[axis]);
}

double Panel::distance(const Eigen::Vector3d& p) const {
    return (p - p.cwiseMax(min).cwiseMin(max)).norm();
}

std::optional<double> Panel::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                       double max_t) const {
    const int axis = normal_axis();
    if (axis < 0 || std::abs(dir[axis]) < 1e-12) return std::nullopt;
    const double t = (min[axis] - origin[axis]) / dir[axis];
    if (!(t > 0.0) || t > max_t) return std::nullopt;
    const Eigen::Vector3d hit = origin + t * dir;
    for (int k = 0; k < 3; ++k) {
        if (k == axis) continue;
        if (hit[k] < min[k] || hit[k] > max[k]) return std::nullopt;
    }
    return t;
}

double Environment::distance(const Eigen::Vector3d& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& panel : panels) best = std::min(best, panel.distance(p));
    return best;
}

void Environment::validate(double d_s) const {
    for (const auto& panel : panels) {
        if (!panel.min.allFinite() || !panel.max.allFinite() || panel.normal_axis() < 0) {
            throw InvalidArgumentError("environment '" + name + "' has a degenerate panel");
        }
    }
    if (!spawn.allFinite()) throw InvalidArgumentError("spawn must be finite");
    if (distance(spawn) <= d_s) {
        throw InvalidArgumentError("spawn lies within the safety distance of a panel");
    }
    for (const auto& w : waypoints) {
        if (!w.position.allFinite() || !(w.speed > 0.0)) {
            throw InvalidArgumentError("waypoints need finite positions and positive speeds");
        }
    }
}

namespace {

Panel panel(Eigen::Vector3d lo, Eigen::Vector3d hi) { return Panel{lo, hi}; }

}  // namespace

Environment corridor_environment(double speed) {
    Environment env;
    env.name = "corridor";
    env.panels = {
        panel({0.0, -1.0, 0.0}, {20.0, -1.0, 3.0}),
        panel({0.0, 1.0, 0.0}, {20.0, 1.0, 3.0}),
        panel({-3.0, -3.0, 0.0}, {23.0, 3.0, 0.0}),
        panel({0.0, -1.0, 3.0}, {20.0, 1.0, 3.0}),
    };
    env.spawn = {-1.0, 0.0, 1.5};
    const double z = 1.5;
    for (const Eigen::Vector3d& p : {Eigen::Vector3d(0.0, 0.0, z), Eigen::Vector3d(5.0, 0.6, z),
                                    Eigen::Vector3d(8.0, -0.6, z), Eigen::Vector3d(11.0, 0.6, z),
                                    Eigen::Vector3d(14.0, -0.6, z), Eigen::Vector3d(20.0, 0.0, z),
                                    Eigen::Vector3d(21.5, 0.0, z)}) {
        env.waypoints.push_back({p, speed});
    }
    return env;
}

Environment confined_room_environment() {
    Environment env;
    env.name = "confined_room";
    env.panels = {
        panel({-2.0, -2.0, 0.0}, {2.0, 2.0, 0.0}),   panel({-2.0, -2.0, 3.0}, {2.0, 2.0, 3.0}),
        panel({-2.0, -2.0, 0.0}, {-2.0, 2.0, 3.0}),  panel({2.0, -2.0, 0.0}, {2.0, 2.0, 3.0}),
        panel({-2.0, -2.0, 0.0}, {2.0, -2.0, 3.0}),  panel({-2.0, 2.0, 0.0}, {2.0, 2.0, 3.0}),
    };
    env.spawn = {0.0, 0.0, 1.5};
    return env;
}

}  // namespace desknav
