#include "desknav/dynamics.hpp"

#include "desknav/errors.hpp"

#include <cmath>
#include <numbers>

namespace desknav {

StateVector MavState::vector() const {
    StateVector x;
    x << p, v, phi, theta;
    return x;
}

MavState MavState::from_vector(const StateVector& x) {
    MavState s;
    s.p = x.segment<3>(0);
    s.v = x.segment<3>(3);
    s.phi = x[6];
    s.theta = x[7];
    return s;
}

void ModelParams::validate() const {
    if (!(tau_phi > 0.0) || !(tau_theta > 0.0)) throw InvalidArgumentError("attitude time constants must be positive");
    if (!(ts > 0.0)) throw InvalidArgumentError("sampling period must be positive");
    if (!(g > 0.0)) throw InvalidArgumentError("gravity must be positive");
    if ((drag.array() < 0.0).any()) throw InvalidArgumentError("drag coefficients must be non-negative");
}

StateVector continuous_derivative(const StateVector& x, const InputVector& u, const ModelParams& params) {
    const double sphi = std::sin(x[6]);
    const double cphi = std::cos(x[6]);
    const double sth = std::sin(x[7]);
    const double cth = std::cos(x[7]);
    const double thrust = u[0];

    StateVector dx;
    dx.segment<3>(0) = x.segment<3>(3);
    dx[3] = sth * cphi * thrust - params.drag.x() * x[3];
    dx[4] = -sphi * thrust - params.drag.y() * x[4];
    dx[5] = cphi * cth * thrust - params.g - params.drag.z() * x[5];
    dx[6] = (params.k_phi * u[1] - x[6]) / params.tau_phi;
    dx[7] = (params.k_theta * u[2] - x[7]) / params.tau_theta;
    return dx;
}

StateVector continuous_derivative(const MavState& x, const ControlInput& u, const ModelParams& params) {
    return continuous_derivative(x.vector(), u.vector(), params);
}

StateVector euler_step(const StateVector& x, const InputVector& u, const ModelParams& params) {
    return x + params.ts * continuous_derivative(x, u, params);
}

StepJacobian euler_step_jacobian(const StateVector& x, const InputVector& u, const ModelParams& params) {
    const double sphi = std::sin(x[6]);
    const double cphi = std::cos(x[6]);
    const double sth = std::sin(x[7]);
    const double cth = std::cos(x[7]);
    const double thrust = u[0];
    const double ts = params.ts;

    StepJacobian jac;
    jac.fx.setIdentity();
    jac.fu.setZero();
    jac.fx.block<3, 3>(0, 3) += ts * Eigen::Matrix3d::Identity();
    jac.fx(3, 3) -= ts * params.drag.x();
    jac.fx(4, 4) -= ts * params.drag.y();
    jac.fx(5, 5) -= ts * params.drag.z();
    jac.fx(3, 6) = -ts * sth * sphi * thrust;
    jac.fx(3, 7) = ts * cth * cphi * thrust;
    jac.fx(4, 6) = -ts * cphi * thrust;
    jac.fx(5, 6) = -ts * sphi * cth * thrust;
    jac.fx(5, 7) = -ts * cphi * sth * thrust;
    jac.fx(6, 6) -= ts / params.tau_phi;
    jac.fx(7, 7) -= ts / params.tau_theta;

    jac.fu(3, 0) = ts * sth * cphi;
    jac.fu(4, 0) = -ts * sphi;
    jac.fu(5, 0) = ts * cphi * cth;
    jac.fu(6, 1) = ts * params.k_phi / params.tau_phi;
    jac.fu(7, 2) = ts * params.k_theta / params.tau_theta;
    return jac;
}

double wrap_angle(double a) {
    constexpr double pi = std::numbers::pi;
    if (a >= -pi && a <= pi) return a;
    a = std::remainder(a, 2.0 * pi);
    return a;
}

MavState step_euler(const MavState& x, const ControlInput& u, const ModelParams& params) {
    MavState next = MavState::from_vector(euler_step(x.vector(), u.vector(), params));
    next.phi = wrap_angle(next.phi);
    next.theta = wrap_angle(next.theta);
    return next;
}

std::vector<MavState> rollout(const MavState& x0, const std::vector<ControlInput>& inputs,
                              const ModelParams& params) {
    std::vector<MavState> out;
    out.reserve(inputs.size());
    MavState x = x0;
    for (const auto& u : inputs) {
        x = step_euler(x, u, params);
        out.push_back(x);
    }
    return out;
}

Eigen::Matrix3d body_to_world(double phi, double theta) {
    const double sphi = std::sin(phi);
    const double cphi = std::cos(phi);
    const double sth = std::sin(theta);
    const double cth = std::cos(theta);
    Eigen::Matrix3d rx;
    rx << 1, 0, 0, 0, cphi, -sphi, 0, sphi, cphi;
    Eigen::Matrix3d ry;
    ry << cth, 0, sth, 0, 1, 0, -sth, 0, cth;
    return ry * rx;
}

}  // namespace desknav
