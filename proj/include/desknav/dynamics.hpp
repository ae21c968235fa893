#pragma once

#include <Eigen/Core>

#include <vector>

namespace desknav {

using StateVector = Eigen::Matrix<double, 8, 1>;
using InputVector = Eigen::Vector3d;

/// Quadrotor state with yaw fixed at zero.
struct MavState {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    double phi = 0.0;
    double theta = 0.0;

    StateVector vector() const;
    static MavState from_vector(const StateVector& x);
};

/// Mass-normalized thrust T (m/s^2) and commanded roll/pitch (rad).
struct ControlInput {
    double thrust = 0.0;
    double phi_d = 0.0;
    double theta_d = 0.0;

    InputVector vector() const { return {thrust, phi_d, theta_d}; }
    static ControlInput from_vector(const InputVector& u) { return {u[0], u[1], u[2]}; }
};

struct ModelParams {
    double g = 9.81;
    double tau_phi = 0.5;
    double tau_theta = 0.5;
    double k_phi = 1.0;
    double k_theta = 1.0;
    Eigen::Vector3d drag = Eigen::Vector3d::Constant(0.1);
    double ts = 0.05;

    /// Throws InvalidArgumentError when a time constant or Ts is not positive.
    void validate() const;
};

/// Continuous-time derivative f(x, u).
StateVector continuous_derivative(const StateVector& x, const InputVector& u, const ModelParams& params);
StateVector continuous_derivative(const MavState& x, const ControlInput& u, const ModelParams& params);

/// Jacobians of the Euler step x + Ts f(x, u).
struct StepJacobian {
    Eigen::Matrix<double, 8, 8> fx;
    Eigen::Matrix<double, 8, 3> fu;
};

/// Euler step without angle wrapping; the form differentiated by the controller.
StateVector euler_step(const StateVector& x, const InputVector& u, const ModelParams& params);
StepJacobian euler_step_jacobian(const StateVector& x, const InputVector& u, const ModelParams& params);

/// Euler step with roll and pitch wrapped to [-pi, pi].
MavState step_euler(const MavState& x, const ControlInput& u, const ModelParams& params);

/// x_1..x_N with x_{j+1} = step_euler(x_j, u_j).
std::vector<MavState> rollout(const MavState& x0, const std::vector<ControlInput>& inputs,
                              const ModelParams& params);

/// Body-to-world rotation for roll phi and pitch theta at zero yaw.
Eigen::Matrix3d body_to_world(double phi, double theta);

double wrap_angle(double a);

}  // namespace desknav
