#pragma once

#include "desknav/dynamics.hpp"
#include "desknav/geometry.hpp"
#include "desknav/panoc.hpp"

#include <Eigen/Core>

#include <deque>
#include <vector>

namespace desknav {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using WeightVector = Eigen::Matrix<double, 8, 1>;

struct NmpcConfig {
    int horizon = 40;
    double ts = 0.05;
    Eigen::Vector3d q_u = Eigen::Vector3d::Constant(10.0);
    Eigen::Vector3d q_du = Eigen::Vector3d::Constant(20.0);
    Eigen::Vector2d q_attitude = Eigen::Vector2d::Constant(5.0);
    InputVector u_min{0.0, -0.4, -0.4};
    InputVector u_max{2.0 * 9.81, 0.4, 0.4};
    double d_s = 1.0;
    double dphi_max = 0.05;    ///< per step
    double dtheta_max = 0.05;  ///< per step
    int n_max = 10;
    double solver_tol = 1e-3;
    double penalty_init = 10.0;
    double penalty_factor = 5.0;
    double penalty_max = 1e6;
    double constraint_tol = 0.05;
    int max_inner_iters = 150;
    int lbfgs_memory = 5;

    /// Throws InvalidArgumentError when a field is out of range.
    void validate() const;
};

/// Per-axis rolling buffers of variance samples for (px, py, pz, vx, vy, vz).
class VarianceWindow {
public:
    explicit VarianceWindow(int n_max = 10);

    /// Appends one sample per axis, dropping the oldest beyond n_max.
    /// Negative or non-finite samples throw InvalidArgumentError.
    void push(const Vector6& sample);

    int capacity() const noexcept { return n_max_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const std::deque<Vector6>& samples() const noexcept { return samples_; }

private:
    int n_max_;
    std::deque<Vector6> samples_;
};

constexpr double kEntropyFloor = 1e-12;

/// Shannon entropy (natural log) of P_i = (s_i + eps) / sum(s_j + eps).
double shannon_entropy(const Eigen::Ref<const Eigen::VectorXd>& variances);

/// Q_x diagonal: entropy per tracked axis, then the fixed attitude weights.
/// Throws InvalidArgumentError on an empty window.
WeightVector entropy_weights(const VarianceWindow& window, const Eigen::Vector2d& q_attitude);

/// Q_x diagonal with every tracked axis at the maximal entropy ln(n_max).
WeightVector fixed_weights(int n_max, const Eigen::Vector2d& q_attitude);

/// Single-shooting objective over the stacked input sequence
/// u = (u_0, ..., u_{N-1}) in R^{3N}.
///
/// Tracking, actuation and smoothness terms, plus (c/2) max(0, .)^2
/// penalties for plane clearance of the predicted displacements
/// p_j - p_0 (j = 1..N) and for per-step roll/pitch command changes
/// (u_prev -> u_0 included).
class NmpcObjective {
public:
    /// Planes are in the body frame at x0; they are rotated into the level
    /// frame once using x0's roll and pitch.
    NmpcObjective(const MavState& x0, const StateVector& x_ref, const ControlInput& u_prev,
                  const WeightVector& q_x, const std::vector<Plane>& planes, const NmpcConfig& config,
                  const ModelParams& model);

    int horizon() const noexcept { return horizon_; }
    double penalty() const noexcept { return penalty_; }
    void set_penalty(double c) { penalty_ = c; }

    double value(const Eigen::VectorXd& u) const;
    /// Value and gradient by reverse accumulation through the rollout.
    double value_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const;

    /// Predicted states x_1..x_N (no angle wrapping).
    std::vector<StateVector> predict(const Eigen::VectorXd& u) const;

    struct Violation {
        /// max over steps and planes of d_s minus the signed distance on the
        /// MAV's side of the plane, >= 0
        double collision = 0.0;
        double rate = 0.0;       ///< max excess of a roll/pitch command change, >= 0
        double max() const { return std::max(collision, rate); }
    };
    Violation violation(const Eigen::VectorXd& u) const;

    /// Planes as used by the penalty: level frame, unit normals, oriented so
    /// the MAV is on the negative side (zeta <= 0).
    const std::vector<Plane>& level_planes() const noexcept { return planes_; }

private:
    double evaluate(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const;

    StateVector x0_;
    StateVector x_ref_;
    InputVector u_prev_;
    InputVector u_ref_;
    WeightVector q_x_;
    std::vector<Plane> planes_;
    NmpcConfig config_;
    ModelParams model_;
    int horizon_;
    double penalty_;
};

struct NmpcSolution {
    std::vector<ControlInput> u_star;
    double cost = 0.0;
    double max_constraint_violation = 0.0;
    double collision_violation = 0.0;
    double rate_violation = 0.0;
    double residual = 0.0;
    int inner_iterations = 0;
    int penalty_rounds = 0;
    bool converged = false;
    double solve_time = 0.0;  ///< wall clock, s
};

Eigen::VectorXd stack_inputs(const std::vector<ControlInput>& inputs);
std::vector<ControlInput> unstack_inputs(const Eigen::VectorXd& u);

/// Penalty outer loop around panoc_minimize. `warm_start` (3N) seeds the
/// first round; later rounds start from the previous round's solution.
NmpcSolution solve_nmpc(const MavState& x_est, const StateVector& x_ref, const ControlInput& u_prev,
                        const WeightVector& q_x, const std::vector<Plane>& planes,
                        const Eigen::VectorXd& warm_start, const NmpcConfig& config,
                        const ModelParams& model);

enum class WeightMode { adaptive, fixed };

/// Stateful 20 Hz controller: variance window, previous input, warm start.
class NmpcController {
public:
    NmpcController(NmpcConfig config, ModelParams model, WeightMode mode = WeightMode::adaptive);

    struct Step {
        ControlInput u;
        NmpcSolution solution;
        WeightVector weights;
    };

    /// Pushes the variance sample, forms Q_x, solves, shifts the warm start
    /// and returns the first input.
    Step control_step(const MavState& x_est, const Vector6& variance_sample, const StateVector& x_ref,
                      const std::vector<Plane>& planes);

    const ControlInput& previous_input() const noexcept { return u_prev_; }
    const NmpcConfig& config() const noexcept { return config_; }
    const ModelParams& model() const noexcept { return model_; }

private:
    NmpcConfig config_;
    ModelParams model_;
    WeightMode mode_;
    VarianceWindow window_;
    ControlInput u_prev_;
    Eigen::VectorXd warm_start_;
};

}  // namespace desknav
