#include "desknav/nmpc.hpp"

#include "desknav/errors.hpp"

#include <chrono>
#include <optional>
#include <cmath>

namespace desknav {

void NmpcConfig::validate() const {
    if (horizon < 1) throw InvalidArgumentError("horizon must be >= 1");
    if (!(ts > 0.0)) throw InvalidArgumentError("ts must be positive");
    if (!(d_s > 0.0)) throw InvalidArgumentError("d_s must be positive");
    if (!(penalty_factor > 1.0)) throw InvalidArgumentError("penalty_factor must exceed 1");
    if (!(penalty_init > 0.0) || penalty_max < penalty_init) {
        throw InvalidArgumentError("penalty schedule out of range");
    }
    if ((u_min.array() >= u_max.array()).any()) throw InvalidArgumentError("u_min must be below u_max");
    if ((q_u.array() < 0.0).any() || (q_du.array() < 0.0).any() || (q_attitude.array() < 0.0).any()) {
        throw InvalidArgumentError("weights must be non-negative");
    }
    if (!(dphi_max >= 0.0) || !(dtheta_max >= 0.0)) throw InvalidArgumentError("rate bounds must be non-negative");
    if (n_max < 1) throw InvalidArgumentError("n_max must be >= 1");
    if (!(solver_tol > 0.0) || max_inner_iters < 1 || lbfgs_memory < 0) {
        throw InvalidArgumentError("inner solver settings out of range");
    }
    if (!(constraint_tol >= 0.0)) throw InvalidArgumentError("constraint_tol must be non-negative");
}

VarianceWindow::VarianceWindow(int n_max) : n_max_(n_max) {
    if (n_max < 1) throw InvalidArgumentError("variance window length must be >= 1");
}

void VarianceWindow::push(const Vector6& sample) {
    if (!sample.allFinite() || (sample.array() < 0.0).any()) {
        throw InvalidArgumentError("variance samples must be finite and non-negative");
    }
    samples_.push_back(sample);
    while (static_cast<int>(samples_.size()) > n_max_) samples_.pop_front();
}

double shannon_entropy(const Eigen::Ref<const Eigen::VectorXd>& variances) {
    if (variances.size() == 0) throw InvalidArgumentError("entropy of an empty window");
    const Eigen::ArrayXd shifted = variances.array() + kEntropyFloor;
    const Eigen::ArrayXd p = shifted / shifted.sum();
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
    return std::max(h, 0.0);
}

WeightVector entropy_weights(const VarianceWindow& window, const Eigen::Vector2d& q_attitude) {
    if (window.empty()) throw InvalidArgumentError("variance window is empty");
    const auto m = static_cast<Eigen::Index>(window.size());
    Eigen::MatrixXd stacked(m, 6);
    Eigen::Index row = 0;
    for (const auto& s : window.samples()) stacked.row(row++) = s.transpose();
    WeightVector w;
    for (Eigen::Index axis = 0; axis < 6; ++axis) w[axis] = shannon_entropy(stacked.col(axis));
    w.tail<2>() = q_attitude;
    return w;
}

WeightVector fixed_weights(int n_max, const Eigen::Vector2d& q_attitude) {
    WeightVector w;
    w.head<6>().setConstant(std::log(static_cast<double>(n_max)));
    w.tail<2>() = q_attitude;
    return w;
}

Eigen::VectorXd stack_inputs(const std::vector<ControlInput>& inputs) {
    Eigen::VectorXd u(3 * static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t j = 0; j < inputs.size(); ++j) u.segment<3>(3 * static_cast<Eigen::Index>(j)) = inputs[j].vector();
    return u;
}

std::vector<ControlInput> unstack_inputs(const Eigen::VectorXd& u) {
    std::vector<ControlInput> out(static_cast<std::size_t>(u.size() / 3));
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = ControlInput::from_vector(u.segment<3>(3 * static_cast<Eigen::Index>(j)));
    }
    return out;
}

NmpcObjective::NmpcObjective(const MavState& x0, const StateVector& x_ref, const ControlInput& u_prev,
                             const WeightVector& q_x, const std::vector<Plane>& planes,
                             const NmpcConfig& config, const ModelParams& model)
    : x0_(x0.vector()),
      x_ref_(x_ref),
      u_prev_(u_prev.vector()),
      u_ref_(model.g, 0.0, 0.0),
      q_x_(q_x),
      config_(config),
      model_(model),
      horizon_(config.horizon),
      penalty_(config.penalty_init) {
    model_.ts = config.ts;
    const Eigen::Matrix3d rotation = body_to_world(x0.phi, x0.theta);
    planes_.reserve(planes.size());
    // Orient every plane so the MAV (the origin) lies on its negative side;
    // the penalty then keeps the predicted path on that side.
    for (const auto& p : planes) {
        Plane level = transform_plane(p.normalized(), rotation, Eigen::Vector3d::Zero());
        if (level.zeta > 0.0) level = Plane{-level.alpha, -level.beta, -level.gamma, -level.zeta};
        planes_.push_back(level);
    }
}

std::vector<StateVector> NmpcObjective::predict(const Eigen::VectorXd& u) const {
    std::vector<StateVector> xs;
    xs.reserve(static_cast<std::size_t>(horizon_));
    StateVector x = x0_;
    for (int j = 0; j < horizon_; ++j) {
        x = euler_step(x, u.segment<3>(3 * j), model_);
        xs.push_back(x);
    }
    return xs;
}

double NmpcObjective::value(const Eigen::VectorXd& u) const { return evaluate(u, nullptr); }

double NmpcObjective::value_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
    return evaluate(u, &grad);
}

double NmpcObjective::evaluate(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const {
    if (u.size() != 3 * horizon_) throw InvalidArgumentError("input sequence has the wrong length");
    const int n = horizon_;
    std::vector<StateVector> xs(static_cast<std::size_t>(n) + 1);
    xs[0] = x0_;
    for (int j = 0; j < n; ++j) xs[j + 1] = euler_step(xs[j], u.segment<3>(3 * j), model_);

    const double c = penalty_;
    const Eigen::Vector2d rate_max(config_.dphi_max, config_.dtheta_max);
    const Eigen::Vector3d p0 = x0_.head<3>();
    double cost = 0.0;
    if (grad) grad->setZero(3 * n);

    // State terms and their gradients (stage j+1 for j = 0..N-1).
    std::vector<StateVector> state_grad(static_cast<std::size_t>(n) + 1, StateVector::Zero());
    for (int j = 1; j <= n; ++j) {
        const StateVector e = xs[j] - x_ref_;
        cost += e.dot(q_x_.cwiseProduct(e));
        state_grad[j] = 2.0 * q_x_.cwiseProduct(e);

        const Eigen::Vector3d dp = xs[j].head<3>() - p0;
        for (const auto& plane : planes_) {
            const double deficit = config_.d_s + plane.evaluate(dp);
            if (deficit <= 0.0) continue;
            cost += 0.5 * c * deficit * deficit;
            state_grad[j].head<3>() += c * deficit * plane.normal();
        }
    }

    for (int j = 0; j < n; ++j) {
        const InputVector uj = u.segment<3>(3 * j);
        const InputVector before = j == 0 ? u_prev_ : InputVector(u.segment<3>(3 * (j - 1)));
        const InputVector du = uj - u_ref_;
        const InputVector dd = uj - before;
        cost += du.dot(config_.q_u.cwiseProduct(du)) + dd.dot(config_.q_du.cwiseProduct(dd));
        if (grad) {
            grad->segment<3>(3 * j) += 2.0 * config_.q_u.cwiseProduct(du) + 2.0 * config_.q_du.cwiseProduct(dd);
            if (j > 0) grad->segment<3>(3 * (j - 1)) -= 2.0 * config_.q_du.cwiseProduct(dd);
        }
        for (int k = 0; k < 2; ++k) {
            const double excess = std::abs(dd[k + 1]) - rate_max[k];
            if (excess <= 0.0) continue;
            cost += 0.5 * c * excess * excess;
            if (grad) {
                const double g = c * excess * (dd[k + 1] >= 0.0 ? 1.0 : -1.0);
                (*grad)[3 * j + k + 1] += g;
                if (j > 0) (*grad)[3 * (j - 1) + k + 1] -= g;
            }
        }
    }

    if (grad) {
        StateVector adjoint = state_grad[n];
        for (int j = n - 1; j >= 0; --j) {
            const StepJacobian jac = euler_step_jacobian(xs[j], u.segment<3>(3 * j), model_);
            grad->segment<3>(3 * j) += jac.fu.transpose() * adjoint;
            if (j > 0) adjoint = state_grad[j] + jac.fx.transpose() * adjoint;
        }
    }
    return cost;
}

NmpcObjective::Violation NmpcObjective::violation(const Eigen::VectorXd& u) const {
    Violation v;
    const std::vector<StateVector> xs = predict(u);
    const Eigen::Vector3d p0 = x0_.head<3>();
    for (const auto& x : xs) {
        const Eigen::Vector3d dp = x.head<3>() - p0;
        for (const auto& plane : planes_) {
            v.collision = std::max(v.collision, config_.d_s + plane.evaluate(dp));
        }
    }
    for (int j = 0; j < horizon_; ++j) {
        const InputVector before = j == 0 ? u_prev_ : InputVector(u.segment<3>(3 * (j - 1)));
        const InputVector dd = u.segment<3>(3 * j) - before;
        v.rate = std::max({v.rate, std::abs(dd[1]) - config_.dphi_max, std::abs(dd[2]) - config_.dtheta_max});
    }
    v.collision = std::max(v.collision, 0.0);
    v.rate = std::max(v.rate, 0.0);
    return v;
}

NmpcSolution solve_nmpc(const MavState& x_est, const StateVector& x_ref, const ControlInput& u_prev,
                        const WeightVector& q_x, const std::vector<Plane>& planes,
                        const Eigen::VectorXd& warm_start, const NmpcConfig& config,
                        const ModelParams& model) {
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    const int n = config.horizon;
    if (warm_start.size() != 3 * n) throw InvalidArgumentError("warm start has the wrong length");

    NmpcObjective objective(x_est, x_ref, u_prev, q_x, planes, config, model);
    Eigen::VectorXd lower(3 * n);
    Eigen::VectorXd upper(3 * n);
    for (int j = 0; j < n; ++j) {
        lower.segment<3>(3 * j) = config.u_min;
        upper.segment<3>(3 * j) = config.u_max;
    }
    PanocOptions options;
    options.tol = config.solver_tol;
    options.max_iters = config.max_inner_iters;
    options.lbfgs_memory = config.lbfgs_memory;

    NmpcSolution sol;
    Eigen::VectorXd u = warm_start;
    bool inner_ok = true;
    double c = config.penalty_init;
    // Last round whose inner solve converged; a stiffer round that fails to
    // converge is discarded in its favor.
    std::optional<Eigen::VectorXd> settled;
    NmpcObjective::Violation settled_violation;
    double settled_cost = 0.0, settled_residual = 0.0;
    while (true) {
        objective.set_penalty(c);
        const PanocResult res = panoc_minimize(
            [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) { return objective.value_and_gradient(v, g); },
            lower, upper, u, options);
        ++sol.penalty_rounds;
        sol.inner_iterations += res.iterations;
        const auto v = objective.violation(res.u);
        if (!res.converged && settled) {
            u = *settled;
            inner_ok = false;
            sol.cost = settled_cost;
            sol.residual = settled_residual;
            sol.collision_violation = settled_violation.collision;
            sol.rate_violation = settled_violation.rate;
            sol.max_constraint_violation = settled_violation.max();
            break;
        }
        u = res.u;
        inner_ok = res.converged;
        sol.residual = res.residual;
        sol.cost = res.cost;
        sol.collision_violation = v.collision;
        sol.rate_violation = v.rate;
        sol.max_constraint_violation = v.max();
        if (res.converged) {
            settled = res.u;
            settled_violation = v;
            settled_cost = res.cost;
            settled_residual = res.residual;
        }
        if (!res.converged || v.max() <= config.constraint_tol || c * config.penalty_factor > config.penalty_max) break;
        c *= config.penalty_factor;
    }
    sol.converged = inner_ok && sol.max_constraint_violation <= config.constraint_tol;
    sol.u_star = unstack_inputs(u);
    sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

NmpcController::NmpcController(NmpcConfig config, ModelParams model, WeightMode mode)
    : config_(std::move(config)), model_(std::move(model)), mode_(mode), window_(config_.n_max) {
    config_.validate();
    model_.validate();
    model_.ts = config_.ts;
    u_prev_ = ControlInput{model_.g, 0.0, 0.0};
    warm_start_ = stack_inputs(std::vector<ControlInput>(static_cast<std::size_t>(config_.horizon), u_prev_));
}

NmpcController::Step NmpcController::control_step(const MavState& x_est, const Vector6& variance_sample,
                                                  const StateVector& x_ref, const std::vector<Plane>& planes) {
    window_.push(variance_sample);
    Step step;
    step.weights = mode_ == WeightMode::adaptive ? entropy_weights(window_, config_.q_attitude)
                                                 : fixed_weights(config_.n_max, config_.q_attitude);
    step.solution = solve_nmpc(x_est, x_ref, u_prev_, step.weights, planes, warm_start_, config_, model_);
    step.u = step.solution.u_star.front();
    u_prev_ = step.u;

    const int n = config_.horizon;
    const Eigen::VectorXd solved = stack_inputs(step.solution.u_star);
    warm_start_.head(3 * (n - 1)) = solved.tail(3 * (n - 1));
    warm_start_.tail<3>() = solved.tail<3>();
    return step;
}

}  // namespace desknav
