#pragma once

#include <Eigen/Core>

#include <functional>

namespace desknav {

/// Smooth cost; writes the gradient into `grad` (already sized) and returns f.
using CostFunction = std::function<double(const Eigen::VectorXd& u, Eigen::VectorXd& grad)>;

struct PanocOptions {
    double tol = 1e-4;       ///< on ||u - proj(u - gamma grad)|| / gamma
    int max_iters = 200;
    int lbfgs_memory = 5;
};

struct PanocResult {
    Eigen::VectorXd u;       ///< always inside the box
    double cost = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Box-constrained minimization: projected-gradient steps combined with
/// L-BFGS directions, accepted by line search on the forward-backward
/// envelope. The Lipschitz estimate starts from a finite difference and is
/// doubled whenever the quadratic upper bound fails.
PanocResult panoc_minimize(const CostFunction& cost, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Eigen::VectorXd& u0,
                           const PanocOptions& options);

}  // namespace desknav
