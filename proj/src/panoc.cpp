#include "desknav/panoc.hpp"

#include "desknav/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace desknav {

namespace {

class Lbfgs {
public:
    explicit Lbfgs(int memory) : memory_(memory) {}

    void reset() {
        s_.clear();
        y_.clear();
        rho_.clear();
    }

    void push(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
        const double sy = s.dot(y);
        if (!(sy > 1e-12 * s.squaredNorm())) return;
        if (static_cast<int>(s_.size()) == memory_) {
            s_.pop_front();
            y_.pop_front();
            rho_.pop_front();
        }
        s_.push_back(s);
        y_.push_back(y);
        rho_.push_back(1.0 / sy);
    }

    // Two-loop recursion: approximates H * q.
    Eigen::VectorXd apply(const Eigen::VectorXd& q_in) const {
        Eigen::VectorXd q = q_in;
        if (s_.empty()) return q;
        std::vector<double> alpha(s_.size());
        for (std::size_t k = s_.size(); k-- > 0;) {
            alpha[k] = rho_[k] * s_[k].dot(q);
            q -= alpha[k] * y_[k];
        }
        const double scale = s_.back().dot(y_.back()) / y_.back().squaredNorm();
        q *= scale;
        for (std::size_t k = 0; k < s_.size(); ++k) {
            const double beta = rho_[k] * y_[k].dot(q);
            q += (alpha[k] - beta) * s_[k];
        }
        return q;
    }

private:
    int memory_;
    std::deque<Eigen::VectorXd> s_;
    std::deque<Eigen::VectorXd> y_;
    std::deque<double> rho_;
};

struct Point {
    Eigen::VectorXd u;
    Eigen::VectorXd grad;
    double f = 0.0;
    Eigen::VectorXd u_bar;   // projected-gradient point
    Eigen::VectorXd r;       // u - u_bar
    double envelope = 0.0;
};

}  // namespace

PanocResult panoc_minimize(const CostFunction& cost, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Eigen::VectorXd& u0,
                           const PanocOptions& options) {
    const Eigen::Index n = u0.size();
    if (lower.size() != n || upper.size() != n) throw InvalidArgumentError("box dimension mismatch");
    if ((lower.array() > upper.array()).any()) throw InvalidArgumentError("box lower bound exceeds upper bound");

    const auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return v.cwiseMax(lower).cwiseMin(upper);
    };
    const auto evaluate = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        g.resize(n);
        return cost(u, g);
    };

    Point cur;
    cur.u = project(u0);
    cur.f = evaluate(cur.u, cur.grad);

    // Lipschitz estimate from a finite difference of the gradient.
    double lip = 1.0;
    {
        Eigen::VectorXd delta = (1e-6 * cur.u.cwiseAbs()).cwiseMax(1e-6);
        Eigen::VectorXd g2;
        evaluate(cur.u + delta, g2);
        const double est = (g2 - cur.grad).norm() / delta.norm();
        if (std::isfinite(est) && est > 1e-8) lip = est;
    }
    constexpr double kSafety = 0.95;
    double gamma = kSafety / lip;

    Eigen::VectorXd scratch;
    const auto forward_backward = [&](Point& p) {
        p.u_bar = project(p.u - gamma * p.grad);
        p.r = p.u - p.u_bar;
        p.envelope = p.f - p.grad.dot(p.r) + p.r.squaredNorm() / (2.0 * gamma);
    };
    // Doubles L until f(u_bar) sits under the quadratic model at u.
    const auto enforce_bound = [&](Point& p) -> bool {
        bool changed = false;
        for (int k = 0; k < 60; ++k) {
            forward_backward(p);
            const double f_bar = evaluate(p.u_bar, scratch);
            const double model = p.f - p.grad.dot(p.r) + 0.5 * lip * p.r.squaredNorm();
            if (f_bar <= model + 1e-12 * std::abs(p.f)) break;
            lip *= 2.0;
            gamma = kSafety / lip;
            changed = true;
        }
        return changed;
    };

    Lbfgs memory(options.lbfgs_memory);
    enforce_bound(cur);

    PanocResult result;
    Point best = cur;
    double best_residual = cur.r.norm() / gamma;
    for (int it = 0; it < options.max_iters; ++it) {
        result.iterations = it;
        const double residual = cur.r.norm() / gamma;
        if (residual <= options.tol) {
            result.converged = true;
            break;
        }

        const Eigen::VectorXd direction = -memory.apply(cur.r);
        const double sigma = kSafety * (1.0 - gamma * lip) / (4.0 * gamma);
        const double target = cur.envelope - sigma * cur.r.squaredNorm();

        Point next;
        double tau = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 12; ++ls) {
            next.u = cur.u - (1.0 - tau) * cur.r + tau * direction;
            next.f = evaluate(next.u, next.grad);
            if (std::isfinite(next.f)) {
                forward_backward(next);
                if (next.envelope <= target) {
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if (!accepted) {
            // The plain projected-gradient step always decreases the envelope.
            next.u = cur.u_bar;
            next.f = evaluate(next.u, next.grad);
        }
        const double old_gamma = gamma;
        if (enforce_bound(next) || gamma != old_gamma) {
            memory.reset();
        } else {
            memory.push(next.u - cur.u, next.r - cur.r);
        }
        cur = std::move(next);
        result.iterations = it + 1;
        const double res = cur.r.norm() / gamma;
        if (res < best_residual) {
            best = cur;
            best_residual = res;
        }
    }
    if (!result.converged && cur.r.norm() / gamma <= options.tol) result.converged = true;

    const Point& out = result.converged ? cur : best;
    result.u = out.u_bar;
    result.residual = result.converged ? cur.r.norm() / gamma : best_residual;
    Eigen::VectorXd g;
    result.cost = evaluate(result.u, g);
    return result;
}

}  // namespace desknav
