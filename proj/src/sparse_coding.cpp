#include "desknav/clustering.hpp"

#include "desknav/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

namespace desknav {

namespace {

constexpr int kMaxHomotopySteps = 200;

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t) {
    return v.unaryExpr([t](double x) {
        if (x > t) return x - t;
        if (x < -t) return x + t;
        return 0.0;
    });
}

// Lasso homotopy in the l1 weight mu = 1/lambda, starting from mu = max|D^T b|
// where the code is zero and following the piecewise-linear path down to the
// target. When the active Gram becomes ill-conditioned the path stops early
// and the code at the last breakpoint is returned with `exact` unset.
struct PathResult {
    Eigen::VectorXd code;
    bool exact = false;
    int steps = 0;
};

PathResult homotopy(const Eigen::Ref<const Eigen::MatrixXd>& dict,
                    const Eigen::Ref<const Eigen::VectorXd>& target, double lambda) {
    PathResult out;
    const Eigen::Index n = dict.cols();
    const double mu_target = 1.0 / lambda;
    Eigen::VectorXd& code = out.code;
    code = Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd corr = dict.transpose() * target;
    Eigen::Index first = 0;
    double mu = corr.cwiseAbs().maxCoeff(&first);
    if (mu <= mu_target) {
        out.exact = true;
        return out;
    }

    std::vector<Eigen::Index> active{first};
    std::vector<double> sign{corr[first] > 0.0 ? 1.0 : -1.0};
    std::vector<char> is_active(static_cast<std::size_t>(n), 0);
    is_active[static_cast<std::size_t>(first)] = 1;

    while (out.steps < kMaxHomotopySteps) {
        ++out.steps;
        const auto m = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd sub(dict.rows(), m);
        Eigen::VectorXd s(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            sub.col(j) = dict.col(active[static_cast<std::size_t>(j)]);
            s[j] = sign[static_cast<std::size_t>(j)];
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(sub.transpose() * sub);
        if (m > dict.rows() || ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.rcond() < 1e-12) {
            return out;
        }
        // code_A(mu) = u - mu v
        const Eigen::VectorXd u = ldlt.solve(sub.transpose() * target);
        const Eigen::VectorXd v = ldlt.solve(s);
        const Eigen::VectorXd fit_u = target - sub * u;
        const Eigen::VectorXd fit_v = sub * v;
        const Eigen::VectorXd a = dict.transpose() * fit_u;
        const Eigen::VectorXd b = dict.transpose() * fit_v;

        const double ceiling = mu * (1.0 - 1e-12);
        double next = mu_target;
        Eigen::Index add = -1;
        double add_sign = 0.0;
        std::size_t drop = active.size();
        // With as many active atoms as rows the fit is exact and no inactive
        // correlation can reach the boundary before mu does.
        for (Eigen::Index i = 0; i < n && m < dict.rows(); ++i) {
            if (is_active[static_cast<std::size_t>(i)]) continue;
            // correlation a_i + mu b_i meets +mu or -mu
            for (const double sg : {1.0, -1.0}) {
                const double denom = sg - b[i];
                if (std::abs(denom) < 1e-300) continue;
                const double cand = a[i] / denom;
                if (cand > next && cand < ceiling) {
                    next = cand;
                    add = i;
                    add_sign = sg;
                    drop = active.size();
                }
            }
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            if (v[j] == 0.0) continue;
            const double cand = u[j] / v[j];
            if (cand > next && cand < ceiling) {
                next = cand;
                add = -1;
                drop = static_cast<std::size_t>(j);
            }
        }

        mu = next;
        for (Eigen::Index j = 0; j < m; ++j) code[active[static_cast<std::size_t>(j)]] = u[j] - mu * v[j];
        if (add < 0 && drop == active.size()) {
            out.exact = true;
            return out;
        }
        if (add >= 0) {
            active.push_back(add);
            sign.push_back(add_sign);
            is_active[static_cast<std::size_t>(add)] = 1;
        } else {
            code[active[drop]] = 0.0;
            is_active[static_cast<std::size_t>(active[drop])] = 0;
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
            sign.erase(sign.begin() + static_cast<std::ptrdiff_t>(drop));
            if (active.empty()) return out;
        }
    }
    return out;
}

// Feature-sign active-set search at fixed lambda, warm-started from `start`.
// Each pass solves the sign-constrained quadratic on the active set and
// line-searches through coefficient sign changes; finite in exact arithmetic.
PathResult feature_sign(const Eigen::Ref<const Eigen::MatrixXd>& dict,
                        const Eigen::Ref<const Eigen::VectorXd>& target, double lambda,
                        Eigen::VectorXd start, double tol) {
    PathResult out;
    const Eigen::Index n = dict.cols();
    Eigen::VectorXd x = std::move(start);
    const auto objective = [&](const Eigen::VectorXd& c) {
        return c.lpNorm<1>() + 0.5 * lambda * (target - dict * c).squaredNorm();
    };
    const double slack = 1e-12;

    for (; out.steps < kMaxHomotopySteps; ++out.steps) {
        Eigen::VectorXd grad = lambda * (dict.transpose() * (dict * x - target));

        // Optimality on the support; otherwise activate the worst zero atom.
        bool support_ok = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (x[i] != 0.0 && std::abs(grad[i] + (x[i] > 0.0 ? 1.0 : -1.0)) > slack * lambda + tol) {
                support_ok = false;
            }
        }
        std::vector<Eigen::Index> active;
        std::vector<double> sign;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (x[i] != 0.0) {
                active.push_back(i);
                sign.push_back(x[i] > 0.0 ? 1.0 : -1.0);
            }
        }
        if (support_ok) {
            Eigen::Index worst = -1;
            double worst_g = 1.0 + slack;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (x[i] == 0.0 && std::abs(grad[i]) > worst_g) {
                    worst_g = std::abs(grad[i]);
                    worst = i;
                }
            }
            if (worst < 0) {
                out.exact = true;
                break;
            }
            active.push_back(worst);
            sign.push_back(grad[worst] > 0.0 ? -1.0 : 1.0);
        }

        const auto m = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd sub(dict.rows(), m);
        Eigen::VectorXd s(m);
        Eigen::VectorXd current(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            sub.col(j) = dict.col(active[static_cast<std::size_t>(j)]);
            s[j] = sign[static_cast<std::size_t>(j)];
            current[j] = x[active[static_cast<std::size_t>(j)]];
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(sub.transpose() * sub);
        if (m > dict.rows() || ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.rcond() < 1e-14) {
            // Singular active set after an activation: swap instead. Moving
            // along a null direction of the active atoms leaves the fit
            // unchanged and lowers the l1 term at rate |z_new| (1 - |g_new|),
            // so walk until an old coefficient reaches zero.
            if (!support_ok) break;
            const Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
            const Eigen::MatrixXd kernel = lu.kernel();
            Eigen::VectorXd z = kernel.col(0);
            if (kernel.cols() == 0 || std::abs(z[m - 1]) < 1e-12 * z.norm()) break;
            if (z[m - 1] * s[m - 1] < 0.0) z = -z;
            double step = std::numeric_limits<double>::infinity();
            Eigen::Index blocking = -1;
            for (Eigen::Index j = 0; j + 1 < m; ++j) {
                if (current[j] * z[j] < 0.0 && -current[j] / z[j] < step) {
                    step = -current[j] / z[j];
                    blocking = j;
                }
            }
            if (blocking < 0) break;
            Eigen::VectorXd moved = current + step * z;
            moved[blocking] = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) x[active[static_cast<std::size_t>(j)]] = moved[j];
            continue;
        }
        const Eigen::VectorXd proposal = ldlt.solve(sub.transpose() * target - s / lambda);

        // Candidates: the proposal and every sign crossing along the segment.
        const auto place = [&](const Eigen::VectorXd& sub_code) {
            Eigen::VectorXd full = x;
            for (Eigen::Index j = 0; j < m; ++j) full[active[static_cast<std::size_t>(j)]] = sub_code[j];
            return full;
        };
        Eigen::VectorXd best = place(proposal);
        double best_obj = objective(best);
        for (Eigen::Index j = 0; j < m; ++j) {
            if (current[j] == 0.0 || proposal[j] * current[j] > 0.0) continue;
            const double t = current[j] / (current[j] - proposal[j]);
            Eigen::VectorXd mid = current + t * (proposal - current);
            mid[j] = 0.0;
            Eigen::VectorXd cand = place(mid);
            const double obj = objective(cand);
            if (obj < best_obj) {
                best_obj = obj;
                best = std::move(cand);
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(best[i]) < 1e-15) best[i] = 0.0;
        }
        if (best == x) break;
        x = std::move(best);
    }
    out.code = std::move(x);
    return out;
}

struct InnerResult {
    Eigen::VectorXd code;
    int iterations = 0;
    bool converged = false;
};

// FISTA over a (small) sub-dictionary. Step sizes come from backtracking
// starting at a lower bound of the Lipschitz constant; `lipschitz_full` is a
// valid upper bound and is also the step used to measure the residual.
InnerResult fista(const Eigen::MatrixXd& dict, const Eigen::VectorXd& target,
                  Eigen::VectorXd start, double lambda, double lipschitz_full,
                  double tol, int budget) {
    InnerResult out;
    double lip = lambda * dict.colwise().squaredNorm().maxCoeff();
    lip = std::clamp(lip, 1e-300, lipschitz_full);

    Eigen::VectorXd x = std::move(start);
    Eigen::VectorXd y = x;
    double t = 1.0;
    Eigen::VectorXd res_y = dict * y - target;

    for (int k = 0; k < budget; ++k) {
        const Eigen::VectorXd grad = lambda * (dict.transpose() * res_y);
        const double f_y = 0.5 * lambda * res_y.squaredNorm();

        Eigen::VectorXd x_new;
        Eigen::VectorXd res_new;
        while (true) {
            x_new = soft_threshold(y - grad / lip, 1.0 / lip);
            res_new = dict * x_new - target;
            const Eigen::VectorXd step = x_new - y;
            const double f_new = 0.5 * lambda * res_new.squaredNorm();
            const double model = f_y + grad.dot(step) + 0.5 * lip * step.squaredNorm();
            if (f_new <= model + 1e-12 * std::abs(f_y) || lip >= lipschitz_full) break;
            lip = std::min(2.0 * lip, lipschitz_full);
        }
        ++out.iterations;

        const Eigen::VectorXd grad_new = lambda * (dict.transpose() * res_new);
        const double residual =
            lipschitz_full *
            (x_new - soft_threshold(x_new - grad_new / lipschitz_full, 1.0 / lipschitz_full)).norm();
        if (residual <= tol) {
            out.code = std::move(x_new);
            out.converged = true;
            return out;
        }

        // Gradient-based adaptive restart.
        const bool restart = (y - x_new).dot(x_new - x) > 0.0;
        if (restart) {
            t = 1.0;
            y = x_new;
        } else {
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_new + ((t - 1.0) / t_new) * (x_new - x);
            t = t_new;
        }
        x = std::move(x_new);
        res_y = dict * y - target;
    }
    out.code = std::move(x);
    return out;
}

}  // namespace

double lasso_objective(const Eigen::Ref<const Eigen::MatrixXd>& dictionary,
                       const Eigen::Ref<const Eigen::VectorXd>& target,
                       const Eigen::Ref<const Eigen::VectorXd>& code, double lambda) {
    return code.lpNorm<1>() + 0.5 * lambda * (target - dictionary * code).squaredNorm();
}

double lasso_fixed_point_residual(const Eigen::Ref<const Eigen::MatrixXd>& dictionary,
                                  const Eigen::Ref<const Eigen::VectorXd>& target,
                                  const Eigen::Ref<const Eigen::VectorXd>& code,
                                  double lambda, double lipschitz) {
    const Eigen::VectorXd grad = lambda * (dictionary.transpose() * (dictionary * code - target));
    const Eigen::VectorXd c = code;
    return lipschitz * (c - soft_threshold(c - grad / lipschitz, 1.0 / lipschitz)).norm();
}

double lasso_lipschitz(const Eigen::Ref<const Eigen::MatrixXd>& dictionary, double lambda) {
    // The row dimension is small (4 after embedding), so the outer Gram is cheap.
    const Eigen::MatrixXd gram = dictionary * dictionary.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    return std::max(lambda * eig.eigenvalues().maxCoeff(), 1e-300);
}

LassoResult solve_lasso(const Eigen::Ref<const Eigen::MatrixXd>& dictionary,
                        const Eigen::Ref<const Eigen::VectorXd>& target,
                        const LassoOptions& options) {
    if (!(options.lambda > 0.0)) throw InvalidArgumentError("lasso lambda must be positive");
    if (dictionary.rows() != target.size()) {
        throw InvalidArgumentError("lasso dictionary/target dimension mismatch");
    }
    const Eigen::Index n = dictionary.cols();
    const double lambda = options.lambda;
    const double lip_full =
        options.lipschitz > 0.0 ? options.lipschitz : lasso_lipschitz(dictionary, lambda);

    LassoResult result;
    result.code = Eigen::VectorXd::Zero(n);
    if (n == 0) {
        result.converged = true;
        result.objective = 0.5 * lambda * target.squaredNorm();
        return result;
    }

    Eigen::VectorXd start = Eigen::VectorXd::Zero(n);
    int used = 0;
    if (options.homotopy) {
        PathResult path = homotopy(dictionary, target, lambda);
        used = path.steps;
        double r = lasso_fixed_point_residual(dictionary, target, path.code, lambda, lip_full);
        if (r > options.tol) {
            PathResult polished = feature_sign(dictionary, target, lambda, path.code, 0.1 * options.tol / lip_full);
            used += polished.steps;
            const double rp = lasso_fixed_point_residual(dictionary, target, polished.code, lambda, lip_full);
            if (rp < r) {
                path = std::move(polished);
                r = rp;
            }
        }
        if (r <= options.tol) {
            result.code = std::move(path.code);
            result.residual = r;
            result.iterations = used;
            result.converged = true;
            result.objective = lasso_objective(dictionary, target, result.code, lambda);
            return result;
        }
        start = std::move(path.code);
    }

    // Gradient magnitude per atom at the current code; an atom outside the
    // working set violates the optimality conditions when it exceeds 1.
    Eigen::VectorXd full_grad = lambda * (dictionary.transpose() * (dictionary * start - target));

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> working;
    std::vector<char> in_working(static_cast<std::size_t>(n), 0);
    if (options.working_set <= 0 || options.working_set >= n) {
        working = order;
    } else {
        // Current support first, then the atoms with the largest gradient.
        std::stable_partition(order.begin(), order.end(), [&](int i) { return start[i] != 0.0; });
        const auto support = std::count_if(order.begin(), order.end(), [&](int i) { return start[i] != 0.0; });
        const auto size = std::min<std::ptrdiff_t>(n, support + options.working_set);
        std::partial_sort(order.begin() + support, order.begin() + size, order.end(),
                          [&](int a, int b) {
                              const double ga = std::abs(full_grad[a]);
                              const double gb = std::abs(full_grad[b]);
                              return ga > gb || (ga == gb && a < b);
                          });
        working.assign(order.begin(), order.begin() + size);
    }
    for (int i : working) in_working[static_cast<std::size_t>(i)] = 1;

    double inner_tol = 0.5 * options.tol;
    Eigen::VectorXd sub_code(static_cast<Eigen::Index>(working.size()));
    for (std::size_t j = 0; j < working.size(); ++j) sub_code[static_cast<Eigen::Index>(j)] = start[working[j]];
    double residual = 0.0;

    while (true) {
        const auto w = static_cast<Eigen::Index>(working.size());
        Eigen::MatrixXd sub_dict(dictionary.rows(), w);
        for (Eigen::Index j = 0; j < w; ++j) sub_dict.col(j) = dictionary.col(working[j]);

        const InnerResult inner =
            fista(sub_dict, target, sub_code, lambda, lip_full, inner_tol, options.max_iters - used);
        used += inner.iterations;
        sub_code = inner.code;

        result.code.setZero();
        for (Eigen::Index j = 0; j < w; ++j) result.code[working[j]] = sub_code[j];
        full_grad = lambda * (dictionary.transpose() * (sub_dict * sub_code - target));

        const Eigen::VectorXd step =
            result.code - soft_threshold(result.code - full_grad / lip_full, 1.0 / lip_full);
        residual = lip_full * step.norm();
        if (residual <= options.tol) {
            result.converged = true;
            break;
        }
        if (used >= options.max_iters) break;

        std::vector<int> violators;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!in_working[static_cast<std::size_t>(i)] && std::abs(full_grad[i]) > 1.0) {
                violators.push_back(static_cast<int>(i));
            }
        }
        if (violators.empty()) {
            // Working set is right; the sub-problem needs more accuracy.
            inner_tol *= 0.1;
            continue;
        }
        std::sort(violators.begin(), violators.end(), [&](int a, int b) {
            const double ga = std::abs(full_grad[a]);
            const double gb = std::abs(full_grad[b]);
            return ga > gb || (ga == gb && a < b);
        });
        const std::size_t grow = std::max<std::size_t>(working.size(), 8);
        if (violators.size() > grow) violators.resize(grow);
        for (int i : violators) {
            working.push_back(i);
            in_working[static_cast<std::size_t>(i)] = 1;
        }
        sub_code.conservativeResize(static_cast<Eigen::Index>(working.size()));
        sub_code.tail(static_cast<Eigen::Index>(violators.size())).setZero();
    }

    result.residual = residual;
    result.iterations = used;
    result.objective = lasso_objective(dictionary, target, result.code, lambda);
    return result;
}

CoefficientMatrix sparse_representation(const DataMatrix& data, const SampledIndices& indices,
                                        const ClusteringConfig& config) {
    const auto n1 = static_cast<Eigen::Index>(indices.dictionary.size());
    const auto n2 = static_cast<Eigen::Index>(indices.represented.size());
    Eigen::MatrixXd dict(4, n1);
    for (Eigen::Index i = 0; i < n1; ++i) {
        const int src = indices.dictionary[static_cast<std::size_t>(i)];
        if (src < 0 || src >= data.size()) throw InvalidArgumentError("dictionary index out of range");
        dict.col(i) = data.columns.col(src);
    }
    if (!dict.allFinite()) throw InvalidArgumentError("non-finite data column");

    LassoOptions options;
    options.lambda = config.data_weight();
    options.tol = config.lasso_tol;
    options.max_iters = config.lasso_max_iters;
    options.lipschitz = lasso_lipschitz(dict, options.lambda);

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n2) * 6);
    double worst = 0.0;
    int failures = 0;
    for (Eigen::Index j = 0; j < n2; ++j) {
        const int src = indices.represented[static_cast<std::size_t>(j)];
        if (src < 0 || src >= data.size()) throw InvalidArgumentError("sample index out of range");
        const Eigen::Vector4d target = data.columns.col(src);
        if (!target.allFinite()) throw InvalidArgumentError("non-finite data column");
        const LassoResult r = solve_lasso(dict, target, options);
        worst = std::max(worst, r.residual);
        if (!r.converged) ++failures;
        for (Eigen::Index i = 0; i < n1; ++i) {
            if (r.code[i] != 0.0) triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), r.code[i]);
        }
    }
    if (failures > 0) {
        throw ConvergenceError("sparse coding did not converge for " + std::to_string(failures) +
                                   " column(s); worst residual " + std::to_string(worst),
                               worst);
    }
    CoefficientMatrix c(n1, n2);
    c.setFromTriplets(triplets.begin(), triplets.end());
    return c;
}

}  // namespace desknav
