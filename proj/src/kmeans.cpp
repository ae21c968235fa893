#include "desknav/clustering.hpp"

#include "desknav/errors.hpp"

#include <limits>
#include <random>

namespace desknav {

namespace {

struct Lloyd {
    std::vector<int> labels;
    Eigen::MatrixXd centers;
    double inertia = 0.0;
};

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& rows, int k, std::mt19937_64& rng) {
    const Eigen::Index n = rows.rows();
    Eigen::MatrixXd centers(k, rows.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = rows.row(pick(rng));

    Eigen::VectorXd dist2 = (rows.rowwise() - centers.row(0)).rowwise().squaredNorm();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = dist2.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= target && dist2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centers.row(c) = rows.row(chosen);
        dist2 = dist2.cwiseMin((rows.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

Lloyd run_lloyd(const Eigen::MatrixXd& rows, Eigen::MatrixXd centers, int max_iters) {
    const Eigen::Index n = rows.rows();
    const auto k = static_cast<int>(centers.rows());
    Lloyd out;
    out.labels.assign(static_cast<std::size_t>(n), -1);
    Eigen::VectorXd best_d(n);

    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (rows.row(i) - centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            best_d[i] = bd;
            if (out.labels[static_cast<std::size_t>(i)] != best) {
                out.labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, rows.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = out.labels[static_cast<std::size_t>(i)];
            sums.row(l) += rows.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
            } else {
                // Empty cluster: move it onto the worst-served point.
                Eigen::Index far = 0;
                best_d.maxCoeff(&far);
                centers.row(c) = rows.row(far);
                best_d[far] = 0.0;
            }
        }
    }

    out.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        out.inertia += (rows.row(i) - centers.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    out.centers = std::move(centers);
    return out;
}

}  // namespace

KMeansResult kmeans_rows(const Eigen::MatrixXd& rows, int k, std::uint64_t seed, int restarts,
                         int max_iters) {
    if (k < 1) throw InvalidArgumentError("k-means needs K >= 1");
    if (k > rows.rows()) throw InvalidArgumentError("k-means K exceeds the number of rows");
    if (restarts < 1 || max_iters < 1) throw InvalidArgumentError("k-means restarts and iterations must be positive");
    if (!rows.allFinite()) throw InvalidArgumentError("k-means input is not finite");

    KMeansResult best;
    if (k == 1 || rows.cols() == 0) {
        best.labels.assign(static_cast<std::size_t>(rows.rows()), 0);
        best.centers = Eigen::MatrixXd::Zero(k, rows.cols());
        if (rows.cols() > 0) {
            best.centers.row(0) = rows.colwise().mean();
            best.inertia = (rows.rowwise() - best.centers.row(0)).squaredNorm();
        }
        return best;
    }

    std::mt19937_64 rng(seed);
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Lloyd run = run_lloyd(rows, kmeanspp_seed(rows, k, rng), max_iters);
        if (run.inertia < best.inertia) {
            best.labels = std::move(run.labels);
            best.centers = std::move(run.centers);
            best.inertia = run.inertia;
        }
    }
    return best;
}

}  // namespace desknav
