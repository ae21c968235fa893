#include "desknav/clustering.hpp"

#include "desknav/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>

namespace desknav {

namespace {

std::size_t sample_count(double kappa, std::size_t n) {
    // Guard against kappa * n landing a hair below an integer.
    return static_cast<std::size_t>(std::floor(kappa * static_cast<double>(n) + 1e-9));
}

// Hungarian algorithm on a square cost matrix (minimization). Returns the
// column assigned to each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] > 0) assignment[p[j] - 1] = j - 1;
    }
    return assignment;
}

// Refits on the points within 3 robust standard deviations (median absolute
// residual) of the current plane until the inlier set stops changing. The
// reported residual is over the final inliers.
PlaneFit trimmed_refit(const std::vector<Point3>& members, PlaneFit fit) {
    constexpr int kRounds = 8;
    std::vector<double> abs_res(members.size());
    std::vector<Point3> inliers;
    std::size_t previous = members.size();
    for (int round = 0; round < kRounds; ++round) {
        for (std::size_t i = 0; i < members.size(); ++i) abs_res[i] = std::abs(fit.plane.evaluate(members[i]));
        std::vector<double> sorted = abs_res;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
        const double scale = 1.4826 * sorted[sorted.size() / 2];
        const double cut = std::max(3.0 * scale, 1e-9);
        inliers.clear();
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (abs_res[i] <= cut) inliers.push_back(members[i]);
        }
        if (inliers.size() < 3 || 2 * inliers.size() < members.size()) break;
        const PlaneFit next = fit_plane_tls(inliers);
        fit = next;
        if (inliers.size() == previous) break;
        previous = inliers.size();
    }
    return fit;
}

std::optional<PlaneFit> extract_plane(const std::vector<Point3>& members, const ClusteringConfig& config,
                                      std::mt19937_64& rng) {
    if (members.size() < 3) return std::nullopt;
    PlaneFit tls;
    try {
        tls = fit_plane_tls(members);
        if (config.trim_refit) tls = trimmed_refit(members, tls);
    } catch (const DegenerateGeometryError&) {
        return std::nullopt;
    }
    if (config.extraction == PlaneExtraction::tls) return tls;

    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (int attempt = 0; attempt < 32; ++attempt) {
        const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || b == c || a == c) continue;
        try {
            PlaneFit fit;
            fit.plane = fit_plane_three_points(members[a], members[b], members[c]);
            double ss = 0.0;
            for (const auto& p : members) ss += std::pow(fit.plane.evaluate(p), 2);
            fit.rms_residual = std::sqrt(ss / static_cast<double>(members.size()));
            fit.in_plane_spread = tls.in_plane_spread;
            return fit;
        } catch (const DegenerateGeometryError&) {
        }
    }
    return std::nullopt;
}

struct Candidate {
    PlaneFit fit;
    std::vector<std::size_t> support;  ///< cloud indices within the band
};

std::vector<std::size_t> band_members(const std::vector<Point3>& points, const Plane& plane, double band) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (std::abs(plane.evaluate(points[i])) <= band) out.push_back(i);
    }
    return out;
}

std::optional<PlaneFit> fit_subset(const std::vector<Point3>& points, const std::vector<std::size_t>& subset,
                                   const ClusteringConfig& config) {
    std::vector<Point3> selected;
    selected.reserve(subset.size());
    for (auto i : subset) selected.push_back(points[i]);
    try {
        PlaneFit fit = fit_plane_tls(selected);
        if (config.trim_refit) fit = trimmed_refit(selected, fit);
        return fit;
    } catch (const DegenerateGeometryError&) {
        return std::nullopt;
    }
}

// Refit on all cloud points near the plane so the reported plane reflects
// the surface rather than the cluster's share of it.
std::optional<Candidate> support_refit(const std::vector<Point3>& points, const Plane& plane,
                                       const ClusteringConfig& config) {
    Candidate c;
    c.support = band_members(points, plane, config.support_band);
    const auto fit = fit_subset(points, c.support, config);
    if (!fit) return std::nullopt;
    c.fit = *fit;
    c.support = band_members(points, c.fit.plane, config.support_band);
    return c;
}

// Fraction (relative to the support size) of returns whose ray from the
// sensor origin crosses the plane inside the support's in-plane bounding box
// well before the hit. A solid surface there would have stopped those rays.
double see_through_ratio(const std::vector<Point3>& points, const Candidate& cand, double margin) {
    if (cand.support.size() < 3) return 1.0;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (auto i : cand.support) centroid += points[i];
    centroid /= static_cast<double>(cand.support.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (auto i : cand.support) {
        const Eigen::Vector3d d = points[i] - centroid;
        scatter.noalias() += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Eigen::Vector3d a1 = eig.eigenvectors().col(1);
    const Eigen::Vector3d a2 = eig.eigenvectors().col(2);
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector2d hi = -lo;
    for (auto i : cand.support) {
        const Eigen::Vector2d q((points[i] - centroid).dot(a1), (points[i] - centroid).dot(a2));
        lo = lo.cwiseMin(q);
        hi = hi.cwiseMax(q);
    }
    const Eigen::Vector3d n = cand.fit.plane.normal();
    const double zeta = cand.fit.plane.zeta;
    std::size_t count = 0;
    for (const auto& p : points) {
        const double range = p.norm();
        const double denom = n.dot(p);
        if (!(range > 0.0) || std::abs(denom) < 1e-12) continue;
        const double s = -zeta / denom;  // crossing at s * p
        if (s <= 0.0 || s * range >= range - margin) continue;
        const Eigen::Vector3d x = s * p - centroid;
        const Eigen::Vector2d q(x.dot(a1), x.dot(a2));
        if ((q.array() >= lo.array()).all() && (q.array() <= hi.array()).all()) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(cand.support.size());
}

}  // namespace

void ClusteringConfig::validate() const {
    if (!(kappa1 > 0.0 && kappa1 < kappa2 && kappa2 < 0.5)) {
        throw InvalidArgumentError("sampling fractions must satisfy 0 < kappa1 < kappa2 < 0.5");
    }
    if (!(lambda > 0.0)) throw InvalidArgumentError("lambda must be positive");
    if (n_cluster < 1) throw InvalidArgumentError("n_cluster must be positive");
    if (rank < n_cluster) throw InvalidArgumentError("rank must be >= n_cluster");
    if (kmeans_restarts < 1 || kmeans_max_iters < 1) {
        throw InvalidArgumentError("k-means restarts and iterations must be positive");
    }
    if (!(lasso_tol > 0.0) || lasso_max_iters < 1) {
        throw InvalidArgumentError("lasso tolerance and iteration budget must be positive");
    }
    if (!(degree_floor > 0.0)) throw InvalidArgumentError("degree floor must be positive");
    if (merge_angle_deg < 0.0 || merge_offset < 0.0 || !(max_plane_rms > 0.0) || min_plane_spread < 0.0 ||
        !(max_see_through >= 0.0)) {
        throw InvalidArgumentError("plane merge/quality thresholds out of range");
    }
}

DataMatrix homogeneous_embed(const PointCloud& cloud) {
    if (cloud.empty()) throw EmptyInputError("point cloud is empty");
    DataMatrix out;
    out.columns.resize(4, static_cast<Eigen::Index>(cloud.size()));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out.columns.col(static_cast<Eigen::Index>(i)) << p.x(), p.y(), p.z(), 1.0;
    }
    return out;
}

SampledIndices sample_indices(std::size_t n, const ClusteringConfig& config) {
    config.validate();
    const std::size_t n1 = sample_count(config.kappa1, n);
    const std::size_t n2 = sample_count(config.kappa2, n);
    if (n1 < 3) {
        throw InsufficientPointsError("need at least " +
                                      std::to_string(static_cast<long>(std::ceil(3.0 / config.kappa1))) +
                                      " points for a 3-atom dictionary, got " + std::to_string(n));
    }
    // Partial Fisher-Yates: the first n1 + n2 slots are a uniform sample
    // without replacement.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(config.seed);
    for (std::size_t i = 0; i < n1 + n2; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    SampledIndices out;
    out.dictionary.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
    out.represented.assign(perm.begin() + static_cast<std::ptrdiff_t>(n1),
                           perm.begin() + static_cast<std::ptrdiff_t>(n1 + n2));
    return out;
}

SegmentationResult segment_planes(const PointCloud& cloud, const ClusteringConfig& config) {
    config.validate();
    const DataMatrix data = homogeneous_embed(cloud);
    if (!data.columns.allFinite()) throw InvalidArgumentError("point cloud contains non-finite coordinates");
    const SampledIndices indices = sample_indices(cloud.size(), config);

    const CoefficientMatrix codes = sparse_representation(data, indices, config);
    const CoefficientMatrix c_abs = codes.cwiseAbs();
    const Eigen::VectorXd degrees = degree_vector(c_abs);

    const auto n2 = static_cast<int>(indices.represented.size());
    const int k = config.n_cluster;
    if (k > n2) throw InvalidArgumentError("n_cluster exceeds the number of sampled points");
    const int rank = std::min(config.rank, n2);
    const SpectralEmbedding embedding =
        spectral_embedding(c_abs, degrees, k, std::max(rank, k), config.degree_floor);
    Eigen::MatrixXd rows = embedding.vectors;
    if (config.normalize_rows) {
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            const double norm = rows.row(i).norm();
            if (norm > 0.0) rows.row(i) /= norm;
        }
    }
    const KMeansResult km =
        kmeans_rows(rows, k, config.seed, config.kmeans_restarts, config.kmeans_max_iters);

    SegmentationResult result;
    result.labels = km.labels;
    result.sampled_indices = indices.represented;
    result.rank_deficient = embedding.rank_deficient;

    std::vector<std::vector<Point3>> members(static_cast<std::size_t>(k));
    for (int j = 0; j < n2; ++j) {
        members[static_cast<std::size_t>(km.labels[static_cast<std::size_t>(j)])].push_back(
            cloud.points[static_cast<std::size_t>(indices.represented[static_cast<std::size_t>(j)])]);
    }
    // Larger clusters first so merged duplicates keep the better-supported fit.
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return members[static_cast<std::size_t>(a)].size() > members[static_cast<std::size_t>(b)].size();
    });

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const double angle_tol = config.merge_angle_deg * std::numbers::pi / 180.0;
    const auto is_duplicate = [&](const Plane& plane) {
        return std::any_of(result.planes.begin(), result.planes.end(), [&](const Plane& p) {
            return same_plane(p, plane, angle_tol, config.merge_offset);
        });
    };

    if (config.support_band <= 0.0) {
        for (int c : order) {
            const auto fit = extract_plane(members[static_cast<std::size_t>(c)], config, rng);
            if (!fit || fit->rms_residual > config.max_plane_rms || fit->in_plane_spread < config.min_plane_spread) {
                continue;
            }
            if (!is_duplicate(fit->plane)) result.planes.push_back(fit->plane);
        }
        result.status = result.planes.empty() ? SegmentationStatus::no_planes : SegmentationStatus::ok;
        return result;
    }

    // Best-supported surfaces first. A candidate must explain points the
    // accepted planes do not: a plane cutting through accepted surfaces only
    // collects points that already belong to them. Clusters that straddle
    // surfaces get another try once their accepted share is removed.
    std::vector<char> explained(cloud.size(), 0);
    std::vector<char> cluster_done(static_cast<std::size_t>(k), 0);
    const auto is_explained = [&](const Point3& p) {
        return std::any_of(result.planes.begin(), result.planes.end(),
                           [&](const Plane& pl) { return std::abs(pl.evaluate(p)) <= config.support_band; });
    };
    for (int pass = 0; pass < k; ++pass) {
        std::vector<std::pair<int, Candidate>> candidates;
        for (int c : order) {
            if (cluster_done[static_cast<std::size_t>(c)]) continue;
            std::vector<Point3> remaining;
            for (const auto& p : members[static_cast<std::size_t>(c)]) {
                if (!is_explained(p)) remaining.push_back(p);
            }
            const auto fit = extract_plane(remaining, config, rng);
            if (!fit || fit->rms_residual > config.max_plane_rms) continue;
            auto candidate = support_refit(cloud.points, fit->plane, config);
            if (candidate && candidate->fit.rms_residual <= config.max_plane_rms) {
                candidates.emplace_back(c, std::move(*candidate));
            }
        }
        std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
            return a.second.support.size() > b.second.support.size();
        });
        bool accepted = false;
        for (const auto& [cluster, cand] : candidates) {
            if (is_duplicate(cand.fit.plane)) {
                cluster_done[static_cast<std::size_t>(cluster)] = 1;
                continue;
            }
            std::vector<std::size_t> fresh;
            for (auto i : cand.support) {
                if (!explained[i]) fresh.push_back(i);
            }
            if (fresh.size() < 3 || 2 * fresh.size() < cand.support.size()) continue;
            const auto own = fit_subset(cloud.points, fresh, config);
            if (!own || own->in_plane_spread < config.min_plane_spread ||
                std::abs(own->plane.normal().dot(cand.fit.plane.normal())) < std::cos(angle_tol * 5.0)) {
                continue;
            }
            if (see_through_ratio(cloud.points, cand, 3.0 * config.support_band) > config.max_see_through) continue;
            result.planes.push_back(cand.fit.plane);
            for (auto i : cand.support) explained[i] = 1;
            cluster_done[static_cast<std::size_t>(cluster)] = 1;
            accepted = true;
        }
        if (!accepted) break;
    }
    result.status = result.planes.empty() ? SegmentationStatus::no_planes : SegmentationStatus::ok;
    return result;
}

double clustering_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw InvalidArgumentError("label vectors differ in length");
    if (predicted.empty()) return 1.0;
    const int np = *std::max_element(predicted.begin(), predicted.end()) + 1;
    const int nt = *std::max_element(truth.begin(), truth.end()) + 1;
    if (*std::min_element(predicted.begin(), predicted.end()) < 0 ||
        *std::min_element(truth.begin(), truth.end()) < 0) {
        throw InvalidArgumentError("labels must be non-negative");
    }
    const int n = std::max(np, nt);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < predicted.size(); ++i) counts(predicted[i], truth[i]) += 1.0;
    const std::vector<int> match = hungarian(-counts);
    double hits = 0.0;
    for (int r = 0; r < n; ++r) hits += counts(r, match[static_cast<std::size_t>(r)]);
    return hits / static_cast<double>(predicted.size());
}

}  // namespace desknav
