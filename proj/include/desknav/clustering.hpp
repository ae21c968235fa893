#pragma once

#include "desknav/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <vector>

namespace desknav {

enum class PlaneExtraction { tls, three_point };

/// How `lambda` enters the per-column problem.
/// data_weight: min ||c||_1 + (lambda/2) ||b - D c||^2.
/// l1_weight:   min (1/2) ||b - D c||^2 + lambda ||c||_1, the convention of
///              common sparse-coding packages; same minimizer as data_weight
///              with weight 1/lambda.
enum class LambdaForm { l1_weight, data_weight };

struct ClusteringConfig {
    double kappa1 = 0.1;   ///< dictionary sampling fraction
    double kappa2 = 0.2;   ///< represented-point sampling fraction
    double lambda = 0.15;  ///< sparse-code regularization, see LambdaForm
    LambdaForm lambda_form = LambdaForm::l1_weight;
    int n_cluster = 10;    ///< K
    int rank = 10;         ///< singular triplets retained, >= K
    std::uint64_t seed = 0;
    int kmeans_restarts = 5;
    int kmeans_max_iters = 100;
    double lasso_tol = 1e-6;
    int lasso_max_iters = 500;

    PlaneExtraction extraction = PlaneExtraction::tls;
    double degree_floor = 1e-12;
    double merge_angle_deg = 1.0;
    double merge_offset = 0.05;
    /// Refit each cluster's plane on its robust inliers (3 x scaled MAD).
    bool trim_refit = true;
    /// Clusters whose TLS residual exceeds this are not reported as planes.
    double max_plane_rms = 0.05;
    /// Each accepted cluster plane is refit on every cloud point within this
    /// band (m); <= 0 keeps the cluster-only fit.
    double support_band = 0.03;
    /// Planes whose supporting points spread less than this (m) along the
    /// narrower in-plane axis are treated as lines and not reported.
    double min_plane_spread = 0.25;
    /// Planes are rejected when more returns than this fraction of their
    /// support lie behind them, seen through the supported region.
    double max_see_through = 0.2;
    /// Scale rows of the spectral embedding to unit length before k-means.
    bool normalize_rows = true;

    /// Weight of the data-fit term in ||c||_1 + (w/2) ||b - D c||^2.
    double data_weight() const { return lambda_form == LambdaForm::data_weight ? lambda : 1.0 / lambda; }

    /// Throws InvalidArgumentError when a field is out of range.
    void validate() const;
};

/// Homogeneous-embedded points, one column (x, y, z, 1) per point.
struct DataMatrix {
    Eigen::Matrix4Xd columns;

    Eigen::Index size() const noexcept { return columns.cols(); }
};

/// n1 x n2; column j is the sparse code of sampled point I2[j] over the
/// dictionary points I1.
using CoefficientMatrix = Eigen::SparseMatrix<double>;

struct SampledIndices {
    std::vector<int> dictionary;  ///< I1
    std::vector<int> represented; ///< I2
};

DataMatrix homogeneous_embed(const PointCloud& cloud);

/// Disjoint uniform samples without replacement: |I1| = floor(kappa1 n),
/// |I2| = floor(kappa2 n). Throws InsufficientPointsError when |I1| < 3.
SampledIndices sample_indices(std::size_t n, const ClusteringConfig& config);

// ---------------------------------------------------------------------------
// Sparse coding

struct LassoOptions {
    double lambda = 0.15;
    double tol = 1e-6;
    int max_iters = 500;
    /// Upper bound on the Lipschitz constant of the smooth part; computed
    /// from the dictionary when <= 0.
    double lipschitz = 0.0;
    /// Initial working-set size; 0 solves over the whole dictionary.
    int working_set = 16;
    /// Try the exact regularization path first; proximal iterations take over
    /// when it fails or misses the tolerance.
    bool homotopy = true;
};

struct LassoResult {
    Eigen::VectorXd code;
    double residual = 0.0;   ///< fixed-point residual of the full problem
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Objective ||c||_1 + (lambda/2) ||target - dictionary c||^2.
double lasso_objective(const Eigen::Ref<const Eigen::MatrixXd>& dictionary,
                       const Eigen::Ref<const Eigen::VectorXd>& target,
                       const Eigen::Ref<const Eigen::VectorXd>& code, double lambda);

/// Fixed-point residual L * ||c - soft(c - grad/L, 1/L)|| with step 1/L.
double lasso_fixed_point_residual(const Eigen::Ref<const Eigen::MatrixXd>& dictionary,
                                  const Eigen::Ref<const Eigen::VectorXd>& target,
                                  const Eigen::Ref<const Eigen::VectorXd>& code,
                                  double lambda, double lipschitz);

/// lambda * largest eigenvalue of dictionary * dictionary^T.
double lasso_lipschitz(const Eigen::Ref<const Eigen::MatrixXd>& dictionary, double lambda);

/// Minimizes ||c||_1 + (lambda/2) ||target - dictionary c||^2.
/// The regularization path is followed first (with an active-set polish);
/// if that misses tol, accelerated proximal gradient with backtracking and
/// adaptive restart runs over a growing working set of atoms until the
/// full-problem fixed-point residual drops below tol.
LassoResult solve_lasso(const Eigen::Ref<const Eigen::MatrixXd>& dictionary,
                        const Eigen::Ref<const Eigen::VectorXd>& target,
                        const LassoOptions& options);

/// Codes every I2 column of B against the I1 dictionary. Throws
/// ConvergenceError (carrying the worst residual) if any column fails.
CoefficientMatrix sparse_representation(const DataMatrix& data, const SampledIndices& indices,
                                        const ClusteringConfig& config);

// ---------------------------------------------------------------------------
// Spectral step

/// d_i = |c_i| . eta with eta = sum_j |c_j|; equals the row sums of the
/// implicit similarity |C|^T |C| without forming it.
Eigen::VectorXd degree_vector(const CoefficientMatrix& c_abs);

struct SpectralEmbedding {
    Eigen::MatrixXd vectors;           ///< n2 x k, orthonormal columns
    Eigen::VectorXd singular_values;   ///< descending, length min(r, available)
    bool rank_deficient = false;       ///< fewer than K usable singular vectors
};

/// Top-K right singular vectors of |C| D^{-1/2}. Degrees below
/// degree_floor are clamped. Never forms an n2 x n2 matrix.
SpectralEmbedding spectral_embedding(const CoefficientMatrix& c_abs,
                                     const Eigen::VectorXd& degrees, int k, int rank,
                                     double degree_floor = 1e-12);

struct KMeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centers;  ///< K x dim
    double inertia = 0.0;     ///< within-cluster sum of squares
};

/// k-means++ seeding and Lloyd iterations on the rows of `rows`; the
/// restart with the lowest inertia wins.
KMeansResult kmeans_rows(const Eigen::MatrixXd& rows, int k, std::uint64_t seed,
                         int restarts, int max_iters);

// ---------------------------------------------------------------------------

enum class SegmentationStatus { ok, no_planes };

struct SegmentationResult {
    std::vector<int> labels;           ///< per sampled point, length n2
    std::vector<Plane> planes;         ///< <= K, unit-normalized, body frame
    std::vector<int> sampled_indices;  ///< I2
    SegmentationStatus status = SegmentationStatus::ok;
    bool rank_deficient = false;
};

SegmentationResult segment_planes(const PointCloud& cloud, const ClusteringConfig& config);

/// Fraction of points whose predicted label maps to the true label under the
/// best one-to-one matching of cluster ids.
double clustering_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace desknav
