#include "desknav/clustering.hpp"

#include "desknav/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <random>

namespace desknav {

namespace {

// Below this dictionary size the n1 x n1 Gram matrix is decomposed densely.
constexpr Eigen::Index kDenseGramLimit = 96;
constexpr double kRitzTol = 1e-11;
constexpr double kRankTol = 1e-10;

struct EigenPairs {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // n1 x count
};

EigenPairs dense_top_eigen(const Eigen::MatrixXd& gram, Eigen::Index count) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::Index n = gram.rows();
    count = std::min(count, n);
    EigenPairs out;
    out.values = eig.eigenvalues().tail(count).reverse();
    out.vectors = eig.eigenvectors().rightCols(count).rowwise().reverse();
    return out;
}

// Orthogonalizes `block` against `basis` (two passes) and within itself.
// Columns that vanish are refilled with fresh random directions so the
// Krylov space keeps growing after an invariant subspace is found.
void orthonormalize_block(const Eigen::MatrixXd& basis, Eigen::MatrixXd& block,
                          std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
        for (int attempt = 0; attempt < 4; ++attempt) {
            Eigen::VectorXd v = block.col(j);
            const double before = v.norm();
            for (int pass = 0; pass < 2; ++pass) {
                if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
                if (j > 0) v -= block.leftCols(j) * (block.leftCols(j).transpose() * v);
            }
            const double after = v.norm();
            if (before > 0.0 && after > 1e-10 * before) {
                block.col(j) = v / after;
                break;
            }
            for (Eigen::Index i = 0; i < v.size(); ++i) block(i, j) = normal(rng);
        }
    }
}

// Block Krylov (block Lanczos with full reorthogonalization) for the
// largest eigenpairs of a symmetric positive semidefinite sparse matrix.
EigenPairs krylov_top_eigen(const Eigen::SparseMatrix<double>& gram, Eigen::Index count) {
    const Eigen::Index n = gram.rows();
    count = std::min(count, n);
    const Eigen::Index block_size = std::min<Eigen::Index>(n, count + 8);

    std::mt19937_64 rng(0x5eed5eedULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd block(n, block_size);
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = normal(rng);

    Eigen::MatrixXd basis(n, 0);
    Eigen::MatrixXd image(n, 0);  // gram * basis
    orthonormalize_block(basis, block, rng);

    while (true) {
        const Eigen::MatrixXd block_image = gram * block;
        const Eigen::Index m0 = basis.cols();
        basis.conservativeResize(n, m0 + block.cols());
        basis.rightCols(block.cols()) = block;
        image.conservativeResize(n, m0 + block.cols());
        image.rightCols(block.cols()) = block_image;
        const Eigen::Index m = basis.cols();

        Eigen::MatrixXd projected = basis.transpose() * image;
        projected = 0.5 * (projected + projected.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(projected);
        const Eigen::Index take = std::min(count, m);
        const Eigen::VectorXd theta = eig.eigenvalues().tail(take).reverse();
        const Eigen::MatrixXd w = eig.eigenvectors().rightCols(take).rowwise().reverse();

        const double scale = std::max(theta.size() > 0 ? std::abs(theta[0]) : 0.0, 1e-300);
        bool converged = take == count;
        if (converged && m < n) {
            const Eigen::MatrixXd ritz = basis * w;
            const Eigen::MatrixXd resid = image * w - ritz * theta.asDiagonal();
            for (Eigen::Index i = 0; i < take; ++i) {
                if (resid.col(i).norm() > kRitzTol * scale) {
                    converged = false;
                    break;
                }
            }
        }
        if (converged || m >= n) {
            EigenPairs out;
            out.values = theta;
            out.vectors = basis * w;
            return out;
        }

        const Eigen::Index next = std::min(block_size, n - m);
        block = block_image.leftCols(next);
        orthonormalize_block(basis, block, rng);
    }
}

}  // namespace

Eigen::VectorXd degree_vector(const CoefficientMatrix& c_abs) {
    // eta = sum of columns; d_j = c_j . eta
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(c_abs.rows());
    for (Eigen::Index j = 0; j < c_abs.outerSize(); ++j) {
        for (CoefficientMatrix::InnerIterator it(c_abs, j); it; ++it) {
            if (it.value() < 0.0) throw InvalidArgumentError("degree_vector expects |C| (non-negative entries)");
            eta[it.row()] += it.value();
        }
    }
    Eigen::VectorXd degrees = Eigen::VectorXd::Zero(c_abs.cols());
    for (Eigen::Index j = 0; j < c_abs.outerSize(); ++j) {
        double d = 0.0;
        for (CoefficientMatrix::InnerIterator it(c_abs, j); it; ++it) d += it.value() * eta[it.row()];
        degrees[j] = d;
    }
    return degrees;
}

SpectralEmbedding spectral_embedding(const CoefficientMatrix& c_abs,
                                     const Eigen::VectorXd& degrees, int k, int rank,
                                     double degree_floor) {
    if (k < 1) throw InvalidArgumentError("spectral embedding needs K >= 1");
    if (rank < k) throw InvalidArgumentError("rank parameter must be >= K");
    if (degrees.size() != c_abs.cols()) throw InvalidArgumentError("degree vector length mismatch");

    const Eigen::Index n1 = c_abs.rows();
    const Eigen::Index n2 = c_abs.cols();
    Eigen::VectorXd inv_sqrt(n2);
    for (Eigen::Index j = 0; j < n2; ++j) {
        inv_sqrt[j] = 1.0 / std::sqrt(std::max(degrees[j], degree_floor));
    }
    const CoefficientMatrix scaled = c_abs * inv_sqrt.asDiagonal();
    const Eigen::SparseMatrix<double> gram = scaled * scaled.transpose();

    const Eigen::Index want = std::min<Eigen::Index>(rank, std::min(n1, n2));
    EigenPairs pairs;
    if (n1 <= kDenseGramLimit) {
        pairs = dense_top_eigen(Eigen::MatrixXd(gram), want);
    } else {
        pairs = krylov_top_eigen(gram, want);
    }

    SpectralEmbedding out;
    const double top = pairs.values.size() > 0 ? std::max(pairs.values[0], 0.0) : 0.0;
    const double sigma_top = std::sqrt(top);
    Eigen::Index available = 0;
    while (available < pairs.values.size() && sigma_top > 0.0 &&
           std::sqrt(std::max(pairs.values[available], 0.0)) > kRankTol * sigma_top) {
        ++available;
    }
    out.singular_values = pairs.values.head(available).cwiseMax(0.0).cwiseSqrt();
    const Eigen::Index use = std::min<Eigen::Index>(k, available);
    out.rank_deficient = use < k;

    // Right singular vectors: P = M^T U Sigma^{-1}.
    Eigen::MatrixXd v = scaled.transpose() * pairs.vectors.leftCols(use);
    for (Eigen::Index i = 0; i < use; ++i) v.col(i) /= out.singular_values[i];
    if (use > 0) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n2, use);
        const Eigen::MatrixXd r = qr.matrixQR().topRows(use).triangularView<Eigen::Upper>();
        for (Eigen::Index i = 0; i < use; ++i) {
            if (r(i, i) < 0.0) q.col(i) = -q.col(i);
        }
        v = std::move(q);
    }
    out.vectors = std::move(v);
    return out;
}

}  // namespace desknav
