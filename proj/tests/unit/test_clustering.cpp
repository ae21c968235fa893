#include "desknav/clustering.hpp"
#include "desknav/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <random>
#include <set>

using namespace desknav;

namespace {

CoefficientMatrix to_sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

Eigen::MatrixXd random_nonnegative(int rows, int cols, std::mt19937_64& rng, double density = 1.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = u(rng) < density ? u(rng) : 0.0;
    }
    return m;
}

}  // namespace

TEST_CASE("homogeneous_embed appends a row of ones") {
    PointCloud one;
    one.points = {{1, 2, 3}};
    const DataMatrix d = homogeneous_embed(one);
    CHECK(d.columns.col(0) == Eigen::Vector4d(1, 2, 3, 1));

    const PointCloud many = oracle::three_wall_cloud(57, 0.01, 1).cloud;
    const DataMatrix m = homogeneous_embed(many);
    CHECK(m.columns.rows() == 4);
    CHECK(m.columns.cols() == 57);
    CHECK((m.columns.row(3).array() == 1.0).all());
    for (std::size_t i = 0; i < many.size(); ++i) {
        CHECK(m.columns.col(static_cast<Eigen::Index>(i)).head<3>() == many.points[i]);
    }
    CHECK_THROWS_AS(homogeneous_embed(PointCloud{}), EmptyInputError);
}

TEST_CASE("sample_indices sizes, disjointness and determinism") {
    ClusteringConfig cfg;
    const SampledIndices s = sample_indices(1000, cfg);
    CHECK(s.dictionary.size() == 100);
    CHECK(s.represented.size() == 200);
    std::set<int> all(s.dictionary.begin(), s.dictionary.end());
    all.insert(s.represented.begin(), s.represented.end());
    CHECK(all.size() == 300);
    CHECK(*all.begin() >= 0);
    CHECK(*all.rbegin() < 1000);

    const SampledIndices small = sample_indices(30, cfg);
    CHECK(small.dictionary.size() == 3);
    CHECK(small.represented.size() == 6);

    const SampledIndices again = sample_indices(1000, cfg);
    CHECK(again.dictionary == s.dictionary);
    CHECK(again.represented == s.represented);

    cfg.seed = 1;
    CHECK(sample_indices(1000, cfg).dictionary != s.dictionary);

    CHECK_THROWS_AS(sample_indices(29, ClusteringConfig{}), InsufficientPointsError);
}

TEST_CASE("clustering config validation") {
    ClusteringConfig cfg;
    cfg.kappa1 = 0.3;
    cfg.kappa2 = 0.2;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    cfg = {};
    cfg.kappa2 = 0.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    cfg = {};
    cfg.rank = cfg.n_cluster - 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    cfg = {};
    cfg.lambda = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    CHECK_NOTHROW(ClusteringConfig{}.validate());
}

TEST_CASE("the two lambda conventions share a minimizer") {
    ClusteringConfig cfg;
    cfg.lambda = 0.15;
    cfg.lambda_form = LambdaForm::l1_weight;
    CHECK(cfg.data_weight() == doctest::Approx(1.0 / 0.15));
    cfg.lambda_form = LambdaForm::data_weight;
    CHECK(cfg.data_weight() == doctest::Approx(0.15));
}

TEST_CASE("lasso: a target equal to one atom concentrates on it for large lambda") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd dict(4, 12);
    for (Eigen::Index j = 0; j < dict.cols(); ++j) {
        dict.col(j) << n(rng), n(rng), n(rng), 1.0;
    }
    const int i = 5;
    LassoOptions opt;
    opt.lambda = 100.0;
    const LassoResult r = solve_lasso(dict, dict.col(i), opt);
    CHECK(r.converged);
    CHECK(std::abs(r.code[i]) > 0.9 * r.code.lpNorm<1>());

    // Grid over 1-sparse candidates: the best of them is the matching atom.
    double best = std::numeric_limits<double>::infinity();
    int best_atom = -1;
    for (Eigen::Index j = 0; j < dict.cols(); ++j) {
        for (int g = 0; g <= 2000; ++g) {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(dict.cols());
            c[j] = -1.0 + 2.0 * g / 2000.0;
            const double v = oracle::lasso_value(dict, dict.col(i), c, opt.lambda);
            if (v < best) {
                best = v;
                best_atom = static_cast<int>(j);
            }
        }
    }
    CHECK(best_atom == i);
    CHECK(r.objective <= best + 1e-9);
}

TEST_CASE("lasso: tiny data weight gives the zero code") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd dict(4, 10);
    for (Eigen::Index j = 0; j < dict.cols(); ++j) dict.col(j) << n(rng), n(rng), n(rng), 1.0;
    const Eigen::Vector4d target(0.3, -0.2, 1.1, 1.0);
    LassoOptions opt;
    opt.lambda = 1e-6;
    const LassoResult r = solve_lasso(dict, target, opt);
    CHECK(r.code.lpNorm<1>() <= 1e-3);
}

TEST_CASE("lasso agrees with a long-run coordinate descent reference") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd dict(4, 20);
        for (Eigen::Index j = 0; j < dict.cols(); ++j) dict.col(j) << n(rng), n(rng), n(rng), n(rng);
        const Eigen::Vector4d target(n(rng), n(rng), n(rng), n(rng));
        for (double lambda : {0.5, 6.67, 50.0}) {
            LassoOptions opt;
            opt.lambda = lambda;
            opt.tol = 1e-9;
            opt.max_iters = 20000;
            const LassoResult r = solve_lasso(dict, target, opt);
            const Eigen::VectorXd ref = oracle::lasso_coordinate_descent(dict, target, lambda);
            const double ref_value = oracle::lasso_value(dict, target, ref, lambda);
            CHECK(r.objective == doctest::Approx(ref_value).epsilon(1e-6));
            CHECK(r.objective <= oracle::lasso_value(dict, target, Eigen::VectorXd::Zero(20), lambda) + 1e-12);
            CHECK(lasso_fixed_point_residual(dict, target, r.code, lambda, lasso_lipschitz(dict, lambda)) <= 1e-8);
        }
    }
}

TEST_CASE("sparse_representation codes every sampled column to tolerance") {
    const auto data = oracle::three_wall_cloud(300, 0.01, 2);
    ClusteringConfig cfg;
    const DataMatrix b = homogeneous_embed(data.cloud);
    const SampledIndices idx = sample_indices(data.cloud.size(), cfg);
    const CoefficientMatrix c = sparse_representation(b, idx, cfg);
    CHECK(c.rows() == 30);
    CHECK(c.cols() == 60);
    Eigen::MatrixXd dict(4, 30);
    for (int i = 0; i < 30; ++i) dict.col(i) = b.columns.col(idx.dictionary[static_cast<std::size_t>(i)]);
    const double w = cfg.data_weight();
    const double lip = lasso_lipschitz(dict, w);
    const Eigen::MatrixXd dense = c;
    CHECK(dense.allFinite());
    for (int j = 0; j < 60; ++j) {
        const Eigen::Vector4d target = b.columns.col(idx.represented[static_cast<std::size_t>(j)]);
        CHECK(lasso_fixed_point_residual(dict, target, dense.col(j), w, lip) <= cfg.lasso_tol);
    }
}

TEST_CASE("degree_vector matches explicit row sums") {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
    CHECK(degree_vector(to_sparse(id)) == Eigen::Vector2d(1, 1));
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 3);
    CHECK(degree_vector(to_sparse(ones)) == Eigen::Vector3d(6, 6, 6));

    std::mt19937_64 rng(21);
    for (auto [r, c] : {std::pair{5, 8}, std::pair{1, 1}, std::pair{20, 60}, std::pair{7, 3}}) {
        const Eigen::MatrixXd m = random_nonnegative(r, c, rng, 0.6);
        const Eigen::VectorXd expected = (m.transpose() * m).rowwise().sum();
        CHECK((degree_vector(to_sparse(m)) - expected).cwiseAbs().maxCoeff() <= 1e-10);
    }
    CHECK_THROWS_AS(degree_vector(to_sparse(-ones)), InvalidArgumentError);
}

TEST_CASE("spectral_embedding spans the explicit eigenvector space") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd m = random_nonnegative(10, 30, rng);
        for (int k : {1, 2, 3}) {
            const CoefficientMatrix c = to_sparse(m);
            const SpectralEmbedding e = spectral_embedding(c, degree_vector(c), k, k);
            REQUIRE(e.vectors.cols() == k);
            const Eigen::MatrixXd gram = e.vectors.transpose() * e.vectors;
            CHECK((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
            CHECK(oracle::max_principal_angle(e.vectors, oracle::explicit_spectral(m, k)) < 1e-8);
        }
    }
}

TEST_CASE("spectral_embedding separates two identical blocks") {
    Eigen::MatrixXd block(3, 4);
    block << 1, 2, 0, 1, 0, 1, 1, 2, 2, 0, 1, 1;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(6, 8);
    m.topLeftCorner(3, 4) = block;
    m.bottomRightCorner(3, 4) = block;
    const CoefficientMatrix c = to_sparse(m);
    const SpectralEmbedding e = spectral_embedding(c, degree_vector(c), 2, 2);
    CHECK(oracle::max_principal_angle(e.vectors, oracle::explicit_spectral(m, 2)) < 1e-8);
    // Rows normalized by sqrt(degree) are constant within each block.
    const Eigen::VectorXd d = degree_vector(c);
    for (int blk = 0; blk < 2; ++blk) {
        const Eigen::RowVectorXd first = e.vectors.row(4 * blk) / std::sqrt(d[4 * blk]);
        for (int i = 1; i < 4; ++i) {
            const Eigen::RowVectorXd row = e.vectors.row(4 * blk + i) / std::sqrt(d[4 * blk + i]);
            CHECK((row - first).norm() < 1e-8);
        }
    }
}

TEST_CASE("spectral_embedding flags rank deficiency") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 6);
    m.row(0).setOnes();
    const CoefficientMatrix c = to_sparse(m);
    const SpectralEmbedding e = spectral_embedding(c, degree_vector(c), 3, 3);
    CHECK(e.rank_deficient);
    CHECK(e.vectors.cols() < 3);
    CHECK_THROWS_AS(spectral_embedding(c, degree_vector(c), 3, 2), InvalidArgumentError);
}

TEST_CASE("kmeans recovers well separated groups") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.01);
    const int k = 4;
    Eigen::MatrixXd centers(k, 3);
    centers << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
    Eigen::MatrixXd rows(10 * k, 3);
    std::vector<int> truth;
    for (int c = 0; c < k; ++c) {
        for (int r = 0; r < 10; ++r) {
            rows.row(10 * c + r) = centers.row(c) + Eigen::RowVector3d(n(rng), n(rng), n(rng)) * 0.1;
            truth.push_back(c);
        }
    }
    const KMeansResult km = kmeans_rows(rows, k, 1, 5, 100);
    CHECK(oracle::brute_force_accuracy(km.labels, truth, k) == 1.0);
    CHECK(kmeans_rows(rows, k, 1, 5, 100).labels == km.labels);

    const KMeansResult one = kmeans_rows(rows, 1, 1, 5, 100);
    CHECK(std::all_of(one.labels.begin(), one.labels.end(), [](int l) { return l == 0; }));
    CHECK_THROWS_AS(kmeans_rows(rows.topRows(3), 4, 1, 5, 100), InvalidArgumentError);
}

TEST_CASE("clustering_accuracy matches brute-force matching and ignores label names") {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<int> lab(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> truth(40), pred(40);
        for (auto& t : truth) t = lab(rng);
        for (auto& p : pred) p = lab(rng);
        const double acc = clustering_accuracy(pred, truth);
        CHECK(acc == doctest::Approx(oracle::brute_force_accuracy(pred, truth, 4)));
        std::vector<int> renamed = pred;
        for (auto& p : renamed) p = (p + 1) % 4;
        CHECK(clustering_accuracy(renamed, truth) == doctest::Approx(acc));
    }
}

TEST_CASE("segment_planes on three orthogonal walls") {
    const auto data = oracle::three_wall_cloud(1000, 0.01, 100);
    ClusteringConfig cfg;
    cfg.n_cluster = 3;
    cfg.rank = 3;
    const SegmentationResult r = segment_planes(data.cloud, cfg);
    CHECK(r.status == SegmentationStatus::ok);
    CHECK(r.labels.size() == 200);
    CHECK(r.sampled_indices.size() == 200);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](int l) { return l >= 0 && l < 3; }));
    REQUIRE(r.planes.size() == 3);
    std::vector<int> truth;
    for (int i : r.sampled_indices) truth.push_back(data.labels[static_cast<std::size_t>(i)]);
    CHECK(clustering_accuracy(r.labels, truth) >= 0.9);
    for (const auto& n : data.normals) {
        double best = 10.0;
        for (const auto& p : r.planes) {
            CHECK(p.normal().norm() == doctest::Approx(1.0));
            best = std::min(best, std::acos(std::min(1.0, std::abs(p.normal().dot(n)))));
        }
        CHECK(best < 2.0 * std::numbers::pi / 180.0);
    }

    const SegmentationResult again = segment_planes(data.cloud, cfg);
    CHECK(again.labels == r.labels);
    CHECK(again.sampled_indices == r.sampled_indices);
}

TEST_CASE("segment_planes on a single plane with K = 1") {
    const PointCloud flat = oracle::flat_cloud(400, -1.0, 3.0, 6);
    ClusteringConfig cfg;
    cfg.n_cluster = 1;
    cfg.rank = 1;
    const SegmentationResult r = segment_planes(flat, cfg);
    REQUIRE(r.planes.size() == 1);
    const Plane& p = r.planes[0];
    CHECK(std::abs(std::abs(p.gamma) - 1.0) < 1e-9);
    CHECK(point_plane_distance(p, {0, 0, -1}) < 1e-9);
}

TEST_CASE("segment_planes rejects too few points") {
    const PointCloud flat = oracle::flat_cloud(20, -1.0, 3.0, 6);
    CHECK_THROWS_AS(segment_planes(flat, ClusteringConfig{}), InsufficientPointsError);
    CHECK_THROWS_AS(segment_planes(PointCloud{}, ClusteringConfig{}), EmptyInputError);
}

TEST_CASE("three-point extraction also recovers the walls") {
    const auto data = oracle::three_wall_cloud(1000, 0.0, 100);
    ClusteringConfig cfg;
    cfg.n_cluster = 3;
    cfg.rank = 3;
    cfg.extraction = PlaneExtraction::three_point;
    const SegmentationResult r = segment_planes(data.cloud, cfg);
    CHECK(r.planes.size() >= 2);
    for (const auto& p : r.planes) CHECK(p.normal().norm() == doctest::Approx(1.0));
}
