#include "desknav/errors.hpp"
#include "desknav/nmpc.hpp"
#include "desknav/panoc.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace desknav;

namespace {

Eigen::VectorXd column(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

StateVector state_at(const Eigen::Vector3d& p) {
    StateVector x = StateVector::Zero();
    x.head<3>() = p;
    return x;
}

Eigen::VectorXd hover_inputs(int n, double g = 9.81) {
    return stack_inputs(std::vector<ControlInput>(static_cast<std::size_t>(n), ControlInput{g, 0, 0}));
}

Eigen::VectorXd random_inputs(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> t(5.0, 15.0);
    std::uniform_real_distribution<double> a(-0.4, 0.4);
    Eigen::VectorXd u(3 * n);
    for (int j = 0; j < n; ++j) u.segment<3>(3 * j) << t(rng), a(rng), a(rng);
    return u;
}

}  // namespace

TEST_CASE("entropy examples") {
    CHECK(shannon_entropy(Eigen::VectorXd::Constant(10, 0.7)) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(std::abs(shannon_entropy(Eigen::VectorXd::Constant(10, 0.7)) - 2.302585) < 1e-6);
    Eigen::VectorXd spike = Eigen::VectorXd::Zero(10);
    spike[3] = 1.0;
    CHECK(shannon_entropy(spike) <= 1e-6);
    std::vector<double> mixed(9, 1.0);
    mixed.push_back(10.0);
    CHECK(shannon_entropy(column(mixed)) == doctest::Approx(oracle::entropy(mixed)).epsilon(1e-12));
    CHECK(std::abs(shannon_entropy(column(mixed)) - 1.733) < 0.01);
    CHECK(shannon_entropy(Eigen::VectorXd::Zero(10)) == doctest::Approx(std::log(10.0)));
}

TEST_CASE("entropy bounds and scale invariance") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + trial % 10;
        Eigen::VectorXd s(n);
        for (int i = 0; i < n; ++i) s[i] = u(rng);
        const double h = shannon_entropy(s);
        CHECK(h >= 0.0);
        CHECK(h <= std::log(static_cast<double>(n)) + 1e-12);
        std::vector<double> sv(s.data(), s.data() + n);
        CHECK(h == doctest::Approx(oracle::entropy(sv)).epsilon(1e-12));
        CHECK(shannon_entropy(1000.0 * s) == doctest::Approx(h).epsilon(1e-9));
    }
    Eigen::VectorXd s(4);
    s << 0.25, 0.5, 1.0, 2.0;
    CHECK(shannon_entropy(1024.0 * s) == doctest::Approx(shannon_entropy(s)).epsilon(1e-12));
}

TEST_CASE("variance window keeps the newest n_max samples") {
    VarianceWindow w(3);
    CHECK(w.empty());
    for (int k = 0; k < 5; ++k) w.push(Vector6::Constant(k));
    CHECK(w.size() == 3);
    CHECK(w.samples().front()[0] == 2.0);
    CHECK(w.samples().back()[0] == 4.0);
    CHECK_THROWS_AS(w.push(Vector6::Constant(-1.0)), InvalidArgumentError);
    CHECK_THROWS_AS(entropy_weights(VarianceWindow(3), Eigen::Vector2d(5, 5)), InvalidArgumentError);
}

TEST_CASE("entropy weights de-weight a position spike") {
    VarianceWindow w(10);
    for (int k = 0; k < 9; ++k) w.push(Vector6::Constant(0.01));
    Vector6 spike = Vector6::Constant(0.01);
    spike.head<3>().setConstant(1.5 * 1.5);
    w.push(spike);
    const WeightVector q = entropy_weights(w, Eigen::Vector2d(5, 5));
    CHECK(q[0] < q[3]);
    CHECK(q[3] == doctest::Approx(std::log(10.0)));
    CHECK(q[6] == 5.0);
    CHECK(q[7] == 5.0);

    VarianceWindow zeros(10);
    for (int k = 0; k < 10; ++k) zeros.push(Vector6::Zero());
    const WeightVector z = entropy_weights(zeros, Eigen::Vector2d(5, 5));
    for (int i = 0; i < 6; ++i) CHECK(z[i] == doctest::Approx(std::log(10.0)));
    CHECK(fixed_weights(10, Eigen::Vector2d(5, 5)).isApprox(z));
}

TEST_CASE("objective vanishes at hover and ignores distant planes") {
    const NmpcConfig cfg;
    const ModelParams model;
    const MavState x0;
    const WeightVector q = fixed_weights(10, cfg.q_attitude);
    const ControlInput hover{model.g, 0, 0};
    const Eigen::VectorXd u = hover_inputs(cfg.horizon);

    const NmpcObjective free(x0, x0.vector(), hover, q, {}, cfg, model);
    CHECK(free.value(u) == 0.0);
    Eigen::VectorXd g;
    free.value_and_gradient(u, g);
    CHECK(g.norm() < 1e-8);

    const NmpcObjective below(x0, x0.vector(), hover, q, {Plane{0, 0, 1, 1.5}}, cfg, model);
    CHECK(below.value(u) == 0.0);
}

TEST_CASE("objective penalty for a plane half a meter ahead") {
    const NmpcConfig cfg;
    const ModelParams model;
    const MavState x0;
    const WeightVector q = fixed_weights(10, cfg.q_attitude);
    const NmpcObjective obj(x0, x0.vector(), ControlInput{model.g, 0, 0}, q, {Plane{1, 0, 0, -0.5}}, cfg, model);
    const double expected = 0.5 * cfg.penalty_init * cfg.horizon * 0.25;
    CHECK(obj.value(hover_inputs(cfg.horizon)) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(obj.violation(hover_inputs(cfg.horizon)).collision == doctest::Approx(0.5));
}

TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 rng(99);
    const ModelParams model;
    std::normal_distribution<double> n(0.0, 0.1);
    int checked = 0;
    for (int horizon : {3, 5, 10}) {
        NmpcConfig cfg;
        cfg.horizon = horizon;
        for (bool planes_on : {false, true}) {
            for (int trial = 0; trial < 17; ++trial) {
                MavState x0;
                x0.p = {n(rng), n(rng), 1.5 + n(rng)};
                x0.v = {n(rng), n(rng), n(rng)};
                x0.phi = n(rng);
                x0.theta = n(rng);
                StateVector ref = state_at({1.0, -0.5, 1.5});
                WeightVector q;
                q << 2.3, 1.1, 0.7, 2.0, 0.4, 1.9, 5, 5;
                std::vector<Plane> planes;
                if (planes_on) planes = {Plane{1, 0, 0, -0.4}, Plane{0, -1, 0, -0.6}, Plane{0, 0, 1, 0.8}};
                NmpcObjective obj(x0, ref, ControlInput{9.0, 0.05, -0.05}, q, planes, cfg, model);
                obj.set_penalty(planes_on ? 250.0 : cfg.penalty_init);
                const Eigen::VectorXd u = random_inputs(horizon, rng);
                Eigen::VectorXd g;
                obj.value_and_gradient(u, g);
                const Eigen::VectorXd fd =
                    oracle::finite_difference([&](const Eigen::VectorXd& z) { return obj.value(z); }, u, 1e-6);
                CHECK((g - fd).norm() / std::max(fd.norm(), 1.0) < 1e-5);
                ++checked;
            }
        }
    }
    CHECK(checked >= 100);
}

TEST_CASE("doubling Q_u doubles the actuation gradient") {
    // With every other weight zeroed the gradient is the actuation term alone.
    NmpcConfig cfg;
    cfg.horizon = 5;
    cfg.q_du.setZero();
    cfg.dphi_max = cfg.dtheta_max = 10.0;
    const ModelParams model;
    const MavState x0;
    const WeightVector q = WeightVector::Zero();
    std::mt19937_64 rng(4);
    const Eigen::VectorXd u = random_inputs(5, rng);
    Eigen::VectorXd g1, g2;
    NmpcObjective(x0, x0.vector(), ControlInput{model.g, 0, 0}, q, {}, cfg, model).value_and_gradient(u, g1);
    cfg.q_u *= 2.0;
    NmpcObjective(x0, x0.vector(), ControlInput{model.g, 0, 0}, q, {}, cfg, model).value_and_gradient(u, g2);
    CHECK(g1.norm() > 0.0);
    CHECK((g2 - 2.0 * g1).norm() <= 1e-12 * g2.norm());
}

TEST_CASE("panoc on quadratics and Rosenbrock") {
    PanocOptions opt;
    opt.tol = 1e-8;
    opt.max_iters = 2000;
    const int n = 12;
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -1.0);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 1.0);

    auto sq = [](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        g = 2.0 * u;
        return u.squaredNorm();
    };
    const PanocResult a = panoc_minimize(sq, lo, hi, Eigen::VectorXd::LinSpaced(n, -1.0, 0.9), opt);
    CHECK(a.converged);
    CHECK(a.u.norm() < 1e-6);

    auto shifted = [](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        const Eigen::VectorXd d = u - Eigen::VectorXd::Constant(u.size(), 2.0);
        g = 2.0 * d;
        return d.squaredNorm();
    };
    const PanocResult b = panoc_minimize(shifted, lo, hi, Eigen::VectorXd::Zero(n), opt);
    CHECK(b.converged);
    CHECK((b.u - Eigen::VectorXd::Ones(n)).norm() < 1e-9);
    CHECK(((b.u.array() >= lo.array()) && (b.u.array() <= hi.array())).all());

    auto rosen = [](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        const double x = u[0], y = u[1];
        g.resize(2);
        g[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
        g[1] = 200.0 * (y - x * x);
        return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
    };
    PanocOptions ro = opt;
    ro.max_iters = 5000;
    const PanocResult r = panoc_minimize(rosen, Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, 2),
                                         Eigen::Vector2d(-1.2, 1.0), ro);
    CHECK(std::abs(r.u[0] - 1.0) < 1e-4);
    CHECK(std::abs(r.u[1] - 1.0) < 1e-4);
}

TEST_CASE("panoc flags an exhausted budget and stays in the box") {
    PanocOptions opt;
    opt.tol = 1e-14;
    opt.max_iters = 3;
    auto rosen = [](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        const double x = u[0], y = u[1];
        g.resize(2);
        g[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
        g[1] = 200.0 * (y - x * x);
        return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
    };
    const PanocResult r = panoc_minimize(rosen, Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, 2),
                                         Eigen::Vector2d(-1.2, 1.0), opt);
    CHECK_FALSE(r.converged);
    CHECK((r.u.array().abs() <= 2.0).all());
}

TEST_CASE("solve_nmpc at hover returns the hover input") {
    const NmpcConfig cfg;
    const ModelParams model;
    MavState x0;
    x0.p = {0, 0, 1.5};
    const NmpcSolution sol = solve_nmpc(x0, x0.vector(), ControlInput{model.g, 0, 0},
                                        fixed_weights(10, cfg.q_attitude), {}, hover_inputs(cfg.horizon), cfg, model);
    CHECK(sol.converged);
    CHECK(sol.cost < 1e-6);
    REQUIRE(sol.u_star.size() == static_cast<std::size_t>(cfg.horizon));
    for (const auto& u : sol.u_star) CHECK((u.vector() - InputVector(model.g, 0, 0)).norm() < 1e-6);
}

TEST_CASE("solve_nmpc keeps clear of a plane between the MAV and the reference") {
    const NmpcConfig cfg;
    const ModelParams model;
    const MavState x0;
    const Plane wall{1, 0, 0, -1.5};
    const StateVector ref = state_at({2.5, 0, 0});
    const NmpcSolution sol = solve_nmpc(x0, ref, ControlInput{model.g, 0, 0}, fixed_weights(10, cfg.q_attitude),
                                        {wall}, hover_inputs(cfg.horizon), cfg, model);
    CHECK(sol.converged);
    const auto xs = rollout(x0, sol.u_star, model);
    for (const auto& x : xs) CHECK(point_plane_distance(wall, x.p) >= cfg.d_s - cfg.constraint_tol);
    for (const auto& u : sol.u_star) {
        CHECK(((u.vector().array() >= cfg.u_min.array()) && (u.vector().array() <= cfg.u_max.array())).all());
    }
    CHECK(xs.back().p.x() > 0.2);  // it still moves toward the reference
}

TEST_CASE("collision penalties depend only on displacement") {
    const NmpcConfig cfg;
    const ModelParams model;
    MavState a;
    a.v = {0.4, 0.1, 0};
    MavState b = a;
    const Eigen::Vector3d shift(3.0, -7.0, 2.0);
    b.p += shift;
    const std::vector<Plane> planes = {Plane{1, 0, 0, -0.8}, Plane{0, 1, 0, -1.2}};
    std::mt19937_64 rng(5);
    const Eigen::VectorXd u = random_inputs(cfg.horizon, rng);
    const WeightVector q = WeightVector::Zero();
    const NmpcObjective oa(a, state_at({1, 0, 0}), ControlInput{model.g, 0, 0}, q, planes, cfg, model);
    StateVector ref_b = state_at(Eigen::Vector3d(1, 0, 0) + shift);
    const NmpcObjective ob(b, ref_b, ControlInput{model.g, 0, 0}, q, planes, cfg, model);
    CHECK(oa.value(u) == doctest::Approx(ob.value(u)).epsilon(1e-12));
    CHECK(oa.violation(u).collision == doctest::Approx(ob.violation(u).collision).epsilon(1e-12));
}

TEST_CASE("penalty rounds do not increase the violation on a crowded box") {
    NmpcConfig cfg;
    const ModelParams model;
    const MavState x0;
    const std::vector<Plane> planes = {Plane{1, 0, 0, -1.2}, Plane{-1, 0, 0, -1.2}, Plane{0, 1, 0, -1.2}};
    double previous = std::numeric_limits<double>::infinity();
    for (int rounds = 1; rounds <= 4; ++rounds) {
        cfg.penalty_max = cfg.penalty_init * std::pow(cfg.penalty_factor, rounds - 1);
        cfg.constraint_tol = 0.0;
        const NmpcSolution s = solve_nmpc(x0, state_at({3, 0, 0}), ControlInput{model.g, 0, 0},
                                          fixed_weights(10, cfg.q_attitude), planes, hover_inputs(cfg.horizon), cfg,
                                          model);
        CHECK(s.max_constraint_violation <= previous + 1e-9);
        previous = s.max_constraint_violation;
    }
}

TEST_CASE("control_step at the reference with planes around holds hover") {
    const NmpcConfig cfg;
    const ModelParams model;
    NmpcController ctrl(cfg, model);
    MavState x;
    x.p = {0, 0, 1.5};
    const std::vector<Plane> planes = {Plane{1, 0, 0, -2}, Plane{0, 1, 0, -2}, Plane{0, 0, 1, 1.5}};
    for (int k = 0; k < 10; ++k) {
        const auto step = ctrl.control_step(x, Vector6::Zero(), x.vector(), planes);
        CHECK((step.u.vector() - InputVector(model.g, 0, 0)).norm() < 1e-4);
        if (k == 9) {
            for (int i = 0; i < 6; ++i) CHECK(step.weights[i] == doctest::Approx(std::log(10.0)));
        }
    }
}

TEST_CASE("nmpc config validation") {
    NmpcConfig c;
    c.horizon = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgumentError);
    c = {};
    c.penalty_factor = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgumentError);
    c = {};
    c.u_min[1] = 0.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgumentError);
}
