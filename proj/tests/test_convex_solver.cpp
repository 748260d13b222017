#include <catch2/catch.hpp>

#include "cvxq/convex_solver.hpp"
#include "test_support.hpp"

using namespace cvxq;
using cvxq::testing::make_random_instance;
using cvxq::testing::scalar_instance;

TEST_CASE("group soft threshold closed form") {
    Eigen::VectorXd z(2);
    z << 3.0, 4.0;
    Eigen::VectorXd r = group_soft_threshold(z, 2.5);
    CHECK(r[0] == Approx(1.5).epsilon(1e-15));
    CHECK(r[1] == Approx(2.0).epsilon(1e-15));
    CHECK(group_soft_threshold(z, 5.0).norm() == 0.0);
    CHECK(group_soft_threshold(Eigen::VectorXd::Zero(3), 0.7).norm() == 0.0);
}

TEST_CASE("prox is nonexpansive") {
    RngStream rng(31);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd a(3), b(3);
        for (int j = 0; j < 3; ++j) {
            a[j] = 3.0 * rng.normal();
            b[j] = 3.0 * rng.normal();
        }
        const double kappa = rng.uniform(0.0, 2.0);
        CHECK((group_soft_threshold(a, kappa) - group_soft_threshold(b, kappa)).norm() <=
              (a - b).norm() + 1e-12);
    }
}

TEST_CASE("assemble lays out blocks and dimensions exactly") {
    const int T = 5, d = 3, P = 4;
    RngStream rng(3);
    Eigen::MatrixXd X(T, d);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
    RngStream g(4);
    const PatternSet masks = sample_patterns(X, P, g);
    REQUIRE(masks.size() == P);
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(T);
    const ConvexProblem prob = assemble(X, y, masks, 0.5);
    CHECK(prob.A.rows() == T);
    CHECK(prob.A.cols() == 2 * d * P);
    CHECK(prob.G.rows() == 2 * P * T);
    CHECK(prob.G.cols() == 2 * d * P);
    CHECK(prob.groups() == 2 * P);

    // second block of P groups negates the first
    CHECK((prob.A.leftCols(d * P) + prob.A.rightCols(d * P)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all-ones mask gives the constraint block X, all-zeros gives -X") {
    Eigen::MatrixXd X(3, 2);
    X << 1, 2, -1, 0.5, 0.25, -2;
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(3);

    PatternSet ones;
    ones.patterns.push_back(ActivationPattern{{1, 1, 1}});
    const ConvexProblem p1 = assemble(X, y, ones, 1.0);
    CHECK((p1.G.block(0, 0, 3, 2) - X).cwiseAbs().maxCoeff() == 0.0);

    PatternSet zeros;
    zeros.patterns.push_back(ActivationPattern{{0, 0, 0}});
    const ConvexProblem p0 = assemble(X, y, zeros, 1.0);
    CHECK((p0.G.block(0, 0, 3, 2) + X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rho_T = 0 is rejected") {
    Eigen::MatrixXd X(1, 1);
    X << 1.0;
    PatternSet m;
    m.patterns.push_back(ActivationPattern{{1}});
    CHECK_THROWS_AS(assemble(X, Eigen::VectorXd::Ones(1), m, 0.0), std::invalid_argument);
}

TEST_CASE("scalar instance solves to the soft-threshold closed form") {
    const ConvexProblem prob = scalar_instance(2.0, 0.2);

    // independent 2-D brute force over the nonnegative quadrant
    double brute_best = std::numeric_limits<double>::infinity();
    double brute_w1 = 0.0, brute_w2 = 0.0;
    for (int i = 0; i <= 3000; ++i)
        for (int j = 0; j <= 60; ++j) {
            const double w1 = i * 1e-3, w2 = j * 1e-2;
            const double v = (w1 - w2 - 2.0) * (w1 - w2 - 2.0) + 0.2 * (w1 + w2);
            if (v < brute_best) {
                brute_best = v;
                brute_w1 = w1;
                brute_w2 = w2;
            }
        }
    CHECK(brute_w1 == Approx(1.9).margin(2e-3));
    CHECK(brute_w2 == 0.0);
    CHECK(brute_best == Approx(0.39).margin(1e-5));

    auto [w, rep] = solve(prob);
    REQUIRE(rep.converged);
    CHECK(w.w1(0, 0) == Approx(1.9).margin(1e-7));
    CHECK(std::abs(w.w2(0, 0)) < 1e-7);
    CHECK(rep.objective == Approx(0.39).margin(1e-7));
    CHECK(rep.kkt_residual <= 1e-7);
    CHECK(rep.max_violation <= 1e-8);
}

TEST_CASE("large rho kills the fit and returns zero weights") {
    const ConvexProblem prob = scalar_instance(2.0, 4.5);
    auto [w, rep] = solve(prob);
    REQUIRE(rep.converged);
    CHECK(w.norm_inf() < 1e-8);
    CHECK(rep.objective == Approx(4.0).margin(1e-7));
}

TEST_CASE("zero targets give the zero solution immediately") {
    RngStream rng(8);
    auto inst = make_random_instance(rng);
    inst.problem.y.setZero();
    auto [w, rep] = solve(inst.problem);
    REQUIRE(rep.converged);
    CHECK(w.norm_inf() == 0.0);
    CHECK(rep.objective == 0.0);
}

TEST_CASE("kkt residual certifies the scalar optimum and flags perturbations") {
    const ConvexProblem prob = scalar_instance(2.0, 0.2);
    ConvexWeights opt = ConvexWeights::zero(1, 1);
    opt.w1(0, 0) = 1.9;
    CHECK(kkt_residual(prob, opt) <= 1e-8);

    ConvexWeights bumped = opt;
    bumped.w1(0, 0) = 2.0;
    CHECK(kkt_residual(prob, bumped) > 1e-3);

    // w = 0 with y = 0 sits at the optimum
    ConvexProblem zero_prob = scalar_instance(0.0, 0.2);
    CHECK(kkt_residual(zero_prob, ConvexWeights::zero(1, 1)) == 0.0);
}

TEST_CASE("scalar family matches max(beta - rho_T/2, 0) on random draws") {
    RngStream rng(17);
    for (int i = 0; i < 20; ++i) {
        const double beta = rng.uniform(-3.0, 3.0);
        const double rho_T = rng.uniform(0.05, 2.0);
        const ConvexProblem prob = scalar_instance(beta, rho_T);
        auto [w, rep] = solve(prob);
        REQUIRE(rep.converged);
        const double expect = std::max(beta - rho_T / 2.0, 0.0);
        CHECK(w.w1(0, 0) == Approx(expect).margin(1e-7));
    }
}

TEST_CASE("objective is convex along random segments") {
    RngStream rng(23);
    auto inst = make_random_instance(rng);
    const int N = inst.problem.cols();
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd a(N), b(N);
        for (int j = 0; j < N; ++j) {
            a[j] = rng.normal();
            b[j] = rng.normal();
        }
        const double t = rng.uniform();
        const Eigen::VectorXd mid = t * a + (1.0 - t) * b;
        CHECK(objective_value(inst.problem, mid) <=
              t * objective_value(inst.problem, a) + (1.0 - t) * objective_value(inst.problem, b) +
                  1e-10);
    }
}

TEST_CASE("returned iterates are feasible and beat a long reference solve") {
    RngStream rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        auto inst = make_random_instance(rng);
        auto [w, rep] = solve(inst.problem);
        REQUIRE(rep.converged);
        CHECK(rep.max_violation <= 1e-8);
        CHECK(rep.kkt_residual <= 1e-7);

        SolverConfig long_cfg;
        long_cfg.max_iter = 500000;
        long_cfg.kkt_tol = 1e-8;
        long_cfg.feas_tol = 1e-9;
        auto [w_ref, rep_ref] = solve(inst.problem, long_cfg);
        const double scale = 1e-6 * (1.0 + inst.problem.y.squaredNorm());
        CHECK(std::abs(rep.objective - rep_ref.objective) <= scale);
    }
}

TEST_CASE("group-norm sum decreases as rho_T grows") {
    RngStream rng(53);
    auto inst = make_random_instance(rng, 5, 2, 4);
    auto norm_sum = [&](double rho_T) {
        ConvexProblem p = assemble(inst.X, inst.y, inst.masks, rho_T);
        auto [w, rep] = solve(p);
        REQUIRE(rep.converged);
        double s = 0.0;
        const Eigen::VectorXd flat = w.flatten();
        for (int j = 0; j < p.groups(); ++j) s += flat.segment(j * p.d, p.d).norm();
        return s;
    };
    const double s1 = norm_sum(0.05), s2 = norm_sum(0.5), s3 = norm_sum(2.0);
    CHECK(s2 <= s1 + 1e-7);
    CHECK(s3 <= s2 + 1e-7);
}

TEST_CASE("warm starts reproduce the same optimum") {
    RngStream rng(67);
    auto inst = make_random_instance(rng);
    auto [cold, rep_cold] = solve(inst.problem);
    REQUIRE(rep_cold.converged);
    ConvexWeights nudge = cold;
    nudge.w1.array() += 0.01;
    auto [warm, rep_warm] = solve(inst.problem, {}, &nudge);
    REQUIRE(rep_warm.converged);
    CHECK(std::abs(rep_warm.objective - rep_cold.objective) <= 1e-6 * (1.0 + rep_cold.objective));
}
