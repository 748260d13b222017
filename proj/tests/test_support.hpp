#pragma once

// Shared helpers for the unit and acceptance suites.

#include <Eigen/Dense>

#include "cvxq/convex_solver.hpp"
#include "cvxq/patterns.hpp"
#include "cvxq/rng.hpp"

namespace cvxq::testing {

struct RandomInstance {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    PatternSet masks;
    double rho_T = 0.0;
    ConvexProblem problem;
};

// Random desk-scale instance: Gaussian X and y, sampled masks, rho_T drawn
// log-uniform-ish in a moderate range.
inline RandomInstance make_random_instance(RngStream& rng, int max_T = 6, int max_d = 3,
                                           int max_P = 8) {
    RandomInstance inst;
    const int T = 2 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_T - 1));
    const int d = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_d));
    inst.X.resize(T, d);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) inst.X(i, j) = rng.normal();
    inst.y.resize(T);
    for (int i = 0; i < T; ++i) inst.y[i] = 2.0 * rng.normal();
    const int budget = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_P));
    inst.masks = sample_patterns(inst.X, budget, rng);
    inst.rho_T = std::pow(10.0, rng.uniform(-3.0, 0.0));
    inst.problem = assemble(inst.X, inst.y, inst.masks, inst.rho_T);
    return inst;
}

// The scalar one-pattern family: X = [[1]], y = [beta], all-ones mask.
// Closed form: w1 = max(beta - rho_T/2, 0), w2 = max(-beta - rho_T/2, 0).
inline ConvexProblem scalar_instance(double beta, double rho_T) {
    Eigen::MatrixXd X(1, 1);
    X << 1.0;
    Eigen::VectorXd y(1);
    y << beta;
    PatternSet masks;
    masks.patterns.push_back(ActivationPattern{{1}});
    masks.source_x_fingerprint = fingerprint_matrix(X);
    return assemble(X, y, masks, rho_T);
}

}  // namespace cvxq::testing
