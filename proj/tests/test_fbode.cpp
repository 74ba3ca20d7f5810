#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfcontract/fbode.hpp"
#include "test_support.hpp"

using namespace mfc;
using namespace mfc::testing_support;

TEST(EvaluateObjective, TrivialCases) {
    LQModelSpec s = toy_spec();
    s.c0 = [](double, const Vector&) { return 0.0; };
    const TimeGrid g(0, 1, 100);
    EXPECT_DOUBLE_EQ(evaluate_objective(std::vector<Vector>(101, Vector(2, 0.0)), s, g), 0.0);
    s.c0 = [](double, const Vector&) { return 1.0; };
    s.T = 2.0;
    EXPECT_NEAR(evaluate_objective(std::vector<Vector>(101, Vector(2, 0.0)), s, TimeGrid(0, 2, 100)),
                2.0, 1e-14);
}

TEST(EvaluateObjective, RejectsOutOfBounds) {
    const LQModelSpec s = toy_spec();
    std::vector<Vector> a(11, Vector(2, 0.0));
    a[4][1] = 2.5;
    EXPECT_THROW(evaluate_objective(a, s, TimeGrid(0, 1, 10)), StructuralError);
}

TEST(EvaluateObjective, ToyConstantControlMatchesClosedForm) {
    const LQModelSpec s = toy_spec();
    const std::array<double, kToyPieces> a1{0.5, 0.5, 0.5, 0.5, 0.5}, a2{1.25, 1.25, 1.25, 1.25, 1.25};
    const double numeric =
        evaluate_objective(std::vector<Vector>(2001, Vector{0.5, 1.25}), s, TimeGrid(0, 1, 2000));
    EXPECT_NEAR(numeric, toy_exact_cost(a1, a2), 1e-7);
}

TEST(SolvePmp, ToyBeatsExhaustiveControlGrid) {
    const LQModelSpec s = toy_spec();
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(1.0, 2000));
    ASSERT_TRUE(sol.converged);
    const double grid_min = toy_grid_minimum();
    // value frozen from the closed-form enumeration above
    EXPECT_NEAR(grid_min, 0.4404194545, 1e-9);
    EXPECT_LE(sol.objective, grid_min + 1e-4);
    EXPECT_LT(sol.residual, 1e-6);
}

TEST(SolvePmp, SolutionInvariants) {
    std::mt19937_64 g(21);
    for (int rep = 0; rep < 3; ++rep) {
        const LQModelSpec s = random_lq_spec(g, 4);
        const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(s.T, 400));
        ASSERT_TRUE(sol.converged);
        EXPECT_EQ(sol.pi_flow.front(), s.p0);
        EXPECT_LT(sup_diff(sol.y_flow.back(), s.grad_C0(sol.pi_flow.back().entries())), 1e-9);
        for (std::size_t k = 0; k < sol.y_flow.size(); ++k)
            EXPECT_EQ(sol.control_flow[k], principal_minimizer(sol.y_flow[k], s));
        EXPECT_LE(sol.residual, 1e-6);
        EXPECT_LE(sol.objective,
                  evaluate_objective(std::vector<Vector>(401, Vector(4, s.alpha_lo)), s, sol.grid));
        EXPECT_LE(sol.objective,
                  evaluate_objective(std::vector<Vector>(401, Vector(4, s.alpha_hi)), s, sol.grid) + 1e-9);
        EXPECT_LT(first_order_check(sol, s, 4), 1e-3);
    }
}

TEST(SolvePmp, DecoupledClosedFormCostate) {
    // lambda = 0 and qbar = 0: controls cannot move mass, and the costate is the
    // backward integral of c1_i + gamma_i alpha_lo^2 / 2.
    LQModelSpec s;
    s.m = 3;
    s.lambda = Matrix(3, 3, 0.0);
    s.qbar = [](double, const Vector&) { return Matrix(3, 3, 0.0); };
    s.c1 = [](double t, std::size_t i, const Vector&) { return double(i + 1) * (1.0 + t); };
    s.gamma = {1.0, 2.0, 4.0};
    s.alpha_lo = 0.5;
    s.alpha_hi = 2.0;
    s.c0 = [](double, const Vector&) { return 1.0; };
    s.C0 = [](const Vector&) { return 0.0; };
    s.grad_C0 = [](const Vector&) { return Vector(3, 0.0); };
    s.p0 = ProbabilityVector({0.2, 0.3, 0.5});
    s.T = 2.0;
    EXPECT_THROW(validate(s), StructuralError);
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(2.0, 200));
    ASSERT_TRUE(sol.converged);
    for (std::size_t k = 0; k < sol.grid.n_nodes(); ++k) {
        const double t = sol.grid.node(k), T = 2.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const double exact = double(i + 1) * ((T - t) + 0.5 * (T * T - t * t)) +
                                 0.5 * s.gamma[i] * 0.25 * (T - t);
            EXPECT_NEAR(sol.y_flow[k][i], exact, 1e-8);  // FD gradient noise
        }
        EXPECT_EQ(sol.control_flow[k], Vector(3, 0.5));
        EXPECT_EQ(sol.pi_flow[k], s.p0);
    }
}

TEST(SolvePmp, ShortHorizonCostateIsTerminalGradient) {
    std::mt19937_64 g(23);
    LQModelSpec s = random_lq_spec(g, 4);
    s.T = 1e-4;
    s.p0 = ProbabilityVector({0.4, 0.3, 0.2, 0.1});
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(s.T, 10));
    EXPECT_LT(sup_diff(sol.y_flow.front(), s.grad_C0(s.p0.entries())), 1e-3);
}

TEST(SolvePmp, NonConvergenceCarriesLastUpdate) {
    std::mt19937_64 g(25);
    const LQModelSpec s = random_lq_spec(g, 4);
    SweepParams p = SweepParams::for_horizon(s.T, 100);
    p.max_iters = 1;
    p.continuation_levels = 0;
    try {
        solve_pmp(s, p);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.iterations(), 3);
        EXPECT_GT(e.last_update(), 0.0);
    }
}

TEST(SolvePmp, RejectsBadParams) {
    const LQModelSpec s = toy_spec();
    SweepParams p = SweepParams::for_horizon(1.0, 10);
    p.damping = 0.0;
    EXPECT_THROW(solve_pmp(s, p), StructuralError);
    p = SweepParams::for_horizon(1.0, 10);
    p.tol = 0.0;
    EXPECT_THROW(solve_pmp(s, p), StructuralError);
    EXPECT_THROW(solve_pmp(s, SweepParams::for_horizon(2.0, 10)), StructuralError);
}

TEST(FirstOrderCheck, DecoupledDerivativeIsCostOnly) {
    LQModelSpec s = toy_spec();
    s.lambda = Matrix(2, 2, 0.0);
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(1.0, 400));
    // perturb around an interior control so both shifts stay admissible
    std::vector<Vector> a(401, Vector{0.7, 1.1}), delta(401);
    for (std::size_t k = 0; k <= 400; ++k)
        delta[k] = {std::sin(3.0 * sol.grid.node(k)), std::cos(sol.grid.node(k))};
    const double fd = directional_derivative_fd(a, delta, s, sol.grid);
    double exact = 0.0;
    const auto flow = controlled_flow(s, piecewise_linear_controls(a, sol.grid), sol.grid);
    for (std::size_t k = 0; k <= 400; ++k) {
        const double w = (k == 0 || k == 400) ? 0.5 / 400 : 1.0 / 400;
        for (std::size_t i = 0; i < 2; ++i)
            exact += w * flow.states[k][i] * s.gamma[i] * a[k][i] * delta[k][i];
    }
    EXPECT_NEAR(fd, exact, 1e-6);
}

TEST(FirstOrderCheck, ZeroDirectionHasNoDefect) {
    const LQModelSpec s = toy_spec();
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(1.0, 200));
    const std::vector<Vector> zero(201, Vector(2, 0.0));
    EXPECT_EQ(directional_derivative_fd(sol.control_flow, zero, s, sol.grid), 0.0);
    EXPECT_EQ(adjoint_directional_prediction(sol, zero, s).value, 0.0);
}

TEST(FirstOrderCheck, ToySolutionIsStationary) {
    const LQModelSpec s = toy_spec();
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(1.0, 1000));
    EXPECT_LT(first_order_check(sol, s, 6), 1e-3);
}

TEST(SolvePmp, ControlsMatchGridArgminOfHamiltonian) {
    const LQModelSpec s = toy_spec();
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(1.0, 200));
    const std::size_t cells = 100000;
    const double cell = kToyHi / double(cells - 1);
    for (std::size_t k = 0; k <= 200; k += 25) {
        for (std::size_t i = 0; i < 2; ++i) {
            double best = 0.0, fbest = INFINITY;
            for (std::size_t c = 0; c < cells; ++c) {
                Vector a = sol.control_flow[k];
                a[i] = kToyHi * double(c) / double(cells - 1);
                const double h = principal_hamiltonian(sol.grid.node(k), sol.pi_flow[k].entries(),
                                                       sol.y_flow[k], a, s);
                if (h < fbest) fbest = h, best = a[i];
            }
            EXPECT_LE(std::abs(best - sol.control_flow[k][i]), cell);
        }
    }
}
