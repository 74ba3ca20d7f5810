#include <gtest/gtest.h>

#include <cmath>

#include "mfcontract/contract.hpp"
#include "mfcontract/epidemic.hpp"
#include "mfcontract/io.hpp"

using namespace mfc;

namespace {

const UtilitySpec kSqrtUtility{[](double r) { return 2.0 * std::sqrt(r); }, 0.0, 100.0};
// r_hat = 0 exactly and u(r_hat) = 2
const UtilitySpec kShallowUtility{[](double r) { return 2.0 + 0.5 * r; }, 0.0, 10.0};

struct Fixture {
    LQModelSpec spec = build_epidemic_model(EpidemicParams{});
    FBODESolution sol = solve_pmp(spec, SweepParams::for_horizon(spec.T, 2000));
};

const Fixture& epidemic() {
    static const Fixture f;
    return f;
}

/// Model where nothing moves and every running cost is `c`.
LQModelSpec still_model(double c, bool with_lambda) {
    LQModelSpec s;
    s.m = 3;
    s.lambda = Matrix(3, 3, with_lambda ? 0.5 : 0.0);
    for (std::size_t i = 0; i < 3; ++i) s.lambda(i, i) = 0.0;
    s.qbar = [](double, const Vector&) { return Matrix(3, 3, 0.0); };
    s.c1 = [c](double, std::size_t, const Vector&) { return c; };
    s.gamma = {1.0, 1.0, 1.0};
    s.alpha_lo = 0.0;
    s.alpha_hi = 1.0;
    s.c0 = [](double, const Vector&) { return 0.0; };
    s.C0 = [](const Vector&) { return 0.0; };
    s.grad_C0 = [](const Vector&) { return Vector(3, 0.0); };
    s.p0 = ProbabilityVector({0.2, 0.3, 0.5});
    s.T = 2.0;
    return s;
}

ContractSpec constant_contract(const FBODESolution& sol, const Matrix& z, const Vector& y0,
                               const UtilitySpec& util) {
    ContractSpec c;
    c.r_hat = optimal_flat_payment(util).r_hat;
    c.u_r_hat = util.u(c.r_hat);
    c.y0 = y0;
    c.z_flow.assign(sol.grid.n_nodes(), z);
    return c;
}

}  // namespace

TEST(ZTable, ZeroEffortGivesZeroRow) {
    const Fixture& f = epidemic();
    const auto z = build_z_table(f.sol, f.spec);
    for (std::size_t k = 0; k < z.size(); ++k)
        for (std::size_t j = 0; j < 4; ++j)
            if (f.sol.control_flow[k][j] == 0.0) {
                for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(z[k](j, i), 0.0);
            }
}

TEST(ZTable, SingleNodeValue) {
    LQModelSpec s = build_epidemic_model(EpidemicParams{});
    FBODESolution sol{TimeGrid(0, 1, 1)};
    sol.control_flow = {Vector{2.0, 0.0, 0.0, 0.0}, Vector(4, 0.0)};
    const auto z = build_z_table(sol, s);
    // gamma_I = 2, a = 2, lambda row sum nu_I = 1: off-state components -4, diagonal 0
    EXPECT_DOUBLE_EQ(z[0](AI, AH), -4.0);
    EXPECT_DOUBLE_EQ(z[0](AI, BI), -4.0);
    EXPECT_DOUBLE_EQ(z[0](AI, AI), 0.0);
    Vector row(4);
    for (std::size_t i = 0; i < 4; ++i) row[i] = z[0](AI, i);
    EXPECT_DOUBLE_EQ(agent_best_response(AI, row, s), 2.0);
}

TEST(ZTable, RoundTripReproducesEfforts) {
    const Fixture& f = epidemic();
    const auto z = build_z_table(f.sol, f.spec);
    for (std::size_t k = 0; k < z.size(); ++k)
        for (std::size_t j = 0; j < 4; ++j) {
            Vector row(4);
            for (std::size_t i = 0; i < 4; ++i) row[i] = z[k](j, i);
            EXPECT_NEAR(agent_best_response(j, row, f.spec), f.sol.control_flow[k][j], 1e-12);
        }
}

TEST(ZTable, ZeroLambdaRowRejected) {
    const LQModelSpec s = still_model(0.0, false);
    FBODESolution sol{TimeGrid(0, 2, 4)};
    sol.control_flow.assign(5, Vector(3, 0.0));
    EXPECT_THROW(build_z_table(sol, s), StructuralError);
}

TEST(ChooseY0, SaturatesParticipation) {
    const Fixture& f = epidemic();
    EXPECT_EQ(choose_y0(0.0, f.sol, f.spec), Vector(4, 0.0));
    for (double kappa : {-3.7, 0.25, 11.0})
        EXPECT_NEAR(dot(f.spec.p0.entries(), choose_y0(kappa, f.sol, f.spec)), kappa, 1e-15 * (1 + std::abs(kappa)));
}

TEST(TerminalPayment, NoJumpsNoIncentive) {
    // c = u(r_hat) = 2 everywhere and Z = 0, so only -y0 of the start state remains
    const LQModelSpec s = still_model(2.0, true);
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(2.0, 20));
    const ContractSpec c = constant_contract(sol, Matrix(3, 3, 0.0), {1.5, -2.0, 0.5}, kShallowUtility);
    for (std::size_t i = 0; i < 3; ++i) {
        const CTMCPath path{i, {}, 2.0};
        EXPECT_NEAR(terminal_payment(path, c, sol, s), -c.y0[i], 1e-12);
    }
}

TEST(TerminalPayment, SingleJumpStieltjesTerm) {
    const LQModelSpec s = still_model(2.0, true);
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(2.0, 20));
    const Matrix z{{0.3, -1.0, 2.0}, {4.0, 0.1, -0.5}, {0.0, 0.7, 1.1}};
    const ContractSpec c = constant_contract(sol, z, {0.0, 0.0, 0.0}, kShallowUtility);
    const CTMCPath path{0, {{0.73, 2}}, 2.0};
    // xi = -(Z_new - Z_old) at the pre-jump state 0
    EXPECT_NEAR(terminal_payment(path, c, sol, s), -(z(0, 2) - z(0, 0)), 1e-10);
}

TEST(TerminalPayment, HorizonMismatchRejected) {
    const LQModelSpec s = still_model(2.0, true);
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(2.0, 20));
    const ContractSpec c = constant_contract(sol, Matrix(3, 3, 0.0), {0, 0, 0}, kSqrtUtility);
    EXPECT_THROW(terminal_payment(CTMCPath{0, {}, 1.0}, c, sol, s), StructuralError);
    ContractSpec short_table = c;
    short_table.z_flow.pop_back();
    EXPECT_THROW(terminal_payment(CTMCPath{0, {}, 2.0}, short_table, sol, s), StructuralError);
}

TEST(VerifyContract, EpidemicIdentitiesHold) {
    const Fixture& f = epidemic();
    const double kappa = 0.8;
    const ContractSpec c = make_contract(f.sol, f.spec, kSqrtUtility, kappa);
    EXPECT_LE(dot(f.spec.p0.entries(), c.y0), kappa + 1e-12);
    const VerificationReport r = verify_contract(c, f.sol, f.spec, 10000, 4321);
    EXPECT_TRUE(r.agent.pass) << r.agent.mean << " vs " << r.agent.target << " se " << r.agent.std_error;
    EXPECT_TRUE(r.principal.pass) << r.principal.mean << " vs " << r.principal.target;
    EXPECT_TRUE(r.objective.pass) << r.objective.mean << " vs " << r.objective.target;
    EXPECT_NEAR(r.agent.target, kappa, 1e-12);
    EXPECT_NEAR(r.principal.target, f.sol.objective + f.spec.T * (1.0 - 2.0) - kappa, 1e-6);
    EXPECT_LE(r.occupancy_gap, r.occupancy_bound);
    for (const auto& z : r.realizations) {
        EXPECT_TRUE(std::isfinite(z.xi));
        EXPECT_TRUE(std::isfinite(z.agent_cost));
    }
}

TEST(VerifyContract, ZeroCostStillModelHasZeroVariance) {
    const LQModelSpec s = still_model(0.0, false);
    const FBODESolution sol = solve_pmp(s, SweepParams::for_horizon(2.0, 20));
    const UtilitySpec lin{[](double r) { return r; }, 0.0, 10.0};
    const ContractSpec c = constant_contract(sol, Matrix(3, 3, 0.0), Vector(3, 0.0), lin);
    const VerificationReport r = verify_contract(c, sol, s, 50, 1);
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.agent.std_error, 0.0);
    EXPECT_EQ(r.principal.std_error, 0.0);
    EXPECT_EQ(r.objective.std_error, 0.0);
}

TEST(VerifyContract, KappaShiftsPrincipalCostOneForOne) {
    const Fixture& f = epidemic();
    const auto r0 = verify_contract(make_contract(f.sol, f.spec, kSqrtUtility, 0.0), f.sol, f.spec, 2000, 9);
    const auto r1 = verify_contract(make_contract(f.sol, f.spec, kSqrtUtility, 1.0), f.sol, f.spec, 2000, 9);
    EXPECT_NEAR(r1.principal.mean - r0.principal.mean, -1.0, 1e-9);
    EXPECT_NEAR(r1.agent.mean - r0.agent.mean, 1.0, 1e-9);
}

TEST(VerifyContract, DeterministicAndSmallSampleRule) {
    const Fixture& f = epidemic();
    const ContractSpec c = make_contract(f.sol, f.spec, kSqrtUtility, 0.0);
    const auto a = verify_contract(c, f.sol, f.spec, 10, 5);
    const auto b = verify_contract(c, f.sol, f.spec, 10, 5);
    EXPECT_EQ(realizations_csv(a.realizations), realizations_csv(b.realizations));
    EXPECT_EQ(a.agent.mean, b.agent.mean);
    EXPECT_GT(a.agent.std_error, 0.0);
    EXPECT_EQ(a.agent.pass, std::abs(a.agent.mean - a.agent.target) <= 3.0 * a.agent.std_error);
}

TEST(VerifyContract, OccupancyGapScalesAsInverseRootN) {
    const Fixture& f = epidemic();
    const ContractSpec c = make_contract(f.sol, f.spec, kSqrtUtility, 0.0);
    double small = 0.0, large = 0.0;
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        small += verify_contract(c, f.sol, f.spec, 1000, seed << 20).occupancy_gap;
        large += verify_contract(c, f.sol, f.spec, 4000, seed << 21).occupancy_gap;
    }
    const double ratio = small / large;
    EXPECT_GT(ratio, 1.4);
    EXPECT_LT(ratio, 2.8);
}

TEST(VerifyContract, PaymentRecomputedFromSerializedTablesIsIdentical) {
    const Fixture& f = epidemic();
    const ContractSpec c = make_contract(f.sol, f.spec, kSqrtUtility, 0.3);
    const auto paths = simulate_solution_paths(f.sol, f.spec, 20, 77);

    std::istringstream sol_in(solution_csv(f.sol)), table_in(contract_csv(c, f.sol));
    FBODESolution sol = parse_solution_csv(parse_csv(sol_in, "solution"), "solution");
    const ContractTables tables = parse_contract_csv(parse_csv(table_in, "contract"), "contract");
    ContractSpec c2 = c;
    c2.z_flow = tables.z_flow;
    EXPECT_EQ(tables.a_hat, f.sol.control_flow);

    const PaymentEvaluator original(c, f.sol, f.spec), rebuilt(c2, sol, f.spec);
    for (const auto& p : paths) {
        std::istringstream path_in(path_csv(p));
        const CTMCPath q = parse_path_csv(parse_csv(path_in, "path"), "path");
        EXPECT_EQ(rebuilt.realize(q).xi, original.realize(p).xi);
    }
}

TEST(MeanEstimate, ZeroVarianceNeedsExactAgreement) {
    EXPECT_TRUE(estimate_mean({1.0, 1.0, 1.0}, 1.0).pass);
    EXPECT_FALSE(estimate_mean({1.0, 1.0, 1.0}, 1.1).pass);
    const MeanEstimate e = estimate_mean({0.0, 2.0}, 1.0);
    EXPECT_DOUBLE_EQ(e.std_error, 1.0);
    EXPECT_TRUE(e.pass);
}
