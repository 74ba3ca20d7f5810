#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfcontract/io.hpp"
#include "mfcontract/markov_core.hpp"
#include "test_support.hpp"

using namespace mfc;
using namespace mfc::testing_support;

namespace {

RateFn constant_rates(const RateMatrix& q) {
    return [q](double, const Vector&) { return q; };
}

}  // namespace

TEST(RateMatrix, ReferenceGeneratorIsValid) {
    const RateMatrix q = RateMatrix::reference(4);
    EXPECT_TRUE(validate_rate_matrix(q).ok());
    EXPECT_DOUBLE_EQ(q(0, 0), -3.0);
    EXPECT_DOUBLE_EQ(q(2, 1), 1.0);
}

TEST(RateMatrix, NegativeOffDiagonalIsReportedAtItsEntry) {
    Matrix a = RateMatrix::reference(3).matrix();
    a(0, 1) = -0.5;
    a(0, 0) = -0.5;  // row (−0.5, −0.5, 1) still sums to zero
    const RateCheck c = validate_rate_matrix(RateMatrix(a));
    ASSERT_EQ(c.violations.size(), 1u);
    EXPECT_EQ(c.violations[0].kind, RateViolation::Kind::NegativeRate);
    EXPECT_EQ(c.violations[0].row, 0u);
    EXPECT_EQ(c.violations[0].col, 1u);
}

TEST(RateMatrix, RowSumDefectIsReportedAtItsRow) {
    Matrix a = RateMatrix::reference(3).matrix();
    a(0, 0) += 0.1;
    const RateCheck c = validate_rate_matrix(RateMatrix(a));
    ASSERT_EQ(c.violations.size(), 1u);
    EXPECT_EQ(c.violations[0].kind, RateViolation::Kind::RowSum);
    EXPECT_EQ(c.violations[0].row, 0u);
    EXPECT_NEAR(c.violations[0].value, 0.1, 1e-15);
    EXPECT_NE(c.describe().find("row 0"), std::string::npos);
}

TEST(RateMatrix, DimensionErrors) {
    EXPECT_THROW(RateMatrix(Matrix(2, 3)), StructuralError);
    EXPECT_THROW(validate_rate_matrix(RateMatrix(1)), StructuralError);
}

TEST(Seminorm, Examples) {
    EXPECT_DOUBLE_EQ(seminorm({2.5, 2.5, 2.5}, 1), 0.0);
    EXPECT_DOUBLE_EQ(seminorm({0.0, 3.0}, 0), 3.0);
    EXPECT_DOUBLE_EQ(seminorm({1, 2, 3, 4}, 0), std::sqrt(14.0));
    EXPECT_THROW(seminorm({1, 2}, 2), StructuralError);
}

TEST(Seminorm, TranslationInvariant) {
    std::mt19937_64 g(3);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int rep = 0; rep < 200; ++rep) {
        Vector z(5), zs(5);
        const double c = n(g);
        for (std::size_t i = 0; i < 5; ++i) zs[i] = (z[i] = n(g)) + c;
        for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(seminorm(zs, i), seminorm(z, i), 1e-12);
    }
}

TEST(ProbabilityVector, RejectsOffSimplex) {
    EXPECT_THROW(ProbabilityVector({0.5, 0.6}), StructuralError);
    EXPECT_THROW(ProbabilityVector({1.1, -0.1}), StructuralError);
    EXPECT_THROW(ProbabilityVector(Vector{}), StructuralError);
    EXPECT_NO_THROW(ProbabilityVector({0.5, 0.5 + 5e-10}));
}

TEST(TimeGrid, Basics) {
    const TimeGrid g(0.0, 2.0, 4);
    EXPECT_EQ(g.n_nodes(), 5u);
    EXPECT_DOUBLE_EQ(g.dt(), 0.5);
    EXPECT_DOUBLE_EQ(g.node(4), 2.0);
    EXPECT_EQ(g.refined().n_steps(), 8u);
    EXPECT_THROW(TimeGrid(1.0, 1.0, 3), StructuralError);
    EXPECT_THROW(TimeGrid(0.0, 1.0, 0), StructuralError);
}

TEST(Kolmogorov, ZeroGeneratorKeepsInitialLaw) {
    const ProbabilityVector p0({0.1, 0.2, 0.7});
    const auto flow = integrate_kolmogorov(constant_rates(RateMatrix(3)), p0, TimeGrid(0, 3, 50));
    for (const auto& p : flow.states) EXPECT_EQ(p, p0);
}

TEST(Kolmogorov, TwoStateClosedForm) {
    const auto flow = integrate_kolmogorov(constant_rates(RateMatrix::reference(2)),
                                           ProbabilityVector::point_mass(2, 0), TimeGrid(0, 2, 2000));
    const TimeGrid g(0, 2, 2000);
    for (std::size_t k = 0; k < g.n_nodes(); ++k) {
        const double t = g.node(k);
        EXPECT_NEAR(flow.states[k][0], 0.5 * (1 + std::exp(-2 * t)), 1e-6);
        EXPECT_NEAR(flow.states[k][1], 0.5 * (1 - std::exp(-2 * t)), 1e-6);
    }
}

TEST(Kolmogorov, UniformIsStationaryUnderReference) {
    const auto flow = integrate_kolmogorov(constant_rates(RateMatrix::reference(4)),
                                           ProbabilityVector::uniform(4), TimeGrid(0, 5, 100));
    for (const auto& p : flow.states)
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], 0.25, 1e-15);
}

TEST(Kolmogorov, MatchesMatrixExponential) {
    std::mt19937_64 g(41);
    for (int rep = 0; rep < 20; ++rep) {
        const RateMatrix q = RateMatrix::from_off_diagonal(random_off_diagonal(g, 4, 0.0, 2.0));
        const ProbabilityVector p0 = random_simplex(g, 4);
        const auto flow = integrate_kolmogorov(constant_rates(q), p0, TimeGrid(0, 1.5, 1500));
        const Vector exact = row_times(p0.entries(), expm(q.matrix(), 1.5));
        EXPECT_LT(sup_diff(flow.states.back().entries(), exact), 1e-10);
    }
}

TEST(Kolmogorov, SimplexPropertyOverRandomGenerators) {
    std::mt19937_64 g(5);
    for (int rep = 0; rep < 100; ++rep) {
        const Matrix base = random_off_diagonal(g, 5, 0.0, 3.0);
        RateFn f = [base](double t, const Vector& pi) {
            Matrix a = base;
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j)
                    if (i != j) a(i, j) *= (1.0 + 0.5 * std::sin(3 * t + double(i)) + pi[j]);
            return RateMatrix::from_off_diagonal(a);
        };
        const auto flow = integrate_kolmogorov(f, random_simplex(g, 5), TimeGrid(0, 2, 400));
        EXPECT_LE(flow.max_sum_defect, 1e-9);
        EXPECT_GE(flow.min_raw_entry, -1e-12);
        for (const auto& p : flow.states) {
            double s = 0.0;
            for (double v : p.entries()) s += v;
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Kolmogorov, InvalidGeneratorCarriesTime) {
    RateFn f = [](double t, const Vector&) {
        Matrix a = RateMatrix::reference(2).matrix();
        if (t > 0.5) a(0, 1) = -1.0, a(0, 0) = 1.0;
        return RateMatrix(a);
    };
    try {
        integrate_kolmogorov(f, ProbabilityVector::uniform(2), TimeGrid(0, 1, 10));
        FAIL() << "expected a diagnostic";
    } catch (const DiagnosticError& e) {
        EXPECT_GT(e.time(), 0.5);
        EXPECT_LE(e.time(), 0.65);
    }
}

TEST(Kolmogorov, Rk4ObservedOrder) {
    std::mt19937_64 g(17);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix base = random_off_diagonal(g, 4, 0.2, 1.5);
        RateFn f = [base](double t, const Vector&) {
            Matrix a = base;
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j)
                    if (i != j) a(i, j) *= 1.0 + 0.8 * std::sin(2.0 * t + double(i + j));
            return RateMatrix::from_off_diagonal(a);
        };
        const ProbabilityVector p0 = ProbabilityVector::point_mass(4, 0);
        const Vector ref = integrate_kolmogorov(f, p0, TimeGrid(0, 2, 2560)).states.back().entries();
        const Vector e10 = integrate_kolmogorov(f, p0, TimeGrid(0, 2, 10)).states.back().entries();
        const Vector e20 = integrate_kolmogorov(f, p0, TimeGrid(0, 2, 20)).states.back().entries();
        const double order = std::log2(sup_diff(e10, ref) / sup_diff(e20, ref));
        EXPECT_GE(order, 3.5) << "rep " << rep;
    }
}

TEST(Ctmc, ZeroRatesNeverJump) {
    TimeRateFn f = [](double) { return RateMatrix(3); };
    const CTMCPath p = simulate_ctmc_path(f, ProbabilityVector::uniform(3), 4.0, 99);
    EXPECT_TRUE(p.jumps.empty());
    EXPECT_DOUBLE_EQ(p.horizon, 4.0);
}

TEST(Ctmc, SameSeedSamePath) {
    TimeRateFn f = [](double) { return RateMatrix::reference(4); };
    const auto a = simulate_ctmc_path(f, ProbabilityVector::uniform(4), 3.0, 1234);
    const auto b = simulate_ctmc_path(f, ProbabilityVector::uniform(4), 3.0, 1234);
    EXPECT_EQ(a, b);
    EXPECT_EQ(path_csv(a), path_csv(b));
    EXPECT_FALSE(a.jumps.empty());
}

TEST(Ctmc, PathInvariants) {
    TimeRateFn f = [](double t) {
        Matrix a(3, 3, 1.0 + std::sin(t) * 0.5);
        return RateMatrix::from_off_diagonal(a);
    };
    const auto paths = simulate_ctmc_paths(f, ProbabilityVector::uniform(3), 2.0, 200, 8,
                                           dominating_rate(f, TimeGrid(0, 2, 200)));
    for (const auto& p : paths) {
        std::size_t prev = p.initial_state;
        double tprev = 0.0;
        for (const auto& j : p.jumps) {
            EXPECT_GT(j.time, tprev);
            EXPECT_LE(j.time, p.horizon);
            EXPECT_NE(j.state, prev);
            prev = j.state;
            tprev = j.time;
        }
    }
}

TEST(Ctmc, ExceedingDominatingRateIsStructural) {
    TimeRateFn f = [](double) { return RateMatrix::reference(2); };
    EXPECT_THROW(simulate_ctmc_path(f, ProbabilityVector::uniform(2), 5.0, 1, 0.5), StructuralError);
    TimeRateFn bad = [](double) {
        return RateMatrix::from_off_diagonal(Matrix{{0, INFINITY}, {1, 0}});
    };
    EXPECT_THROW(simulate_ctmc_path(bad, ProbabilityVector::uniform(2), 1.0, 1), StructuralError);
}

TEST(Ctmc, MarginalsMatchKolmogorov) {
    TimeRateFn f = [](double) { return RateMatrix::reference(4); };
    const ProbabilityVector p0({0.7, 0.1, 0.1, 0.1});
    const std::size_t n = 10000;
    const TimeGrid grid(0, 1, 20);
    const auto paths = simulate_ctmc_paths(f, p0, 1.0, n, 2024, dominating_rate(f, grid));
    const auto occ = empirical_occupancy(paths, 4, grid);
    const auto flow = integrate_kolmogorov([](double, const Vector&) { return RateMatrix::reference(4); },
                                           p0, grid);
    for (std::size_t i = 0; i < 4; ++i) {
        const double p = flow.states.back()[i];
        EXPECT_LE(std::abs(occ.back()[i] - p), 3.0 * std::sqrt(p * (1 - p) / double(n))) << i;
    }
    double gap = 0.0;
    for (std::size_t k = 0; k < grid.n_nodes(); ++k)
        gap = std::max(gap, sup_diff(occ[k].entries(), flow.states[k].entries()));
    EXPECT_LE(gap, 3.0 * std::sqrt(0.25 / double(n)));
}

TEST(Occupancy, ConstantPaths) {
    const TimeGrid grid(0, 1, 4);
    CTMCPath a{1, {}, 1.0};
    auto occ = empirical_occupancy({a}, 4, grid);
    for (const auto& p : occ) EXPECT_EQ(p, ProbabilityVector::point_mass(4, 1));
    CTMCPath b{0, {}, 1.0};
    occ = empirical_occupancy({b, a}, 4, grid);
    for (const auto& p : occ) EXPECT_EQ(p, ProbabilityVector({0.5, 0.5, 0.0, 0.0}));
}

TEST(Occupancy, MismatchedHorizonsRejected) {
    EXPECT_THROW(empirical_occupancy({}, 2, TimeGrid(0, 1, 2)), StructuralError);
    EXPECT_THROW(empirical_occupancy({CTMCPath{0, {}, 1.0}, CTMCPath{0, {}, 2.0}}, 2, TimeGrid(0, 1, 2)),
                 StructuralError);
}

TEST(Ctmc, PathCsvRoundTrip) {
    TimeRateFn f = [](double) { return RateMatrix::reference(3); };
    const auto p = simulate_ctmc_path(f, ProbabilityVector::uniform(3), 2.0, 77);
    std::istringstream in(path_csv(p));
    EXPECT_EQ(parse_path_csv(parse_csv(in, "path"), "path"), p);
}
