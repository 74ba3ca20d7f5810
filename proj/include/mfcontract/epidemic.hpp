#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "anarchy.hpp"
#include "contract.hpp"
#include "core.hpp"
#include "fbode.hpp"
#include "lq_model.hpp"
#include "markov_core.hpp"

namespace mfc {

/// Two-city infection model over states (AI, AH, BI, BH) = (0, 1, 2, 3).
/// theta and phi are linear: theta(q) = coeff * q, phi(q) = coeff * q.
struct EpidemicParams {
    double theta_A_plus = 0.4;
    double theta_A_minus = 0.1;
    double theta_B_plus = 0.2;
    double theta_B_minus = 0.2;
    double phi_A = 1.0;
    double phi_B = 2.0;
    double nu_I = 1.0;
    double nu_H = 1.0;
    double gamma_I = 2.0;
    double gamma_H = 0.5;
    double alpha_hi = 10.0;
    double alpha_lo = 0.0;
    double sigma_A = 1.0;
    double sigma_B = 1.0;
    double sigma_P = 0.0;
    ProbabilityVector p0{Vector{0.05, 0.45, 0.25, 0.25}};
    double T = 5.0;
    double eps_floor = 1e-12;
};

inline constexpr std::size_t AI = 0, AH = 1, BI = 2, BH = 3;

inline void validate(const EpidemicParams& p) {
    const std::pair<const char*, double> nonneg[] = {
        {"theta_A_plus", p.theta_A_plus}, {"theta_A_minus", p.theta_A_minus},
        {"theta_B_plus", p.theta_B_plus}, {"theta_B_minus", p.theta_B_minus},
        {"phi_A", p.phi_A},               {"phi_B", p.phi_B},
        {"sigma_A", p.sigma_A},           {"sigma_B", p.sigma_B},
        {"sigma_P", p.sigma_P}};
    for (auto [name, v] : nonneg)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw StructuralError(std::string("EpidemicParams: ") + name + " must be >= 0");
    const std::pair<const char*, double> pos[] = {{"nu_I", p.nu_I},       {"nu_H", p.nu_H},
                                                  {"gamma_I", p.gamma_I}, {"gamma_H", p.gamma_H},
                                                  {"eps_floor", p.eps_floor}, {"T", p.T}};
    for (auto [name, v] : pos)
        if (!(v > 0.0) || !std::isfinite(v))
            throw StructuralError(std::string("EpidemicParams: ") + name + " must be > 0");
    if (!(p.alpha_lo < p.alpha_hi)) throw StructuralError("EpidemicParams: need alpha_lo < alpha_hi");
    if (p.p0.size() != 4) throw StructuralError("EpidemicParams: p0 needs 4 entries");
}

inline double city_mass(const EpidemicParams& p, double a, double b) {
    return std::max(a + b, p.eps_floor);
}

/// d/dpi of the principal Hamiltonian for this model at fixed controls alpha.
inline Vector epidemic_grad_pi(const EpidemicParams& p, const Vector& pi, const Vector& y,
                               const Vector& alpha) {
    const double sA = city_mass(p, pi[AI], pi[AH]), sB = city_mass(p, pi[BI], pi[BH]);
    const double xA = pi[AI] / sA, xB = pi[BI] / sB;
    const double c0 = std::exp(p.sigma_A * pi[AI] + p.sigma_B * pi[BI]);
    auto mig = [&](std::size_t i) {
        return (i == AI || i == BI ? p.nu_I : p.nu_H) * (alpha[i] - p.alpha_lo);
    };
    const double q01 = p.theta_A_plus * pi[AH] / sA, q10 = p.theta_A_minus * pi[AI] / sA;
    const double q23 = p.theta_B_plus * pi[BH] / sB, q32 = p.theta_B_minus * pi[BI] / sB;
    const double kA = (pi[AI] * p.theta_A_plus + pi[AH] * p.theta_A_minus) / (sA * sA);
    const double kB = (pi[BI] * p.theta_B_plus + pi[BH] * p.theta_B_minus) / (sB * sB);
    Vector g(4);
    g[AI] = q01 * (y[AH] - y[AI]) + mig(AI) * (y[BI] - y[AI]) + (y[AI] - y[AH]) * pi[AH] * kA +
            p.sigma_A * c0 + p.phi_A * xA + p.phi_A * pi[AH] / sA +
            0.5 * p.gamma_I * alpha[AI] * alpha[AI];
    g[AH] = q10 * (y[AI] - y[AH]) + mig(AH) * (y[BH] - y[AH]) + (y[AH] - y[AI]) * pi[AI] * kA +
            p.phi_A * xA - p.phi_A * pi[AI] / sA + 0.5 * p.gamma_H * alpha[AH] * alpha[AH];
    g[BI] = q23 * (y[BH] - y[BI]) + mig(BI) * (y[AI] - y[BI]) + (y[BI] - y[BH]) * pi[BH] * kB +
            p.sigma_B * c0 + p.phi_B * xB + p.phi_B * pi[BH] / sB +
            0.5 * p.gamma_I * alpha[BI] * alpha[BI];
    g[BH] = q32 * (y[BI] - y[BH]) + mig(BH) * (y[AH] - y[BH]) + (y[BH] - y[BI]) * pi[BI] * kB +
            p.phi_B * xB - p.phi_B * pi[BI] / sB + 0.5 * p.gamma_H * alpha[BH] * alpha[BH];
    return g;
}

inline LQModelSpec build_epidemic_model(const EpidemicParams& p) {
    validate(p);
    LQModelSpec s;
    s.m = 4;
    s.lambda = Matrix(4, 4, 0.0);
    s.lambda(AI, BI) = s.lambda(BI, AI) = p.nu_I;
    s.lambda(AH, BH) = s.lambda(BH, AH) = p.nu_H;
    s.qbar = [p](double, const Vector& pi) {
        const double sA = city_mass(p, pi[AI], pi[AH]), sB = city_mass(p, pi[BI], pi[BH]);
        Matrix q(4, 4, 0.0);
        q(AI, AH) = p.theta_A_plus * pi[AH] / sA;
        q(AH, AI) = p.theta_A_minus * pi[AI] / sA;
        q(BI, BH) = p.theta_B_plus * pi[BH] / sB;
        q(BH, BI) = p.theta_B_minus * pi[BI] / sB;
        return q;
    };
    s.c1 = [p](double, std::size_t i, const Vector& pi) {
        if (i == AI || i == AH) return p.phi_A * pi[AI] / city_mass(p, pi[AI], pi[AH]);
        return p.phi_B * pi[BI] / city_mass(p, pi[BI], pi[BH]);
    };
    s.gamma = {p.gamma_I, p.gamma_H, p.gamma_I, p.gamma_H};
    s.alpha_lo = p.alpha_lo;
    s.alpha_hi = p.alpha_hi;
    s.c0 = [p](double, const Vector& pi) {
        return std::exp(p.sigma_A * pi[AI] + p.sigma_B * pi[BI]);
    };
    const double pA0 = p.p0[AI] + p.p0[AH];
    s.C0 = [p, pA0](const Vector& pi) {
        const double d = pi[AI] + pi[AH] - pA0;
        return p.sigma_P * d * d;
    };
    s.grad_C0 = [p, pA0](const Vector& pi) {
        const double g = 2.0 * p.sigma_P * (pi[AI] + pi[AH] - pA0);
        return Vector{g, g, 0.0, 0.0};
    };
    s.grad_pi_H = [p](double, const Vector& pi, const Vector& y, const Vector& alpha) {
        return epidemic_grad_pi(p, pi, y, alpha);
    };
    s.p0 = p.p0;
    s.T = p.T;
    validate(s);
    return s;
}

/// Effort closed forms a_0 = b(nu_I (y0 - y2) / gamma_I) etc.
inline Vector handcoded_controls(const EpidemicParams& p, const Vector& y) {
    auto b = [&](double z) { return std::min(std::max(z, p.alpha_lo), p.alpha_hi); };
    return {b(p.nu_I * (y[AI] - y[BI]) / p.gamma_I), b(p.nu_H * (y[AH] - y[BH]) / p.gamma_H),
            b(p.nu_I * (y[BI] - y[AI]) / p.gamma_I), b(p.nu_H * (y[BH] - y[AH]) / p.gamma_H)};
}

/// Adjoint right-hand side written out term by term for the linear theta, phi.
inline Vector handcoded_adjoint_rhs(const EpidemicParams& p, const Vector& pi, const Vector& y) {
    const Vector a = handcoded_controls(p, y);
    const double s01 = city_mass(p, pi[0], pi[1]), s23 = city_mass(p, pi[2], pi[3]);
    const double dc0_0 = p.sigma_A * std::exp(p.sigma_A * pi[0] + p.sigma_B * pi[2]);
    const double dc0_2 = p.sigma_B * std::exp(p.sigma_A * pi[0] + p.sigma_B * pi[2]);
    const double mA = pi[1] * p.theta_A_minus + pi[0] * p.theta_A_plus;
    const double mB = pi[3] * p.theta_B_minus + pi[2] * p.theta_B_plus;
    const double lo = p.alpha_lo;
    Vector d(4);
    d[0] = -(y[0] - y[1]) * pi[1] / (s01 * s01) * mA + (y[0] - y[1]) * p.theta_A_plus * pi[1] / s01 -
           (y[2] - y[0]) * p.nu_I * (a[0] - lo) - dc0_0 - 0.5 * p.gamma_I * a[0] * a[0] -
           p.phi_A * pi[0] / s01 - p.phi_A * pi[1] / s01;
    d[1] = -(y[1] - y[0]) * pi[0] / (s01 * s01) * mA + (y[1] - y[0]) * p.theta_A_minus * pi[0] / s01 -
           (y[3] - y[1]) * p.nu_H * (a[1] - lo) - 0.5 * p.gamma_H * a[1] * a[1] -
           p.phi_A * pi[0] / s01 + p.phi_A * pi[0] / s01;
    d[2] = -(y[2] - y[3]) * pi[3] / (s23 * s23) * mB + (y[2] - y[3]) * p.theta_B_plus * pi[3] / s23 -
           (y[0] - y[2]) * p.nu_I * (a[2] - lo) - dc0_2 - 0.5 * p.gamma_I * a[2] * a[2] -
           p.phi_B * pi[2] / s23 - p.phi_B * pi[3] / s23;
    d[3] = -(y[3] - y[2]) * pi[2] / (s23 * s23) * mB + (y[3] - y[2]) * p.theta_B_minus * pi[2] / s23 -
           (y[1] - y[3]) * p.nu_H * (a[3] - lo) - 0.5 * p.gamma_H * a[3] * a[3] -
           p.phi_B * pi[2] / s23 + p.phi_B * pi[2] / s23;
    return d;
}

/// Value-function right-hand side of the no-payment equilibrium, term by term.
inline Vector handcoded_hjb_rhs(const EpidemicParams& p, const Vector& pi, const Vector& v) {
    const Vector a = handcoded_controls(p, v);
    const double s01 = city_mass(p, pi[0], pi[1]), s23 = city_mass(p, pi[2], pi[3]);
    const double lo = p.alpha_lo;
    Vector d(4);
    d[0] = (v[1] - v[0]) * p.theta_A_plus * pi[1] / s01 + (v[2] - v[0]) * p.nu_I * (a[0] - lo) +
           0.5 * p.gamma_I * a[0] * a[0] + p.phi_A * pi[0] / s01;
    d[1] = (v[0] - v[1]) * p.theta_A_minus * pi[0] / s01 + (v[3] - v[1]) * p.nu_H * (a[1] - lo) +
           0.5 * p.gamma_H * a[1] * a[1] + p.phi_A * pi[0] / s01;
    d[2] = (v[3] - v[2]) * p.theta_B_plus * pi[3] / s23 + (v[0] - v[2]) * p.nu_I * (a[2] - lo) +
           0.5 * p.gamma_I * a[2] * a[2] + p.phi_B * pi[2] / s23;
    d[3] = (v[2] - v[3]) * p.theta_B_minus * pi[2] / s23 + (v[1] - v[3]) * p.nu_H * (a[3] - lo) +
           0.5 * p.gamma_H * a[3] * a[3] + p.phi_B * pi[2] / s23;
    for (double& x : d) x = -x;  // backward-time convention: dv/dt = -(generator v + cost)
    return d;
}

/// Uniform interior point of the simplex with every entry >= floor.
inline Vector random_interior_point(Rng& rng, std::size_t m, double floor = 0.02) {
    Vector e(m);
    double s = 0.0;
    for (auto& v : e) {
        v = rng.exponential(1.0);
        s += v;
    }
    for (auto& v : e) v = floor + (1.0 - m * floor) * v / s;
    return e;
}

/// Worst absolute gap between handcoded_adjoint_rhs and -FD d/dpi H~ over random samples.
inline double appendix_gradient_check(const EpidemicParams& p, int n_samples,
                                      std::uint64_t seed = 11) {
    const LQModelSpec spec = build_epidemic_model(p);
    Rng rng(seed);
    double worst = 0.0;
    for (int n = 0; n < n_samples; ++n) {
        const double t = p.T * rng.uniform();
        const Vector pi = random_interior_point(rng, 4);
        Vector y(4);
        for (auto& v : y) v = 4.0 * rng.uniform() - 2.0;
        const Vector fd =
            fd_grad_pi_principal_hamiltonian(t, pi, y, principal_minimizer(y, spec), spec);
        const Vector hand = handcoded_adjoint_rhs(p, pi, y);
        for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(hand[i] + fd[i]));
    }
    return worst;
}

/// Swaps the city blocks: parameters A <-> B and states (0, 1) <-> (2, 3).
inline EpidemicParams swap_cities(const EpidemicParams& p) {
    EpidemicParams q = p;
    std::swap(q.theta_A_plus, q.theta_B_plus);
    std::swap(q.theta_A_minus, q.theta_B_minus);
    std::swap(q.phi_A, q.phi_B);
    std::swap(q.sigma_A, q.sigma_B);
    const Vector& e = p.p0.entries();
    q.p0 = ProbabilityVector(Vector{e[2], e[3], e[0], e[1]});
    return q;
}

// ---------------------------------------------------------------------------
// Experiments

enum class Mode { Intervention, Anarchy };

struct ReportSeries {
    std::vector<double> t;
    std::vector<double> total_infection;  // pi_AI + pi_BI
    std::vector<double> infection_A;      // pi_AI / (pi_AI + pi_AH)
    std::vector<double> infection_B;      // pi_BI / (pi_BI + pi_BH)
    std::vector<double> population_A;     // pi_AI + pi_AH
    std::vector<Vector> efforts;
};

inline ReportSeries derive_series(const EpidemicParams& p, const TimeGrid& grid,
                                  const std::vector<ProbabilityVector>& pi,
                                  const std::vector<Vector>& controls) {
    ReportSeries s;
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const Vector& e = pi[k].entries();
        s.t.push_back(grid.node(k));
        s.total_infection.push_back(e[AI] + e[BI]);
        s.infection_A.push_back(e[AI] / city_mass(p, e[AI], e[AH]));
        s.infection_B.push_back(e[BI] / city_mass(p, e[BI], e[BH]));
        s.population_A.push_back(e[AI] + e[AH]);
        s.efforts.push_back(controls[k]);
    }
    return s;
}

struct MonteCarloOptions {
    std::size_t n_paths = 10000;
    std::uint64_t seed = 20261014;
    double kappa = 0.0;
    UtilitySpec utility;
};

struct ExperimentResult {
    explicit ExperimentResult(Mode m) : mode(m) {}

    Mode mode;
    std::optional<FBODESolution> intervention;
    std::optional<AnarchySolution> anarchy;
    ReportSeries series;
    std::optional<ContractSpec> contract;
    std::optional<VerificationReport> verification;
};

inline ExperimentResult run_experiment(const EpidemicParams& params, const SweepParams& sweep,
                                       Mode mode,
                                       const std::optional<MonteCarloOptions>& mc = std::nullopt) {
    const LQModelSpec spec = build_epidemic_model(params);
    ExperimentResult r{mode};
    if (mode == Mode::Anarchy) {
        r.anarchy = solve_anarchy(spec, sweep);
        r.series = derive_series(params, sweep.grid, r.anarchy->pi_flow, r.anarchy->control_flow);
        return r;
    }
    r.intervention = solve_pmp(spec, sweep);
    r.series =
        derive_series(params, sweep.grid, r.intervention->pi_flow, r.intervention->control_flow);
    if (mc) {
        r.contract = make_contract(*r.intervention, spec, mc->utility, mc->kappa);
        r.verification = verify_contract(*r.contract, *r.intervention, spec, mc->n_paths, mc->seed);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Directional comparison of intervention against anarchy

struct DirectionalCheck {
    std::string name;
    bool held = false;
    double margin = 0.0;  // positive when the behavior holds
    std::string detail;
};

inline constexpr double kTransientFraction = 0.1;  // (a) ignores t < 0.1 T
inline constexpr double kEarlyFraction = 0.2;      // (d) window [0, 0.2 T]
inline constexpr double kSurgeFraction = 0.5;      // (b) window [0, 0.5 T]

/// `intervention`, `anarchy` share the grid; `planned` is intervention with population
/// planning and `unplanned` the same without it.
inline std::vector<DirectionalCheck> directional_checks(const ReportSeries& intervention,
                                                        const ReportSeries& anarchy,
                                                        const ReportSeries& unplanned,
                                                        const ReportSeries& planned,
                                                        double population_A0) {
    const std::size_t n = intervention.t.size();
    if (anarchy.t.size() != n || unplanned.t.size() != n || planned.t.size() != n)
        throw StructuralError("directional_checks: series lengths differ");
    const double T = intervention.t.back() - intervention.t.front();
    std::vector<DirectionalCheck> out;

    DirectionalCheck a{"total infection below anarchy after transient", false, 0.0, {}};
    a.margin = std::numeric_limits<double>::infinity();
    double worst_t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (intervention.t[k] < kTransientFraction * T) continue;
        const double m = anarchy.total_infection[k] - intervention.total_infection[k];
        if (m < a.margin) {
            a.margin = m;
            worst_t = intervention.t[k];
        }
    }
    a.held = a.margin >= 0.0;
    a.detail = "min over t >= " + std::to_string(kTransientFraction * T) +
               " of anarchy - intervention = " + std::to_string(a.margin) + " at t = " +
               std::to_string(worst_t);
    out.push_back(a);

    DirectionalCheck b{"early city-A infection surge under intervention", false, 0.0, {}};
    b.margin = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
        if (intervention.t[k] <= kSurgeFraction * T)
            b.margin = std::max(b.margin, intervention.infection_A[k] - anarchy.infection_A[k]);
    b.held = b.margin > 0.0;
    b.detail = "max over t <= " + std::to_string(kSurgeFraction * T) +
               " of intervention - anarchy city-A rate = " + std::to_string(b.margin);
    out.push_back(b);

    DirectionalCheck c{"population planning keeps city A closer to its initial size", false, 0.0, {}};
    const double gap0 = std::abs(unplanned.population_A.back() - population_A0);
    const double gap1 = std::abs(planned.population_A.back() - population_A0);
    c.margin = gap0 - gap1;
    c.held = c.margin > 0.0;
    c.detail = "terminal |pop_A - pop_A(0)|: without planning " + std::to_string(gap0) +
               ", with planning " + std::to_string(gap1);
    out.push_back(c);

    DirectionalCheck d{"BI effort above anarchy early on", false, 0.0, {}};
    d.margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
        if (intervention.t[k] <= kEarlyFraction * T)
            d.margin = std::min(d.margin, intervention.efforts[k][BI] - anarchy.efforts[k][BI]);
    d.held = d.margin > 0.0;
    d.detail = "min over t <= " + std::to_string(kEarlyFraction * T) +
               " of intervention - anarchy BI effort = " + std::to_string(d.margin);
    out.push_back(d);
    return out;
}

}  // namespace mfc
