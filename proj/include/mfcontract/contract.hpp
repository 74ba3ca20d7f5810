#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "core.hpp"
#include "fbode.hpp"
#include "lq_model.hpp"
#include "markov_core.hpp"

namespace mfc {

struct ContractSpec {
    double r_hat = 0.0;
    double u_r_hat = 0.0;  // u(r_hat)
    Vector y0;
    std::vector<Matrix> z_flow;  // z_flow[k](j, i): component i of Z(t_k | current state j)
    double kappa = 0.0;
};

struct ContractRealization {
    CTMCPath path;
    double xi = 0.0;
    double agent_cost = 0.0;
    double principal_path_cost = 0.0;
};

/// Z(t_k | state j), chosen so that the agent's best response in state j reproduces a_j.
/// Diagonal entries are zero.
///
/// The best response of state j to Z is b(-sum_i lambda_ji (Z^i - Z^j) / gamma_j).
/// With equal off-j components z this is b(-z sum_i lambda_ji / gamma_j), so
/// z = -gamma_j a_j / sum_i lambda_ji inverts it.
inline std::vector<Matrix> build_z_table(const FBODESolution& sol, const LQModelSpec& spec) {
    validate(spec);
    std::vector<Matrix> table;
    table.reserve(sol.grid.n_nodes());
    for (const auto& a : sol.control_flow) {
        Matrix z(spec.m, spec.m, 0.0);
        for (std::size_t j = 0; j < spec.m; ++j) {
            const double off = -spec.gamma[j] * a[j] / lambda_row_sum(spec, j);
            for (std::size_t i = 0; i < spec.m; ++i)
                if (i != j) z(j, i) = off;
        }
        table.push_back(std::move(z));
    }
    return table;
}

/// Constant vector saturating p0 . y0 <= kappa.
inline Vector choose_y0(double kappa, const FBODESolution&, const LQModelSpec& spec) {
    return Vector(spec.m, kappa);
}

inline ContractSpec make_contract(const FBODESolution& sol, const LQModelSpec& spec,
                                  const UtilitySpec& util, double kappa) {
    const FlatPayment pay = optimal_flat_payment(util);
    ContractSpec c;
    c.r_hat = pay.r_hat;
    c.u_r_hat = util.u(pay.r_hat);
    c.y0 = choose_y0(kappa, sol, spec);
    c.z_flow = build_z_table(sol, spec);
    c.kappa = kappa;
    return c;
}

/// Rates of the solution's Markov control: Q(t, a_state(y(t)), pi(t)).
inline TimeRateFn solution_rates(const HermiteFlow& pi, const HermiteFlow& y,
                                 const LQModelSpec& spec) {
    return [&pi, &y, &spec](double t) {
        return controlled_rates(t, pi.at(t), principal_minimizer(y.at(t), spec), spec);
    };
}

/// Per-state integrand tables on the solution grid with running prefix integrals,
/// so each path is integrated segment by segment in O(jumps + log) work.
class PaymentEvaluator {
public:
    PaymentEvaluator(const ContractSpec& contract, const FBODESolution& sol, const LQModelSpec& spec)
        : contract_(contract), grid_(sol.grid), m_(spec.m) {
        if (contract.z_flow.size() != sol.grid.n_nodes())
            throw StructuralError("contract tables do not match the solution grid");
        if (contract.y0.size() != spec.m) throw StructuralError("contract y0 has the wrong size");
        const std::size_t n = grid_.n_nodes();
        cost_.assign(n, Vector(m_));
        xi_rate_.assign(n, Vector(m_));
        double c0_total = 0.0;
        std::vector<double> c0(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = grid_.node(k);
            const Vector& pi = sol.pi_flow[k].entries();
            const Vector& a = sol.control_flow[k];
            const Matrix qbar = spec.qbar(t, pi);
            c0[k] = spec.c0(t, pi);
            for (std::size_t i = 0; i < m_; ++i) {
                const double c = agent_running_cost(t, i, a[i], pi, spec);
                double drift = 0.0;
                for (std::size_t j = 0; j < m_; ++j)
                    if (j != i)
                        drift += lq_rate(qbar, spec, i, j, a[i]) *
                                 (contract.z_flow[k](i, j) - contract.z_flow[k](i, i));
                cost_[k][i] = c;
                xi_rate_[k][i] = c - contract.u_r_hat + drift;
            }
        }
        cost_prefix_ = prefix(cost_);
        xi_prefix_ = prefix(xi_rate_);
        const double h = grid_.dt();
        for (std::size_t k = 0; k + 1 < n; ++k) c0_total += 0.5 * h * (c0[k] + c0[k + 1]);
        principal_fixed_ = c0_total + contract.r_hat * (grid_.t1() - grid_.t0()) +
                           spec.C0(sol.pi_flow.back().entries());
    }

    ContractRealization realize(const CTMCPath& path) const {
        if (std::abs(path.horizon - (grid_.t1() - grid_.t0())) > 1e-12 * (1.0 + path.horizon))
            throw StructuralError("path horizon does not match the solution grid");
        ContractRealization r;
        r.path = path;
        double t = grid_.t0();
        std::size_t state = path.initial_state;
        if (state >= m_) throw StructuralError("path visits a state outside the model");
        double xi_int = 0.0, cost_int = 0.0, jumps = 0.0;
        for (const auto& j : path.jumps) {
            if (j.state >= m_) throw StructuralError("path visits a state outside the model");
            xi_int += integral(xi_prefix_, xi_rate_, state, t, j.time);
            cost_int += integral(cost_prefix_, cost_, state, t, j.time);
            // predictable integrand: Z at the pre-jump state, times e_new - e_old
            jumps += z_at(j.time, state, j.state) - z_at(j.time, state, state);
            state = j.state;
            t = j.time;
        }
        xi_int += integral(xi_prefix_, xi_rate_, state, t, grid_.t1());
        cost_int += integral(cost_prefix_, cost_, state, t, grid_.t1());
        r.xi = -contract_.y0[path.initial_state] + xi_int - jumps;
        r.agent_cost = cost_int - contract_.u_r_hat * (grid_.t1() - grid_.t0()) - r.xi;
        r.principal_path_cost = principal_fixed_ + r.xi;
        return r;
    }

    /// Integral of the agent's running cost c(t, X_t, a, pi) along the path.
    double running_cost(const CTMCPath& path) const {
        double t = grid_.t0(), total = 0.0;
        std::size_t state = path.initial_state;
        for (const auto& j : path.jumps) {
            total += integral(cost_prefix_, cost_, state, t, j.time);
            state = j.state;
            t = j.time;
        }
        return total + integral(cost_prefix_, cost_, state, t, grid_.t1());
    }

    /// Deterministic principal part: int (c0 + r_hat) dt + C0(pi(T)).
    double principal_fixed() const { return principal_fixed_; }

private:
    std::vector<Vector> prefix(const std::vector<Vector>& g) const {
        std::vector<Vector> p(g.size(), Vector(m_, 0.0));
        const double h = grid_.dt();
        for (std::size_t k = 1; k < g.size(); ++k)
            for (std::size_t i = 0; i < m_; ++i)
                p[k][i] = p[k - 1][i] + 0.5 * h * (g[k - 1][i] + g[k][i]);
        return p;
    }

    // antiderivative of the piecewise-linear interpolant of g[.][i] from t0
    double antiderivative(const std::vector<Vector>& p, const std::vector<Vector>& g,
                          std::size_t i, double t) const {
        auto [k, theta] = grid_.locate(t);
        const double h = grid_.dt();
        const double d = g[k + 1][i] - g[k][i];
        return p[k][i] + h * theta * (g[k][i] + 0.5 * theta * d);
    }

    double integral(const std::vector<Vector>& p, const std::vector<Vector>& g, std::size_t i,
                    double a, double b) const {
        return antiderivative(p, g, i, b) - antiderivative(p, g, i, a);
    }

    double z_at(double t, std::size_t state, std::size_t comp) const {
        auto [k, theta] = grid_.locate(t);
        const double a = contract_.z_flow[k](state, comp), b = contract_.z_flow[k + 1](state, comp);
        return a + theta * (b - a);
    }

    const ContractSpec& contract_;
    TimeGrid grid_;
    std::size_t m_;
    std::vector<Vector> cost_, xi_rate_, cost_prefix_, xi_prefix_;
    double principal_fixed_ = 0.0;
};

inline double terminal_payment(const CTMCPath& path, const ContractSpec& contract,
                               const FBODESolution& sol, const LQModelSpec& spec) {
    return PaymentEvaluator(contract, sol, spec).realize(path).xi;
}

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double target = 0.0;
    bool pass = false;

    double z_score() const {
        return std_error > 0.0 ? (mean - target) / std_error : 0.0;
    }
};

/// Sample mean against a deterministic target with a 3-standard-error band.
/// With zero sample variance the check demands agreement to rounding.
inline MeanEstimate estimate_mean(const std::vector<double>& xs, double target) {
    MeanEstimate e;
    e.target = target;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) e.mean += x;
    e.mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.std_error = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    const double gap = std::abs(e.mean - target);
    e.pass = e.std_error > 0.0 ? gap <= 3.0 * e.std_error
                               : gap <= 1e-9 * (1.0 + std::abs(target));
    return e;
}

struct VerificationReport {
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    MeanEstimate agent;      // agent cost vs p0 . y0
    MeanEstimate principal;  // principal cost vs W~ + T (r - u(r)) - p0 . y0
    MeanEstimate objective;  // Markov-control path cost vs the deterministic objective
    double occupancy_gap = 0.0;
    double occupancy_bound = 0.0;  // 3 sqrt(1/4 / n)
    bool occupancy_pass = false;
    std::vector<ContractRealization> realizations;

    /// The 3-SE identity checks; the occupancy gap is reported separately.
    bool pass() const { return agent.pass && principal.pass && objective.pass; }
};

inline constexpr double kDominatingFactor = 1.05;

inline std::vector<CTMCPath> simulate_solution_paths(const FBODESolution& sol,
                                                     const LQModelSpec& spec, std::size_t n_paths,
                                                     std::uint64_t seed) {
    const HermiteFlow pi = sol.pi_dense();
    const HermiteFlow y = sol.y_dense();
    const TimeRateFn rates = solution_rates(pi, y, spec);
    const double lambda = dominating_rate(rates, sol.grid, kDominatingFactor);
    return simulate_ctmc_paths(rates, spec.p0, sol.grid.t1() - sol.grid.t0(), n_paths, seed, lambda);
}

inline VerificationReport verify_contract(const ContractSpec& contract, const FBODESolution& sol,
                                          const LQModelSpec& spec, std::size_t n_paths,
                                          std::uint64_t seed) {
    if (n_paths < 1) throw StructuralError("verify_contract: need at least one path");
    VerificationReport rep;
    rep.n_paths = n_paths;
    rep.seed = seed;
    const std::vector<CTMCPath> paths = simulate_solution_paths(sol, spec, n_paths, seed);
    const PaymentEvaluator eval(contract, sol, spec);
    rep.realizations = parallel_map<ContractRealization>(
        n_paths, [&](std::size_t k) { return eval.realize(paths[k]); });

    std::vector<double> agent(n_paths), principal(n_paths), objective(n_paths);
    const double principal_base =
        eval.principal_fixed() - contract.r_hat * (sol.grid.t1() - sol.grid.t0());
    for (std::size_t k = 0; k < n_paths; ++k) {
        agent[k] = rep.realizations[k].agent_cost;
        principal[k] = rep.realizations[k].principal_path_cost;
        objective[k] = principal_base + eval.running_cost(paths[k]);
    }
    const double T = sol.grid.t1() - sol.grid.t0();
    const double p0y0 = dot(spec.p0.entries(), contract.y0);
    rep.agent = estimate_mean(agent, p0y0);
    rep.principal =
        estimate_mean(principal, sol.objective + T * (contract.r_hat - contract.u_r_hat) - p0y0);
    rep.objective = estimate_mean(objective, sol.objective);

    const auto occ = empirical_occupancy(paths, spec.m, sol.grid);
    for (std::size_t k = 0; k < occ.size(); ++k)
        rep.occupancy_gap =
            std::max(rep.occupancy_gap, sup_diff(occ[k].entries(), sol.pi_flow[k].entries()));
    rep.occupancy_bound = 3.0 * std::sqrt(0.25 / static_cast<double>(n_paths));
    rep.occupancy_pass = rep.occupancy_gap <= rep.occupancy_bound;
    return rep;
}

}  // namespace mfc
