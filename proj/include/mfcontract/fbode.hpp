#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "lq_model.hpp"
#include "markov_core.hpp"
#include "ode.hpp"
#include "sweep.hpp"

namespace mfc {

struct FBODESolution {
    explicit FBODESolution(TimeGrid g) : grid(g) {}

    TimeGrid grid;
    std::vector<ProbabilityVector> pi_flow;
    std::vector<Vector> y_flow;
    std::vector<Vector> control_flow;  // principal_minimizer(y_flow[k])
    std::vector<Vector> pi_rates;
    std::vector<Vector> y_rates;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
    double objective = 0.0;
    double last_update = 0.0;
    double damping_used = 0.0;
    std::vector<std::string> warnings;

    HermiteFlow pi_dense() const {
        std::vector<Vector> v;
        v.reserve(pi_flow.size());
        for (const auto& p : pi_flow) v.push_back(p.entries());
        return HermiteFlow(grid, std::move(v), pi_rates);
    }
    HermiteFlow y_dense() const { return HermiteFlow(grid, y_flow, y_rates); }
};

/// Adjoint system dy/dt = -d/dpi H~(pi, y, a(y)), y(T) = grad C0(pi(T)).
inline CostateSystem pmp_system(const LQModelSpec& spec) {
    return {[&spec](double t, std::size_t, const Vector& pi, const Vector& y) {
                Vector g = grad_pi_principal_hamiltonian(t, pi, y, principal_minimizer(y, spec), spec);
                for (double& v : g) v = -v;
                return g;
            },
            [&spec](const Vector& pi_T) { return spec.grad_C0(pi_T); }};
}

/// Trapezoid quadrature of the running cost along a flow plus C0(pi(T)).
/// Each step uses the controls of that step at both of its ends.
inline double objective_along(const KolmogorovFlow& flow, const ControlFn& control,
                              const LQModelSpec& spec, const TimeGrid& grid) {
    const double h = grid.dt();
    double total = 0.0;
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        const double t0 = grid.node(k), t1 = grid.node(k + 1);
        total += 0.5 * h *
                 (principal_running_cost(t0, flow.states[k].entries(), control(t0, k), spec) +
                  principal_running_cost(t1, flow.states[k + 1].entries(), control(t1, k), spec));
    }
    return total + spec.C0(flow.states.back().entries());
}

inline double evaluate_objective(const ControlFn& control, const LQModelSpec& spec,
                                 const TimeGrid& grid) {
    validate_dynamics(spec);
    const ControlFn checked = [&](double t, std::size_t step) {
        Vector a = control(t, step);
        if (a.size() != spec.m) throw StructuralError("control has the wrong dimension");
        check_controls(a, spec, t);
        return a;
    };
    const KolmogorovFlow flow = controlled_flow(spec, checked, grid);
    return objective_along(flow, checked, spec, grid);
}

/// Objective of node controls joined linearly within each step.
inline double evaluate_objective(const std::vector<Vector>& control_flow, const LQModelSpec& spec,
                                 const TimeGrid& grid) {
    for (std::size_t k = 0; k < control_flow.size(); ++k)
        check_controls(control_flow[k], spec, grid.node(std::min(k, grid.n_steps())));
    return evaluate_objective(piecewise_linear_controls(control_flow, grid), spec, grid);
}

/// Recomputes node derivatives from stored node values (e.g. after reading a CSV).
inline void rebuild_rates(FBODESolution& sol, const LQModelSpec& spec) {
    const std::size_t n = sol.grid.n_steps();
    const CostateSystem sys = pmp_system(spec);
    sol.pi_rates.assign(sol.grid.n_nodes(), Vector{});
    sol.y_rates.assign(sol.grid.n_nodes(), Vector{});
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = sol.grid.node(k);
        const Vector& pi = sol.pi_flow[k].entries();
        sol.pi_rates[k] = kolmogorov_rhs(controlled_rates(t, pi, sol.control_flow[k], spec), pi);
        sol.y_rates[k] = sys.rhs(t, k == n ? n - 1 : k, pi, sol.y_flow[k]);
    }
}

namespace detail {

inline SweepOutcome pmp_attempt(const LQModelSpec& spec, const TimeGrid& grid, int max_iters,
                                double damping, double tol, const HermiteFlow& init) {
    return run_sweeps(spec, pmp_system(spec), grid, max_iters, damping, tol, init);
}

/// Retry ladder: smaller damping, then horizon continuation from T / 2^L.
template <class Attempt>
SweepOutcome sweep_with_fallbacks(const LQModelSpec& spec, const SweepParams& params,
                                  Attempt&& attempt, double& damping_used, int& total_iters) {
    const TimeGrid& grid = params.grid;
    total_iters = 0;
    double last = 0.0;
    for (double d : {params.damping, params.damping / 2, params.damping / 4}) {
        SweepOutcome out = attempt(spec, grid, d, zero_flow(grid, spec.m));
        total_iters += out.iterations;
        last = out.last_update;
        if (out.converged) {
            damping_used = d;
            return out;
        }
    }
    const double d = params.damping / 2;
    std::optional<HermiteFlow> guess;
    for (int level = params.continuation_levels; level >= 1; --level) {
        LQModelSpec sub = spec;
        sub.T = spec.T / std::pow(2.0, level);
        const std::size_t steps =
            std::max<std::size_t>(16, grid.n_steps() >> static_cast<unsigned>(level));
        const TimeGrid sub_grid(grid.t0(), grid.t0() + sub.T, steps);
        HermiteFlow init = guess ? stretch(*guess, sub_grid) : zero_flow(sub_grid, spec.m);
        SweepOutcome out = attempt(sub, sub_grid, d, init);
        total_iters += out.iterations;
        if (!out.converged) break;
        guess = out.costate;
    }
    if (guess) {
        SweepOutcome out = attempt(spec, grid, d, stretch(*guess, grid));
        total_iters += out.iterations;
        last = out.last_update;
        if (out.converged) {
            damping_used = d;
            return out;
        }
    }
    throw ConvergenceError("forward-backward sweeps did not converge", total_iters, last);
}

}  // namespace detail

inline constexpr double kMultiplicityGap = 1e-6;

inline FBODESolution assemble_pmp_solution(const LQModelSpec& spec, const SweepOutcome& out,
                                           const TimeGrid& grid) {
    FBODESolution sol{grid};
    sol.pi_flow = out.pi.states;
    sol.pi_rates = out.pi.rates;
    sol.y_flow = out.costate.values();
    sol.y_rates = out.costate.rates();
    sol.control_flow.reserve(grid.n_nodes());
    for (const auto& y : sol.y_flow) sol.control_flow.push_back(principal_minimizer(y, spec));
    sol.converged = out.converged;
    sol.iterations = out.iterations;
    sol.last_update = out.last_update;
    const HermiteFlow y = sol.y_dense();
    sol.objective = evaluate_objective(feedback_controls(y, spec, grid), spec, grid);
    sol.residual = fine_grid_residual(spec, pmp_system(spec), sol.pi_dense(), y).max();
    return sol;
}

/// Pontryagin forward-backward solve of the principal's deterministic problem.
inline FBODESolution solve_pmp(const LQModelSpec& spec, const SweepParams& params) {
    validate_dynamics(spec);
    validate(params);
    if (std::abs(params.grid.t1() - params.grid.t0() - spec.T) > 1e-12 * spec.T)
        throw StructuralError("SweepParams grid does not span [0, T]");
    auto attempt = [&](const LQModelSpec& s, const TimeGrid& g, double d, const HermiteFlow& init) {
        return detail::pmp_attempt(s, g, params.max_iters, d, params.tol, init);
    };
    double damping = params.damping;
    int iters = 0;
    const SweepOutcome out = detail::sweep_with_fallbacks(spec, params, attempt, damping, iters);
    FBODESolution sol = assemble_pmp_solution(spec, out, params.grid);
    sol.iterations = iters;
    sol.damping_used = damping;

    if (params.check_multiplicity) {
        const SweepOutcome alt = attempt(spec, params.grid, damping / 2,
                                         zero_flow(params.grid, spec.m));
        if (alt.converged) {
            FBODESolution other = assemble_pmp_solution(spec, alt, params.grid);
            if (std::abs(other.objective - sol.objective) > kMultiplicityGap) {
                std::string w = "multiple PMP candidates: objectives " +
                                std::to_string(sol.objective) + " and " +
                                std::to_string(other.objective) + "; returning the lower";
                if (other.objective < sol.objective) {
                    other.iterations = iters + alt.iterations;
                    other.damping_used = damping / 2;
                    sol = std::move(other);
                }
                sol.warnings.push_back(std::move(w));
            }
        }
    }
    return sol;
}

// ---------------------------------------------------------------------------
// First-order optimality diagnostics

/// Central difference of the node-control objective along delta.
inline double directional_derivative_fd(const std::vector<Vector>& controls,
                                        const std::vector<Vector>& delta, const LQModelSpec& spec,
                                        const TimeGrid& grid, double eps = 1e-4) {
    auto shifted = [&](double s) {
        std::vector<Vector> a = controls;
        for (std::size_t k = 0; k < a.size(); ++k)
            for (std::size_t i = 0; i < a[k].size(); ++i)
                a[k][i] = clamp_b(a[k][i] + s * delta[k][i], spec);
        return a;
    };
    return (evaluate_objective(shifted(eps), spec, grid) -
            evaluate_objective(shifted(-eps), spec, grid)) /
           (2.0 * eps);
}

struct AdjointPrediction {
    double value = 0.0;  // trapezoid of sum_i dH~/d alpha_i * delta_i
    double scale = 0.0;  // same quadrature of the absolute magnitudes of its two parts
};

inline AdjointPrediction adjoint_directional_prediction(const FBODESolution& sol,
                                                        const std::vector<Vector>& delta,
                                                        const LQModelSpec& spec) {
    AdjointPrediction p;
    const double h = sol.grid.dt();
    for (std::size_t k = 0; k < sol.grid.n_nodes(); ++k) {
        const double w = (k == 0 || k == sol.grid.n_steps()) ? 0.5 * h : h;
        const Vector& pi = sol.pi_flow[k].entries();
        const Vector& y = sol.y_flow[k];
        const Vector& a = sol.control_flow[k];
        const Vector g = grad_alpha_principal_hamiltonian(pi, y, a, spec);
        for (std::size_t i = 0; i < spec.m; ++i) {
            double flow = 0.0;
            for (std::size_t j = 0; j < spec.m; ++j)
                if (j != i) flow += (y[j] - y[i]) * spec.lambda(i, j);
            p.value += w * g[i] * delta[k][i];
            p.scale += w * (std::abs(pi[i] * spec.gamma[i] * a[i] * delta[k][i]) +
                            std::abs(pi[i] * flow * delta[k][i]));
        }
    }
    return p;
}

/// Smooth random direction with |delta| <= 1, zeroed where the control sits within
/// eps of a bound so that both one-sided shifts stay in A.
inline std::vector<Vector> random_direction(const FBODESolution& sol, const LQModelSpec& spec,
                                            Rng& rng, double eps) {
    const double T = sol.grid.t1() - sol.grid.t0();
    constexpr int kModes = 3;
    std::vector<double> amp(spec.m * kModes), phase(spec.m * kModes);
    for (auto& a : amp) a = 2.0 * rng.uniform() - 1.0;
    for (auto& p : phase) p = 2.0 * std::numbers::pi * rng.uniform();
    std::vector<Vector> d(sol.grid.n_nodes(), Vector(spec.m, 0.0));
    for (std::size_t k = 0; k < d.size(); ++k) {
        const double s = (sol.grid.node(k) - sol.grid.t0()) / T;
        for (std::size_t i = 0; i < spec.m; ++i) {
            double v = 0.0;
            for (int q = 0; q < kModes; ++q)
                v += amp[i * kModes + q] * std::sin((q + 1) * std::numbers::pi * s + phase[i * kModes + q]);
            v /= kModes;
            const double a = sol.control_flow[k][i];
            if (a - spec.alpha_lo < eps || spec.alpha_hi - a < eps) v = 0.0;
            d[k][i] = v;
        }
    }
    return d;
}

/// Worst relative gap between FD derivatives of the objective and the adjoint
/// prediction over random admissible directions.
inline double first_order_check(const FBODESolution& sol, const LQModelSpec& spec,
                                int n_directions, std::uint64_t seed = 7, double eps = 1e-4) {
    Rng rng(seed);
    double worst = 0.0;
    for (int n = 0; n < n_directions; ++n) {
        const auto delta = random_direction(sol, spec, rng, eps);
        const double fd = directional_derivative_fd(sol.control_flow, delta, spec, sol.grid, eps);
        const AdjointPrediction pred = adjoint_directional_prediction(sol, delta, spec);
        const double scale = std::max(pred.scale, std::abs(pred.value));
        const double gap = std::abs(fd - pred.value);
        if (scale == 0.0) {
            if (gap > 0.0) worst = std::max(worst, gap);
            continue;
        }
        worst = std::max(worst, gap / scale);
    }
    return worst;
}

}  // namespace mfc
