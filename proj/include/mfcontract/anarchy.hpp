#pragma once

#include <string>
#include <vector>

#include "core.hpp"
#include "fbode.hpp"
#include "lq_model.hpp"
#include "markov_core.hpp"
#include "sweep.hpp"

namespace mfc {

struct AnarchySolution {
    explicit AnarchySolution(TimeGrid g) : grid(g) {}

    TimeGrid grid;
    std::vector<Vector> v_flow;
    std::vector<ProbabilityVector> pi_flow;
    std::vector<Vector> control_flow;  // a(v_flow[k])
    std::vector<Vector> pi_rates;
    std::vector<Vector> v_rates;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
    double last_update = 0.0;
    double damping_used = 0.0;

    HermiteFlow pi_dense() const {
        std::vector<Vector> v;
        v.reserve(pi_flow.size());
        for (const auto& p : pi_flow) v.push_back(p.entries());
        return HermiteFlow(grid, std::move(v), pi_rates);
    }
    HermiteFlow v_dense() const { return HermiteFlow(grid, v_flow, v_rates); }
};

/// dv_i/dt = -[sum_{j != i} (v_j - v_i) q_ij(t, a_i, pi) + c1_i + gamma_i a_i^2 / 2].
inline Vector hjb_rhs(double t, const Vector& pi, const Vector& v, const Vector& alpha,
                      const LQModelSpec& spec) {
    const Matrix qbar = spec.qbar(t, pi);
    Vector out(spec.m);
    for (std::size_t i = 0; i < spec.m; ++i) {
        double s = agent_running_cost(t, i, alpha[i], pi, spec);
        for (std::size_t j = 0; j < spec.m; ++j)
            if (j != i) s += (v[j] - v[i]) * lq_rate(qbar, spec, i, j, alpha[i]);
        out[i] = -s;
    }
    return out;
}

/// Best-response HJB with the minimizer taken pointwise, v(T) = 0.
inline CostateSystem hjb_system(const LQModelSpec& spec) {
    return {[&spec](double t, std::size_t, const Vector& pi, const Vector& v) {
                return hjb_rhs(t, pi, v, principal_minimizer(v, spec), spec);
            },
            [&spec](const Vector&) { return Vector(spec.m, 0.0); }};
}

/// Linear value equation of a fixed control schedule, v(T) = 0.
inline CostateSystem policy_system(const LQModelSpec& spec, ControlFn control) {
    return {[&spec, control](double t, std::size_t step, const Vector& pi, const Vector& v) {
                return hjb_rhs(t, pi, v, control(t, step), spec);
            },
            [&spec](const Vector&) { return Vector(spec.m, 0.0); }};
}

/// Mean-field equilibrium without payments: HJB backward, Kolmogorov forward.
inline AnarchySolution solve_anarchy(const LQModelSpec& spec, const SweepParams& params) {
    validate_dynamics(spec);
    validate(params);
    if (std::abs(params.grid.t1() - params.grid.t0() - spec.T) > 1e-12 * spec.T)
        throw StructuralError("SweepParams grid does not span [0, T]");
    auto attempt = [&](const LQModelSpec& s, const TimeGrid& g, double d, const HermiteFlow& init) {
        return run_sweeps(s, hjb_system(s), g, params.max_iters, d, params.tol, init);
    };
    double damping = params.damping;
    int iters = 0;
    const SweepOutcome out = detail::sweep_with_fallbacks(spec, params, attempt, damping, iters);

    AnarchySolution sol{params.grid};
    sol.pi_flow = out.pi.states;
    sol.pi_rates = out.pi.rates;
    sol.v_flow = out.costate.values();
    sol.v_rates = out.costate.rates();
    for (const auto& v : sol.v_flow) sol.control_flow.push_back(principal_minimizer(v, spec));
    sol.converged = out.converged;
    sol.iterations = iters;
    sol.last_update = out.last_update;
    sol.damping_used = damping;
    sol.residual = fine_grid_residual(spec, hjb_system(spec), sol.pi_dense(), sol.v_dense()).max();
    return sol;
}

/// Best-response HJB against a frozen flow.
inline HermiteFlow best_response_values(const HermiteFlow& pi, const LQModelSpec& spec) {
    return backward_flow(hjb_system(spec), pi, pi.grid());
}

/// Value of following `controls` (node schedule) against a frozen flow.
inline HermiteFlow policy_values(const HermiteFlow& pi, const std::vector<Vector>& controls,
                                 const LQModelSpec& spec) {
    return backward_flow(policy_system(spec, piecewise_linear_controls(controls, pi.grid())), pi,
                         pi.grid());
}

/// p0 . (v_policy(0) - v_best_response(0)) with the solution's flow frozen.
inline double exploitability(const AnarchySolution& sol, const LQModelSpec& spec) {
    const HermiteFlow pi = sol.pi_dense();
    const HermiteFlow v_pol = policy_values(pi, sol.control_flow, spec);
    const HermiteFlow v_br = best_response_values(pi, spec);
    return dot(spec.p0.entries(), v_pol.node(0)) - dot(spec.p0.entries(), v_br.node(0));
}

}  // namespace mfc
