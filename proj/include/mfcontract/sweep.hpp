#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <algorithm>
#include <string>
#include <vector>

#include "core.hpp"
#include "lq_model.hpp"
#include "markov_core.hpp"
#include "ode.hpp"

namespace mfc {

struct SweepParams {
    int max_iters = 2000;
    double damping = 0.5;  // relaxation weight on the costate update
    double tol = 1e-8;     // sup-norm fixed-point tolerance on the costate
    TimeGrid grid;
    bool check_multiplicity = true;
    int continuation_levels = 3;

    explicit SweepParams(TimeGrid g) : grid(g) {}
    static SweepParams for_horizon(double T, std::size_t n_steps = 2000) {
        return SweepParams(TimeGrid(0.0, T, n_steps));
    }
};

inline void validate(const SweepParams& p) {
    if (p.max_iters < 1) throw StructuralError("SweepParams: max_iters must be positive");
    if (!(p.damping > 0.0 && p.damping <= 1.0))
        throw StructuralError("SweepParams: damping must lie in (0, 1]");
    if (!(p.tol > 0.0)) throw StructuralError("SweepParams: tol must be positive");
}

/// Control input evaluated at time t within integration step `step`.
using ControlFn = std::function<Vector(double t, std::size_t step)>;

/// Node controls joined linearly inside each step.
inline ControlFn piecewise_linear_controls(const std::vector<Vector>& nodes, const TimeGrid& grid) {
    if (nodes.size() != grid.n_nodes())
        throw StructuralError("control flow does not match the time grid");
    return [&nodes, grid](double t, std::size_t step) {
        const double theta = std::clamp((t - grid.node(step)) / grid.dt(), 0.0, 1.0);
        const Vector& a = nodes[step];
        const Vector& b = nodes[step + 1];
        Vector out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + theta * (b[i] - a[i]);
        return out;
    };
}

/// Feedback controls read off a costate flow through the clamped minimizer.
/// `grid` is the integration grid; it may be finer than the costate grid.
inline ControlFn feedback_controls(const HermiteFlow& costate, const LQModelSpec& spec,
                                   const TimeGrid& grid) {
    const bool same_grid = costate.grid().n_steps() == grid.n_steps();
    return [&costate, &spec, same_grid](double t, std::size_t step) {
        return principal_minimizer(same_grid ? costate.at(t, step) : costate.at(t), spec);
    };
}

inline void check_controls(const Vector& a, const LQModelSpec& spec, double t) {
    for (double v : a)
        if (!(v >= spec.alpha_lo - 1e-12 && v <= spec.alpha_hi + 1e-12))
            throw StructuralError("control " + std::to_string(v) + " outside [alpha_lo, alpha_hi] at t = " +
                                  std::to_string(t));
}

/// Probability flow from p0 under controls.
inline KolmogorovFlow controlled_flow(const LQModelSpec& spec, const ControlFn& control,
                                      const TimeGrid& grid) {
    return integrate_kolmogorov_steps(
        [&](double t, std::size_t step, const Vector& pi) {
            return controlled_rates(t, pi, control(t, step), spec);
        },
        spec.p0, grid);
}

/// Backward right-hand side d x / dt at (t, step) given pi(t) and the costate x.
using BackwardRhs =
    std::function<Vector(double t, std::size_t step, const Vector& pi, const Vector& x)>;

struct CostateSystem {
    BackwardRhs rhs;
    std::function<Vector(const Vector& pi_T)> terminal;
};

/// RK4 on the time-reversed costate equation from x(T) = terminal(pi(T)).
inline HermiteFlow backward_flow(const CostateSystem& sys, const HermiteFlow& pi,
                                 const TimeGrid& grid) {
    const std::size_t n = grid.n_steps();
    const double h = grid.dt();
    const bool same_grid = pi.grid().n_steps() == n;
    auto pi_at = [&](double t, std::size_t step) {
        return same_grid ? pi.at(t, step) : pi.at(t);
    };
    auto f = [&](double t, std::size_t step, const Vector& x) {
        return sys.rhs(t, step, pi_at(t, step), x);
    };
    std::vector<Vector> values(n + 1), rates(n + 1);
    values[n] = sys.terminal(pi_at(grid.node(n), n - 1));
    for (std::size_t k = n; k-- > 0;) {
        values[k] = rk4_step(f, grid.node(k + 1), k, values[k + 1], -h);
        if (!std::isfinite(sup_norm(values[k])))
            throw DiagnosticError("costate became non-finite", grid.node(k));
    }
    for (std::size_t k = 0; k <= n; ++k) rates[k] = f(grid.node(k), k == n ? n - 1 : k, values[k]);
    return HermiteFlow(grid, std::move(values), std::move(rates));
}

inline double max_node_gap(const HermiteFlow& a, const HermiteFlow& b) {
    double gap = 0.0;
    for (std::size_t k = 0; k < a.values().size(); ++k)
        gap = std::max(gap, sup_diff(a.node(k), b.node(k)));
    return gap;
}

inline HermiteFlow blend(const HermiteFlow& old_flow, const HermiteFlow& new_flow, double w) {
    std::vector<Vector> v = old_flow.values(), r = old_flow.rates();
    for (std::size_t k = 0; k < v.size(); ++k)
        for (std::size_t i = 0; i < v[k].size(); ++i) {
            v[k][i] = (1.0 - w) * v[k][i] + w * new_flow.node(k)[i];
            r[k][i] = (1.0 - w) * r[k][i] + w * new_flow.rates()[k][i];
        }
    return HermiteFlow(old_flow.grid(), std::move(v), std::move(r));
}

inline HermiteFlow zero_flow(const TimeGrid& grid, std::size_t m) {
    return HermiteFlow(grid, std::vector<Vector>(grid.n_nodes(), Vector(m, 0.0)),
                       std::vector<Vector>(grid.n_nodes(), Vector(m, 0.0)));
}

/// Re-samples a costate guess from a shorter horizon onto `grid` by time scaling.
inline HermiteFlow stretch(const HermiteFlow& src, const TimeGrid& grid) {
    const double scale = (src.grid().t1() - src.grid().t0()) / (grid.t1() - grid.t0());
    std::vector<Vector> v(grid.n_nodes()), r(grid.n_nodes());
    const TimeGrid& g = src.grid();
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double s = g.t0() + (grid.node(k) - grid.t0()) * scale;
        v[k] = src.at(s);
        auto [step, theta] = g.locate(s);
        // derivative of the Hermite interpolant, chain-ruled by the time scale
        const double h = g.dt();
        const double t2 = theta * theta;
        const double d00 = (6 * t2 - 6 * theta) / h, d10 = 3 * t2 - 4 * theta + 1;
        const double d01 = (-6 * t2 + 6 * theta) / h, d11 = 3 * t2 - 2 * theta;
        Vector d(v[k].size());
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = scale * (d00 * src.node(step)[i] +
                            d10 * src.rates()[step][i] + d01 * src.node(step + 1)[i] +
                            d11 * src.rates()[step + 1][i]);
        r[k] = std::move(d);
    }
    return HermiteFlow(grid, std::move(v), std::move(r));
}

struct SweepOutcome {
    KolmogorovFlow pi;
    HermiteFlow pi_dense;
    HermiteFlow costate;
    int iterations = 0;
    bool converged = false;
    double last_update = std::numeric_limits<double>::infinity();
};

/// Damped Picard iteration: forward Kolmogorov under feedback controls of the
/// current costate, backward costate given that flow, relax, repeat.
// An attempt whose best update has not improved for this many sweeps is abandoned.
inline constexpr int kStallWindow = 100;

inline SweepOutcome run_sweeps(const LQModelSpec& spec, const CostateSystem& sys,
                               const TimeGrid& grid, int max_iters, double damping, double tol,
                               HermiteFlow costate) {
    SweepOutcome out{KolmogorovFlow{}, zero_flow(grid, spec.m), zero_flow(grid, spec.m)};
    double best = std::numeric_limits<double>::infinity();
    int best_it = 0;
    for (int it = 1; it <= max_iters; ++it) {
        KolmogorovFlow pi;
        HermiteFlow fresh = zero_flow(grid, spec.m);
        try {
            pi = controlled_flow(spec, feedback_controls(costate, spec, grid), grid);
            fresh = backward_flow(sys, pi.dense(grid), grid);
        } catch (const DiagnosticError&) {
            out.iterations = it;
            out.last_update = std::numeric_limits<double>::infinity();
            return out;
        }
        const double update = max_node_gap(fresh, costate);
        out.iterations = it;
        out.last_update = update;
        if (!std::isfinite(update)) return out;
        if (update < tol) {
            out.pi_dense = pi.dense(grid);
            out.pi = std::move(pi);
            out.costate = std::move(fresh);
            out.converged = true;
            return out;
        }
        if (update < best) {
            best = update;
            best_it = it;
        } else if (it - best_it > kStallWindow) {
            return out;
        }
        costate = blend(costate, fresh, damping);
    }
    return out;
}

struct FineGridResidual {
    double forward = 0.0;   // sup gap of pi over coarse nodes
    double backward = 0.0;  // sup gap of the costate over coarse nodes
    double max() const { return std::max(forward, backward); }
};

/// Re-integrates each half of the system on a 2x grid with the other half frozen.
inline FineGridResidual fine_grid_residual(const LQModelSpec& spec, const CostateSystem& sys,
                                           const HermiteFlow& pi, const HermiteFlow& costate) {
    const TimeGrid coarse = pi.grid();
    const TimeGrid fine = coarse.refined(2);
    FineGridResidual r;
    const KolmogorovFlow fwd = controlled_flow(spec, feedback_controls(costate, spec, fine), fine);
    const HermiteFlow bwd = backward_flow(sys, pi, fine);
    for (std::size_t k = 0; k < coarse.n_nodes(); ++k) {
        r.forward = std::max(r.forward, sup_diff(fwd.states[2 * k].entries(), pi.node(k)));
        r.backward = std::max(r.backward, sup_diff(bwd.node(2 * k), costate.node(k)));
    }
    return r;
}

}  // namespace mfc
