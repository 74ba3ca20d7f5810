#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "core.hpp"
#include "markov_core.hpp"

namespace mfc {

/// Problem data of the linear-quadratic principal / mean-field-agent model.
///
/// Off-diagonal rates are q_ij(t, alpha, pi) = qbar_ij(t, pi) + lambda_ij (alpha - alpha_lo);
/// the running cost of an agent in state i is c1(t, i, pi) + gamma_i alpha^2 / 2.
struct LQModelSpec {
    using PiMatrixFn = std::function<Matrix(double t, const Vector& pi)>;
    using StateCostFn = std::function<double(double t, std::size_t i, const Vector& pi)>;
    using PiScalarFn = std::function<double(double t, const Vector& pi)>;
    using TerminalFn = std::function<double(const Vector& pi)>;
    using TerminalGradFn = std::function<Vector(const Vector& pi)>;
    using HamiltonianGradFn =
        std::function<Vector(double t, const Vector& pi, const Vector& y, const Vector& alpha)>;

    std::size_t m = 0;
    Matrix lambda;
    PiMatrixFn qbar;
    StateCostFn c1;
    Vector gamma;
    double alpha_lo = 0.0;
    double alpha_hi = 1.0;
    PiScalarFn c0;
    TerminalFn C0;
    TerminalGradFn grad_C0;
    HamiltonianGradFn grad_pi_H;  // optional analytic d/dpi of the principal Hamiltonian
    ProbabilityVector p0;
    double T = 1.0;
};

/// Shape and sign checks needed to integrate the model. Does not require
/// every state to have a control-sensitive exit.
inline void validate_dynamics(const LQModelSpec& spec) {
    const std::size_t m = spec.m;
    if (m < 2) throw StructuralError("LQModelSpec: need m >= 2");
    if (spec.lambda.rows() != m || spec.lambda.cols() != m)
        throw StructuralError("LQModelSpec: lambda must be m x m");
    if (spec.gamma.size() != m) throw StructuralError("LQModelSpec: gamma must have m entries");
    if (spec.p0.size() != m) throw StructuralError("LQModelSpec: p0 must have m entries");
    if (!spec.qbar || !spec.c1 || !spec.c0 || !spec.C0 || !spec.grad_C0)
        throw StructuralError("LQModelSpec: qbar, c1, c0, C0 and grad_C0 are required");
    if (!(spec.alpha_lo < spec.alpha_hi))
        throw StructuralError("LQModelSpec: need alpha_lo < alpha_hi");
    if (!(spec.T > 0.0)) throw StructuralError("LQModelSpec: horizon T must be positive");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(spec.gamma[i] > 0.0))
            throw StructuralError("LQModelSpec: gamma_" + std::to_string(i) + " must be positive");
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            if (!(spec.lambda(i, j) >= 0.0))
                throw StructuralError("LQModelSpec: lambda(" + std::to_string(i) + "," +
                                      std::to_string(j) + ") is negative");
        }
    }
    const Matrix q = spec.qbar(0.0, spec.p0.entries());
    if (q.rows() != m || q.cols() != m) throw StructuralError("LQModelSpec: qbar must be m x m");
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j && !(q(i, j) >= 0.0))
                throw StructuralError("LQModelSpec: qbar has a negative off-diagonal entry");
}

/// Full check: additionally every state needs sum_{j != i} lambda_ij > 0.
inline void validate(const LQModelSpec& spec) {
    validate_dynamics(spec);
    for (std::size_t i = 0; i < spec.m; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < spec.m; ++j)
            if (j != i) row += spec.lambda(i, j);
        if (!(row > 0.0))
            throw StructuralError("LQModelSpec: lambda row " + std::to_string(i) +
                                  " has no control-sensitive exit");
    }
}

/// Projection onto the control set A = [alpha_lo, alpha_hi].
inline double clamp_b(double z, const LQModelSpec& spec) {
    return std::min(std::max(z, spec.alpha_lo), spec.alpha_hi) + 0.0;  // no -0 in outputs
}

inline double lambda_row_sum(const LQModelSpec& spec, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.m; ++j)
        if (j != i) s += spec.lambda(i, j);
    return s;
}

/// Minimizer over A of alpha -> H_i(t, z, alpha, p, r): b(-(1/gamma_i) sum_j lambda_ij (z_j - z_i)).
inline double agent_best_response(std::size_t i, const Vector& z, const LQModelSpec& spec) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.m; ++j)
        if (j != i) s += spec.lambda(i, j) * (z[j] - z[i]);
    return clamp_b(-s / spec.gamma[i], spec);
}

/// Rate of i -> j (i != j) for an agent in state i using control a.
inline double lq_rate(const Matrix& qbar, const LQModelSpec& spec, std::size_t i, std::size_t j,
                      double a) {
    return qbar(i, j) + spec.lambda(i, j) * (a - spec.alpha_lo);
}

/// Generator when the agent in state i uses control alpha[i].
inline RateMatrix controlled_rates(double t, const Vector& pi, const Vector& alpha,
                                   const LQModelSpec& spec) {
    const Matrix qbar = spec.qbar(t, pi);
    Matrix off(spec.m, spec.m, 0.0);
    for (std::size_t i = 0; i < spec.m; ++i)
        for (std::size_t j = 0; j < spec.m; ++j)
            if (i != j) off(i, j) = lq_rate(qbar, spec, i, j, alpha[i]);
    return RateMatrix::from_off_diagonal(off);
}

inline double agent_running_cost(double t, std::size_t i, double a, const Vector& pi,
                                 const LQModelSpec& spec) {
    return spec.c1(t, i, pi) + 0.5 * spec.gamma[i] * a * a;
}

/// H_i(t, z, alpha, p, r) = c(t, e_i, alpha, p) - r + sum_{j != i} (z_j - z_i)(q_ij - 1).
inline double reduced_hamiltonian(double t, std::size_t i, const Vector& z, double alpha,
                                  const Vector& pi, double r, const LQModelSpec& spec) {
    const Matrix qbar = spec.qbar(t, pi);
    double h = agent_running_cost(t, i, alpha, pi, spec) - r;
    for (std::size_t j = 0; j < spec.m; ++j)
        if (j != i) h += (z[j] - z[i]) * (lq_rate(qbar, spec, i, j, alpha) - 1.0);
    return h;
}

/// c0(t, pi) + sum_i pi_i [c1(t, e_i, pi) + gamma_i alpha_i^2 / 2].
inline double principal_running_cost(double t, const Vector& pi, const Vector& alpha,
                                      const LQModelSpec& spec) {
    double s = spec.c0(t, pi);
    for (std::size_t i = 0; i < spec.m; ++i)
        s += pi[i] * agent_running_cost(t, i, alpha[i], pi, spec);
    return s;
}

/// d pi/dt = d/dy of the principal Hamiltonian: the controlled Kolmogorov drift.
inline Vector grad_y_principal_hamiltonian(double t, const Vector& pi, const Vector&,
                                           const Vector& alpha, const LQModelSpec& spec) {
    return kolmogorov_rhs(controlled_rates(t, pi, alpha, spec), pi);
}

/// <y, Kolmogorov drift> + running cost.
inline double principal_hamiltonian(double t, const Vector& pi, const Vector& y,
                                    const Vector& alpha, const LQModelSpec& spec) {
    return dot(y, grad_y_principal_hamiltonian(t, pi, y, alpha, spec)) +
           principal_running_cost(t, pi, alpha, spec);
}

/// Componentwise clamped minimizer of alpha -> principal Hamiltonian.
inline Vector principal_minimizer(const Vector& y, const LQModelSpec& spec) {
    Vector a(spec.m);
    for (std::size_t i = 0; i < spec.m; ++i) a[i] = agent_best_response(i, y, spec);
    return a;
}

/// d/d alpha_i of the principal Hamiltonian: pi_i (sum_k (y_k - y_i) lambda_ik + gamma_i alpha_i).
inline Vector grad_alpha_principal_hamiltonian(const Vector& pi, const Vector& y,
                                               const Vector& alpha, const LQModelSpec& spec) {
    Vector g(spec.m);
    for (std::size_t i = 0; i < spec.m; ++i) {
        double s = spec.gamma[i] * alpha[i];
        for (std::size_t k = 0; k < spec.m; ++k)
            if (k != i) s += (y[k] - y[i]) * spec.lambda(i, k);
        g[i] = pi[i] * s;
    }
    return g;
}

inline constexpr double kFdStep = 1e-6;

/// Central differences in pi (one-sided where pi_i < kFdStep).
inline Vector fd_grad_pi_principal_hamiltonian(double t, const Vector& pi, const Vector& y,
                                               const Vector& alpha, const LQModelSpec& spec,
                                               double h = kFdStep) {
    Vector g(spec.m);
    Vector p = pi;
    for (std::size_t i = 0; i < spec.m; ++i) {
        const double base = p[i];
        if (base < h) {
            const double f0 = principal_hamiltonian(t, p, y, alpha, spec);
            p[i] = base + h;
            g[i] = (principal_hamiltonian(t, p, y, alpha, spec) - f0) / h;
        } else {
            p[i] = base + h;
            const double fp = principal_hamiltonian(t, p, y, alpha, spec);
            p[i] = base - h;
            const double fm = principal_hamiltonian(t, p, y, alpha, spec);
            g[i] = (fp - fm) / (2.0 * h);
        }
        p[i] = base;
    }
    return g;
}

inline Vector grad_pi_principal_hamiltonian(double t, const Vector& pi, const Vector& y,
                                            const Vector& alpha, const LQModelSpec& spec) {
    if (spec.grad_pi_H) return spec.grad_pi_H(t, pi, y, alpha);
    return fd_grad_pi_principal_hamiltonian(t, pi, y, alpha, spec);
}

// ---------------------------------------------------------------------------
// Flat payment stream

struct UtilitySpec {
    std::function<double(double)> u;
    double r_lo = 0.0;
    double r_hi = 1e3;
};

inline void validate(const UtilitySpec& util, std::size_t samples = 257) {
    if (!util.u) throw StructuralError("UtilitySpec: u is required");
    if (!(util.r_lo < util.r_hi) || !std::isfinite(util.r_lo) || !std::isfinite(util.r_hi))
        throw StructuralError("UtilitySpec: r_domain must be a bounded interval");
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < samples; ++k) {
        const double r = util.r_lo + (util.r_hi - util.r_lo) * static_cast<double>(k) /
                                         static_cast<double>(samples - 1);
        const double v = util.u(r);
        if (!std::isfinite(v)) throw StructuralError("UtilitySpec: u is not finite on r_domain");
        if (v < prev - 1e-12 * (1.0 + std::abs(prev)))
            throw StructuralError("UtilitySpec: u decreases on r_domain");
        prev = v;
    }
}

struct FlatPayment {
    double r_hat;
    double gap;  // r_hat - u(r_hat)
};

/// Golden-section minimization of r - u(r) on r_domain; ties go to the left endpoint.
inline FlatPayment optimal_flat_payment(const UtilitySpec& util, double tol = 1e-8) {
    validate(util);
    auto f = [&](double r) {
        const double v = r - util.u(r);
        if (!std::isfinite(v)) throw StructuralError("optimal_flat_payment: u is not finite");
        return v;
    };
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = util.r_lo, b = util.r_hi;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    double r = 0.5 * (a + b);
    double fr = f(r);
    const double f_left = f(util.r_lo);
    if (f_left <= fr + 1e-12 * (1.0 + std::abs(fr))) {
        r = util.r_lo;
        fr = f_left;
    }
    return {r, fr};
}

}  // namespace mfc
