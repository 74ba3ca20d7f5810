#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <vector>

#include "core.hpp"

namespace mfc {

/// Right-hand side evaluated at time t inside integration step `step`.
/// The step index lets piecewise inputs (controls) pick the correct side of
/// a discontinuity sitting on a grid node.
template <class F>
concept StepRhs = requires(F f, double t, std::size_t step, const Vector& x) {
    { f(t, step, x) } -> std::convertible_to<Vector>;
};

namespace detail {
inline Vector axpy(const Vector& x, double a, const Vector& k) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * k[i];
    return out;
}
}  // namespace detail

/// One classical RK4 step from (t, x) with signed step h.
template <StepRhs F>
Vector rk4_step(F& f, double t, std::size_t step, const Vector& x, double h) {
    const Vector k1 = f(t, step, x);
    const Vector k2 = f(t + 0.5 * h, step, detail::axpy(x, 0.5 * h, k1));
    const Vector k3 = f(t + 0.5 * h, step, detail::axpy(x, 0.5 * h, k2));
    const Vector k4 = f(t + h, step, detail::axpy(x, h, k3));
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

/// Node values plus node derivatives on a uniform grid, with cubic Hermite
/// dense output between nodes (fourth-order accurate for smooth flows).
class HermiteFlow {
public:
    HermiteFlow(TimeGrid grid, std::vector<Vector> values, std::vector<Vector> rates)
        : grid_(grid), values_(std::move(values)), rates_(std::move(rates)) {
        if (values_.size() != grid_.n_nodes() || rates_.size() != grid_.n_nodes())
            throw StructuralError("HermiteFlow: node count does not match grid");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<Vector>& values() const noexcept { return values_; }
    const std::vector<Vector>& rates() const noexcept { return rates_; }
    const Vector& node(std::size_t k) const { return values_[k]; }
    std::size_t dim() const { return values_.front().size(); }

    Vector at_step(std::size_t k, double theta) const {
        if (theta == 0.0) return values_[k];
        if (theta == 1.0) return values_[k + 1];
        const double h = grid_.dt();
        const double t2 = theta * theta, t3 = t2 * theta;
        const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + theta;
        const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        const Vector& y0 = values_[k];
        const Vector& y1 = values_[k + 1];
        const Vector& f0 = rates_[k];
        const Vector& f1 = rates_[k + 1];
        Vector out(y0.size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
        return out;
    }

    Vector at(double t) const {
        auto [k, theta] = grid_.locate(t);
        return at_step(k, theta);
    }

    /// Evaluation inside a known step (avoids re-locating at step ends).
    Vector at(double t, std::size_t step) const {
        const double theta = (t - grid_.node(step)) / grid_.dt();
        return at_step(step, std::clamp(theta, 0.0, 1.0));
    }

private:
    TimeGrid grid_;
    std::vector<Vector> values_;
    std::vector<Vector> rates_;
};

}  // namespace mfc
