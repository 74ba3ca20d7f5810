#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "ode.hpp"

namespace mfc {

/// A point on the probability simplex over m states.
class ProbabilityVector {
public:
    static constexpr double kSumTolerance = 1e-9;

    ProbabilityVector() = default;
    explicit ProbabilityVector(Vector entries) : p_(std::move(entries)) {
        if (p_.empty()) throw StructuralError("ProbabilityVector: empty");
        double s = 0.0;
        for (std::size_t i = 0; i < p_.size(); ++i) {
            if (!(p_[i] >= 0.0))
                throw StructuralError("ProbabilityVector: entry " + std::to_string(i) +
                                      " is negative or NaN");
            s += p_[i];
        }
        if (std::abs(s - 1.0) > kSumTolerance)
            throw StructuralError("ProbabilityVector: entries sum to " + std::to_string(s));
    }

    static ProbabilityVector uniform(std::size_t m) {
        return ProbabilityVector(Vector(m, 1.0 / static_cast<double>(m)));
    }
    static ProbabilityVector point_mass(std::size_t m, std::size_t i) {
        Vector v(m, 0.0);
        v.at(i) = 1.0;
        return ProbabilityVector(std::move(v));
    }

    std::size_t size() const noexcept { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    const Vector& entries() const noexcept { return p_; }
    bool operator==(const ProbabilityVector&) const = default;

private:
    Vector p_;
};

/// Square m x m transition-rate matrix. Structure (nonnegative off-diagonal,
/// zero row sums) is checked by validate_rate_matrix, not by construction.
class RateMatrix {
public:
    RateMatrix() = default;
    explicit RateMatrix(Matrix q) : q_(std::move(q)) {
        if (q_.rows() != q_.cols()) throw StructuralError("RateMatrix must be square");
    }
    explicit RateMatrix(std::size_t m) : q_(m, m, 0.0) {}

    /// Builds the generator whose diagonal makes every row sum to zero.
    static RateMatrix from_off_diagonal(const Matrix& off) {
        if (off.rows() != off.cols()) throw StructuralError("RateMatrix must be square");
        const std::size_t m = off.rows();
        Matrix q(m, m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double exit = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j == i) continue;
                q(i, j) = off(i, j);
                exit += off(i, j);
            }
            q(i, i) = -exit;
        }
        return RateMatrix(std::move(q));
    }

    /// Q0: every off-diagonal rate equal to 1.
    static RateMatrix reference(std::size_t m) {
        return from_off_diagonal(Matrix(m, m, 1.0));
    }

    std::size_t size() const noexcept { return q_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return q_(i, j); }
    const Matrix& matrix() const noexcept { return q_; }
    double exit_rate(std::size_t i) const {
        double s = 0.0;
        for (std::size_t j = 0; j < size(); ++j)
            if (j != i) s += q_(i, j);
        return s;
    }

private:
    Matrix q_;
};

struct RateViolation {
    enum class Kind { NegativeRate, RowSum };
    Kind kind;
    std::size_t row;
    std::size_t col;  // equals row for RowSum violations
    double value;
};

struct RateCheck {
    std::vector<RateViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
    std::string describe() const {
        std::ostringstream os;
        for (const auto& v : violations) {
            if (v.kind == RateViolation::Kind::NegativeRate)
                os << "negative rate " << v.value << " at (" << v.row << "," << v.col << "); ";
            else
                os << "row " << v.row << " sums to " << v.value << "; ";
        }
        return os.str();
    }
};

inline constexpr double kRowSumTolerance = 1e-12;

/// Off-diagonal entries must be nonnegative and rows must sum to zero.
/// Indices in the report are zero-based.
inline RateCheck validate_rate_matrix(const RateMatrix& q) {
    const std::size_t m = q.size();
    if (m < 2) throw StructuralError("rate matrix needs at least 2 states");
    RateCheck check;
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            row += q(i, j);
            if (j != i && !(q(i, j) >= 0.0))
                check.violations.push_back({RateViolation::Kind::NegativeRate, i, j, q(i, j)});
        }
        if (!(std::abs(row) <= kRowSumTolerance))
            check.violations.push_back({RateViolation::Kind::RowSum, i, i, row});
    }
    return check;
}

/// sqrt(sum_{j != i} (z_j - z_i)^2): the conditional quadratic-variation seminorm.
inline double seminorm(const Vector& z, std::size_t i) {
    if (i >= z.size()) throw StructuralError("seminorm: state index out of range");
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (j == i) continue;
        const double d = z[j] - z[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Kolmogorov forward right-hand side: (Q^T pi)_i.
inline Vector kolmogorov_rhs(const RateMatrix& q, const Vector& pi) {
    const std::size_t m = q.size();
    if (pi.size() != m) throw StructuralError("kolmogorov_rhs: dimension mismatch");
    Vector out(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i) out[i] += pi[j] * q(j, i);
    return out;
}

using RateFn = std::function<RateMatrix(double t, const Vector& pi)>;
using StepRateFn = std::function<RateMatrix(double t, std::size_t step, const Vector& pi)>;

/// Integrated probability flow with its renormalization diagnostics.
struct KolmogorovFlow {
    std::vector<ProbabilityVector> states;
    std::vector<Vector> rates;        // d pi / dt at each node
    double cumulative_drift = 0.0;    // total mass moved by clip-and-renormalize
    double max_sum_defect = 0.0;      // max |sum(pi) - 1| before renormalization
    double min_raw_entry = 0.0;       // most negative entry before clipping

    HermiteFlow dense(const TimeGrid& grid) const {
        std::vector<Vector> v;
        v.reserve(states.size());
        for (const auto& s : states) v.push_back(s.entries());
        return HermiteFlow(grid, std::move(v), rates);
    }
};

inline constexpr double kMaxRenormalizationDrift = 1e-6;

/// Classical RK4 on d pi/dt = Q(t, step, pi)^T pi, renormalizing after each step.
inline KolmogorovFlow integrate_kolmogorov_steps(const StepRateFn& rate_fn,
                                                 const ProbabilityVector& p0,
                                                 const TimeGrid& grid) {
    auto rhs = [&](double t, std::size_t step, const Vector& pi) {
        const RateMatrix q = rate_fn(t, step, pi);
        if (q.size() != pi.size())
            throw StructuralError("rate function returned a matrix of the wrong size");
        const RateCheck check = validate_rate_matrix(q);
        if (!check.ok()) throw DiagnosticError("invalid generator: " + check.describe(), t);
        return kolmogorov_rhs(q, pi);
    };

    KolmogorovFlow flow;
    flow.states.reserve(grid.n_nodes());
    flow.rates.reserve(grid.n_nodes());
    flow.states.push_back(p0);
    const double h = grid.dt();
    const std::size_t n = grid.n_steps();
    Vector x = p0.entries();
    for (std::size_t k = 0; k < n; ++k) {
        flow.rates.push_back(rhs(grid.node(k), k, x));
        Vector raw = rk4_step(rhs, grid.node(k), k, x, h);
        double sum = 0.0, clipped = 0.0;
        for (double& v : raw) {
            flow.min_raw_entry = std::min(flow.min_raw_entry, v);
            if (v < 0.0) {
                clipped += -v;
                v = 0.0;
            }
            sum += v;
        }
        flow.max_sum_defect = std::max(flow.max_sum_defect, std::abs(sum - clipped - 1.0));
        flow.cumulative_drift += std::abs(sum - 1.0);
        if (flow.cumulative_drift > kMaxRenormalizationDrift)
            throw DiagnosticError("probability flow left the simplex (drift " +
                                      std::to_string(flow.cumulative_drift) + ")",
                                  grid.node(k + 1));
        if (!(sum > 0.0)) throw DiagnosticError("probability flow lost all mass", grid.node(k + 1));
        for (double& v : raw) v /= sum;
        x = std::move(raw);
        flow.states.emplace_back(x);
    }
    flow.rates.push_back(rhs(grid.node(n), n - 1, x));
    return flow;
}

inline KolmogorovFlow integrate_kolmogorov(const RateFn& rate_fn, const ProbabilityVector& p0,
                                           const TimeGrid& grid) {
    return integrate_kolmogorov_steps(
        [&](double t, std::size_t, const Vector& pi) { return rate_fn(t, pi); }, p0, grid);
}

// ---------------------------------------------------------------------------
// Path simulation

/// splitmix64 finalizer, used to decorrelate the per-path seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// xoshiro256** with a fixed, platform-independent uniform transform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) {
            s = splitmix64(s);
            w = s;
        }
    }
    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }
    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

struct Jump {
    double time;
    std::size_t state;
    bool operator==(const Jump&) const = default;
};

/// One realized trajectory: initial state, then (time, new state) records.
struct CTMCPath {
    std::size_t initial_state = 0;
    std::vector<Jump> jumps;
    double horizon = 0.0;

    /// Right-continuous state at time t.
    std::size_t state_at(double t) const {
        std::size_t s = initial_state;
        for (const auto& j : jumps) {
            if (j.time > t) break;
            s = j.state;
        }
        return s;
    }
    std::size_t final_state() const { return jumps.empty() ? initial_state : jumps.back().state; }
    bool operator==(const CTMCPath&) const = default;
};

using TimeRateFn = std::function<RateMatrix(double t)>;

/// Dominating intensity for uniformization: factor * sup of exit rates on the grid.
inline double dominating_rate(const TimeRateFn& rate_fn, const TimeGrid& grid,
                              double factor = 1.05) {
    double sup = 0.0;
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const RateMatrix q = rate_fn(grid.node(k));
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double e = q.exit_rate(i);
            if (!std::isfinite(e)) throw StructuralError("unbounded transition rate detected");
            sup = std::max(sup, e);
        }
    }
    return factor * sup;
}

inline std::size_t sample_categorical(const Vector& p, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return i;
    }
    // u landed in the rounding gap above the last partial sum
    for (std::size_t i = p.size(); i-- > 0;)
        if (p[i] > 0.0) return i;
    return p.size() - 1;
}

/// Uniformization: candidate events at rate Lambda, accepted as a jump i -> j
/// with probability q(t,i,j)/Lambda. Throws if a visited exit rate exceeds Lambda.
inline CTMCPath simulate_ctmc_path(const TimeRateFn& rate_fn, const ProbabilityVector& p0,
                                   double horizon, std::uint64_t seed, double lambda) {
    if (!(horizon > 0.0)) throw StructuralError("simulate_ctmc_path: horizon must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw StructuralError("simulate_ctmc_path: invalid dominating rate");
    Rng rng(seed);
    CTMCPath path;
    path.horizon = horizon;
    path.initial_state = sample_categorical(p0.entries(), rng);
    if (lambda == 0.0) {
        // no intensity anywhere on the grid; verify at the endpoints
        for (double t : {0.0, horizon})
            if (rate_fn(t).exit_rate(path.initial_state) > 0.0)
                throw StructuralError("unbounded transition rate detected: dominating rate is 0");
        return path;
    }
    std::size_t state = path.initial_state;
    double t = 0.0;
    while (true) {
        t += rng.exponential(lambda);
        if (t > horizon) break;
        const RateMatrix q = rate_fn(t);
        const double exit = q.exit_rate(state);
        if (!(exit <= lambda * (1.0 + 1e-12)))
            throw StructuralError("unbounded transition rate detected: exit rate " +
                                  std::to_string(exit) + " exceeds dominating rate " +
                                  std::to_string(lambda));
        const double u = rng.uniform() * lambda;
        double acc = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            if (j == state) continue;
            acc += q(state, j);
            if (u < acc) {
                state = j;
                path.jumps.push_back({t, j});
                break;
            }
        }
    }
    return path;
}

inline CTMCPath simulate_ctmc_path(const TimeRateFn& rate_fn, const ProbabilityVector& p0,
                                   double horizon, std::uint64_t seed) {
    const double lambda = dominating_rate(rate_fn, TimeGrid(0.0, horizon, 1000));
    return simulate_ctmc_path(rate_fn, p0, horizon, seed, lambda);
}

/// Runs fn(k) for k in [0, n) across hardware threads; output order is by k.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& fn) {
    std::vector<T> out(n);
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) out[k] = fn(k);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < n; k += workers) out[k] = fn(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Path k is seeded with seed ^ k, so any subset can be regenerated independently.
inline std::vector<CTMCPath> simulate_ctmc_paths(const TimeRateFn& rate_fn,
                                                 const ProbabilityVector& p0, double horizon,
                                                 std::size_t n_paths, std::uint64_t seed,
                                                 double lambda) {
    return parallel_map<CTMCPath>(n_paths, [&](std::size_t k) {
        return simulate_ctmc_path(rate_fn, p0, horizon, seed ^ static_cast<std::uint64_t>(k),
                                  lambda);
    });
}

/// Fraction of paths occupying each state at every grid node.
inline std::vector<ProbabilityVector> empirical_occupancy(const std::vector<CTMCPath>& paths,
                                                          std::size_t m, const TimeGrid& grid) {
    if (paths.empty()) throw StructuralError("empirical_occupancy: no paths");
    const double horizon = paths.front().horizon;
    for (const auto& p : paths)
        if (p.horizon != horizon) throw StructuralError("empirical_occupancy: horizons differ");
    std::vector<std::vector<std::size_t>> counts(grid.n_nodes(), std::vector<std::size_t>(m, 0));
    for (const auto& p : paths) {
        std::size_t state = p.initial_state;
        std::size_t next = 0;
        for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
            const double t = grid.node(k);
            while (next < p.jumps.size() && p.jumps[next].time <= t) state = p.jumps[next++].state;
            if (state >= m) throw StructuralError("empirical_occupancy: state out of range");
            ++counts[k][state];
        }
    }
    std::vector<ProbabilityVector> out;
    out.reserve(grid.n_nodes());
    const double n = static_cast<double>(paths.size());
    for (const auto& c : counts) {
        Vector v(m);
        for (std::size_t i = 0; i < m; ++i) v[i] = static_cast<double>(c[i]) / n;
        out.emplace_back(std::move(v));
    }
    return out;
}

}  // namespace mfc
