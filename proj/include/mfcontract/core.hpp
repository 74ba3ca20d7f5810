#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfc {

using Vector = std::vector<double>;

/// Any violated precondition on shapes, parameters or model structure.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical invariant broke at a specific time during integration.
class DiagnosticError : public std::runtime_error {
public:
    DiagnosticError(const std::string& what, double time)
        : std::runtime_error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Fixed-point sweeps did not reach tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, int iterations, double last_update)
        : std::runtime_error(what + " after " + std::to_string(iterations) +
                             " sweeps, last update " + std::to_string(last_update)),
          iterations_(iterations), last_update_(last_update) {}
    int iterations() const noexcept { return iterations_; }
    double last_update() const noexcept { return last_update_; }

private:
    int iterations_;
    double last_update_;
};

/// Dense row-major matrix; only small (m x m) sizes appear in this library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw StructuralError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double sup_norm(const Vector& a) {
    double s = 0.0;
    for (double v : a) s = std::max(s, std::abs(v));
    return s;
}

inline double sup_diff(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw StructuralError("sup_diff: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw StructuralError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Uniform grid t0 < t1 split into n_steps equal steps.
class TimeGrid {
public:
    TimeGrid(double t0, double t1, std::size_t n_steps) : t0_(t0), t1_(t1), n_(n_steps) {
        if (!(t0 < t1)) throw StructuralError("TimeGrid requires t0 < t1");
        if (n_steps < 1) throw StructuralError("TimeGrid requires n_steps >= 1");
    }

    double t0() const noexcept { return t0_; }
    double t1() const noexcept { return t1_; }
    std::size_t n_steps() const noexcept { return n_; }
    std::size_t n_nodes() const noexcept { return n_ + 1; }
    double dt() const noexcept { return (t1_ - t0_) / static_cast<double>(n_); }
    double node(std::size_t k) const noexcept {
        return k == n_ ? t1_ : t0_ + static_cast<double>(k) * dt();
    }
    /// Twice as many steps over the same interval.
    TimeGrid refined(std::size_t factor = 2) const { return TimeGrid(t0_, t1_, n_ * factor); }

    /// Step index containing t and the local coordinate theta in [0,1].
    std::pair<std::size_t, double> locate(double t) const {
        double s = (t - t0_) / dt();
        if (s <= 0.0) return {0, 0.0};
        if (s >= static_cast<double>(n_)) return {n_ - 1, 1.0};
        auto k = static_cast<std::size_t>(s);
        if (k >= n_) k = n_ - 1;
        return {k, s - static_cast<double>(k)};
    }

private:
    double t0_;
    double t1_;
    std::size_t n_;
};

}  // namespace mfc
