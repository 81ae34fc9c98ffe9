#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfs {

__extension__ typedef unsigned __int128 uint128_t;

/// Raised on dimension mismatches and other caller bugs.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN/Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense vector of doubles. Entries are checked finite on construction.
class RealVec {
public:
    RealVec() = default;
    explicit RealVec(std::size_t dim, double fill = 0.0);
    RealVec(std::initializer_list<double> values);
    explicit RealVec(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    const double* data() const noexcept { return values_.data(); }
    double* data() noexcept { return values_.data(); }

    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    bool all_finite() const noexcept;

    RealVec& operator+=(const RealVec& rhs);
    RealVec& operator-=(const RealVec& rhs);
    RealVec& operator*=(double s);

    friend bool operator==(const RealVec&, const RealVec&) = default;

private:
    std::vector<double> values_;
};

RealVec operator+(RealVec lhs, const RealVec& rhs);
RealVec operator-(RealVec lhs, const RealVec& rhs);
RealVec operator*(double s, RealVec v);
RealVec operator*(RealVec v, double s);
RealVec operator-(RealVec v);

/// a*x + y.
RealVec axpy(double a, const RealVec& x, const RealVec& y);
double dot(const RealVec& x, const RealVec& y);
double norm(const RealVec& x);
double max_abs_diff(const RealVec& x, const RealVec& y);
RealVec basis_vector(std::size_t dim, std::size_t i);

/// Shortest round-trip decimal form, locale independent ('.' separator).
std::string format_real(double v);

/// Throws NumericError naming `what` if any entry is non-finite.
void require_finite(const RealVec& v, const std::string& what);

/// Row-major dense matrix.
class RealMat {
public:
    RealMat() = default;
    RealMat(std::size_t rows, std::size_t cols, double fill = 0.0);
    RealMat(std::size_t rows, std::size_t cols, std::vector<double> values);
    static RealMat identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    const double* row(std::size_t r) const { return values_.data() + r * cols_; }
    double* row(std::size_t r) { return values_.data() + r * cols_; }

    bool all_finite() const noexcept;

    friend bool operator==(const RealMat&, const RealMat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

RealVec matvec(const RealMat& m, const RealVec& x);
RealVec matvec_transposed(const RealMat& m, const RealVec& y);
RealMat operator*(double s, RealMat m);

/// PCG64 (XSL-RR 128/64) with Box-Muller normals.
///
/// Seeding follows the reference pcg64 `srandom(initstate, initseq)` with
/// the 64-bit seed and stream widened to 128 bits. Normal draws consume two
/// uniforms, return the cosine branch, and cache the sine branch for the
/// next call.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    RealVec normal_vec(std::size_t dim);
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

private:
    void step();

    uint128_t state_ = 0;
    uint128_t inc_ = 0;
    std::uint64_t seed_;
    std::uint64_t stream_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

using ScalarFn = std::function<double(const RealVec&)>;

inline constexpr double kGradStep = 1e-5;
inline constexpr double kHessianStep = 1e-3;

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
RealVec central_diff_grad(const ScalarFn& f, const RealVec& x, double h = kGradStep);

/// (f(x+hd) - 2f(x) + f(x-hd)) / h^2, approximating d^T H d.
double directional_hessian(const ScalarFn& f, const RealVec& x, const RealVec& d,
                           double h = kHessianStep);

}  // namespace rfs
