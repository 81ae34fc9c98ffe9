#include "rfs/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace rfs {

namespace {

void require_same_dim(const RealVec& x, const RealVec& y, const char* op) {
    if (x.dim() != y.dim()) {
        std::ostringstream msg;
        msg << op << ": dimension mismatch (" << x.dim() << " vs " << y.dim() << ")";
        throw DimensionError(msg.str());
    }
}

std::string describe_point(const RealVec& x) {
    std::ostringstream out;
    out.precision(17);
    out << "[";
    for (std::size_t i = 0; i < x.dim(); ++i) out << (i ? ", " : "") << x[i];
    out << "]";
    return out.str();
}

double checked_eval(const ScalarFn& f, const RealVec& probe, const char* op) {
    const double value = f(probe);
    if (!std::isfinite(value)) {
        throw NumericError(std::string(op) + ": non-finite function value at probe point " +
                           describe_point(probe));
    }
    return value;
}

}  // namespace

RealVec::RealVec(std::size_t dim, double fill) : values_(dim, fill) {
    if (!std::isfinite(fill)) throw NumericError("RealVec: non-finite fill value");
}

RealVec::RealVec(std::initializer_list<double> values) : values_(values) {
    require_finite(*this, "RealVec");
}

RealVec::RealVec(std::vector<double> values) : values_(std::move(values)) {
    require_finite(*this, "RealVec");
}

bool RealVec::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

RealVec& RealVec::operator+=(const RealVec& rhs) {
    require_same_dim(*this, rhs, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += rhs.values_[i];
    return *this;
}

RealVec& RealVec::operator-=(const RealVec& rhs) {
    require_same_dim(*this, rhs, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= rhs.values_[i];
    return *this;
}

RealVec& RealVec::operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
}

RealVec operator+(RealVec lhs, const RealVec& rhs) { return lhs += rhs; }
RealVec operator-(RealVec lhs, const RealVec& rhs) { return lhs -= rhs; }
RealVec operator*(double s, RealVec v) { return v *= s; }
RealVec operator*(RealVec v, double s) { return v *= s; }
RealVec operator-(RealVec v) { return v *= -1.0; }

RealVec axpy(double a, const RealVec& x, const RealVec& y) {
    require_same_dim(x, y, "axpy");
    RealVec out = y;
    for (std::size_t i = 0; i < x.dim(); ++i) out[i] += a * x[i];
    require_finite(out, "axpy");
    return out;
}

double dot(const RealVec& x, const RealVec& y) {
    require_same_dim(x, y, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) acc += x[i] * y[i];
    return acc;
}

double norm(const RealVec& x) { return std::sqrt(dot(x, x)); }

double max_abs_diff(const RealVec& x, const RealVec& y) {
    require_same_dim(x, y, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    return m;
}

RealVec basis_vector(std::size_t dim, std::size_t i) {
    if (i >= dim) throw DimensionError("basis_vector: index out of range");
    RealVec e(dim);
    e[i] = 1.0;
    return e;
}

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void require_finite(const RealVec& v, const std::string& what) {
    if (!v.all_finite()) throw NumericError(what + ": non-finite entry in " + describe_point(v));
}

RealMat::RealMat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

RealMat::RealMat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw DimensionError("RealMat: expected " + std::to_string(rows * cols) + " values, got " +
                             std::to_string(values_.size()));
    }
    if (!all_finite()) throw NumericError("RealMat: non-finite entry");
}

RealMat RealMat::identity(std::size_t n) {
    RealMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool RealMat::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

RealVec matvec(const RealMat& m, const RealVec& x) {
    if (m.cols() != x.dim()) throw DimensionError("matvec: matrix cols != vector dim");
    RealVec out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
    return out;
}

RealVec matvec_transposed(const RealMat& m, const RealVec& y) {
    if (m.rows() != y.dim()) throw DimensionError("matvec_transposed: matrix rows != vector dim");
    RealVec out(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c] * y[r];
    }
    return out;
}

RealMat operator*(double s, RealMat m) {
    for (auto& v : m.values()) v *= s;
    return m;
}

// PCG64 multiplier from the reference implementation.
namespace {
constexpr uint128_t kPcgMultiplier =
    (static_cast<uint128_t>(2549297995355413924ULL) << 64) + 4865540595714422341ULL;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    state_ = 0;
    inc_ = (static_cast<uint128_t>(stream) << 1) | 1u;
    step();
    state_ += seed;
    step();
}

void Rng::step() { state_ = state_ * kPcgMultiplier + inc_; }

std::uint64_t Rng::next_u64() {
    step();
    const auto hi = static_cast<std::uint64_t>(state_ >> 64);
    const auto lo = static_cast<std::uint64_t>(state_);
    const std::uint64_t xored = hi ^ lo;
    const unsigned rot = static_cast<unsigned>(state_ >> 122);
    return (xored >> rot) | (xored << ((64u - rot) & 63u));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

RealVec Rng::normal_vec(std::size_t dim) {
    RealVec v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = normal();
    return v;
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
}

RealVec central_diff_grad(const ScalarFn& f, const RealVec& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("central_diff_grad: h must be positive");
    RealVec grad(x.dim());
    RealVec probe = x;
    for (std::size_t i = 0; i < x.dim(); ++i) {
        const double xi = x[i];
        probe[i] = xi + h;
        const double fp = checked_eval(f, probe, "central_diff_grad");
        probe[i] = xi - h;
        const double fm = checked_eval(f, probe, "central_diff_grad");
        probe[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double directional_hessian(const ScalarFn& f, const RealVec& x, const RealVec& d, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("directional_hessian: h must be positive");
    if (!(norm(d) > 0.0)) throw std::invalid_argument("directional_hessian: direction must be nonzero");
    const double fp = checked_eval(f, axpy(h, d, x), "directional_hessian");
    const double f0 = checked_eval(f, x, "directional_hessian");
    const double fm = checked_eval(f, axpy(-h, d, x), "directional_hessian");
    return (fp - 2.0 * f0 + fm) / (h * h);
}

}  // namespace rfs
