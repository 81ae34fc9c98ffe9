#pragma once

#include "rfs/numerics.hpp"

namespace rfs {

/// A text-condition vector (c_text, c_uncond, mixed and amplified forms).
class Embedding {
public:
    Embedding() = default;
    explicit Embedding(RealVec vec);
    Embedding(std::initializer_list<double> values) : Embedding(RealVec(values)) {}

    static Embedding zeros(std::size_t dim) { return Embedding(RealVec(dim)); }

    const RealVec& vec() const noexcept { return vec_; }
    std::size_t dim() const noexcept { return vec_.dim(); }
    double operator[](std::size_t i) const { return vec_[i]; }

    friend bool operator==(const Embedding&, const Embedding&) = default;

private:
    RealVec vec_;
};

/// The reflective-sampling knob set.
///
/// `s_*` are amplifying weights and `beta_*` interpolation weights for the
/// high (denoise) and low (invert) states. `gamma` is the merge ratio,
/// `alpha` the number of Euler steps per excursion, and `w` the standard
/// guidance scale, which only fields that declare support consume.
struct GuidanceParams {
    double s_high = 3.5;
    double beta_high = 0.7;
    double s_low = 0.0;
    double beta_low = 0.3;
    double gamma = 0.5;
    int alpha = 1;
    double w = 1.0;

    /// Throws std::invalid_argument naming the first bad knob.
    void validate() const;
};

/// beta * c_text + (1 - beta) * c_uncond.
Embedding mix(const Embedding& c_text, const Embedding& c_uncond, double beta);

/// c_text + s * mix(c_text, c_uncond, beta).
Embedding weighted(const Embedding& c_text, const Embedding& c_uncond, double s, double beta);

/// u = c_text - c_uncond.
Embedding semantic_direction(const Embedding& c_text, const Embedding& c_uncond);

/// A = s_high * beta_high - s_low * beta_low.
double alignment_coefficient(const GuidanceParams& p);

/// lambda(s, beta) = 1 + s * beta, the weight on u in
/// weighted(...) = (1 + s) c_uncond + lambda * u.
double semantic_magnitude(double s, double beta);

}  // namespace rfs
