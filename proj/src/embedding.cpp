#include "rfs/embedding.hpp"

#include <cmath>
#include <stdexcept>

namespace rfs {

namespace {

void require_beta(double beta, const char* name) {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1], got " +
                                    std::to_string(beta));
    }
}

void require_same_dim(const Embedding& a, const Embedding& b, const char* op) {
    if (a.dim() != b.dim()) {
        throw DimensionError(std::string(op) + ": embedding dimension mismatch (" +
                             std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
    }
}

}  // namespace

Embedding::Embedding(RealVec vec) : vec_(std::move(vec)) {
    require_finite(vec_, "Embedding");
}

void GuidanceParams::validate() const {
    for (auto [value, name] : {std::pair{s_high, "s_high"}, std::pair{s_low, "s_low"},
                               std::pair{gamma, "gamma"}, std::pair{w, "w"}}) {
        if (!std::isfinite(value)) throw std::invalid_argument(std::string(name) + " must be finite");
    }
    require_beta(beta_high, "beta_high");
    require_beta(beta_low, "beta_low");
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    if (alpha < 1) throw std::invalid_argument("alpha must be >= 1");
    if (w < 1.0) throw std::invalid_argument("w must be >= 1");
}

Embedding mix(const Embedding& c_text, const Embedding& c_uncond, double beta) {
    require_same_dim(c_text, c_uncond, "mix");
    require_beta(beta, "beta");
    if (beta == 1.0) return c_text;
    if (beta == 0.0) return c_uncond;
    RealVec out(c_text.dim());
    for (std::size_t i = 0; i < out.dim(); ++i) out[i] = beta * c_text[i] + (1.0 - beta) * c_uncond[i];
    return Embedding(std::move(out));
}

Embedding weighted(const Embedding& c_text, const Embedding& c_uncond, double s, double beta) {
    const Embedding mixed = mix(c_text, c_uncond, beta);
    return Embedding(axpy(s, mixed.vec(), c_text.vec()));
}

Embedding semantic_direction(const Embedding& c_text, const Embedding& c_uncond) {
    require_same_dim(c_text, c_uncond, "semantic_direction");
    return Embedding(c_text.vec() - c_uncond.vec());
}

double alignment_coefficient(const GuidanceParams& p) {
    return p.s_high * p.beta_high - p.s_low * p.beta_low;
}

double semantic_magnitude(double s, double beta) { return 1.0 + s * beta; }

}  // namespace rfs
