#include "rfs/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace rfs {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

double frobenius(const RealMat& m) {
    double acc = 0.0;
    for (double v : m.values()) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace

TimePoint::TimePoint(double tau) : tau_(tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw std::out_of_range("TimePoint: tau must lie in [0, 1], got " + std::to_string(tau));
    }
}

void VectorField::check_dims(const Latent& x, const Embedding& c) const {
    if (x.dim() != state_dim()) {
        throw DimensionError(kind() + " field: state dim " + std::to_string(x.dim()) +
                             " != " + std::to_string(state_dim()));
    }
    if (c.dim() != cond_dim()) {
        throw DimensionError(kind() + " field: embedding dim " + std::to_string(c.dim()) +
                             " != " + std::to_string(cond_dim()));
    }
}

RealVec VectorField::embedding_derivative(const Latent& x, TimePoint t, const Embedding& c,
                                          const RealVec& u) const {
    constexpr double h = 1e-5;
    const RealVec vp = velocity(x, t, Embedding(axpy(h, u, c.vec())));
    const RealVec vm = velocity(x, t, Embedding(axpy(-h, u, c.vec())));
    return (1.0 / (2.0 * h)) * (vp - vm);
}

ConstantField::ConstantField(RealVec value, std::size_t cond_dim)
    : value_(std::move(value)), cond_dim_(cond_dim) {
    if (value_.empty() || cond_dim_ == 0) throw DimensionError("ConstantField: dims must be positive");
}

RealVec ConstantField::velocity(const Latent& x, TimePoint, const Embedding& c) const {
    check_dims(x, c);
    return value_;
}

RealVec ConstantField::embedding_derivative(const Latent&, TimePoint, const Embedding&,
                                            const RealVec&) const {
    return RealVec(value_.dim());
}

LinearEmbeddingField::LinearEmbeddingField(RealMat base_matrix, RealVec base_bias,
                                           RealMat cond_matrix, TimeGain gain, double gain_bound)
    : base_(std::move(base_matrix)),
      bias_(std::move(base_bias)),
      cond_(std::move(cond_matrix)),
      gain_(std::move(gain)),
      gain_bound_(gain_bound) {
    if (base_.rows() == 0 || base_.rows() != base_.cols()) {
        throw DimensionError("LinearEmbeddingField: base matrix must be square and non-empty");
    }
    if (bias_.dim() != base_.rows()) throw DimensionError("LinearEmbeddingField: bias dim mismatch");
    if (cond_.rows() != base_.rows() || cond_.cols() == 0) {
        throw DimensionError("LinearEmbeddingField: cond matrix must have state_dim rows");
    }
}

RealVec LinearEmbeddingField::velocity(const Latent& x, TimePoint t, const Embedding& c) const {
    check_dims(x, c);
    RealVec v = matvec(base_, x);
    v += bias_;
    v += matvec(cond_, c.vec());
    v *= gain(t.tau());
    require_finite(v, "LinearEmbeddingField::velocity");
    return v;
}

RealVec LinearEmbeddingField::embedding_derivative(const Latent&, TimePoint t, const Embedding&,
                                                   const RealVec& u) const {
    return gain(t.tau()) * matvec(cond_, u);
}

std::optional<double> LinearEmbeddingField::lipschitz_bound() const {
    return gain_bound_ * frobenius(base_);
}

EmbedMap EmbedMap::soft(RealMat keys, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("EmbedMap: temperature must be positive");
    EmbedMap m;
    m.kind = Kind::Soft;
    m.keys = std::move(keys);
    m.temperature = temperature;
    return m;
}

GaussianMixtureField::GaussianMixtureField(std::vector<GaussianClass> classes, EmbedMap map)
    : classes_(std::move(classes)), map_(std::move(map)) {
    if (classes_.empty()) throw std::invalid_argument("GaussianMixtureField: need at least one class");
    dim_ = classes_.front().mean.dim();
    if (dim_ == 0) throw DimensionError("GaussianMixtureField: mean dim must be positive");
    double prior_sum = 0.0;
    for (const auto& cls : classes_) {
        if (cls.mean.dim() != dim_) throw DimensionError("GaussianMixtureField: class mean dims differ");
        if (!(cls.var > 0.0)) throw std::invalid_argument("GaussianMixtureField: class variance must be > 0");
        if (!(cls.prior > 0.0)) throw std::invalid_argument("GaussianMixtureField: priors must be > 0");
        prior_sum += cls.prior;
    }
    if (std::abs(prior_sum - 1.0) > 1e-12) {
        throw std::invalid_argument("GaussianMixtureField: priors must sum to 1, got " +
                                    std::to_string(prior_sum));
    }
    if (map_.kind == EmbedMap::Kind::Soft) {
        if (map_.keys.rows() != classes_.size() || map_.keys.cols() == 0) {
            throw DimensionError("GaussianMixtureField: soft map needs one key row per class");
        }
    }
}

std::size_t GaussianMixtureField::cond_dim() const {
    return map_.kind == EmbedMap::Kind::Soft ? map_.keys.cols() : classes_.size();
}

std::string GaussianMixtureField::kind() const {
    return map_.kind == EmbedMap::Kind::Soft ? "gm-soft" : "gm";
}

Embedding GaussianMixtureField::class_embedding(std::size_t k) const {
    if (k >= classes_.size()) throw std::out_of_range("class_embedding: bad class id");
    if (map_.kind == EmbedMap::Kind::OneHot) return Embedding(basis_vector(classes_.size(), k));
    const double* row = map_.keys.row(k);
    return Embedding(RealVec(std::vector<double>(row, row + map_.keys.cols())));
}

double GaussianMixtureField::log_class_density(const Latent& x, TimePoint t, std::size_t k) const {
    const auto& cls = classes_[k];
    const double a = t.a();
    const double b = t.b();
    const double var = a * a + b * b * cls.var;
    double sq = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        const double d = x[i] - b * cls.mean[i];
        sq += d * d;
    }
    return -0.5 * static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq / var;
}

std::vector<double> GaussianMixtureField::log_priors() const {
    std::vector<double> out;
    out.reserve(classes_.size());
    for (const auto& cls : classes_) out.push_back(std::log(cls.prior));
    return out;
}

std::vector<double> GaussianMixtureField::responsibilities(const Latent& x, TimePoint t,
                                                           const std::vector<double>& log_w) const {
    std::vector<double> logits(classes_.size());
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        logits[k] = log_w[k] == kNegInf ? kNegInf : log_w[k] + log_class_density(x, t, k);
    }
    const double lse = log_sum_exp(logits);
    if (!std::isfinite(lse)) throw NumericError("GaussianMixtureField: responsibilities degenerate");
    for (auto& v : logits) v = std::exp(v - lse);
    return logits;
}

std::vector<double> GaussianMixtureField::soft_log_weights(const Embedding& c) const {
    std::vector<double> out = log_priors();
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        const double* key = map_.keys.row(k);
        double inner = 0.0;
        for (std::size_t j = 0; j < map_.keys.cols(); ++j) inner += key[j] * c[j];
        out[k] += map_.temperature * inner;
    }
    return out;
}

RealVec GaussianMixtureField::class_velocity(const Latent& x, TimePoint t, std::size_t k) const {
    if (k >= classes_.size()) throw std::out_of_range("class_velocity: bad class id");
    if (x.dim() != dim_) throw DimensionError("class_velocity: state dim mismatch");
    const auto& cls = classes_[k];
    const double a = t.a();
    const double b = t.b();
    const double var = a * a + b * b * cls.var;
    const double gain = (b * cls.var - a) / var;
    RealVec v(dim_);
    for (std::size_t i = 0; i < dim_; ++i) v[i] = cls.mean[i] + gain * (x[i] - b * cls.mean[i]);
    return v;
}

RealVec GaussianMixtureField::velocity_with_weights(const Latent& x, TimePoint t,
                                                    const RealVec& weights) const {
    if (weights.dim() != classes_.size()) throw DimensionError("velocity_with_weights: one weight per class");
    if (x.dim() != dim_) throw DimensionError("velocity_with_weights: state dim mismatch");
    std::vector<double> log_w(classes_.size());
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        if (weights[k] < 0.0) throw std::invalid_argument("velocity_with_weights: negative weight");
        log_w[k] = weights[k] == 0.0 ? kNegInf : std::log(weights[k]);
    }
    const auto r = responsibilities(x, t, log_w);
    RealVec v(dim_);
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        if (r[k] == 0.0) continue;
        v = axpy(r[k], class_velocity(x, t, k), v);
    }
    return v;
}

RealVec GaussianMixtureField::unconditional_velocity(const Latent& x, TimePoint t) const {
    if (x.dim() != dim_) throw DimensionError("unconditional_velocity: state dim mismatch");
    const auto r = responsibilities(x, t, log_priors());
    RealVec v(dim_);
    for (std::size_t k = 0; k < classes_.size(); ++k) v = axpy(r[k], class_velocity(x, t, k), v);
    return v;
}

RealVec GaussianMixtureField::velocity(const Latent& x, TimePoint t, const Embedding& c) const {
    check_dims(x, c);
    if (map_.kind == EmbedMap::Kind::Soft) {
        const auto r = responsibilities(x, t, soft_log_weights(c));
        RealVec v(dim_);
        for (std::size_t k = 0; k < classes_.size(); ++k) v = axpy(r[k], class_velocity(x, t, k), v);
        return v;
    }
    const RealVec v_null = unconditional_velocity(x, t);
    RealVec v = v_null;
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        if (c[k] == 0.0) continue;
        v = axpy(c[k], class_velocity(x, t, k) - v_null, v);
    }
    return v;
}

double GaussianMixtureField::log_posterior(const Latent& x, TimePoint t, std::size_t k) const {
    if (k >= classes_.size()) throw std::out_of_range("log_posterior: bad class id");
    if (x.dim() != dim_) throw DimensionError("log_posterior: state dim mismatch");
    std::vector<double> logits = log_priors();
    for (std::size_t j = 0; j < classes_.size(); ++j) logits[j] += log_class_density(x, t, j);
    return logits[k] - log_sum_exp(logits);
}

RealVec GaussianMixtureField::posterior_score(const Latent& x, TimePoint t, std::size_t k) const {
    if (k >= classes_.size()) throw std::out_of_range("posterior_score: bad class id");
    if (x.dim() != dim_) throw DimensionError("posterior_score: state dim mismatch");
    const auto r = responsibilities(x, t, log_priors());
    const double a = t.a();
    const double b = t.b();
    // grad log N_j = -(x - b mu_j) / V_j; score = grad log N_k - sum_j r_j grad log N_j.
    RealVec score(dim_);
    for (std::size_t j = 0; j < classes_.size(); ++j) {
        const auto& cls = classes_[j];
        const double var = a * a + b * b * cls.var;
        const double coeff = ((j == k ? 1.0 : 0.0) - r[j]) / var;
        for (std::size_t i = 0; i < dim_; ++i) score[i] -= coeff * (x[i] - b * cls.mean[i]);
    }
    return score;
}

double GaussianMixtureField::log_marginal(const Latent& x, TimePoint t) const {
    if (x.dim() != dim_) throw DimensionError("log_marginal: state dim mismatch");
    std::vector<double> logits = log_priors();
    for (std::size_t j = 0; j < classes_.size(); ++j) logits[j] += log_class_density(x, t, j);
    return log_sum_exp(logits);
}

RealVec GaussianMixtureField::sample_class(Rng& rng, std::size_t k) const {
    if (k >= classes_.size()) throw std::out_of_range("sample_class: bad class id");
    const auto& cls = classes_[k];
    const double sd = std::sqrt(cls.var);
    RealVec y(dim_);
    for (std::size_t i = 0; i < dim_; ++i) y[i] = cls.mean[i] + sd * rng.normal();
    return y;
}

}  // namespace rfs
