#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rfs/embedding.hpp"
#include "rfs/numerics.hpp"

namespace rfs {

/// Continuous flow time. tau = 0 is the prior, tau = 1 is data.
class TimePoint {
public:
    explicit TimePoint(double tau);

    double tau() const noexcept { return tau_; }
    /// Noise coefficient of the linear path x = a z + b y.
    double a() const noexcept { return 1.0 - tau_; }
    /// Data coefficient of the linear path.
    double b() const noexcept { return tau_; }

private:
    double tau_;
};

using Latent = RealVec;

/// Velocity field v(x, t, c) driving dx/dtau = v.
///
/// Implementations are immutable after construction and velocity() is
/// reentrant, so one field may be shared by concurrent sampling runs.
class VectorField {
public:
    virtual ~VectorField() = default;

    virtual RealVec velocity(const Latent& x, TimePoint t, const Embedding& c) const = 0;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t cond_dim() const = 0;
    virtual std::string kind() const = 0;

    /// Directional derivative of the velocity with respect to the embedding,
    /// d/de v(x, t, c + e u) at e = 0. The default uses central differences.
    virtual RealVec embedding_derivative(const Latent& x, TimePoint t, const Embedding& c,
                                         const RealVec& u) const;

    /// Global Lipschitz constant in x when one is known in closed form.
    virtual std::optional<double> lipschitz_bound() const { return std::nullopt; }

    /// Fields returning true receive c pre-scaled by the standard guidance
    /// scale w during the plain denoising step.
    virtual bool supports_guidance_scale() const { return false; }

protected:
    void check_dims(const Latent& x, const Embedding& c) const;
};

/// v(x, t, c) = const.
class ConstantField final : public VectorField {
public:
    ConstantField(RealVec value, std::size_t cond_dim);

    RealVec velocity(const Latent& x, TimePoint t, const Embedding& c) const override;
    std::size_t state_dim() const override { return value_.dim(); }
    std::size_t cond_dim() const override { return cond_dim_; }
    std::string kind() const override { return "constant"; }
    RealVec embedding_derivative(const Latent& x, TimePoint t, const Embedding& c,
                                 const RealVec& u) const override;
    std::optional<double> lipschitz_bound() const override { return 0.0; }

private:
    RealVec value_;
    std::size_t cond_dim_;
};

/// v(x, t, c) = g(t) * (M x + bias + B c). Exactly linear in c.
class LinearEmbeddingField final : public VectorField {
public:
    using TimeGain = std::function<double(double)>;

    /// `gain_bound` is sup |g| over [0, 1]; it only feeds lipschitz_bound().
    LinearEmbeddingField(RealMat base_matrix, RealVec base_bias, RealMat cond_matrix,
                         TimeGain gain = nullptr, double gain_bound = 1.0);

    RealVec velocity(const Latent& x, TimePoint t, const Embedding& c) const override;
    std::size_t state_dim() const override { return base_.rows(); }
    std::size_t cond_dim() const override { return cond_.cols(); }
    std::string kind() const override { return "linear"; }
    RealVec embedding_derivative(const Latent& x, TimePoint t, const Embedding& c,
                                 const RealVec& u) const override;
    /// gain_bound * Frobenius norm of M.
    std::optional<double> lipschitz_bound() const override;

    const RealMat& base_matrix() const noexcept { return base_; }
    const RealVec& base_bias() const noexcept { return bias_; }
    const RealMat& cond_matrix() const noexcept { return cond_; }
    double gain(double tau) const { return gain_ ? gain_(tau) : 1.0; }

private:
    RealMat base_;
    RealVec bias_;
    RealMat cond_;
    TimeGain gain_;
    double gain_bound_;
};

/// Isotropic Gaussian class N(mean, var I) with prior weight.
struct GaussianClass {
    RealVec mean;
    double var = 1.0;
    double prior = 1.0;
};

/// How an embedding selects between mixture classes.
///
/// OneHot: the embedding carries one coordinate per class and the velocity
/// is affine in it, v = v_null + sum_k c_k (v_k - v_null), so c = e_k gives
/// the class-k flow and c = 0 the unconditional one.
///
/// Soft: class weights proportional to prior_k * exp(temperature * <key_k, c>),
/// which makes the field nonlinear in c.
struct EmbedMap {
    enum class Kind { OneHot, Soft };
    Kind kind = Kind::OneHot;
    RealMat keys;  // classes x cond_dim, Soft only
    double temperature = 1.0;

    static EmbedMap one_hot() { return {}; }
    static EmbedMap soft(RealMat keys, double temperature);
};

/// Exact marginal flow-matching velocity for a Gaussian-mixture data
/// distribution under the path x = (1 - tau) z + tau y, z ~ N(0, I).
///
/// Per class k with a = 1 - tau, b = tau and V_k = a^2 + b^2 var_k:
///   x | k ~ N(b mu_k, V_k I)
///   E[y - z | x, k] = mu_k + (b var_k - a) (x - b mu_k) / V_k
/// The velocity is locally but not globally Lipschitz in x.
class GaussianMixtureField final : public VectorField {
public:
    explicit GaussianMixtureField(std::vector<GaussianClass> classes,
                                  EmbedMap map = EmbedMap::one_hot());

    RealVec velocity(const Latent& x, TimePoint t, const Embedding& c) const override;
    std::size_t state_dim() const override { return dim_; }
    std::size_t cond_dim() const override;
    std::string kind() const override;

    std::size_t num_classes() const noexcept { return classes_.size(); }
    const std::vector<GaussianClass>& classes() const noexcept { return classes_; }
    const EmbedMap& embed_map() const noexcept { return map_; }

    /// Embedding that selects class k: e_k for OneHot, key row k for Soft.
    Embedding class_embedding(std::size_t k) const;
    /// The embedding whose flow is the unconditional mixture (zero vector).
    Embedding null_embedding() const { return Embedding::zeros(cond_dim()); }

    /// Velocity with responsibilities proportional to weights_k N_k(x).
    RealVec velocity_with_weights(const Latent& x, TimePoint t, const RealVec& weights) const;
    /// E[y - z | x, k].
    RealVec class_velocity(const Latent& x, TimePoint t, std::size_t k) const;
    RealVec unconditional_velocity(const Latent& x, TimePoint t) const;

    /// J(x) = log p(k | x_tau = x) under the priors.
    double log_posterior(const Latent& x, TimePoint t, std::size_t k) const;
    /// Analytic gradient of log_posterior in x.
    RealVec posterior_score(const Latent& x, TimePoint t, std::size_t k) const;
    /// log p_tau(x) of the marginal.
    double log_marginal(const Latent& x, TimePoint t) const;

    /// Draw y ~ N(mu_k, var_k I).
    RealVec sample_class(Rng& rng, std::size_t k) const;

private:
    double log_class_density(const Latent& x, TimePoint t, std::size_t k) const;
    /// Normalised responsibilities for log-weights log_w.
    std::vector<double> responsibilities(const Latent& x, TimePoint t,
                                         const std::vector<double>& log_w) const;
    std::vector<double> soft_log_weights(const Embedding& c) const;
    std::vector<double> log_priors() const;

    std::vector<GaussianClass> classes_;
    EmbedMap map_;
    std::size_t dim_;
};

}  // namespace rfs
