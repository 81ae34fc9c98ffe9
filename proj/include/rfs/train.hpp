#pragma once

#include <cstdint>
#include <vector>

#include "rfs/fields.hpp"

namespace rfs {

/// Dense tanh MLP velocity field. Input is [x, tau, c]; hidden layers use
/// tanh and the output layer is linear, so the field is smooth in x and c.
class MlpField final : public VectorField {
public:
    struct Layer {
        RealMat weights;  // out x in
        RealVec biases;   // out
    };

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
    MlpField(std::size_t state_dim, std::size_t cond_dim, const std::vector<std::size_t>& hidden,
             std::uint64_t seed);
    /// Restores a network from explicit layers.
    MlpField(std::vector<Layer> layers, std::uint64_t seed);

    RealVec velocity(const Latent& x, TimePoint t, const Embedding& c) const override;
    std::size_t state_dim() const override { return state_dim_; }
    std::size_t cond_dim() const override { return cond_dim_; }
    std::string kind() const override { return "mlp"; }

    /// Forward pass on the raw input vector [x, tau, c].
    RealVec forward(const RealVec& input) const;

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    std::vector<std::size_t> widths() const;
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t parameter_count() const;

private:
    void check_chain() const;

    std::vector<Layer> layers_;
    std::size_t state_dim_ = 0;
    std::size_t cond_dim_ = 0;
    std::uint64_t seed_ = 0;
};

/// One conditional flow-matching training pair.
struct FlowSample {
    RealVec z;  // prior draw
    RealVec y;  // data draw
    RealVec c;  // conditioning embedding
    double tau = 0.0;
};

/// Parameter-shaped gradient container, layer-aligned with MlpField::layers().
struct MlpGradients {
    std::vector<MlpField::Layer> layers;
    double loss = 0.0;
};

/// Mean over the batch of |f((1 - tau) z + tau y, tau, c) - (y - z)|^2.
double cfm_loss(const MlpField& f, const std::vector<FlowSample>& batch);
/// The same loss for any field, e.g. an exact mixture velocity.
double cfm_loss(const VectorField& f, const std::vector<FlowSample>& batch);

/// Exact reverse-mode gradient of cfm_loss with respect to every parameter.
MlpGradients backprop(const MlpField& f, const std::vector<FlowSample>& batch);

/// Adam with bias correction.
class Adam {
public:
    Adam(const MlpField& shape, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step(MlpField& f, const MlpGradients& grads);
    long iteration() const noexcept { return t_; }

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t iterations = 5000;
    double learning_rate = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden = {64, 64};
    /// Probability that a training pair is conditioned on the null embedding.
    double p_uncond = 0.1;
    std::vector<GaussianClass> classes;
    /// Class-k embedding is e_k; the null embedding is this vector.
    RealVec null_embedding;
    std::size_t log_every = 100;

    void validate() const;
};

struct LossSample {
    std::size_t iteration = 0;
    double loss = 0.0;
};

struct TrainResult {
    MlpField field;
    /// Entry 0 is the initial-network batch loss; later entries are window
    /// means over `log_every` iterations.
    std::vector<LossSample> loss_curve;
};

/// Draws one batch of flow-matching pairs for the config's dataset.
std::vector<FlowSample> draw_batch(const TrainConfig& cfg, std::size_t size, Rng& rng);

/// Raised when the training loss becomes non-finite.
class TrainingDiverged : public NumericError {
public:
    using NumericError::NumericError;
};

TrainResult train(MlpField f, const TrainConfig& cfg, Rng& rng);

}  // namespace rfs
