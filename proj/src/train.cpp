#include "rfs/train.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rfs {

namespace {

struct ForwardCache {
    // activations[0] is the input; activations[l + 1] the output of layer l.
    std::vector<std::vector<double>> activations;
};

void forward_cached(const std::vector<MlpField::Layer>& layers, const double* input,
                    std::size_t in_dim, ForwardCache& cache) {
    cache.activations.resize(layers.size() + 1);
    cache.activations[0].assign(input, input + in_dim);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const auto& in = cache.activations[l];
        auto& out = cache.activations[l + 1];
        out.resize(layer.weights.rows());
        const bool hidden = l + 1 < layers.size();
        for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
            const double* w = layer.weights.row(r);
            double acc = layer.biases[r];
            for (std::size_t c = 0; c < layer.weights.cols(); ++c) acc += w[c] * in[c];
            out[r] = hidden ? std::tanh(acc) : acc;
        }
    }
}

std::vector<double> flow_input(const FlowSample& s, std::vector<double>& target) {
    const std::size_t d = s.z.dim();
    std::vector<double> input(d + 1 + s.c.dim());
    target.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        input[i] = (1.0 - s.tau) * s.z[i] + s.tau * s.y[i];
        target[i] = s.y[i] - s.z[i];
    }
    input[d] = s.tau;
    for (std::size_t j = 0; j < s.c.dim(); ++j) input[d + 1 + j] = s.c[j];
    return input;
}

void check_sample(const MlpField& f, const FlowSample& s) {
    if (s.z.dim() != f.state_dim() || s.y.dim() != f.state_dim() || s.c.dim() != f.cond_dim()) {
        throw DimensionError("flow sample dims do not match the network");
    }
}

}  // namespace

MlpField::MlpField(std::size_t state_dim, std::size_t cond_dim,
                   const std::vector<std::size_t>& hidden, std::uint64_t seed)
    : state_dim_(state_dim), cond_dim_(cond_dim), seed_(seed) {
    if (state_dim == 0) throw DimensionError("MlpField: state_dim must be positive");
    std::vector<std::size_t> widths{state_dim + 1 + cond_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(state_dim);
    Rng rng(seed, 0x6d6c70);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l];
        const std::size_t out = widths[l + 1];
        if (out == 0) throw DimensionError("MlpField: layer widths must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Layer layer{RealMat(out, in), RealVec(out)};
        for (auto& w : layer.weights.values()) w = rng.uniform(-bound, bound);
        for (std::size_t r = 0; r < out; ++r) layer.biases[r] = rng.uniform(-bound, bound);
        layers_.push_back(std::move(layer));
    }
}

MlpField::MlpField(std::vector<Layer> layers, std::uint64_t seed)
    : layers_(std::move(layers)), seed_(seed) {
    if (layers_.empty()) throw DimensionError("MlpField: need at least one layer");
    state_dim_ = layers_.back().weights.rows();
    const std::size_t in = layers_.front().weights.cols();
    if (in < state_dim_ + 1) throw DimensionError("MlpField: input width too small for [x, tau]");
    cond_dim_ = in - state_dim_ - 1;
    check_chain();
}

void MlpField::check_chain() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.biases.dim() != layer.weights.rows()) throw DimensionError("MlpField: bias/weight rows differ");
        if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows()) {
            throw DimensionError("MlpField: layer " + std::to_string(l) + " input width mismatch");
        }
        if (!layer.weights.all_finite() || !layer.biases.all_finite()) {
            throw NumericError("MlpField: non-finite parameter in layer " + std::to_string(l));
        }
    }
}

std::vector<std::size_t> MlpField::widths() const {
    std::vector<std::size_t> w{layers_.front().weights.cols()};
    for (const auto& layer : layers_) w.push_back(layer.weights.rows());
    return w;
}

std::size_t MlpField::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weights.values().size() + layer.biases.dim();
    return n;
}

RealVec MlpField::forward(const RealVec& input) const {
    if (input.dim() != layers_.front().weights.cols()) throw DimensionError("MlpField: input width mismatch");
    ForwardCache cache;
    forward_cached(layers_, input.data(), input.dim(), cache);
    return RealVec(std::move(cache.activations.back()));
}

RealVec MlpField::velocity(const Latent& x, TimePoint t, const Embedding& c) const {
    check_dims(x, c);
    std::vector<double> input(state_dim_ + 1 + cond_dim_);
    std::copy(x.begin(), x.end(), input.begin());
    input[state_dim_] = t.tau();
    std::copy(c.vec().begin(), c.vec().end(), input.begin() + state_dim_ + 1);
    ForwardCache cache;
    forward_cached(layers_, input.data(), input.size(), cache);
    return RealVec(std::move(cache.activations.back()));
}

double cfm_loss(const MlpField& f, const std::vector<FlowSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("cfm_loss: empty batch");
    ForwardCache cache;
    std::vector<double> target;
    double total = 0.0;
    for (const auto& s : batch) {
        check_sample(f, s);
        const auto input = flow_input(s, target);
        forward_cached(f.layers(), input.data(), input.size(), cache);
        const auto& out = cache.activations.back();
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double r = out[i] - target[i];
            total += r * r;
        }
    }
    return total / static_cast<double>(batch.size());
}

double cfm_loss(const VectorField& f, const std::vector<FlowSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("cfm_loss: empty batch");
    double total = 0.0;
    for (const auto& s : batch) {
        const Latent x = axpy(s.tau, s.y, (1.0 - s.tau) * s.z);
        const RealVec r = f.velocity(x, TimePoint(s.tau), Embedding(s.c)) - (s.y - s.z);
        total += dot(r, r);
    }
    return total / static_cast<double>(batch.size());
}

MlpGradients backprop(const MlpField& f, const std::vector<FlowSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("backprop: empty batch");
    const auto& layers = f.layers();
    MlpGradients grads;
    for (const auto& layer : layers) {
        grads.layers.push_back({RealMat(layer.weights.rows(), layer.weights.cols()),
                                RealVec(layer.biases.dim())});
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    ForwardCache cache;
    std::vector<double> target;
    std::vector<double> delta;
    std::vector<double> prev_delta;
    for (const auto& s : batch) {
        check_sample(f, s);
        const auto input = flow_input(s, target);
        forward_cached(layers, input.data(), input.size(), cache);
        const auto& out = cache.activations.back();
        delta.resize(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double r = out[i] - target[i];
            grads.loss += r * r * scale;
            delta[i] = 2.0 * r * scale;
        }
        for (std::size_t l = layers.size(); l-- > 0;) {
            const auto& layer = layers[l];
            auto& g = grads.layers[l];
            const auto& in = cache.activations[l];
            for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
                double* gw = g.weights.row(r);
                const double dr = delta[r];
                for (std::size_t c = 0; c < layer.weights.cols(); ++c) gw[c] += dr * in[c];
                g.biases[r] += dr;
            }
            if (l == 0) break;
            // Propagate through W^T and the tanh of the previous layer.
            prev_delta.assign(layer.weights.cols(), 0.0);
            for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
                const double* w = layer.weights.row(r);
                const double dr = delta[r];
                for (std::size_t c = 0; c < layer.weights.cols(); ++c) prev_delta[c] += w[c] * dr;
            }
            for (std::size_t c = 0; c < prev_delta.size(); ++c) prev_delta[c] *= 1.0 - in[c] * in[c];
            delta.swap(prev_delta);
        }
    }
    return grads;
}

Adam::Adam(const MlpField& shape, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& layer : shape.layers()) {
        m_.emplace_back(layer.weights.values().size(), 0.0);
        v_.emplace_back(layer.weights.values().size(), 0.0);
        m_.emplace_back(layer.biases.dim(), 0.0);
        v_.emplace_back(layer.biases.dim(), 0.0);
    }
}

void Adam::step(MlpField& f, const MlpGradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](std::span<double> p, std::span<const double> g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    };
    auto& layers = f.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights.values(), grads.layers[l].weights.values(), m_[2 * l], v_[2 * l]);
        update(layers[l].biases.values(), grads.layers[l].biases.values(), m_[2 * l + 1], v_[2 * l + 1]);
    }
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
    if (iterations == 0) throw std::invalid_argument("train.iterations must be positive");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("train.learning_rate must be >= 0");
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) throw std::invalid_argument("train.p_uncond must lie in [0, 1]");
    if (log_every == 0) throw std::invalid_argument("train.log_every must be positive");
    if (classes.empty()) throw std::invalid_argument("train: dataset needs at least one class");
    if (null_embedding.dim() != classes.size()) {
        throw DimensionError("train: null embedding must have one entry per class");
    }
}

std::vector<FlowSample> draw_batch(const TrainConfig& cfg, std::size_t size, Rng& rng) {
    const std::size_t num_classes = cfg.classes.size();
    const std::size_t dim = cfg.classes.front().mean.dim();
    std::vector<FlowSample> batch;
    batch.reserve(size);
    for (std::size_t n = 0; n < size; ++n) {
        double u = rng.uniform();
        std::size_t k = 0;
        while (k + 1 < num_classes && u >= cfg.classes[k].prior) u -= cfg.classes[k++].prior;
        const auto& cls = cfg.classes[k];
        FlowSample s;
        s.z = rng.normal_vec(dim);
        s.y = RealVec(dim);
        const double sd = std::sqrt(cls.var);
        for (std::size_t i = 0; i < dim; ++i) s.y[i] = cls.mean[i] + sd * rng.normal();
        s.tau = rng.uniform();
        s.c = rng.uniform() < cfg.p_uncond ? cfg.null_embedding : basis_vector(num_classes, k);
        batch.push_back(std::move(s));
    }
    return batch;
}

TrainResult train(MlpField f, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (f.cond_dim() != cfg.classes.size() || f.state_dim() != cfg.classes.front().mean.dim()) {
        throw DimensionError("train: network dims do not match the dataset");
    }
    Adam adam(f, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    std::vector<LossSample> curve;
    double window = 0.0;
    std::size_t window_len = 0;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto batch = draw_batch(cfg, cfg.batch_size, rng);
        const MlpGradients grads = backprop(f, batch);
        if (!std::isfinite(grads.loss)) {
            std::ostringstream msg;
            msg << "training diverged at iteration " << it << " (loss " << grads.loss
                << ", learning rate " << cfg.learning_rate << ")";
            throw TrainingDiverged(msg.str());
        }
        if (it == 0) curve.push_back({0, grads.loss});
        adam.step(f, grads);
        window += grads.loss;
        ++window_len;
        if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations) {
            curve.push_back({it + 1, window / static_cast<double>(window_len)});
            window = 0.0;
            window_len = 0;
        }
    }
    return {std::move(f), std::move(curve)};
}

}  // namespace rfs
