#include "rfs/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace rfs {

namespace {

void bump(std::size_t* nfe) {
    if (nfe) ++*nfe;
}

Embedding plain_embedding(const VectorField& f, const SamplerConfig& cfg) {
    if (!f.supports_guidance_scale() || cfg.guidance.w == 1.0) return cfg.c_text;
    return Embedding(cfg.guidance.w * cfg.c_text.vec());
}

}  // namespace

void SamplerConfig::validate(const VectorField& f) const {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    guidance.validate();
    if (rf_mask.size() != static_cast<std::size_t>(steps)) {
        throw std::invalid_argument("rf_mask length " + std::to_string(rf_mask.size()) +
                                    " != steps " + std::to_string(steps));
    }
    if (c_text.dim() != f.cond_dim()) throw DimensionError("c_text dim does not match the field");
    if (c_uncond.dim() != f.cond_dim()) throw DimensionError("c_uncond dim does not match the field");
    if (!clamp_alpha) {
        for (int k = 0; k < steps; ++k) {
            if (rf_mask[k] && k + guidance.alpha > steps) {
                throw std::invalid_argument("reflective step " + std::to_string(k) +
                                            " would run past tau = 1 (alpha = " +
                                            std::to_string(guidance.alpha) + ")");
            }
        }
    }
}

std::vector<bool> full_mask(int steps) { return std::vector<bool>(std::max(steps, 0), true); }

std::vector<bool> empty_mask(int steps) { return std::vector<bool>(std::max(steps, 0), false); }

std::vector<bool> leading_mask(int steps, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in [0, 1]");
    std::vector<bool> mask(std::max(steps, 0), false);
    const auto count = static_cast<std::size_t>(std::lround(fraction * steps));
    std::fill_n(mask.begin(), std::min(count, mask.size()), true);
    return mask;
}

double tau_at(int k, int steps) {
    if (k == steps) return 1.0;
    return static_cast<double>(k) / static_cast<double>(steps);
}

int effective_alpha(const SamplerConfig& cfg, int k) {
    const int alpha = cfg.guidance.alpha;
    if (k + alpha <= cfg.steps) return alpha;
    if (!cfg.clamp_alpha) throw std::out_of_range("alpha runs past the data endpoint");
    return cfg.steps - k;
}

Latent euler_step(const VectorField& f, const Latent& x, TimePoint t, const Embedding& c, double dt,
                  std::size_t* nfe) {
    const double next = t.tau() + dt;
    // Tolerate the last grid point landing a rounding error past 1.
    if (next < -1e-12 || next > 1.0 + 1e-12) {
        throw std::out_of_range("euler_step: tau + dt = " + std::to_string(next) + " leaves [0, 1]");
    }
    if (dt == 0.0) return x;
    bump(nfe);
    return axpy(dt, f.velocity(x, t, c), x);
}

Latent denoise_burst(const VectorField& f, const Latent& x, int k, int steps, const Embedding& c,
                     int alpha, std::size_t* nfe) {
    if (alpha < 1 || k < 0 || k + alpha > steps) {
        throw std::out_of_range("denoise_burst: step " + std::to_string(k) + " + alpha " +
                                std::to_string(alpha) + " exceeds " + std::to_string(steps));
    }
    const double dt = 1.0 / steps;
    Latent cur = x;
    for (int i = 0; i < alpha; ++i) cur = euler_step(f, cur, TimePoint(tau_at(k + i, steps)), c, dt, nfe);
    return cur;
}

Latent invert_burst(const VectorField& f, const Latent& x, int k, int steps, const Embedding& c,
                    int alpha, std::size_t* nfe) {
    if (alpha < 1 || k < 0 || k + alpha > steps) {
        throw std::out_of_range("invert_burst: step " + std::to_string(k) + " + alpha " +
                                std::to_string(alpha) + " exceeds " + std::to_string(steps));
    }
    const double dt = 1.0 / steps;
    Latent cur = x;
    for (int i = 0; i < alpha; ++i) {
        bump(nfe);
        cur = axpy(-dt, f.velocity(cur, TimePoint(tau_at(k + alpha - 1 - i, steps)), c), cur);
    }
    return cur;
}

RealVec reflective_displacement(const VectorField& f, const Latent& x, int k,
                                const SamplerConfig& cfg, std::size_t* nfe) {
    const auto& g = cfg.guidance;
    const int alpha = effective_alpha(cfg, k);
    const Embedding c_high = weighted(cfg.c_text, cfg.c_uncond, g.s_high, g.beta_high);
    const Embedding c_low = weighted(cfg.c_text, cfg.c_uncond, g.s_low, g.beta_low);
    const Latent forward = denoise_burst(f, x, k, cfg.steps, c_high, alpha, nfe);
    const Latent reflected = invert_burst(f, forward, k, cfg.steps, c_low, alpha, nfe);
    return reflected - x;
}

Trajectory rf_sample(const VectorField& f, const Latent& noise, const SamplerConfig& cfg,
                     const ScoreFn& score) {
    cfg.validate(f);
    if (noise.dim() != f.state_dim()) throw DimensionError("rf_sample: noise dim != field state dim");
    const Embedding c_plain = plain_embedding(f, cfg);
    const double dt = cfg.dt();

    Trajectory traj;
    traj.latents.reserve(cfg.steps + 1);
    traj.latents.push_back(noise);
    traj.taus.push_back(0.0);
    traj.diagnostics.resize(cfg.steps);

    Latent x = noise;
    for (int k = 0; k < cfg.steps; ++k) {
        const TimePoint t(tau_at(k, cfg.steps));
        if (cfg.rf_mask[k]) {
            const RealVec drf = reflective_displacement(f, x, k, cfg, &traj.nfe);
            if (cfg.record_diagnostics) {
                StepDiagnostics d;
                d.step = k;
                d.tau = t.tau();
                d.alpha = effective_alpha(cfg, k);
                d.drf = drf;
                d.drf_norm = norm(drf);
                if (score) d.drf_dot_score = dot(drf, score(x, t));
                traj.diagnostics[k] = std::move(d);
            }
            if (cfg.guidance.gamma != 0.0) x = axpy(cfg.guidance.gamma, drf, x);
        }
        x = euler_step(f, x, t, c_plain, dt, &traj.nfe);
        require_finite(x, "rf_sample step " + std::to_string(k));
        traj.latents.push_back(x);
        traj.taus.push_back(tau_at(k + 1, cfg.steps));
    }
    return traj;
}

Trajectory standard_sample(const VectorField& f, const Latent& noise, const SamplerConfig& cfg) {
    SamplerConfig plain = cfg;
    plain.rf_mask = empty_mask(cfg.steps);
    return rf_sample(f, noise, plain);
}

std::size_t expected_nfe(const SamplerConfig& cfg) {
    std::size_t total = 0;
    for (int k = 0; k < cfg.steps; ++k) {
        total += 1;
        if (cfg.rf_mask.at(k)) total += 2 * static_cast<std::size_t>(effective_alpha(cfg, k));
    }
    return total;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          const std::vector<std::string>& comment_header) {
    for (const auto& line : comment_header) out << "# " << line << '\n';
    const std::size_t dim = traj.latents.empty() ? 0 : traj.latents.front().dim();
    out << "step,tau";
    for (std::size_t i = 0; i < dim; ++i) out << ",x_" << i;
    out << ",drf_norm,drf_dot_score\n";
    for (std::size_t k = 0; k < traj.latents.size(); ++k) {
        out << k << ',' << format_real(traj.taus[k]);
        for (double v : traj.latents[k]) out << ',' << format_real(v);
        out << ',';
        const StepDiagnostics* d =
            k < traj.diagnostics.size() && traj.diagnostics[k] ? &*traj.diagnostics[k] : nullptr;
        if (d) out << format_real(d->drf_norm);
        out << ',';
        if (d && d->drf_dot_score) out << format_real(*d->drf_dot_score);
        out << '\n';
    }
}

}  // namespace rfs
