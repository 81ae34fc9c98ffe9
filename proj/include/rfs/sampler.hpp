#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rfs/embedding.hpp"
#include "rfs/fields.hpp"

namespace rfs {

/// Discretisation and guidance for one sampling run.
///
/// Step k runs from tau_k = k / steps to tau_{k+1}. rf_mask[k] selects the
/// steps that perform the reflective excursion before the plain step.
struct SamplerConfig {
    int steps = 28;
    GuidanceParams guidance;
    Embedding c_text;
    Embedding c_uncond;
    std::vector<bool> rf_mask;
    bool record_diagnostics = false;
    /// Truncate alpha to steps - k near the data endpoint instead of failing.
    bool clamp_alpha = true;

    double dt() const { return 1.0 / steps; }
    void validate(const VectorField& f) const;
};

std::vector<bool> full_mask(int steps);
std::vector<bool> empty_mask(int steps);
/// The first round(fraction * steps) steps are reflective.
std::vector<bool> leading_mask(int steps, double fraction);

double tau_at(int k, int steps);

/// Excursion length actually used at step k.
int effective_alpha(const SamplerConfig& cfg, int k);

struct StepDiagnostics {
    int step = 0;
    double tau = 0.0;
    int alpha = 0;
    RealVec drf;
    double drf_norm = 0.0;
    std::optional<double> drf_dot_score;
};

struct Trajectory {
    std::vector<Latent> latents;  // steps + 1 boundary states
    std::vector<double> taus;
    std::vector<std::optional<StepDiagnostics>> diagnostics;  // one slot per step
    std::size_t nfe = 0;

    const Latent& final_latent() const { return latents.back(); }
};

/// Gradient of the alignment score, used only for diagnostics.
using ScoreFn = std::function<RealVec(const Latent&, TimePoint)>;

/// x + v(x, t, c) dt. Counts one evaluation into *nfe when given.
Latent euler_step(const VectorField& f, const Latent& x, TimePoint t, const Embedding& c, double dt,
                  std::size_t* nfe = nullptr);

/// alpha forward Euler steps from tau_k, evaluating at tau_k ... tau_{k+alpha-1}.
Latent denoise_burst(const VectorField& f, const Latent& x, int k, int steps, const Embedding& c,
                     int alpha, std::size_t* nfe = nullptr);

/// alpha backward Euler steps from tau_{k+alpha} down to tau_k. The field
/// is evaluated at the current state but at the times denoise_burst visited,
/// in reverse: tau_{k+alpha-1}, ..., tau_k.
Latent invert_burst(const VectorField& f, const Latent& x, int k, int steps, const Embedding& c,
                    int alpha, std::size_t* nfe = nullptr);

/// Net displacement of high-weight denoising followed by low-weight
/// inversion: invert(denoise(x, c_high), c_low) - x.
RealVec reflective_displacement(const VectorField& f, const Latent& x, int k,
                                const SamplerConfig& cfg, std::size_t* nfe = nullptr);

/// Reflective sampling. For each masked step: x <- x + gamma * drf, then a
/// plain Euler step with c_text at the unchanged time tau_k.
Trajectory rf_sample(const VectorField& f, const Latent& noise, const SamplerConfig& cfg,
                     const ScoreFn& score = nullptr);

/// Plain Euler integration with c_text.
Trajectory standard_sample(const VectorField& f, const Latent& noise, const SamplerConfig& cfg);

/// Field evaluations a run of rf_sample costs: 2 alpha_k + 1 per reflective
/// step, 1 per plain step.
std::size_t expected_nfe(const SamplerConfig& cfg);

/// CSV: step,tau,x_0..x_{d-1},drf_norm,drf_dot_score. Lines in
/// `comment_header` are written first, each prefixed with "# ".
void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          const std::vector<std::string>& comment_header = {});

}  // namespace rfs
