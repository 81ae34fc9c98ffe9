#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rfs/fields.hpp"
#include "rfs/sampler.hpp"

namespace rfs {

/// Gradient of the alignment score J_k(x) = log p(k | x_tau = x).
using ClassScoreFn = std::function<RealVec(const Latent&, TimePoint, std::size_t)>;

ClassScoreFn mixture_score(const GaussianMixtureField& scorer);

/// Where first-order probes come from.
struct ProbeOptions {
    std::size_t probes = 500;
    double tau_min = 0.2;
    double tau_max = 0.8;
    /// Multiplies u = c_text - c_uncond before probing.
    double u_scale = 1.0;
};

struct FirstOrderReport {
    /// Mean cos(drf, grad J) over probes.
    double cosine = 0.0;
    double min_cosine = 0.0;
    double ascent_fraction = 0.0;
    /// Max over probes of |drf - dt A D| / |dt A D|, where D is the
    /// derivative of the velocity along u at c_uncond.
    double proportionality_residual = 0.0;
    /// Max |drf| seen, useful when A = 0.
    double max_drf_norm = 0.0;
    /// Least-squares lambda in (v_cond - v_uncond) ~ lambda grad J.
    std::optional<double> proportionality_constant;
    double alignment_coefficient = 0.0;
    /// False when A <= 0; the report is still filled in.
    bool precondition_holds = true;
    std::size_t probes = 0;
};

/// Runs standard sampling toward a random class to a random step with
/// tau in [tau_min, tau_max], then compares the reflective displacement
/// there against the score. `class_embeddings[k]` is the c_text of class k;
/// cfg.c_uncond is the unconditional embedding.
FirstOrderReport check_first_order(const VectorField& f, const SamplerConfig& cfg,
                                   const std::vector<Embedding>& class_embeddings,
                                   const ClassScoreFn& score, const ProbeOptions& opts, Rng& rng);

struct RemainderReport {
    std::vector<double> scales;
    /// Mean |drf(e) - drf(0) - e drf'(0)| over probes, per scale.
    std::vector<double> residuals;
    /// Log-log regression slope; empty when the residuals sit at the
    /// rounding floor (the field is linear in c).
    std::optional<double> slope;
    bool exact = false;
    std::size_t probes = 0;
};

/// Shrinks u by each scale and measures the part of drf not explained by
/// its tangent at u = 0.
RemainderReport check_remainder_scaling(const VectorField& f, const SamplerConfig& cfg,
                                        const std::vector<Embedding>& class_embeddings,
                                        const std::vector<double>& scales, std::size_t probes,
                                        Rng& rng);

struct HessianProbe {
    double h = 0.0;
    double curvature = 0.0;
    std::optional<double> gamma_star;
};

struct SecondOrderReport {
    std::vector<double> gamma_grid;
    std::vector<double> delta_j;
    /// <d, grad J(x)>.
    double directional_gradient = 0.0;
    /// d^T H d.
    double curvature = 0.0;
    /// Omitted when the direction is not concave.
    std::optional<double> gamma_star_closed;
    double gamma_star_empirical = 0.0;
    bool interior_max = false;
    bool concave = false;
    double quadratic_fit_r2 = 0.0;
    /// gamma* recomputed with h / 4, h / 2, h, 2h, 4h.
    std::vector<HessianProbe> hessian_sensitivity;
};

SecondOrderReport check_second_order(const ScalarFn& objective, const Latent& x, const RealVec& d,
                                     const std::vector<double>& gamma_grid,
                                     double hessian_step = kHessianStep);

/// Least-squares parabola through (x, y); returns r^2.
double quadratic_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

/// A field plus the analytic mixture that scores its samples.
///
/// Seed s samples class s mod K from noise Rng(s, kNoiseStream), and its
/// final alignment score is the scorer's log posterior at tau = 1.
struct AlignmentTask {
    std::shared_ptr<const VectorField> field;
    std::shared_ptr<const GaussianMixtureField> scorer;
    std::vector<Embedding> class_embeddings;
    Embedding c_uncond;

    std::size_t class_of(std::uint64_t seed) const { return seed % class_embeddings.size(); }
    Latent noise_of(std::uint64_t seed) const;
    void validate() const;
};

inline constexpr std::uint64_t kNoiseStream = 3;

/// Uses the mixture as both field and scorer.
AlignmentTask analytic_task(std::shared_ptr<const GaussianMixtureField> field);

/// Everything of a sampling run except the conditioning.
struct RunSettings {
    int steps = 20;
    GuidanceParams guidance;
    double rf_fraction = 1.0;

    SamplerConfig sampler_config(const AlignmentTask& task, std::size_t k) const;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::size_t klass = 0;
    double final_j = 0.0;
    std::size_t nfe = 0;
};

SeedResult run_seed(const AlignmentTask& task, const RunSettings& settings, std::uint64_t seed,
                    Trajectory* trajectory = nullptr);

/// Runs fn(i) for i in [0, n) on at most `workers` threads (0 = one).
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::vector<SeedResult> run_seeds(const AlignmentTask& task, const RunSettings& settings,
                                  const std::vector<std::uint64_t>& seeds, std::size_t workers = 1);

enum class SweepAxis { Gamma, Gap, RfFraction, Steps };

SweepAxis parse_sweep_axis(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

/// Settings with one axis value applied. The gap axis keeps s_low fixed and
/// sets s_high = s_low + gap.
RunSettings apply_axis(RunSettings base, SweepAxis axis, double value);

struct SweepRow {
    double value = 0.0;
    double mean_j = 0.0;
    double std_j = 0.0;
    double stderr_j = 0.0;
    std::size_t nfe = 0;
    std::vector<double> per_seed_j;
};

struct SweepTable {
    SweepAxis axis = SweepAxis::Gamma;
    std::vector<std::uint64_t> seeds;
    std::vector<SweepRow> rows;
};

/// Paired-seed evaluation: every value runs on the same seed list.
SweepTable sweep(const AlignmentTask& task, const RunSettings& base, SweepAxis axis,
                 const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                 std::size_t workers = 1);

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

struct PairedDifference {
    double mean = 0.0;
    double stderr_mean = 0.0;
};

/// Mean and standard error of a[i] - b[i].
PairedDifference paired_difference(const std::vector<double>& a, const std::vector<double>& b);

struct SignTest {
    std::size_t wins = 0;
    std::size_t losses = 0;
    std::size_t ties = 0;
    /// One-sided exact binomial P(W >= wins) under p = 1/2, ties dropped.
    double p_value = 1.0;
};

/// Tests whether a[i] > b[i] more often than chance.
SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace rfs
