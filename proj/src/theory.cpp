#include "rfs/theory.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace rfs {

namespace {

struct Probe {
    std::size_t klass = 0;
    int step = 0;
    Latent x;
};

// Class first, then the step, then the starting noise.
Probe draw_probe(const VectorField& f, const SamplerConfig& cfg, const Embedding& c_text,
                 std::size_t klass, double tau_min, double tau_max, Rng& rng) {
    const int steps = cfg.steps;
    const int lo = static_cast<int>(std::ceil(tau_min * steps));
    const int hi = std::min(static_cast<int>(std::floor(tau_max * steps)), steps - 1);
    if (lo > hi) throw std::invalid_argument("probe window [tau_min, tau_max] holds no step");
    Probe p;
    p.klass = klass;
    p.step = lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));
    p.x = rng.normal_vec(f.state_dim());
    for (int s = 0; s < p.step; ++s) p.x = euler_step(f, p.x, TimePoint(tau_at(s, steps)), c_text, cfg.dt());
    return p;
}

Embedding scaled_text(const Embedding& c_text, const Embedding& c_uncond, double scale) {
    return Embedding(axpy(scale, c_text.vec() - c_uncond.vec(), c_uncond.vec()));
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Solves the 3x3 system in place by partial pivoting.
std::array<double, 3> solve3(std::array<std::array<double, 4>, 3> m) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        }
        std::swap(m[col], m[pivot]);
        if (m[col][col] == 0.0) throw NumericError("quadratic fit: singular normal equations");
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double factor = m[r][col] / m[col][col];
            for (int c = col; c < 4; ++c) m[r][c] -= factor * m[col][c];
        }
    }
    return {m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]};
}

}  // namespace

ClassScoreFn mixture_score(const GaussianMixtureField& scorer) {
    return [&scorer](const Latent& x, TimePoint t, std::size_t k) { return scorer.posterior_score(x, t, k); };
}

FirstOrderReport check_first_order(const VectorField& f, const SamplerConfig& cfg,
                                   const std::vector<Embedding>& class_embeddings,
                                   const ClassScoreFn& score, const ProbeOptions& opts, Rng& rng) {
    if (class_embeddings.empty()) throw std::invalid_argument("check_first_order: no class embeddings");
    if (opts.probes == 0) throw std::invalid_argument("check_first_order: probes must be positive");
    if (!score) throw std::invalid_argument("check_first_order: a score is required");

    FirstOrderReport report;
    report.alignment_coefficient = alignment_coefficient(cfg.guidance);
    report.precondition_holds = report.alignment_coefficient > 0.0;
    report.probes = opts.probes;
    report.min_cosine = 1.0;

    const double dt = cfg.dt();
    double cos_sum = 0.0;
    double cross = 0.0;
    double score_sq = 0.0;
    std::size_t ascents = 0;
    for (std::size_t i = 0; i < opts.probes; ++i) {
        const std::size_t k = rng.below(class_embeddings.size());
        SamplerConfig pc = cfg;
        pc.c_text = scaled_text(class_embeddings[k], cfg.c_uncond, opts.u_scale);
        pc.rf_mask = full_mask(cfg.steps);
        pc.validate(f);
        const Probe p = draw_probe(f, pc, pc.c_text, k, opts.tau_min, opts.tau_max, rng);
        const TimePoint t(tau_at(p.step, cfg.steps));

        const RealVec drf = reflective_displacement(f, p.x, p.step, pc);
        const RealVec g = score(p.x, t, k);
        const double inner = dot(drf, g);
        const double denom = norm(drf) * norm(g);
        const double cosine = denom > 0.0 ? inner / denom : 0.0;
        cos_sum += cosine;
        report.min_cosine = std::min(report.min_cosine, cosine);
        if (inner > 0.0) ++ascents;
        report.max_drf_norm = std::max(report.max_drf_norm, norm(drf));

        const RealVec u = pc.c_text.vec() - pc.c_uncond.vec();
        const RealVec linear =
            (dt * report.alignment_coefficient) * f.embedding_derivative(p.x, t, pc.c_uncond, u);
        const double lin_norm = norm(linear);
        const double residual = lin_norm > 0.0 ? norm(drf - linear) / lin_norm
                                               : (norm(drf) > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        report.proportionality_residual = std::max(report.proportionality_residual, residual);

        const RealVec diff = f.velocity(p.x, t, pc.c_text) - f.velocity(p.x, t, pc.c_uncond);
        cross += dot(diff, g);
        score_sq += dot(g, g);
    }
    report.cosine = cos_sum / static_cast<double>(opts.probes);
    report.ascent_fraction = static_cast<double>(ascents) / static_cast<double>(opts.probes);
    if (score_sq > 0.0) report.proportionality_constant = cross / score_sq;
    return report;
}

RemainderReport check_remainder_scaling(const VectorField& f, const SamplerConfig& cfg,
                                        const std::vector<Embedding>& class_embeddings,
                                        const std::vector<double>& scales, std::size_t probes,
                                        Rng& rng) {
    if (scales.size() < 2) throw std::invalid_argument("remainder scaling: degenerate fit, need >= 2 scales");
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (!(scales[i] > 0.0) || (i > 0 && !(scales[i] < scales[i - 1]))) {
            throw std::invalid_argument("remainder scaling: scales must be positive and decreasing");
        }
    }
    if (class_embeddings.empty() || probes == 0) {
        throw std::invalid_argument("remainder scaling: need class embeddings and probes");
    }

    RemainderReport report;
    report.scales = scales;
    report.probes = probes;
    report.residuals.assign(scales.size(), 0.0);
    constexpr double kTangentStep = 1e-4;
    double drf_scale = 0.0;
    for (std::size_t i = 0; i < probes; ++i) {
        const std::size_t k = rng.below(class_embeddings.size());
        SamplerConfig pc = cfg;
        pc.c_text = class_embeddings[k];
        pc.rf_mask = full_mask(cfg.steps);
        pc.validate(f);
        const Probe p = draw_probe(f, pc, pc.c_text, k, 0.2, 0.8, rng);
        auto drf_at = [&](double e) {
            SamplerConfig sc = pc;
            sc.c_text = scaled_text(class_embeddings[k], cfg.c_uncond, e);
            return reflective_displacement(f, p.x, p.step, sc);
        };
        const RealVec base = drf_at(0.0);
        const RealVec tangent = (1.0 / (2.0 * kTangentStep)) * (drf_at(kTangentStep) - drf_at(-kTangentStep));
        for (std::size_t s = 0; s < scales.size(); ++s) {
            const RealVec full = drf_at(scales[s]);
            if (s == 0) drf_scale += norm(full) / static_cast<double>(probes);
            report.residuals[s] += norm(full - base - scales[s] * tangent) / static_cast<double>(probes);
        }
    }

    const double floor = 1e-8 * std::max(drf_scale, std::numeric_limits<double>::min());
    report.exact = std::all_of(report.residuals.begin(), report.residuals.end(),
                               [&](double r) { return r <= floor; });
    if (report.exact) return report;

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(scales.size());
    for (std::size_t s = 0; s < scales.size(); ++s) {
        if (!(report.residuals[s] > 0.0)) throw NumericError("remainder scaling: degenerate fit, zero residual");
        const double lx = std::log(scales[s]);
        const double ly = std::log(report.residuals[s]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    report.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return report;
}

double quadratic_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("quadratic fit needs >= 3 points");
    const double xm = mean_of(x);
    std::array<std::array<double, 4>, 3> m{};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xc = x[i] - xm;
        const std::array<double, 3> basis{1.0, xc, xc * xc};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m[r][c] += basis[r] * basis[c];
            m[r][3] += basis[r] * y[i];
        }
    }
    const auto coef = solve3(m);
    const double ym = mean_of(y);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xc = x[i] - xm;
        const double fit = coef[0] + coef[1] * xc + coef[2] * xc * xc;
        ss_res += (y[i] - fit) * (y[i] - fit);
        ss_tot += (y[i] - ym) * (y[i] - ym);
    }
    if (ss_tot == 0.0) return 1.0;
    return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

SecondOrderReport check_second_order(const ScalarFn& objective, const Latent& x, const RealVec& d,
                                     const std::vector<double>& gamma_grid, double hessian_step) {
    if (!(norm(d) > 0.0)) throw std::invalid_argument("check_second_order: direction must be nonzero");
    if (x.dim() != d.dim()) throw DimensionError("check_second_order: direction dim != state dim");
    if (gamma_grid.size() < 3) throw std::invalid_argument("check_second_order: grid needs >= 3 points");
    for (std::size_t i = 1; i < gamma_grid.size(); ++i) {
        if (!(gamma_grid[i] > gamma_grid[i - 1])) throw std::invalid_argument("gamma grid must be strictly increasing");
    }

    SecondOrderReport report;
    report.gamma_grid = gamma_grid;
    const double j0 = objective(x);
    if (!std::isfinite(j0)) throw NumericError("check_second_order: J(x) is not finite");
    for (double g : gamma_grid) {
        const double jg = objective(axpy(g, d, x));
        if (!std::isfinite(jg)) throw NumericError("check_second_order: J not finite at gamma " + format_real(g));
        report.delta_j.push_back(jg - j0);
    }
    const auto best = std::max_element(report.delta_j.begin(), report.delta_j.end());
    const auto idx = static_cast<std::size_t>(best - report.delta_j.begin());
    report.gamma_star_empirical = gamma_grid[idx];
    report.interior_max = idx > 0 && idx + 1 < gamma_grid.size();
    report.quadratic_fit_r2 = quadratic_fit_r2(gamma_grid, report.delta_j);

    report.directional_gradient = dot(d, central_diff_grad(objective, x));
    // Below this the second difference is rounding noise of a flat direction.
    const double tol = 1e-6 * std::max(1.0, std::abs(j0)) * dot(d, d);
    auto closed_form = [&](double curvature) -> std::optional<double> {
        if (!(curvature < -tol)) return std::nullopt;
        return report.directional_gradient / std::abs(curvature);
    };
    report.curvature = directional_hessian(objective, x, d, hessian_step);
    report.concave = report.curvature < -tol;
    report.gamma_star_closed = closed_form(report.curvature);
    for (double factor : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        HessianProbe hp;
        hp.h = factor * hessian_step;
        hp.curvature = directional_hessian(objective, x, d, hp.h);
        hp.gamma_star = closed_form(hp.curvature);
        report.hessian_sensitivity.push_back(hp);
    }
    return report;
}

Latent AlignmentTask::noise_of(std::uint64_t seed) const {
    Rng rng(seed, kNoiseStream);
    return rng.normal_vec(field->state_dim());
}

void AlignmentTask::validate() const {
    if (!field || !scorer) throw std::invalid_argument("task: field and scorer are required");
    if (class_embeddings.size() != scorer->num_classes()) {
        throw std::invalid_argument("task: need one embedding per scorer class");
    }
    if (field->state_dim() != scorer->state_dim()) throw DimensionError("task: field and scorer dims differ");
    for (const auto& e : class_embeddings) {
        if (e.dim() != field->cond_dim()) throw DimensionError("task: class embedding dim != field cond dim");
    }
    if (c_uncond.dim() != field->cond_dim()) throw DimensionError("task: c_uncond dim != field cond dim");
}

AlignmentTask analytic_task(std::shared_ptr<const GaussianMixtureField> field) {
    AlignmentTask task;
    for (std::size_t k = 0; k < field->num_classes(); ++k) task.class_embeddings.push_back(field->class_embedding(k));
    task.c_uncond = field->null_embedding();
    task.scorer = field;
    task.field = std::move(field);
    return task;
}

SamplerConfig RunSettings::sampler_config(const AlignmentTask& task, std::size_t k) const {
    SamplerConfig cfg;
    cfg.steps = steps;
    cfg.guidance = guidance;
    cfg.c_text = task.class_embeddings.at(k);
    cfg.c_uncond = task.c_uncond;
    cfg.rf_mask = leading_mask(steps, rf_fraction);
    return cfg;
}

SeedResult run_seed(const AlignmentTask& task, const RunSettings& settings, std::uint64_t seed,
                    Trajectory* trajectory) {
    SeedResult r;
    r.seed = seed;
    r.klass = task.class_of(seed);
    const SamplerConfig cfg = settings.sampler_config(task, r.klass);
    Trajectory traj = rf_sample(*task.field, task.noise_of(seed), cfg);
    r.final_j = task.scorer->log_posterior(traj.final_latent(), TimePoint(1.0), r.klass);
    r.nfe = traj.nfe;
    if (trajectory) *trajectory = std::move(traj);
    return r;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = n;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<SeedResult> run_seeds(const AlignmentTask& task, const RunSettings& settings,
                                  const std::vector<std::uint64_t>& seeds, std::size_t workers) {
    task.validate();
    std::vector<SeedResult> out(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t i) { out[i] = run_seed(task, settings, seeds[i]); });
    return out;
}

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "gamma") return SweepAxis::Gamma;
    if (name == "gap") return SweepAxis::Gap;
    if (name == "rf-fraction" || name == "rf_fraction") return SweepAxis::RfFraction;
    if (name == "steps") return SweepAxis::Steps;
    throw std::invalid_argument("unknown sweep axis '" + name + "' (gamma|gap|rf-fraction|steps)");
}

std::string sweep_axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Gamma: return "gamma";
        case SweepAxis::Gap: return "gap";
        case SweepAxis::RfFraction: return "rf-fraction";
        case SweepAxis::Steps: return "steps";
    }
    return "?";
}

RunSettings apply_axis(RunSettings base, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::Gamma: base.guidance.gamma = value; break;
        case SweepAxis::Gap: base.guidance.s_high = base.guidance.s_low + value; break;
        case SweepAxis::RfFraction: base.rf_fraction = value; break;
        case SweepAxis::Steps:
            if (value < 1.0 || value != std::floor(value)) {
                throw std::invalid_argument("steps axis values must be positive integers");
            }
            base.steps = static_cast<int>(value);
            break;
    }
    return base;
}

SweepTable sweep(const AlignmentTask& task, const RunSettings& base, SweepAxis axis,
                 const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                 std::size_t workers) {
    if (values.size() < 2) throw std::invalid_argument("sweep: need >= 2 values");
    if (seeds.empty()) throw std::invalid_argument("sweep: need at least one seed");
    SweepTable table;
    table.axis = axis;
    table.seeds = seeds;
    for (double v : values) {
        const RunSettings settings = apply_axis(base, axis, v);
        const auto results = run_seeds(task, settings, seeds, workers);
        SweepRow row;
        row.value = v;
        for (const auto& r : results) {
            row.per_seed_j.push_back(r.final_j);
            row.nfe = std::max(row.nfe, r.nfe);
        }
        row.mean_j = mean_of(row.per_seed_j);
        row.std_j = sample_std(row.per_seed_j);
        row.stderr_j = row.std_j / std::sqrt(static_cast<double>(seeds.size()));
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
    std::vector<std::uint64_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
    return out;
}

PairedDifference paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("paired_difference: size mismatch");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    return {mean_of(diff), sample_std(diff) / std::sqrt(static_cast<double>(diff.size()))};
}

SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sign_test: size mismatch");
    SignTest t;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) ++t.wins;
        else if (a[i] < b[i]) ++t.losses;
        else ++t.ties;
    }
    const std::size_t n = t.wins + t.losses;
    if (n == 0) return t;
    const double log_half_n = static_cast<double>(n) * std::log(0.5);
    double p = 0.0;
    for (std::size_t i = t.wins; i <= n; ++i) {
        const double log_choose = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        p += std::exp(log_choose + log_half_n);
    }
    t.p_value = std::min(1.0, p);
    return t;
}

}  // namespace rfs
