#include <cmath>
#include <sstream>

#include "doctest.h"
#include "rfs/sampler.hpp"

using namespace rfs;

namespace {

SamplerConfig make_config(int steps, const Embedding& c_text, const Embedding& c_uncond) {
    SamplerConfig cfg;
    cfg.steps = steps;
    cfg.c_text = c_text;
    cfg.c_uncond = c_uncond;
    cfg.rf_mask = full_mask(steps);
    return cfg;
}

GaussianMixtureField two_class_field() {
    return GaussianMixtureField({{RealVec{0.5, 0.0}, 1.0, 0.5}, {RealVec{-0.5, 0.0}, 1.0, 0.5}});
}

}  // namespace

TEST_CASE("euler_step") {
    const ConstantField c(RealVec{1, -2}, 1);
    const RealVec x1 = euler_step(c, RealVec{0, 0}, TimePoint(0.0), Embedding{0}, 0.1);
    CHECK(max_abs_diff(x1, RealVec{0.1, -0.2}) <= 1e-16);
    std::size_t nfe = 0;
    CHECK(euler_step(c, RealVec{3, 4}, TimePoint(0.5), Embedding{0}, 0.0, &nfe) == RealVec{3, 4});
    CHECK(nfe == 0);
    const LinearEmbeddingField decay(RealMat(1, 1, {-1.0}), RealVec(1), RealMat(1, 1));
    CHECK(std::abs(euler_step(decay, RealVec{1}, TimePoint(0.0), Embedding{0}, 0.1)[0] - 0.9) <= 1e-15);
    CHECK_THROWS_AS(euler_step(c, RealVec{0, 0}, TimePoint(0.95), Embedding{0}, 0.1), std::out_of_range);
}

TEST_CASE("denoise_burst") {
    const GaussianMixtureField f = two_class_field();
    const RealVec x{0.3, -0.2};
    const Embedding c = f.class_embedding(0);
    CHECK(denoise_burst(f, x, 3, 10, c, 1) == euler_step(f, x, TimePoint(0.3), c, 0.1));
    const ConstantField k(RealVec{1, -2}, 2);
    const RealVec two = denoise_burst(k, x, 0, 10, c, 2);
    CHECK(max_abs_diff(two, axpy(0.2, RealVec{1, -2}, x)) <= 1e-15);
    CHECK_THROWS_AS(denoise_burst(k, x, 9, 10, c, 2), std::out_of_range);
}

TEST_CASE("denoise_burst converges to the exponential flow at first order") {
    // v = -x has flow x(tau) = x0 exp(-tau).
    const LinearEmbeddingField decay(RealMat(1, 1, {-1.0}), RealVec(1), RealMat(1, 1));
    auto error_at = [&](int steps) {
        const RealVec x = denoise_burst(decay, RealVec{1.0}, 0, steps, Embedding{0}, steps);
        return std::abs(x[0] - std::exp(-1.0));
    };
    const double ratio = error_at(64) / error_at(128);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("invert_burst undoes denoise_burst exactly on a constant field") {
    const ConstantField k(RealVec{0.7, -1.3}, 1);
    const RealVec x{0.25, 0.5};
    for (int alpha : {1, 2, 3}) {
        const RealVec there = denoise_burst(k, x, 2, 16, Embedding{0}, alpha);
        CHECK(max_abs_diff(invert_burst(k, there, 2, 16, Embedding{0}, alpha), x) <= 1e-15);
    }
}

TEST_CASE("round-trip defect is second order in dt") {
    // Unit-variance classes flow by pure translation, so use a narrower one.
    const GaussianMixtureField f({{RealVec{0.5, 0.0}, 0.3, 0.5}, {RealVec{-0.5, 0.0}, 1.0, 0.5}});
    const Embedding c = f.class_embedding(0);
    const RealVec x{0.4, -0.3};
    auto defect = [&](int steps) {
        const int k = steps / 2;
        return norm(invert_burst(f, denoise_burst(f, x, k, steps, c, 1), k, steps, c, 1) - x);
    };
    CHECK(defect(40) / defect(80) == doctest::Approx(4.0).epsilon(0.125));
    CHECK(defect(80) / defect(160) == doctest::Approx(4.0).epsilon(0.125));
}

TEST_CASE("alpha = 1 round trip on a linear field equals dt^2 M v(x)") {
    const RealMat m(2, 2, {-0.5, 1.0, 0.25, -2.0});
    const LinearEmbeddingField f(m, RealVec{0.3, -0.1}, RealMat(2, 1, {1.0, 2.0}));
    const RealVec x{0.8, -0.6};
    const Embedding c{0.5};
    const int steps = 50;
    const double dt = 1.0 / steps;
    const RealVec back = invert_burst(f, denoise_burst(f, x, 10, steps, c, 1), 10, steps, c, 1);
    const RealVec predicted = (dt * dt) * matvec(m, f.velocity(x, TimePoint(0.2), c));
    CHECK(max_abs_diff(x - back, predicted) <= 1e-14);
}

TEST_CASE("reflective displacement on embedding-linear fields") {
    const ConstantField k(RealVec{1.0, 2.0}, 2);
    SamplerConfig same = make_config(10, Embedding{1, 0}, Embedding{0, 0});
    same.guidance.s_low = same.guidance.s_high;
    same.guidance.beta_low = same.guidance.beta_high;
    CHECK(norm(reflective_displacement(k, RealVec{0.1, 0.2}, 3, same)) <= 1e-15);

    const RealMat b(2, 2, {1.0, -0.5, 2.0, 0.25});
    const LinearEmbeddingField lin(RealMat(2, 2), RealVec(2), b);
    SamplerConfig cfg = make_config(20, Embedding{0.7, -1.1}, Embedding{0, 0});
    cfg.guidance.s_high = 9.0;
    cfg.guidance.s_low = -1.0;
    const RealVec drf = reflective_displacement(lin, RealVec{0.4, 0.9}, 5, cfg);
    const RealVec expected = (cfg.dt() * alignment_coefficient(cfg.guidance)) * matvec(b, cfg.c_text.vec());
    CHECK(max_abs_diff(drf, expected) <= 1e-10 * norm(expected));
}

TEST_CASE("reflective displacement ascends the mixture posterior") {
    const GaussianMixtureField f = two_class_field();
    SamplerConfig cfg = make_config(400, f.class_embedding(0), f.null_embedding());
    cfg.guidance.s_high = 9.0;
    cfg.guidance.s_low = -1.0;
    Rng rng(12, 0);
    for (int i = 0; i < 50; ++i) {
        const int k = 80 + static_cast<int>(rng.below(240));
        const RealVec x = rng.normal_vec(2);
        const RealVec drf = reflective_displacement(f, x, k, cfg);
        CHECK(dot(drf, f.posterior_score(x, TimePoint(tau_at(k, 400)), 0)) > 0.0);
    }
}

TEST_CASE("rf_sample reduces to standard sampling") {
    const GaussianMixtureField f = two_class_field();
    SamplerConfig cfg = make_config(28, f.class_embedding(1), f.null_embedding());
    Rng rng(3, 0);
    const RealVec noise = rng.normal_vec(2);
    const Trajectory standard = standard_sample(f, noise, cfg);

    SamplerConfig zero_gamma = cfg;
    zero_gamma.guidance.gamma = 0.0;
    const Trajectory a = rf_sample(f, noise, zero_gamma);
    SamplerConfig no_mask = cfg;
    no_mask.rf_mask = empty_mask(28);
    const Trajectory b = rf_sample(f, noise, no_mask);
    for (std::size_t i = 0; i < standard.latents.size(); ++i) {
        CHECK(max_abs_diff(a.latents[i], standard.latents[i]) <= 1e-12);
        CHECK(max_abs_diff(b.latents[i], standard.latents[i]) <= 1e-12);
    }
    CHECK(b.nfe == 28);
    CHECK(a.nfe == 84);
}

TEST_CASE("NFE accounting") {
    const ConstantField k(RealVec{0.0}, 1);
    for (int alpha : {1, 2, 3}) {
        for (double fraction : {0.0, 0.25, 0.5, 1.0}) {
            SamplerConfig cfg = make_config(28, Embedding{1}, Embedding{0});
            cfg.guidance.alpha = alpha;
            cfg.rf_mask = leading_mask(28, fraction);
            std::size_t formula = 0;
            for (int s = 0; s < 28; ++s) formula += cfg.rf_mask[s] ? 2 * std::min(alpha, 28 - s) + 1 : 1;
            const Trajectory t = rf_sample(k, RealVec{0.0}, cfg);
            CHECK(t.nfe == formula);
            CHECK(expected_nfe(cfg) == formula);
        }
    }
    SamplerConfig full = make_config(28, Embedding{1}, Embedding{0});
    CHECK(expected_nfe(full) == 28 * 3);
}

TEST_CASE("alpha near the data endpoint") {
    const ConstantField k(RealVec{1.0}, 1);
    SamplerConfig cfg = make_config(10, Embedding{1}, Embedding{0});
    cfg.guidance.alpha = 3;
    CHECK(effective_alpha(cfg, 8) == 2);
    CHECK(effective_alpha(cfg, 2) == 3);
    cfg.clamp_alpha = false;
    CHECK_THROWS_AS(cfg.validate(k), std::invalid_argument);
    cfg.rf_mask = leading_mask(10, 0.5);
    CHECK_NOTHROW(cfg.validate(k));
}

TEST_CASE("config validation") {
    const ConstantField k(RealVec{1.0}, 1);
    SamplerConfig cfg = make_config(10, Embedding{1}, Embedding{0});
    cfg.rf_mask.pop_back();
    CHECK_THROWS_AS(cfg.validate(k), std::invalid_argument);
    cfg = make_config(10, Embedding{1, 2}, Embedding{0, 0});
    CHECK_THROWS_AS(cfg.validate(k), DimensionError);
}

TEST_CASE("standard sampling oracles") {
    const ConstantField zero(RealVec{0.0, 0.0}, 1);
    SamplerConfig cfg = make_config(16, Embedding{1}, Embedding{0});
    CHECK(standard_sample(zero, RealVec{0.3, -0.7}, cfg).final_latent() == RealVec{0.3, -0.7});

    // v = -x + c flows to c + (x0 - c) exp(-1) at tau = 1.
    const LinearEmbeddingField lin(RealMat(1, 1, {-1.0}), RealVec(1), RealMat(1, 1, {1.0}));
    auto error_at = [&](int steps) {
        SamplerConfig c = make_config(steps, Embedding{2.0}, Embedding{0.0});
        const double x = standard_sample(lin, RealVec{0.5}, c).final_latent()[0];
        return std::abs(x - (2.0 + (0.5 - 2.0) * std::exp(-1.0)));
    };
    CHECK(error_at(1000) < 1e-3);
    CHECK(error_at(200) / error_at(400) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("single-Gaussian samples have the data mean") {
    const GaussianMixtureField f({{RealVec{1.5, -0.5}, 0.4, 1.0}});
    SamplerConfig cfg = make_config(20, f.class_embedding(0), f.null_embedding());
    const int n = 10000;
    Rng rng(21, 0);
    RealVec sum(2), sq(2);
    for (int i = 0; i < n; ++i) {
        const RealVec y = standard_sample(f, rng.normal_vec(2), cfg).final_latent();
        for (std::size_t j = 0; j < 2; ++j) {
            sum[j] += y[j];
            sq[j] += y[j] * y[j];
        }
    }
    for (std::size_t j = 0; j < 2; ++j) {
        const double mean = sum[j] / n;
        const double se = std::sqrt((sq[j] / n - mean * mean) / n);
        CHECK(std::abs(mean - f.classes()[0].mean[j]) <= 3.0 * se);
    }
}

TEST_CASE("trajectory CSV") {
    const GaussianMixtureField f = two_class_field();
    SamplerConfig cfg = make_config(4, f.class_embedding(0), f.null_embedding());
    cfg.record_diagnostics = true;
    cfg.rf_mask = leading_mask(4, 0.5);
    const Trajectory t = rf_sample(f, RealVec{0.1, 0.2}, cfg, [&](const Latent& x, TimePoint tp) {
        return f.posterior_score(x, tp, 0);
    });
    std::ostringstream out;
    write_trajectory_csv(out, t, {"artifact: test", "seed: 5"});
    std::istringstream in(out.str());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 2 + 1 + 5);
    CHECK(lines[0] == "# artifact: test");
    CHECK(lines[2] == "step,tau,x_0,x_1,drf_norm,drf_dot_score");
    CHECK(lines[3].rfind("0,0,0.1,0.2,", 0) == 0);
    CHECK(lines[5].substr(lines[5].size() - 2) == ",,");
    CHECK(lines[7].rfind("4,1,", 0) == 0);
}
