#include <cmath>

#include "doctest.h"
#include "rfs/embedding.hpp"

using namespace rfs;

namespace {

double max_diff(const Embedding& a, const Embedding& b) { return max_abs_diff(a.vec(), b.vec()); }

}  // namespace

TEST_CASE("mix") {
    const Embedding t{1, 0}, u{0, 1};
    CHECK(mix(t, u, 1.0) == t);
    CHECK(mix(t, u, 0.0) == u);
    CHECK(max_diff(mix(t, u, 0.7), Embedding{0.7, 0.3}) <= 1e-15);
    CHECK_THROWS_AS(mix(t, u, 1.2), std::invalid_argument);
    CHECK_THROWS_AS(mix(t, u, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(mix(t, Embedding{1, 2, 3}, 0.5), DimensionError);
}

TEST_CASE("weighted") {
    const Embedding t{1, 0}, u{0, 1};
    CHECK(weighted(t, u, 0.0, 0.4) == t);
    CHECK(weighted(t, u, 1.0, 1.0) == Embedding{2, 0});
    CHECK(weighted(t, u, -1.0, 0.0) == Embedding{1, -1});
}

TEST_CASE("weighted satisfies both algebraic forms") {
    Rng rng(17, 0);
    for (int i = 0; i < 500; ++i) {
        const Embedding t(rng.normal_vec(4)), u(rng.normal_vec(4));
        const double s = rng.uniform(-3.0, 10.0);
        const double beta = rng.uniform();
        const Embedding w = weighted(t, u, s, beta);
        const Embedding direct((1.0 + s * beta) * t.vec() + (s * (1.0 - beta)) * u.vec());
        CHECK(max_diff(w, direct) <= 1e-12);
        const Embedding sem = semantic_direction(t, u);
        const Embedding decomposed((1.0 + s) * u.vec() + semantic_magnitude(s, beta) * sem.vec());
        CHECK(max_diff(w, decomposed) <= 1e-12);
    }
}

TEST_CASE("semantic_direction") {
    const Embedding a{0.3, -2.0};
    CHECK(semantic_direction(a, a) == Embedding::zeros(2));
    CHECK(semantic_direction(Embedding{1, 0}, Embedding{0, 1}) == Embedding{1, -1});
    const Embedding t{2, 1}, u{1, -1};
    const Embedding scaled(axpy(3.0, semantic_direction(t, u).vec(), u.vec()));
    CHECK(std::abs(norm(semantic_direction(scaled, u).vec()) - 3.0 * norm(semantic_direction(t, u).vec())) <= 1e-12);
}

TEST_CASE("alignment_coefficient") {
    GuidanceParams p;
    p.s_high = 3.5, p.beta_high = 0.7, p.s_low = 0.0, p.beta_low = 0.3;
    CHECK(alignment_coefficient(p) == doctest::Approx(2.45).epsilon(1e-14));
    p.s_high = 9.0, p.s_low = -1.0;
    CHECK(alignment_coefficient(p) == doctest::Approx(6.6).epsilon(1e-14));
    p.s_low = 9.0, p.beta_low = 0.7;
    CHECK(alignment_coefficient(p) == 0.0);

    Rng rng(4, 0);
    for (int i = 0; i < 100; ++i) {
        GuidanceParams a;
        a.s_high = rng.uniform(-5, 5), a.beta_high = rng.uniform();
        a.s_low = rng.uniform(-5, 5), a.beta_low = rng.uniform();
        GuidanceParams b = a;
        std::swap(b.s_high, b.s_low);
        std::swap(b.beta_high, b.beta_low);
        CHECK(alignment_coefficient(b) == -alignment_coefficient(a));
    }
}

TEST_CASE("GuidanceParams validation names the bad knob") {
    GuidanceParams p;
    CHECK_NOTHROW(p.validate());
    p.beta_low = 1.5;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("beta_low"), std::invalid_argument);
    p = GuidanceParams{};
    p.alpha = 0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("alpha"), std::invalid_argument);
    p = GuidanceParams{};
    p.gamma = -0.1;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("gamma"), std::invalid_argument);
}

TEST_CASE("Embedding rejects non-finite values") {
    CHECK_THROWS_AS(Embedding({1.0, std::nan("")}), NumericError);
}
