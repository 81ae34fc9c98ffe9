#include <cmath>
#include <limits>

#include "doctest.h"
#include "rfs/numerics.hpp"

using namespace rfs;

TEST_CASE("RealVec rejects non-finite entries and mismatched dims") {
    CHECK_THROWS_AS(RealVec({1.0, std::nan("")}), NumericError);
    CHECK_THROWS_AS(RealVec(2, std::numeric_limits<double>::infinity()), NumericError);
    CHECK_THROWS_AS(RealVec({1.0}) + RealVec({1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(dot(RealVec{1.0}, RealVec{1.0, 2.0}), DimensionError);
    CHECK(RealVec(3).dim() == 3);
}

TEST_CASE("axpy") {
    CHECK(axpy(0.0, RealVec{3, 4}, RealVec{1, 2}) == RealVec{1, 2});
    CHECK(axpy(1.0, RealVec{1, 1}, RealVec{0, 0}) == RealVec{1, 1});
    CHECK(axpy(0.5, RealVec{2, -4}, RealVec{1, 1}) == RealVec{2, -1});
    CHECK_THROWS_AS(axpy(1e308, RealVec{1e308}, RealVec{0}), NumericError);
}

TEST_CASE("dot") {
    CHECK(dot(RealVec{1, 0}, RealVec{0, 1}) == 0.0);
    CHECK(dot(RealVec{1, 2}, RealVec{1, 2}) == 5.0);
    Rng rng(3, 0);
    for (int i = 0; i < 100; ++i) {
        const RealVec x = rng.normal_vec(5);
        CHECK(dot(x, x) >= 0.0);
    }
}

TEST_CASE("central_diff_grad") {
    const RealVec x{0.3, -1.7, 2.2};
    const RealVec g1 = central_diff_grad([](const RealVec& v) { return v[0]; }, x, 1e-5);
    CHECK(std::abs(g1[0] - 1.0) <= 1e-9);
    CHECK(std::abs(g1[1]) <= 1e-9);
    CHECK(std::abs(g1[2]) <= 1e-9);

    const RealVec g2 = central_diff_grad([](const RealVec& v) { return 0.5 * dot(v, v); }, RealVec{1, 2});
    CHECK(std::abs(g2[0] - 1.0) <= 1e-8);
    CHECK(std::abs(g2[1] - 2.0) <= 1e-8);

    const RealVec g3 = central_diff_grad([](const RealVec&) { return 4.0; }, x);
    CHECK(g3 == RealVec(3));
}

TEST_CASE("central_diff_grad matches analytic gradients of quadratics") {
    Rng rng(11, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const RealVec c = rng.normal_vec(3);
        const RealVec q = rng.normal_vec(3);
        const double k = rng.normal();
        auto f = [&](const RealVec& v) {
            double acc = k;
            for (std::size_t i = 0; i < 3; ++i) acc += c[i] * v[i] + q[i] * v[i] * v[i] + 0.5 * v[0] * v[(i + 1) % 3];
            return acc;
        };
        const RealVec x = rng.normal_vec(3);
        RealVec exact(3);
        for (std::size_t i = 0; i < 3; ++i) exact[i] = c[i] + 2.0 * q[i] * x[i];
        exact[0] += 0.5 * (x[1] + x[2] + 2.0 * x[0]);
        exact[1] += 0.5 * x[0];
        exact[2] += 0.5 * x[0];
        const RealVec g = central_diff_grad(f, x, 1e-5);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(std::abs(g[i] - exact[i]) <= 1e-7 * std::max(1.0, std::abs(exact[i])));
        }
    }
}

TEST_CASE("directional_hessian") {
    const auto neg_half_norm = [](const RealVec& v) { return -0.5 * dot(v, v); };
    CHECK(std::abs(directional_hessian(neg_half_norm, RealVec{0.4, -1.0}, RealVec{1, 0}) + 1.0) <= 1e-6);
    const auto linear = [](const RealVec& v) { return 3.0 * v[0] - 2.0 * v[1] + 1.0; };
    CHECK(std::abs(directional_hessian(linear, RealVec{0.4, -1.0}, RealVec{1, 0})) <= 1e-6);
    const auto f = [](const RealVec& v) { return -0.5 * (2.0 * v[0] * v[0]); };
    CHECK(std::abs(directional_hessian(f, RealVec{0.7, 0.1}, RealVec{1, 0}) + 2.0) <= 1e-6);

    const auto quad = [](const RealVec& v) { return 1.5 * v[0] * v[0] - v[0] * v[1] + 0.25 * v[1] * v[1]; };
    const RealVec x{0.2, 0.9}, d{0.6, -0.8};
    CHECK(std::abs(directional_hessian(quad, x, d, 1e-2) - directional_hessian(quad, x, d, 1e-3)) <= 1e-6);
}

TEST_CASE("finite differences name the probe point on non-finite values") {
    const auto bad = [](const RealVec& v) { return v[0] > 0.0 ? std::log(-1.0) : 0.0; };
    try {
        central_diff_grad(bad, RealVec{0.0, 1.0});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("probe point") != std::string::npos);
    }
    CHECK_THROWS_AS(directional_hessian(bad, RealVec{0.0, 1.0}, RealVec{1, 0}), NumericError);
    CHECK_THROWS_AS(central_diff_grad(bad, RealVec{-1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(directional_hessian(bad, RealVec{-1.0}, RealVec{0.0}), std::invalid_argument);
}

TEST_CASE("PCG64 reproduces the reference stream") {
    // pcg64 srandom(42, 54) reference outputs.
    Rng rng(42, 54);
    const std::uint64_t expected[] = {0x86b1da1d72062b68ULL, 0x1304aa46c9853d39ULL, 0xa3670e9e0dd50358ULL,
                                      0xf9090e529a7dae00ULL, 0xc85b9fd837996f2cULL, 0x606121f8e3919196ULL};
    for (auto e : expected) CHECK(rng.next_u64() == e);
}

TEST_CASE("identical seed and stream give bit-identical normals") {
    Rng a(2024, 7), b(2024, 7), c(2024, 8);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        differs = differs || x != c.normal();
    }
    CHECK(differs);
}

TEST_CASE("Box-Muller normals have unit moments") {
    Rng rng(5, 0);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform and below stay in range") {
    Rng rng(9, 1);
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 30000; ++i) {
        const double u = rng.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        ++counts[rng.below(3)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
    CHECK_THROWS(rng.below(0));
}

TEST_CASE("matvec and its transpose") {
    const RealMat m(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(matvec(m, RealVec{1, 0, -1}) == RealVec{-2, -2});
    CHECK(matvec_transposed(m, RealVec{1, 1}) == RealVec{5, 7, 9});
    CHECK_THROWS_AS(matvec(m, RealVec{1, 2}), DimensionError);
    CHECK_THROWS_AS(RealMat(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("format_real round-trips") {
    for (double v : {0.1, -1e-300, 12345.678, 1.0 / 3.0}) CHECK(std::stod(format_real(v)) == v);
    CHECK(format_real(0.5) == "0.5");
}
