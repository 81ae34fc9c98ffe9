#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rfs/fields.hpp"
#include "rfs/train.hpp"

namespace rfs::testing {

struct OracleEstimate {
    RealVec mean;
    RealVec stderr_mean;
};

// Nadaraya-Watson estimate of E[y - z | x_tau ~ x] from simulated paths,
// with y drawn from `classes` by prior (or from class k alone when k >= 0).
inline OracleEstimate kernel_regression(const std::vector<GaussianClass>& classes, int k, const RealVec& x, double tau,
                                 double bandwidth, std::size_t paths, Rng& rng) {
    const std::size_t d = x.dim();
    std::vector<double> sw(d, 0.0), swr(d, 0.0), swr2(d, 0.0);
    double w_sum = 0.0, w_sq = 0.0;
    for (std::size_t i = 0; i < paths; ++i) {
        std::size_t cls = static_cast<std::size_t>(k);
        if (k < 0) {
            const double u = rng.uniform();
            double acc = 0.0;
            cls = classes.size() - 1;
            for (std::size_t j = 0; j < classes.size(); ++j) {
                acc += classes[j].prior;
                if (u < acc) {
                    cls = j;
                    break;
                }
            }
        }
        double dist2 = 0.0;
        std::vector<double> target(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double z = rng.normal();
            const double y = classes[cls].mean[j] + std::sqrt(classes[cls].var) * rng.normal();
            const double xt = (1.0 - tau) * z + tau * y;
            dist2 += (xt - x[j]) * (xt - x[j]);
            target[j] = y - z;
        }
        const double w = std::exp(-0.5 * dist2 / (bandwidth * bandwidth));
        if (w < 1e-12) continue;
        w_sum += w;
        w_sq += w * w;
        for (std::size_t j = 0; j < d; ++j) {
            swr[j] += w * target[j];
            swr2[j] += w * target[j] * target[j];
        }
    }
    OracleEstimate est{RealVec(d), RealVec(d)};
    for (std::size_t j = 0; j < d; ++j) {
        const double m = swr[j] / w_sum;
        const double var = std::max(swr2[j] / w_sum - m * m, 0.0);
        est.mean[j] = m;
        // Standard error of a weighted mean with effective sample size w_sum^2 / w_sq.
        est.stderr_mean[j] = std::sqrt(var * w_sq) / w_sum;
    }
    return est;
}

struct VelocityCase {
    std::vector<GaussianClass> classes;
    /// Class index, or -1 for the unconditional velocity.
    int klass;
    RealVec x;
    double tau;
};

/// 22 probes: a symmetric 1-D pair across tau, an asymmetric pair, and a
/// nearly degenerate class close to the data endpoint.
inline std::vector<VelocityCase> velocity_oracle_cases() {
    std::vector<VelocityCase> cases;
    const std::vector<GaussianClass> mix = {{RealVec{1.0}, 0.3, 0.5}, {RealVec{-1.0}, 0.3, 0.5}};
    for (int i = 0; i < 8; ++i) {
        const double tau = 0.1 + 0.1 * i;
        cases.push_back({mix, i % 2, RealVec{0.6 - 0.2 * i}, tau});
        cases.push_back({mix, -1, RealVec{-0.5 + 0.15 * i}, tau});
    }
    const std::vector<GaussianClass> asym = {{RealVec{2.0}, 0.5, 0.3}, {RealVec{-1.0}, 0.2, 0.7}};
    for (int i = 0; i < 4; ++i) cases.push_back({asym, -1, RealVec{0.2 * i - 0.3}, 0.3 + 0.15 * i});
    cases.push_back({{{RealVec{3.0}, 0.01, 1.0}}, 0, RealVec{2.6}, 0.9});
    cases.push_back({{{RealVec{3.0}, 0.01, 1.0}}, 0, RealVec{2.8}, 0.9});
    return cases;
}

inline double& mlp_param(MlpField& f, std::size_t layer, bool bias, std::size_t index) {
    auto& l = f.layers()[layer];
    return bias ? l.biases[index] : l.weights.values()[index];
}

/// Max over parameters of |backprop - central difference| / max(|.|, 1e-8).
inline double max_relative_gradient_error(MlpField& f, const std::vector<FlowSample>& batch,
                                          std::size_t* checked = nullptr) {
    const MlpGradients g = backprop(f, batch);
    const double h = 1e-6;
    double worst = 0.0;
    std::size_t count_all = 0;
    for (std::size_t l = 0; l < f.layers().size(); ++l) {
        for (bool bias : {false, true}) {
            const std::size_t count = bias ? f.layers()[l].biases.dim() : f.layers()[l].weights.values().size();
            for (std::size_t i = 0; i < count; ++i) {
                double& p = mlp_param(f, l, bias, i);
                const double saved = p;
                p = saved + h;
                const double up = cfm_loss(f, batch);
                p = saved - h;
                const double down = cfm_loss(f, batch);
                p = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = bias ? g.layers[l].biases[i] : g.layers[l].weights.values()[i];
                const double rel =
                    std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
                worst = std::max(worst, rel);
                ++count_all;
            }
        }
    }
    if (checked) *checked = count_all;
    return worst;
}

}  // namespace rfs::testing
