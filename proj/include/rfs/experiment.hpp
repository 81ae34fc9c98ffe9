#pragma once

#include <memory>
#include <string>

#include "rfs/config.hpp"
#include "rfs/io.hpp"
#include "rfs/theory.hpp"
#include "rfs/train.hpp"

namespace rfs {

/// Classes from `<prefix>.means`, `<prefix>.vars`, `<prefix>.priors`.
std::vector<GaussianClass> mixture_classes(const Config& cfg, const std::string& prefix);

TrainConfig train_config(const Config& cfg);
GuidanceParams guidance_params(const Config& cfg);
RunSettings run_settings(const Config& cfg);

/// Builds the task named by field.kind. For "mlp" the network is read from
/// field.checkpoint; class k is conditioned on e_k and the null embedding
/// is the zero vector, matching how the network was trained.
AlignmentTask make_task(const Config& cfg);
AlignmentTask mlp_task(const Config& cfg, std::shared_ptr<const MlpField> net);

/// Trains a fresh network as the config describes.
TrainResult train_from_config(const Config& cfg);

/// Samples every seed and records the outcome. `mode` is "standard" or "rf".
RunRecord record_run(const Config& cfg, const std::string& mode, const std::vector<std::uint64_t>& seeds,
                     const std::string& trajectory_dir = "");

/// Re-runs a record from its config snapshot; true when every metric matches exactly.
bool replay_matches(const RunRecord& record, std::string* mismatch = nullptr);

Config config_from_record(const RunRecord& record);

/// Field, score and sampler settings for the first-order checks.
///
/// "gm" and "gm-soft" use the probe.* mixture; "mlp" uses the trained task
/// network scored by the task mixture; "linear" draws a random field
/// v = B c + bias (constant in x and tau), scored by the direction its
/// velocity moves under u, which is B u.
struct FirstOrderSetup {
    std::shared_ptr<const VectorField> field;
    std::vector<Embedding> class_embeddings;
    ClassScoreFn score;
    SamplerConfig sampler;
};

FirstOrderSetup first_order_setup(const Config& cfg, const std::string& field_kind, std::uint64_t seed);

}  // namespace rfs
