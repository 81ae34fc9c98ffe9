#include "rfs/experiment.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace rfs {

std::vector<GaussianClass> mixture_classes(const Config& cfg, const std::string& prefix) {
    const auto means = cfg.rows(prefix + ".means");
    const auto vars = cfg.reals(prefix + ".vars");
    const auto priors = cfg.reals(prefix + ".priors");
    if (vars.size() != means.size()) throw ConfigError(prefix + ".vars", "need one variance per class");
    if (priors.size() != means.size()) throw ConfigError(prefix + ".priors", "need one prior per class");
    std::vector<GaussianClass> classes;
    for (std::size_t k = 0; k < means.size(); ++k) classes.push_back({RealVec(means[k]), vars[k], priors[k]});
    return classes;
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig t;
    t.seed = cfg.unsigned_integer("train.seed");
    t.iterations = cfg.unsigned_integer("train.iterations");
    t.batch_size = cfg.unsigned_integer("train.batch_size");
    t.learning_rate = cfg.real("train.learning_rate");
    t.beta1 = cfg.real("train.beta1");
    t.beta2 = cfg.real("train.beta2");
    t.eps = cfg.real("train.eps");
    t.hidden.clear();
    for (double h : cfg.reals("train.hidden")) {
        if (h < 1.0 || h != static_cast<double>(static_cast<std::size_t>(h))) {
            throw ConfigError("train.hidden", "widths must be positive integers");
        }
        t.hidden.push_back(static_cast<std::size_t>(h));
    }
    t.p_uncond = cfg.real("train.p_uncond");
    t.log_every = cfg.unsigned_integer("train.log_every");
    t.classes = mixture_classes(cfg, "task");
    t.null_embedding = RealVec(t.classes.size());
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("train", e.what());
    }
    return t;
}

GuidanceParams guidance_params(const Config& cfg) {
    GuidanceParams g;
    g.s_high = cfg.real("guidance.s_high");
    g.beta_high = cfg.real("guidance.beta_high");
    g.s_low = cfg.real("guidance.s_low");
    g.beta_low = cfg.real("guidance.beta_low");
    g.gamma = cfg.real("guidance.gamma");
    g.alpha = static_cast<int>(cfg.integer("guidance.alpha"));
    g.w = cfg.real("guidance.w");
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("guidance", e.what());
    }
    return g;
}

RunSettings run_settings(const Config& cfg) {
    RunSettings s;
    s.steps = static_cast<int>(cfg.integer("sampler.steps"));
    if (s.steps < 1) throw ConfigError("sampler.steps", "must be >= 1");
    s.rf_fraction = cfg.real("sampler.rf_fraction");
    if (s.rf_fraction < 0.0 || s.rf_fraction > 1.0) throw ConfigError("sampler.rf_fraction", "must lie in [0, 1]");
    s.guidance = guidance_params(cfg);
    return s;
}

AlignmentTask mlp_task(const Config& cfg, std::shared_ptr<const MlpField> net) {
    const auto classes = mixture_classes(cfg, "task");
    AlignmentTask task;
    task.scorer = std::make_shared<GaussianMixtureField>(classes);
    for (std::size_t k = 0; k < classes.size(); ++k) task.class_embeddings.emplace_back(basis_vector(classes.size(), k));
    task.c_uncond = Embedding::zeros(classes.size());
    task.field = std::move(net);
    task.validate();
    return task;
}

AlignmentTask make_task(const Config& cfg) {
    const std::string kind = cfg.raw("field.kind");
    if (kind == "mlp") {
        const std::string path = cfg.raw("field.checkpoint");
        if (!std::filesystem::exists(path)) {
            throw ConfigError("field.checkpoint", "no checkpoint at '" + path + "' (run `rfs train` first)");
        }
        return mlp_task(cfg, std::make_shared<MlpField>(load_checkpoint(path)));
    }
    const auto classes = mixture_classes(cfg, "task");
    if (kind == "gm") return analytic_task(std::make_shared<GaussianMixtureField>(classes));
    auto soft = std::make_shared<GaussianMixtureField>(
        classes, EmbedMap::soft(RealMat::identity(classes.size()), cfg.real("task.temperature")));
    AlignmentTask task = analytic_task(soft);
    task.scorer = std::make_shared<GaussianMixtureField>(classes);
    return task;
}

TrainResult train_from_config(const Config& cfg) {
    const TrainConfig t = train_config(cfg);
    MlpField net(t.classes.front().mean.dim(), t.classes.size(), t.hidden, t.seed);
    Rng rng(t.seed, 1);
    return train(std::move(net), t, rng);
}

RunRecord record_run(const Config& cfg, const std::string& mode, const std::vector<std::uint64_t>& seeds,
                     const std::string& trajectory_dir) {
    if (mode != "standard" && mode != "rf") throw std::invalid_argument("mode must be standard or rf");
    const auto start = std::chrono::steady_clock::now();
    const AlignmentTask task = make_task(cfg);
    RunSettings settings = run_settings(cfg);
    if (mode == "standard") settings.rf_fraction = 0.0;
    const auto workers = static_cast<std::size_t>(std::max<long long>(1, cfg.integer("run.workers")));

    RunRecord record;
    record.mode = mode;
    record.config = cfg.entries();
    record.seeds = seeds;
    record.per_seed.resize(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t i) {
        Trajectory traj;
        const SeedResult r = run_seed(task, settings, seeds[i], &traj);
        SeedRecord& rec = record.per_seed[i];
        rec.seed = r.seed;
        rec.klass = r.klass;
        rec.final_j = r.final_j;
        rec.nfe = r.nfe;
        if (!trajectory_dir.empty()) {
            rec.trajectory_path = (std::filesystem::path(trajectory_dir) /
                                   ("trajectory_" + std::to_string(r.seed) + ".csv")).string();
            std::ofstream out(rec.trajectory_path);
            if (!out) throw std::runtime_error("cannot write " + rec.trajectory_path);
            write_trajectory_csv(out, traj, output_header(r.seed));
        }
    });
    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

Config config_from_record(const RunRecord& record) {
    Config cfg = Config::defaults();
    for (const auto& [k, v] : record.config) cfg.set(k, v);
    cfg.validate();
    return cfg;
}

bool replay_matches(const RunRecord& record, std::string* mismatch) {
    const Config cfg = config_from_record(record);
    const RunRecord again = record_run(cfg, record.mode, record.seeds);
    for (std::size_t i = 0; i < record.per_seed.size(); ++i) {
        const auto& a = record.per_seed[i];
        const auto& b = again.per_seed.at(i);
        if (a.final_j != b.final_j || a.nfe != b.nfe || a.klass != b.klass) {
            if (mismatch) {
                *mismatch = "seed " + std::to_string(a.seed) + ": recorded J " + format_real(a.final_j) +
                            ", replayed J " + format_real(b.final_j);
            }
            return false;
        }
    }
    return true;
}

FirstOrderSetup first_order_setup(const Config& cfg, const std::string& field_kind, std::uint64_t seed) {
    FirstOrderSetup setup;
    GuidanceParams g = guidance_params(cfg);
    int steps = static_cast<int>(cfg.integer("probe.steps"));
    Embedding c_uncond;
    if (field_kind == "linear") {
        Rng rng(seed, 11);
        const std::size_t dim = 2, cond = 2;
        std::vector<double> b(dim * cond);
        for (auto& v : b) v = rng.normal();
        auto field = std::make_shared<LinearEmbeddingField>(RealMat(dim, dim), rng.normal_vec(dim),
                                                            RealMat(dim, cond, std::move(b)));
        for (std::size_t k = 0; k < 2; ++k) setup.class_embeddings.emplace_back(rng.normal_vec(cond));
        c_uncond = Embedding::zeros(cond);
        const auto embeddings = setup.class_embeddings;
        setup.score = [field, embeddings, c_uncond](const Latent& x, TimePoint t, std::size_t k) {
            return field->embedding_derivative(x, t, c_uncond, embeddings.at(k).vec());
        };
        setup.field = field;
        g.s_high = cfg.real("probe.s_high");
        g.s_low = cfg.real("probe.s_low");
    } else if (field_kind == "gm" || field_kind == "gm-soft") {
        const auto classes = mixture_classes(cfg, "probe");
        auto field = field_kind == "gm"
                         ? std::make_shared<GaussianMixtureField>(classes)
                         : std::make_shared<GaussianMixtureField>(
                               classes, EmbedMap::soft(RealMat::identity(classes.size()),
                                                       cfg.real("probe.temperature")));
        for (std::size_t k = 0; k < classes.size(); ++k) setup.class_embeddings.push_back(field->class_embedding(k));
        c_uncond = field->null_embedding();
        auto scorer = std::make_shared<GaussianMixtureField>(classes);
        setup.score = [scorer](const Latent& x, TimePoint t, std::size_t k) { return scorer->posterior_score(x, t, k); };
        setup.field = field;
        g.s_high = cfg.real("probe.s_high");
        g.s_low = cfg.real("probe.s_low");
    } else if (field_kind == "mlp") {
        const AlignmentTask task = make_task(cfg);
        setup.field = task.field;
        setup.class_embeddings = task.class_embeddings;
        c_uncond = task.c_uncond;
        auto scorer = task.scorer;
        setup.score = [scorer](const Latent& x, TimePoint t, std::size_t k) { return scorer->posterior_score(x, t, k); };
        steps = static_cast<int>(cfg.integer("sampler.steps"));
    } else {
        throw std::invalid_argument("unknown field '" + field_kind + "' (linear|gm|gm-soft|mlp)");
    }
    setup.sampler.steps = steps;
    setup.sampler.guidance = g;
    setup.sampler.c_text = setup.class_embeddings.front();
    setup.sampler.c_uncond = c_uncond;
    setup.sampler.rf_mask = full_mask(steps);
    return setup;
}

}  // namespace rfs
