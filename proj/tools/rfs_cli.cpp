#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rfs/experiment.hpp"

namespace fs = std::filesystem;
using namespace rfs;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "config file (key = value lines)");
    sub->add_option("--set", c.overrides, "override one key, e.g. --set guidance.gamma=0.25");
}

Config resolve(const Common& c) {
    Config cfg = c.config_path.empty() ? Config::defaults() : Config::load(c.config_path);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(kv, "--set expects key=value");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.apply_env();
    cfg.validate();
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::vector<double> parse_values(const std::string& text) { return parse_reals(text, "--values"); }

void print_summary(const Summary& s) {
    for (const auto& [k, v] : s) std::cout << k << ": " << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reflective flow sampling experiments"};
    app.require_subcommand(1);

    Common common;

    auto* gen = app.add_subcommand("gen-config", "write the default config with provenance comments");
    std::string gen_out;
    gen->add_option("--out", gen_out, "output path (default stdout)");

    auto* trn = app.add_subcommand("train", "train the MLP velocity field");
    add_common(trn, common);
    std::string train_out = "model.rfck", loss_out;
    trn->add_option("--out", train_out, "checkpoint path");
    trn->add_option("--loss-csv", loss_out, "loss curve CSV");

    auto* smp = app.add_subcommand("sample", "sample seeds with standard or reflective sampling");
    add_common(smp, common);
    std::string mode;
    std::size_t n_seeds = 1;
    std::optional<std::uint64_t> first_seed;
    std::optional<double> gamma;
    std::string sample_out = "samples";
    smp->add_option("mode", mode, "standard | rf")->required()->check(CLI::IsMember({"standard", "rf"}));
    smp->add_option("--seeds", n_seeds, "number of seeds");
    smp->add_option("--first-seed", first_seed, "first seed (default run.seed)");
    smp->add_option("--gamma", gamma, "merge ratio override");
    smp->add_option("--out", sample_out, "output directory");

    auto* rep = app.add_subcommand("replay", "re-run a recorded sampling run and compare metrics");
    std::string record_path;
    rep->add_option("record", record_path, "record.json")->required();

    auto* vfo = app.add_subcommand("verify-first-order", "ascent and remainder checks of the reflective step");
    add_common(vfo, common);
    std::string fo_field = "gm", fo_out, fo_check = "ascent";
    std::size_t probes = 500;
    std::optional<std::uint64_t> fo_seed;
    double shrink = 1.0;
    vfo->add_option("--field", fo_field, "linear | gm | gm-soft | mlp")
        ->check(CLI::IsMember({"linear", "gm", "gm-soft", "mlp"}));
    vfo->add_option("--check", fo_check, "ascent | remainder")->check(CLI::IsMember({"ascent", "remainder"}));
    vfo->add_option("--probes", probes, "probe count");
    vfo->add_option("--seed", fo_seed, "probe seed (default run.seed)");
    vfo->add_option("--shrink", shrink, "divide u by this factor");
    vfo->add_option("--out", fo_out, "report path (default first_order_report.txt)");

    auto* vso = app.add_subcommand("verify-second-order", "optimal merge ratio along a direction");
    add_common(vso, common);
    std::string objective = "quadratic", so_out;
    std::optional<std::uint64_t> so_seed;
    double gamma_max = 4.0;
    std::size_t points = 17;
    vso->add_option("--objective", objective, "quadratic | mixture")
        ->check(CLI::IsMember({"quadratic", "mixture"}));
    vso->add_option("--seed", so_seed, "probe seed (default run.seed)");
    vso->add_option("--gamma-max", gamma_max, "largest gamma on the grid");
    vso->add_option("--points", points, "grid size");
    vso->add_option("--out", so_out, "report path (default second_order_report.txt)");

    auto* swp = app.add_subcommand("sweep", "paired-seed sweep over one axis");
    add_common(swp, common);
    std::string axis, values_text, sweep_out = "sweep.csv";
    std::size_t sweep_seeds = 30;
    std::optional<std::uint64_t> sweep_first;
    swp->add_option("--axis", axis, "gamma | gap | rf-fraction | steps")
        ->required()
        ->check(CLI::IsMember({"gamma", "gap", "rf-fraction", "steps"}));
    swp->add_option("--values", values_text, "comma-separated axis values")->required();
    swp->add_option("--seeds", sweep_seeds, "seeds per value");
    swp->add_option("--first-seed", sweep_first, "first seed (default run.seed)");
    swp->add_option("--out", sweep_out, "table CSV");

    auto* dmp = app.add_subcommand("dump-trajectory", "one trajectory with per-step reflective diagnostics");
    add_common(dmp, common);
    std::string dump_mode = "rf", dump_out = "trajectory.csv";
    std::optional<std::uint64_t> dump_seed;
    dmp->add_option("--mode", dump_mode, "standard | rf")->check(CLI::IsMember({"standard", "rf"}));
    dmp->add_option("--seed", dump_seed, "seed (default run.seed)");
    dmp->add_option("--out", dump_out, "CSV path");

    auto* plt = app.add_subcommand("plot", "render CSV columns as an SVG chart");
    std::string plot_in, plot_x, plot_y, plot_out = "plot.svg", plot_mode = "line", title;
    plt->add_option("--in", plot_in, "input CSV")->required();
    plt->add_option("--x", plot_x, "x column")->required();
    plt->add_option("--y", plot_y, "y column(s), comma-separated")->required();
    plt->add_option("--out", plot_out, "SVG path");
    plt->add_option("--mode", plot_mode, "line | scatter")->check(CLI::IsMember({"line", "scatter"}));
    plt->add_option("--title", title, "chart title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (*gen) {
            const std::string text = "# " + std::string(kArtifactVersion) + "\n# provenance: [published] method "
                                     "defaults, [pilot-tuned] chosen by pilot runs, [artifact] plumbing\n\n" +
                                     Config::defaults().to_text(true);
            if (gen_out.empty()) {
                std::cout << text;
            } else {
                open_out(gen_out) << text;
            }
            return 0;
        }

        if (*rep) {
            std::ifstream in(record_path);
            if (!in) throw std::runtime_error("cannot open " + record_path);
            std::stringstream buf;
            buf << in.rdbuf();
            std::string mismatch;
            if (replay_matches(RunRecord::from_json(buf.str()), &mismatch)) {
                std::cout << "replay: identical\n";
                return 0;
            }
            std::cout << "replay: mismatch (" << mismatch << ")\n";
            return 1;
        }

        if (*plt) {
            std::ifstream in(plot_in);
            if (!in) throw std::runtime_error("cannot open " + plot_in);
            const CsvTable table = read_csv(in);
            std::vector<PlotSeries> series;
            std::stringstream ys(plot_y);
            for (std::string col; std::getline(ys, col, ',');) series.push_back({col, table.points(plot_x, col)});
            auto out = open_out(plot_out);
            write_svg_plot(out, series, title.empty() ? plot_in : title, plot_x, plot_y,
                           plot_mode == "line" ? PlotMode::Line : PlotMode::Scatter,
                           {std::string("artifact: ") + kArtifactVersion, "source: " + plot_in});
            std::cout << "wrote " << plot_out << '\n';
            return 0;
        }

        const Config cfg = resolve(common);
        const std::uint64_t seed = cfg.unsigned_integer("run.seed");

        if (*trn) {
            const TrainResult result = train_from_config(cfg);
            save_checkpoint(train_out, result.field);
            if (!loss_out.empty()) {
                auto out = open_out(loss_out);
                write_loss_csv(out, result.loss_curve, cfg.unsigned_integer("train.seed"));
            }
            std::cout << "initial_loss: " << format_real(result.loss_curve.front().loss) << '\n'
                      << "final_loss: " << format_real(result.loss_curve.back().loss) << '\n'
                      << "checkpoint: " << train_out << '\n';
            return 0;
        }

        if (*smp) {
            Config run_cfg = cfg;
            if (gamma) run_cfg.set("guidance.gamma", format_real(*gamma));
            fs::create_directories(sample_out);
            const auto seeds = seed_range(first_seed.value_or(seed), n_seeds);
            const RunRecord record = record_run(run_cfg, mode, seeds, sample_out);
            open_out((fs::path(sample_out) / "record.json").string()) << record.to_json();
            double mean = 0.0;
            for (const auto& r : record.per_seed) mean += r.final_j / static_cast<double>(record.per_seed.size());
            std::cout << "mode: " << mode << "\nseeds: " << seeds.size() << "\nmean_final_j: " << format_real(mean)
                      << "\nnfe_per_sample: " << record.per_seed.front().nfe << "\nrecord: "
                      << (fs::path(sample_out) / "record.json").string() << '\n';
            return 0;
        }

        if (*vfo) {
            const std::uint64_t s = fo_seed.value_or(seed);
            const FirstOrderSetup setup = first_order_setup(cfg, fo_field, s);
            Rng rng(s, 21);
            Summary summary{{"field", fo_field}, {"check", fo_check}};
            if (fo_check == "ascent") {
                ProbeOptions opts;
                opts.probes = probes;
                opts.u_scale = 1.0 / shrink;
                const auto report =
                    check_first_order(*setup.field, setup.sampler, setup.class_embeddings, setup.score, opts, rng);
                for (auto& kv : summarize(report)) summary.push_back(kv);
            } else {
                const auto report = check_remainder_scaling(*setup.field, setup.sampler, setup.class_embeddings,
                                                            {1.0, 0.5, 0.25, 0.125}, probes, rng);
                for (auto& kv : summarize(report)) summary.push_back(kv);
            }
            const std::string path = fo_out.empty() ? "first_order_report.txt" : fo_out;
            auto out = open_out(path);
            write_summary(out, summary, s);
            print_summary(summary);
            return 0;
        }

        if (*vso) {
            const std::uint64_t s = so_seed.value_or(seed);
            std::vector<double> grid;
            for (std::size_t i = 0; i < points; ++i) {
                grid.push_back(gamma_max * static_cast<double>(i) / static_cast<double>(points - 1));
            }
            SecondOrderReport report;
            if (objective == "quadratic") {
                const ScalarFn j = [](const RealVec& x) { return -0.5 * dot(x, x); };
                report = check_second_order(j, RealVec{1.0}, RealVec{-0.5}, grid);
            } else {
                const FirstOrderSetup setup = first_order_setup(cfg, "gm", s);
                const auto& gm = dynamic_cast<const GaussianMixtureField&>(*setup.field);
                Rng rng(s, 31);
                const std::size_t k = rng.below(setup.class_embeddings.size());
                SamplerConfig sc = setup.sampler;
                sc.c_text = setup.class_embeddings[k];
                const int step = sc.steps / 2;
                Latent x = rng.normal_vec(gm.state_dim());
                for (int i = 0; i < step; ++i) x = euler_step(gm, x, TimePoint(tau_at(i, sc.steps)), sc.c_text, sc.dt());
                const RealVec d = reflective_displacement(gm, x, step, sc);
                const TimePoint t(tau_at(step, sc.steps));
                const ScalarFn j = [&](const RealVec& y) { return gm.log_posterior(y, t, k); };
                report = check_second_order(j, x, d, grid);
            }
            Summary summary{{"objective", objective}};
            for (auto& kv : summarize(report)) summary.push_back(kv);
            const std::string path = so_out.empty() ? "second_order_report.txt" : so_out;
            auto out = open_out(path);
            write_summary(out, summary, s);
            print_summary(summary);
            return 0;
        }

        if (*swp) {
            const AlignmentTask task = make_task(cfg);
            const auto workers = static_cast<std::size_t>(std::max<long long>(1, cfg.integer("run.workers")));
            const std::uint64_t first = sweep_first.value_or(seed);
            const SweepTable table = sweep(task, run_settings(cfg), parse_sweep_axis(axis), parse_values(values_text),
                                           seed_range(first, sweep_seeds), workers);
            auto out = open_out(sweep_out);
            write_sweep_csv(out, table, first);
            write_sweep_csv(std::cout, table, first);
            return 0;
        }

        if (*dmp) {
            const AlignmentTask task = make_task(cfg);
            RunSettings settings = run_settings(cfg);
            if (dump_mode == "standard") settings.rf_fraction = 0.0;
            const std::uint64_t s = dump_seed.value_or(seed);
            const std::size_t k = task.class_of(s);
            SamplerConfig sc = settings.sampler_config(task, k);
            sc.record_diagnostics = true;
            const auto scorer = task.scorer;
            const Trajectory traj = rf_sample(*task.field, task.noise_of(s), sc, [&](const Latent& x, TimePoint t) {
                return scorer->posterior_score(x, t, k);
            });
            auto out = open_out(dump_out);
            auto header = output_header(s);
            header.push_back("mode: " + dump_mode + ", class: " + std::to_string(k) +
                             ", final_j: " + format_real(scorer->log_posterior(traj.final_latent(), TimePoint(1.0), k)));
            write_trajectory_csv(out, traj, header);
            std::cout << "wrote " << dump_out << " (" << traj.nfe << " field evaluations)\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
