#include "marginlab/cli.hpp"

#include <CLI11.hpp>
#include <functional>
#include <ostream>
#include <sstream>

#include "marginlab/analysis.hpp"
#include "marginlab/config.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/io.hpp"
#include "marginlab/numfmt.hpp"

namespace marginlab {

namespace fs = std::filesystem;

namespace {

/// Raised after outputs are written when a run hit the exponent cap or a solver gave up.
class TaintFailure : public Error {
public:
    using Error::Error;
};

struct Context {
    std::ostream& err;
    bool quiet = false;
    Json manifest = Json::object();

    void note(const std::string& msg) const {
        if (!quiet) err << msg << '\n';
    }
    void output(const std::string& name, const fs::path& path) { manifest[name] = path.string(); }
};

/// Runs an analysis step; a refusal is recorded in the report instead of aborting the command.
Json attempt(const std::function<Json()>& fn) {
    try {
        return fn();
    } catch (const AnalysisRefused& e) {
        return Json{{"refused", e.what()}};
    }
}

Json report_header(const std::string& command) {
    return Json{{"schema_version", kReportSchemaVersion}, {"command", command}};
}

MarginResult global_target(const Dataset& ds, ModelKind kind) {
    try {
        return max_margin(target_points(ds, kind));
    } catch (const ConvergenceError& e) {
        return e.best();
    }
}

Series squared(const Series& s) {
    Series out;
    for (const auto& p : s) out.push_back({p.t, p.value * p.value});
    return out;
}

Json gd_analysis(const Trajectory& traj, const Dataset& ds, const AnalysisSpec& spec, std::optional<Vec>& target) {
    Json j = Json::object();
    if (!spec.regime) return j;
    j["regime"] = attempt([&] {
        const RegimeReport rep = classify_trajectory(traj, ds, static_cast<std::size_t>(spec.flip_threshold));
        target = rep.target_direction;
        return to_json(rep);
    });
    if (spec.rates && target) {
        j["direction_rate"] = attempt([&] {
            return to_json(fit_rate(direction_error_series(traj, *target, false), RateModel::LogLogOverLog));
        });
    }
    return j;
}

Json sgd_member_analysis(const Trajectory& traj, const Dataset& ds, const AnalysisSpec& spec, const Vec& target) {
    Json j = Json::object();
    j["stabilization_step"] = traj.stabilization_step();
    j["final_region"] = traj.final_region().str();
    j["region_changes"] = traj.region_changes.size() - 1;
    if (spec.regime)
        j["regime"] = attempt([&] {
            return to_json(classify_trajectory(traj, ds, static_cast<std::size_t>(spec.flip_threshold)));
        });
    if (spec.variance) j["variance"] = attempt([&] { return to_json(verify_variance_bound(traj, ds)); });
    if (spec.rates) {
        j["norm_growth"] = attempt([&] { return to_json(norm_growth(traj)); });
        j["direction_rate"] = attempt([&] {
            return to_json(fit_rate(squared(direction_error_series(traj, target, true)), RateModel::InvLog));
        });
    }
    return j;
}

Json ensemble_analysis(const Ensemble& ens, const Dataset& ds, const AnalysisSpec& spec, const Vec& target,
                       double alpha) {
    Json j = Json::object();
    if (spec.variance) j["variance"] = attempt([&] { return to_json(verify_variance_bound(ens, ds)); });
    if (spec.rates) {
        j["norm_growth"] = attempt([&] { return to_json(norm_growth(ens)); });
        j["loss_rate"] = attempt([&] {
            return to_json(fit_rate(excess_loss_series(ens, ds), RateModel::PolyLog, alpha));
        });
        j["direction_rate"] = attempt([&] {
            return to_json(fit_rate(squared(direction_error_series(ens, target)), RateModel::InvLog));
        });
    }
    return j;
}

void finish_report(Context& ctx, const fs::path& path, const Json& report, const std::string& name = "report") {
    write_file_atomic(path, report.dump(2) + "\n");
    ctx.output(name, path);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void train(Context& ctx, const ExperimentConfig& cfg, const fs::path& config_dir) {
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    const Dataset ds = build_dataset(cfg.dataset, config_dir);
    write_file_atomic(dir / "config.json", serialize_config(cfg));
    ctx.output("config", dir / "config.json");
    save_csv(ds, dir / "dataset.csv");
    ctx.output("dataset", dir / "dataset.csv");

    const RecordPolicy policy = build_policy(cfg.stride);
    Json report = report_header("train");
    report["algorithm"] = cfg.algorithm;
    bool tainted = false;

    if (cfg.algorithm == "gd" || cfg.algorithm == "sgd") {
        const ModelKind kind = build_model(cfg.model);
        const Vec w0 = build_initial_w(cfg.init, ds);
        const MarginResult global = global_target(ds, kind);
        report["global_target"] = to_json(global);
        if (cfg.algorithm == "gd") {
            const double eta = cfg.schedule.eta.value_or(default_gd_stepsize(ds));
            ctx.note("gd: eta " + format_double(eta) + ", " + std::to_string(cfg.steps) + " steps");
            const Trajectory traj = run_gd(ds, kind, w0, StepSchedule::constant(eta), cfg.steps, policy);
            std::optional<Vec> target;
            report["analysis"] = gd_analysis(traj, ds, cfg.analyses, target);
            const TrajectoryFiles files = save_trajectory(traj, dir / "trajectory", global.direction, target);
            ctx.output("trajectory", files.csv);
            report["tainted"] = traj.tainted;
            report["zero_gradient_stop"] = traj.zero_gradient_stop;
            tainted = traj.tainted;
        } else {
            const StepSchedule schedule = StepSchedule::polynomial(cfg.schedule.alpha);
            Json members = Json::array();
            std::vector<Trajectory> runs;
            if (cfg.seeds.size() >= 2) {
                ctx.note("sgd ensemble: " + std::to_string(cfg.seeds.size()) + " seeds, " +
                         std::to_string(cfg.steps) + " steps");
                Ensemble ens = run_sgd_ensemble(ds, kind, w0, schedule, cfg.steps, cfg.seeds, policy);
                report["ensemble"] = ensemble_analysis(ens, ds, cfg.analyses, global.direction, cfg.schedule.alpha);
                write_file_atomic(dir / "ensemble.json", to_json(ens).dump() + "\n");
                ctx.output("ensemble", dir / "ensemble.json");
                tainted = ens.tainted;
                runs = std::move(ens.members);
            } else {
                runs.push_back(run_sgd(ds, kind, w0, schedule, cfg.steps, cfg.seeds.front(), policy));
            }
            for (const auto& traj : runs) {
                const std::string stem = "trajectory_seed" + std::to_string(traj.rng_seed);
                save_trajectory(traj, dir / stem, global.direction, global.direction);
                ctx.output(stem, TrajectoryFiles::for_stem(dir / stem).csv);
                Json m = sgd_member_analysis(traj, ds, cfg.analyses, global.direction);
                m["seed"] = traj.rng_seed;
                m["tainted"] = traj.tainted;
                members.push_back(std::move(m));
                tainted = tainted || traj.tainted;
            }
            report["members"] = std::move(members);
        }
    } else {
        Vec v = Eigen::Map<const Vec>(cfg.net.v.data(), static_cast<Eigen::Index>(cfg.net.v.size()));
        const MultiNeuronNet net0 = make_cone_net(ds, v, cfg.net.scale, cfg.net.seed);
        std::vector<NetTrajectory> runs;
        if (cfg.algorithm == "gd-net") {
            const double eta = cfg.schedule.eta.value_or(default_gd_stepsize(ds));
            runs.push_back(run_gd_net(ds, net0, eta, cfg.steps, policy));
        } else {
            for (auto seed : cfg.seeds)
                runs.push_back(run_sgd_net(ds, net0, StepSchedule::polynomial(cfg.schedule.alpha), cfg.steps, seed,
                                           policy));
        }
        Json members = Json::array();
        std::optional<PartitionReport> first;
        for (const auto& traj : runs) {
            const std::string stem = cfg.algorithm == "gd-net" ? "net_trajectory"
                                                               : "net_trajectory_seed" + std::to_string(traj.rng_seed);
            write_file_atomic(dir / (stem + ".csv"), net_trajectory_csv(traj));
            ctx.output(stem, dir / (stem + ".csv"));
            Json m{{"seed", traj.rng_seed}, {"tainted", traj.tainted}, {"pattern_changes", traj.pattern_changes.size()}};
            if (cfg.analyses.partitions) {
                m["partitions"] = attempt([&] {
                    PartitionReport rep = verify_partition_claims(traj, ds, cfg.analyses.reference_step);
                    if (!first) first = rep;
                    return to_json(rep);
                });
            }
            members.push_back(std::move(m));
            tainted = tainted || traj.tainted;
        }
        report["members"] = std::move(members);
        if (first && runs.size() >= 2) {
            Json errs = Json::array();
            for (const auto& s : ensemble_partition_errors(runs, *first)) errs.push_back(to_json(s));
            report["ensemble_partition_errors"] = std::move(errs);
        }
    }
    report["tainted"] = tainted;
    finish_report(ctx, dir / "report.json", report);
    if (tainted) throw TaintFailure("run hit the exponent cap; rate analyses are invalid");
}

// ---------------------------------------------------------------------------
// repro scenarios
// ---------------------------------------------------------------------------

struct ReproOptions {
    std::uint64_t seed = 1;
    std::optional<long> steps;
    int seed_count = 20;
};

void repro_gd_example(Context& ctx, const fs::path& dir, const Dataset& ds, const Vec& w0, long steps,
                      const std::string& name) {
    fs::create_directories(dir);
    save_csv(ds, dir / "dataset.csv");
    ctx.output("dataset", dir / "dataset.csv");
    ctx.note(name + ": gd, eta 0.1, " + std::to_string(steps) + " steps");
    const Trajectory traj = run_gd(ds, ModelKind::relu(), w0, StepSchedule::constant(0.1), steps);
    const MarginResult global = global_target(ds, ModelKind::relu());
    Json report = report_header("repro " + name);
    report["initial_w"] = to_json(w0);
    report["global_target"] = to_json(global);
    std::optional<Vec> target;
    report["analysis"] = gd_analysis(traj, ds, AnalysisSpec{}, target);
    report["local_minima"] = [&] {
        const LocalMinimaReport lm = enumerate_local_minima(ds, static_cast<int>(ds.n_pos()));
        Json list = Json::array();
        for (const auto& m : lm.local) list.push_back({{"subset", m.subset}, {"margin", to_json(m.margin)}});
        return Json{{"global_separable", lm.global_separable}, {"local", list}};
    }();
    if (name == "example1") {
        bool x2_negative = true;
        for (const auto& r : traj.records) x2_negative = x2_negative && r.w.dot(ds.x(1)) < 0.0;
        report["x2_always_negative"] = x2_negative;
    }
    const TrajectoryFiles files = save_trajectory(traj, dir / "trajectory", global.direction, target);
    ctx.output("trajectory", files.csv);
    report["tainted"] = traj.tainted;
    finish_report(ctx, dir / "report.json", report);
    if (traj.tainted) throw TaintFailure(name + ": run hit the exponent cap");
}

void repro_combes(Context& ctx, const fs::path& dir, const ReproOptions& opt) {
    ExperimentConfig cfg;
    cfg.algorithm = "sgd";
    cfg.dataset.generator = "combes";
    cfg.dataset.seed = opt.seed;
    cfg.steps = opt.steps.value_or(1'000'000);
    cfg.schedule.alpha = 0.6;
    cfg.init.seed = opt.seed;
    cfg.seeds.clear();
    for (int k = 0; k < opt.seed_count; ++k) cfg.seeds.push_back(opt.seed * 1000 + static_cast<std::uint64_t>(k));
    cfg.output_dir = dir.string();
    cfg.analyses.regime = false;
    train(ctx, cfg, {});
}

void repro_leaky(Context& ctx, const fs::path& dir, const ReproOptions& opt) {
    fs::create_directories(dir);
    constexpr double kLambda = 0.5;
    const long steps = opt.steps.value_or(100'000);
    const Dataset ds = gen_combes(5, 5, 3, opt.seed);
    const Dataset transformed = leaky_transform(ds, kLambda);
    save_csv(ds, dir / "dataset.csv");
    save_csv(transformed, dir / "dataset_leaky.csv");
    ctx.output("dataset", dir / "dataset.csv");
    ctx.output("dataset_leaky", dir / "dataset_leaky.csv");

    const ConditionReport cond = check_combes(ds);
    const Vec w0 = 0.1 * *cond.separability_witness;
    const StepSchedule schedule = StepSchedule::polynomial(0.6);
    const ModelKind leaky = ModelKind::leaky(kLambda);
    ctx.note("leaky: sgd on both models, " + std::to_string(steps) + " steps");
    const Trajectory a = run_sgd(ds, leaky, w0, schedule, steps, opt.seed, RecordPolicy::geometric());
    const Trajectory b = run_sgd(transformed, ModelKind::linear(), w0, schedule, steps, opt.seed, RecordPolicy::geometric());
    double max_dev = 0.0;
    for (std::size_t r = 0; r < a.records.size(); ++r) {
        const double scale = std::max(a.records[r].w.norm(), 1e-300);
        max_dev = std::max(max_dev, (a.records[r].w - b.records[r].w).norm() / scale);
    }
    const MarginResult target = global_target(ds, leaky);
    Json report = report_header("repro leaky");
    report["lambda"] = kLambda;
    report["max_relative_deviation"] = max_dev;
    report["stayed_separable"] = a.final_region() == RegionLabel::separable() && a.region_changes.size() == 1;
    report["leaky_target"] = to_json(target);
    report["avg_direction_error_final"] = direction_error(a.records.back().avg_w, target.direction);
    report["direction_rate"] = attempt([&] {
        return to_json(fit_rate(squared(direction_error_series(a, target.direction, true)), RateModel::InvLog));
    });
    save_trajectory(a, dir / "trajectory_leaky", target.direction, target.direction);
    save_trajectory(b, dir / "trajectory_linear", target.direction, target.direction);
    ctx.output("trajectory_leaky", dir / "trajectory_leaky.csv");
    ctx.output("trajectory_linear", dir / "trajectory_linear.csv");
    report["tainted"] = a.tainted || b.tainted;
    finish_report(ctx, dir / "report.json", report);
    if (a.tainted || b.tainted) throw TaintFailure("leaky: run hit the exponent cap");
}

void repro_multi_neuron(Context& ctx, const fs::path& dir, const ReproOptions& opt) {
    ExperimentConfig cfg;
    cfg.algorithm = "gd-net";
    cfg.dataset.generator = "combes";
    cfg.dataset.seed = opt.seed;
    cfg.steps = opt.steps.value_or(100'000);
    cfg.net.seed = opt.seed;
    cfg.output_dir = (dir / "gd").string();
    train(ctx, cfg, {});
    Json gd_manifest = ctx.manifest;

    cfg.algorithm = "sgd-net";
    cfg.schedule.alpha = 0.6;
    cfg.seeds.clear();
    for (int k = 0; k < 5; ++k) cfg.seeds.push_back(opt.seed * 1000 + static_cast<std::uint64_t>(k));
    cfg.output_dir = (dir / "sgd").string();
    ctx.manifest = Json::object();
    train(ctx, cfg, {});
    Json merged = Json::object();
    for (auto& [k, v] : gd_manifest.items()) merged["gd_" + k] = v;
    for (auto& [k, v] : ctx.manifest.items()) merged["sgd_" + k] = v;
    ctx.manifest = std::move(merged);
}

// ---------------------------------------------------------------------------
// Argument plumbing
// ---------------------------------------------------------------------------

std::vector<std::size_t> parse_indices(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
            throw ParameterError("bad index list '" + text + "'");
        out.push_back(std::stoul(tok));
    }
    if (out.empty()) throw ParameterError("empty index list");
    return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"marginlab: implicit-bias experiments for ReLU-family classifiers"};
    app.require_subcommand(1);
    app.fallthrough();
    Context ctx{err};
    std::string out_path;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    app.add_flag("--quiet", ctx.quiet, "Suppress progress messages on stderr");

    auto add_common = [&](CLI::App* sub, const std::string& out_help) {
        sub->add_option("--out", out_path, out_help);
        sub->add_option("--seed", seed, "Random seed");
        sub->add_option("--config", config_path, "Experiment config (JSON)");
    };

    DatasetSpec gen_spec;
    auto* gen = app.add_subcommand("gen", "Generate a dataset CSV");
    add_common(gen, "Output CSV path (default dataset.csv)");
    gen->add_option("--generator", gen_spec.generator, "separable | combes | example1 | example2");
    gen->add_option("--n-pos", gen_spec.n_pos, "Positive samples");
    gen->add_option("--n-neg", gen_spec.n_neg, "Negative samples");
    gen->add_option("--dim", gen_spec.dim, "Dimension");
    gen->add_option("--min-margin", gen_spec.min_margin, "Signed margin for the separable generator");
    gen->add_flag("--augment", gen_spec.augment, "Append +1 / -1 to each sample");

    std::string data_path;
    auto* check = app.add_subcommand("check", "Check the pairwise sign conditions and separability");
    add_common(check, "Report path (default check.json)");
    check->add_option("--data", data_path, "Dataset CSV")->required();

    std::string point_set = "positives";
    std::string subset;
    double tol = 1e-8;
    long max_iter = 1'000'000;
    int enumerate = 0;
    auto* margin = app.add_subcommand("margin", "Certified max-margin direction");
    add_common(margin, "Report path (default margin.json)");
    margin->add_option("--data", data_path, "Dataset CSV")->required();
    margin->add_option("--points", point_set, "positives | signed | all");
    margin->add_option("--subset", subset, "Comma-separated positive indices J for the local margin");
    margin->add_option("--tol", tol, "Duality-gap tolerance");
    margin->add_option("--max-iter", max_iter, "Iteration limit");
    margin->add_option("--enumerate", enumerate, "Enumerate local minima up to this subset size");

    auto* train_cmd = app.add_subcommand("train", "Run an experiment from a config");
    add_common(train_cmd, "Output directory (overrides output_dir)");

    std::vector<std::string> trajectories;
    int flip_threshold = static_cast<int>(kDefaultFlipThreshold);
    auto* analyze = app.add_subcommand("analyze", "Analyze saved trajectories");
    add_common(analyze, "Report path (default analysis.json)");
    analyze->add_option("--data", data_path, "Dataset CSV")->required();
    analyze->add_option("--trajectory", trajectories, "Trajectory stem (repeatable)")->required();
    analyze->add_option("--flip-threshold", flip_threshold, "Region changes that count as oscillation");

    std::string scenario;
    ReproOptions repro_opt;
    long repro_steps = 0;
    auto* repro = app.add_subcommand("repro", "Run a canned scenario");
    add_common(repro, "Output directory (default repro/<name>)");
    repro->add_option("name", scenario, "example1 | example2 | combes-sgd | leaky | multi-neuron")
        ->required()
        ->check(CLI::IsMember({"example1", "example2", "combes-sgd", "leaky", "multi-neuron"}));
    repro->add_option("--steps", repro_steps, "Override the horizon T");
    repro->add_option("--seeds", repro_opt.seed_count, "Ensemble size for combes-sgd");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream sink;
        const int code = app.exit(e, e.get_exit_code() == 0 ? out : sink, err);
        err << sink.str();
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            if (!config_path.empty()) gen_spec = load_config(config_path).dataset;
            if (seed) gen_spec.seed = *seed;
            const fs::path path = out_path.empty() ? "dataset.csv" : out_path;
            if (path.has_parent_path()) fs::create_directories(path.parent_path());
            save_csv(build_dataset(gen_spec), path);
            ctx.output("dataset", path);
        } else if (check->parsed()) {
            const Dataset ds = load_csv(data_path);
            Json report = report_header("check");
            report["result"] = to_json(check_combes(ds));
            finish_report(ctx, out_path.empty() ? "check.json" : out_path, report);
        } else if (margin->parsed()) {
            const Dataset ds = load_csv(data_path);
            MarginOptions opts;
            opts.tol = tol;
            opts.max_iter = max_iter;
            Json report = report_header("margin");
            const fs::path path = out_path.empty() ? "margin.json" : out_path;
            try {
                if (!subset.empty()) {
                    const auto idx = parse_indices(subset);
                    const LocalMargin lm = local_margin(ds, idx, opts);
                    report["subset"] = idx;
                    report["result"] = to_json(lm.margin);
                    report["membership"] = lm.membership;
                } else {
                    const RowMatrix pts = point_set == "positives" ? ds.positive_points()
                                          : point_set == "signed"  ? ds.signed_points()
                                          : point_set == "all"     ? ds.points()
                                                                   : throw ParameterError("--points must be positives, signed or all");
                    report["points"] = point_set;
                    report["result"] = to_json(max_margin(pts, opts));
                }
                if (enumerate > 0) {
                    const LocalMinimaReport lm = enumerate_local_minima(ds, enumerate, opts);
                    Json list = Json::array();
                    for (const auto& m : lm.local) list.push_back({{"subset", m.subset}, {"margin", to_json(m.margin)}});
                    report["local_minima"] = {{"global", lm.global ? to_json(*lm.global) : Json(nullptr)},
                                              {"global_separable", lm.global_separable},
                                              {"local", list}};
                }
            } catch (const ConvergenceError& e) {
                report["result"] = to_json(e.best());
                report["error"] = e.what();
                finish_report(ctx, path, report);
                throw;
            }
            finish_report(ctx, path, report);
        } else if (train_cmd->parsed()) {
            if (config_path.empty()) throw ParameterError("train: --config is required");
            ExperimentConfig cfg = load_config(config_path);
            if (!out_path.empty()) cfg.output_dir = out_path;
            if (seed) {
                cfg.seeds = {*seed};
                cfg.init.seed = *seed;
            }
            train(ctx, cfg, fs::path(config_path).parent_path());
        } else if (analyze->parsed()) {
            const Dataset ds = load_csv(data_path);
            Json report = report_header("analyze");
            Json items = Json::array();
            AnalysisSpec spec;
            spec.flip_threshold = flip_threshold;
            bool tainted = false;
            for (const auto& stem : trajectories) {
                const Trajectory traj = load_trajectory(stem);
                if (traj.initial_w.size() != ds.dim()) throw ParameterError(stem + ": dimension differs from dataset");
                tainted = tainted || traj.tainted;
                const MarginResult global = global_target(ds, traj.kind);
                Json item{{"trajectory", stem}, {"tainted", traj.tainted}};
                if (traj.algorithm == Algorithm::GD) {
                    std::optional<Vec> target;
                    item["analysis"] = gd_analysis(traj, ds, spec, target);
                } else {
                    item["analysis"] = sgd_member_analysis(traj, ds, spec, global.direction);
                }
                items.push_back(std::move(item));
            }
            report["trajectories"] = std::move(items);
            finish_report(ctx, out_path.empty() ? "analysis.json" : out_path, report);
            if (tainted) throw TaintFailure("analyze: a trajectory hit the exponent cap");
        } else if (repro->parsed()) {
            if (seed) repro_opt.seed = *seed;
            if (repro_steps > 0) repro_opt.steps = repro_steps;
            if (repro_opt.seed_count < 2) throw ParameterError("repro: --seeds must be at least 2");
            const fs::path dir = out_path.empty() ? fs::path("repro") / scenario : fs::path(out_path);
            if (scenario == "example1") {
                repro_gd_example(ctx, dir, gen_example1(), (Vec(2) << 3.0, -1.0).finished(),
                                 repro_opt.steps.value_or(100'000), scenario);
            } else if (scenario == "example2") {
                repro_gd_example(ctx, dir, gen_example2(), (Vec(2) << 0.0, 1.0).finished(),
                                 repro_opt.steps.value_or(100'000), scenario);
            } else if (scenario == "combes-sgd") {
                repro_combes(ctx, dir, repro_opt);
            } else if (scenario == "leaky") {
                repro_leaky(ctx, dir, repro_opt);
            } else {
                repro_multi_neuron(ctx, dir, repro_opt);
            }
        }
    } catch (const TaintFailure& e) {
        err << "error: " << e.what() << '\n';
        out << Json{{"outputs", ctx.manifest}}.dump() << '\n';
        return 2;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << '\n';
        out << Json{{"outputs", ctx.manifest}}.dump() << '\n';
        return 2;
    } catch (const ParseError& e) {
        err << "error: " << e.what();
        if (!e.field().empty()) err << " [field " << e.field() << ']';
        err << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    out << Json{{"outputs", ctx.manifest}}.dump() << '\n';
    return 0;
}

}  // namespace marginlab
