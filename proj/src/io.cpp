#include "marginlab/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"

namespace marginlab {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParameterError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw ParameterError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParameterError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrajectoryFiles TrajectoryFiles::for_stem(const fs::path& stem) {
    auto with = [&](const char* suffix) {
        fs::path p = stem;
        p += suffix;
        return p;
    };
    return {with(".csv"), with(".weights.csv"), with(".regions.csv"), with(".meta.json")};
}

namespace {

std::string fmt_opt_error(const Vec& u, const std::optional<Vec>& target) {
    if (!target) return "";
    const double e = direction_error(u, *target);
    return std::isnan(e) ? "" : format_double(e);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

/// Data lines of a CSV file with the expected header; strips '\r'.
std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::string& header_prefix,
                                                 std::size_t min_fields) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || line.rfind(header_prefix, 0) != 0)
        throw ParseError(path.string() + ": missing header '" + header_prefix + "'", 1, "header");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() < min_fields)
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + " has " +
                                 std::to_string(fields.size()) + " fields",
                             line_no);
        rows.push_back(std::move(fields));
    }
    return rows;
}

double num(const std::string& text, const fs::path& path, std::size_t row, const char* field) {
    const auto v = parse_double(text);
    if (!v) throw ParseError(path.string() + ": bad number '" + text + "' in row " + std::to_string(row), row + 2, field);
    return *v;
}

long integer(const std::string& text, const fs::path& path, std::size_t row, const char* field) {
    const double v = num(text, path, row, field);
    if (v != std::floor(v)) throw ParseError(path.string() + ": non-integer step '" + text + "'", row + 2, field);
    return static_cast<long>(v);
}

Vec vec_from_json(const Json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
    return v;
}

}  // namespace

std::string trajectory_csv(const Trajectory& traj, const std::optional<Vec>& global_target,
                           const std::optional<Vec>& target) {
    std::ostringstream out;
    out << "t,loss,norm_w,var_sum,region,dir_err_global,dir_err_target,overflow\n";
    for (const auto& r : traj.records) {
        out << r.t << ',' << format_double(r.loss) << ',' << format_double(r.norm) << ',' << format_double(r.var_sum)
            << ',' << r.region.str() << ',' << fmt_opt_error(r.w, global_target) << ','
            << fmt_opt_error(r.w, target) << ',' << (r.overflow ? 1 : 0) << '\n';
    }
    return out.str();
}

TrajectoryFiles save_trajectory(const Trajectory& traj, const fs::path& stem, const std::optional<Vec>& global_target,
                                const std::optional<Vec>& target) {
    const TrajectoryFiles files = TrajectoryFiles::for_stem(stem);
    const auto d = traj.initial_w.size();

    std::ostringstream weights;
    weights << 't';
    for (Eigen::Index k = 0; k < d; ++k) weights << ",w" << k;
    for (Eigen::Index k = 0; k < d; ++k) weights << ",avg" << k;
    weights << ",avg_loss\n";
    for (const auto& r : traj.records) {
        weights << r.t;
        for (Eigen::Index k = 0; k < d; ++k) weights << ',' << format_double(r.w[k]);
        for (Eigen::Index k = 0; k < d; ++k) weights << ',' << format_double(r.avg_w[k]);
        weights << ',' << format_double(r.avg_loss) << '\n';
    }

    std::ostringstream regions;
    regions << "t,region\n";
    for (const auto& c : traj.region_changes) regions << c.t << ',' << c.region.str() << '\n';

    Json meta;
    meta["schema_version"] = kReportSchemaVersion;
    meta["algorithm"] = traj.algorithm == Algorithm::GD ? "gd" : "sgd";
    meta["model"] = traj.kind.activation() == ModelKind::Activation::ReLU     ? "relu"
                    : traj.kind.activation() == ModelKind::Activation::Linear ? "linear"
                                                                              : "leaky";
    meta["lambda"] = traj.kind.lambda();
    meta["schedule"] = traj.schedule.is_constant() ? Json{{"constant", traj.schedule.eta()}}
                                                   : Json{{"alpha", traj.schedule.alpha()}};
    meta["horizon"] = traj.horizon;
    meta["steps_run"] = traj.steps_run;
    meta["zero_gradient_stop"] = traj.zero_gradient_stop;
    meta["tainted"] = traj.tainted;
    meta["rng_seed"] = traj.rng_seed;
    meta["initial_w"] = to_json(traj.initial_w);
    meta["final_w"] = to_json(traj.final_w);

    write_file_atomic(files.csv, trajectory_csv(traj, global_target, target));
    write_file_atomic(files.weights, weights.str());
    write_file_atomic(files.regions, regions.str());
    write_file_atomic(files.meta, meta.dump(2) + "\n");
    return files;
}

Trajectory load_trajectory(const fs::path& stem) {
    const TrajectoryFiles files = TrajectoryFiles::for_stem(stem);
    Json meta;
    try {
        meta = Json::parse(read_file(files.meta));
    } catch (const Json::exception& e) {
        throw ParseError(files.meta.string() + ": " + e.what(), 0);
    }

    Trajectory traj;
    try {
        const std::string model = meta.at("model");
        traj.kind = model == "relu"     ? ModelKind::relu()
                    : model == "linear" ? ModelKind::linear()
                                        : ModelKind::leaky(meta.at("lambda").get<double>());
        traj.algorithm = meta.at("algorithm") == "gd" ? Algorithm::GD : Algorithm::SGD;
        const Json& sched = meta.at("schedule");
        traj.schedule = sched.contains("constant") ? StepSchedule::constant(sched.at("constant").get<double>())
                                                   : StepSchedule::polynomial(sched.at("alpha").get<double>());
        traj.horizon = meta.at("horizon");
        traj.steps_run = meta.at("steps_run");
        traj.zero_gradient_stop = meta.at("zero_gradient_stop");
        traj.tainted = meta.at("tainted");
        traj.rng_seed = meta.at("rng_seed");
        traj.initial_w = vec_from_json(meta.at("initial_w"));
        traj.final_w = vec_from_json(meta.at("final_w"));
    } catch (const Json::exception& e) {
        throw ParseError(files.meta.string() + ": " + e.what(), 0);
    }
    const auto d = static_cast<std::size_t>(traj.initial_w.size());

    const auto summary = read_table(files.csv, "t,loss,norm_w,var_sum,region", 8);
    const auto weights = read_table(files.weights, "t,", 2 + 2 * d);
    if (summary.size() != weights.size())
        throw ParseError(files.weights.string() + ": record count differs from " + files.csv.string(), 0);
    for (std::size_t r = 0; r < summary.size(); ++r) {
        const auto& s = summary[r];
        const auto& w = weights[r];
        TrajectoryRecord rec;
        rec.t = integer(s[0], files.csv, r, "t");
        if (integer(w[0], files.weights, r, "t") != rec.t)
            throw ParseError(files.weights.string() + ": step mismatch in row " + std::to_string(r), r + 2, "t");
        rec.loss = num(s[1], files.csv, r, "loss");
        rec.norm = num(s[2], files.csv, r, "norm_w");
        rec.var_sum = num(s[3], files.csv, r, "var_sum");
        try {
            rec.region = RegionLabel::parse(s[4]);
        } catch (const ParameterError& e) {
            throw ParseError(files.csv.string() + ": " + e.what(), r + 2, "region");
        }
        rec.overflow = s[7] == "1";
        rec.w.resize(static_cast<Eigen::Index>(d));
        rec.avg_w.resize(static_cast<Eigen::Index>(d));
        for (std::size_t k = 0; k < d; ++k) {
            rec.w[static_cast<Eigen::Index>(k)] = num(w[1 + k], files.weights, r, "w");
            rec.avg_w[static_cast<Eigen::Index>(k)] = num(w[1 + d + k], files.weights, r, "avg");
        }
        rec.avg_loss = num(w[1 + 2 * d], files.weights, r, "avg_loss");
        traj.records.push_back(std::move(rec));
    }
    for (const auto& row : read_table(files.regions, "t,region", 2)) {
        try {
            traj.region_changes.push_back({integer(row[0], files.regions, 0, "t"), RegionLabel::parse(row[1])});
        } catch (const ParameterError& e) {
            throw ParseError(files.regions.string() + ": " + e.what(), 0, "region");
        }
    }
    if (traj.records.empty() || traj.region_changes.empty())
        throw ParseError(stem.string() + ": trajectory has no records", 0);
    return traj;
}

std::string net_trajectory_csv(const NetTrajectory& traj) {
    std::ostringstream out;
    out << "t,loss,overflow,patterns\n";
    const int K = static_cast<int>(traj.v.size());
    for (const auto& r : traj.records) {
        out << r.t << ',' << format_double(r.loss) << ',' << (r.overflow ? 1 : 0) << ',';
        for (std::size_t i = 0; i < r.patterns.size(); ++i) {
            if (i) out << ';';
            out << pattern_string(r.patterns[i], K);
        }
        out << '\n';
    }
    return out.str();
}

Json to_json(const Vec& v) {
    Json j = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v[k]);
    return j;
}

Json to_json(const MarginResult& r) {
    return {{"direction", to_json(r.direction)}, {"gamma", r.gamma},           {"dual_q", to_json(r.dual_q)},
            {"duality_gap", r.duality_gap},      {"iterations", r.iterations}, {"certified", r.certified}};
}

Json to_json(const ConditionReport& r) {
    Json pairs = Json::array();
    for (const auto& v : r.violating_pairs) pairs.push_back({{"i", v.i}, {"j", v.j}, {"inner_product", v.inner_product}});
    Json j{{"combes_ok", r.combes_ok},
           {"violating_pairs", pairs},
           {"separable", r.separable},
           {"separation_margin", r.separation_margin}};
    j["separability_witness"] = r.separability_witness ? to_json(*r.separability_witness) : Json(nullptr);
    return j;
}

Json to_json(const LandscapeCase& c) {
    Json j{{"case", to_string(c.kind)}, {"active", c.active}};
    j["limit_loss"] = std::isinf(c.limit_loss) ? Json("inf") : Json(c.limit_loss);
    j["scales"] = c.scales;
    j["scale_losses"] = c.scale_losses;
    j["approach_monotone"] = c.approach_monotone;
    return j;
}

Json to_json(const RegimeReport& r) {
    Json j{{"regime", to_string(r.regime)}, {"active", r.active}};
    j["target_direction"] = r.target_direction ? to_json(*r.target_direction) : Json(nullptr);
    j["stabilization_step"] = r.stabilization_step ? Json(*r.stabilization_step) : Json(nullptr);
    j["final_direction_error"] = r.final_direction_error;
    j["region_flip_count"] = r.region_flip_count;
    j["total_flips"] = r.total_flips;
    j["final_region"] = r.final_region.str();
    j["target_membership"] = r.target_membership;
    j["target_in_separable_region"] = r.target_in_separable_region;
    j["notes"] = r.notes;
    return j;
}

Json to_json(const RateFit& f) {
    return {{"model", to_string(f.model)},   {"alpha", f.alpha},      {"coefficient", f.coefficient},
            {"sup_ratio", f.sup_ratio},      {"spread", f.spread},    {"window", {f.t_lo, f.t_hi}},
            {"points", f.points},            {"holds", f.holds(kDefaultRatioCap)}};
}

Json to_json(const VarianceCheck& v) {
    return {{"window_max", v.window_max},       {"window_median", v.window_median},
            {"gamma", v.gamma},                 {"stabilization_step", v.stabilization_step},
            {"pass", v.pass},                   {"ratios", to_json(v.ratios)}};
}

Json to_json(const NormGrowth& g) {
    return {{"window_min", g.window_min}, {"window_median", g.window_median}, {"floor_ok", g.floor_ok},
            {"log_slope", g.log_slope},   {"pass", g.pass},                   {"ratios", to_json(g.ratios)}};
}

Json to_json(const PartitionReport& r) {
    Json parts = Json::array();
    for (const auto& p : r.partitions) {
        Json pj{{"pattern", p.pattern}, {"samples", p.samples}, {"label", p.label}, {"v_sign_uniform", p.v_sign_uniform}};
        pj["margin"] = p.margin ? to_json(*p.margin) : Json(nullptr);
        pj["direction_error"] = to_json(p.direction_error);
        parts.push_back(std::move(pj));
    }
    Json j{{"reference_step", r.reference_step}, {"reference_loss", r.reference_loss}, {"partitions", parts}};
    j["covers_all_samples"] = r.covers_all_samples;
    j["disjointness_ok"] = r.disjointness_ok;
    j["labels_uniform"] = r.labels_uniform;
    j["v_signs_uniform"] = r.v_signs_uniform;
    j["patterns_stable"] = r.patterns_stable;
    j["first_pattern_violation"] = r.first_pattern_violation ? Json(*r.first_pattern_violation) : Json(nullptr);
    j["pattern_stable_after"] = r.pattern_stable_after ? Json(*r.pattern_stable_after) : Json(nullptr);
    j["loss_below_inv_n_after"] = r.loss_below_inv_n_after ? Json(*r.loss_below_inv_n_after) : Json(nullptr);
    j["max_recursion_deviation"] = r.max_recursion_deviation;
    j["recursion_checks"] = r.recursion_checks;
    j["recursion_ok"] = r.recursion_ok;
    return j;
}

Json to_json(const Series& s) {
    Json t = Json::array(), v = Json::array();
    for (const auto& p : s) {
        t.push_back(p.t);
        v.push_back(p.value);
    }
    return {{"t", t}, {"value", v}};
}

Json to_json(const Ensemble& e) {
    Json j{{"schema_version", kReportSchemaVersion}, {"seeds", e.seeds}, {"tainted", e.tainted}};
    Json t = Json::array(), mw = Json::array(), sw = Json::array(), ml = Json::array(), sl = Json::array(),
         mv = Json::array(), sv = Json::array();
    for (const auto& p : e.points) {
        t.push_back(p.t);
        mw.push_back(to_json(p.mean_avg_w));
        sw.push_back(to_json(p.se_avg_w));
        ml.push_back(p.mean_avg_loss);
        sl.push_back(p.se_avg_loss);
        mv.push_back(p.mean_var_sum);
        sv.push_back(p.se_var_sum);
    }
    j["t"] = t;
    j["mean_avg_w"] = mw;
    j["se_avg_w"] = sw;
    j["mean_avg_loss"] = ml;
    j["se_avg_loss"] = sl;
    j["mean_var_sum"] = mv;
    j["se_var_sum"] = sv;
    return j;
}

}  // namespace marginlab
