#include "marginlab/config.hpp"

#include <set>

#include <json.hpp>

#include "marginlab/errors.hpp"
#include "marginlab/io.hpp"
#include "marginlab/margin.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

namespace {

/// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ParseError("config: '" + name_ + "' must be an object", 0, name_);
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const Json::exception&) {
            throw ParseError("config: '" + path(key) + "' has the wrong type", 0, path(key));
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T value{};
        get(key, value);
        out = std::move(value);
    }

    Section sub(const char* key) {
        seen_.insert(key);
        static const Json empty = Json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, path(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ParseError("config: unknown key '" + path(key.c_str()) + "'", 0, path(key.c_str()));
    }

private:
    std::string path(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

    const Json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), 0);
    }
    ExperimentConfig c;
    Section top(root, "");
    top.get("schema_version", c.schema_version);
    if (c.schema_version != kConfigSchemaVersion)
        throw ParseError("config: unsupported schema_version " + std::to_string(c.schema_version), 0, "schema_version");

    Section ds = top.sub("dataset");
    ds.get("generator", c.dataset.generator);
    ds.get("n_pos", c.dataset.n_pos);
    ds.get("n_neg", c.dataset.n_neg);
    ds.get("dim", c.dataset.dim);
    ds.get("min_margin", c.dataset.min_margin);
    ds.get("seed", c.dataset.seed);
    ds.get("path", c.dataset.path);
    ds.get("augment", c.dataset.augment);
    ds.finish();

    Section model = top.sub("model");
    model.get("kind", c.model.kind);
    model.get("lambda", c.model.lambda);
    model.finish();

    top.get("algorithm", c.algorithm);

    Section sched = top.sub("schedule");
    sched.get("eta", c.schedule.eta);
    sched.get("alpha", c.schedule.alpha);
    sched.finish();

    top.get("steps", c.steps);
    top.get("seeds", c.seeds);

    Section stride = top.sub("stride");
    stride.get("policy", c.stride.policy);
    stride.get("ratio", c.stride.ratio);
    stride.get("every", c.stride.every);
    stride.finish();

    Section init = top.sub("init");
    init.get("w0", c.init.w0);
    init.get("scale", c.init.scale);
    init.get("seed", c.init.seed);
    init.finish();

    Section net = top.sub("net");
    net.get("v", c.net.v);
    net.get("scale", c.net.scale);
    net.get("seed", c.net.seed);
    net.finish();

    top.get("output_dir", c.output_dir);

    Section an = top.sub("analyses");
    an.get("regime", c.analyses.regime);
    an.get("rates", c.analyses.rates);
    an.get("variance", c.analyses.variance);
    an.get("partitions", c.analyses.partitions);
    an.get("reference_step", c.analyses.reference_step);
    an.get("flip_threshold", c.analyses.flip_threshold);
    an.finish();

    top.finish();
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string serialize_config(const ExperimentConfig& c) {
    Json j;
    j["schema_version"] = c.schema_version;
    j["dataset"] = {{"generator", c.dataset.generator}, {"n_pos", c.dataset.n_pos},
                    {"n_neg", c.dataset.n_neg},         {"dim", c.dataset.dim},
                    {"min_margin", c.dataset.min_margin}, {"seed", c.dataset.seed},
                    {"path", c.dataset.path},           {"augment", c.dataset.augment}};
    j["model"] = {{"kind", c.model.kind}, {"lambda", c.model.lambda}};
    j["algorithm"] = c.algorithm;
    j["schedule"] = {{"eta", c.schedule.eta ? Json(*c.schedule.eta) : Json(nullptr)}, {"alpha", c.schedule.alpha}};
    j["steps"] = c.steps;
    j["seeds"] = c.seeds;
    j["stride"] = {{"policy", c.stride.policy}, {"ratio", c.stride.ratio}, {"every", c.stride.every}};
    j["init"] = {{"w0", c.init.w0 ? Json(*c.init.w0) : Json(nullptr)}, {"scale", c.init.scale}, {"seed", c.init.seed}};
    j["net"] = {{"v", c.net.v}, {"scale", c.net.scale}, {"seed", c.net.seed}};
    j["output_dir"] = c.output_dir;
    j["analyses"] = {{"regime", c.analyses.regime},
                     {"rates", c.analyses.rates},
                     {"variance", c.analyses.variance},
                     {"partitions", c.analyses.partitions},
                     {"reference_step", c.analyses.reference_step},
                     {"flip_threshold", c.analyses.flip_threshold}};
    return j.dump(2) + "\n";
}

void validate_config(const ExperimentConfig& c) {
    static const std::set<std::string> generators{"separable", "combes", "example1", "example2", "file"};
    static const std::set<std::string> algorithms{"gd", "sgd", "gd-net", "sgd-net"};
    if (!generators.count(c.dataset.generator))
        throw ParameterError("config: unknown dataset.generator '" + c.dataset.generator + "'");
    if (c.dataset.generator == "file" && c.dataset.path.empty())
        throw ParameterError("config: dataset.path is required for generator 'file'");
    if (!algorithms.count(c.algorithm)) throw ParameterError("config: unknown algorithm '" + c.algorithm + "'");
    build_model(c.model);
    build_policy(c.stride);
    if (c.steps < 1) throw ParameterError("config: steps must be at least 1");
    const bool stochastic = c.algorithm == "sgd" || c.algorithm == "sgd-net";
    if (stochastic) {
        if (c.schedule.eta) throw ParameterError("config: " + c.algorithm + " takes schedule.alpha, not schedule.eta");
        StepSchedule::polynomial(c.schedule.alpha);
        if (c.seeds.empty()) throw ParameterError("config: seeds must be non-empty for " + c.algorithm);
    } else if (c.schedule.eta) {
        StepSchedule::constant(*c.schedule.eta);
    }
    if (c.algorithm == "gd-net" || c.algorithm == "sgd-net") {
        if (c.model.kind != "relu") throw ParameterError("config: network runs use the relu model");
        if (!(c.net.scale > 0.0)) throw ParameterError("config: net.scale must be positive");
    }
    if (c.analyses.flip_threshold < 1) throw ParameterError("config: analyses.flip_threshold must be positive");
}

Dataset build_dataset(const DatasetSpec& spec, const std::filesystem::path& base_dir) {
    Dataset ds = [&] {
        if (spec.generator == "separable")
            return gen_separable(spec.n_pos, spec.n_neg, spec.dim, spec.min_margin, spec.seed);
        if (spec.generator == "combes") return gen_combes(spec.n_pos, spec.n_neg, spec.dim, spec.seed);
        if (spec.generator == "example1") return gen_example1();
        if (spec.generator == "example2") return gen_example2();
        if (spec.generator == "file") {
            std::filesystem::path p = spec.path;
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            return load_csv(p);
        }
        throw ParameterError("unknown dataset generator '" + spec.generator + "'");
    }();
    return spec.augment ? augment(ds) : ds;
}

ModelKind build_model(const ModelSpec& spec) {
    if (spec.kind == "relu") return ModelKind::relu();
    if (spec.kind == "linear") return ModelKind::linear();
    if (spec.kind == "leaky") return ModelKind::leaky(spec.lambda);
    throw ParameterError("unknown model kind '" + spec.kind + "' (relu, linear, leaky)");
}

RecordPolicy build_policy(const StrideSpec& spec) {
    if (spec.policy == "geometric") return RecordPolicy::geometric(spec.ratio);
    if (spec.policy == "linear") return RecordPolicy::linear(spec.every);
    throw ParameterError("unknown stride policy '" + spec.policy + "' (geometric, linear)");
}

Vec build_initial_w(const InitSpec& spec, const Dataset& ds) {
    if (spec.w0) {
        if (static_cast<int>(spec.w0->size()) != ds.dim())
            throw ParameterError("init.w0 has " + std::to_string(spec.w0->size()) + " entries, dataset dimension is " +
                                 std::to_string(ds.dim()));
        return Eigen::Map<const Vec>(spec.w0->data(), static_cast<Eigen::Index>(spec.w0->size()));
    }
    if (!(spec.scale > 0.0)) throw ParameterError("init.scale must be positive");
    RngStream rng(spec.seed, /*stream=*/4);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Vec w(ds.dim());
        for (int k = 0; k < ds.dim(); ++k) w[k] = spec.scale * rng.normal();
        // Zero gradient there; redraw.
        if (region_of(w, ds).kind() != RegionLabel::Kind::FiniteLocalMin) return w;
    }
    throw GenerationError("init: every random draw landed at a finite local minimum");
}

}  // namespace marginlab
