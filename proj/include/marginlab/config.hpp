#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/model.hpp"
#include "marginlab/optim.hpp"

namespace marginlab {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetSpec {
    std::string generator = "combes";  ///< separable | combes | example1 | example2 | file
    int n_pos = 5;
    int n_neg = 5;
    int dim = 3;
    double min_margin = 0.1;
    std::uint64_t seed = 1;
    std::string path;  ///< generator = file
    bool augment = false;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct ModelSpec {
    std::string kind = "relu";  ///< relu | linear | leaky
    double lambda = 0.5;        ///< leaky only

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ScheduleSpec {
    std::optional<double> eta;  ///< gd, gd-net; absent means 0.1 / B^2
    double alpha = 0.6;         ///< sgd, sgd-net

    friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

struct StrideSpec {
    std::string policy = "geometric";  ///< geometric | linear
    double ratio = 1.1;
    long every = 1000;

    friend bool operator==(const StrideSpec&, const StrideSpec&) = default;
};

struct InitSpec {
    std::optional<std::vector<double>> w0;  ///< explicit start; otherwise Gaussian * scale
    double scale = 0.5;
    std::uint64_t seed = 0;

    friend bool operator==(const InitSpec&, const InitSpec&) = default;
};

struct NetSpec {
    std::vector<double> v{1.0, 0.5, -1.0, -0.5};
    double scale = 0.5;
    std::uint64_t seed = 0;

    friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

struct AnalysisSpec {
    bool regime = true;
    bool rates = true;
    bool variance = true;
    bool partitions = true;
    long reference_step = 1000;
    int flip_threshold = 4;

    friend bool operator==(const AnalysisSpec&, const AnalysisSpec&) = default;
};

/// One experiment, stored as a JSON document with a schema_version field.
struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    DatasetSpec dataset;
    ModelSpec model;
    std::string algorithm = "gd";  ///< gd | sgd | gd-net | sgd-net
    ScheduleSpec schedule;
    long steps = 100000;
    std::vector<std::uint64_t> seeds{1};
    StrideSpec stride;
    InitSpec init;
    NetSpec net;
    std::string output_dir = "out";
    AnalysisSpec analyses;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Strict parse: unknown keys, wrong types and invalid combinations raise ParseError or
/// ParameterError. Missing keys take the defaults above.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full document with every key written out, so parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
void validate_config(const ExperimentConfig& config);

Dataset build_dataset(const DatasetSpec& spec, const std::filesystem::path& base_dir = {});
ModelKind build_model(const ModelSpec& spec);
RecordPolicy build_policy(const StrideSpec& spec);
Vec build_initial_w(const InitSpec& spec, const Dataset& ds);

}  // namespace marginlab
