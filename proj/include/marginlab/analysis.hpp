#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/margin.hpp"
#include "marginlab/model.hpp"
#include "marginlab/optim.hpp"
#include "marginlab/types.hpp"

namespace marginlab {

/// Point set whose max-margin direction is the implicit-bias target of `kind`: the
/// positives for ReLU, {y_i x_i} for linear, and {y_i x*_i} over the leaky transform.
RowMatrix target_points(const Dataset& ds, ModelKind kind);

// ---------------------------------------------------------------------------
// Landscape
// ---------------------------------------------------------------------------

/// Asymptotic behavior of the ReLU loss along a ray alpha w, alpha -> +inf.
struct LandscapeCase {
    enum class Kind {
        Global,           ///< every sample strictly correct: limit n-/n
        AsymptoticLocal,  ///< exactly J+ active, nothing else: limit n-/n + (n+ - |J+|)/n
        FiniteLocal,      ///< nothing active: loss is 1 along the whole ray
        Divergent,        ///< some negative active: loss -> +inf, not a critical direction
    };
    Kind kind = Kind::FiniteLocal;
    std::vector<std::size_t> active;  ///< J+ for AsymptoticLocal
    double limit_loss = 1.0;
    std::vector<double> scales;
    std::vector<double> scale_losses;  ///< ReLU loss at scale * w
    /// |loss - limit| is non-increasing over the scale grid (reported, not enforced).
    bool approach_monotone = true;
};

std::string to_string(LandscapeCase::Kind kind);

LandscapeCase classify_direction(const Vec& w, const Dataset& ds,
                                 std::span<const double> scale_grid = std::vector<double>{1, 10, 100, 1000});

// ---------------------------------------------------------------------------
// Trajectory regimes
// ---------------------------------------------------------------------------

struct RegimeReport {
    enum class Regime { GlobalMaxMargin, Oscillation, LocalMaxMargin, FiniteTermination, Undetermined };
    Regime regime = Regime::Undetermined;
    std::vector<std::size_t> active;  ///< J+ for LocalMaxMargin
    std::optional<Vec> target_direction;
    std::optional<long> stabilization_step;
    double final_direction_error = 0.0;  ///< NaN when there is no target
    std::size_t region_flip_count = 0;   ///< label changes in the final half of the run
    std::size_t total_flips = 0;
    RegionLabel final_region = RegionLabel::finite_local_min();
    bool target_membership = false;          ///< LocalMaxMargin: target in its local region
    bool target_in_separable_region = false; ///< GlobalMaxMargin: y_i target.x_i > 0 for all i
    std::vector<std::string> notes;
};

std::string to_string(RegimeReport::Regime regime);

inline constexpr std::size_t kDefaultFlipThreshold = 4;

/// Classifies a single-neuron ReLU trajectory. The run counts as stabilized when the
/// region label does not change during its final half; Oscillation needs at least
/// flip_threshold label changes in that half. Refuses tainted trajectories and
/// trajectories with fewer than 10 records.
RegimeReport classify_trajectory(const Trajectory& traj, const Dataset& ds,
                                 std::size_t flip_threshold = kDefaultFlipThreshold,
                                 const MarginOptions& margin_options = {});

// ---------------------------------------------------------------------------
// Direction errors and rates
// ---------------------------------------------------------------------------

struct SeriesPoint {
    long t = 0;
    double value = 0.0;
};
using Series = std::vector<SeriesPoint>;

/// |u/|u| - target|; NaN when |u| < 1e-12.
double direction_error(const Vec& u, const Vec& target);

/// Error series for the raw iterate (use_average = false) or the running average.
/// Entries whose iterate norm is below 1e-12 are skipped.
Series direction_error_series(const Trajectory& traj, const Vec& target, bool use_average);
/// Error series of the across-seed mean of the averaged iterate.
Series direction_error_series(const Ensemble& ensemble, const Vec& target);

enum class RateModel { InvLog, LogLogOverLog, PolyLog };

std::string to_string(RateModel model);
RateModel parse_rate_model(const std::string& name);

/// model(t) without the constant: 1/ln t, ln ln t / ln t, ln^2 t / t^(1-alpha).
double rate_model_value(RateModel model, double t, double alpha = 0.0);

struct RateFit {
    RateModel model = RateModel::InvLog;
    double alpha = 0.0;
    double coefficient = 0.0;  ///< fitted c
    double sup_ratio = 0.0;    ///< max over the window of observed / (c model)
    double spread = 0.0;       ///< max ratio / min ratio of observed / model (fit-free)
    long t_lo = 0;
    long t_hi = 0;
    std::size_t points = 0;

    bool holds(double ratio_cap = 1.5) const { return sup_ratio <= ratio_cap; }
};

inline constexpr double kDefaultRatioCap = 1.5;

/// Chebyshev fit of c on the final window_fraction of the series: c minimizes
/// max_i |observed_i / (c model_i) - 1|. Refuses non-positive values in the window.
RateFit fit_rate(const Series& series, RateModel model, std::optional<double> alpha = std::nullopt,
                 double window_fraction = 0.5);

// ---------------------------------------------------------------------------
// SGD diagnostics
// ---------------------------------------------------------------------------

struct VarianceCheck {
    Series ratios;  ///< var_sum(t) / ln t after stabilization
    double window_max = 0.0;
    double window_median = 0.0;
    double gamma = 0.0;  ///< margin of the stabilized region's point set
    long stabilization_step = 0;
    bool pass = false;
};

/// var_sum(t)/ln t on the final half of the post-stabilization records; passes when its
/// max is at most cap times its median. Refuses constant schedules and unstabilized runs.
VarianceCheck verify_variance_bound(const Trajectory& traj, const Dataset& ds, double cap = 2.0);
/// Same check on the across-seed mean of var_sum, stabilized at the latest member step.
VarianceCheck verify_variance_bound(const Ensemble& ensemble, const Dataset& ds, double cap = 2.0);

struct NormGrowth {
    Series ratios;  ///< |u_t| / ln t for t >= 2
    double window_min = 0.0;
    double window_median = 0.0;
    bool floor_ok = false;   ///< window_min >= floor_fraction * window_median
    double log_slope = 0.0;  ///< least-squares slope of |u_t| against ln t on the window
    bool pass = false;       ///< floor_ok and log_slope > 0
};

NormGrowth norm_growth(const Series& norms, double floor_fraction = 0.5, double window_fraction = 0.5);
NormGrowth norm_growth(const Trajectory& traj, double floor_fraction = 0.5, double window_fraction = 0.5);
NormGrowth norm_growth(const Ensemble& ensemble, double floor_fraction = 0.5, double window_fraction = 0.5);

/// Per recorded step, the mean over seeds of loss(avg w) minus n-/n.
Series excess_loss_series(const Ensemble& ensemble, const Dataset& ds);

// ---------------------------------------------------------------------------
// Multi-neuron partitions
// ---------------------------------------------------------------------------

struct Partition {
    ActivationPattern pattern = 0;
    std::vector<std::size_t> samples;
    int label = 0;  ///< +1, -1, or 0 when mixed
    bool v_sign_uniform = false;
    /// Max-margin direction of {y_i x_i : i in partition}.
    std::optional<MarginResult> margin;
    Series direction_error;
};

struct PartitionReport {
    long reference_step = 0;
    double reference_loss = 0.0;
    std::vector<Partition> partitions;
    bool covers_all_samples = false;
    bool disjointness_ok = false;
    bool labels_uniform = false;
    bool v_signs_uniform = false;
    bool patterns_stable = false;
    std::optional<long> first_pattern_violation;
    std::optional<long> pattern_stable_after;
    std::optional<long> loss_below_inv_n_after;  ///< first record after which loss < 1/n
    double max_recursion_deviation = 0.0;  ///< relative, over checked steps
    std::size_t recursion_checks = 0;
    bool recursion_ok = false;
};

inline constexpr double kRecursionTolerance = 1e-8;

/// Builds the pattern partitions at the first record with t >= reference_step and checks
/// the partition claims. Direction errors use the current effective weights for GD runs
/// and their running averages for SGD runs.
PartitionReport verify_partition_claims(const NetTrajectory& traj, const Dataset& ds, long reference_step,
                                        const MarginOptions& margin_options = {});

/// Direction error of the across-seed mean of the averaged effective weights, per partition
/// of `report` (all members must share the record grid).
std::vector<Series> ensemble_partition_errors(std::span<const NetTrajectory> members, const PartitionReport& report);

}  // namespace marginlab
