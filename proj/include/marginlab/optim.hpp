#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/margin.hpp"
#include "marginlab/model.hpp"
#include "marginlab/types.hpp"

namespace marginlab {

/// Constant(eta) or Polynomial(alpha) with eta_k = (k+1)^(-alpha), 0.5 < alpha < 1.
class StepSchedule {
public:
    static StepSchedule constant(double eta);
    static StepSchedule polynomial(double alpha);

    bool is_constant() const noexcept { return constant_; }
    double eta() const noexcept { return value_; }    ///< constant schedules
    double alpha() const noexcept { return value_; }  ///< polynomial schedules
    double at(long k) const noexcept;

    friend bool operator==(const StepSchedule&, const StepSchedule&) = default;

private:
    StepSchedule(bool constant, double value) noexcept : constant_(constant), value_(value) {}

    bool constant_;
    double value_;
};

/// 0.1 / B^2, below the smoothness heuristic for every dataset with norm bound B.
double default_gd_stepsize(const Dataset& ds);

/// Which steps get a snapshot. Geometric: {0} U {ceil(r^j)}; linear: multiples of `every`.
/// The final step is always recorded.
class RecordPolicy {
public:
    static RecordPolicy geometric(double ratio = 1.1);
    static RecordPolicy linear(long every);

    bool is_geometric() const noexcept { return geometric_; }
    double ratio() const noexcept { return ratio_; }
    long every() const noexcept { return every_; }

    /// Sorted, unique record steps in [0, horizon].
    std::vector<long> steps(long horizon) const;

    friend bool operator==(const RecordPolicy&, const RecordPolicy&) = default;

private:
    RecordPolicy(bool geometric, double ratio, long every) noexcept
        : geometric_(geometric), ratio_(ratio), every_(every) {}

    bool geometric_;
    double ratio_;
    long every_;
};

enum class Algorithm { GD, SGD };

struct TrajectoryRecord {
    long t = 0;
    Vec w;
    double loss = 0.0;
    Vec avg_w;              ///< (1/t) sum_{k<t} w_k; equals w_0 at t = 0
    double avg_loss = 0.0;  ///< loss at avg_w
    double norm = 0.0;      ///< |w_t|
    RegionLabel region = RegionLabel::finite_local_min();
    double var_sum = 0.0;   ///< sum_{k<t} eta_k^2 |stochastic gradient_k|^2; 0 for GD
    bool overflow = false;
};

/// Step at which the region label changed (the first entry is the label at t = 0).
struct RegionChange {
    long t = 0;
    RegionLabel region = RegionLabel::finite_local_min();
};

struct Trajectory {
    Algorithm algorithm = Algorithm::GD;
    ModelKind kind = ModelKind::relu();
    StepSchedule schedule = StepSchedule::constant(1.0);
    long horizon = 0;    ///< requested number of steps T
    long steps_run = 0;  ///< < horizon only after a zero-gradient stop
    bool zero_gradient_stop = false;
    bool tainted = false;  ///< some evaluation hit the exponent cap
    std::uint64_t rng_seed = 0;
    Vec initial_w;
    Vec final_w;
    std::vector<TrajectoryRecord> records;
    std::vector<RegionChange> region_changes;

    /// First step from which the label never changes again.
    long stabilization_step() const;
    const RegionLabel& final_region() const { return region_changes.back().region; }
    /// Number of label changes at steps strictly greater than t.
    std::size_t changes_after(long t) const;
};

/// T full-gradient steps w <- w - eta grad L(w) with a constant schedule. Stops early,
/// and records the stop, when the gradient is exactly zero.
Trajectory run_gd(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                  RecordPolicy policy = RecordPolicy::geometric());

/// T with-replacement SGD steps w <- w - eta_t grad l(w, z_xi_t) with a polynomial schedule.
/// xi_t is drawn from CounterRng(seed) at counter t.
Trajectory run_sgd(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                   std::uint64_t seed, RecordPolicy policy = RecordPolicy::geometric());

/// Across-seed statistics at one recorded step (standard errors use the n-1 variance).
struct EnsemblePoint {
    long t = 0;
    Vec mean_avg_w;
    Vec se_avg_w;
    double mean_avg_loss = 0.0;
    double se_avg_loss = 0.0;
    double mean_var_sum = 0.0;
    double se_var_sum = 0.0;
};

struct Ensemble {
    std::vector<std::uint64_t> seeds;
    std::vector<Trajectory> members;  ///< in seed order
    std::vector<EnsemblePoint> points;
    bool tainted = false;
};

/// Thread cap from MARGINLAB_THREADS, else the hardware concurrency (at least 1).
int ensemble_thread_cap();

/// Runs one SGD trajectory per seed (concurrently, up to max_threads; 0 means
/// ensemble_thread_cap()) and merges them in seed order.
Ensemble run_sgd_ensemble(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                          std::span<const std::uint64_t> seeds, RecordPolicy policy = RecordPolicy::geometric(),
                          int max_threads = 0);

struct EffectiveWeights {
    Vec current;  ///< sum_{k in pattern} v_k w_k(t)
    Vec average;  ///< the same combination of the running mean of W
};

struct NetRecord {
    long t = 0;
    Mat W;
    Mat avg_W;
    std::optional<Mat> W_next;  ///< W after the step taken at t (absent at the last step)
    double eta = 0.0;           ///< stepsize used at t
    std::optional<std::size_t> sample_index;  ///< SGD draw at t
    double loss = 0.0;
    bool overflow = false;
    std::vector<ActivationPattern> patterns;  ///< one per sample
    std::map<ActivationPattern, EffectiveWeights> effective;
};

struct NetTrajectory {
    Algorithm algorithm = Algorithm::GD;
    StepSchedule schedule = StepSchedule::constant(1.0);
    long horizon = 0;
    long steps_run = 0;
    bool tainted = false;
    std::uint64_t rng_seed = 0;
    Vec v;
    std::vector<NetRecord> records;
    /// Steps t >= 1 at which some sample's activation pattern differs from step t-1.
    std::vector<long> pattern_changes;
    Mat final_W;
};

/// Gradient descent on W only; v stays fixed.
NetTrajectory run_gd_net(const Dataset& ds, const MultiNeuronNet& net0, double eta, long horizon,
                         RecordPolicy policy = RecordPolicy::geometric());

NetTrajectory run_sgd_net(const Dataset& ds, const MultiNeuronNet& net0, StepSchedule schedule, long horizon,
                          std::uint64_t seed, RecordPolicy policy = RecordPolicy::geometric());

/// Net whose neurons with v_k > 0 start near the mean positive direction and neurons with
/// v_k < 0 near the mean negative direction (jittered, columns scaled to `scale`).
MultiNeuronNet make_cone_net(const Dataset& ds, const Vec& v, double scale, std::uint64_t seed);

}  // namespace marginlab
