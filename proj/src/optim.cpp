#include "marginlab/optim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

StepSchedule StepSchedule::constant(double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta))
        throw ParameterError("constant stepsize must be positive and finite, got " + format_double(eta));
    return StepSchedule(true, eta);
}

StepSchedule StepSchedule::polynomial(double alpha) {
    if (!(alpha > 0.5 && alpha < 1.0))
        throw ParameterError("polynomial schedule exponent must lie in (0.5, 1), got " + format_double(alpha));
    return StepSchedule(false, alpha);
}

double StepSchedule::at(long k) const noexcept {
    return constant_ ? value_ : std::pow(static_cast<double>(k + 1), -value_);
}

double default_gd_stepsize(const Dataset& ds) {
    const double b = ds.norm_bound();
    return b > 0.0 ? 0.1 / (b * b) : 0.1;
}

RecordPolicy RecordPolicy::geometric(double ratio) {
    if (!(ratio > 1.0) || !std::isfinite(ratio)) throw ParameterError("geometric record ratio must exceed 1");
    return RecordPolicy(true, ratio, 0);
}

RecordPolicy RecordPolicy::linear(long every) {
    if (every < 1) throw ParameterError("linear record stride must be at least 1");
    return RecordPolicy(false, 0.0, every);
}

std::vector<long> RecordPolicy::steps(long horizon) const {
    std::vector<long> out{0};
    if (geometric_) {
        for (int j = 0;; ++j) {
            const double v = std::ceil(std::pow(ratio_, j));
            if (v > static_cast<double>(horizon)) break;
            const long t = static_cast<long>(v);
            if (t != out.back()) out.push_back(t);
        }
    } else {
        for (long t = every_; t <= horizon; t += every_) out.push_back(t);
    }
    if (out.back() != horizon) out.push_back(horizon);
    return out;
}

long Trajectory::stabilization_step() const { return region_changes.empty() ? 0 : region_changes.back().t; }

std::size_t Trajectory::changes_after(long t) const {
    std::size_t count = 0;
    for (std::size_t k = 1; k < region_changes.size(); ++k)
        if (region_changes[k].t > t) ++count;
    return count;
}

namespace {

/// Tracks the region label step by step without allocating unless the label changes.
class RegionTracker {
public:
    explicit RegionTracker(const Dataset& ds) : ds_(ds), active_(ds.size(), 0), prev_active_(ds.size(), 0) {}

    /// Returns true when the label at step t differs from the previous step (always true at t = 0).
    bool update(const std::vector<double>& margins, long t, std::vector<RegionChange>& changes) {
        RegionLabel::Kind kind;
        bool any_neg = false, all_neg_strict = true;
        for (std::size_t i : ds_.negatives()) {
            if (margins[i] > 0.0) any_neg = true;
            if (!(margins[i] < 0.0)) all_neg_strict = false;
        }
        std::size_t n_active = 0;
        if (any_neg) {
            kind = RegionLabel::Kind::NegativeMisclassified;
        } else {
            for (std::size_t i : ds_.positives()) {
                active_[i] = margins[i] > 0.0;
                n_active += active_[i];
            }
            if (n_active == 0)
                kind = RegionLabel::Kind::FiniteLocalMin;
            else if (n_active == ds_.n_pos() && all_neg_strict)
                kind = RegionLabel::Kind::Separable;
            else
                kind = RegionLabel::Kind::LocalRegion;
        }
        bool changed = t == 0 || kind != prev_kind_;
        if (!changed && kind == RegionLabel::Kind::LocalRegion)
            for (std::size_t i : ds_.positives())
                if (active_[i] != prev_active_[i]) {
                    changed = true;
                    break;
                }
        if (!changed) return false;
        prev_kind_ = kind;
        if (kind == RegionLabel::Kind::LocalRegion) prev_active_ = active_;
        changes.push_back({t, label(kind)});
        return true;
    }

    RegionLabel current() const { return label(prev_kind_); }

private:
    RegionLabel label(RegionLabel::Kind kind) const {
        switch (kind) {
            case RegionLabel::Kind::Separable: return RegionLabel::separable();
            case RegionLabel::Kind::NegativeMisclassified: return RegionLabel::negative_misclassified();
            case RegionLabel::Kind::FiniteLocalMin: return RegionLabel::finite_local_min();
            case RegionLabel::Kind::LocalRegion: break;
        }
        std::vector<std::size_t> act;
        for (std::size_t i : ds_.positives())
            if (prev_active_[i]) act.push_back(i);
        return RegionLabel::local_region(std::move(act));
    }

    const Dataset& ds_;
    std::vector<char> active_;
    std::vector<char> prev_active_;
    RegionLabel::Kind prev_kind_ = RegionLabel::Kind::FiniteLocalMin;
};

void check_run_args(const Dataset& ds, const Vec& w0, long horizon, const char* who) {
    if (w0.size() != ds.dim())
        throw ParameterError(std::string(who) + ": w0 has dimension " + std::to_string(w0.size()) +
                             ", dataset has " + std::to_string(ds.dim()));
    if (!w0.allFinite()) throw ParameterError(std::string(who) + ": w0 is not finite");
    if (horizon < 1) throw ParameterError(std::string(who) + ": horizon must be at least 1");
}

void compute_margins(const Dataset& ds, const Vec& w, std::vector<double>& m) {
    for (std::size_t i = 0; i < ds.size(); ++i) m[i] = ds.points().row(static_cast<Eigen::Index>(i)).dot(w);
}

TrajectoryRecord make_record(const Dataset& ds, ModelKind kind, long t, const Vec& w, const Vec& avg,
                             const RegionLabel& region, double var_sum, bool step_overflow) {
    TrajectoryRecord r;
    r.t = t;
    r.w = w;
    r.avg_w = avg;
    const LossValue lw = loss(w, ds, kind);
    const LossValue la = loss(avg, ds, kind);
    r.loss = lw.value;
    r.avg_loss = la.value;
    r.norm = w.norm();
    r.region = region;
    r.var_sum = var_sum;
    r.overflow = lw.overflow || la.overflow || step_overflow;
    return r;
}

/// Shared driver for single-neuron GD and SGD. `step` fills the update direction for step t
/// and returns false on a zero-gradient stop.
template <class Step>
Trajectory run_single(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                      RecordPolicy policy, Algorithm algorithm, std::uint64_t seed, Step&& step) {
    Trajectory traj;
    traj.algorithm = algorithm;
    traj.kind = kind;
    traj.schedule = schedule;
    traj.horizon = horizon;
    traj.rng_seed = seed;
    traj.initial_w = w0;

    const std::vector<long> record_steps = policy.steps(horizon);
    traj.records.reserve(record_steps.size());
    std::size_t next_record = 0;

    Vec w = w0;
    Vec avg = w0;
    Vec update(ds.dim());
    std::vector<double> margins(ds.size());
    RegionTracker tracker(ds);
    double var_sum = 0.0;
    bool step_overflow = false;

    for (long t = 0;; ++t) {
        compute_margins(ds, w, margins);
        tracker.update(margins, t, traj.region_changes);
        const bool record = next_record < record_steps.size() && record_steps[next_record] == t;
        if (record) {
            traj.records.push_back(make_record(ds, kind, t, w, avg, tracker.current(), var_sum, step_overflow));
            traj.tainted = traj.tainted || traj.records.back().overflow;
            step_overflow = false;
            ++next_record;
        }
        if (t == horizon) {
            traj.steps_run = horizon;
            break;
        }
        bool overflow = false;
        double sq_norm = 0.0;
        if (!step(t, w, margins, update, overflow, sq_norm)) {
            traj.zero_gradient_stop = true;
            traj.steps_run = t;
            if (!record) {
                traj.records.push_back(make_record(ds, kind, t, w, avg, tracker.current(), var_sum, step_overflow));
                traj.tainted = traj.tainted || traj.records.back().overflow;
            }
            break;
        }
        if (overflow) {
            step_overflow = true;
            traj.tainted = true;
        }
        const double eta = schedule.at(t);
        if (algorithm == Algorithm::SGD) var_sum += eta * eta * sq_norm;
        avg += (w - avg) / static_cast<double>(t + 1);
        w.noalias() -= eta * update;
    }
    traj.final_w = w;
    return traj;
}

}  // namespace

Trajectory run_gd(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                  RecordPolicy policy) {
    check_run_args(ds, w0, horizon, "run_gd");
    if (!schedule.is_constant()) throw ParameterError("run_gd: gradient descent takes a constant stepsize");
    auto step = [&](long, const Vec&, const std::vector<double>& m, Vec& g, bool& overflow, double&) {
        g.setZero();
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double c = sample_grad_coefficient(m[i], ds.y(i), kind, overflow);
            g += c * ds.points().row(static_cast<Eigen::Index>(i)).transpose();
        }
        g /= static_cast<double>(ds.size());
        return !(g.array() == 0.0).all();
    };
    return run_single(ds, kind, w0, schedule, horizon, policy, Algorithm::GD, 0, step);
}

Trajectory run_sgd(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                   std::uint64_t seed, RecordPolicy policy) {
    check_run_args(ds, w0, horizon, "run_sgd");
    if (schedule.is_constant()) throw ParameterError("run_sgd: SGD takes a polynomial schedule");
    const CounterRng rng(seed);
    auto step = [&](long t, const Vec&, const std::vector<double>& m, Vec& g, bool& overflow, double& sq_norm) {
        const std::size_t xi = rng.index(static_cast<std::uint64_t>(t), ds.size());
        const double c = sample_grad_coefficient(m[xi], ds.y(xi), kind, overflow);
        g = c * ds.points().row(static_cast<Eigen::Index>(xi)).transpose();
        sq_norm = g.squaredNorm();
        return true;
    };
    return run_single(ds, kind, w0, schedule, horizon, policy, Algorithm::SGD, seed, step);
}

int ensemble_thread_cap() {
    if (const char* env = std::getenv("MARGINLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 1024L));
    }
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

Ensemble run_sgd_ensemble(const Dataset& ds, ModelKind kind, const Vec& w0, StepSchedule schedule, long horizon,
                          std::span<const std::uint64_t> seeds, RecordPolicy policy, int max_threads) {
    if (seeds.size() < 2) throw ParameterError("run_sgd_ensemble: at least two seeds are required");
    check_run_args(ds, w0, horizon, "run_sgd_ensemble");
    if (schedule.is_constant()) throw ParameterError("run_sgd_ensemble: SGD takes a polynomial schedule");

    Ensemble ens;
    ens.seeds.assign(seeds.begin(), seeds.end());
    ens.members.resize(seeds.size());

    const int threads =
        std::max(1, std::min<int>(max_threads > 0 ? max_threads : ensemble_thread_cap(), static_cast<int>(seeds.size())));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < seeds.size();) {
            try {
                ens.members[k] = run_sgd(ds, kind, w0, schedule, horizon, seeds[k], policy);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    const std::size_t m = ens.members.size();
    const std::size_t n_rec = ens.members.front().records.size();
    for (const auto& member : ens.members) ens.tainted = ens.tainted || member.tainted;

    ens.points.reserve(n_rec);
    for (std::size_t r = 0; r < n_rec; ++r) {
        EnsemblePoint pt;
        pt.t = ens.members.front().records[r].t;
        pt.mean_avg_w = Vec::Zero(ds.dim());
        for (const auto& member : ens.members) {
            const auto& rec = member.records[r];
            pt.mean_avg_w += rec.avg_w;
            pt.mean_avg_loss += rec.avg_loss;
            pt.mean_var_sum += rec.var_sum;
        }
        const double dm = static_cast<double>(m);
        pt.mean_avg_w /= dm;
        pt.mean_avg_loss /= dm;
        pt.mean_var_sum /= dm;
        Vec var_w = Vec::Zero(ds.dim());
        double var_loss = 0.0, var_vs = 0.0;
        for (const auto& member : ens.members) {
            const auto& rec = member.records[r];
            var_w += (rec.avg_w - pt.mean_avg_w).cwiseAbs2();
            var_loss += (rec.avg_loss - pt.mean_avg_loss) * (rec.avg_loss - pt.mean_avg_loss);
            var_vs += (rec.var_sum - pt.mean_var_sum) * (rec.var_sum - pt.mean_var_sum);
        }
        const double denom = dm * (dm - 1.0);
        pt.se_avg_w = (var_w / denom).cwiseSqrt();
        pt.se_avg_loss = std::sqrt(var_loss / denom);
        pt.se_var_sum = std::sqrt(var_vs / denom);
        ens.points.push_back(std::move(pt));
    }
    return ens;
}

namespace {

void patterns_of(const Dataset& ds, const Mat& W, std::vector<ActivationPattern>& out) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ActivationPattern p = 0;
        const auto xi = ds.points().row(static_cast<Eigen::Index>(i));
        for (Eigen::Index k = 0; k < W.cols(); ++k)
            if (xi.dot(W.col(k)) > 0.0) p |= ActivationPattern{1} << k;
        out[i] = p;
    }
}

template <class Step>
NetTrajectory run_net(const Dataset& ds, const MultiNeuronNet& net0, StepSchedule schedule, long horizon,
                      RecordPolicy policy, Algorithm algorithm, std::uint64_t seed, Step&& step) {
    if (net0.dim() != ds.dim()) throw ParameterError("net runner: net and dataset dimensions differ");
    if (horizon < 1) throw ParameterError("net runner: horizon must be at least 1");
    NetTrajectory traj;
    traj.algorithm = algorithm;
    traj.schedule = schedule;
    traj.horizon = horizon;
    traj.rng_seed = seed;
    traj.v = net0.v();

    const std::vector<long> record_steps = policy.steps(horizon);
    std::size_t next_record = 0;
    MultiNeuronNet net = net0;
    Mat avg = net.W();
    Mat G(net.dim(), net.hidden());
    std::vector<ActivationPattern> patterns(ds.size()), prev(ds.size());

    for (long t = 0;; ++t) {
        patterns_of(ds, net.W(), patterns);
        if (t > 0 && patterns != prev) traj.pattern_changes.push_back(t);
        std::swap(patterns, prev);

        const bool record = next_record < record_steps.size() && record_steps[next_record] == t;
        if (record) {
            NetRecord r;
            r.t = t;
            r.W = net.W();
            r.avg_W = avg;
            const LossValue lv = net_loss(net, ds);
            r.loss = lv.value;
            r.overflow = lv.overflow;
            r.patterns = prev;
            for (ActivationPattern h : prev)
                if (!r.effective.count(h))
                    r.effective[h] = {effective_weight(r.W, traj.v, h), effective_weight(avg, traj.v, h)};
            traj.tainted = traj.tainted || r.overflow;
            traj.records.push_back(std::move(r));
            ++next_record;
        }
        if (t == horizon) break;

        bool overflow = false;
        std::optional<std::size_t> sample;
        step(t, net, G, overflow, sample);
        traj.tainted = traj.tainted || overflow;
        const double eta = schedule.at(t);
        avg += (net.W() - avg) / static_cast<double>(t + 1);
        net.W().noalias() -= eta * G;
        if (record) {
            auto& r = traj.records.back();
            r.W_next = net.W();
            r.eta = eta;
            r.sample_index = sample;
            r.overflow = r.overflow || overflow;
        }
    }
    traj.steps_run = horizon;
    traj.final_W = net.W();
    return traj;
}

}  // namespace

NetTrajectory run_gd_net(const Dataset& ds, const MultiNeuronNet& net0, double eta, long horizon, RecordPolicy policy) {
    const StepSchedule schedule = StepSchedule::constant(eta);
    auto step = [&](long, const MultiNeuronNet& net, Mat& G, bool& overflow, std::optional<std::size_t>&) {
        NetGradValue g = net_grad(net, ds);
        G = g.value;
        overflow = g.overflow;
    };
    return run_net(ds, net0, schedule, horizon, policy, Algorithm::GD, 0, step);
}

NetTrajectory run_sgd_net(const Dataset& ds, const MultiNeuronNet& net0, StepSchedule schedule, long horizon,
                          std::uint64_t seed, RecordPolicy policy) {
    if (schedule.is_constant()) throw ParameterError("run_sgd_net: SGD takes a polynomial schedule");
    const CounterRng rng(seed);
    auto step = [&](long t, const MultiNeuronNet& net, Mat& G, bool& overflow, std::optional<std::size_t>& sample) {
        const std::size_t xi = rng.index(static_cast<std::uint64_t>(t), ds.size());
        NetGradValue g = net_sample_grad(net, ds.x(xi), ds.y(xi));
        G = g.value;
        overflow = g.overflow;
        sample = xi;
    };
    return run_net(ds, net0, schedule, horizon, policy, Algorithm::SGD, seed, step);
}

MultiNeuronNet make_cone_net(const Dataset& ds, const Vec& v, double scale, std::uint64_t seed) {
    if (!(scale > 0.0)) throw ParameterError("make_cone_net: scale must be positive");
    Vec mu_pos = Vec::Zero(ds.dim()), mu_neg = Vec::Zero(ds.dim());
    for (std::size_t i : ds.positives()) mu_pos += ds.x(i);
    for (std::size_t i : ds.negatives()) mu_neg += ds.x(i);
    if (mu_pos.norm() == 0.0 || mu_neg.norm() == 0.0)
        throw ParameterError("make_cone_net: a class has zero mean direction");
    mu_pos.normalize();
    mu_neg.normalize();
    RngStream rng(seed, /*stream=*/3);
    Mat W(ds.dim(), v.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        Vec col = v[k] > 0.0 ? mu_pos : mu_neg;
        for (Eigen::Index j = 0; j < col.size(); ++j) col[j] += 0.1 * rng.normal();
        W.col(k) = scale * col.normalized();
    }
    return MultiNeuronNet(std::move(W), v);
}

}  // namespace marginlab
