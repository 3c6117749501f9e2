#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "marginlab/analysis.hpp"
#include "oracles.hpp"

using namespace marginlab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Series squared(const Series& s) {
    Series out;
    for (const auto& p : s) out.push_back({p.t, p.value * p.value});
    return out;
}

/// Last series value at or before step t.
double value_at_or_before(const Series& s, long t) {
    double v = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : s)
        if (p.t <= t) v = p.value;
    return v;
}

Outcome landscape() {
    const auto t0 = Clock::now();
    long exact = 0, checked_near = 0, formula_miss = 0, near_miss = 0, divergent_bad = 0;
    RngStream dirs(2024, 1);
    const std::vector<double> grid{1, 10, 100, 1000};
    for (std::uint64_t d = 0; d < 100; ++d) {
        RngStream shape(d, 2);
        const int n = 3 + static_cast<int>(shape.index(10));
        const int dim = 2 + static_cast<int>(shape.index(4));
        const Dataset ds = oracle::random_dataset(1000 + d, n, dim);
        for (int k = 0; k < 1000; ++k) {
            const Vec w = oracle::random_unit(dirs, dim);
            const LandscapeCase c = classify_direction(w, ds, grid);
            const double expected = oracle::relu_ray_limit(w, ds);
            if (c.limit_loss == expected)
                ++exact;
            else
                ++formula_miss;
            bool knife_edge = false;
            for (std::size_t i = 0; i < ds.size(); ++i) knife_edge = knife_edge || std::abs(ds.x(i).dot(w)) <= 1e-2;
            if (knife_edge) continue;
            const double at_1000 = oracle::loss(Vec(1000.0 * w), ds, 0.0);
            if (std::isinf(expected)) {
                if (!(at_1000 > c.scale_losses.front() && c.kind == LandscapeCase::Kind::Divergent)) ++divergent_bad;
                continue;
            }
            ++checked_near;
            if (std::abs(at_1000 - c.limit_loss) > 1e-3) ++near_miss;
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream msg;
    msg << exact << " exact limits, " << formula_miss << " mismatches, " << near_miss << "/" << checked_near
        << " off at scale 1e3, " << divergent_bad << " divergent misreads, " << secs << " s";
    return {formula_miss == 0 && near_miss == 0 && divergent_bad == 0 && secs < 10.0, msg.str()};
}

Outcome gradients() {
    const auto t0 = Clock::now();
    int checks = 0, failures = 0;
    double worst = 0.0;
    RngStream rng(77, 3);
    auto record = [&](const Vec& analytic, const Vec& fd) {
        const double rel = (analytic - fd).norm() / std::max(fd.norm(), 1e-8);
        worst = std::max(worst, rel);
        ++checks;
        if (!(rel < 1e-6)) ++failures;
    };
    const double lambdas[] = {0.0, 0.3, 1.0};
    while (checks < 750) {
        const Dataset ds = oracle::random_dataset(5000 + static_cast<std::uint64_t>(checks), 6, 3);
        const Vec w = oracle::random_unit(rng, 3) * rng.uniform(0.2, 2.0);
        bool near = false;
        for (std::size_t i = 0; i < ds.size(); ++i) near = near || std::abs(ds.x(i).dot(w)) < 1e-3;
        if (near) continue;
        const double lambda = lambdas[checks % 3];
        const ModelKind kind = lambda == 0.0 ? ModelKind::relu() : lambda == 1.0 ? ModelKind::linear()
                                                                                   : ModelKind::leaky(lambda);
        record(grad(w, ds, kind).value, oracle::fd_gradient([&](const Vec& u) { return oracle::loss(u, ds, lambda); }, w));
    }
    const Vec v = (Vec(4) << 1, 0.5, -1, -0.5).finished();
    while (checks < 1000) {
        const Dataset ds = oracle::random_dataset(9000 + static_cast<std::uint64_t>(checks), 6, 3);
        Mat W(3, 4);
        for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = rng.normal();
        bool near = false;
        for (std::size_t i = 0; i < ds.size(); ++i) near = near || (W.transpose() * ds.x(i)).cwiseAbs().minCoeff() < 1e-3;
        if (near) continue;
        const Mat g = net_grad(MultiNeuronNet(W, v), ds).value;
        const Vec fd = oracle::fd_gradient(
            [&](const Vec& u) {
                const MultiNeuronNet probe(Eigen::Map<const Mat>(u.data(), 3, 4), v);
                double total = 0.0;
                for (std::size_t i = 0; i < ds.size(); ++i) total += std::exp(-ds.y(i) * net_forward(probe, ds.x(i)));
                return total / static_cast<double>(ds.size());
            },
            Eigen::Map<const Vec>(W.data(), W.size()));
        record(Eigen::Map<const Vec>(g.data(), g.size()), fd);
    }
    const double secs = seconds_since(t0);
    std::ostringstream msg;
    msg << checks << " checks, " << failures << " above 1e-6, worst " << worst << ", " << secs << " s";
    return {failures == 0 && secs < 10.0, msg.str()};
}

Outcome margins() {
    const auto t0 = Clock::now();
    RngStream rng(31, 4);
    int gap_fail = 0, oracle_fail = 0, equiv_fail = 0;
    double worst_gamma = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const int n = 2 + static_cast<int>(rng.index(7));
        const double center = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double half = rng.uniform(0.05, 1.45);
        RowMatrix pts(n, 2);
        for (int i = 0; i < n; ++i) {
            const double a = center + rng.uniform(-half, half);
            const double r = rng.uniform(0.2, 3.0);
            pts(i, 0) = r * std::cos(a);
            pts(i, 1) = r * std::sin(a);
        }
        const MarginResult m = max_margin(pts);
        if (!m.certified || m.duality_gap > 1e-8) ++gap_fail;
        const double brute = oracle::angular_margin(pts, 1'000'000).gamma;
        worst_gamma = std::max(worst_gamma, std::abs(m.gamma - brute));
        if (std::abs(m.gamma - brute) > 1e-3) ++oracle_fail;

        const double c = rng.uniform(0.1, 10.0);
        const MarginResult scaled = max_margin(RowMatrix(c * pts));
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        Eigen::Matrix2d R;
        R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        const MarginResult rotated = max_margin(RowMatrix(pts * R.transpose()));
        const bool ok = std::abs(scaled.gamma - c * m.gamma) <= 1e-7 * std::max(1.0, c) &&
                        (scaled.direction - m.direction).norm() <= 1e-6 &&
                        std::abs(rotated.gamma - m.gamma) <= 1e-7 &&
                        (rotated.direction - R * m.direction).norm() <= 1e-6;
        if (!ok) ++equiv_fail;
    }
    const double secs = seconds_since(t0);
    std::ostringstream msg;
    msg << gap_fail << " gap failures, " << oracle_fail << " oracle misses (worst " << worst_gamma << "), "
        << equiv_fail << " equivariance failures, " << secs << " s";
    return {gap_fail == 0 && oracle_fail == 0 && equiv_fail == 0 && secs < 30.0, msg.str()};
}

Outcome example1() {
    const auto t0 = Clock::now();
    const Dataset ds = gen_example1();
    const Trajectory traj = run_gd(ds, ModelKind::relu(), (Vec(2) << 3.0, -1.0).finished(), StepSchedule::constant(0.1), 100'000);
    bool x2_negative = true;
    for (const auto& r : traj.records) x2_negative = x2_negative && r.w.dot(ds.x(1)) < 0.0;
    const RegimeReport rep = classify_trajectory(traj, ds);
    const bool regime_ok = rep.regime == RegimeReport::Regime::LocalMaxMargin &&
                           rep.active == std::vector<std::size_t>{0} && rep.target_membership;
    RateFit fit;
    if (rep.target_direction) fit = fit_rate(direction_error_series(traj, *rep.target_direction, false), RateModel::LogLogOverLog);
    const double secs = seconds_since(t0);
    std::ostringstream msg;
    msg << "regime " << to_string(rep.regime) << " on " << rep.final_region.str() << ", x2 always negative "
        << x2_negative << ", sup_ratio " << fit.sup_ratio << " over t in [" << fit.t_lo << ", " << fit.t_hi << "], "
        << secs << " s";
    return {x2_negative && regime_ok && fit.sup_ratio <= 1.5 && fit.points > 0 && secs < 60.0, msg.str()};
}

Outcome example2() {
    const auto t0 = Clock::now();
    const Dataset ds = gen_example2();
    const Trajectory traj = run_gd(ds, ModelKind::relu(), (Vec(2) << 0.0, 1.0).finished(), StepSchedule::constant(0.1), 100'000);
    const RegimeReport rep = classify_trajectory(traj, ds);
    const double secs = seconds_since(t0);
    std::ostringstream msg;
    msg << "regime " << to_string(rep.regime) << ", " << rep.region_flip_count << " flips in the final half, "
        << rep.total_flips << " total, " << secs << " s";
    return {rep.regime == RegimeReport::Regime::Oscillation && rep.region_flip_count >= 4 && !rep.stabilization_step &&
                secs < 60.0,
            msg.str()};
}

Outcome finite_termination() {
    int failures = 0;
    int cases = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngStream rng(seed, 5);
        RowMatrix pts(6, 3);
        for (Eigen::Index k = 0; k < pts.size(); ++k) pts.data()[k] = std::abs(rng.normal()) + 0.1;
        const Dataset ds(pts, {1, -1, 1, -1, 1, -1});
        Vec w0(3);
        for (int k = 0; k < 3; ++k) w0[k] = -(std::abs(rng.normal()) + 0.1);
        const Trajectory traj = run_gd(ds, ModelKind::relu(), w0, StepSchedule::constant(0.1), 1000);
        ++cases;
        const bool ok = traj.zero_gradient_stop && traj.steps_run == 0 && traj.records.back().loss == 1.0 &&
                        traj.final_w == w0 && traj.final_region() == RegionLabel::finite_local_min() &&
                        classify_trajectory(traj, ds).regime == RegimeReport::Regime::FiniteTermination;
        if (!ok) ++failures;
    }
    const Trajectory zero = run_gd(gen_example1(), ModelKind::relu(), Vec::Zero(2), StepSchedule::constant(0.1), 1000);
    ++cases;
    if (!(zero.zero_gradient_stop && zero.steps_run == 0 && zero.records.back().loss == 1.0)) ++failures;
    std::ostringstream msg;
    msg << cases - failures << "/" << cases << " runs stopped at step 0 with loss exactly 1";
    return {failures == 0, msg.str()};
}

struct CombesRun {
    Dataset ds;
    Ensemble ens;
    Vec target;
};

std::vector<CombesRun> combes_suite(double& seconds) {
    const auto t0 = Clock::now();
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(1000 + s);
    std::vector<CombesRun> runs;
    for (std::uint64_t d = 0; d < 10; ++d) {
        Dataset ds = gen_combes(5, 5, 3, 100 + d);
        RngStream rng(500 + d);
        Vec w0(3);
        RegionLabel::Kind kind;
        do {
            for (int k = 0; k < 3; ++k) w0[k] = 0.5 * rng.normal();
            kind = region_of(w0, ds).kind();
        } while (kind != RegionLabel::Kind::NegativeMisclassified && kind != RegionLabel::Kind::LocalRegion);
        Ensemble ens = run_sgd_ensemble(ds, ModelKind::relu(), w0, StepSchedule::polynomial(0.6), 1'000'000, seeds);
        Vec target = max_margin(ds.positive_points()).direction;
        runs.push_back({std::move(ds), std::move(ens), std::move(target)});
    }
    seconds = seconds_since(t0);
    return runs;
}

Outcome sgd_stability(const std::vector<CombesRun>& runs, double seconds) {
    int violations = 0;
    long latest = 0;
    for (const auto& run : runs)
        for (const auto& m : run.ens.members) {
            const long stab = m.stabilization_step();
            latest = std::max(latest, stab);
            bool ok = m.final_region() == RegionLabel::separable() && stab <= m.steps_run / 2 && !m.tainted;
            for (const auto& r : m.records)
                if (r.t >= stab && !(r.region == RegionLabel::separable())) ok = false;
            if (!ok) ++violations;
        }
    std::ostringstream msg;
    msg << violations << " violations over " << runs.size() * 20 << " runs, latest stabilization step " << latest
        << ", " << seconds << " s";
    return {violations == 0 && seconds < 300.0, msg.str()};
}

Outcome variance_shape(const std::vector<CombesRun>& runs) {
    int pass = 0;
    std::ostringstream ratios;
    for (const auto& run : runs) {
        try {
            const VarianceCheck v = verify_variance_bound(run.ens, run.ds);
            if (v.pass) ++pass;
            ratios << " " << v.window_max / v.window_median;
        } catch (const AnalysisRefused& e) {
            ratios << " refused";
        }
    }
    std::ostringstream msg;
    msg << pass << "/10 datasets pass; max/median:" << ratios.str();
    return {pass >= 9, msg.str()};
}

Outcome loss_rate(const std::vector<CombesRun>& runs) {
    int pass = 0;
    double worst_sup = 0.0, worst_floor = std::numeric_limits<double>::infinity();
    for (const auto& run : runs) {
        try {
            const RateFit f = fit_rate(excess_loss_series(run.ens, run.ds), RateModel::PolyLog, 0.6);
            const NormGrowth g = norm_growth(run.ens);
            worst_sup = std::max(worst_sup, f.sup_ratio);
            worst_floor = std::min(worst_floor, g.window_min / g.window_median);
            if (f.sup_ratio <= 2.0 && g.floor_ok) ++pass;
        } catch (const AnalysisRefused&) {
        }
    }
    std::ostringstream msg;
    msg << pass << "/10 datasets pass; worst sup_ratio " << worst_sup << ", worst norm floor ratio " << worst_floor;
    return {pass == 10, msg.str()};
}

Outcome implicit_bias(const std::vector<CombesRun>& runs) {
    int pass = 0;
    double worst_sup = 0.0;
    for (const auto& run : runs) {
        const Series err = direction_error_series(run.ens, run.target);
        try {
            const RateFit f = fit_rate(squared(err), RateModel::InvLog);
            worst_sup = std::max(worst_sup, f.sup_ratio);
            if (f.sup_ratio <= 2.0 && value_at_or_before(err, 1'000'000) < value_at_or_before(err, 1000)) ++pass;
        } catch (const AnalysisRefused&) {
        }
    }
    std::ostringstream msg;
    msg << pass << "/10 datasets pass; worst sup_ratio " << worst_sup;
    return {pass == 10, msg.str()};
}

Outcome leaky_reduction() {
    constexpr double lambda = 0.3;
    const Dataset ds = gen_combes(5, 5, 3, 11);
    const Dataset transformed = leaky_transform(ds, lambda);
    const Vec w0 = 0.1 * *check_combes(ds).separability_witness;
    const long T = 100'000;
    const Trajectory a = run_sgd(ds, ModelKind::leaky(lambda), w0, StepSchedule::polynomial(0.6), T, 5, RecordPolicy::linear(1));
    const Trajectory b = run_sgd(transformed, ModelKind::linear(), w0, StepSchedule::polynomial(0.6), T, 5, RecordPolicy::linear(1));
    double worst = 0.0;
    bool aligned = a.records.size() == b.records.size() && a.records.size() == static_cast<std::size_t>(T + 1);
    for (std::size_t r = 0; aligned && r < a.records.size(); ++r) {
        worst = std::max(worst, (a.records[r].w - b.records[r].w).norm() / a.records[r].w.norm());
        worst = std::max(worst, (a.records[r].avg_w - b.records[r].avg_w).norm() / a.records[r].avg_w.norm());
    }
    const bool separable_throughout = a.region_changes.size() == 1 && a.final_region() == RegionLabel::separable();
    std::ostringstream msg;
    msg << T << " steps compared, max relative deviation " << worst << ", separable throughout "
        << separable_throughout;
    return {aligned && worst <= 1e-12, msg.str()};
}

Outcome partitions() {
    const auto t0 = Clock::now();
    const Vec v = (Vec(4) << 1, 0.5, -1, -0.5).finished();
    int instances = 0, failures = 0;
    std::ostringstream detail;
    double worst_dev = 0.0;
    for (std::uint64_t d = 0; d < 3; ++d) {
        const Dataset ds = gen_combes(5, 5, 3, 200 + d);
        const MultiNeuronNet net0 = make_cone_net(ds, v, 0.5, d);
        const long T = 100'000;
        const NetTrajectory gd = run_gd_net(ds, net0, 0.1, T);
        const PartitionReport rep = verify_partition_claims(gd, ds, 1000);
        worst_dev = std::max(worst_dev, rep.max_recursion_deviation);
        bool decreasing = !rep.partitions.empty();
        for (const auto& p : rep.partitions)
            decreasing = decreasing && value_at_or_before(p.direction_error, T) < value_at_or_before(p.direction_error, T / 10);

        std::vector<NetTrajectory> members;
        for (std::uint64_t s = 0; s < 5; ++s)
            members.push_back(run_sgd_net(ds, net0, StepSchedule::polynomial(0.6), T, 7000 + s));
        const PartitionReport srep = verify_partition_claims(members.front(), ds, 1000);
        worst_dev = std::max(worst_dev, srep.max_recursion_deviation);
        bool sgd_decreasing = !srep.partitions.empty();
        for (const auto& s : ensemble_partition_errors(members, srep))
            sgd_decreasing = sgd_decreasing && !s.empty() && value_at_or_before(s, T) < value_at_or_before(s, T / 10);

        const bool ok = rep.disjointness_ok && rep.labels_uniform && rep.loss_below_inv_n_after.has_value() &&
                        rep.v_signs_uniform && rep.recursion_ok && decreasing && srep.disjointness_ok &&
                        srep.labels_uniform && srep.v_signs_uniform && srep.recursion_ok && sgd_decreasing;
        ++instances;
        if (!ok) {
            ++failures;
            detail << " [instance " << d << ": disjoint " << rep.disjointness_ok << "/" << srep.disjointness_ok
                   << " labels " << rep.labels_uniform << "/" << srep.labels_uniform << " v-signs " << rep.v_signs_uniform
                   << "/" << srep.v_signs_uniform << " recursion " << rep.recursion_ok << "/" << srep.recursion_ok
                   << " decreasing " << decreasing << "/" << sgd_decreasing << "]";
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream msg;
    msg << instances - failures << "/" << instances << " instances (GD and SGD) pass, worst recursion deviation "
        << worst_dev << ", " << secs << " s" << detail.str();
    return {failures == 0 && secs < 300.0, msg.str()};
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const char* name, const Outcome& o) {
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failed;
    };
    auto guarded = [](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("exception: ") + e.what()};
        }
    };
    report(1, "landscape exactness", guarded(landscape));
    report(2, "gradient correctness", guarded(gradients));
    report(3, "margin certification", guarded(margins));
    report(4, "example1 scenario", guarded(example1));
    report(5, "example2 scenario", guarded(example2));
    report(6, "finite termination", guarded(finite_termination));

    double combes_seconds = 0.0;
    std::vector<CombesRun> runs;
    std::string suite_error;
    try {
        runs = combes_suite(combes_seconds);
    } catch (const std::exception& e) {
        suite_error = e.what();
    }
    auto on_suite = [&](const std::function<Outcome()>& fn) {
        if (!suite_error.empty()) return Outcome{false, "combes suite failed: " + suite_error};
        return guarded(fn);
    };
    report(7, "SGD stability", on_suite([&] { return sgd_stability(runs, combes_seconds); }));
    report(8, "variance bound shape", on_suite([&] { return variance_shape(runs); }));
    report(9, "loss rate", on_suite([&] { return loss_rate(runs); }));
    report(10, "SGD implicit bias", on_suite([&] { return implicit_bias(runs); }));
    report(11, "leaky reduction", guarded(leaky_reduction));
    report(12, "multi-neuron partitions", guarded(partitions));
    std::printf("%d of 12 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
