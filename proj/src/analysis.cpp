#include "marginlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"

namespace marginlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
    return 0.5 * (lo + hi);
}

/// Last ceil(fraction * size) entries (at least one).
std::size_t window_start(std::size_t size, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("window fraction must lie in (0, 1]");
    const auto len = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(size)));
    return size - std::clamp<std::size_t>(len, 1, size);
}

MarginResult solve_or_best(const RowMatrix& pts, const MarginOptions& options, std::vector<std::string>* notes) {
    try {
        return max_margin(pts, options);
    } catch (const ConvergenceError& e) {
        if (notes) notes->push_back(std::string("margin solver: ") + e.what());
        return e.best();
    }
}

}  // namespace

RowMatrix target_points(const Dataset& ds, ModelKind kind) {
    switch (kind.activation()) {
        case ModelKind::Activation::ReLU: return ds.positive_points();
        case ModelKind::Activation::Linear: return ds.signed_points();
        case ModelKind::Activation::Leaky: return leaky_transform(ds, kind.lambda()).signed_points();
    }
    return ds.signed_points();
}

std::string to_string(LandscapeCase::Kind kind) {
    switch (kind) {
        case LandscapeCase::Kind::Global: return "global";
        case LandscapeCase::Kind::AsymptoticLocal: return "asymptotic_local";
        case LandscapeCase::Kind::FiniteLocal: return "finite_local";
        case LandscapeCase::Kind::Divergent: return "divergent";
    }
    return "?";
}

LandscapeCase classify_direction(const Vec& w, const Dataset& ds, std::span<const double> scale_grid) {
    if (w.size() != ds.dim()) throw ParameterError("classify_direction: dimension mismatch");
    if (scale_grid.empty() || !std::is_sorted(scale_grid.begin(), scale_grid.end()) || !(scale_grid.front() > 0.0))
        throw ParameterError("classify_direction: scale grid must be positive and increasing");
    const double n = static_cast<double>(ds.size());
    const double n_neg = static_cast<double>(ds.n_neg());
    const double n_pos = static_cast<double>(ds.n_pos());

    LandscapeCase out;
    const RegionLabel label = region_of(w, ds);
    switch (label.kind()) {
        case RegionLabel::Kind::Separable:
            out.kind = LandscapeCase::Kind::Global;
            out.limit_loss = n_neg / n;
            break;
        case RegionLabel::Kind::LocalRegion:
            out.kind = LandscapeCase::Kind::AsymptoticLocal;
            out.active = label.active();
            out.limit_loss = n_neg / n + (n_pos - static_cast<double>(out.active.size())) / n;
            break;
        case RegionLabel::Kind::FiniteLocalMin:
            out.kind = LandscapeCase::Kind::FiniteLocal;
            out.limit_loss = 1.0;
            break;
        case RegionLabel::Kind::NegativeMisclassified:
            out.kind = LandscapeCase::Kind::Divergent;
            out.limit_loss = std::numeric_limits<double>::infinity();
            break;
    }

    out.scales.assign(scale_grid.begin(), scale_grid.end());
    double prev = std::numeric_limits<double>::infinity();
    for (double s : scale_grid) {
        const double l = loss(Vec(s * w), ds, ModelKind::relu()).value;
        out.scale_losses.push_back(l);
        if (out.kind == LandscapeCase::Kind::Divergent) {
            if (out.scale_losses.size() > 1 && l < out.scale_losses[out.scale_losses.size() - 2])
                out.approach_monotone = false;
        } else {
            const double dev = std::abs(l - out.limit_loss);
            if (dev > prev) out.approach_monotone = false;
            prev = dev;
        }
    }
    return out;
}

std::string to_string(RegimeReport::Regime regime) {
    switch (regime) {
        case RegimeReport::Regime::GlobalMaxMargin: return "global_max_margin";
        case RegimeReport::Regime::Oscillation: return "oscillation";
        case RegimeReport::Regime::LocalMaxMargin: return "local_max_margin";
        case RegimeReport::Regime::FiniteTermination: return "finite_termination";
        case RegimeReport::Regime::Undetermined: return "undetermined";
    }
    return "?";
}

RegimeReport classify_trajectory(const Trajectory& traj, const Dataset& ds, std::size_t flip_threshold,
                                 const MarginOptions& margin_options) {
    if (traj.tainted) throw AnalysisRefused("classify_trajectory: trajectory hit the exponent cap");
    if (traj.records.size() < 10 && !traj.zero_gradient_stop)
        throw AnalysisRefused("classify_trajectory: need at least 10 records, got " +
                              std::to_string(traj.records.size()));
    if (traj.region_changes.empty()) throw AnalysisRefused("classify_trajectory: no region history");

    RegimeReport rep;
    rep.final_region = traj.final_region();
    rep.total_flips = traj.region_changes.size() - 1;
    rep.final_direction_error = kNaN;

    if (traj.zero_gradient_stop) {
        rep.regime = RegimeReport::Regime::FiniteTermination;
        rep.stabilization_step = traj.stabilization_step();
        rep.notes.push_back("zero gradient at step " + std::to_string(traj.steps_run));
        return rep;
    }

    rep.region_flip_count = traj.changes_after(traj.steps_run / 2);
    const bool stabilized = rep.region_flip_count == 0;
    if (!stabilized) {
        if (rep.region_flip_count >= flip_threshold) {
            rep.regime = RegimeReport::Regime::Oscillation;
            rep.notes.push_back("oscillation is inferred from " + std::to_string(rep.region_flip_count) +
                                " region changes in the final half of the run; a long transient looks the same");
        } else {
            rep.notes.push_back("region changed " + std::to_string(rep.region_flip_count) +
                                " times in the final half, below the oscillation threshold " +
                                std::to_string(flip_threshold));
        }
        return rep;
    }

    rep.stabilization_step = traj.stabilization_step();
    switch (rep.final_region.kind()) {
        case RegionLabel::Kind::Separable: {
            rep.regime = RegimeReport::Regime::GlobalMaxMargin;
            const MarginResult m = solve_or_best(target_points(ds, traj.kind), margin_options, &rep.notes);
            rep.target_direction = m.direction;
            rep.target_in_separable_region = region_of(m.direction, ds) == RegionLabel::separable();
            if (!rep.target_in_separable_region)
                rep.notes.push_back("max-margin direction lies outside the separable region");
            break;
        }
        case RegionLabel::Kind::LocalRegion: {
            rep.regime = RegimeReport::Regime::LocalMaxMargin;
            rep.active = rep.final_region.active();
            std::vector<std::string>* notes = &rep.notes;
            LocalMargin lm;
            try {
                lm = local_margin(ds, rep.active, margin_options);
            } catch (const ConvergenceError& e) {
                notes->push_back(std::string("margin solver: ") + e.what());
                lm.margin = e.best();
                lm.membership = in_local_region(lm.margin.direction, ds, rep.active);
            }
            rep.target_direction = lm.margin.direction;
            rep.target_membership = lm.membership;
            if (!lm.membership) rep.notes.push_back("local max-margin direction is not in its local region");
            break;
        }
        case RegionLabel::Kind::FiniteLocalMin:
            rep.notes.push_back("settled with no active sample but a nonzero gradient history");
            break;
        case RegionLabel::Kind::NegativeMisclassified:
            rep.notes.push_back("settled with a misclassified negative sample");
            break;
    }
    if (rep.target_direction) rep.final_direction_error = direction_error(traj.final_w, *rep.target_direction);
    return rep;
}

double direction_error(const Vec& u, const Vec& target) {
    if (u.size() != target.size()) throw ParameterError("direction_error: dimension mismatch");
    const double nrm = u.norm();
    if (nrm < 1e-12) return kNaN;
    return (u / nrm - target).norm();
}

Series direction_error_series(const Trajectory& traj, const Vec& target, bool use_average) {
    Series out;
    out.reserve(traj.records.size());
    for (const auto& r : traj.records) {
        const Vec& u = use_average ? r.avg_w : r.w;
        if (u.norm() < 1e-12) continue;
        out.push_back({r.t, direction_error(u, target)});
    }
    return out;
}

Series direction_error_series(const Ensemble& ensemble, const Vec& target) {
    Series out;
    out.reserve(ensemble.points.size());
    for (const auto& p : ensemble.points) {
        if (p.mean_avg_w.norm() < 1e-12) continue;
        out.push_back({p.t, direction_error(p.mean_avg_w, target)});
    }
    return out;
}

std::string to_string(RateModel model) {
    switch (model) {
        case RateModel::InvLog: return "inv_log";
        case RateModel::LogLogOverLog: return "loglog_over_log";
        case RateModel::PolyLog: return "poly_log";
    }
    return "?";
}

RateModel parse_rate_model(const std::string& name) {
    if (name == "inv_log") return RateModel::InvLog;
    if (name == "loglog_over_log") return RateModel::LogLogOverLog;
    if (name == "poly_log") return RateModel::PolyLog;
    throw ParameterError("unknown rate model '" + name + "' (inv_log, loglog_over_log, poly_log)");
}

double rate_model_value(RateModel model, double t, double alpha) {
    const double lt = std::log(t);
    switch (model) {
        case RateModel::InvLog: return 1.0 / lt;
        case RateModel::LogLogOverLog: return std::log(lt) / lt;
        case RateModel::PolyLog: return lt * lt / std::pow(t, 1.0 - alpha);
    }
    return kNaN;
}

RateFit fit_rate(const Series& series, RateModel model, std::optional<double> alpha, double window_fraction) {
    if (model == RateModel::PolyLog && !alpha) throw ParameterError("fit_rate: the poly_log model needs alpha");
    RateFit fit;
    fit.model = model;
    fit.alpha = alpha.value_or(0.0);

    // Only steps where every model is positive and finite (t >= 3, so ln ln t > 0).
    Series usable;
    for (const auto& p : series)
        if (p.t >= 3) usable.push_back(p);
    if (usable.size() < 2) throw AnalysisRefused("fit_rate: fewer than two usable points (t >= 3)");
    const std::size_t start = window_start(usable.size(), window_fraction);

    double rmax = -std::numeric_limits<double>::infinity();
    double rmin = std::numeric_limits<double>::infinity();
    for (std::size_t k = start; k < usable.size(); ++k) {
        const auto& p = usable[k];
        if (!(p.value > 0.0) || !std::isfinite(p.value))
            throw AnalysisRefused("fit_rate: non-positive value " + format_double(p.value) + " at t = " +
                                  std::to_string(p.t));
        const double r = p.value / rate_model_value(model, static_cast<double>(p.t), fit.alpha);
        rmax = std::max(rmax, r);
        rmin = std::min(rmin, r);
    }
    fit.coefficient = 0.5 * (rmax + rmin);
    fit.sup_ratio = rmax / fit.coefficient;
    fit.spread = rmax / rmin;
    fit.t_lo = usable[start].t;
    fit.t_hi = usable.back().t;
    fit.points = usable.size() - start;
    return fit;
}

namespace {

VarianceCheck variance_from(const std::vector<std::pair<long, double>>& var_sums, long stab, double gamma,
                            double cap) {
    VarianceCheck out;
    out.stabilization_step = stab;
    out.gamma = gamma;
    for (const auto& [t, vs] : var_sums)
        if (t > stab && t >= 2) out.ratios.push_back({t, vs / std::log(static_cast<double>(t))});
    if (out.ratios.size() < 2)
        throw AnalysisRefused("verify_variance_bound: fewer than two records after stabilization at step " +
                              std::to_string(stab));
    const std::size_t start = window_start(out.ratios.size(), 0.5);
    std::vector<double> window;
    for (std::size_t k = start; k < out.ratios.size(); ++k) window.push_back(out.ratios[k].value);
    out.window_max = *std::max_element(window.begin(), window.end());
    out.window_median = median(window);
    out.pass = out.window_max <= cap * out.window_median;
    return out;
}

double region_gamma(const RegionLabel& region, const Dataset& ds, ModelKind kind) {
    RowMatrix pts;
    if (region.kind() == RegionLabel::Kind::Separable)
        pts = kind.activation() == ModelKind::Activation::ReLU ? ds.signed_points() : target_points(ds, kind);
    else if (region.kind() == RegionLabel::Kind::LocalRegion)
        pts = ds.rows(region.active());
    else
        throw AnalysisRefused("verify_variance_bound: run settled in region " + region.str() +
                              ", which has no margin");
    return solve_or_best(pts, {}, nullptr).gamma;
}

void check_sgd_stabilized(const Trajectory& traj) {
    if (traj.algorithm != Algorithm::SGD || traj.schedule.is_constant())
        throw AnalysisRefused("verify_variance_bound: needs an SGD run with a polynomial schedule");
    if (traj.tainted) throw AnalysisRefused("verify_variance_bound: trajectory hit the exponent cap");
    if (traj.changes_after(traj.steps_run / 2) != 0)
        throw AnalysisRefused("verify_variance_bound: region has not stabilized (" +
                              std::to_string(traj.changes_after(traj.steps_run / 2)) +
                              " changes in the final half)");
}

}  // namespace

VarianceCheck verify_variance_bound(const Trajectory& traj, const Dataset& ds, double cap) {
    check_sgd_stabilized(traj);
    std::vector<std::pair<long, double>> vs;
    for (const auto& r : traj.records) vs.emplace_back(r.t, r.var_sum);
    return variance_from(vs, traj.stabilization_step(), region_gamma(traj.final_region(), ds, traj.kind), cap);
}

VarianceCheck verify_variance_bound(const Ensemble& ensemble, const Dataset& ds, double cap) {
    if (ensemble.members.empty()) throw AnalysisRefused("verify_variance_bound: empty ensemble");
    long stab = 0;
    for (const auto& m : ensemble.members) {
        check_sgd_stabilized(m);
        if (!(m.final_region() == ensemble.members.front().final_region()))
            throw AnalysisRefused("verify_variance_bound: ensemble members settled in different regions");
        stab = std::max(stab, m.stabilization_step());
    }
    std::vector<std::pair<long, double>> vs;
    for (const auto& p : ensemble.points) vs.emplace_back(p.t, p.mean_var_sum);
    const auto& first = ensemble.members.front();
    return variance_from(vs, stab, region_gamma(first.final_region(), ds, first.kind), cap);
}

NormGrowth norm_growth(const Series& norms, double floor_fraction, double window_fraction) {
    NormGrowth out;
    for (const auto& p : norms)
        if (p.t >= 2) out.ratios.push_back({p.t, p.value / std::log(static_cast<double>(p.t))});
    if (out.ratios.size() < 3) throw AnalysisRefused("norm_growth: need at least three entries with t >= 2");
    const std::size_t start = window_start(out.ratios.size(), window_fraction);
    std::vector<double> window;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t count = 0;
    for (std::size_t k = start; k < out.ratios.size(); ++k) {
        window.push_back(out.ratios[k].value);
        const double x = std::log(static_cast<double>(out.ratios[k].t));
        const double y = out.ratios[k].value * x;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    out.window_min = *std::min_element(window.begin(), window.end());
    out.window_median = median(window);
    out.floor_ok = out.window_min >= floor_fraction * out.window_median && out.window_median > 0.0;
    const double c = static_cast<double>(count);
    const double denom = c * sxx - sx * sx;
    out.log_slope = count >= 2 && denom > 0.0 ? (c * sxy - sx * sy) / denom : 0.0;
    out.pass = out.floor_ok && out.log_slope > 0.0;
    return out;
}

NormGrowth norm_growth(const Trajectory& traj, double floor_fraction, double window_fraction) {
    Series norms;
    for (const auto& r : traj.records) norms.push_back({r.t, r.avg_w.norm()});
    return norm_growth(norms, floor_fraction, window_fraction);
}

NormGrowth norm_growth(const Ensemble& ensemble, double floor_fraction, double window_fraction) {
    Series norms;
    for (const auto& p : ensemble.points) norms.push_back({p.t, p.mean_avg_w.norm()});
    return norm_growth(norms, floor_fraction, window_fraction);
}

Series excess_loss_series(const Ensemble& ensemble, const Dataset& ds) {
    const double floor = static_cast<double>(ds.n_neg()) / static_cast<double>(ds.size());
    Series out;
    for (const auto& p : ensemble.points) out.push_back({p.t, p.mean_avg_loss - floor});
    return out;
}

PartitionReport verify_partition_claims(const NetTrajectory& traj, const Dataset& ds, long reference_step,
                                        const MarginOptions& margin_options) {
    const auto ref_it = std::find_if(traj.records.begin(), traj.records.end(),
                                     [&](const NetRecord& r) { return r.t >= reference_step; });
    if (ref_it == traj.records.end())
        throw AnalysisRefused("verify_partition_claims: no record at or after step " + std::to_string(reference_step));
    const std::size_t r0 = static_cast<std::size_t>(ref_it - traj.records.begin());
    const NetRecord& ref = *ref_it;
    const int K = static_cast<int>(traj.v.size());
    const double n = static_cast<double>(ds.size());

    PartitionReport rep;
    rep.reference_step = ref.t;
    rep.reference_loss = ref.loss;

    std::map<ActivationPattern, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ref.patterns.size(); ++i) groups[ref.patterns[i]].push_back(i);

    std::size_t covered = 0;
    rep.labels_uniform = true;
    rep.v_signs_uniform = true;
    for (auto& [h, samples] : groups) {
        Partition part;
        part.pattern = h;
        part.samples = samples;
        covered += samples.size();
        const int y0 = ds.y(samples.front());
        part.label = std::all_of(samples.begin(), samples.end(), [&](std::size_t i) { return ds.y(i) == y0; }) ? y0 : 0;
        rep.labels_uniform = rep.labels_uniform && part.label != 0;
        int sign = 0;
        part.v_sign_uniform = true;
        for (int k = 0; k < K; ++k) {
            if (!(h >> k & 1U)) continue;
            const int s = traj.v[k] > 0.0 ? 1 : -1;
            if (sign != 0 && s != sign) part.v_sign_uniform = false;
            sign = s;
        }
        rep.v_signs_uniform = rep.v_signs_uniform && part.v_sign_uniform;

        RowMatrix pts(static_cast<Eigen::Index>(samples.size()), ds.dim());
        for (std::size_t k = 0; k < samples.size(); ++k)
            pts.row(static_cast<Eigen::Index>(k)) = ds.y(samples[k]) * ds.points().row(static_cast<Eigen::Index>(samples[k]));
        part.margin = solve_or_best(pts, margin_options, nullptr);

        for (std::size_t r = r0; r < traj.records.size(); ++r) {
            const NetRecord& rec = traj.records[r];
            const Mat& W = traj.algorithm == Algorithm::GD ? rec.W : rec.avg_W;
            const Vec u = effective_weight(W, traj.v, h);
            if (u.norm() < 1e-12) continue;
            part.direction_error.push_back({rec.t, direction_error(u, part.margin->direction)});
        }
        rep.partitions.push_back(std::move(part));
    }
    rep.covers_all_samples = covered == ds.size();

    rep.disjointness_ok = true;
    for (std::size_t a = 0; a < rep.partitions.size(); ++a)
        for (std::size_t b = a + 1; b < rep.partitions.size(); ++b)
            if (rep.partitions[a].pattern & rep.partitions[b].pattern) rep.disjointness_ok = false;

    rep.pattern_stable_after = traj.pattern_changes.empty() ? 0L : traj.pattern_changes.back();
    for (long t : traj.pattern_changes)
        if (t > ref.t) {
            rep.first_pattern_violation = t;
            break;
        }
    rep.patterns_stable = !rep.first_pattern_violation;

    for (std::size_t r = traj.records.size(); r-- > 0;) {
        if (!(traj.records[r].loss < 1.0 / n)) break;
        rep.loss_below_inv_n_after = traj.records[r].t;
    }

    // Effective-weight recursion: within each step whose patterns are pairwise disjoint, the
    // change of every effective weight is a closed-form multiple of its partition's data term.
    for (std::size_t r = r0; r < traj.records.size(); ++r) {
        const NetRecord& rec = traj.records[r];
        if (!rec.W_next) continue;
        std::map<ActivationPattern, std::vector<std::size_t>> g;
        for (std::size_t i = 0; i < rec.patterns.size(); ++i) g[rec.patterns[i]].push_back(i);
        bool disjoint = true;
        for (auto a = g.begin(); a != g.end() && disjoint; ++a)
            for (auto b = std::next(a); b != g.end(); ++b)
                if (a->first & b->first) {
                    disjoint = false;
                    break;
                }
        if (!disjoint) continue;
        const MultiNeuronNet net(rec.W, traj.v);
        for (const auto& [h, samples] : g) {
            if (h == 0) continue;
            double vsq = 0.0;
            for (int k = 0; k < K; ++k)
                if (h >> k & 1U) vsq += traj.v[k] * traj.v[k];
            Vec predicted = Vec::Zero(ds.dim());
            if (traj.algorithm == Algorithm::GD) {
                for (std::size_t i : samples)
                    predicted += std::exp(-ds.y(i) * net_forward(net, ds.x(i))) * ds.y(i) * ds.x(i);
                predicted *= rec.eta / n * vsq;
            } else if (rec.sample_index &&
                       std::find(samples.begin(), samples.end(), *rec.sample_index) != samples.end()) {
                const std::size_t i = *rec.sample_index;
                predicted = rec.eta * vsq * std::exp(-ds.y(i) * net_forward(net, ds.x(i))) * ds.y(i) * ds.x(i);
            }
            Vec actual = Vec::Zero(ds.dim());
            for (int k = 0; k < K; ++k)
                if (h >> k & 1U) actual += traj.v[k] * (rec.W_next->col(k) - rec.W.col(k));
            const double scale = std::max(actual.norm(), predicted.norm());
            const double dev = scale > 0.0 ? (actual - predicted).norm() / scale : 0.0;
            rep.max_recursion_deviation = std::max(rep.max_recursion_deviation, dev);
            ++rep.recursion_checks;
        }
    }
    rep.recursion_ok = rep.recursion_checks > 0 && rep.max_recursion_deviation <= kRecursionTolerance;
    return rep;
}

std::vector<Series> ensemble_partition_errors(std::span<const NetTrajectory> members, const PartitionReport& report) {
    if (members.empty()) throw ParameterError("ensemble_partition_errors: no members");
    const std::size_t n_rec = members.front().records.size();
    for (const auto& m : members)
        if (m.records.size() != n_rec) throw ParameterError("ensemble_partition_errors: record grids differ");
    std::vector<Series> out;
    for (const auto& part : report.partitions) {
        Series s;
        for (std::size_t r = 0; r < n_rec; ++r) {
            const long t = members.front().records[r].t;
            if (t < report.reference_step) continue;
            Vec mean = Vec::Zero(members.front().records[r].avg_W.rows());
            for (const auto& m : members) mean += effective_weight(m.records[r].avg_W, m.v, part.pattern);
            mean /= static_cast<double>(members.size());
            if (mean.norm() < 1e-12 || !part.margin) continue;
            s.push_back({t, direction_error(mean, part.margin->direction)});
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace marginlab
