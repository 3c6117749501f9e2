#include "marginlab/margin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "marginlab/numfmt.hpp"

namespace marginlab {

namespace {

constexpr long kRefreshEvery = 1000;

struct Candidate {
    Vec direction;
    double gamma = -std::numeric_limits<double>::infinity();
};

double min_product(const RowMatrix& X, const Vec& u) { return (X * u).minCoeff(); }

}  // namespace

MarginResult max_margin(const RowMatrix& X, const MarginOptions& options) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    if (n == 0 || d == 0) throw ParameterError("max_margin: empty point set");
    if (!(options.tol > 0.0)) throw ParameterError("max_margin: tol must be positive");
    if (options.max_iter < 1) throw ParameterError("max_margin: max_iter must be positive");
    if (!X.allFinite()) throw ParameterError("max_margin: non-finite coordinates");

    // Best primal candidate, seeded with the normalized points themselves.
    Candidate best;
    Eigen::Index start = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double nrm = X.row(i).norm();
        if (nrm < X.row(start).norm()) start = i;
        if (nrm == 0.0) continue;
        const Vec u = X.row(i).transpose() / nrm;
        const double g = min_product(X, u);
        if (g > best.gamma) best = {u, g};
    }
    if (best.direction.size() == 0) best.direction = Vec::Unit(d, 0);

    Vec q = Vec::Zero(n);
    q[start] = 1.0;
    Vec p = X.row(start).transpose();
    Vec scores(n);

    auto finish = [&](bool certified, long iter, double pnorm) {
        MarginResult r;
        r.iterations = iter;
        r.dual_q = q;
        r.certified = certified;
        if (certified) {
            r.direction = p / pnorm;
            r.gamma = min_product(X, r.direction);
            r.duality_gap = std::max(0.0, pnorm - r.gamma);
        } else {
            r.direction = best.direction;
            r.gamma = best.gamma;
            r.duality_gap = pnorm - best.gamma;
        }
        return r;
    };

    for (long iter = 0;; ++iter) {
        if (iter > 0 && iter % kRefreshEvery == 0) p = X.transpose() * q;
        const double pp = p.squaredNorm();
        const double pnorm = std::sqrt(pp);
        scores.noalias() = X * p;

        Eigen::Index s = 0;
        const double smin = scores.minCoeff(&s);
        if (pnorm > 0.0) {
            const double primal = smin / pnorm;
            if (primal > best.gamma) best = {p / pnorm, primal};
            if (options.on_iteration) options.on_iteration(iter, pnorm, primal);
        } else if (options.on_iteration) {
            options.on_iteration(iter, 0.0, best.gamma);
        }

        if (pnorm <= options.tol) return finish(false, iter, pnorm);
        const double fw_gap = pp - smin;
        if (fw_gap / pnorm <= options.tol) return finish(true, iter, pnorm);
        if (iter >= options.max_iter) {
            std::ostringstream msg;
            msg << "max_margin: no convergence after " << options.max_iter << " iterations (gap "
                << format_double(fw_gap / pnorm) << ")";
            throw ConvergenceError(msg.str(), finish(true, iter, pnorm));
        }

        Eigen::Index a = -1;
        double amax = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i)
            if (q[i] > 0.0 && scores[i] > amax) {
                amax = scores[i];
                a = i;
            }
        const double away_gap = amax - pp;

        if (fw_gap >= away_gap) {
            const Vec dir = X.row(s).transpose() - p;
            const double dd = dir.squaredNorm();
            if (dd == 0.0) return finish(true, iter, pnorm);
            const double step = std::clamp(-p.dot(dir) / dd, 0.0, 1.0);
            q *= 1.0 - step;
            q[s] += step;
            p += step * dir;
        } else {
            const double qa = q[a];
            const double max_step = qa / (1.0 - qa);
            const Vec dir = p - X.row(a).transpose();
            const double dd = dir.squaredNorm();
            if (dd == 0.0) return finish(true, iter, pnorm);
            const double step = std::clamp(-p.dot(dir) / dd, 0.0, max_step);
            q *= 1.0 + step;
            if (step == max_step)
                q[a] = 0.0;
            else
                q[a] -= step;
            p += step * dir;
        }
    }
}

bool in_local_region(const Vec& w, const Dataset& ds, std::span<const std::size_t> subset) {
    std::vector<char> in(ds.size(), 0);
    for (std::size_t i : subset) {
        if (i >= ds.size() || ds.y(i) != 1)
            throw ParameterError("in_local_region: index " + std::to_string(i) + " is not a positive sample");
        in[i] = 1;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double m = ds.points().row(static_cast<Eigen::Index>(i)).dot(w);
        if (in[i] ? !(m > 0.0) : m > 0.0) return false;
    }
    return true;
}

LocalMargin local_margin(const Dataset& ds, std::span<const std::size_t> subset, const MarginOptions& options) {
    if (subset.empty()) throw ParameterError("local_margin: subset must be non-empty");
    LocalMargin out;
    out.margin = max_margin(ds.rows(subset), options);
    out.membership = in_local_region(out.margin.direction, ds, subset);
    return out;
}

LocalMinimaReport enumerate_local_minima(const Dataset& ds, int max_subset_size, const MarginOptions& options,
                                         int cap) {
    const auto& pos = ds.positives();
    const int m = static_cast<int>(pos.size());
    if (max_subset_size < 1) throw ParameterError("enumerate_local_minima: max_subset_size must be positive");
    if (m > 63) throw ParameterError("enumerate_local_minima: more than 63 positives cannot be enumerated");
    const int kmax = std::min(max_subset_size, m - 1);

    // Count proper subsets of size 1..kmax, refusing before any work if the count is too large.
    double visits = 0.0, binom = 1.0;
    for (int k = 1; k <= kmax; ++k) {
        binom = binom * (m - k + 1) / k;
        visits += binom;
    }
    if (visits > std::ldexp(1.0, cap))
        throw ParameterError("enumerate_local_minima: " + format_double(visits) + " subsets exceed the cap 2^" +
                             std::to_string(cap) + "; lower max_subset_size or raise the cap");

    LocalMinimaReport report;
    MarginResult global = max_margin(ds.positive_points(), options);
    if (global.gamma > 0.0) {
        bool no_negative = true, strict = true;
        for (std::size_t i : ds.negatives()) {
            const double v = ds.points().row(static_cast<Eigen::Index>(i)).dot(global.direction);
            if (v > 0.0) no_negative = false;
            if (!(v < 0.0)) strict = false;
        }
        if (no_negative) {
            report.global = std::move(global);
            report.global_separable = strict;
        }
    }

    std::vector<std::size_t> subset;
    const std::uint64_t limit = std::uint64_t{1} << m;
    for (int k = 1; k <= kmax; ++k) {
        // Gosper's hack walks the masks of popcount k in increasing order.
        for (std::uint64_t mask = (std::uint64_t{1} << k) - 1; mask < limit;) {
            subset.clear();
            for (int j = 0; j < m; ++j)
                if (mask >> j & 1U) subset.push_back(pos[static_cast<std::size_t>(j)]);
            LocalMargin lm = local_margin(ds, subset, options);
            if (lm.membership) report.local.push_back({subset, mask, std::move(lm.margin)});
            const std::uint64_t c = mask & (~mask + 1);
            const std::uint64_t r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
    }
    std::sort(report.local.begin(), report.local.end(),
              [](const LocalMinimum& a, const LocalMinimum& b) { return a.mask < b.mask; });
    return report;
}

std::string RegionLabel::str() const {
    switch (kind_) {
        case Kind::Separable: return "separable";
        case Kind::NegativeMisclassified: return "neg_misclassified";
        case Kind::FiniteLocalMin: return "finite_local_min";
        case Kind::LocalRegion: {
            std::string s = "local:";
            for (std::size_t k = 0; k < active_.size(); ++k) {
                if (k) s += ';';
                s += std::to_string(active_[k]);
            }
            return s;
        }
    }
    return "?";
}

RegionLabel RegionLabel::parse(const std::string& text) {
    if (text == "separable") return separable();
    if (text == "neg_misclassified") return negative_misclassified();
    if (text == "finite_local_min") return finite_local_min();
    if (text.rfind("local:", 0) == 0 && text.size() > 6) {
        std::vector<std::size_t> active;
        std::istringstream ss(text.substr(6));
        std::string tok;
        while (std::getline(ss, tok, ';')) {
            if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
                throw ParameterError("bad region label '" + text + "'");
            active.push_back(std::stoul(tok));
        }
        if (!std::is_sorted(active.begin(), active.end())) throw ParameterError("bad region label '" + text + "'");
        return local_region(std::move(active));
    }
    throw ParameterError("bad region label '" + text + "'");
}

RegionLabel region_from_margins(std::span<const double> margins, const Dataset& ds) {
    if (margins.size() != ds.size()) throw ParameterError("region_from_margins: size mismatch");
    for (std::size_t i : ds.negatives())
        if (margins[i] > 0.0) return RegionLabel::negative_misclassified();
    std::vector<std::size_t> active;
    for (std::size_t i : ds.positives())
        if (margins[i] > 0.0) active.push_back(i);
    if (active.empty()) return RegionLabel::finite_local_min();
    if (active.size() == ds.n_pos()) {
        bool strict = true;
        for (std::size_t i : ds.negatives())
            if (!(margins[i] < 0.0)) strict = false;
        if (strict) return RegionLabel::separable();
    }
    return RegionLabel::local_region(std::move(active));
}

RegionLabel region_of(const Vec& w, const Dataset& ds) {
    if (w.size() != ds.dim()) throw ParameterError("region_of: dimension mismatch");
    std::vector<double> m(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) m[i] = ds.points().row(static_cast<Eigen::Index>(i)).dot(w);
    return region_from_margins(m, ds);
}

}  // namespace marginlab
