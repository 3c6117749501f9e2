#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/types.hpp"

namespace marginlab {

/// Max-margin direction of a point set, certified through the simplex dual
///   min_{q in simplex} |X^T q|  >=  max_{|w|=1} min_i w.x_i = gamma.
struct MarginResult {
    Vec direction;             ///< unit vector
    double gamma = 0.0;        ///< min_i direction.x_i
    Vec dual_q;                ///< point on the probability simplex
    double duality_gap = 0.0;  ///< |X^T q| - gamma; meaningful only when certified
    long iterations = 0;
    /// False when the dual optimum is (numerically) the origin: the points are not
    /// pointed, gamma <= 0 and strong duality gives no direction.
    bool certified = false;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, MarginResult best) : Error(what), best_(std::move(best)) {}
    const MarginResult& best() const noexcept { return best_; }

private:
    MarginResult best_;
};

struct MarginOptions {
    double tol = 1e-8;
    long max_iter = 1'000'000;
    /// Called once per solver iteration with (iteration, dual value |X^T q|, primal value
    /// min_i x_i.p/|p| of the current dual image p).
    std::function<void(long, double, double)> on_iteration;
};

/// Away-step Frank-Wolfe on min_q 0.5 |X^T q|^2 over the simplex, exact line search.
/// Stops when |X^T q| - min_i x_i.p/|p| <= tol. Throws ConvergenceError (carrying the best
/// iterate) when max_iter is exhausted.
MarginResult max_margin(const RowMatrix& points, const MarginOptions& options = {});

struct LocalMargin {
    MarginResult margin;
    bool membership = false;  ///< direction lies in the local-minimum region of J
};

/// True iff w.x_i > 0 exactly for i in subset and w.x_i <= 0 for every other sample.
/// subset must hold positive-sample indices.
bool in_local_region(const Vec& w, const Dataset& ds, std::span<const std::size_t> subset);

/// Max-margin direction of {x_i : i in subset} plus its membership in that subset's
/// local-minimum region. subset must be a non-empty set of positive indices.
LocalMargin local_margin(const Dataset& ds, std::span<const std::size_t> subset,
                         const MarginOptions& options = {});

struct LocalMinimum {
    std::vector<std::size_t> subset;  ///< sample indices, increasing
    std::uint64_t mask = 0;           ///< bit j set iff the j-th positive sample is in subset
    MarginResult margin;
};

struct LocalMinimaReport {
    /// Max-margin direction of all positives, present when it activates every positive
    /// and no negative (the global case).
    std::optional<MarginResult> global;
    bool global_separable = false;  ///< global direction strictly classifies every sample
    std::vector<LocalMinimum> local;  ///< proper subsets only, sorted by mask
};

inline constexpr int kDefaultEnumerationCap = 15;

/// All proper non-empty subsets J of the positives with |J| <= max_subset_size whose
/// max-margin direction sits in J's local-minimum region. Refuses (ParameterError) when
/// the number of subsets to visit exceeds 2^cap.
LocalMinimaReport enumerate_local_minima(const Dataset& ds, int max_subset_size,
                                         const MarginOptions& options = {},
                                         int cap = kDefaultEnumerationCap);

/// Sign-pattern label of a weight vector. Comparisons against 0.0 are exact, so inputs
/// lying on a sample's hyperplane are knife-edge.
class RegionLabel {
public:
    enum class Kind { Separable, LocalRegion, NegativeMisclassified, FiniteLocalMin };

    static RegionLabel separable() { return RegionLabel(Kind::Separable, {}); }
    static RegionLabel local_region(std::vector<std::size_t> active) {
        return RegionLabel(Kind::LocalRegion, std::move(active));
    }
    static RegionLabel negative_misclassified() { return RegionLabel(Kind::NegativeMisclassified, {}); }
    static RegionLabel finite_local_min() { return RegionLabel(Kind::FiniteLocalMin, {}); }

    Kind kind() const noexcept { return kind_; }
    /// J+: the positives with w.x_i > 0 (LocalRegion only).
    const std::vector<std::size_t>& active() const noexcept { return active_; }

    /// "separable", "local:0;3", "neg_misclassified", "finite_local_min".
    std::string str() const;
    static RegionLabel parse(const std::string& text);

    friend bool operator==(const RegionLabel&, const RegionLabel&) = default;

private:
    RegionLabel(Kind k, std::vector<std::size_t> active) : kind_(k), active_(std::move(active)) {}

    Kind kind_;
    std::vector<std::size_t> active_;
};

RegionLabel region_of(const Vec& w, const Dataset& ds);
/// Same labeling from precomputed margins m_i = w.x_i.
RegionLabel region_from_margins(std::span<const double> margins, const Dataset& ds);

}  // namespace marginlab
