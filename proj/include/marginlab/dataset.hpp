#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginlab/types.hpp"

namespace marginlab {

/// Sign threshold used by the inner-product conditions: a product counts as strictly
/// positive (negative) only when it exceeds this in magnitude with the right sign.
inline constexpr double kStrictTolerance = 1e-12;

/// Labeled points in d dimensions with labels in {+1, -1}. Both classes are non-empty.
/// Immutable after construction.
class Dataset {
public:
    Dataset(RowMatrix points, std::vector<int> labels);

    static Dataset from_rows(const std::vector<std::vector<double>>& rows, std::vector<int> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    int dim() const noexcept { return static_cast<int>(points_.cols()); }

    const RowMatrix& points() const noexcept { return points_; }
    auto x(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }
    int y(std::size_t i) const { return labels_[i]; }
    const std::vector<int>& labels() const noexcept { return labels_; }

    /// Exact max Euclidean norm over the points.
    double norm_bound() const noexcept { return norm_bound_; }
    const std::vector<double>& norms() const noexcept { return norms_; }

    const std::vector<std::size_t>& positives() const noexcept { return positives_; }
    const std::vector<std::size_t>& negatives() const noexcept { return negatives_; }
    std::size_t n_pos() const noexcept { return positives_.size(); }
    std::size_t n_neg() const noexcept { return negatives_.size(); }

    /// Rows y_i x_i.
    RowMatrix signed_points() const;
    /// Rows x_i for the given indices, in the given order.
    RowMatrix rows(std::span<const std::size_t> indices) const;
    RowMatrix positive_points() const { return rows(positives_); }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.labels_ == b.labels_ && a.points_.rows() == b.points_.rows() &&
               a.points_.cols() == b.points_.cols() && a.points_ == b.points_;
    }

private:
    RowMatrix points_;
    std::vector<int> labels_;
    std::vector<double> norms_;
    double norm_bound_ = 0.0;
    std::vector<std::size_t> positives_;
    std::vector<std::size_t> negatives_;
};

struct InnerProductViolation {
    std::size_t i;
    std::size_t j;
    double inner_product;
};

struct ConditionReport {
    bool combes_ok = false;
    std::vector<InnerProductViolation> violating_pairs;
    bool separable = false;
    std::optional<Vec> separability_witness;
    double separation_margin = 0.0;
};

/// Points on either side of a hidden hyperplane through the origin with signed margin
/// at least min_margin. Deterministic in seed.
Dataset gen_separable(int n_pos, int n_neg, int dim, double min_margin, std::uint64_t seed);

/// Two antipodal cones: every within-class inner product strictly positive, every
/// cross-class one strictly negative. Rejection-sampled; throws GenerationError after
/// max_retries failed draws.
Dataset gen_combes(int n_pos, int n_neg, int dim, std::uint64_t seed, int max_retries = 1000);

/// Fixed 2-D set {(x1,+1),(x2,+1),(x3,-1)} with x1.x2 < 0 and x1.x3 < 0:
/// x1 = (1, 0), x2 = (-0.5, 1), x3 = (-0.5, -1).
Dataset gen_example1();

/// Fixed 2-D set {(x1,+1),(x2,-1)} with 0 < x1.x2 <= 0.5 |x2|^2:
/// x1 = (1, 0.6), x2 = (1, -0.6).
Dataset gen_example2();

/// O(n^2) check of the pairwise sign conditions plus a separability test through the
/// max-margin solver on the signed points.
ConditionReport check_combes(const Dataset& ds);

/// Appends +1 to positive samples and -1 to negative samples.
Dataset augment(const Dataset& ds);

/// Scales negative samples by lambda in [0, 1]; positives and labels are untouched.
Dataset leaky_transform(const Dataset& ds, double lambda);

/// CSV with header `x0,...,x{d-1},label`, values in shortest round-trip decimal.
void write_csv(const Dataset& ds, std::ostream& out);
Dataset read_csv(std::istream& in);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace marginlab
