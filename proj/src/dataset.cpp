#include "marginlab/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "marginlab/errors.hpp"
#include "marginlab/margin.hpp"
#include "marginlab/numfmt.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

Dataset::Dataset(RowMatrix points, std::vector<int> labels) : points_(std::move(points)), labels_(std::move(labels)) {
    if (points_.rows() != static_cast<Eigen::Index>(labels_.size()))
        throw ParameterError("dataset: " + std::to_string(points_.rows()) + " points but " +
                             std::to_string(labels_.size()) + " labels");
    if (points_.cols() < 1) throw ParameterError("dataset: dimension must be positive");
    norms_.reserve(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == 1)
            positives_.push_back(i);
        else if (labels_[i] == -1)
            negatives_.push_back(i);
        else
            throw ParameterError("dataset: label " + std::to_string(labels_[i]) + " at sample " +
                                 std::to_string(i) + " is not +1 or -1");
        const double nrm = points_.row(static_cast<Eigen::Index>(i)).norm();
        if (!std::isfinite(nrm)) throw ParameterError("dataset: non-finite coordinate at sample " + std::to_string(i));
        norms_.push_back(nrm);
        norm_bound_ = std::max(norm_bound_, nrm);
    }
    if (positives_.empty() || negatives_.empty())
        throw ParameterError("dataset: both label classes must be non-empty");
}

Dataset Dataset::from_rows(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
    if (rows.empty()) throw ParameterError("dataset: no rows");
    const std::size_t d = rows.front().size();
    RowMatrix pts(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d)
            throw ParameterError("dataset: row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                                 " coordinates, expected " + std::to_string(d));
        for (std::size_t j = 0; j < d; ++j) pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return Dataset(std::move(pts), std::move(labels));
}

RowMatrix Dataset::signed_points() const {
    RowMatrix out = points_;
    for (std::size_t i = 0; i < labels_.size(); ++i) out.row(static_cast<Eigen::Index>(i)) *= labels_[i];
    return out;
}

RowMatrix Dataset::rows(std::span<const std::size_t> indices) const {
    RowMatrix out(static_cast<Eigen::Index>(indices.size()), points_.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= size()) throw ParameterError("dataset: sample index out of range");
        out.row(static_cast<Eigen::Index>(k)) = points_.row(static_cast<Eigen::Index>(indices[k]));
    }
    return out;
}

namespace {

Vec random_unit(RngStream& rng, int dim) {
    for (;;) {
        Vec u(dim);
        for (int k = 0; k < dim; ++k) u[k] = rng.normal();
        const double nrm = u.norm();
        if (nrm > 1e-6) return u / nrm;
    }
}

// Random unit vector orthogonal to the unit vector u.
Vec random_orthogonal_unit(RngStream& rng, const Vec& u) {
    for (;;) {
        Vec s = random_unit(rng, static_cast<int>(u.size()));
        s -= s.dot(u) * u;
        const double nrm = s.norm();
        if (nrm > 1e-6) return s / nrm;
    }
}

void check_counts(int n_pos, int n_neg, int dim, const char* who) {
    if (n_pos < 1 || n_neg < 1)
        throw ParameterError(std::string(who) + ": n_pos and n_neg must be at least 1");
    if (dim < 2) throw ParameterError(std::string(who) + ": dim must be at least 2");
}

}  // namespace

Dataset gen_separable(int n_pos, int n_neg, int dim, double min_margin, std::uint64_t seed) {
    check_counts(n_pos, n_neg, dim, "gen_separable");
    if (!(min_margin > 0.0)) throw ParameterError("gen_separable: min_margin must be positive");
    RngStream rng(seed, /*stream=*/1);
    const Vec u = random_unit(rng, dim);
    const int n = n_pos + n_neg;
    RowMatrix pts(n, dim);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int y = i < n_pos ? 1 : -1;
        Vec z(dim);
        for (int k = 0; k < dim; ++k) z[k] = rng.normal();
        z -= z.dot(u) * u;
        const double along = min_margin + std::abs(rng.normal());
        pts.row(i) = (z + y * along * u).transpose();
        labels[static_cast<std::size_t>(i)] = y;
    }
    return Dataset(std::move(pts), std::move(labels));
}

Dataset gen_combes(int n_pos, int n_neg, int dim, std::uint64_t seed, int max_retries) {
    check_counts(n_pos, n_neg, dim, "gen_combes");
    // Cones of half-angle 35 degrees around +u and -u: within-class angles stay below 70
    // degrees and cross-class angles above 110, so every sign condition holds with room.
    constexpr double kHalfAngle = 35.0 * std::numbers::pi / 180.0;
    RngStream rng(seed, /*stream=*/2);
    const int n = n_pos + n_neg;
    for (int attempt = 0; attempt < std::max(1, max_retries); ++attempt) {
        const Vec u = random_unit(rng, dim);
        RowMatrix pts(n, dim);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int y = i < n_pos ? 1 : -1;
            const Vec s = random_orthogonal_unit(rng, u);
            const double phi = rng.uniform(0.0, kHalfAngle);
            const double radius = rng.uniform(0.5, 1.5);
            pts.row(i) = (y * radius * (std::cos(phi) * u + std::sin(phi) * s)).transpose();
            labels[static_cast<std::size_t>(i)] = y;
        }
        Dataset ds(std::move(pts), std::move(labels));
        const ConditionReport report = check_combes(ds);
        if (report.combes_ok && report.separable) return ds;
    }
    throw GenerationError("gen_combes: no conforming dataset after " + std::to_string(max_retries) + " attempts");
}

Dataset gen_example1() {
    return Dataset::from_rows({{1.0, 0.0}, {-0.5, 1.0}, {-0.5, -1.0}}, {1, 1, -1});
}

Dataset gen_example2() {
    return Dataset::from_rows({{1.0, 0.6}, {1.0, -0.6}}, {1, -1});
}

ConditionReport check_combes(const Dataset& ds) {
    ConditionReport report;
    const auto& X = ds.points();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = i; j < ds.size(); ++j) {
            const double ip = X.row(static_cast<Eigen::Index>(i)).dot(X.row(static_cast<Eigen::Index>(j)));
            const bool same = ds.y(i) == ds.y(j);
            const bool ok = same ? ip > kStrictTolerance : ip < -kStrictTolerance;
            if (!ok) report.violating_pairs.push_back({i, j, ip});
        }
    }
    report.combes_ok = report.violating_pairs.empty();

    MarginResult margin;
    try {
        margin = max_margin(ds.signed_points());
    } catch (const ConvergenceError& e) {
        margin = e.best();
    }
    report.separation_margin = margin.gamma;
    report.separable = margin.gamma > 0.0;
    if (report.separable) report.separability_witness = margin.direction;
    return report;
}

Dataset augment(const Dataset& ds) {
    RowMatrix pts(static_cast<Eigen::Index>(ds.size()), ds.dim() + 1);
    pts.leftCols(ds.dim()) = ds.points();
    for (std::size_t i = 0; i < ds.size(); ++i) pts(static_cast<Eigen::Index>(i), ds.dim()) = ds.y(i);
    return Dataset(std::move(pts), ds.labels());
}

Dataset leaky_transform(const Dataset& ds, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("leaky_transform: lambda must lie in [0, 1]");
    RowMatrix pts = ds.points();
    for (std::size_t i : ds.negatives()) pts.row(static_cast<Eigen::Index>(i)) *= lambda;
    return Dataset(std::move(pts), ds.labels());
}

void write_csv(const Dataset& ds, std::ostream& out) {
    for (int k = 0; k < ds.dim(); ++k) out << 'x' << k << ',';
    out << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (int k = 0; k < ds.dim(); ++k) out << format_double(ds.points()(static_cast<Eigen::Index>(i), k)) << ',';
        out << ds.y(i) << '\n';
    }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

Dataset read_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("dataset csv: empty input", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_fields(line);
    if (header.size() < 2 || header.back() != "label")
        throw ParseError("dataset csv: header must be x0,...,x{d-1},label", line_no, "header");
    const std::size_t d = header.size() - 1;
    for (std::size_t k = 0; k < d; ++k)
        if (header[k] != "x" + std::to_string(k))
            throw ParseError("dataset csv: header column " + std::to_string(k) + " must be x" + std::to_string(k),
                             line_no, header[k]);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != d + 1)
            throw ParseError("dataset csv: row " + std::to_string(rows.size()) + " (line " + std::to_string(line_no) +
                                 ") has " + std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(d + 1),
                             line_no, "row " + std::to_string(rows.size()));
        std::vector<double> row(d);
        for (std::size_t k = 0; k < d; ++k) {
            const auto v = parse_double(fields[k]);
            if (!v || !std::isfinite(*v))
                throw ParseError("dataset csv: bad number '" + fields[k] + "' at line " + std::to_string(line_no),
                                 line_no, header[k]);
            row[k] = *v;
        }
        const auto label = parse_double(fields[d]);
        if (!label || (*label != 1.0 && *label != -1.0))
            throw ParseError("dataset csv: label '" + fields[d] + "' at line " + std::to_string(line_no) +
                                 " is not 1 or -1",
                             line_no, "label");
        rows.push_back(std::move(row));
        labels.push_back(static_cast<int>(*label));
    }
    if (rows.empty()) throw ParseError("dataset csv: no samples", line_no);
    try {
        return Dataset::from_rows(rows, std::move(labels));
    } catch (const ParameterError& e) {
        throw ParseError(std::string("dataset csv: ") + e.what(), line_no);
    }
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ParameterError("cannot write " + tmp.string());
        write_csv(ds, out);
        if (!out) throw ParameterError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open " + path.string());
    return read_csv(in);
}

}  // namespace marginlab
