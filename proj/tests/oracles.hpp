#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/rng.hpp"

namespace oracle {

using marginlab::Dataset;
using marginlab::RowMatrix;
using marginlab::Vec;

inline double sigma(double v, double lambda) { return v > 0.0 ? v : lambda * v; }

/// Loss straight from the definition, with no exponent cap.
inline double loss(const Vec& w, const Dataset& ds, double lambda) {
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double m = 0.0;
        for (int k = 0; k < ds.dim(); ++k) m += w[k] * ds.points()(static_cast<Eigen::Index>(i), k);
        total += std::exp(-ds.y(i) * sigma(m, lambda));
    }
    return total / static_cast<double>(ds.size());
}

/// Central differences of f at w.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w, double h = 1e-6) {
    Vec g(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        Vec a = w, b = w;
        a[k] += h;
        b[k] -= h;
        g[k] = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// Max over an even angular grid of min_i (cos a, sin a).x_i, for 2-D point sets.
struct AngularMargin {
    double gamma = -std::numeric_limits<double>::infinity();
    double angle = 0.0;
};

inline AngularMargin angular_margin(const RowMatrix& pts, long grid) {
    AngularMargin best;
    for (long s = 0; s < grid; ++s) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(grid);
        const double c = std::cos(a), si = std::sin(a);
        double m = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < pts.rows(); ++i) m = std::min(m, c * pts(i, 0) + si * pts(i, 1));
        if (m > best.gamma) best = {m, a};
    }
    return best;
}

/// Limit of the ReLU loss along alpha*w, from a direct count of the sign pattern.
inline double relu_ray_limit(const Vec& w, const Dataset& ds) {
    const double n = static_cast<double>(ds.size());
    double active_pos = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double m = ds.x(i).dot(w);
        if (ds.y(i) < 0 && m > 0.0) return std::numeric_limits<double>::infinity();
        if (ds.y(i) > 0 && m > 0.0) active_pos += 1.0;
    }
    if (active_pos == 0.0) return 1.0;
    return static_cast<double>(ds.n_neg()) / n + (static_cast<double>(ds.n_pos()) - active_pos) / n;
}

/// Gaussian point cloud with random labels, both classes present.
inline Dataset random_dataset(std::uint64_t seed, int n, int dim) {
    marginlab::RngStream rng(seed, 99);
    RowMatrix pts(n, dim);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < dim; ++k) pts(i, k) = rng.normal();
        labels[static_cast<std::size_t>(i)] = i == 0 ? 1 : i == 1 ? -1 : (rng.uniform() < 0.5 ? 1 : -1);
    }
    return Dataset(pts, labels);
}

inline Vec random_unit(marginlab::RngStream& rng, int dim) {
    Vec w(dim);
    for (int k = 0; k < dim; ++k) w[k] = rng.normal();
    return w / w.norm();
}

}  // namespace oracle
