#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "marginlab/dataset.hpp"
#include "marginlab/types.hpp"

namespace marginlab {

/// Exponent arguments are clamped to this before exp(); clamping sets the overflow flag.
inline constexpr double kExponentCap = 700.0;

/// Activation family of the single-neuron model, sigma(v) = max(lambda v, v).
/// ReLU is lambda = 0, Linear is lambda = 1; Leaky requires lambda in (0, 1).
class ModelKind {
public:
    enum class Activation { ReLU, Leaky, Linear };

    static ModelKind relu() noexcept { return ModelKind(Activation::ReLU, 0.0); }
    static ModelKind linear() noexcept { return ModelKind(Activation::Linear, 1.0); }
    static ModelKind leaky(double lambda);

    Activation activation() const noexcept { return activation_; }
    double lambda() const noexcept { return lambda_; }

    double activate(double v) const noexcept { return v > 0.0 ? v : lambda_ * v; }
    /// Slope used by the gradient. The kink at 0 takes the left slope (0 for ReLU).
    double slope(double v) const noexcept { return v > 0.0 ? 1.0 : lambda_; }

    std::string name() const;

    friend bool operator==(const ModelKind&, const ModelKind&) = default;

private:
    ModelKind(Activation a, double lambda) noexcept : activation_(a), lambda_(lambda) {}

    Activation activation_;
    double lambda_;
};

struct LossValue {
    double value = 0.0;
    bool overflow = false;
};

struct GradValue {
    Vec value;
    bool overflow = false;
};

/// (1/n) sum_i exp(-y_i sigma(w.x_i)), summed left to right in sample order.
LossValue loss(const Vec& w, const Dataset& ds, ModelKind kind);

/// Scalar c with grad l(w, (x, y)) = c x, i.e. c = -y sigma'(w.x) exp(-y sigma(w.x)).
double sample_grad_coefficient(double margin, int y, ModelKind kind, bool& overflow) noexcept;

GradValue sample_grad(const Vec& w, const Eigen::Ref<const Vec>& x, int y, ModelKind kind);

/// Full gradient: the sample gradients accumulated in index order, divided by n.
GradValue grad(const Vec& w, const Dataset& ds, ModelKind kind);

/// Bitmask of active hidden neurons (bit k set iff w_k.x > 0). Supports K <= 64.
using ActivationPattern = std::uint64_t;

/// One-hidden-layer ReLU network f(x) = sum_k v_k relu(w_k.x) with fixed output weights v.
class MultiNeuronNet {
public:
    MultiNeuronNet(Mat W, Vec v);

    const Mat& W() const noexcept { return W_; }
    Mat& W() noexcept { return W_; }
    const Vec& v() const noexcept { return v_; }
    int hidden() const noexcept { return static_cast<int>(v_.size()); }
    int dim() const noexcept { return static_cast<int>(W_.rows()); }

private:
    Mat W_;
    Vec v_;
};

double net_forward(const MultiNeuronNet& net, const Eigen::Ref<const Vec>& x);

LossValue net_loss(const MultiNeuronNet& net, const Dataset& ds);

struct NetGradValue {
    Mat value;
    bool overflow = false;
};

NetGradValue net_sample_grad(const MultiNeuronNet& net, const Eigen::Ref<const Vec>& x, int y);
NetGradValue net_grad(const MultiNeuronNet& net, const Dataset& ds);

ActivationPattern activation_pattern(const MultiNeuronNet& net, const Eigen::Ref<const Vec>& x);

/// sum over active neurons k in the pattern of v_k w_k.
Vec effective_weight(const Mat& W, const Vec& v, ActivationPattern pattern);

std::string pattern_string(ActivationPattern pattern, int hidden);

}  // namespace marginlab
