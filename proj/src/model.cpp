#include "marginlab/model.hpp"

#include <cmath>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"

namespace marginlab {

ModelKind ModelKind::leaky(double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw ParameterError("leaky slope must lie strictly inside (0, 1), got " + format_double(lambda));
    return ModelKind(Activation::Leaky, lambda);
}

std::string ModelKind::name() const {
    switch (activation_) {
        case Activation::ReLU: return "relu";
        case Activation::Linear: return "linear";
        case Activation::Leaky: return "leaky:" + format_double(lambda_);
    }
    return "?";
}

namespace {

inline double capped_exp(double arg, bool& overflow) noexcept {
    if (arg > kExponentCap) {
        overflow = true;
        arg = kExponentCap;
    }
    return std::exp(arg);
}

void check_dim(Eigen::Index got, int want, const char* who) {
    if (got != want)
        throw ParameterError(std::string(who) + ": dimension " + std::to_string(got) + " does not match " +
                             std::to_string(want));
}

}  // namespace

LossValue loss(const Vec& w, const Dataset& ds, ModelKind kind) {
    check_dim(w.size(), ds.dim(), "loss");
    LossValue out;
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double m = ds.points().row(static_cast<Eigen::Index>(i)).dot(w);
        sum += capped_exp(-ds.y(i) * kind.activate(m), out.overflow);
    }
    out.value = sum / static_cast<double>(ds.size());
    return out;
}

double sample_grad_coefficient(double margin, int y, ModelKind kind, bool& overflow) noexcept {
    const double s = kind.slope(margin);
    if (s == 0.0) return 0.0;
    return -y * s * capped_exp(-y * kind.activate(margin), overflow);
}

GradValue sample_grad(const Vec& w, const Eigen::Ref<const Vec>& x, int y, ModelKind kind) {
    check_dim(x.size(), static_cast<int>(w.size()), "sample_grad");
    GradValue out;
    const double c = sample_grad_coefficient(w.dot(x), y, kind, out.overflow);
    out.value = c * x;
    return out;
}

GradValue grad(const Vec& w, const Dataset& ds, ModelKind kind) {
    check_dim(w.size(), ds.dim(), "grad");
    GradValue out;
    out.value = Vec::Zero(ds.dim());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto xi = ds.points().row(static_cast<Eigen::Index>(i));
        const double c = sample_grad_coefficient(xi.dot(w), ds.y(i), kind, out.overflow);
        out.value += c * xi.transpose();
    }
    out.value /= static_cast<double>(ds.size());
    return out;
}

MultiNeuronNet::MultiNeuronNet(Mat W, Vec v) : W_(std::move(W)), v_(std::move(v)) {
    if (v_.size() < 2) throw ParameterError("net: at least two hidden neurons are required");
    if (v_.size() > 64) throw ParameterError("net: at most 64 hidden neurons are supported");
    if (W_.cols() != v_.size())
        throw ParameterError("net: W has " + std::to_string(W_.cols()) + " columns but v has " +
                             std::to_string(v_.size()) + " entries");
    if (W_.rows() < 1) throw ParameterError("net: input dimension must be positive");
    bool pos = false, neg = false;
    for (Eigen::Index k = 0; k < v_.size(); ++k) {
        if (v_[k] == 0.0 || !std::isfinite(v_[k])) throw ParameterError("net: output weights must be nonzero");
        (v_[k] > 0.0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw ParameterError("net: output weights need both signs");
}

double net_forward(const MultiNeuronNet& net, const Eigen::Ref<const Vec>& x) {
    check_dim(x.size(), net.dim(), "net_forward");
    double f = 0.0;
    for (int k = 0; k < net.hidden(); ++k) {
        const double a = net.W().col(k).dot(x);
        if (a > 0.0) f += net.v()[k] * a;
    }
    return f;
}

LossValue net_loss(const MultiNeuronNet& net, const Dataset& ds) {
    check_dim(ds.dim(), net.dim(), "net_loss");
    LossValue out;
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double f = net_forward(net, ds.x(i));
        sum += capped_exp(-ds.y(i) * f, out.overflow);
    }
    out.value = sum / static_cast<double>(ds.size());
    return out;
}

NetGradValue net_sample_grad(const MultiNeuronNet& net, const Eigen::Ref<const Vec>& x, int y) {
    check_dim(x.size(), net.dim(), "net_sample_grad");
    NetGradValue out;
    out.value = Mat::Zero(net.dim(), net.hidden());
    const double e = capped_exp(-y * net_forward(net, x), out.overflow);
    for (int k = 0; k < net.hidden(); ++k)
        if (net.W().col(k).dot(x) > 0.0) out.value.col(k) = (-y * net.v()[k] * e) * x;
    return out;
}

NetGradValue net_grad(const MultiNeuronNet& net, const Dataset& ds) {
    check_dim(ds.dim(), net.dim(), "net_grad");
    NetGradValue out;
    out.value = Mat::Zero(net.dim(), net.hidden());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vec xi = ds.x(i);
        const double e = capped_exp(-ds.y(i) * net_forward(net, xi), out.overflow);
        for (int k = 0; k < net.hidden(); ++k)
            if (net.W().col(k).dot(xi) > 0.0) out.value.col(k) += (-ds.y(i) * net.v()[k] * e) * xi;
    }
    out.value /= static_cast<double>(ds.size());
    return out;
}

ActivationPattern activation_pattern(const MultiNeuronNet& net, const Eigen::Ref<const Vec>& x) {
    check_dim(x.size(), net.dim(), "activation_pattern");
    ActivationPattern p = 0;
    for (int k = 0; k < net.hidden(); ++k)
        if (net.W().col(k).dot(x) > 0.0) p |= ActivationPattern{1} << k;
    return p;
}

Vec effective_weight(const Mat& W, const Vec& v, ActivationPattern pattern) {
    Vec out = Vec::Zero(W.rows());
    for (Eigen::Index k = 0; k < v.size(); ++k)
        if (pattern >> k & 1U) out += v[k] * W.col(k);
    return out;
}

std::string pattern_string(ActivationPattern pattern, int hidden) {
    std::string s(static_cast<std::size_t>(hidden), '0');
    for (int k = 0; k < hidden; ++k)
        if (pattern >> k & 1U) s[static_cast<std::size_t>(k)] = '1';
    return s;
}

}  // namespace marginlab
