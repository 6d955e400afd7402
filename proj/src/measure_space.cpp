#include "sqpbox/measure_space.hpp"

#include <cmath>
#include <stdexcept>

namespace sqpbox {

MeasureSpace::MeasureSpace(std::vector<double> weights)
    : weights_(std::move(weights)) {
    if (weights_.empty())
        throw std::invalid_argument("MeasureSpace: point count must be positive");
    total_ = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0) || !std::isfinite(w))
            throw std::invalid_argument("MeasureSpace: weights must be strictly positive and finite");
        total_ += w;
    }
}

GridFunction::GridFunction(MeasureSpacePtr s, std::vector<double> v)
    : space(std::move(s)), values(std::move(v)) {
    if (!space || values.size() != space->point_count())
        throw std::invalid_argument("GridFunction: value count must equal point count");
}

GridFunction::GridFunction(MeasureSpacePtr s, double constant)
    : space(std::move(s)) {
    if (!space) throw std::invalid_argument("GridFunction: null space");
    values.assign(space->point_count(), constant);
}

BoxBounds::BoxBounds(double lower, double upper, double exponent_p)
    : lower_(lower), upper_(upper), p_(exponent_p) {
    if (std::isnan(lower_) || std::isnan(upper_) || !(lower_ < upper_))
        throw std::invalid_argument("BoxBounds: requires lower < upper");
    if (!(p_ >= 2.0))
        throw std::invalid_argument("BoxBounds: exponent_p must be in [2, inf]");
    if (p_ > 2.0 && (!lower_finite() || !upper_finite()))
        throw std::invalid_argument("BoxBounds: p > 2 requires finite bounds");
}

void require_same_space(const GridFunction& v, const GridFunction& w) {
    if (v.space == w.space) return;
    if (!v.space || !w.space || v.size() != w.size() ||
        v.space->weights() != w.space->weights())
        throw std::invalid_argument("GridFunction: operands live on different spaces");
}

double weighted_norm(const GridFunction& v, double q) {
    if (std::isnan(q) || q < 1.0)
        throw std::invalid_argument("weighted_norm: exponent q must satisfy q >= 1");
    const std::size_t n = v.size();
    if (q == kInf) return kern::max_abs(v.data(), n);
    if (q == 2.0) return std::sqrt(kern::dot3(v.space->weights().data(), v.data(), v.data(), n));
    // Scale by the max to avoid overflow/underflow for large q.
    const double m = kern::max_abs(v.data(), n);
    if (m == 0.0) return 0.0;
    double s = 0.0;
    const auto& w = v.space->weights();
    for (std::size_t i = 0; i < n; ++i)
        s += w[i] * std::pow(std::abs(v.values[i]) / m, q);
    return m * std::pow(s, 1.0 / q);
}

double weighted_inner(const GridFunction& v, const GridFunction& w) {
    require_same_space(v, w);
    return kern::dot3(v.space->weights().data(), v.data(), w.data(), v.size());
}

GridFunction project_box(const GridFunction& v, const BoxBounds& b) {
    GridFunction out(v.space, std::vector<double>(v.size()));
    kern::clamp(v.data(), b.lower(), b.upper(), out.data(), v.size());
    return out;
}

ActiveSetPartition classify_active(const GridFunction& v, const BoxBounds& b,
                                   double tol) {
    if (!(tol >= 0.0))
        throw std::invalid_argument("classify_active: tol must be nonnegative");
    ActiveSetPartition part;
    const bool lo = b.lower_finite();
    const bool hi = b.upper_finite();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v.values[i];
        if (lo && x <= b.lower() + tol)
            part.lower_active.push_back(i);
        else if (hi && x >= b.upper() - tol)
            part.upper_active.push_back(i);
        else
            part.free.push_back(i);
    }
    return part;
}

void add_scaled(GridFunction& y, double a, const GridFunction& x) {
    require_same_space(y, x);
    kern::axpy(a, x.data(), y.data(), y.size());
}

GridFunction linear_combination(double a, const GridFunction& x, double b,
                                const GridFunction& y) {
    require_same_space(x, y);
    GridFunction out(x.space, std::vector<double>(x.size()));
    kern::axpby(a, x.data(), b, y.data(), out.data(), x.size());
    return out;
}

} // namespace sqpbox
