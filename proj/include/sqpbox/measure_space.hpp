#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <vector>

#include "sqpbox/kernels.hpp"

namespace sqpbox {

/// Discrete finite measure space: a set of points, each carrying a strictly
/// positive mu-weight (an element volume, a lumped boundary mass, a lumped
/// boundary mass times a time step, ...). All L^q quantities on functions
/// over the space are exact weighted sums.
class MeasureSpace {
public:
    explicit MeasureSpace(std::vector<double> weights);

    std::size_t point_count() const { return weights_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    double total_measure() const { return total_; }

private:
    std::vector<double> weights_;
    double total_;
};

using MeasureSpacePtr = std::shared_ptr<const MeasureSpace>;

/// A function on a discrete measure space: one value per point.
struct GridFunction {
    MeasureSpacePtr space;
    std::vector<double> values;

    GridFunction() = default;
    GridFunction(MeasureSpacePtr s, std::vector<double> v);
    /// Constant function.
    GridFunction(MeasureSpacePtr s, double constant);

    std::size_t size() const { return values.size(); }
    double* data() { return values.data(); }
    const double* data() const { return values.data(); }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Box bounds alpha < beta, possibly one-sided (+-inf). exponent_p is the
/// L^p exponent the control space is equipped with; for p > 2 both bounds
/// must be finite.
class BoxBounds {
public:
    BoxBounds(double lower, double upper, double exponent_p = 2.0);

    double lower() const { return lower_; }
    double upper() const { return upper_; }
    double exponent_p() const { return p_; }
    bool lower_finite() const { return lower_ > -kInf; }
    bool upper_finite() const { return upper_ < kInf; }

    bool contains(double v) const { return v >= lower_ && v <= upper_; }

private:
    double lower_, upper_, p_;
};

/// Disjoint partition of the point set into lower-active, upper-active and
/// free index sets.
struct ActiveSetPartition {
    std::vector<std::size_t> lower_active;
    std::vector<std::size_t> upper_active;
    std::vector<std::size_t> free;

    std::size_t count_lower() const { return lower_active.size(); }
    std::size_t count_upper() const { return upper_active.size(); }
    std::size_t count_free() const { return free.size(); }
};

/// Discrete L^q norm: (sum_i w_i |v_i|^q)^(1/q); max_i |v_i| for q = inf.
/// Throws std::invalid_argument for q < 1.
double weighted_norm(const GridFunction& v, double q);

/// Discrete mu-weighted L^2 pairing sum_i w_i v_i w_i'.
/// Throws std::invalid_argument when the functions live on different spaces.
double weighted_inner(const GridFunction& v, const GridFunction& w);

/// Pointwise projection onto [lower, upper]; infinite sides are no-ops.
GridFunction project_box(const GridFunction& v, const BoxBounds& b);

/// Classify points against the bounds: i is lower-active iff v_i <= alpha+tol,
/// upper-active iff v_i >= beta-tol, free otherwise. A point matching both
/// (possible for large tol) counts as lower-active. Infinite bounds produce
/// empty active sets on that side.
ActiveSetPartition classify_active(const GridFunction& v, const BoxBounds& b,
                                   double tol = 0.0);

// Elementwise helpers used throughout the solvers. All require matching sizes.

/// y += a * x
void add_scaled(GridFunction& y, double a, const GridFunction& x);
/// out = a*x + b*y
GridFunction linear_combination(double a, const GridFunction& x, double b,
                                const GridFunction& y);
/// Internal consistency check; throws std::invalid_argument on mismatch.
void require_same_space(const GridFunction& v, const GridFunction& w);

} // namespace sqpbox
