#include "sqpbox/problem.hpp"

#include <cmath>
#include <stdexcept>

#include "sqpbox/errors.hpp"

namespace sqpbox {

void SqpConfig::validate() const {
    if (!(kappa > 0.0)) throw std::invalid_argument("SqpConfig: kappa must be positive");
    if (!(stop_tol > 0.0) || !(qp_tol > 0.0) || !(cg_tol > 0.0))
        throw std::invalid_argument("SqpConfig: tolerances must be positive");
    if (max_outer_iters <= 0 || qp_max_iters <= 0 || cg_max_iters < 0)
        throw std::invalid_argument("SqpConfig: iteration caps must be positive");
}

double FullObjective::value(const GridFunction& u) const {
    const double nrm2 = weighted_inner(u, u);
    return oracle->objective(u) + 0.5 * kappa * nrm2;
}

GridFunction gradient(ProblemOracle& oracle, double kappa, const GridFunction& u) {
    GridFunction g = oracle.phi(u);
    add_scaled(g, kappa, u);
    return g;
}

double kkt_residual(ProblemOracle& oracle, double kappa, const GridFunction& u) {
    if (!(kappa > 0.0)) throw std::invalid_argument("kkt_residual: kappa must be positive");
    GridFunction target = oracle.phi(u);
    for (double& t : target.values) t = -t / kappa;
    GridFunction proj = project_box(target, oracle.bounds());
    add_scaled(proj, -1.0, u);
    return weighted_norm(proj, kInf);
}

namespace {

GridFunction perturbed(const GridFunction& u, double h, const GridFunction& v) {
    return linear_combination(1.0, u, h, v);
}

} // namespace

std::vector<std::pair<double, double>> fd_gradient_check(
    ProblemOracle& oracle, const GridFunction& u, const GridFunction& v,
    const std::vector<double>& steps) {
    const GridFunction phi_u = oracle.phi(u);
    const double directional = weighted_inner(phi_u, v);
    std::vector<std::pair<double, double>> out;
    out.reserve(steps.size());
    for (double h : steps) {
        if (!(h > 0.0)) throw std::invalid_argument("fd_gradient_check: steps must be positive");
        double jp, jm;
        try {
            jp = oracle.objective(perturbed(u, h, v));
            jm = oracle.objective(perturbed(u, -h, v));
        } catch (const StateSolveError& e) {
            throw DomainError(std::string("fd_gradient_check: perturbed point inadmissible: ") + e.what());
        }
        out.emplace_back(h, std::abs((jp - jm) / (2.0 * h) - directional));
    }
    return out;
}

std::vector<std::pair<double, double>> fd_hessian_check(
    ProblemOracle& oracle, const GridFunction& u, const GridFunction& v,
    const GridFunction& w, const std::vector<double>& steps) {
    const GridFunction hw = oracle.apply_phi_prime(u, w);
    const double exact = weighted_inner(hw, v);
    std::vector<std::pair<double, double>> out;
    out.reserve(steps.size());
    for (double h : steps) {
        if (!(h > 0.0)) throw std::invalid_argument("fd_hessian_check: steps must be positive");
        GridFunction pp, pm;
        try {
            pp = oracle.phi(perturbed(u, h, w));
            pm = oracle.phi(perturbed(u, -h, w));
        } catch (const StateSolveError& e) {
            throw DomainError(std::string("fd_hessian_check: perturbed point inadmissible: ") + e.what());
        }
        const GridFunction diff = linear_combination(1.0, pp, -1.0, pm);
        out.emplace_back(h, std::abs(weighted_inner(diff, v) / (2.0 * h) - exact));
    }
    return out;
}

double symmetry_defect(ProblemOracle& oracle, const GridFunction& u,
                       const GridFunction& v, const GridFunction& w) {
    const GridFunction hv = oracle.apply_phi_prime(u, v);
    const GridFunction hw = oracle.apply_phi_prime(u, w);
    return std::abs(weighted_inner(hv, w) - weighted_inner(hw, v));
}

} // namespace sqpbox
