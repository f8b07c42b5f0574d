#ifndef AFEM_PROBLEM_HPP
#define AFEM_PROBLEM_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "afem/geometry.hpp"
#include "afem/mesh.hpp"

namespace afem {

struct ExactSolution {
    std::function<double(Vec2)> value;
    std::function<Vec2(Vec2)> gradient;
};

enum class ProblemKind {
    Helmholtz,        // -lap(u) - kappa^2 u = f
    GeneralDiffusion, // -div(A grad u) + b.grad(u) + c u = f, constant coefficients
};

/// Model problem data on a fixed initial triangulation. Homogeneous
/// Dirichlet values on the Dirichlet boundary part; Neumann data g on the
/// rest. The optional singular corner marks where data/error quadrature is
/// graded.
struct ProblemSpec {
    std::string name;
    Triangulation initial_mesh;
    ProblemKind kind = ProblemKind::Helmholtz;
    double kappa = 0.0;
    Mat2 A;          // GeneralDiffusion only; must be SPD
    Vec2 convection; // GeneralDiffusion only
    double reaction = 0.0;
    std::function<double(Vec2)> f;
    // Neumann data as a function of (point, outward unit normal); empty when
    // the boundary is Dirichlet everywhere.
    std::function<double(Vec2, Vec2)> g;
    std::optional<ExactSolution> exact;
    std::optional<Vec2> singular_corner;
};

namespace detail {

inline double corner_exponent(double t) { return M_PI / (2.0 * M_PI - 2.0 * std::atan(t)); }

} // namespace detail

/// Singularity exponent beta = pi/alpha of the Z-domain variant.
inline double z_domain_beta(ZVariant variant) {
    return (variant == ZVariant::SingleCut) ? M_PI / (2.0 * M_PI - std::atan(0.5))
                                            : detail::corner_exponent(0.25);
}

/// Helmholtz on the single-cut Z-domain with f = 1 and homogeneous
/// Dirichlet boundary. The exact solution is unknown.
inline ProblemSpec z1_problem(double kappa) {
    ProblemSpec p;
    p.name = "z1";
    p.initial_mesh = z_domain(ZVariant::SingleCut);
    p.kappa = kappa;
    p.f = [](Vec2) { return 1.0; };
    p.singular_corner = Vec2{0.0, 0.0};
    return p;
}

/// Helmholtz on the symmetric-cut Z-domain with the prescribed singular
/// solution u = r^beta cos(beta*phi), manufactured data f = -kappa^2 u
/// (u is harmonic) and g = dn(u) on the Neumann part.
inline ProblemSpec z2_problem(double kappa) {
    ProblemSpec p;
    p.name = "z2";
    p.initial_mesh = z_domain(ZVariant::SymmetricCut);
    p.kappa = kappa;
    const double beta = z_domain_beta(ZVariant::SymmetricCut);

    auto value = [beta](Vec2 x) {
        const double r = std::sqrt(x.x * x.x + x.y * x.y);
        if (r == 0.0) return 0.0;
        const double phi = std::atan2(x.y, x.x);
        return std::pow(r, beta) * std::cos(beta * phi);
    };
    auto gradient = [beta](Vec2 x) -> Vec2 {
        const double r = std::sqrt(x.x * x.x + x.y * x.y);
        if (r == 0.0) return {0.0, 0.0}; // singular; quadrature never lands here
        const double phi = std::atan2(x.y, x.x);
        const double s = beta * std::pow(r, beta - 1.0);
        return {s * std::cos((beta - 1.0) * phi), -s * std::sin((beta - 1.0) * phi)};
    };
    p.exact = ExactSolution{value, gradient};
    p.f = [kappa, value](Vec2 x) { return -kappa * kappa * value(x); };
    p.g = [gradient](Vec2 x, Vec2 n) { return dot(gradient(x), n); };
    p.singular_corner = Vec2{0.0, 0.0};
    return p;
}

} // namespace afem

#endif
