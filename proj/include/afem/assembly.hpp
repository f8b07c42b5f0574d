#ifndef AFEM_ASSEMBLY_HPP
#define AFEM_ASSEMBLY_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "afem/problem.hpp"
#include "afem/quadrature.hpp"
#include "afem/space.hpp"
#include "afem/sparse.hpp"

namespace afem {

namespace detail {

/// Constant P1 shape-function gradients on a triangle, plus its area.
struct ElementGeometry {
    std::array<Vec2, 3> p;
    std::array<Vec2, 3> grad;
    double area;
};

inline ElementGeometry element_geometry(const Triangulation& mesh, int t) {
    ElementGeometry g;
    const auto& v = mesh.triangles[t].v;
    for (int k = 0; k < 3; ++k) g.p[k] = mesh.vertices[v[k]];
    const double A2 = cross(g.p[1] - g.p[0], g.p[2] - g.p[0]);
    g.area = 0.5 * A2;
    if (g.area <= 0.0) throw std::runtime_error("assembly: degenerate element");
    // grad of the hat at vertex k is the inward normal of the opposite edge
    for (int k = 0; k < 3; ++k) {
        const Vec2 e = g.p[(k + 2) % 3] - g.p[(k + 1) % 3];
        g.grad[k] = {-e.y / A2, e.x / A2};
    }
    return g;
}

/// Hat function of local vertex i evaluated at x (affine extension).
inline double hat_value(const ElementGeometry& g, int i, Vec2 x) {
    return 1.0 + dot(g.grad[i], x - g.p[i]);
}

/// Data integrals near a singular corner need grading; plain elements use the
/// base rule. Elements touching the corner get Duffy-style levels, elements
/// within a few diameters get one uniform composite level.
inline int grading_levels(const ElementGeometry& g, const std::optional<Vec2>& corner) {
    if (!corner) return 0;
    const Vec2 c = *corner;
    auto touches = [&](Vec2 q) { return std::abs(q.x - c.x) + std::abs(q.y - c.y) < 1e-14; };
    if (touches(g.p[0]) || touches(g.p[1]) || touches(g.p[2])) return 3;
    const Vec2 centroid = (1.0 / 3.0) * (g.p[0] + g.p[1] + g.p[2]);
    const double h = std::sqrt(g.area);
    return (norm(centroid - c) < 2.5 * h) ? 1 : 0;
}

template <class F>
double data_integral(const F& f, const ElementGeometry& g, const std::optional<Vec2>& corner) {
    const int levels = grading_levels(g, corner);
    if (levels == 0) return integrate_triangle(f, g.p[0], g.p[1], g.p[2], tri_rule_degree8());
    return integrate_triangle_graded(f, g.p[0], g.p[1], g.p[2], *corner, levels, tri_rule_degree8());
}

/// One graded pass over the element's data-quadrature points.
template <class Visit>
void visit_data_points(const ElementGeometry& g, const std::optional<Vec2>& corner, Visit&& v) {
    const int levels = grading_levels(g, corner);
    if (levels == 0)
        visit_triangle_points(g.p[0], g.p[1], g.p[2], tri_rule_degree8(), v);
    else
        visit_triangle_points_graded(g.p[0], g.p[1], g.p[2], *corner, levels, tri_rule_degree8(), v);
}

/// Outward unit normal of an edge (a,b) of element t (away from the element).
inline Vec2 outward_normal(const Triangulation& mesh, int t, Vec2 a, Vec2 b) {
    Vec2 d = b - a;
    Vec2 n{d.y, -d.x};
    const double len = norm(n);
    n = {n.x / len, n.y / len};
    const auto& v = mesh.triangles[t].v;
    const Vec2 centroid = (1.0 / 3.0) * (mesh.vertices[v[0]] + mesh.vertices[v[1]] + mesh.vertices[v[2]]);
    if (dot(n, midpoint(a, b) - centroid) < 0.0) n = {-n.x, -n.y};
    return n;
}

} // namespace detail

/// Everything one adaptive step needs from one pass over the elements:
/// the discrete operator B, its symmetric elliptic part, the mass matrix,
/// the load vector, and (with an exact solution) the energy-projection
/// right-hand side a(u, phi_i) computed via the strong form.
struct AssembledSystem {
    SparseMatrix B;         // bilinear form b(.,.)
    SparseMatrix stiffness; // a(.,.), the energy-norm Gram matrix
    SparseMatrix mass;      // L2 Gram matrix
    std::vector<double> load;
    std::vector<double> energy_rhs; // empty unless problem.exact is set

    SparseSystem system() const { return {B, load}; }
};

inline AssembledSystem assemble_all(const DiscreteSpace& space, const ProblemSpec& problem) {
    const Triangulation& mesh = *space.mesh;
    const int n = space.dof_count;
    if (problem.kind == ProblemKind::GeneralDiffusion) {
        const Mat2& A = problem.A;
        if (std::abs(A.a12 - A.a21) > 1e-14 * (std::abs(A.a12) + std::abs(A.a21) + 1.0) ||
            A.a11 <= 0.0 || A.a11 * A.a22 - A.a12 * A.a21 <= 0.0)
            throw std::invalid_argument("assemble: diffusion matrix must be symmetric positive definite");
    }
    AssembledSystem out;
    out.load.assign(n, 0.0);
    const bool with_energy_rhs = problem.exact.has_value();
    if (with_energy_rhs) out.energy_rhs.assign(n, 0.0);

    std::vector<Triplet> ts, tm, tb;
    ts.reserve(9 * mesh.n_elements());
    tm.reserve(9 * mesh.n_elements());
    tb.reserve(9 * mesh.n_elements());

    const bool general = problem.kind == ProblemKind::GeneralDiffusion;
    const double kappa2 = problem.kappa * problem.kappa;

    for (int t = 0; t < mesh.n_elements(); ++t) {
        const auto g = detail::element_geometry(mesh, t);
        const auto& v = mesh.triangles[t].v;
        const std::array<int, 3> dof = {space.dof(v[0]), space.dof(v[1]), space.dof(v[2])};

        for (int i = 0; i < 3; ++i) {
            if (dof[i] < 0) continue;
            for (int j = 0; j < 3; ++j) {
                if (dof[j] < 0) continue;
                const double kij = general
                                       ? g.area * dot(problem.A * g.grad[j], g.grad[i])
                                       : g.area * dot(g.grad[j], g.grad[i]);
                const double mij = g.area / 12.0 * (i == j ? 2.0 : 1.0);
                double bij = kij;
                if (general) {
                    bij += dot(problem.convection, g.grad[j]) * g.area / 3.0;
                    bij += problem.reaction * mij;
                } else {
                    bij -= kappa2 * mij;
                }
                ts.push_back({dof[i], dof[j], kij});
                tm.push_back({dof[i], dof[j], mij});
                tb.push_back({dof[i], dof[j], bij});
            }
        }

        // load integrals int f phi_i, graded towards the singular corner, with
        // one data evaluation per quadrature point. The energy right-hand
        // side a(u, phi_i) = int (f + kappa^2 u) phi_i + boundary terms uses
        // the strong form -lap u = f + kappa^2 u of the Helmholtz family.
        std::array<double, 3> fl{}, el{};
        detail::visit_data_points(g, problem.singular_corner, [&](Vec2 x, double w) {
            const double fx = problem.f(x);
            const double rx = with_energy_rhs ? fx + kappa2 * problem.exact->value(x) : 0.0;
            for (int i = 0; i < 3; ++i) {
                const double hat = w * detail::hat_value(g, i, x);
                fl[i] += fx * hat;
                if (with_energy_rhs) el[i] += rx * hat;
            }
        });
        for (int i = 0; i < 3; ++i) {
            if (dof[i] < 0) continue;
            out.load[dof[i]] += fl[i];
            if (with_energy_rhs) out.energy_rhs[dof[i]] += el[i];
        }
    }

    // Neumann data; the hats are evaluated from the position so that panelled
    // (graded) edge quadrature stays consistent
    if (problem.g) {
        auto adj = mesh.edge_adjacency();
        for (const auto& e : mesh.boundary_edges) {
            if (e.label != BoundaryLabel::Neumann) continue;
            const Vec2 a = mesh.vertices[e.a], b = mesh.vertices[e.b];
            const int t = adj.at(EdgeKey(e.a, e.b)).t1;
            const Vec2 nrm = detail::outward_normal(mesh, t, a, b);
            const std::array<int, 2> dofs = {space.dof(e.a), space.dof(e.b)};
            const double inv_len = 1.0 / norm(b - a);
            for (int i = 0; i < 2; ++i) {
                if (dofs[i] < 0) continue;
                auto integrand = [&](Vec2 x, double) {
                    const double s = norm(x - a) * inv_len;
                    const double phi = (i == 0) ? 1.0 - s : s;
                    return problem.g(x, nrm) * phi;
                };
                const double contrib =
                    problem.singular_corner
                        ? integrate_edge_graded(integrand, a, b, *problem.singular_corner, 5)
                        : integrate_edge(integrand, a, b, 5);
                out.load[dofs[i]] += contrib;
                if (with_energy_rhs) out.energy_rhs[dofs[i]] += contrib;
            }
        }
    }

    out.stiffness = SparseMatrix::from_triplets(n, ts);
    out.mass = SparseMatrix::from_triplets(n, tm);
    out.B = SparseMatrix::from_triplets(n, tb);
    return out;
}

/// Discrete system of the variational problem over the free DOFs.
inline SparseSystem assemble(const DiscreteSpace& space, const ProblemSpec& problem) {
    return assemble_all(space, problem).system();
}

/// Energy norm |||v||| = sqrt(a(v,v)) of a coefficient vector (the elliptic
/// part only; the compact perturbation never enters).
inline double energy_norm(const DiscreteSpace& space, const ProblemSpec& problem,
                          const std::vector<double>& coeffs) {
    if (static_cast<int>(coeffs.size()) != space.dof_count)
        throw std::invalid_argument("energy_norm: dimension mismatch");
    const AssembledSystem sys = assemble_all(space, problem);
    return std::sqrt(std::max(0.0, sys.stiffness.quadratic_form(coeffs, coeffs)));
}

/// Squared H1 and energy (gradient-only) errors against the exact solution,
/// both from the same per-element quadrature pass.
struct ErrorNorms {
    double h1_sq = 0.0;
    double energy_sq = 0.0;
};

inline ErrorNorms error_norms_sq(const DiscreteSpace& space, const ProblemSpec& problem,
                                 const std::vector<double>& coeffs, bool with_values = true) {
    if (!problem.exact) throw std::runtime_error("error norms: problem has no exact solution");
    const Triangulation& mesh = *space.mesh;
    const auto u = nodal_values(space, coeffs);
    const auto& exact = *problem.exact;
    ErrorNorms out;
    for (int t = 0; t < mesh.n_elements(); ++t) {
        const auto g = detail::element_geometry(mesh, t);
        const auto& v = mesh.triangles[t].v;
        Vec2 gradU{0.0, 0.0};
        for (int k = 0; k < 3; ++k) gradU = gradU + u[v[k]] * g.grad[k];
        detail::visit_data_points(g, problem.singular_corner, [&](Vec2 x, double w) {
            const Vec2 dg = exact.gradient(x) - gradU;
            out.energy_sq += w * dot(dg, dg);
            if (with_values) {
                double uh = 0.0;
                for (int k = 0; k < 3; ++k) uh += u[v[k]] * detail::hat_value(g, k, x);
                const double dv = exact.value(x) - uh;
                out.h1_sq += w * dv * dv;
            }
        });
    }
    out.h1_sq += out.energy_sq;
    return out;
}

/// Full H1(Omega) norm of (u - U) by per-element quadrature, graded at the
/// singular corner.
inline double h1_error(const DiscreteSpace& space, const ProblemSpec& problem,
                       const std::vector<double>& coeffs) {
    return std::sqrt(std::max(0.0, error_norms_sq(space, problem, coeffs).h1_sq));
}

} // namespace afem

#endif
