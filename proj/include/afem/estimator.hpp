#ifndef AFEM_ESTIMATOR_HPP
#define AFEM_ESTIMATOR_HPP

#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "afem/assembly.hpp"
#include "afem/problem.hpp"
#include "afem/space.hpp"

namespace afem {

/// Per-element squared refinement indicators eta(T)^2 and their total.
struct IndicatorField {
    std::vector<double> eta_sq;
    double total_sq = 0.0;

    double total() const { return std::sqrt(total_sq); }

    void finish() {
        // compensated sum keeps the stored total consistent with the
        // per-element values to well below 1e-13 relative
        double s = 0.0, c = 0.0;
        for (double v : eta_sq) {
            const double y = v - c;
            const double t = s + y;
            c = (t - s) - y;
            s = t;
        }
        total_sq = s;
    }
};

inline double subset_eta_sq(const IndicatorField& ind, const std::vector<int>& elems) {
    double s = 0.0, c = 0.0;
    for (int e : elems) {
        const double y = ind.eta_sq[e] - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

/// Residual indicators: for P1 Helmholtz
///   eta(T)^2 = h_T^2 ||f + kappa^2 U||_T^2 + h_T ||[dn U]||_{dT cap Omega}^2
///              (+ h_T ||g - dn U||_{dT cap Gamma_N}^2 under mixed conditions),
/// with each interior edge contributing once per adjacent element and
/// h_T = |T|^(1/2). The general family uses f - b.grad U - c U.
inline IndicatorField estimate(const DiscreteSpace& space, const ProblemSpec& problem,
                               const std::vector<double>& solution) {
    const Triangulation& mesh = *space.mesh;
    const int nt = mesh.n_elements();
    const auto u = nodal_values(space, solution);
    const bool general = problem.kind == ProblemKind::GeneralDiffusion;
    const double kappa2 = problem.kappa * problem.kappa;

    std::vector<Vec2> grad(nt);
    std::vector<double> h(nt);
    IndicatorField ind;
    ind.eta_sq.assign(nt, 0.0);

    for (int t = 0; t < nt; ++t) {
        const auto g = detail::element_geometry(mesh, t);
        const auto& v = mesh.triangles[t].v;
        Vec2 gU{0.0, 0.0};
        for (int k = 0; k < 3; ++k) gU = gU + u[v[k]] * g.grad[k];
        grad[t] = gU;
        h[t] = std::sqrt(g.area);

        auto residual = [&](Vec2 x) {
            double U = 0.0;
            for (int k = 0; k < 3; ++k) U += u[v[k]] * detail::hat_value(g, k, x);
            const double r = general ? problem.f(x) - dot(problem.convection, gU) - problem.reaction * U
                                     : problem.f(x) + kappa2 * U;
            return r * r;
        };
        const double elem = integrate_triangle(residual, g.p[0], g.p[1], g.p[2], tri_rule_degree5());
        ind.eta_sq[t] = h[t] * h[t] * elem;
    }

    auto adj = mesh.edge_adjacency();
    auto bnd = mesh.boundary_map();
    for (const auto& [key, a] : adj) {
        const Vec2 pa = mesh.vertices[key.a], pb = mesh.vertices[key.b];
        const double len = norm(pb - pa);
        if (a.t2 >= 0) {
            // interior edge: the jump of the (co-)normal derivative is
            // edgewise constant for P1
            Vec2 d = general ? problem.A * (grad[a.t1] - grad[a.t2]) : grad[a.t1] - grad[a.t2];
            Vec2 nrm{(pb - pa).y / len, -(pb - pa).x / len};
            const double jump = dot(d, nrm);
            const double contrib = jump * jump * len;
            ind.eta_sq[a.t1] += h[a.t1] * contrib;
            ind.eta_sq[a.t2] += h[a.t2] * contrib;
        } else if (problem.g && bnd.at(key) == BoundaryLabel::Neumann) {
            const int t = a.t1;
            const Vec2 nrm = detail::outward_normal(mesh, t, pa, pb);
            const Vec2 flux = general ? problem.A * grad[t] : grad[t];
            const double dn = dot(flux, nrm);
            const double contrib = integrate_edge(
                [&](Vec2 x, double) {
                    const double r = problem.g(x, nrm) - dn;
                    return r * r;
                },
                pa, pb, 3);
            ind.eta_sq[t] += h[t] * contrib;
        }
    }
    ind.finish();
    return ind;
}

/// Element data oscillations osc(T)^2 = h_T^2 min_{Q in P^q} ||R - Q||_T^2
/// for the full element residual R; edge oscillations vanish for P1 since
/// jumps are edgewise constant. q in {0, 1}.
inline std::vector<double> oscillation(const DiscreteSpace& space, const ProblemSpec& problem,
                                       const std::vector<double>& solution, int q) {
    if (q != 0 && q != 1) throw std::invalid_argument("oscillation: q must be 0 or 1");
    const Triangulation& mesh = *space.mesh;
    const auto u = nodal_values(space, solution);
    const bool general = problem.kind == ProblemKind::GeneralDiffusion;
    const double kappa2 = problem.kappa * problem.kappa;
    std::vector<double> osc(mesh.n_elements(), 0.0);

    for (int t = 0; t < mesh.n_elements(); ++t) {
        const auto g = detail::element_geometry(mesh, t);
        const auto& v = mesh.triangles[t].v;
        Vec2 gU{0.0, 0.0};
        for (int k = 0; k < 3; ++k) gU = gU + u[v[k]] * g.grad[k];
        auto R = [&](Vec2 x) {
            double U = 0.0;
            for (int k = 0; k < 3; ++k) U += u[v[k]] * detail::hat_value(g, k, x);
            return general ? problem.f(x) - dot(problem.convection, gU) - problem.reaction * U
                           : problem.f(x) + kappa2 * U;
        };
        const Vec2 centroid = (1.0 / 3.0) * (g.p[0] + g.p[1] + g.p[2]);
        // L2 projection onto P^q via the monomial basis {1, x-xc, y-yc}
        const int nb = (q == 0) ? 1 : 3;
        auto basis = [&](int k, Vec2 x) {
            if (k == 0) return 1.0;
            return (k == 1) ? x.x - centroid.x : x.y - centroid.y;
        };
        double G[3][3] = {};
        double rhs[3] = {};
        const auto& rule = tri_rule_degree8();
        for (int i = 0; i < nb; ++i) {
            for (int j = 0; j < nb; ++j)
                G[i][j] = integrate_triangle(
                    [&](Vec2 x) { return basis(i, x) * basis(j, x); }, g.p[0], g.p[1], g.p[2], rule);
            rhs[i] = integrate_triangle([&](Vec2 x) { return R(x) * basis(i, x); }, g.p[0], g.p[1],
                                        g.p[2], rule);
        }
        // solve the tiny SPD system by Cholesky-free Gaussian elimination
        double coef[3] = {};
        {
            double a[3][4];
            for (int i = 0; i < nb; ++i) {
                for (int j = 0; j < nb; ++j) a[i][j] = G[i][j];
                a[i][nb] = rhs[i];
            }
            for (int i = 0; i < nb; ++i) {
                for (int r = i + 1; r < nb; ++r) {
                    const double m = a[r][i] / a[i][i];
                    for (int c2 = i; c2 <= nb; ++c2) a[r][c2] -= m * a[i][c2];
                }
            }
            for (int i = nb - 1; i >= 0; --i) {
                double s = a[i][nb];
                for (int j = i + 1; j < nb; ++j) s -= a[i][j] * coef[j];
                coef[i] = s / a[i][i];
            }
        }
        const double norm_sq = integrate_triangle([&](Vec2 x) { return R(x) * R(x); }, g.p[0],
                                                  g.p[1], g.p[2], rule);
        double proj_sq = 0.0;
        for (int i = 0; i < nb; ++i) proj_sq += coef[i] * rhs[i];
        osc[t] = g.area * std::max(0.0, norm_sq - proj_sq);
    }
    return osc;
}

/// Measured counterparts of the stability, reduction and discrete-reliability
/// constants for one nested pair of solved meshes. Quotients with vanishing
/// denominators are reported absent.
struct EstimatorConstants {
    std::optional<double> stability;   // C_stb
    std::optional<double> reduction;   // C_red (with q fixed at 2^(-1/2))
    std::optional<double> reliability; // C_rel with R = coarse \ fine
    static constexpr double q_reduction = 0.70710678118654752;
};

struct StepData {
    const DiscreteSpace* space;
    const IndicatorField* indicators;
    const std::vector<double>* solution;
};

inline EstimatorConstants measure_estimator_constants(const StepData& coarse, const StepData& fine,
                                                      const SparseMatrix* fine_stiffness = nullptr,
                                                      const SparseMatrix* fine_mass = nullptr) {
    const Triangulation& cm = *coarse.space->mesh;
    const Triangulation& fm = *fine.space->mesh;
    auto fine_nodes = fm.node_index();

    // split element sets by cross-mesh identity
    std::vector<int> common_c, refined_c, common_f, new_f;
    for (int t = 0; t < cm.n_elements(); ++t) {
        auto it = fine_nodes.find(cm.node(t));
        if (it != fine_nodes.end()) {
            common_c.push_back(t);
            common_f.push_back(it->second);
        } else {
            refined_c.push_back(t);
        }
    }
    {
        auto coarse_nodes = cm.node_index();
        for (int t = 0; t < fm.n_elements(); ++t)
            if (!coarse_nodes.count(fm.node(t))) new_f.push_back(t);
    }
    if (common_c.size() + refined_c.size() != static_cast<std::size_t>(cm.n_elements()))
        throw std::invalid_argument("measure_estimator_constants: meshes not nested");

    // || U_fine - U_coarse ||_{H1} on the fine mesh
    Prolongation P = build_prolongation(*coarse.space, *fine.space);
    std::vector<double> diff = P.apply(*coarse.solution);
    for (int i = 0; i < fine.space->dof_count; ++i) diff[i] = (*fine.solution)[i] - diff[i];
    AssembledSystem gram;
    if (!fine_stiffness || !fine_mass) {
        ProblemSpec laplace; // Gram matrices only depend on the mesh
        laplace.f = [](Vec2) { return 0.0; };
        gram = assemble_all(*fine.space, laplace);
        fine_stiffness = &gram.stiffness;
        fine_mass = &gram.mass;
    }
    const double dH1 = std::sqrt(std::max(0.0, fine_stiffness->quadratic_form(diff, diff) +
                                                   fine_mass->quadratic_form(diff, diff)));

    EstimatorConstants out;
    const double eta_c_common = std::sqrt(subset_eta_sq(*coarse.indicators, common_c));
    const double eta_f_common = std::sqrt(subset_eta_sq(*fine.indicators, common_f));
    const double eta_c_refined_sq = subset_eta_sq(*coarse.indicators, refined_c);
    const double eta_f_new_sq = subset_eta_sq(*fine.indicators, new_f);

    if (dH1 > 0.0) {
        out.stability = std::abs(eta_f_common - eta_c_common) / dH1;
        out.reduction = std::sqrt(std::max(0.0, eta_f_new_sq -
                                                    EstimatorConstants::q_reduction * eta_c_refined_sq)) /
                        dH1;
    }
    if (eta_c_refined_sq > 0.0) out.reliability = dH1 / std::sqrt(eta_c_refined_sq);
    return out;
}

/// Truth value of the estimator-reduction inequality
/// fine^2 <= q_est * coarse^2 + C_est * correction^2.
inline bool estimator_reduction_check(double coarse_eta, double fine_eta, double correction,
                                      double q_est, double C_est) {
    return fine_eta * fine_eta <= q_est * coarse_eta * coarse_eta + C_est * correction * correction;
}

/// Indicator dump behind a debug flag: element_id,eta_sq
inline void dump_indicators(std::ostream& os, const IndicatorField& ind) {
    char buf[64];
    for (std::size_t i = 0; i < ind.eta_sq.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, ind.eta_sq[i]);
        os << buf;
    }
}

} // namespace afem

#endif
