#ifndef AFEM_SPACE_HPP
#define AFEM_SPACE_HPP

#include <array>
#include <stdexcept>
#include <utility>
#include <vector>

#include "afem/mesh.hpp"

namespace afem {

/// Lowest-order nodal space on a triangulation: one degree of freedom per
/// vertex not lying on the Dirichlet boundary.
struct DiscreteSpace {
    const Triangulation* mesh = nullptr;
    std::vector<int> dof_of_vertex; // -1 for Dirichlet-constrained vertices
    int dof_count = 0;

    int dof(int vertex) const { return dof_of_vertex[vertex]; }
};

inline DiscreteSpace build_space(const Triangulation& mesh) {
    DiscreteSpace space;
    space.mesh = &mesh;
    std::vector<bool> constrained(mesh.n_vertices(), false);
    for (const auto& e : mesh.boundary_edges) {
        if (e.label == BoundaryLabel::Dirichlet) {
            constrained[e.a] = true;
            constrained[e.b] = true;
        }
    }
    space.dof_of_vertex.assign(mesh.n_vertices(), -1);
    for (int v = 0; v < mesh.n_vertices(); ++v)
        if (!constrained[v]) space.dof_of_vertex[v] = space.dof_count++;
    return space;
}

/// Nodal values (one per vertex) of a coefficient vector; constrained
/// vertices carry the homogeneous Dirichlet value zero.
inline std::vector<double> nodal_values(const DiscreteSpace& space, const std::vector<double>& coeffs) {
    if (static_cast<int>(coeffs.size()) != space.dof_count)
        throw std::invalid_argument("nodal_values: coefficient dimension mismatch");
    std::vector<double> u(space.mesh->n_vertices(), 0.0);
    for (int v = 0; v < space.mesh->n_vertices(); ++v)
        if (space.dof_of_vertex[v] >= 0) u[v] = coeffs[space.dof_of_vertex[v]];
    return u;
}

/// Sparse prolongation: each fine degree of freedom as a convex combination
/// of at most three coarse ones (barycentric coordinates within the coarse
/// ancestor element).
struct Prolongation {
    int fine_dofs = 0, coarse_dofs = 0;
    std::vector<std::array<std::pair<int, double>, 3>> entries; // per fine dof
    std::vector<int> entry_count;

    std::vector<double> apply(const std::vector<double>& coarse) const {
        if (static_cast<int>(coarse.size()) != coarse_dofs)
            throw std::invalid_argument("prolongation: dimension mismatch");
        std::vector<double> fine(fine_dofs, 0.0);
        for (int i = 0; i < fine_dofs; ++i)
            for (int k = 0; k < entry_count[i]; ++k)
                fine[i] += entries[i][k].second * coarse[entries[i][k].first];
        return fine;
    }

    /// y = P^T x
    std::vector<double> apply_transpose(const std::vector<double>& fine) const {
        if (static_cast<int>(fine.size()) != fine_dofs)
            throw std::invalid_argument("prolongation: dimension mismatch");
        std::vector<double> coarse(coarse_dofs, 0.0);
        for (int i = 0; i < fine_dofs; ++i)
            for (int k = 0; k < entry_count[i]; ++k)
                coarse[entries[i][k].first] += entries[i][k].second * fine[i];
        return coarse;
    }
};

/// Builds the prolongation from a space on `coarse` to a space on `fine`,
/// where fine is a refinement of coarse (same forest).
inline Prolongation build_prolongation(const DiscreteSpace& coarse, const DiscreteSpace& fine) {
    const Triangulation& cm = *coarse.mesh;
    const Triangulation& fm = *fine.mesh;
    auto coarse_of = cm.node_index();

    Prolongation P;
    P.fine_dofs = fine.dof_count;
    P.coarse_dofs = coarse.dof_count;
    P.entries.resize(fine.dof_count);
    P.entry_count.assign(fine.dof_count, 0);
    std::vector<bool> done(fine.dof_count, false);

    for (int ft = 0; ft < fm.n_elements(); ++ft) {
        const Triangle& t = fm.triangles[ft];
        // ancestor element in the coarse mesh
        int ct = -1;
        for (int d = t.generation; d >= 0; --d) {
            const std::uint64_t mask = (d == 0) ? 0 : ((std::uint64_t(1) << d) - 1);
            auto it = coarse_of.find({t.root, t.path & mask, static_cast<std::uint8_t>(d)});
            if (it != coarse_of.end()) {
                ct = it->second;
                break;
            }
        }
        if (ct < 0) throw std::invalid_argument("prolongation: fine mesh does not refine coarse mesh");
        const Triangle& c = cm.triangles[ct];
        const Vec2 a = cm.vertices[c.v[0]], b = cm.vertices[c.v[1]], cc = cm.vertices[c.v[2]];
        const double A2 = cross(b - a, cc - a);
        for (int k = 0; k < 3; ++k) {
            const int fv = t.v[k];
            const int fd = fine.dof(fv);
            if (fd < 0 || done[fd]) continue;
            done[fd] = true;
            const Vec2 p = fm.vertices[fv];
            const double l1 = cross(p - a, cc - a) / A2;
            const double l2 = cross(b - a, p - a) / A2;
            const double l0 = 1.0 - l1 - l2;
            const std::array<double, 3> lam = {l0, l1, l2};
            for (int j = 0; j < 3; ++j) {
                const int cd = coarse.dof(c.v[j]);
                if (cd >= 0 && lam[j] != 0.0)
                    P.entries[fd][P.entry_count[fd]++] = {cd, lam[j]};
            }
        }
    }
    return P;
}

} // namespace afem

#endif
