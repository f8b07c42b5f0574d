#ifndef AFEM_TESTS_SUPPORT_TEST_MESHES_HPP
#define AFEM_TESTS_SUPPORT_TEST_MESHES_HPP

#include "afem/mesh.hpp"

namespace afem_test {

/// Unit square split along the diagonal (0,0)-(1,1); both refinement edges
/// lie on the diagonal.
inline afem::Triangulation unit_square(afem::BoundaryLabel label = afem::BoundaryLabel::Dirichlet) {
    afem::Triangulation m;
    m.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    afem::Triangle t1;
    t1.v = {2, 0, 1};
    t1.root = 0;
    afem::Triangle t2;
    t2.v = {0, 2, 3};
    t2.root = 1;
    m.triangles = {t1, t2};
    m.boundary_edges = {{0, 1, label}, {1, 2, label}, {2, 3, label}, {3, 0, label}};
    m.validate();
    return m;
}

/// One right triangle with legs of length 1 on the axes.
inline afem::Triangulation single_triangle() {
    afem::Triangulation m;
    m.vertices = {{0, 0}, {1, 0}, {0, 1}};
    afem::Triangle t;
    t.v = {1, 2, 0};
    t.root = 0;
    m.triangles = {t};
    m.boundary_edges = {{0, 1, afem::BoundaryLabel::Dirichlet},
                        {1, 2, afem::BoundaryLabel::Dirichlet},
                        {2, 0, afem::BoundaryLabel::Dirichlet}};
    m.validate();
    return m;
}

} // namespace afem_test

#endif
