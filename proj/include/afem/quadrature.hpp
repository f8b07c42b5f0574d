#ifndef AFEM_QUADRATURE_HPP
#define AFEM_QUADRATURE_HPP

#include <array>
#include <cmath>
#include <vector>

#include "afem/geometry.hpp"

namespace afem {

/// Quadrature node in barycentric coordinates with weight w.r.t. unit
/// reference area (weights sum to 1; multiply by |T|).
struct TriQuadNode {
    double l0, l1, l2, w;
};

/// Symmetric 7-point rule, exact for polynomials of total degree 5.
inline const std::vector<TriQuadNode>& tri_rule_degree5() {
    static const std::vector<TriQuadNode> rule = [] {
        std::vector<TriQuadNode> r;
        const double s15 = std::sqrt(15.0);
        r.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0});
        const double a1 = (6.0 - s15) / 21.0, w1 = (155.0 - s15) / 1200.0;
        const double a2 = (6.0 + s15) / 21.0, w2 = (155.0 + s15) / 1200.0;
        for (int k = 0; k < 3; ++k) {
            std::array<double, 3> l{a1, a1, a1};
            l[k] = 1.0 - 2.0 * a1;
            r.push_back({l[0], l[1], l[2], w1});
        }
        for (int k = 0; k < 3; ++k) {
            std::array<double, 3> l{a2, a2, a2};
            l[k] = 1.0 - 2.0 * a2;
            r.push_back({l[0], l[1], l[2], w2});
        }
        return r;
    }();
    return rule;
}

/// Gauss-Legendre nodes/weights on [-1,1].
struct GaussNode {
    double x, w;
};

inline const std::vector<GaussNode>& gauss_rule(int npts) {
    static const std::vector<GaussNode> g3 = {
        {-std::sqrt(3.0 / 5.0), 5.0 / 9.0}, {0.0, 8.0 / 9.0}, {std::sqrt(3.0 / 5.0), 5.0 / 9.0}};
    static const std::vector<GaussNode> g5 = {{-0.90617984593866396, 0.23692688505618911},
                                              {-0.53846931010568311, 0.47862867049936647},
                                              {0.0, 0.56888888888888889},
                                              {0.53846931010568311, 0.47862867049936647},
                                              {0.90617984593866396, 0.23692688505618911}};
    return (npts == 3) ? g3 : g5;
}

/// Collapsed 5x5 Gauss product rule on the triangle; exact through degree 8.
/// Built from the square via (u,v) -> (u, v(1-u)) with Jacobian (1-u).
inline const std::vector<TriQuadNode>& tri_rule_degree8() {
    static const std::vector<TriQuadNode> rule = [] {
        std::vector<TriQuadNode> r;
        const auto& g = gauss_rule(5);
        for (const auto& gu : g) {
            const double u = 0.5 * (gu.x + 1.0);
            for (const auto& gv : g) {
                const double v = 0.5 * (gv.x + 1.0) * (1.0 - u);
                // reference (l1,l2) = (u,v), l0 = 1-u-v; weights normalised
                // to sum to one over the triangle
                r.push_back({1.0 - u - v, u, v, 0.5 * gu.w * gv.w * (1.0 - u)});
            }
        }
        return r;
    }();
    return rule;
}

/// Visits the rule's points on one triangle; the weight passed to the
/// callback already includes the element area.
template <class Visit>
void visit_triangle_points(Vec2 a, Vec2 b, Vec2 c, const std::vector<TriQuadNode>& rule, Visit&& v) {
    const double A = std::abs(signed_area(a, b, c));
    for (const auto& q : rule) {
        Vec2 p{q.l0 * a.x + q.l1 * b.x + q.l2 * c.x, q.l0 * a.y + q.l1 * b.y + q.l2 * c.y};
        v(p, q.w * A);
    }
}

/// Graded point visitor towards a singular corner. If the corner is a vertex
/// of the triangle, the element is split `levels` times into a shrinking
/// corner triangle plus two regular pieces; the regular rule is applied on
/// every piece. Elements near (but not touching) the corner are quadrisected
/// once per level.
template <class Visit>
void visit_triangle_points_graded(Vec2 a, Vec2 b, Vec2 c, Vec2 corner, int levels,
                                  const std::vector<TriQuadNode>& rule, Visit&& v) {
    auto is_corner = [&](Vec2 p) {
        return std::abs(p.x - corner.x) + std::abs(p.y - corner.y) < 1e-14;
    };
    if (levels <= 0) {
        visit_triangle_points(a, b, c, rule, v);
        return;
    }
    if (is_corner(b)) std::swap(a, b), std::swap(b, c); // rotate: corner to a
    else if (is_corner(c)) std::swap(a, c), std::swap(b, c);
    if (is_corner(a)) {
        const Vec2 mab = midpoint(a, b), mac = midpoint(a, c);
        visit_triangle_points(mab, b, c, rule, v);
        visit_triangle_points(mab, c, mac, rule, v);
        visit_triangle_points_graded(a, mab, mac, corner, levels - 1, rule, v);
        return;
    }
    // near-singular without touching: uniform quadrisection
    const Vec2 mab = midpoint(a, b), mbc = midpoint(b, c), mca = midpoint(c, a);
    visit_triangle_points_graded(a, mab, mca, corner, levels - 1, rule, v);
    visit_triangle_points_graded(mab, b, mbc, corner, levels - 1, rule, v);
    visit_triangle_points_graded(mca, mbc, c, corner, levels - 1, rule, v);
    visit_triangle_points_graded(mab, mbc, mca, corner, levels - 1, rule, v);
}

template <class F>
double integrate_triangle(const F& f, Vec2 a, Vec2 b, Vec2 c, const std::vector<TriQuadNode>& rule) {
    double s = 0.0;
    visit_triangle_points(a, b, c, rule, [&](Vec2 p, double w) { s += w * f(p); });
    return s;
}

template <class F>
double integrate_triangle_graded(const F& f, Vec2 a, Vec2 b, Vec2 c, Vec2 corner, int levels,
                                 const std::vector<TriQuadNode>& rule) {
    double s = 0.0;
    visit_triangle_points_graded(a, b, c, corner, levels, rule,
                                 [&](Vec2 p, double w) { s += w * f(p); });
    return s;
}

template <class F>
double integrate_edge(const F& f, Vec2 a, Vec2 b, int npts) {
    const auto& g = gauss_rule(npts);
    const double len = norm(b - a);
    double s = 0.0;
    for (const auto& q : g) {
        const double t = 0.5 * (q.x + 1.0);
        Vec2 p{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        s += 0.5 * q.w * f(p, t);
    }
    return len * s;
}

/// Composite Gauss rule with panels bisected until each panel is short
/// relative to its distance from the singular corner. Keeps data integrals
/// on long boundary edges accurate to near machine precision.
template <class F>
double integrate_edge_graded(const F& f, Vec2 a, Vec2 b, Vec2 corner, int npts, int depth = 12) {
    const double len = norm(b - a);
    const double dist = norm(midpoint(a, b) - corner);
    if (depth <= 0 || len <= 0.5 * dist) return integrate_edge(f, a, b, npts);
    const Vec2 m = midpoint(a, b);
    return integrate_edge_graded(f, a, m, corner, npts, depth - 1) +
           integrate_edge_graded(f, m, b, corner, npts, depth - 1);
}

} // namespace afem

#endif
