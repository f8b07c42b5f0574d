#ifndef AFEM_MESH_HPP
#define AFEM_MESH_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "afem/geometry.hpp"

namespace afem {

enum class BoundaryLabel : std::uint8_t { Dirichlet, Neumann };

/// Undirected edge key (vertex pair, order-independent).
struct EdgeKey {
    int a, b;
    EdgeKey(int u, int v) : a(std::min(u, v)), b(std::max(u, v)) {}
    bool operator==(const EdgeKey& o) const { return a == o.a && b == o.b; }
};

struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& e) const {
        return std::hash<std::uint64_t>()((std::uint64_t(e.a) << 32) ^ std::uint64_t(e.b));
    }
};

/// One triangle of a triangulation. The refinement edge is the edge between
/// the first two local vertices v[0]-v[1]; the newest vertex is v[2].
/// Bisection lineage is encoded as (root, path): `root` is the index of the
/// ancestor element in the initial mesh and `path` lists the left/right
/// choices down the binary refinement tree (bit i of `path`, i < generation).
/// The parent of a non-initial element is obtained by dropping the last bit.
struct Triangle {
    std::array<int, 3> v;
    int root = -1;
    std::uint64_t path = 0;
    std::uint8_t generation = 0;
};

struct BoundaryEdge {
    int a, b;
    BoundaryLabel label;
};

/// Identifies an element across meshes of the same refinement forest.
struct ForestNode {
    int root;
    std::uint64_t path;
    std::uint8_t depth;
    bool operator==(const ForestNode& o) const {
        return root == o.root && path == o.path && depth == o.depth;
    }
};

struct ForestNodeHash {
    std::size_t operator()(const ForestNode& n) const {
        std::uint64_t h = n.path * 0x9e3779b97f4a7c15ull;
        h ^= (std::uint64_t(n.root) << 8) ^ n.depth;
        return std::hash<std::uint64_t>()(h);
    }
};

/// Conforming 2D triangulation with newest-vertex-bisection bookkeeping.
class Triangulation {
public:
    std::vector<Vec2> vertices;
    std::vector<Triangle> triangles;
    std::vector<BoundaryEdge> boundary_edges;

    int n_elements() const { return static_cast<int>(triangles.size()); }
    int n_vertices() const { return static_cast<int>(vertices.size()); }

    double area(int t) const {
        const Triangle& tr = triangles[t];
        return signed_area(vertices[tr.v[0]], vertices[tr.v[1]], vertices[tr.v[2]]);
    }

    ForestNode node(int t) const {
        const Triangle& tr = triangles[t];
        return {tr.root, tr.path, tr.generation};
    }

    /// Map from (root,path) to element index, for cross-mesh identity.
    std::unordered_map<ForestNode, int, ForestNodeHash> node_index() const {
        std::unordered_map<ForestNode, int, ForestNodeHash> m;
        m.reserve(triangles.size());
        for (int t = 0; t < n_elements(); ++t) m.emplace(node(t), t);
        return m;
    }

    std::unordered_map<EdgeKey, BoundaryLabel, EdgeKeyHash> boundary_map() const {
        std::unordered_map<EdgeKey, BoundaryLabel, EdgeKeyHash> m;
        m.reserve(boundary_edges.size());
        for (const auto& e : boundary_edges) m.emplace(EdgeKey(e.a, e.b), e.label);
        return m;
    }

    /// Adjacent elements per undirected edge (t2 = -1 on boundary edges).
    struct EdgeAdjacency {
        int t1 = -1, t2 = -1;
    };
    std::unordered_map<EdgeKey, EdgeAdjacency, EdgeKeyHash> edge_adjacency() const {
        std::unordered_map<EdgeKey, EdgeAdjacency, EdgeKeyHash> m;
        m.reserve(2 * triangles.size());
        for (int t = 0; t < n_elements(); ++t) {
            const auto& v = triangles[t].v;
            for (int k = 0; k < 3; ++k) {
                EdgeKey key(v[k], v[(k + 1) % 3]);
                auto [it, fresh] = m.try_emplace(key);
                if (fresh)
                    it->second.t1 = t;
                else
                    it->second.t2 = t;
            }
        }
        return m;
    }

    void validate() const;
};

/// Per-element mesh size h_T = |T|^(1/2) and its maximum over the mesh.
struct MeshSize {
    std::vector<double> h;
    double h_max = 0.0;
};

inline MeshSize mesh_size(const Triangulation& mesh) {
    MeshSize s;
    s.h.resize(mesh.n_elements());
    for (int t = 0; t < mesh.n_elements(); ++t) {
        s.h[t] = std::sqrt(mesh.area(t));
        s.h_max = std::max(s.h_max, s.h[t]);
    }
    return s;
}

inline void Triangulation::validate() const {
    for (int t = 0; t < n_elements(); ++t) {
        if (area(t) <= 0.0) throw std::runtime_error("triangulation: non-positive element area");
    }
    auto adj = edge_adjacency();
    auto bnd = boundary_map();
    std::size_t exposed = 0;
    for (const auto& [key, a] : adj) {
        const bool on_boundary = bnd.count(key) > 0;
        if (a.t2 < 0 && !on_boundary)
            throw std::runtime_error("triangulation: interior edge with a single element");
        if (a.t2 >= 0 && on_boundary)
            throw std::runtime_error("triangulation: boundary edge shared by two elements");
        if (a.t2 < 0) ++exposed;
    }
    if (exposed != bnd.size())
        throw std::runtime_error("triangulation: boundary list does not match exposed edges");
    for (const auto& [key, lbl] : bnd) {
        (void)lbl;
        if (!adj.count(key)) throw std::runtime_error("triangulation: dangling boundary edge");
    }
}

using MarkedSet = std::vector<int>;

namespace detail {

// Children of (v0,v1,v2) with refinement edge (v0,v1) and midpoint m:
// left  = (v2, v0, m), appended path bit 0,
// right = (v1, v2, m), appended path bit 1.
// Both inherit counterclockwise orientation and get m as newest vertex.
inline Triangle child_of(const Triangle& t, int which, int m) {
    Triangle c;
    c.root = t.root;
    c.generation = static_cast<std::uint8_t>(t.generation + 1);
    c.path = t.path | (std::uint64_t(which) << t.generation);
    if (which == 0)
        c.v = {t.v[2], t.v[0], m};
    else
        c.v = {t.v[1], t.v[2], m};
    return c;
}

} // namespace detail

/// Coarsest conforming refinement of `mesh` in which every marked element is
/// bisected at least once. Closure propagates marks to refinement edges of
/// neighbours until every element with a marked edge also has a marked
/// refinement edge; each element then splits into 2-4 children.
inline Triangulation refine(const Triangulation& mesh, const MarkedSet& marked) {
    const int n = mesh.n_elements();
    for (int t : marked) {
        if (t < 0 || t >= n) throw std::invalid_argument("refine: marked element not in mesh");
    }
    if (marked.empty()) return mesh;

    auto adj = mesh.edge_adjacency();
    std::unordered_set<EdgeKey, EdgeKeyHash> marked_edges;
    marked_edges.reserve(4 * marked.size());

    std::vector<int> queue;
    auto mark_edge = [&](EdgeKey key) {
        if (marked_edges.insert(key).second) {
            const auto& a = adj.at(key);
            queue.push_back(a.t1);
            if (a.t2 >= 0) queue.push_back(a.t2);
        }
    };

    for (int t : marked) mark_edge(EdgeKey(mesh.triangles[t].v[0], mesh.triangles[t].v[1]));

    // Closure: an element with any marked edge must have its refinement edge marked.
    while (!queue.empty()) {
        const int t = queue.back();
        queue.pop_back();
        const auto& v = mesh.triangles[t].v;
        EdgeKey base(v[0], v[1]);
        if (marked_edges.count(base)) continue;
        if (marked_edges.count(EdgeKey(v[1], v[2])) || marked_edges.count(EdgeKey(v[2], v[0])))
            mark_edge(base);
    }

    Triangulation out;
    out.vertices = mesh.vertices;

    // Midpoints in deterministic (element-order) sequence.
    std::unordered_map<EdgeKey, int, EdgeKeyHash> mid;
    mid.reserve(marked_edges.size());
    auto midpoint_of = [&](int a, int b) {
        EdgeKey key(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        const int idx = out.n_vertices();
        out.vertices.push_back(midpoint(mesh.vertices[a], mesh.vertices[b]));
        mid.emplace(key, idx);
        return idx;
    };

    out.triangles.reserve(mesh.triangles.size() + 2 * marked_edges.size());
    for (int t = 0; t < n; ++t) {
        const Triangle& tr = mesh.triangles[t];
        if (!marked_edges.count(EdgeKey(tr.v[0], tr.v[1]))) {
            out.triangles.push_back(tr);
            continue;
        }
        const int m = midpoint_of(tr.v[0], tr.v[1]);
        for (int which = 0; which < 2; ++which) {
            Triangle c = detail::child_of(tr, which, m);
            // The child refinement edge is one of the parent's outer edges;
            // a second bisection is due exactly when that edge is marked.
            if (marked_edges.count(EdgeKey(c.v[0], c.v[1]))) {
                const int cm = midpoint_of(c.v[0], c.v[1]);
                out.triangles.push_back(detail::child_of(c, 0, cm));
                out.triangles.push_back(detail::child_of(c, 1, cm));
            } else {
                out.triangles.push_back(c);
            }
        }
    }

    out.boundary_edges.reserve(mesh.boundary_edges.size());
    for (const auto& e : mesh.boundary_edges) {
        auto it = mid.find(EdgeKey(e.a, e.b));
        if (it == mid.end()) {
            out.boundary_edges.push_back(e);
        } else {
            out.boundary_edges.push_back({e.a, it->second, e.label});
            out.boundary_edges.push_back({it->second, e.b, e.label});
        }
    }
    return out;
}

inline Triangulation uniform_refine(const Triangulation& mesh) {
    MarkedSet all(mesh.n_elements());
    for (int t = 0; t < mesh.n_elements(); ++t) all[t] = t;
    return refine(mesh, all);
}

/// fine_count - coarse_count + 1 <= fine_count <= coarse_count * (fine_count - coarse_count + 1)
inline bool cardinality_bounds_check(long coarse_count, long fine_count) {
    const long d = fine_count - coarse_count + 1;
    return d <= fine_count && fine_count <= coarse_count * d;
}

namespace detail {

// Set of interior forest nodes (proper prefixes of leaf paths) of a mesh.
inline std::unordered_set<ForestNode, ForestNodeHash> interior_nodes(const Triangulation& mesh) {
    std::unordered_set<ForestNode, ForestNodeHash> s;
    for (const Triangle& t : mesh.triangles) {
        for (int d = 0; d < t.generation; ++d) {
            const std::uint64_t mask = (d == 0) ? 0 : ((std::uint64_t(1) << d) - 1);
            s.insert({t.root, t.path & mask, static_cast<std::uint8_t>(d)});
        }
    }
    return s;
}

inline void check_descends_from(const Triangulation& fine, const Triangulation& ancestor,
                                const char* what) {
    auto leaves = ancestor.node_index();
    for (int ft = 0; ft < fine.n_elements(); ++ft) {
        const Triangle& t = fine.triangles[ft];
        int anc = -1;
        for (int d = t.generation; d >= 0; --d) {
            const std::uint64_t mask = (d == 0) ? 0 : ((std::uint64_t(1) << d) - 1);
            auto it = leaves.find({t.root, t.path & mask, static_cast<std::uint8_t>(d)});
            if (it != leaves.end()) {
                anc = it->second;
                break;
            }
        }
        if (anc < 0)
            throw std::invalid_argument(std::string(what) +
                                        ": meshes do not share the refinement forest");
        // geometric containment guards against unrelated meshes with
        // coincidentally matching forest ids
        const Triangle& at = ancestor.triangles[anc];
        const Vec2 a = ancestor.vertices[at.v[0]], b = ancestor.vertices[at.v[1]],
                   c = ancestor.vertices[at.v[2]];
        Vec2 centroid{0.0, 0.0};
        for (int k = 0; k < 3; ++k) centroid = centroid + (1.0 / 3.0) * fine.vertices[t.v[k]];
        const double A2 = cross(b - a, c - a);
        const double l1 = cross(centroid - a, c - a) / A2;
        const double l2 = cross(b - a, centroid - a) / A2;
        const double l0 = 1.0 - l1 - l2;
        const double eps = 1e-9;
        if (l0 < -eps || l1 < -eps || l2 < -eps)
            throw std::invalid_argument(std::string(what) +
                                        ": meshes do not share the initial mesh");
    }
}

} // namespace detail

/// Coarsest common refinement of two refinements of the same ancestor,
/// realised by the union of the two refinement forests.
inline Triangulation overlay(const Triangulation& a, const Triangulation& b,
                             const Triangulation& common_ancestor) {
    detail::check_descends_from(a, common_ancestor, "overlay");
    detail::check_descends_from(b, common_ancestor, "overlay");
    const auto ia = detail::interior_nodes(a);
    const auto ib = detail::interior_nodes(b);

    Triangulation cur = common_ancestor;
    while (true) {
        MarkedSet m;
        for (int t = 0; t < cur.n_elements(); ++t) {
            const ForestNode nd = cur.node(t);
            if (ia.count(nd) || ib.count(nd)) m.push_back(t);
        }
        if (m.empty()) return cur;
        cur = refine(cur, m);
    }
}

// ---------------------------------------------------------------------------
// Z-shaped initial domains. Both have the re-entrant corner at the origin;
// the initial partition is the fan of the polygon corners around it, with
// each element's refinement edge on its longest edge (ties by lowest vertex
// index pair).

enum class ZVariant {
    SingleCut,    // square minus wedge conv{(0,0),(-1,0),(-1,-0.5)}, Dirichlet everywhere
    SymmetricCut, // square minus wedge conv{(0,0),(-1,0.25),(-1,-0.25)}, mixed boundary
};

namespace detail {

inline Triangle fan_triangle(const std::vector<Vec2>& pts, int i, int j, int k) {
    // order (i,j,k) so that the refinement edge (v0,v1) is the longest edge
    auto len2 = [&](int u, int v) {
        Vec2 d = pts[u] - pts[v];
        return dot(d, d);
    };
    std::array<int, 3> v = {i, j, k};
    std::array<double, 3> l = {len2(j, k), len2(k, i), len2(i, j)}; // edge opposite v[n]
    int opp = 0;
    for (int n = 1; n < 3; ++n) {
        if (l[n] > l[opp] + 1e-15) opp = n;
        else if (std::abs(l[n] - l[opp]) <= 1e-15) {
            auto key = [&](int o) {
                int p = v[(o + 1) % 3], q = v[(o + 2) % 3];
                return std::make_pair(std::min(p, q), std::max(p, q));
            };
            if (key(n) < key(opp)) opp = n;
        }
    }
    Triangle t;
    t.v = {v[(opp + 1) % 3], v[(opp + 2) % 3], v[opp]};
    return t;
}

} // namespace detail

inline Triangulation z_domain(ZVariant variant) {
    const double t = (variant == ZVariant::SingleCut) ? 0.5 : 0.25;
    Triangulation mesh;
    if (variant == ZVariant::SingleCut) {
        mesh.vertices = {{0, 0}, {-1, -t}, {-1, -1}, {1, -1}, {1, 1}, {-1, 1}, {-1, 0}};
    } else {
        mesh.vertices = {{0, 0}, {-1, -t}, {-1, -1}, {1, -1}, {1, 1}, {-1, 1}, {-1, t}};
    }
    for (int i = 1; i <= 5; ++i) {
        Triangle tr = detail::fan_triangle(mesh.vertices, 0, i, i + 1);
        tr.root = i - 1;
        if (signed_area(mesh.vertices[tr.v[0]], mesh.vertices[tr.v[1]], mesh.vertices[tr.v[2]]) <= 0)
            std::swap(tr.v[0], tr.v[1]);
        mesh.triangles.push_back(tr);
    }
    const BoundaryLabel outer =
        (variant == ZVariant::SingleCut) ? BoundaryLabel::Dirichlet : BoundaryLabel::Neumann;
    mesh.boundary_edges.push_back({0, 1, BoundaryLabel::Dirichlet}); // wedge edge
    for (int i = 1; i <= 5; ++i) mesh.boundary_edges.push_back({i, i + 1, outer});
    mesh.boundary_edges.push_back({6, 0, BoundaryLabel::Dirichlet}); // wedge edge
    mesh.validate();
    return mesh;
}

// ---------------------------------------------------------------------------
// Mesh text format:
//   afem-mesh v1
//   vertices N
//   <x y> * N
//   triangles M
//   <i j k> * M        (refinement edge = (i,j))
//   boundary K
//   <i j label> * K    (label D or N)

inline void write_mesh(std::ostream& os, const Triangulation& mesh) {
    os << "afem-mesh v1\n";
    os << "vertices " << mesh.n_vertices() << "\n";
    char buf[64];
    for (const Vec2& p : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", p.x, p.y);
        os << buf;
    }
    os << "triangles " << mesh.n_elements() << "\n";
    for (const Triangle& t : mesh.triangles) os << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << "\n";
    os << "boundary " << mesh.boundary_edges.size() << "\n";
    for (const auto& e : mesh.boundary_edges)
        os << e.a << ' ' << e.b << ' ' << (e.label == BoundaryLabel::Dirichlet ? 'D' : 'N') << "\n";
}

inline void write_mesh_file(const std::string& path, const Triangulation& mesh) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open mesh file for writing: " + path);
    write_mesh(os, mesh);
}

/// Reads the text format. Loaded elements become roots of a fresh forest
/// (generation 0); lineage is not part of the file format.
inline Triangulation read_mesh(std::istream& is) {
    std::string header, word;
    std::getline(is, header);
    if (header != "afem-mesh v1") throw std::runtime_error("mesh file: bad header");
    auto expect = [&](const char* kw) {
        is >> word;
        if (word != kw) throw std::runtime_error(std::string("mesh file: expected '") + kw + "'");
        long n;
        is >> n;
        if (!is || n < 0) throw std::runtime_error("mesh file: bad count");
        return n;
    };
    Triangulation mesh;
    const long nv = expect("vertices");
    mesh.vertices.resize(nv);
    for (auto& p : mesh.vertices) is >> p.x >> p.y;
    const long nt = expect("triangles");
    mesh.triangles.resize(nt);
    for (long t = 0; t < nt; ++t) {
        auto& tr = mesh.triangles[t];
        is >> tr.v[0] >> tr.v[1] >> tr.v[2];
        tr.root = static_cast<int>(t);
    }
    const long nb = expect("boundary");
    mesh.boundary_edges.resize(nb);
    for (auto& e : mesh.boundary_edges) {
        char c;
        is >> e.a >> e.b >> c;
        if (c != 'D' && c != 'N') throw std::runtime_error("mesh file: bad boundary label");
        e.label = (c == 'D') ? BoundaryLabel::Dirichlet : BoundaryLabel::Neumann;
    }
    if (!is) throw std::runtime_error("mesh file: truncated");
    mesh.validate();
    return mesh;
}

inline Triangulation read_mesh_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open mesh file: " + path);
    return read_mesh(is);
}

} // namespace afem

#endif
