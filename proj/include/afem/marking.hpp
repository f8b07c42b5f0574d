#ifndef AFEM_MARKING_HPP
#define AFEM_MARKING_HPP

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "afem/estimator.hpp"
#include "afem/mesh.hpp"

namespace afem {

enum class MarkingKind { Standard, Expanded, MaxGuard };

struct MarkingStrategy {
    MarkingKind kind = MarkingKind::Standard;
    double theta = 0.5;
    int expanded_n = 1;

    void validate() const {
        if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("marking: theta not in (0,1]");
        if (expanded_n < 1) throw std::invalid_argument("marking: expanded_n must be >= 1");
    }
};

/// Minimal-cardinality set M with theta * sum(eta^2) <= sum_M(eta^2),
/// via descending sort and greedy prefix; indicator ties break by element id.
/// Zero-indicator elements are never marked. The target is accumulated in
/// the same (sorted) order as the prefix so the criterion holds exactly for
/// theta = 1.
inline MarkedSet doerfler_mark(const IndicatorField& ind, double theta) {
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("doerfler_mark: theta not in (0,1]");
    const int n = static_cast<int>(ind.eta_sq.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return (ind.eta_sq[a] != ind.eta_sq[b]) ? ind.eta_sq[a] > ind.eta_sq[b] : a < b;
    });
    double total = 0.0;
    for (int i : order) total += ind.eta_sq[i];
    const double target = theta * total;

    MarkedSet m;
    double prefix = 0.0;
    for (int i : order) {
        if (prefix >= target) break;
        if (ind.eta_sq[i] <= 0.0) break;
        m.push_back(i);
        prefix += ind.eta_sq[i];
    }
    return m;
}

/// Expanded variant: the minimal set united with the n largest-area elements
/// (area ties by element id, n clamped to the size of the minimal set).
/// Guarantees that the largest element of the mesh is always refined.
inline MarkedSet expanded_doerfler_mark(const IndicatorField& ind, const Triangulation& mesh,
                                        double theta, int n) {
    MarkedSet m = doerfler_mark(ind, theta);
    if (m.empty()) return m;
    n = std::min<int>(std::max(n, 1), static_cast<int>(m.size()));

    std::vector<int> by_area(mesh.n_elements());
    std::iota(by_area.begin(), by_area.end(), 0);
    std::partial_sort(by_area.begin(), by_area.begin() + n, by_area.end(), [&](int a, int b) {
        const double aa = mesh.area(a), ab = mesh.area(b);
        return (aa != ab) ? aa > ab : a < b;
    });
    std::vector<char> in(mesh.n_elements(), 0);
    for (int t : m) in[t] = 1;
    for (int k = 0; k < n; ++k)
        if (!in[by_area[k]]) {
            in[by_area[k]] = 1;
            m.push_back(by_area[k]);
        }
    std::sort(m.begin(), m.end());
    return m;
}

/// Marking with the estimator-growth guard: when the current total exceeds
/// every previous one (the history starts at eta_{-1} = 1), the whole mesh
/// is marked; otherwise this is the standard criterion.
inline MarkedSet maxguard_mark(const std::vector<double>& history, const IndicatorField& ind,
                               double theta) {
    double guard = 1.0;
    for (double h : history) guard = std::max(guard, h);
    if (ind.total() > guard) {
        MarkedSet all(ind.eta_sq.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    return doerfler_mark(ind, theta);
}

inline MarkedSet mark(const MarkingStrategy& strategy, const IndicatorField& ind,
                      const Triangulation& mesh, const std::vector<double>& history) {
    strategy.validate();
    switch (strategy.kind) {
        case MarkingKind::Standard: return doerfler_mark(ind, strategy.theta);
        case MarkingKind::Expanded:
            return expanded_doerfler_mark(ind, mesh, strategy.theta, strategy.expanded_n);
        case MarkingKind::MaxGuard: return maxguard_mark(history, ind, strategy.theta);
    }
    return {};
}

/// Re-check of the marking criterion, accumulated in sorted order like
/// doerfler_mark itself.
inline bool doerfler_criterion_holds(const IndicatorField& ind, const MarkedSet& m, double theta) {
    std::vector<double> sorted(ind.eta_sq.begin(), ind.eta_sq.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double total = 0.0;
    for (double v : sorted) total += v;
    double marked = 0.0;
    std::vector<double> msort;
    msort.reserve(m.size());
    for (int t : m) msort.push_back(ind.eta_sq[t]);
    std::sort(msort.begin(), msort.end(), std::greater<>());
    for (double v : msort) marked += v;
    return theta * total <= marked;
}

} // namespace afem

#endif
