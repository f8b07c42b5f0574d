// Acceptance suite: runs the convergence studies end to end and checks every
// quantitative target. Prints one pass/fail line per criterion and exits
// non-zero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "afem/afem.hpp"
#include "support/oracles.hpp"

using namespace afem;

namespace {

int failures = 0;

void line(int id, bool ok, const std::string& what) {
    std::printf("[%s] %02d %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    if (!ok) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

struct TimedRun {
    std::vector<ConvergenceRecord> records;
    double seconds = 0.0;
};

TimedRun timed(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    TimedRun r;
    r.records = run_afem(cfg);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

RunConfig base_config(ProblemSpec problem, MarkingKind kind, double theta, long max_elements) {
    RunConfig cfg;
    cfg.problem = std::move(problem);
    cfg.strategy = {kind, theta, 1};
    cfg.stop.max_elements = max_elements;
    cfg.record_wall_time = false;
    return cfg;
}

} // namespace

int main() {
    // ----- shared runs ------------------------------------------------------
    std::printf("running acceptance studies...\n");

    // run 1: symmetric Z-domain, kappa = 2, theta = 0.2, standard marking
    TimedRun run1 = timed(base_config(z2_problem(2.0), MarkingKind::Standard, 0.2, 100000));
    std::printf("  run1 (z2 adaptive k2 t0.2): %zu steps, %ld elements, %.1f s\n",
                run1.records.size(), run1.records.back().n_elements, run1.seconds);

    // run 2: same problem under uniform refinement
    RunConfig uni = base_config(z2_problem(2.0), MarkingKind::Standard, 0.2, 130000);
    uni.uniform = true;
    uni.instrument = false;
    TimedRun run2 = timed(uni);
    std::printf("  run2 (z2 uniform k2): %zu steps, %ld elements, %.1f s\n", run2.records.size(),
                run2.records.back().n_elements, run2.seconds);

    // 1. optimal adaptive rate for estimator and H1 error
    {
        RateFit fit = fit_rate(run1.records, 1000);
        const bool ok = fit.eta_slope >= -0.57 && fit.eta_slope <= -0.43 && fit.h1_slope &&
                        *fit.h1_slope >= -0.57 && *fit.h1_slope <= -0.43;
        line(1, ok,
             fmt("adaptive rate: eta slope %.4f, H1 slope %.4f in [-0.57,-0.43] (%.0f s)",
                 fit.eta_slope, fit.h1_slope ? *fit.h1_slope : 0.0, run1.seconds));
    }

    // 2. suboptimal uniform rate
    {
        RateFit fit = fit_rate(run2.records, 1000);
        const bool ok = fit.eta_slope >= -0.33 && fit.eta_slope <= -0.21;
        line(2, ok,
             fmt("uniform rate: eta slope %.4f in [-0.33,-0.21], target -beta/2 = %.4f (%.0f s)",
                 fit.eta_slope, -z_domain_beta(ZVariant::SymmetricCut) / 2.0, run2.seconds));
    }

    // 3. theta robustness on the single-cut domain. Large theta behaves
    // almost uniformly for a long transient, so it runs further and every
    // fit uses the final decade of elements.
    {
        bool ok = true;
        std::string detail;
        const std::pair<double, long> cases[] = {{0.1, 50000}, {0.5, 50000}, {0.9, 600000}};
        for (const auto& [theta, max_elements] : cases) {
            RunConfig cfg = base_config(z1_problem(2.0), MarkingKind::Standard, theta, max_elements);
            cfg.instrument = false;
            auto recs = run_afem(cfg);
            const long window = std::max(1000L, recs.back().n_elements / 10);
            RateFit fit = fit_rate(recs, window);
            ok = ok && fit.eta_slope >= -0.58 && fit.eta_slope <= -0.42;
            detail += fmt(" t%.1f:%.4f(N>=%ld)", theta, fit.eta_slope, window);
        }
        line(3, ok, "theta robustness, slopes in [-0.58,-0.42]:" + detail);
    }

    // 4. preasymptotic regime grows with kappa
    {
        RunConfig c1 = base_config(z1_problem(1.0), MarkingKind::Standard, 0.2, 100000);
        c1.instrument = false;
        RunConfig c8 = base_config(z1_problem(8.0), MarkingKind::Standard, 0.2, 100000);
        c8.instrument = false;
        auto r1 = run_afem(c1);
        auto r8 = run_afem(c8);
        const int e1 = corridor_entry_step(r1, 1000, 1.3);
        const int e8 = corridor_entry_step(r8, 1000, 1.3);
        const bool ok = e1 >= 0 && e8 > e1;
        line(4, ok, fmt("corridor entry step: kappa=1 -> %d, kappa=8 -> %d (must be larger)", e1, e8));
    }

    // 5. standard vs expanded marking agree
    {
        RunConfig ce = base_config(z2_problem(2.0), MarkingKind::Expanded, 0.2, 30000);
        ce.instrument = false;
        auto expanded = run_afem(ce);
        const double dev = compare_markings(expanded, run1.records, 1000);
        const bool ok = dev < 0.25;
        line(5, ok, fmt("marking equivalence: max eta deviation %.3f < 0.25 at matched N >= 1e3", dev));
    }

    // 6. efficiency corridor of eta / H1 error
    {
        double lo = 1e300, hi = 0.0;
        for (const auto& r : run1.records) {
            if (!r.solved || r.n_elements < 1000 || !r.h1_error) continue;
            const double q = r.eta / *r.h1_error;
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        const bool ok = hi > 0.0 && hi / lo <= 20.0;
        line(6, ok, fmt("efficiency corridor: ratio in [%.3f,%.3f], spread %.2f <= 20", lo, hi, hi / lo));
    }

    // run 7 (kappa = 0 variant) used by criteria 7 and 11
    TimedRun run7 = timed(base_config(z2_problem(0.0), MarkingKind::Standard, 0.2, 20000));

    // 7. Cea quotients
    {
        bool ok = true;
        double worst = 1.0, tail = 0.0;
        int count = 0;
        std::vector<double> quotients;
        for (const auto& r : run1.records)
            if (r.cea_quotient) quotients.push_back(*r.cea_quotient);
        for (double q : quotients) {
            ok = ok && q >= 1.0 - 1e-6;
            worst = std::max(worst, q);
        }
        for (std::size_t i = quotients.size() >= 10 ? quotients.size() - 10 : 0;
             i < quotients.size(); ++i) {
            tail += quotients[i];
            ++count;
        }
        tail /= std::max(count, 1);
        ok = ok && tail <= 1.2;
        double kappa0_dev = 0.0;
        for (const auto& r : run7.records)
            if (r.cea_quotient) kappa0_dev = std::max(kappa0_dev, std::abs(*r.cea_quotient - 1.0));
        ok = ok && kappa0_dev <= 1e-8;
        line(7, ok,
             fmt("Cea quotients: all >= 1-1e-6, tail avg %.5f <= 1.2, max %.5f; kappa=0 dev %.1e <= 1e-8",
                 tail, worst, kappa0_dev));
    }

    // 8. constructed singular start, then optimal convergence
    {
        ProblemSpec probe = z1_problem(0.0);
        Triangulation mesh = uniform_refine(uniform_refine(probe.initial_mesh));
        DiscreteSpace sp = build_space(mesh);
        AssembledSystem sys = assemble_all(sp, probe);
        const auto ev = afem_test::generalized_eigenvalues(sys.stiffness, sys.mass);
        RunConfig cfg = base_config(z1_problem(std::sqrt(ev[0])), MarkingKind::Standard, 0.2, 40000);
        cfg.initial_uniform_refinements = 2;
        cfg.instrument = false;
        auto recs = run_afem(cfg);
        int fallbacks = 0;
        for (const auto& r : recs) fallbacks += r.solved ? 0 : 1;
        RateFit fit = fit_rate(recs, 1000);
        const bool ok = fallbacks >= 1 && fit.eta_slope >= -0.58 && fit.eta_slope <= -0.42;
        line(8, ok,
             fmt("singular start (kappa^2 = %.5f): %d fallback step(s), slope %.4f in [-0.58,-0.42]",
                 ev[0], fallbacks, fit.eta_slope));
    }

    // 9. combinatorial oracles
    {
        // (a) exact Doerfler minimality on random vectors
        afem_test::Rng rng(987654321);
        bool ok_a = true;
        for (int trial = 0; trial < 500; ++trial) {
            const int n = 1 + rng.below(18);
            std::vector<double> eta(n);
            for (double& v : eta) v = double(rng.below(1 << 16)) / 1024.0;
            const double theta = 0.05 + 0.9 * rng.uniform();
            IndicatorField f;
            f.eta_sq = eta;
            f.finish();
            MarkedSet m = doerfler_mark(f, theta);
            if (!doerfler_criterion_holds(f, m, theta) ||
                int(m.size()) != afem_test::doerfler_minimum_bruteforce(eta, theta))
                ok_a = false;
        }
        // (b) overlay and cardinality bounds on random refinement pairs,
        // (c) son counts and exact area halving on every bisection
        bool ok_b = true, ok_c = true;
        for (int trial = 0; trial < 200; ++trial) {
            Triangulation base =
                (trial % 2 == 0) ? z_domain(ZVariant::SingleCut) : z_domain(ZVariant::SymmetricCut);
            for (int warm = 0; warm < trial % 3; ++warm) base = uniform_refine(base);
            Triangulation a = base, b = base;
            for (int s = 0; s < 2; ++s) {
                MarkedSet ma, mb;
                for (int t = 0; t < a.n_elements(); ++t)
                    if (rng.uniform() < 0.3) ma.push_back(t);
                for (int t = 0; t < b.n_elements(); ++t)
                    if (rng.uniform() < 0.3) mb.push_back(t);
                if (ma.empty()) ma.push_back(rng.below(a.n_elements()));
                if (mb.empty()) mb.push_back(rng.below(b.n_elements()));
                Triangulation a2 = refine(a, ma);
                // (c): descendants per refined element in [2,4], halved areas
                auto prev_nodes = a.node_index();
                std::unordered_map<ForestNode, int, ForestNodeHash> sons;
                for (int t = 0; t < a2.n_elements(); ++t) {
                    const Triangle& tr = a2.triangles[t];
                    int depth = -1;
                    for (int d = tr.generation; d >= 0; --d) {
                        const std::uint64_t mask = (d == 0) ? 0 : ((std::uint64_t(1) << d) - 1);
                        if (prev_nodes.count({tr.root, tr.path & mask, std::uint8_t(d)})) {
                            depth = d;
                            break;
                        }
                    }
                    if (depth < 0) { ok_c = false; continue; }
                    const int anc = prev_nodes.at(
                        {tr.root, depth == 0 ? 0 : tr.path & ((std::uint64_t(1) << depth) - 1),
                         std::uint8_t(depth)});
                    if (tr.generation > depth) ++sons[a.node(anc)];
                    const double expect = a.area(anc) * std::pow(0.5, double(tr.generation - depth));
                    if (std::abs(a2.area(t) - expect) > 1e-12 * expect) ok_c = false;
                }
                for (int t : ma)
                    if (!sons.count(a.node(t))) ok_c = false;
                for (const auto& [nd, c] : sons) {
                    (void)nd;
                    if (c < 2 || c > 4) ok_c = false;
                }
                if (!cardinality_bounds_check(a.n_elements(), a2.n_elements())) ok_b = false;
                a = std::move(a2);
                b = refine(b, mb);
            }
            Triangulation o = overlay(a, b, base);
            if (o.n_elements() > a.n_elements() + b.n_elements() - base.n_elements()) ok_b = false;
            if (!cardinality_bounds_check(base.n_elements(), o.n_elements())) ok_b = false;
        }
        line(9, ok_a && ok_b && ok_c,
             fmt("combinatorial oracles: marking minimality %s, overlay/cardinality %s, bisection %s",
                 ok_a ? "ok" : "FAIL", ok_b ? "ok" : "FAIL", ok_c ? "ok" : "FAIL"));
    }

    // 10. pairwise Galerkin orthogonality on the last 5 solved pairs of run 1
    {
        std::vector<double> viols;
        for (const auto& r : run1.records)
            if (r.galerkin_rel) viols.push_back(*r.galerkin_rel);
        bool ok = viols.size() >= 5;
        double worst = 0.0;
        for (std::size_t i = viols.size() >= 5 ? viols.size() - 5 : 0; i < viols.size(); ++i)
            worst = std::max(worst, viols[i]);
        ok = ok && worst <= 1e-10;
        line(10, ok, fmt("Galerkin orthogonality: last-5 max |b(dU,phi)|/scale = %.2e <= 1e-10", worst));
    }

    // 11. quasi-orthogonality
    {
        double worst0 = 0.0;
        for (const auto& r : run7.records)
            if (r.eps_quasi) worst0 = std::max(worst0, *r.eps_quasi);
        bool ok = worst0 <= 1e-10;

        // kappa = 2 beyond the start of the fit window
        long window_start_step = -1;
        for (const auto& r : run1.records)
            if (r.solved && r.n_elements >= 1000) {
                window_start_step = r.step;
                break;
            }
        double worst2 = 0.0;
        for (const auto& r : run1.records)
            if (r.eps_quasi && r.step >= window_start_step) worst2 = std::max(worst2, *r.eps_quasi);
        ok = ok && worst2 < 0.5;
        line(11, ok,
             fmt("quasi-orthogonality: kappa=0 max eps %.1e <= 1e-10; kappa=2 tail max %.3f < 0.5",
                 worst0, worst2));
    }

    std::printf("%d criterion failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
