#include <catch_amalgamated.hpp>

#include <cmath>

#include "afem/driver.hpp"
#include "support/oracles.hpp"

using namespace afem;

namespace {

std::vector<ConvergenceRecord> synthetic(const std::vector<double>& etas) {
    std::vector<ConvergenceRecord> recs;
    for (std::size_t i = 0; i < etas.size(); ++i) {
        ConvergenceRecord r;
        r.step = int(i);
        r.n_elements = 10 * (i + 1);
        r.eta = etas[i];
        r.solved = true;
        recs.push_back(r);
    }
    return recs;
}

} // namespace

TEST_CASE("laplace-like run never hits the fallback and the estimator decays") {
    RunConfig cfg;
    cfg.problem = z1_problem(0.0);
    cfg.strategy = {MarkingKind::Standard, 0.2, 1};
    cfg.stop.max_elements = 1500;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    REQUIRE(recs.size() >= 8);
    for (const auto& r : recs) REQUIRE(r.solved);
    // eta strictly decreasing after finitely many steps
    for (std::size_t i = recs.size() / 2; i + 1 < recs.size(); ++i)
        REQUIRE(recs[i + 1].eta < recs[i].eta);
    // element counts monotone, closure accounting within its ceiling
    for (std::size_t i = 0; i + 1 < recs.size(); ++i)
        REQUIRE(recs[i + 1].n_elements >= recs[i].n_elements);
    for (const auto& r : recs) REQUIRE(r.closure_ratio <= 20.0);
}

TEST_CASE("constructed singular start exercises the fallback exactly once") {
    // kappa^2 = generalized eigenvalue of the twice-refined z1 mesh
    ProblemSpec probe = z1_problem(0.0);
    Triangulation mesh = probe.initial_mesh;
    mesh = uniform_refine(uniform_refine(mesh));
    DiscreteSpace sp = build_space(mesh);
    REQUIRE(sp.dof_count >= 1);
    AssembledSystem sys = assemble_all(sp, probe);
    const auto ev = afem_test::generalized_eigenvalues(sys.stiffness, sys.mass);

    RunConfig cfg;
    cfg.problem = z1_problem(std::sqrt(ev[0]));
    cfg.initial_uniform_refinements = 2;
    cfg.strategy = {MarkingKind::Standard, 0.3, 1};
    cfg.stop.max_elements = 2000;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);

    REQUIRE_FALSE(recs.empty());
    REQUIRE_FALSE(recs[0].solved);
    REQUIRE(recs[0].eta == 1.0); // eta_{-1} carried bit-exactly
    REQUIRE(recs[0].marked_count == recs[0].n_elements);
    int fallbacks = 0;
    for (const auto& r : recs) fallbacks += r.solved ? 0 : 1;
    REQUIRE(fallbacks >= 1);
    REQUIRE(recs.back().solved);
    // after the fallback the run proceeds adaptively
    REQUIRE(recs.back().n_elements >= 2000);
}

TEST_CASE("expanded marking keeps h_max non-increasing") {
    RunConfig cfg;
    cfg.problem = z1_problem(1.0);
    cfg.strategy = {MarkingKind::Expanded, 0.3, 1};
    cfg.stop.max_elements = 1200;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    for (std::size_t i = 0; i + 1 < recs.size(); ++i)
        REQUIRE(recs[i + 1].h_max <= recs[i].h_max * (1 + 1e-13));
}

TEST_CASE("stop rules: max_steps and eta_tol") {
    RunConfig cfg;
    cfg.problem = z1_problem(0.0);
    cfg.strategy = {MarkingKind::Standard, 0.5, 1};
    cfg.stop.max_steps = 5;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    REQUIRE(recs.size() == 5);

    RunConfig cfg2 = cfg;
    cfg2.stop.max_steps.reset();
    cfg2.stop.eta_tol = recs.back().eta; // reachable tolerance
    auto recs2 = run_afem(cfg2);
    REQUIRE(recs2.back().eta <= *cfg2.stop.eta_tol);

    RunConfig bad;
    bad.problem = z1_problem(0.0);
    REQUIRE_THROWS_AS(run_afem(bad), std::invalid_argument);
}

TEST_CASE("instrumented mixed-boundary run: errors, Cea, quasi-orthogonality") {
    RunConfig cfg;
    cfg.problem = z2_problem(0.0);
    cfg.strategy = {MarkingKind::Standard, 0.3, 1};
    cfg.stop.max_elements = 2500;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    int measured = 0;
    for (const auto& r : recs) {
        REQUIRE(r.solved);
        if (r.n_dofs == 0) continue;
        REQUIRE(r.h1_error.has_value());
        REQUIRE(r.energy_error.has_value());
        REQUIRE(*r.h1_error >= *r.energy_error);
        REQUIRE(r.cea_quotient.has_value());
        // kappa = 0: the Galerkin solution IS the energy projection
        REQUIRE(*r.cea_quotient == 1.0);
        if (r.eps_quasi) {
            ++measured;
            REQUIRE(*r.eps_quasi <= 1e-10); // exact Pythagoras up to solver residual
        }
        if (r.galerkin_rel) REQUIRE(*r.galerkin_rel <= 1e-9);
    }
    REQUIRE(measured >= 3);
    // errors decrease along the run
    REQUIRE(*recs.back().h1_error < *recs[2].h1_error);
}

TEST_CASE("kappa = 2 instrumentation: Cea tends to one, eps stays small") {
    RunConfig cfg;
    cfg.problem = z2_problem(2.0);
    cfg.strategy = {MarkingKind::Standard, 0.3, 1};
    cfg.stop.max_elements = 4000;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    for (const auto& r : recs) {
        if (!r.cea_quotient) continue;
        REQUIRE(*r.cea_quotient >= 1.0 - 1e-6);
    }
    REQUIRE(recs.back().cea_quotient.has_value());
    REQUIRE(*recs.back().cea_quotient <= 1.2);
    auto eps = quasi_orthogonality_series(recs);
    bool any = false;
    for (std::size_t i = recs.size() / 2; i < recs.size(); ++i)
        if (eps[i]) {
            any = true;
            REQUIRE(*eps[i] < 0.5);
        }
    REQUIRE(any);
    // measured estimator constants come out finite on consecutive pairs
    int with_constants = 0;
    for (const auto& r : recs)
        if (r.c_stb && r.c_rel) ++with_constants;
    REQUIRE(with_constants >= 5);
}

TEST_CASE("driver re-checks the marking criterion each step") {
    // sanity: a run with theta = 1 must mark every positive-eta element
    RunConfig cfg;
    cfg.problem = z1_problem(1.0);
    cfg.strategy = {MarkingKind::Standard, 1.0, 1};
    cfg.stop.max_steps = 3;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    for (const auto& r : recs) REQUIRE(r.marked_count == r.n_elements);
}

TEST_CASE("linear convergence fit") {
    SECTION("exact geometric decay") {
        std::vector<double> etas;
        for (int i = 0; i < 12; ++i) etas.push_back(std::pow(2.0, -i));
        LinearFit fit = linear_convergence_fit(synthetic(etas));
        REQUIRE(fit.convergent);
        REQUIRE(fit.q_lin == Catch::Approx(0.5).epsilon(1e-12));
        REQUIRE(fit.C_lin == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("constant sequence is flagged non-convergent") {
        LinearFit fit = linear_convergence_fit(synthetic(std::vector<double>(10, 3.0)));
        REQUIRE_FALSE(fit.convergent);
        REQUIRE(fit.q_lin >= 1.0);
    }
    SECTION("too few steps are rejected") {
        REQUIRE_THROWS_AS(linear_convergence_fit(synthetic({1, 2, 3})), std::invalid_argument);
    }
    SECTION("fit on a real run contracts") {
        RunConfig cfg;
        cfg.problem = z1_problem(2.0);
        cfg.strategy = {MarkingKind::Standard, 0.5, 1};
        cfg.stop.max_elements = 3000;
        cfg.record_wall_time = false;
        LinearFit fit = linear_convergence_fit(run_afem(cfg));
        REQUIRE(fit.convergent);
        REQUIRE(fit.q_lin < 1.0);
    }
}

TEST_CASE("kappa = 16 Cea quotient settles after the preasymptotic regime") {
    RunConfig cfg;
    cfg.problem = z2_problem(16.0);
    cfg.strategy = {MarkingKind::Standard, 0.2, 1};
    cfg.stop.max_elements = 60000;
    cfg.record_wall_time = false;
    auto recs = run_afem(cfg);
    double peak = 0.0;
    std::optional<double> last;
    for (const auto& r : recs)
        if (r.cea_quotient) {
            peak = std::max(peak, *r.cea_quotient);
            last = r.cea_quotient;
        }
    REQUIRE(peak > 2.0); // the preasymptotic phase is visible
    REQUIRE(last.has_value());
    REQUIRE(*last <= 1.5);
}

TEST_CASE("inf-sup diagnostic stays positive along a run") {
    RunConfig cfg;
    cfg.problem = z1_problem(2.0);
    cfg.strategy = {MarkingKind::Standard, 0.4, 1};
    cfg.stop.max_elements = 2500;
    cfg.record_wall_time = false;
    cfg.record_infsup = true;
    auto recs = run_afem(cfg);
    int measured = 0;
    double floor_late = 1e300;
    for (const auto& r : recs)
        if (r.inf_sup) {
            ++measured;
            REQUIRE(*r.inf_sup >= 0.0);
            if (r.n_elements >= 200) floor_late = std::min(floor_late, *r.inf_sup);
        }
    REQUIRE(measured >= 5);
    // once the mesh resolves kappa the constant stays away from zero
    REQUIRE(floor_late > 1e-4);
}

TEST_CASE("standalone cea_quotient matches the recorded one") {
    ProblemSpec p = z2_problem(2.0);
    Triangulation mesh = p.initial_mesh;
    for (int i = 0; i < 3; ++i) mesh = uniform_refine(mesh);
    DiscreteSpace sp = build_space(mesh);
    AssembledSystem sys = assemble_all(sp, p);
    SolveOutcome out = solve(sys.system());
    REQUIRE(out.solved());
    const double q = cea_quotient(sp, p, out.solution);
    REQUIRE(q >= 1.0 - 1e-9);
    REQUIRE(q < 3.0);
}
