#ifndef AFEM_DRIVER_HPP
#define AFEM_DRIVER_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "afem/assembly.hpp"
#include "afem/estimator.hpp"
#include "afem/marking.hpp"
#include "afem/problem.hpp"
#include "afem/solver.hpp"

namespace afem {

struct StopRule {
    std::optional<long> max_elements;
    std::optional<int> max_steps;
    std::optional<double> eta_tol;

    void validate() const {
        if (!max_elements && !max_steps && !eta_tol)
            throw std::invalid_argument("run config: no stop rule active");
    }
};

struct RunConfig {
    ProblemSpec problem;
    MarkingStrategy strategy;
    bool uniform = false; // uniform refinement instead of adaptive marking
    int initial_uniform_refinements = 0;
    StopRule stop;
    bool instrument = true;     // pairwise checks; exact-solution extras when available
    bool record_infsup = false; // inf-sup diagnostic while the system is small
    bool record_wall_time = true;
    double closure_ratio_ceiling = 20.0;
    long hard_element_ceiling = 0; // 0: derived from the stop rule
    std::string snapshot_dir;      // per-step mesh/solution dumps when non-empty
    int snapshot_every = 0;
};

/// One adaptive-loop step's telemetry. On fallback steps (no unique discrete
/// solution) `solved` is false and eta carries the previous value bit-exactly.
struct ConvergenceRecord {
    int step = 0;
    long n_elements = 0;
    int n_dofs = 0;
    double eta = 0.0;
    long marked_count = 0;
    double h_max = 0.0;
    bool solved = false;
    std::optional<double> h1_error;
    std::optional<double> energy_error;
    std::optional<double> cea_quotient;
    std::optional<double> c_stb, c_red, c_rel; // measured step constants
    std::optional<double> eps_quasi;           // vs previous solved step
    std::optional<double> galerkin_rel;        // vs previous solved step
    std::optional<double> inf_sup;
    double wall_ms = 0.0;
    double closure_ratio = 0.0;
};

namespace detail {

struct SolvedState {
    std::unique_ptr<Triangulation> mesh;
    DiscreteSpace space;
    IndicatorField indicators;
    std::vector<double> x;
    SparseMatrix B, S;
    double eta = 0.0;
};

inline void write_solution_file(const std::string& path, const std::vector<double>& x) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open solution file: " + path);
    os << x.size() << "\n";
    char buf[40];
    for (double v : x) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", v);
        os << buf;
    }
}

} // namespace detail

/// The adaptive loop: solve, estimate, mark, refine, with a uniform-refinement
/// fallback whenever the discrete problem has no unique solution. Records
/// every step, including fallback steps.
inline std::vector<ConvergenceRecord> run_afem(const RunConfig& config) {
    config.stop.validate();
    if (!config.uniform) config.strategy.validate();
    const ProblemSpec& problem = config.problem;

    auto mesh = std::make_unique<Triangulation>(problem.initial_mesh);
    for (int k = 0; k < config.initial_uniform_refinements; ++k)
        *mesh = uniform_refine(*mesh);

    const long initial_elements = mesh->n_elements();
    long ceiling = config.hard_element_ceiling;
    if (ceiling == 0)
        ceiling = config.stop.max_elements ? std::max<long>(4 * *config.stop.max_elements, 1 << 20)
                                           : (1 << 22);

    std::vector<ConvergenceRecord> records;
    std::vector<double> history = {1.0}; // eta_{-1} := 1
    double prev_eta = 1.0;
    long marked_total = 0;
    std::optional<detail::SolvedState> prev;
    const bool has_exact = problem.exact.has_value();

    for (int step = 0;; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        if (mesh->n_elements() > ceiling)
            throw std::runtime_error("run_afem: element ceiling exceeded (closure runaway?)");

        ConvergenceRecord rec;
        rec.step = step;
        rec.n_elements = mesh->n_elements();
        rec.h_max = mesh_size(*mesh).h_max;

        DiscreteSpace space = build_space(*mesh);
        rec.n_dofs = space.dof_count;
        AssembledSystem sys = assemble_all(space, problem);

        SparseLU lu;
        bool solvable = space.dof_count == 0 || lu.factor(sys.B);
        std::vector<double> x(space.dof_count, 0.0);
        if (solvable && space.dof_count > 0) {
            RefinedSolve rs = lu_solve_refined(sys.B, lu, sys.load);
            if (rs.rel_residual > 1e-8) solvable = false;
            else x = std::move(rs.x);
        }

        auto elapsed_ms = [&]() {
            return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        };

        if (!solvable) {
            // step (i): keep the previous solution and estimator, refine uniformly
            rec.solved = false;
            rec.eta = prev_eta;
            rec.marked_count = rec.n_elements;
            marked_total += rec.n_elements;
            if (config.record_wall_time) rec.wall_ms = elapsed_ms();
            records.push_back(rec);
            history.push_back(rec.eta);
            if (config.stop.max_steps && step + 1 >= *config.stop.max_steps) break;
            if (config.stop.max_elements && rec.n_elements >= *config.stop.max_elements) break;
            *mesh = uniform_refine(*mesh);
            continue;
        }

        rec.solved = true;
        IndicatorField ind = estimate(space, problem, x);
        rec.eta = ind.total();

        if (config.record_infsup && space.dof_count > 0 && space.dof_count <= 2000) {
            // H1 Gram = stiffness + mass
            std::vector<Triplet> tg;
            for (int r = 0; r < sys.mass.n; ++r)
                for (int k = sys.mass.row_ptr[r]; k < sys.mass.row_ptr[r + 1]; ++k)
                    tg.push_back({r, sys.mass.col[k], sys.mass.val[k]});
            for (int r = 0; r < sys.stiffness.n; ++r)
                for (int k = sys.stiffness.row_ptr[r]; k < sys.stiffness.row_ptr[r + 1]; ++k)
                    tg.push_back({r, sys.stiffness.col[k], sys.stiffness.val[k]});
            SparseMatrix h1 = SparseMatrix::from_triplets(space.dof_count, tg);
            rec.inf_sup = inf_sup_diagnostic({sys.B, {}}, {h1, {}});
        }

        if (config.instrument && has_exact) {
            const ErrorNorms err = error_norms_sq(space, problem, x);
            rec.h1_error = std::sqrt(std::max(0.0, err.h1_sq));
            rec.energy_error = std::sqrt(std::max(0.0, err.energy_sq));

            // Cea quotient against the energy projection. For kappa = 0 the
            // projection system coincides with the solved one bit for bit.
            if (space.dof_count > 0) {
                SparseLU* slu = &lu;
                SparseLU lu_s;
                const bool same = problem.kind == ProblemKind::Helmholtz && problem.kappa == 0.0;
                if (!same) {
                    if (!lu_s.factor(sys.stiffness))
                        throw std::runtime_error("run_afem: singular energy projection system");
                    slu = &lu_s;
                }
                RefinedSolve zs = lu_solve_refined(sys.stiffness, *slu, sys.energy_rhs);
                const double den = error_norms_sq(space, problem, zs.x, false).energy_sq;
                if (den > 0.0) {
                    std::vector<double> w(space.dof_count);
                    for (int i = 0; i < space.dof_count; ++i) w[i] = x[i] - zs.x[i];
                    std::vector<double> sz(space.dof_count);
                    sys.stiffness.multiply(zs.x, sz);
                    double excess = sys.stiffness.quadratic_form(w, w);
                    for (int i = 0; i < space.dof_count; ++i)
                        excess += 2.0 * (sz[i] - sys.energy_rhs[i]) * w[i];
                    rec.cea_quotient = std::sqrt(std::max(0.0, 1.0 + excess / den));
                }
            }
        }

        if (config.instrument && prev) {
            Prolongation P = build_prolongation(prev->space, space);
            std::vector<double> px = P.apply(prev->x);
            std::vector<double> w(space.dof_count);
            for (int i = 0; i < space.dof_count; ++i) w[i] = x[i] - px[i];

            if (has_exact && rec.energy_error) {
                const double A = *rec.energy_error * *rec.energy_error;
                const double Bq = sys.stiffness.quadratic_form(w, w);
                std::vector<double> sx(space.dof_count);
                sys.stiffness.multiply(x, sx);
                double cross = 0.0;
                for (int i = 0; i < space.dof_count; ++i)
                    cross += (sx[i] - sys.energy_rhs[i]) * w[i];
                if (A + Bq > 0.0) rec.eps_quasi = 2.0 * cross / (A + Bq);
            }

            // pairwise Galerkin orthogonality against every coarse hat
            {
                std::vector<double> bx(space.dof_count);
                sys.B.multiply(x, bx);
                std::vector<double> coarse_bx = P.apply_transpose(bx);
                std::vector<double> bpx(prev->space.dof_count);
                prev->B.multiply(prev->x, bpx);
                const double uE = std::sqrt(std::max(0.0, sys.stiffness.quadratic_form(x, x)));
                double worst = 0.0;
                for (int i = 0; i < prev->space.dof_count; ++i) {
                    const double phiE = std::sqrt(std::max(0.0, prev->S.diagonal(i)));
                    const double scale = uE * phiE;
                    if (scale > 0.0)
                        worst = std::max(worst, std::abs(coarse_bx[i] - bpx[i]) / scale);
                }
                rec.galerkin_rel = worst;
            }

            StepData cd{&prev->space, &prev->indicators, &prev->x};
            StepData fd{&space, &ind, &x};
            EstimatorConstants ec = measure_estimator_constants(cd, fd, &sys.stiffness, &sys.mass);
            rec.c_stb = ec.stability;
            rec.c_red = ec.reduction;
            rec.c_rel = ec.reliability;
        }

        MarkedSet marked;
        if (config.uniform) {
            marked.resize(mesh->n_elements());
            std::iota(marked.begin(), marked.end(), 0);
        } else {
            marked = mark(config.strategy, ind, *mesh, history);
            if (!doerfler_criterion_holds(ind, marked, config.strategy.theta))
                throw std::runtime_error("run_afem: marking violated the bulk criterion");
        }
        rec.marked_count = static_cast<long>(marked.size());

        if (marked_total > 0)
            rec.closure_ratio = double(rec.n_elements - initial_elements) / double(marked_total);
        if (rec.closure_ratio > config.closure_ratio_ceiling)
            throw std::runtime_error("run_afem: mesh-closure ratio exceeded its ceiling");

        if (!config.snapshot_dir.empty() && config.snapshot_every > 0 &&
            step % config.snapshot_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "/step_%04d", step);
            const std::string base = config.snapshot_dir + name;
            write_mesh_file(base + ".mesh", *mesh);
            detail::write_solution_file(base + ".sol", x);
            std::ofstream mos(base + ".mtx");
            sys.B.dump_coordinate(mos);
            std::ofstream ios(base + ".eta.csv");
            dump_indicators(ios, ind);
        }

        if (config.record_wall_time) rec.wall_ms = elapsed_ms();
        records.push_back(rec);
        history.push_back(rec.eta);
        prev_eta = rec.eta;

        const bool stop = (config.stop.max_steps && step + 1 >= *config.stop.max_steps) ||
                          (config.stop.max_elements && rec.n_elements >= *config.stop.max_elements) ||
                          (config.stop.eta_tol && rec.eta <= *config.stop.eta_tol);
        if (stop) break;

        Triangulation next = refine(*mesh, marked);
        marked_total += rec.marked_count;
        detail::SolvedState st;
        st.mesh = std::move(mesh);
        st.space = space; // pointer target owned by st.mesh, unchanged by the move
        st.indicators = std::move(ind);
        st.x = std::move(x);
        st.B = std::move(sys.B);
        st.S = std::move(sys.stiffness);
        st.eta = rec.eta;
        prev = std::move(st);
        mesh = std::make_unique<Triangulation>(std::move(next));
    }
    return records;
}

/// eps_l of the quasi-orthogonality inequality per step, where recorded.
inline std::vector<std::optional<double>> quasi_orthogonality_series(
    const std::vector<ConvergenceRecord>& records) {
    std::vector<std::optional<double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.eps_quasi);
    return out;
}

/// Ratio of the Galerkin error to the best energy-norm approximation error.
inline double cea_quotient(const DiscreteSpace& space, const ProblemSpec& problem,
                           const std::vector<double>& solution) {
    if (!problem.exact) throw std::runtime_error("cea_quotient: no exact solution");
    AssembledSystem sys = assemble_all(space, problem);
    SparseLU lu;
    if (!lu.factor(sys.stiffness)) throw std::runtime_error("cea_quotient: singular stiffness");
    RefinedSolve zs = lu_solve_refined(sys.stiffness, lu, sys.energy_rhs);
    const double den = error_norms_sq(space, problem, zs.x, false).energy_sq;
    if (den <= 0.0) throw std::runtime_error("cea_quotient: discrete exact solution");
    std::vector<double> w(space.dof_count);
    for (int i = 0; i < space.dof_count; ++i) w[i] = solution[i] - zs.x[i];
    std::vector<double> sz(space.dof_count);
    sys.stiffness.multiply(zs.x, sz);
    double excess = sys.stiffness.quadratic_form(w, w);
    for (int i = 0; i < space.dof_count; ++i) excess += 2.0 * (sz[i] - sys.energy_rhs[i]) * w[i];
    return std::sqrt(std::max(0.0, 1.0 + excess / den));
}

struct LinearFit {
    double q_lin = 1.0;
    double C_lin = 1.0;
    bool convergent = false;
};

/// Least-squares fit of log eta against the step index over the tail of the
/// solved steps (last 60%, at least 8 points).
inline LinearFit linear_convergence_fit(const std::vector<ConvergenceRecord>& records) {
    std::vector<std::pair<double, double>> pts; // (step, log eta)
    for (const auto& r : records)
        if (r.solved && r.eta > 0.0) pts.emplace_back(double(r.step), std::log(r.eta));
    if (pts.size() < 8) throw std::invalid_argument("linear_convergence_fit: needs >= 8 solved steps");
    const std::size_t tail = std::max<std::size_t>(8, (pts.size() * 3 + 4) / 5);
    const std::size_t begin = pts.size() - std::min(tail, pts.size());

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = double(pts.size() - begin);
    for (std::size_t i = begin; i < pts.size(); ++i) {
        sx += pts[i].first;
        sy += pts[i].second;
        sxx += pts[i].first * pts[i].first;
        sxy += pts[i].first * pts[i].second;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / m;

    LinearFit fit;
    fit.q_lin = std::exp(slope);
    fit.convergent = fit.q_lin < 1.0;
    double cmax = 0.0;
    for (std::size_t i = begin; i < pts.size(); ++i) {
        const double model = intercept + slope * pts[i].first;
        cmax = std::max(cmax, std::exp(pts[i].second - model));
    }
    fit.C_lin = cmax;
    return fit;
}

} // namespace afem

#endif
