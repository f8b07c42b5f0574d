// Command-line driver for adaptive Helmholtz convergence studies:
//   afem run <plan-file> [--out DIR] [--assert]
//   afem sweep --problem z1|z2 --kappa ... --theta ... --marking ... [...]
//   afem report <dir>
//   afem mesh-dump --problem z1|z2 [--refine K] --out FILE

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "afem/afem.hpp"

namespace {

int report_dir(const std::string& dir, long fit_min_elements) {
    namespace fs = std::filesystem;
    std::ofstream summary(dir + "/summary.csv");
    summary << "run,final_elements,eta_slope,h1_slope,fit_points\n";
    std::vector<fs::path> csvs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".csv" && entry.path().filename() != "summary.csv")
            csvs.push_back(entry.path());
    std::sort(csvs.begin(), csvs.end());
    for (const auto& path : csvs) {
        std::ifstream is(path);
        auto recs = afem::read_csv(is);
        std::optional<afem::RateFit> fit;
        try {
            fit = afem::fit_rate(recs, fit_min_elements);
        } catch (const std::invalid_argument&) {
        }
        const std::string name = path.stem().string();
        summary << name << ',' << (recs.empty() ? 0 : recs.back().n_elements) << ',';
        if (fit) summary << fit->eta_slope;
        summary << ',';
        if (fit && fit->h1_slope) summary << *fit->h1_slope;
        summary << ',' << (fit ? fit->points : 0) << "\n";

        std::ofstream os(dir + "/" + name + ".svg");
        afem::PlotSeries eta{"estimator", "#1f6fb2", false, {}};
        afem::PlotSeries err{"H1 error", "#b22222", false, {}};
        for (const auto& r : recs) {
            if (!r.solved) continue;
            eta.points.emplace_back(double(r.n_elements), r.eta);
            if (r.h1_error) err.points.emplace_back(double(r.n_elements), *r.h1_error);
        }
        std::vector<afem::PlotSeries> series{eta};
        if (!err.points.empty()) series.push_back(err);
        afem::write_svg_loglog(os, series, {-0.5}, name);
        std::cout << name << ": " << recs.size() << " steps";
        if (fit) std::cout << ", eta slope " << fit->eta_slope;
        std::cout << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive P1 finite elements for the 2D Helmholtz equation"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "execute an experiment plan file");
    std::string plan_file, run_out;
    bool run_assert = false;
    run->add_option("plan", plan_file, "plan file (INI-style sections)")->required();
    run->add_option("--out", run_out, "override the plan's output directory");
    run->add_flag("--assert", run_assert, "exit with code 2 when a slope assertion fails");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run an inline sweep");
    std::string sw_problem = "z2", sw_kappa = "2", sw_theta = "0.2", sw_marking = "standard";
    std::string sw_out = "results";
    long sw_max_elements = 10000;
    long sw_fit_min = 1000;
    bool sw_no_timing = false, sw_infsup = false;
    sweep->add_option("--problem", sw_problem, "z1 | z2");
    sweep->add_option("--kappa", sw_kappa, "comma-separated wavenumbers");
    sweep->add_option("--theta", sw_theta, "comma-separated marking parameters");
    sweep->add_option("--marking", sw_marking, "standard|expanded|maxguard|uniform, comma-separated");
    sweep->add_option("--max-elements", sw_max_elements, "stop rule");
    sweep->add_option("--out", sw_out, "output directory");
    sweep->add_option("--fit-min-elements", sw_fit_min, "fit window lower bound");
    sweep->add_flag("--no-timing", sw_no_timing, "zero the wall_ms column (byte-stable output)");
    sweep->add_flag("--infsup", sw_infsup, "record the inf-sup diagnostic on small steps");
    std::string sw_assert_slope;
    sweep->add_option("--assert-slope", sw_assert_slope,
                      "lo,hi eta-slope range; exit 2 when any run falls outside");
    std::string sw_snapshot_dir;
    int sw_snapshot_every = 0;
    sweep->add_option("--snapshot-dir", sw_snapshot_dir,
                      "debug dumps per step: mesh, solution, matrix (.mtx), indicators");
    sweep->add_option("--snapshot-every", sw_snapshot_every, "snapshot stride (0 = off)");

    // report
    auto* report = app.add_subcommand("report", "re-fit and re-plot CSVs in a directory");
    std::string report_path;
    long rep_fit_min = 1000;
    report->add_option("dir", report_path, "directory with run CSVs")->required();
    report->add_option("--fit-min-elements", rep_fit_min, "fit window lower bound");

    // mesh-dump
    auto* dump = app.add_subcommand("mesh-dump", "write an initial or refined mesh");
    std::string md_problem = "z1", md_out = "mesh.txt";
    int md_refine = 0;
    dump->add_option("--problem", md_problem, "z1 | z2");
    dump->add_option("--refine", md_refine, "uniform refinement levels");
    dump->add_option("--out", md_out, "output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            std::ifstream is(plan_file);
            if (!is) {
                std::cerr << "cannot open plan file " << plan_file << "\n";
                return 1;
            }
            afem::ExperimentPlan plan = afem::parse_plan(is);
            if (!run_out.empty()) plan.out_dir = run_out;
            std::cout << "plan: " << plan.runs.size() << " runs -> " << plan.out_dir << "\n";
            auto result = afem::run_experiment(plan);
            for (std::size_t i = 0; i < result.names.size(); ++i) {
                std::cout << result.names[i] << ": " << result.records[i].size() << " steps, "
                          << result.records[i].back().n_elements << " elements";
                if (result.fits[i]) std::cout << ", eta slope " << result.fits[i]->eta_slope;
                std::cout << "\n";
            }
            if (run_assert && !result.assertions_ok) {
                std::cerr << "slope assertion failed\n";
                return 2;
            }
            return 0;
        }
        if (*sweep) {
            std::stringstream ss;
            ss << "[sweep]\nproblem = " << sw_problem << "\nkappa = " << sw_kappa
               << "\ntheta = " << sw_theta << "\nmarking = " << sw_marking
               << "\nmax_elements = " << sw_max_elements
               << "\ntiming = " << (sw_no_timing ? "false" : "true")
               << "\ninfsup = " << (sw_infsup ? "true" : "false") << "\n";
            if (!sw_assert_slope.empty()) {
                const auto comma = sw_assert_slope.find(',');
                if (comma == std::string::npos) {
                    std::cerr << "--assert-slope expects lo,hi\n";
                    return 1;
                }
                ss << "assert_eta_slope_min = " << sw_assert_slope.substr(0, comma) << "\n";
                ss << "assert_eta_slope_max = " << sw_assert_slope.substr(comma + 1) << "\n";
            }
            if (!sw_snapshot_dir.empty()) {
                std::filesystem::create_directories(sw_snapshot_dir);
                ss << "snapshot_dir = " << sw_snapshot_dir << "\n";
                ss << "snapshot_every = " << std::max(sw_snapshot_every, 1) << "\n";
            }
            afem::ExperimentPlan parsed = afem::parse_plan(ss);
            parsed.out_dir = sw_out;
            parsed.fit_min_elements = sw_fit_min;
            std::cout << "sweep: " << parsed.runs.size() << " runs -> " << parsed.out_dir << "\n";
            auto result = afem::run_experiment(parsed);
            for (std::size_t i = 0; i < result.names.size(); ++i) {
                std::cout << result.names[i] << ": " << result.records[i].back().n_elements
                          << " elements";
                if (result.fits[i]) std::cout << ", eta slope " << result.fits[i]->eta_slope;
                std::cout << "\n";
                if (sw_infsup)
                    for (const auto& r : result.records[i])
                        if (r.inf_sup)
                            std::cout << "  step " << r.step << ": gamma = " << *r.inf_sup << "\n";
            }
            if (!sw_assert_slope.empty() && !result.assertions_ok) {
                std::cerr << "slope assertion failed\n";
                return 2;
            }
            return 0;
        }
        if (*report) return report_dir(report_path, rep_fit_min);
        if (*dump) {
            afem::Triangulation mesh = afem::z_domain(md_problem == "z1" ? afem::ZVariant::SingleCut
                                                                         : afem::ZVariant::SymmetricCut);
            for (int k = 0; k < md_refine; ++k) mesh = afem::uniform_refine(mesh);
            afem::write_mesh_file(md_out, mesh);
            std::cout << md_out << ": " << mesh.n_elements() << " elements, " << mesh.n_vertices()
                      << " vertices\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
