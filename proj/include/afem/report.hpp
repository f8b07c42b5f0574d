#ifndef AFEM_REPORT_HPP
#define AFEM_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "afem/driver.hpp"

namespace afem {

// ---------------------------------------------------------------------------
// Rate fitting

struct RateFit {
    double eta_slope = 0.0;
    std::optional<double> h1_slope;
    int points = 0;
};

namespace detail {

inline double ls_slope(const std::vector<double>& lx, const std::vector<double>& ly) {
    const double n = double(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace detail

/// Least-squares slope of log eta (and log H1 error when present) against
/// log N over the records with at least `min_elements` elements.
inline RateFit fit_rate(const std::vector<ConvergenceRecord>& records, long min_elements = 1000) {
    std::vector<double> lx, ly, lehx, lehy;
    for (const auto& r : records) {
        if (!r.solved || r.n_elements < min_elements || r.eta <= 0.0) continue;
        lx.push_back(std::log(double(r.n_elements)));
        ly.push_back(std::log(r.eta));
        if (r.h1_error && *r.h1_error > 0.0) {
            lehx.push_back(std::log(double(r.n_elements)));
            lehy.push_back(std::log(*r.h1_error));
        }
    }
    if (lx.size() < 6) throw std::invalid_argument("fit_rate: fewer than 6 records in the fit window");
    RateFit fit;
    fit.points = static_cast<int>(lx.size());
    fit.eta_slope = detail::ls_slope(lx, ly);
    if (lehx.size() >= 6) fit.h1_slope = detail::ls_slope(lehx, lehy);
    return fit;
}

/// First solved step from which eta stays inside the fitted-rate corridor
/// [fit/factor, fit*factor]; -1 when the run never settles.
inline int corridor_entry_step(const std::vector<ConvergenceRecord>& records,
                               long fit_min_elements = 1000, double factor = 1.3) {
    std::vector<double> lx, ly;
    for (const auto& r : records) {
        if (!r.solved || r.n_elements < fit_min_elements || r.eta <= 0.0) continue;
        lx.push_back(std::log(double(r.n_elements)));
        ly.push_back(std::log(r.eta));
    }
    if (lx.size() < 2) return -1;
    const double slope = detail::ls_slope(lx, ly);
    double sy = 0, sx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sy += ly[i], sx += lx[i];
    const double intercept = (sy - slope * sx) / double(lx.size());
    const double tol = std::log(factor);

    int entry = -1;
    for (const auto& r : records) {
        if (!r.solved || r.eta <= 0.0) continue;
        const double model = intercept + slope * std::log(double(r.n_elements));
        if (std::abs(std::log(r.eta) - model) <= tol) {
            if (entry < 0) entry = r.step;
        } else {
            entry = -1; // must enter and stay
        }
    }
    return entry;
}

// ---------------------------------------------------------------------------
// CSV emission and parsing

inline void write_csv(std::ostream& os, const std::vector<ConvergenceRecord>& records) {
    os << "step,n_elements,n_dofs,eta,h1_error,energy_error,cea_quotient,solved,h_max,wall_ms\n";
    char buf[400];
    auto opt = [](const std::optional<double>& v) {
        char b[40];
        if (!v) return std::string();
        std::snprintf(b, sizeof(b), "%.17g", *v);
        return std::string(b);
    };
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%d,%ld,%d,%.17g,%s,%s,%s,%d,%.17g,%.3f\n", r.step,
                      r.n_elements, r.n_dofs, r.eta, opt(r.h1_error).c_str(),
                      opt(r.energy_error).c_str(), opt(r.cea_quotient).c_str(), r.solved ? 1 : 0,
                      r.h_max, r.wall_ms);
        os << buf;
    }
}

inline std::vector<ConvergenceRecord> read_csv(std::istream& is) {
    std::vector<ConvergenceRecord> records;
    std::string line;
    std::getline(is, line); // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        cells.resize(10);
        ConvergenceRecord r;
        r.step = std::stoi(cells[0]);
        r.n_elements = std::stol(cells[1]);
        r.n_dofs = std::stoi(cells[2]);
        r.eta = std::stod(cells[3]);
        if (!cells[4].empty()) r.h1_error = std::stod(cells[4]);
        if (!cells[5].empty()) r.energy_error = std::stod(cells[5]);
        if (!cells[6].empty()) r.cea_quotient = std::stod(cells[6]);
        r.solved = cells[7] == "1";
        r.h_max = std::stod(cells[8]);
        if (!cells[9].empty()) r.wall_ms = std::stod(cells[9]);
        records.push_back(r);
    }
    return records;
}

// ---------------------------------------------------------------------------
// SVG log-log convergence plots (no plotting dependency)

struct PlotSeries {
    std::string label;
    std::string color = "#1f6fb2";
    bool dashed = false;
    std::vector<std::pair<double, double>> points; // (N, value)
};

/// Log-log plot with reference-slope triangles. Slopes are drawn anchored at
/// the lower right of the data cloud.
inline void write_svg_loglog(std::ostream& os, const std::vector<PlotSeries>& series,
                             const std::vector<double>& ref_slopes, const std::string& title) {
    const int W = 760, H = 540, ML = 70, MR = 200, MT = 40, MB = 55;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            if (x <= 0 || y <= 0) continue;
            xmin = std::min(xmin, x), xmax = std::max(xmax, x);
            ymin = std::min(ymin, y), ymax = std::max(ymax, y);
        }
    if (xmin >= xmax) xmax = xmin * 10 + 10, xmin = std::max(xmin / 10, 1e-12);
    if (ymin >= ymax) ymax = ymin * 10 + 10, ymin = std::max(ymin / 10, 1e-12);
    const double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
    const double ly0 = std::log10(ymin), ly1 = std::log10(ymax);
    auto X = [&](double x) { return ML + (std::log10(x) - lx0) / (lx1 - lx0) * (W - ML - MR); };
    auto Y = [&](double y) { return H - MB - (std::log10(y) - ly0) / (ly1 - ly0) * (H - MT - MB); };

    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << ML << "' y='24' font-family='sans-serif' font-size='15'>" << title
       << "</text>\n";

    // decade grid
    for (int d = int(std::ceil(lx0)); d <= int(std::floor(lx1)); ++d) {
        const double px = X(std::pow(10.0, d));
        os << "<line x1='" << px << "' y1='" << MT << "' x2='" << px << "' y2='" << H - MB
           << "' stroke='#dddddd'/>\n";
        os << "<text x='" << px - 12 << "' y='" << H - MB + 20
           << "' font-family='sans-serif' font-size='12'>1e" << d << "</text>\n";
    }
    for (int d = int(std::ceil(ly0)); d <= int(std::floor(ly1)); ++d) {
        const double py = Y(std::pow(10.0, d));
        os << "<line x1='" << ML << "' y1='" << py << "' x2='" << W - MR << "' y2='" << py
           << "' stroke='#dddddd'/>\n";
        os << "<text x='" << 8 << "' y='" << py + 4
           << "' font-family='sans-serif' font-size='12'>1e" << d << "</text>\n";
    }
    os << "<rect x='" << ML << "' y='" << MT << "' width='" << W - ML - MR << "' height='"
       << H - MT - MB << "' fill='none' stroke='#444444'/>\n";
    os << "<text x='" << (ML + W - MR) / 2 - 60 << "' y='" << H - 12
       << "' font-family='sans-serif' font-size='13'>number of elements N</text>\n";

    int li = 0;
    for (const auto& s : series) {
        os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.6'";
        if (s.dashed) os << " stroke-dasharray='6,4'";
        os << " points='";
        for (auto [x, y] : s.points)
            if (x > 0 && y > 0) os << X(x) << ',' << Y(y) << ' ';
        os << "'/>\n";
        const int ly = MT + 18 * (li++) + 10;
        os << "<line x1='" << W - MR + 10 << "' y1='" << ly - 4 << "' x2='" << W - MR + 40
           << "' y2='" << ly - 4 << "' stroke='" << s.color << "' stroke-width='1.6'";
        if (s.dashed) os << " stroke-dasharray='6,4'";
        os << "/>\n";
        os << "<text x='" << W - MR + 46 << "' y='" << ly
           << "' font-family='sans-serif' font-size='12'>" << s.label << "</text>\n";
    }

    // reference slope triangles: horizontal run of one decade in N
    for (std::size_t k = 0; k < ref_slopes.size(); ++k) {
        const double s = ref_slopes[k];
        const double xa = std::pow(10.0, lx1 - 1.2), xb = std::pow(10.0, lx1 - 0.2);
        const double ya = std::pow(10.0, ly0 + 0.35 + 0.55 * double(k));
        const double yb = ya * std::pow(xb / xa, s);
        os << "<polygon fill='none' stroke='#777777' points='" << X(xa) << ',' << Y(ya) << ' '
           << X(xb) << ',' << Y(ya) << ' ' << X(xb) << ',' << Y(yb) << "'/>\n";
        char lbl[40];
        std::snprintf(lbl, sizeof(lbl), "slope %.3g", s);
        os << "<text x='" << X(xb) + 5 << "' y='" << (Y(ya) + Y(yb)) / 2
           << "' font-family='sans-serif' font-size='11' fill='#777777'>" << lbl << "</text>\n";
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Experiment plans

/// One named run of the adaptive loop (a fully expanded sweep point).
struct PlannedRun {
    std::string name;
    std::string problem = "z2"; // z1 | z2
    double kappa = 2.0;
    double theta = 0.2;
    std::string marking = "standard"; // standard | expanded | maxguard | uniform
    long max_elements = 10000;
    std::optional<int> max_steps;
    std::optional<double> eta_tol;
    int initial_uniform_refinements = 0;
    bool timing = true;
    bool record_infsup = false;
    std::string snapshot_dir;
    int snapshot_every = 0;
    std::optional<double> assert_eta_slope_min, assert_eta_slope_max;
};

struct ExperimentPlan {
    std::string out_dir = "results";
    long fit_min_elements = 1000;
    std::vector<PlannedRun> runs;
};

inline RunConfig make_run_config(const PlannedRun& r) {
    RunConfig cfg;
    if (r.problem == "z1")
        cfg.problem = z1_problem(r.kappa);
    else if (r.problem == "z2")
        cfg.problem = z2_problem(r.kappa);
    else
        throw std::invalid_argument("unknown problem: " + r.problem);
    cfg.strategy.theta = r.theta;
    if (r.marking == "standard")
        cfg.strategy.kind = MarkingKind::Standard;
    else if (r.marking == "expanded")
        cfg.strategy.kind = MarkingKind::Expanded;
    else if (r.marking == "maxguard")
        cfg.strategy.kind = MarkingKind::MaxGuard;
    else if (r.marking == "uniform")
        cfg.uniform = true;
    else
        throw std::invalid_argument("unknown marking: " + r.marking);
    cfg.stop.max_elements = r.max_elements;
    cfg.stop.max_steps = r.max_steps;
    cfg.stop.eta_tol = r.eta_tol;
    cfg.initial_uniform_refinements = r.initial_uniform_refinements;
    cfg.record_wall_time = r.timing;
    cfg.record_infsup = r.record_infsup;
    cfg.snapshot_dir = r.snapshot_dir;
    cfg.snapshot_every = r.snapshot_every;
    return cfg;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace detail

/// Plan file: INI-style sections. `[global]` sets out/fit_min_elements;
/// every other section is a run, where kappa/theta/marking accept
/// comma-separated sweep lists that expand to the cross-product.
inline ExperimentPlan parse_plan(std::istream& is) {
    ExperimentPlan plan;
    std::string line, section;
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::vector<std::string> order;
    while (std::getline(is, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(line.substr(1, line.size() - 2));
            if (sections.count(section)) throw std::runtime_error("plan: duplicate section " + section);
            order.push_back(section);
            sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || section.empty())
            throw std::runtime_error("plan: bad line '" + line + "'");
        sections[section][detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }

    for (const auto& name : order) {
        const auto& kv = sections[name];
        if (name == "global") {
            if (kv.count("out")) plan.out_dir = kv.at("out");
            if (kv.count("fit_min_elements")) plan.fit_min_elements = std::stol(kv.at("fit_min_elements"));
            continue;
        }
        auto get = [&](const char* key, const char* dflt) {
            auto it = kv.find(key);
            return it == kv.end() ? std::string(dflt) : it->second;
        };
        const auto kappas = detail::split_list(get("kappa", "2"));
        const auto thetas = detail::split_list(get("theta", "0.2"));
        const auto markings = detail::split_list(get("marking", "standard"));
        for (const auto& mk : markings)
            for (const auto& ka : kappas)
                for (const auto& th : thetas) {
                    PlannedRun run;
                    run.name = name;
                    if (kappas.size() > 1) run.name += "-k" + ka;
                    if (thetas.size() > 1) run.name += "-t" + th;
                    if (markings.size() > 1) run.name += "-" + mk;
                    run.problem = get("problem", "z2");
                    run.kappa = std::stod(ka);
                    run.theta = std::stod(th);
                    run.marking = mk;
                    run.max_elements = std::stol(get("max_elements", "10000"));
                    if (kv.count("max_steps")) run.max_steps = std::stoi(kv.at("max_steps"));
                    if (kv.count("eta_tol")) run.eta_tol = std::stod(kv.at("eta_tol"));
                    run.initial_uniform_refinements = std::stoi(get("initial_uniform_refinements", "0"));
                    run.timing = get("timing", "true") != "false";
                    run.record_infsup = get("infsup", "false") == "true";
                    run.snapshot_dir = get("snapshot_dir", "");
                    run.snapshot_every = std::stoi(get("snapshot_every", "0"));
                    if (kv.count("assert_eta_slope_min"))
                        run.assert_eta_slope_min = std::stod(kv.at("assert_eta_slope_min"));
                    if (kv.count("assert_eta_slope_max"))
                        run.assert_eta_slope_max = std::stod(kv.at("assert_eta_slope_max"));
                    plan.runs.push_back(run);
                }
    }
    std::map<std::string, int> seen;
    for (const auto& r : plan.runs)
        if (++seen[r.name] > 1) throw std::runtime_error("plan: duplicate run name " + r.name);
    return plan;
}

struct ExperimentResult {
    std::vector<std::string> names;
    std::vector<std::vector<ConvergenceRecord>> records;
    std::vector<std::optional<RateFit>> fits;
    bool assertions_ok = true;
};

/// Executes a plan: one CSV and one SVG per run plus a summary CSV of fitted
/// slopes. Deterministic output (byte-identical CSVs) when timing is off.
inline ExperimentResult run_experiment(const ExperimentPlan& plan) {
    namespace fs = std::filesystem;
    fs::create_directories(plan.out_dir);
    ExperimentResult result;

    std::ofstream summary(plan.out_dir + "/summary.csv");
    if (!summary) throw std::runtime_error("cannot write to output directory " + plan.out_dir);
    summary << "run,problem,kappa,theta,marking,final_elements,eta_slope,h1_slope,fit_points\n";

    for (const auto& planned : plan.runs) {
        RunConfig cfg = make_run_config(planned);
        auto recs = run_afem(cfg);
        {
            std::ofstream os(plan.out_dir + "/" + planned.name + ".csv");
            write_csv(os, recs);
        }
        std::optional<RateFit> fit;
        try {
            fit = fit_rate(recs, plan.fit_min_elements);
        } catch (const std::invalid_argument&) {
        }
        {
            std::ofstream os(plan.out_dir + "/" + planned.name + ".svg");
            std::vector<PlotSeries> series;
            PlotSeries eta{"estimator", "#1f6fb2", planned.marking == "uniform", {}};
            PlotSeries err{"H1 error", "#b22222", planned.marking == "uniform", {}};
            for (const auto& r : recs) {
                if (!r.solved) continue;
                eta.points.emplace_back(double(r.n_elements), r.eta);
                if (r.h1_error) err.points.emplace_back(double(r.n_elements), *r.h1_error);
            }
            series.push_back(eta);
            if (!err.points.empty()) series.push_back(err);
            const double beta = z_domain_beta(planned.problem == "z1" ? ZVariant::SingleCut
                                                                      : ZVariant::SymmetricCut);
            write_svg_loglog(os, series, {-0.5, -beta / 2.0}, planned.name);
        }
        char row[400];
        std::snprintf(row, sizeof(row), "%s,%s,%.17g,%.17g,%s,%ld,%s,%s,%d\n", planned.name.c_str(),
                      planned.problem.c_str(), planned.kappa, planned.theta,
                      planned.marking.c_str(), recs.empty() ? 0L : recs.back().n_elements,
                      fit ? std::to_string(fit->eta_slope).c_str() : "",
                      (fit && fit->h1_slope) ? std::to_string(*fit->h1_slope).c_str() : "",
                      fit ? fit->points : 0);
        summary << row;

        if (fit && planned.assert_eta_slope_min && fit->eta_slope < *planned.assert_eta_slope_min)
            result.assertions_ok = false;
        if (fit && planned.assert_eta_slope_max && fit->eta_slope > *planned.assert_eta_slope_max)
            result.assertions_ok = false;
        if (!fit && (planned.assert_eta_slope_min || planned.assert_eta_slope_max))
            result.assertions_ok = false;

        result.names.push_back(planned.name);
        result.records.push_back(std::move(recs));
        result.fits.push_back(fit);
    }
    return result;
}

/// Maximum relative deviation of eta between two runs at matched element
/// counts (log-log interpolation of the second run onto the first).
inline double compare_markings(const std::vector<ConvergenceRecord>& a,
                               const std::vector<ConvergenceRecord>& b, long min_elements = 1000) {
    std::vector<std::pair<double, double>> curve; // (log N, log eta) of b
    for (const auto& r : b)
        if (r.solved && r.eta > 0.0) curve.emplace_back(std::log(double(r.n_elements)), std::log(r.eta));
    if (curve.size() < 2) throw std::invalid_argument("compare_markings: runs too short");
    std::sort(curve.begin(), curve.end());

    double worst = 0.0;
    bool any = false;
    for (const auto& r : a) {
        if (!r.solved || r.eta <= 0.0 || r.n_elements < min_elements) continue;
        const double lx = std::log(double(r.n_elements));
        if (lx < curve.front().first || lx > curve.back().first) continue;
        auto hi = std::lower_bound(curve.begin(), curve.end(), std::make_pair(lx, -1e300));
        if (hi == curve.begin()) ++hi;
        if (hi == curve.end()) --hi;
        auto lo = hi - 1;
        const double t = (lx - lo->first) / (hi->first - lo->first);
        const double ly = lo->second + t * (hi->second - lo->second);
        const double dev = std::abs(r.eta - std::exp(ly)) / std::exp(ly);
        worst = std::max(worst, dev);
        any = true;
    }
    if (!any) throw std::invalid_argument("compare_markings: no matched element counts");
    return worst;
}

} // namespace afem

#endif
