// scenarios: command-line front end of the meanflow library.
//
// Subcommands: cell, effective, solve-eps, solve-hom, converge, meanvalue,
// counterexample <name>, list-scenarios. Every run writes CSV tables, SVG
// charts and a plain-text manifest into its own output directory; the exit
// code is 0 iff every asserted check passed. CSV content depends only on
// the config (the manifest carries the timestamp).

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "meanflow/effective_tensor.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/mean_value.hpp"
#include "meanflow/pde.hpp"
#include "meanflow/report.hpp"
#include "meanflow/scenario.hpp"
#include "meanflow/sigma.hpp"

using namespace meanflow;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct CommonArgs {
    std::string scenario_name;  // positional; built-in name
    std::string config_path;    // --config overrides the built-in
    std::string out_dir;        // --out
    std::vector<double> eps;    // --eps
    int seed = 12345;           // --seed (randomized property checks only)
    int threads = 0;            // --threads (0 = library default)
};

void add_common(CLI::App* cmd, CommonArgs& a, bool scenario_positional = true) {
    if (scenario_positional)
        cmd->add_option("scenario", a.scenario_name, "built-in scenario name");
    cmd->add_option("--config", a.config_path, "scenario config file (overrides the built-in)");
    cmd->add_option("--out", a.out_dir, "output directory (default runs/<command>_<scenario>)");
    cmd->add_option("--eps", a.eps, "epsilon sweep override")->delimiter(',');
    cmd->add_option("--seed", a.seed, "seed for randomized property checks");
    cmd->add_option("--threads", a.threads, "worker threads (0 = library default)");
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Run {
    Scenario sc;
    RunManifest manifest;
    std::string dir;

    void note_output(const std::string& path) { manifest.outputs.push_back(path); }
    void check(const std::string& name, bool ok) { manifest.checks.emplace_back(name, ok); }
};

Run open_run(const CommonArgs& a, const std::string& command) {
    Run r;
    std::string text;
    if (!a.config_path.empty()) {
        r.sc = load_config(a.config_path);
        std::ifstream in(a.config_path);
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } else {
        if (a.scenario_name.empty())
            throw MeanflowError("either a built-in scenario name or --config is required");
        r.sc = builtin_scenario(a.scenario_name);
        text = builtin_scenario_config(a.scenario_name);
    }
    if (a.threads > 0) Eigen::setNbThreads(a.threads);

    r.manifest.scenario = r.sc.name;
    r.manifest.command = command;
    r.manifest.tool_version = kToolVersion;
    r.manifest.timestamp = iso_timestamp();
    r.manifest.config = config_key_values(text);
    r.manifest.config["cli.seed"] = std::to_string(a.seed);
    if (!a.eps.empty()) {
        std::string s;
        for (double e : a.eps) s += (s.empty() ? "" : ",") + format_double(e);
        r.manifest.config["cli.eps"] = s;
    }
    r.dir = a.out_dir.empty() ? "runs/" + command + "_" + r.sc.name : a.out_dir;
    std::filesystem::create_directories(r.dir);
    return r;
}

int close_run(Run& r) {
    const std::string path = r.dir + "/manifest.txt";
    r.manifest.write(path);
    for (const auto& [name, ok] : r.manifest.checks)
        std::cout << (ok ? "pass" : "FAIL") << "  " << name << "\n";
    std::cout << (r.manifest.all_passed() ? "OK" : "FAILED") << "  manifest: " << path << "\n";
    return r.manifest.all_passed() ? 0 : 1;
}

std::vector<double> sweep(const Run& r, const CommonArgs& a) {
    std::vector<double> eps = a.eps.empty() ? r.sc.eps_sweep : a.eps;
    if (eps.empty()) throw MeanflowError("no epsilon values (scenario sweep empty; use --eps)");
    std::sort(eps.begin(), eps.end(), std::greater<double>());
    return eps;
}

CellProblemSpec frozen_cell_spec(const Scenario& sc) {
    if (!sc.has_cell)
        throw MeanflowError("scenario '" + sc.name + "' declares no microscopic cell problem");
    const Vec X0 = sc.X0;
    auto b = sc.b;
    auto D = sc.D;
    return make_cell_spec(
        sc.dim, sc.modes, [b, X0](const Vec& y) { return b(X0, y); },
        [D, X0](const Vec& y) { return D(X0, y); }, sc.lambda, sc.Lambda);
}

EffectiveTensor scenario_effective_tensor(const Scenario& sc) {
    const EffectiveOptions opts = sc.effective_options();
    if (sc.has_cell) return effective_tensor(sc.mean_flow, sc.X0, sc.b, sc.D, opts);
    auto D = sc.D;
    return lagrangian_effective_tensor(
        sc.mean_flow, [D](const Vec& x) { return D(x, x); }, sc.X0, opts);
}

void export_tensor(Run& r, const EffectiveTensor& et, const CoercivityCertificate& cert) {
    CsvTable t;
    t.header = {"row", "col", "D_eff", "sym_min_eig", "jacobian_floor", "coercivity_margin"};
    for (int i = 0; i < et.D_eff.rows(); ++i)
        for (int j = 0; j < et.D_eff.cols(); ++j)
            t.add_row({std::to_string(i), std::to_string(j), format_double(et.D_eff(i, j)),
                       format_double(et.sym_min_eig), format_double(et.jacobian_floor),
                       format_double(cert.margin)});
    const std::string path = r.dir + "/effective_tensor.csv";
    write_csv(t, path);
    r.note_output(path);

    if (!et.average_trace.trace.empty()) {
        CsvTable w;
        w.header = {"window_half_width"};
        const auto& m0 = et.average_trace.trace.front().second;
        for (int i = 0; i < m0.rows(); ++i)
            for (int j = 0; j < m0.cols(); ++j)
                w.header.push_back("avg_" + std::to_string(i) + std::to_string(j));
        std::vector<SvgSeries> series;
        for (int i = 0; i < m0.rows(); ++i)
            series.push_back({"diag_" + std::to_string(i), {}, {}});
        for (const auto& [l, m] : et.average_trace.trace) {
            std::vector<std::string> row{format_double(l)};
            for (int i = 0; i < m.rows(); ++i)
                for (int j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
            w.add_row(std::move(row));
            for (int i = 0; i < m.rows(); ++i) {
                series[static_cast<size_t>(i)].x.push_back(l);
                series[static_cast<size_t>(i)].y.push_back(m(i, i));
            }
        }
        const std::string wpath = r.dir + "/window_averages.csv";
        write_csv(w, wpath);
        r.note_output(wpath);
        const std::string spath = r.dir + "/window_averages.svg";
        write_svg_chart(spath, "orbit window averages: " + r.sc.name, "window half width l",
                        "window average", series);
        r.note_output(spath);
    }
}

// ----------------------------------------------------------- subcommands

int run_cell(const CommonArgs& a) {
    Run r = open_run(a, "cell");
    try {
        const CellProblemSpec spec = frozen_cell_spec(r.sc);
        const CellSolution cell = solve_cell(spec);
        const BMatrix B = assemble_B(cell, spec);

        CsvTable t;
        t.header = {"component", "residual_norm", "mean_residual", "corrector_l2"};
        for (int i = 0; i < r.sc.dim; ++i)
            t.add_row({std::to_string(i), format_double(cell.residual_norms(i)),
                       format_double(cell.mean_residuals(i)),
                       format_double(cell.omegas[static_cast<size_t>(i)].spectral_norm())});
        const std::string cpath = r.dir + "/cell_correctors.csv";
        write_csv(t, cpath);
        r.note_output(cpath);

        CsvTable bt;
        bt.header = {"row", "col", "B", "B_sym", "B_asym"};
        for (int i = 0; i < r.sc.dim; ++i)
            for (int j = 0; j < r.sc.dim; ++j)
                bt.add_row({std::to_string(i), std::to_string(j), format_double(B.values(i, j)),
                            format_double(B.sym(i, j)), format_double(B.asym(i, j))});
        const std::string bpath = r.dir + "/dispersion_matrix.csv";
        write_csv(bt, bpath);
        r.note_output(bpath);

        SvgSeries res{"residual", {}, {}};
        for (int i = 0; i < r.sc.dim; ++i) {
            res.x.push_back(i);
            res.y.push_back(cell.residual_norms(i));
        }
        const std::string spath = r.dir + "/cell_residuals.svg";
        write_svg_chart(spath, "cell residuals: " + r.sc.name, "component", "residual", {res});
        r.note_output(spath);

        r.check("cell residuals below 1e-6", cell.residual_norms.maxCoeff() < 1e-6);
        r.check("compatibility residuals below 1e-8", cell.mean_residuals.maxCoeff() < 1e-8);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B.sym);
        r.check("dispersion matrix coercive", es.eigenvalues().minCoeff() > 0);
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

int run_effective(const CommonArgs& a) {
    Run r = open_run(a, "effective");
    try {
        const EffectiveTensor et = scenario_effective_tensor(r.sc);
        const CoercivityCertificate cert = coercivity_certificate(et, r.sc.lambda);
        export_tensor(r, et, cert);
        r.check("orbit average converged", et.average_trace.converged);
        r.check("coercivity certificate", cert.pass);
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

int run_solve_eps(const CommonArgs& a) {
    Run r = open_run(a, "solve-eps");
    try {
        std::vector<SvgSeries> l2;
        for (double eps : sweep(r, a)) {
            EpsProblemSpec es;
            es.grid = r.sc.grid;
            es.epsilon = eps;
            es.b = r.sc.b;
            es.D = r.sc.D;
            es.initial = r.sc.initial;
            es.T = r.sc.T;
            for (int j = 0; j <= 5; ++j) es.save_times.push_back(r.sc.T * j / 5.0);
            GridSolution sol = solve_eps(es);

            const std::string prefix = "eps_" + format_double(eps);
            for (const auto& p : export_solution_csv(sol, r.dir, prefix)) r.note_output(p);
            SvgSeries s{prefix, sol.step_times, sol.l2_trace};
            l2.push_back(std::move(s));
            bool ok = true;
            try {
                sol.check_invariants();
            } catch (const std::exception&) {
                ok = false;
            }
            r.check("invariants at eps=" + format_double(eps), ok);
        }
        const std::string spath = r.dir + "/l2_decay.svg";
        write_svg_chart(spath, "L2 norm decay: " + r.sc.name, "t", "|u|_L2", l2);
        r.note_output(spath);
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

int run_solve_hom(const CommonArgs& a) {
    Run r = open_run(a, "solve-hom");
    try {
        const EffectiveTensor et = scenario_effective_tensor(r.sc);
        const CoercivityCertificate cert = coercivity_certificate(et, r.sc.lambda);
        export_tensor(r, et, cert);

        HomProblemSpec hs;
        hs.grid = r.sc.grid;
        const Eigen::MatrixXd De = et.D_eff;
        hs.D_eff = [De](const Vec&) { return De; };
        hs.initial = r.sc.initial;
        hs.T = r.sc.T;
        for (int j = 0; j <= 5; ++j) hs.save_times.push_back(r.sc.T * j / 5.0);
        GridSolution sol = solve_homogenized(hs);
        for (const auto& p : export_solution_csv(sol, r.dir, "hom")) r.note_output(p);

        const std::string spath = r.dir + "/l2_decay.svg";
        write_svg_chart(spath, "homogenized L2 decay: " + r.sc.name, "t", "|u|_L2",
                        {{"hom", sol.step_times, sol.l2_trace}});
        r.note_output(spath);

        bool ok = true;
        try {
            sol.check_invariants();
        } catch (const std::exception&) {
            ok = false;
        }
        r.check("invariants", ok);
        r.check("coercivity certificate", cert.pass);
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

void export_convergence(Run& r, const ConvergenceReport& rep) {
    CsvTable t;
    t.header = {"scenario", "eps", "norm", "error", "fitted_order"};
    for (const auto& e : rep.entries) {
        for (const auto& [norm, err] : e.errors)
            t.add_row({rep.scenario, format_double(e.eps), norm, format_double(err),
                       format_double(rep.fitted_order)});
        t.add_row({rep.scenario, format_double(e.eps), "remapped_l2_final",
                   format_double(e.remapped_l2_final), format_double(rep.fitted_order)});
    }
    const std::string cpath = r.dir + "/convergence.csv";
    write_csv(t, cpath);
    r.note_output(cpath);

    CsvTable p;
    p.header = {"scenario", "eps", "test_function", "pairing", "predicted", "gap"};
    for (const auto& e : rep.entries)
        for (const auto& pr : e.pairings)
            p.add_row({rep.scenario, format_double(e.eps), pr.label, format_double(pr.value),
                       format_double(pr.predicted), format_double(pr.gap)});
    const std::string ppath = r.dir + "/pairings.csv";
    write_csv(p, ppath);
    r.note_output(ppath);

    std::map<std::string, SvgSeries> series;
    for (const auto& e : rep.entries) {
        if (!e.failure.empty()) continue;
        for (const auto& [norm, err] : e.errors) {
            series[norm].label = norm;
            series[norm].x.push_back(e.eps);
            series[norm].y.push_back(err);
        }
        series["remapped_l2_final"].label = "remapped_l2_final";
        series["remapped_l2_final"].x.push_back(e.eps);
        series["remapped_l2_final"].y.push_back(e.remapped_l2_final);
    }
    std::vector<SvgSeries> sv;
    for (auto& [k, s] : series) sv.push_back(std::move(s));
    const std::string spath = r.dir + "/convergence.svg";
    write_svg_chart(spath, "convergence: " + rep.scenario, "eps", "error", sv, true);
    r.note_output(spath);
}

int run_converge(const CommonArgs& a) {
    Run r = open_run(a, "converge");
    try {
        const ConvergenceReport rep = convergence_study(r.sc, sweep(r, a));
        export_convergence(r, rep);
        for (const auto& e : rep.entries)
            r.check("eps=" + format_double(e.eps) +
                        (e.failure.empty() ? "" : " (" + e.failure + ")"),
                    e.failure.empty());
        r.check(std::string("verdict ") + to_string(rep.verdict) + " matches expected " +
                    to_string(r.sc.expected_verdict),
                rep.verdict == r.sc.expected_verdict);
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

int run_meanvalue(const CommonArgs& a) {
    Run r = open_run(a, "meanvalue");
    try {
        if (r.sc.expected_verdict == Scenario::Verdict::non_unique) {
            // The dyadic coefficient has no mean: report the diverging
            // window averages instead of a limit.
            const TemporalSignal sig = piecewise_dyadic_signal();
            const std::vector<WindowSchedule> schedules = {
                WindowSchedule::dyadic(1.0, 17), WindowSchedule::dyadic(1.0, 24)};
            const NonconvergenceReport rep = detect_nonconvergence(sig, schedules, 0.1);

            CsvTable t;
            t.header = {"schedule", "final_half_width", "final_window_average"};
            std::vector<SvgSeries> series;
            for (size_t s = 0; s < schedules.size(); ++s) {
                t.add_row({std::to_string(s), format_double(schedules[s].lengths.back()),
                           format_double(rep.estimates[s](0, 0))});
                SvgSeries sv{"schedule_" + std::to_string(s), {}, {}};
                for (double l : schedules[s].lengths) {
                    sv.x.push_back(l);
                    sv.y.push_back(sig.exact_window_average(l)(0, 0));
                }
                series.push_back(std::move(sv));
            }
            const std::string cpath = r.dir + "/window_averages.csv";
            write_csv(t, cpath);
            r.note_output(cpath);
            const std::string spath = r.dir + "/window_averages.svg";
            write_svg_chart(spath, "dyadic coefficient window averages", "half width l",
                            "average", series, true);
            r.note_output(spath);
            r.check("nonconvergence detected (gap " + format_double(rep.max_gap) + ")",
                    rep.flagged);
        } else {
            const EffectiveTensor et = scenario_effective_tensor(r.sc);
            const CoercivityCertificate cert = coercivity_certificate(et, r.sc.lambda);
            export_tensor(r, et, cert);
            r.check("orbit average converged", et.average_trace.converged);
        }
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

int run_counterexample(const CommonArgs& a0, const std::string& name) {
    CommonArgs a = a0;
    if (a.config_path.empty())
        a.scenario_name = (name == "nonunique") ? "dyadic_nonunique" : name;
    Run r = open_run(a, "counterexample");
    try {
        if (r.sc.expected_verdict == Scenario::Verdict::non_unique) {
            const NonuniquenessReport rep = nonuniqueness_study();
            CsvTable t;
            t.header = {"eps",           "window_average", "dist_to_coeff1",
                        "dist_to_coeff2", "closer_to",      "predicted"};
            std::vector<SvgSeries> series{{"dist_to_coeff1", {}, {}},
                                          {"dist_to_coeff2", {}, {}}};
            for (const auto& b : rep.branches) {
                t.add_row({format_double(b.eps), format_double(b.window_average),
                           format_double(b.dist_to_coeff1), format_double(b.dist_to_coeff2),
                           std::to_string(b.closer_to), std::to_string(b.predicted)});
                series[0].x.push_back(b.eps);
                series[0].y.push_back(b.dist_to_coeff1);
                series[1].x.push_back(b.eps);
                series[1].y.push_back(b.dist_to_coeff2);
            }
            const std::string cpath = r.dir + "/branches.csv";
            write_csv(t, cpath);
            r.note_output(cpath);
            const std::string spath = r.dir + "/branches.svg";
            write_svg_chart(spath, "dyadic coefficient: branch selection by eps", "eps",
                            "L2 distance", series, true);
            r.note_output(spath);
            r.check("two subsequences select the predicted distinct limits",
                    rep.matches_prediction);
        } else if (r.sc.expected_verdict == Scenario::Verdict::trivial_limit) {
            const ConvergenceReport rep = convergence_study(r.sc, sweep(r, a));
            export_convergence(r, rep);
            for (const auto& e : rep.entries)
                r.check("eps=" + format_double(e.eps) +
                            (e.failure.empty() ? "" : " (" + e.failure + ")"),
                        e.failure.empty());
            r.check("trivial limit confirmed",
                    rep.verdict == Scenario::Verdict::trivial_limit);
        } else {
            throw MeanflowError("scenario '" + r.sc.name + "' is not a counterexample");
        }
    } catch (const std::exception& e) {
        r.check(std::string("error: ") + e.what(), false);
    }
    return close_run(r);
}

int run_list() {
    for (const std::string& name : builtin_scenario_names()) {
        const Scenario sc = builtin_scenario(name);
        std::printf("%-20s %dD  %-13s %s\n", name.c_str(), sc.dim,
                    to_string(sc.expected_verdict), sc.description.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"meanflow scenario runner"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    CommonArgs a_cell, a_eff, a_eps, a_hom, a_conv, a_mean, a_ctr;
    std::string ctr_name;

    auto* cell = app.add_subcommand("cell", "solve the frozen cell problem");
    add_common(cell, a_cell);
    auto* eff = app.add_subcommand("effective", "effective tensor along the mean-flow orbit");
    add_common(eff, a_eff);
    auto* seps = app.add_subcommand("solve-eps", "oscillatory-coefficient solves over eps");
    add_common(seps, a_eps);
    auto* shom = app.add_subcommand("solve-hom", "homogenized solve");
    add_common(shom, a_hom);
    auto* conv = app.add_subcommand("converge", "eps-sweep convergence study");
    add_common(conv, a_conv);
    auto* mv = app.add_subcommand("meanvalue", "orbit window-average diagnostics");
    add_common(mv, a_mean);
    auto* ctr = app.add_subcommand("counterexample", "non-homogenizing scenarios");
    ctr->add_option("name", ctr_name, "shear | nonunique")->required();
    add_common(ctr, a_ctr, false);
    app.add_subcommand("list-scenarios", "list built-in scenarios");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cell->parsed()) return run_cell(a_cell);
        if (eff->parsed()) return run_effective(a_eff);
        if (seps->parsed()) return run_solve_eps(a_eps);
        if (shom->parsed()) return run_solve_hom(a_hom);
        if (conv->parsed()) return run_converge(a_conv);
        if (mv->parsed()) return run_meanvalue(a_mean);
        if (ctr->parsed()) return run_counterexample(a_ctr, ctr_name);
        return run_list();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
