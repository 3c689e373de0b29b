#include "meanflow/sigma.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

namespace meanflow {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double mode_phase(const std::array<int, 3>& n, const Vec& y) {
    double p = 0;
    for (int a = 0; a < y.size() && a < 3; ++a) p += n[static_cast<size_t>(a)] * y(a);
    return two_pi * p;
}

bool zero_mode(const std::array<int, 3>& n) { return n[0] == 0 && n[1] == 0 && n[2] == 0; }

/// translation-invariant flows admit a closed-form backward map
bool is_translation(const MeanFlowField& field, const GridSpec& g) {
    for (int p = 0; p < 3; ++p) {
        Vec probe = g.lo + g.length * (0.17 + 0.29 * p);
        if (field.velocity_gradient(probe).norm() > 1e-12) return false;
    }
    return true;
}

Vec wrap_into(const GridSpec& g, Vec x) {
    for (int a = 0; a < g.dim; ++a) {
        const double rel = (x(a) - g.lo(a)) / g.length(a);
        x(a) = g.lo(a) + (rel - std::floor(rel)) * g.length(a);
    }
    return x;
}

std::vector<double> trapezoid_weights(const std::vector<double>& t) {
    std::vector<double> w(t.size(), 0.0);
    for (size_t j = 0; j + 1 < t.size(); ++j) {
        const double h = t[j + 1] - t[j];
        w[j] += h / 2;
        w[j + 1] += h / 2;
    }
    return w;
}

void check_support(const TestFunction& psi, const GridSpec& g) {
    if (!psi.space_factor) throw MeanflowError("test function has no space factor");
    double interior = 0, boundary = 0;
    const long total = g.cells();
    for (long i = 0; i < total; ++i) {
        const Vec x = g.node(i);
        const double h = std::abs(psi.space_factor(x));
        interior = std::max(interior, h);
        for (int a = 0; a < g.dim; ++a) {
            const double margin = std::max(2.0 * g.dx(a), 0.02 * g.length(a));
            const double rel = x(a) - g.lo(a);
            if (rel < margin || rel > g.length(a) - margin) boundary = std::max(boundary, h);
        }
    }
    if (interior <= 0) throw MeanflowError("test function vanishes on the whole grid");
    if (boundary > 1e-6 * interior)
        throw MeanflowError("test function '" + psi.label +
                            "' leaks outside the solution grid");
}

double fit_order(const std::vector<double>& eps, const std::vector<double>& values) {
    // least squares slope of log|v| against log(eps), last three points
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < eps.size(); ++i)
        if (values[i] > 0) pts.emplace_back(std::log(eps[i]), std::log(values[i]));
    if (pts.size() > 3) pts.erase(pts.begin(), pts.end() - 3);
    if (pts.size() < 2) return 0;
    double mx = 0, my = 0;
    for (auto& [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double num = 0, den = 0;
    for (auto& [x, y] : pts) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    return den > 0 ? num / den : 0;
}

} // namespace

double TestFunction::psi(double t, const Vec& X, double tau, const Vec& y) const {
    double v = space_factor ? space_factor(X) : 1.0;
    if (time_factor) v *= time_factor(t);
    if (has_tau()) v *= tau_factor.eval(tau)(0, 0);
    if (!zero_mode(y_mode)) v *= std::cos(mode_phase(y_mode, y));
    return v;
}

std::vector<double> sigma_pairing_many(const GridSolution& sol,
                                       const std::vector<TestFunction>& psis,
                                       const MeanFlowField& field, double epsilon) {
    const GridSpec& g = sol.grid;
    const long total = g.cells();
    if (sol.times.size() < 2) throw MeanflowError("sigma_pairing: need at least two frames");
    for (const auto& psi : psis) check_support(psi, g);

    const bool translation = is_translation(field, g);
    const Vec b_star = translation ? field.velocity(g.lo) : Vec::Zero(g.dim);
    const std::vector<double> wt = trapezoid_weights(sol.times);
    const double vol = g.cell_volume();

    std::vector<double> values(psis.size(), 0.0);
    std::vector<Vec> mapped(static_cast<size_t>(total));
    for (size_t j = 0; j < sol.times.size(); ++j) {
        const double t = sol.times[j];
        const double tau = t / epsilon;
        const Eigen::VectorXd& u = sol.frames[j];
        for (long i = 0; i < total; ++i) {
            const Vec x = g.node(i);
            if (translation)
                mapped[static_cast<size_t>(i)] = wrap_into(g, x - b_star * tau);
            else
                mapped[static_cast<size_t>(i)] =
                    tau == 0.0 ? x : integrate_flow(field, x, -tau);
        }
        for (size_t p = 0; p < psis.size(); ++p) {
            const TestFunction& psi = psis[p];
            double space = 0;
            for (long i = 0; i < total; ++i) {
                double w = psi.space_factor(mapped[static_cast<size_t>(i)]);
                if (!zero_mode(psi.y_mode))
                    w *= std::cos(mode_phase(psi.y_mode, g.node(i) / epsilon));
                space += u(i) * w;
            }
            double factor = psi.time_factor ? psi.time_factor(t) : 1.0;
            if (psi.has_tau()) factor *= psi.tau_factor.eval(tau)(0, 0);
            values[p] += wt[j] * factor * space * vol;
        }
    }
    return values;
}

double sigma_pairing(const GridSolution& sol, const TestFunction& psi,
                     const MeanFlowField& field, double epsilon) {
    return sigma_pairing_many(sol, {psi}, field, epsilon)[0];
}

MeanEstimate tau_factor_mean(const TestFunction& psi, const WindowSchedule& schedule) {
    if (!psi.has_tau()) {
        MeanEstimate one;
        one.value = Eigen::MatrixXd::Ones(1, 1);
        one.converged = true;
        one.trace.emplace_back(0.0, one.value);
        return one;
    }
    return mean_value(psi.tau_factor, schedule);
}

double predicted_limit(const GridSolution& u0, const TestFunction& psi,
                       const MeanEstimate& tau_mean, const CellSolution*) {
    if (!tau_mean.converged)
        throw MeanflowError("predicted_limit: mean of the tau factor did not converge");
    if (!zero_mode(psi.y_mode)) return 0.0;  // the cosine has zero y-mean
    const GridSpec& g = u0.grid;
    const long total = g.cells();
    const std::vector<double> wt = trapezoid_weights(u0.times);
    const double vol = g.cell_volume();
    double acc = 0;
    for (size_t j = 0; j < u0.times.size(); ++j) {
        double space = 0;
        for (long i = 0; i < total; ++i)
            space += u0.frames[j](i) * psi.space_factor(g.node(i));
        const double gfac = psi.time_factor ? psi.time_factor(u0.times[j]) : 1.0;
        acc += wt[j] * gfac * space * vol;
    }
    return acc * tau_mean.value(0, 0);
}

DecayTable oscillatory_decay_check(const std::function<double(const Vec&)>& h,
                                   const MeanFlowField& field, const std::array<int, 3>& n_mode,
                                   const std::vector<double>& eps_list, const GridSpec& grid,
                                   double t) {
    if (zero_mode(n_mode))
        throw MeanflowError("oscillatory_decay_check: the oscillation mode must be nonzero");
    if (eps_list.size() < 2)
        throw MeanflowError("oscillatory_decay_check: need at least two eps values");
    grid.validate();

    double min_eps = eps_list[0];
    for (double e : eps_list) min_eps = std::min(min_eps, e);
    const JacobianBound jb = jacobian_bound_estimate(field, grid.lo, grid.lo + grid.length,
                                                     t / min_eps, 16);
    if (jb.growth_flag)
        throw MeanflowError("oscillatory_decay_check: the Jacobian bound keeps growing");

    const bool translation = is_translation(field, grid);
    const Vec b_star = translation ? field.velocity(grid.lo) : Vec::Zero(grid.dim);
    const long total = grid.cells();
    const double vol = grid.cell_volume();

    DecayTable table;
    for (double eps : eps_list) {
        const double tau = t / eps;
        std::complex<double> acc(0, 0);
        for (long i = 0; i < total; ++i) {
            const Vec x = grid.node(i);
            Vec xb;
            if (translation)
                xb = wrap_into(grid, x - b_star * tau);
            else
                xb = integrate_flow(field, x, -tau);
            const double phase = mode_phase(n_mode, x / eps);
            acc += h(xb) * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        table.eps.push_back(eps);
        table.values.push_back(std::abs(acc) * vol);
    }
    table.fitted_order = fit_order(table.eps, table.values);
    return table;
}

std::vector<TestFunction> default_battery(const Scenario& sc) {
    const double rho = 0.4 * sc.grid.length(0);
    auto bump = [rho](const Vec& X) {
        const double r2 = X.squaredNorm() / (rho * rho);
        return r2 >= 1.0 ? 0.0 : std::pow(1.0 - r2, 3);
    };
    std::vector<TestFunction> battery;
    {
        TestFunction f;
        f.label = "plain";
        f.space_factor = bump;
        battery.push_back(f);
    }
    {
        TestFunction f;
        f.label = "tau_cos";
        f.space_factor = bump;
        f.tau_factor = make_trig_polynomial({1.0}, {1.0}, {0.0});
        battery.push_back(f);
    }
    if (sc.micro_oscillation) {
        TestFunction f;
        f.label = "y_mode_e1";
        f.space_factor = bump;
        f.y_mode = {1, 0, 0};
        battery.push_back(f);
    }
    return battery;
}

ConvergenceReport convergence_study(const Scenario& sc, std::vector<double> eps_list,
                                    const std::vector<std::string>& norms,
                                    int resolution_factor, int frames) {
    if (eps_list.size() < 3)
        throw MeanflowError("convergence_study: need at least three eps values");
    if (sc.expected_verdict == Scenario::Verdict::non_unique)
        throw MeanflowError("convergence_study: scenario '" + sc.name +
                            "' has no unique limit; use the nonuniqueness study");
    std::sort(eps_list.begin(), eps_list.end(), std::greater<double>());

    ConvergenceReport rep;
    rep.scenario = sc.name;

    const bool attempt_hom = sc.expected_verdict == Scenario::Verdict::homogenizes;
    if (attempt_hom) {
        const EffectiveOptions opts = sc.effective_options();
        EffectiveTensor et;
        if (sc.has_cell) {
            et = effective_tensor(sc.mean_flow, sc.X0, sc.b, sc.D, opts);
        } else {
            auto Dmacro = sc.D;
            et = lagrangian_effective_tensor(
                sc.mean_flow, [Dmacro](const Vec& x) { return Dmacro(x, x); }, sc.X0, opts);
        }
        rep.D_eff = et.D_eff;
    }

    const std::vector<TestFunction> battery = default_battery(sc);
    std::vector<MeanEstimate> tau_means;
    for (const auto& psi : battery) tau_means.push_back(tau_factor_mean(psi));

    std::vector<double> save_times;
    for (int j = 0; j < frames; ++j)
        save_times.push_back(sc.T * static_cast<double>(j) / (frames - 1));

    for (double eps : eps_list) {
        ConvergenceEntry entry;
        entry.eps = eps;
        try {
            int n = sc.grid.n;
            if (sc.micro_oscillation) {
                const double need = sc.grid.length(0) / (eps / resolution_factor);
                int n_need = static_cast<int>(std::ceil(need / 16.0)) * 16;
                n = std::max(n, n_need);
            }
            GridSpec g = GridSpec::centered(sc.dim, n, sc.grid.length(0));

            EpsProblemSpec es;
            es.grid = g;
            es.epsilon = eps;
            es.b = sc.b;
            es.D = sc.D;
            es.initial = sc.initial;
            es.T = sc.T;
            es.save_times = save_times;
            GridSolution sol = solve_eps(es);
            sol.check_invariants();

            GridSolution v = lagrangian_remap(sol, sc.mean_flow, eps);
            entry.remapped_l2_final = v.frame_l2(v.frames.size() - 1);

            GridSolution u0;
            bool have_u0 = false;
            if (attempt_hom) {
                HomProblemSpec hs;
                hs.grid = g;
                Eigen::MatrixXd De = rep.D_eff;
                hs.D_eff = [De](const Vec&) { return De; };
                hs.initial = sc.initial;
                hs.T = sc.T;
                hs.save_times = save_times;
                u0 = solve_homogenized(hs);
                u0.check_invariants();
                have_u0 = true;
                for (const std::string& norm : norms) {
                    if (norm == "l2")
                        entry.errors[norm] = l2_space_time_distance(v, u0);
                    else if (norm == "final_l2")
                        entry.errors[norm] =
                            std::sqrt((v.frames.back() - u0.frames.back()).squaredNorm() *
                                      g.cell_volume());
                    else
                        throw MeanflowError("convergence_study: unknown norm '" + norm + "'");
                }
            }

            const std::vector<double> vals = sigma_pairing_many(sol, battery, sc.mean_flow, eps);
            for (size_t p = 0; p < battery.size(); ++p) {
                PairingResult pr;
                pr.label = battery[p].label;
                pr.epsilon = eps;
                pr.value = vals[p];
                pr.predicted = have_u0 ? predicted_limit(u0, battery[p], tau_means[p]) : 0.0;
                pr.gap = std::abs(pr.value - pr.predicted);
                entry.pairings.push_back(pr);
            }
        } catch (const std::exception& e) {
            entry.failure = e.what();
        }
        rep.entries.push_back(std::move(entry));
    }

    std::vector<double> eps_ok, err_ok, remap_ok;
    for (const auto& e : rep.entries) {
        if (!e.failure.empty()) continue;
        eps_ok.push_back(e.eps);
        remap_ok.push_back(e.remapped_l2_final);
        auto it = e.errors.find("l2");
        if (it != e.errors.end()) err_ok.push_back(it->second);
    }
    if (err_ok.size() >= 2) {
        rep.fitted_order = fit_order(eps_ok, err_ok);
        rep.errors_decreasing = true;
        for (size_t i = 1; i < err_ok.size(); ++i)
            if (!(err_ok[i] < err_ok[i - 1])) rep.errors_decreasing = false;
    }
    bool remap_decreasing = remap_ok.size() >= 2;
    for (size_t i = 1; i < remap_ok.size(); ++i)
        if (!(remap_ok[i] < remap_ok[i - 1])) remap_decreasing = false;

    if (attempt_hom)
        rep.verdict = rep.errors_decreasing ? Scenario::Verdict::homogenizes
                                            : Scenario::Verdict::trivial_limit;
    else
        rep.verdict = remap_decreasing ? Scenario::Verdict::trivial_limit
                                       : Scenario::Verdict::homogenizes;
    return rep;
}

NonuniquenessReport nonuniqueness_study(int n, double side, double dt) {
    const double T = 1.0;
    GridSpec g = GridSpec::centered(1, n, side);
    auto initial = [](const Vec& x) { return std::exp(-x.squaredNorm() / 2.0); };
    const std::vector<double> saves = {0.0, T};

    auto heat = [&](double coef) {
        HomProblemSpec hs;
        hs.grid = g;
        hs.D_eff = [coef](const Vec&) {
            Eigen::MatrixXd m(1, 1);
            m(0, 0) = coef;
            return m;
        };
        hs.initial = initial;
        hs.T = T;
        hs.save_times = saves;
        return solve_homogenized(hs);
    };
    const GridSolution heat1 = heat(1.0);
    const GridSolution heat2 = heat(2.0);
    const double vol = g.cell_volume();

    NonuniquenessReport rep;
    rep.matches_prediction = true;
    for (double eps : {1.0 / 16.0, 1.0 / 512.0}) {
        GridSolution sol = solve_moving_coefficient_1d(g, piecewise_dyadic_coefficient,
                                                       1.0 / eps, initial, T, dt, saves);
        sol.check_invariants();
        NonuniquenessBranch br;
        br.eps = eps;
        br.window_average = piecewise_dyadic_average(1.0 / eps);
        br.dist_to_coeff1 =
            std::sqrt((sol.frames.back() - heat1.frames.back()).squaredNorm() * vol);
        br.dist_to_coeff2 =
            std::sqrt((sol.frames.back() - heat2.frames.back()).squaredNorm() * vol);
        br.closer_to = br.dist_to_coeff1 < br.dist_to_coeff2 ? 1 : 2;
        br.predicted = std::abs(br.window_average - 1.0) < std::abs(br.window_average - 2.0)
                           ? 1
                           : 2;
        if (br.closer_to != br.predicted) rep.matches_prediction = false;
        rep.branches.push_back(br);
    }
    return rep;
}

} // namespace meanflow
