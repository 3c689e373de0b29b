#include <doctest.h>

#include <cmath>

#include "meanflow/sigma.hpp"

using namespace meanflow;

namespace {
constexpr double kTwoPi = 2.0 * M_PI;

// smooth compactly supported bump, = 1 integral when normalized is not needed
double bump(double r2, double rho) {
    const double s = r2 / (rho * rho);
    return s >= 1.0 ? 0.0 : std::pow(1.0 - s, 3);
}

GridSolution constant_one(const GridSpec& g, const std::vector<double>& times) {
    GridSolution sol;
    sol.grid = g;
    sol.times = times;
    for (size_t i = 0; i < times.size(); ++i)
        sol.frames.push_back(Eigen::VectorXd::Ones(g.cells()));
    return sol;
}
} // namespace

TEST_CASE("pairing of u = 1 against a (t, X)-only test function is its integral") {
    const GridSpec g = GridSpec::centered(2, 96, 4.0);
    const GridSolution sol = constant_one(g, {0.0, 0.5, 1.0});
    TestFunction psi;
    psi.label = "plain";
    psi.time_factor = [](double t) { return 1.0 + t; };
    psi.space_factor = [](const Vec& X) { return bump(X.squaredNorm(), 1.5); };
    const MeanFlowField still = constant_drift_field(make_vec({0.0, 0.0}));
    const double value = sigma_pairing(sol, psi, still, 0.1);

    // int_0^1 (1+t) dt * int bump = 1.5 * (pi rho^2 / 4) with
    // int (1-r^2/rho^2)^3 r dr dtheta = pi rho^2 / 4
    const double expect = 1.5 * M_PI * 1.5 * 1.5 / 4.0;
    CHECK(value == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("pairing with a nonzero y-mode decays as eps shrinks") {
    const GridSpec g = GridSpec::centered(2, 160, 4.0);
    const GridSolution sol = constant_one(g, {0.0, 1.0});
    TestFunction psi;
    psi.label = "osc";
    psi.time_factor = [](double) { return 1.0; };
    psi.space_factor = [](const Vec& X) { return bump(X.squaredNorm(), 1.5); };
    psi.y_mode = {1, 0, 0};
    const MeanFlowField still = constant_drift_field(make_vec({0.0, 0.0}));
    const double v1 = std::abs(sigma_pairing(sol, psi, still, 0.5));
    const double v2 = std::abs(sigma_pairing(sol, psi, still, 0.25));
    const double v3 = std::abs(sigma_pairing(sol, psi, still, 0.125));
    CHECK(v2 < v1);
    CHECK(v3 < v2);
}

TEST_CASE("constant-drift pairing agrees with the direct shift substitution") {
    const GridSpec g = GridSpec::centered(2, 128, 4.0);
    GridSolution sol;
    sol.grid = g;
    sol.times = {0.0, 0.5};
    for (size_t f = 0; f < 2; ++f) {
        Eigen::VectorXd u(g.cells());
        for (long i = 0; i < g.cells(); ++i)
            u(i) = std::cos(kTwoPi * g.node(i)(0) / 4.0);
        sol.frames.push_back(u);
    }
    const Vec bstar = make_vec({1.0, 0.0});
    const MeanFlowField drift = constant_drift_field(bstar);
    TestFunction psi;
    psi.label = "shifted";
    psi.time_factor = [](double) { return 1.0; };
    psi.space_factor = [](const Vec& X) { return bump(X.squaredNorm(), 1.2); };
    const double eps = 0.25;
    const double value = sigma_pairing(sol, psi, drift, eps);

    // direct substitution: psi evaluated at x - b* t / eps with periodic wrap
    double direct = 0.0;
    const double w[2] = {0.25, 0.25};  // trapezoid over {0, 0.5}
    for (size_t f = 0; f < 2; ++f) {
        const double shift = sol.times[f] / eps;
        double acc = 0.0;
        for (long i = 0; i < g.cells(); ++i) {
            Vec X = g.node(i) - bstar * shift;
            for (int a = 0; a < 2; ++a) {
                while (X(a) < g.lo(a)) X(a) += g.length(a);
                while (X(a) >= g.lo(a) + g.length(a)) X(a) -= g.length(a);
            }
            acc += sol.frames[f](i) * psi.space_factor(X);
        }
        direct += w[f] * acc * g.cell_volume();
    }
    CHECK(value == doctest::Approx(direct).epsilon(1e-8));
}

TEST_CASE("predicted limit of separable test functions") {
    const GridSpec g = GridSpec::centered(2, 64, 4.0);
    const GridSolution u0 = constant_one(g, {0.0, 1.0});
    MeanEstimate unit_mean;
    unit_mean.value = Eigen::MatrixXd::Ones(1, 1);
    unit_mean.converged = true;

    TestFunction plain;
    plain.time_factor = [](double) { return 1.0; };
    plain.space_factor = [](const Vec& X) { return bump(X.squaredNorm(), 1.5); };
    const double base = predicted_limit(u0, plain, unit_mean);
    CHECK(base == doctest::Approx(M_PI * 1.5 * 1.5 / 4.0).epsilon(1e-4));

    TestFunction osc = plain;
    osc.y_mode = {1, 0, 0};
    CHECK(predicted_limit(u0, osc, unit_mean) == 0.0);

    // periodic tau factor: limit scales by M(f)
    TestFunction tau = plain;
    tau.tau_factor = make_scalar_signal([](double t) { return 2.0 + std::cos(t); },
                                        SignalClass::periodic, kTwoPi);
    const MeanEstimate m = tau_factor_mean(tau);
    CHECK(m.value(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(predicted_limit(u0, tau, m) == doctest::Approx(2.0 * base).epsilon(1e-10));
}

TEST_CASE("oscillatory decay check rejects the zero mode") {
    const MeanFlowField still = constant_drift_field(make_vec({0.0, 0.0}));
    const GridSpec g = GridSpec::centered(2, 64, 4.0);
    CHECK_THROWS_AS(oscillatory_decay_check([](const Vec&) { return 1.0; }, still,
                                            {0, 0, 0}, {0.1, 0.05}, g),
                    MeanflowError);
}

TEST_CASE("oscillatory decay for the identity flow has order about one") {
    const MeanFlowField still = constant_drift_field(make_vec({0.0, 0.0}));
    const GridSpec g = GridSpec::centered(2, 320, 4.0);
    auto h = [](const Vec& x) { return bump(x.squaredNorm(), 1.6); };
    const DecayTable tbl =
        oscillatory_decay_check(h, still, {1, 0, 0}, {0.2, 0.1, 0.05}, g);
    CHECK(tbl.values[1] < tbl.values[0]);
    CHECK(tbl.values[2] < tbl.values[1]);
    CHECK(tbl.fitted_order >= 0.9);
}

TEST_CASE("decay check refuses flows with growing Jacobian bound") {
    const GridSpec g = GridSpec::centered(2, 64, 4.0);
    auto h = [](const Vec& x) { return bump(x.squaredNorm(), 1.6); };
    CHECK_THROWS_AS(
        oscillatory_decay_check(h, shear_field(), {1, 0, 0}, {0.2, 0.1, 0.05}, g),
        MeanflowError);
}

TEST_CASE("battery adapts to the scenario") {
    const Scenario sc = builtin_scenario("constant_drift");
    const std::vector<TestFunction> battery = default_battery(sc);
    CHECK(battery.size() >= 2);
    bool has_tau = false, has_mode = false;
    for (const auto& psi : battery) {
        if (psi.has_tau()) has_tau = true;
        if (psi.y_mode != std::array<int, 3>{0, 0, 0}) has_mode = true;
    }
    CHECK(has_tau);
    CHECK(has_mode);  // micro-oscillation scenario gets an oscillatory test

    const Scenario lag = builtin_scenario("lagrangian_only");
    for (const auto& psi : default_battery(lag))
        CHECK(psi.y_mode == std::array<int, 3>{0, 0, 0});
}

TEST_CASE("convergence study rejects non-unique scenarios") {
    const Scenario sc = builtin_scenario("dyadic_nonunique");
    CHECK_THROWS_AS(convergence_study(sc, {0.1, 0.05}), MeanflowError);
}

TEST_CASE("test function evaluation is the separable product") {
    TestFunction psi;
    psi.time_factor = [](double t) { return 2.0 * t; };
    psi.space_factor = [](const Vec& X) { return X(0); };
    psi.tau_factor = make_scalar_signal([](double tau) { return std::cos(tau); },
                                        SignalClass::periodic, kTwoPi);
    psi.y_mode = {1, 0, 0};
    const double v = psi.psi(0.5, make_vec({3.0, 0.0}), M_PI, make_vec({0.25, 0.0}));
    // 2*0.5 * 3 * cos(pi) * cos(2 pi * 0.25) = 1 * 3 * (-1) * 0 = 0
    CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    const double v2 = psi.psi(0.5, make_vec({3.0, 0.0}), 0.0, make_vec({0.5, 0.0}));
    CHECK(v2 == doctest::Approx(1.0 * 3.0 * 1.0 * -1.0).epsilon(1e-12));
}
