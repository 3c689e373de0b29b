#include <doctest.h>

#include <cmath>

#include "meanflow/pde.hpp"

using namespace meanflow;

namespace {
constexpr double kTwoPi = 2.0 * M_PI;

double gaussian(const Vec& x, double sigma) {
    return std::exp(-x.squaredNorm() / (2.0 * sigma * sigma));
}

// free-space heat solution with unit diffusion starting from the gaussian
double heat_exact(const Vec& x, double t, double sigma, int dim) {
    const double s2 = sigma * sigma + 2.0 * t;
    return std::pow(sigma * sigma / s2, dim / 2.0) * std::exp(-x.squaredNorm() / (2.0 * s2));
}

double rel_l2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).norm() / b.norm();
}

Eigen::VectorXd sample(const GridSpec& g, const std::function<double(const Vec&)>& f) {
    Eigen::VectorXd u(g.cells());
    for (long i = 0; i < g.cells(); ++i) u(i) = f(g.node(i));
    return u;
}
} // namespace

TEST_CASE("pure diffusion matches the heat kernel") {
    EpsProblemSpec s;
    s.grid = GridSpec::centered(2, 128, 8.0);
    s.epsilon = 1.0;
    s.D = [](const Vec&, const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    s.initial = [](const Vec& x) { return gaussian(x, 0.5); };
    s.T = 0.1;
    const GridSolution sol = solve_eps(s);
    sol.check_invariants();
    const Eigen::VectorXd exact =
        sample(s.grid, [&](const Vec& x) { return heat_exact(x, 0.1, 0.5, 2); });
    CHECK(rel_l2(sol.frames.back(), exact) < 1e-4);
}

TEST_CASE("constant drift at eps = 1 is a translated heat solution") {
    EpsProblemSpec s;
    s.grid = GridSpec::centered(2, 128, 8.0);
    s.epsilon = 1.0;
    s.b = [](const Vec&, const Vec&) { return make_vec({1.0, 0.5}); };
    s.D = [](const Vec&, const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    s.initial = [](const Vec& x) { return gaussian(x, 0.5); };
    s.T = 0.1;
    const GridSolution sol = solve_eps(s);
    sol.check_invariants();
    const Eigen::VectorXd exact = sample(s.grid, [&](const Vec& x) {
        return heat_exact(make_vec({x(0) - 0.1, x(1) - 0.05}), 0.1, 0.5, 2);
    });
    CHECK(rel_l2(sol.frames.back(), exact) < 2e-4);
}

TEST_CASE("shear multiplier exponent closed forms") {
    CHECK(shear_multiplier_exponent(1.0, 0.0, 1.0, 1.0) ==
          doctest::Approx(-4.0 / 3.0).epsilon(1e-14));
    CHECK(shear_multiplier_exponent(0.0, 1.0, 0.7, 0.1) ==
          doctest::Approx(-0.7).epsilon(1e-14));
    // fixed xi1 != 0: exponent diverges to -inf as eps -> 0
    CHECK(shear_multiplier_exponent(1.0, 1.0, 1.0, 0.01) < -1e3);
}

TEST_CASE("shear solve matches the Fourier oracle after remap") {
    const double eps = 0.5, T = 0.5;
    EpsProblemSpec s;
    s.grid = GridSpec::centered(2, 256, 16.0);
    s.epsilon = eps;
    s.b = [](const Vec& x, const Vec&) { return make_vec({x(1), 0.0}); };
    s.D = [](const Vec&, const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    s.initial = [](const Vec& x) { return gaussian(x, 1.0); };
    s.T = T;
    s.save_times = {0.0, T};
    const GridSolution sol = solve_eps(s);
    sol.check_invariants();
    const GridSolution remapped = lagrangian_remap(sol, shear_field(), eps);
    const GridSolution oracle =
        shear_fourier_solution(s.grid, s.initial, {0.0, T}, eps);
    CHECK(rel_l2(remapped.frames.back(), oracle.frames.back()) < 1e-3);
}

TEST_CASE("remap by the identity flow leaves frames unchanged") {
    GridSolution sol;
    sol.grid = GridSpec::centered(2, 64, 4.0);
    sol.times = {0.5};
    sol.frames = {sample(sol.grid, [](const Vec& x) { return gaussian(x, 0.5); })};
    const MeanFlowField still = constant_drift_field(make_vec({0.0, 0.0}));
    const GridSolution v = lagrangian_remap(sol, still, 0.3);
    CHECK((v.frames[0] - sol.frames[0]).norm() == 0.0);
}

TEST_CASE("remap by a grid-commensurate constant drift is an exact shift") {
    GridSolution sol;
    sol.grid = GridSpec::centered(2, 64, 4.0);  // dx = 1/16
    sol.times = {1.0};
    auto f = [](const Vec& x) {
        return std::sin(kTwoPi * x(0) / 4.0) + 0.3 * std::cos(kTwoPi * x(1) / 4.0);
    };
    sol.frames = {sample(sol.grid, f)};
    const double eps = 0.5;  // shift = b* t/eps = (2, 0): 32 cells
    const MeanFlowField drift = constant_drift_field(make_vec({1.0, 0.0}));
    const GridSolution v = lagrangian_remap(sol, drift, eps);
    // v(t, X) = u(t, X + b t/eps) with periodic wrap
    const Eigen::VectorXd expect = sample(sol.grid, [&](const Vec& x) {
        Vec y = x;
        y(0) += 2.0;
        if (y(0) >= 2.0) y(0) -= 4.0;  // periodic box [-2, 2)
        return f(y);
    });
    CHECK((v.frames[0] - expect).lpNorm<Eigen::Infinity>() < 1e-13);
    CHECK(v.coverage == 1.0);
}

TEST_CASE("remap after a full rotation is the identity up to interpolation") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField rot = linear_field(a, make_vec({0.0, 0.0}));
    GridSolution sol;
    sol.grid = GridSpec::centered(2, 128, 8.0);
    sol.times = {1.0};
    sol.frames = {sample(sol.grid, [](const Vec& x) { return gaussian(x, 1.0); })};
    const GridSolution v = lagrangian_remap(sol, rot, 1.0 / kTwoPi);  // t/eps = 2 pi
    CHECK(rel_l2(v.frames[0], sol.frames[0]) < 1e-5);
}

TEST_CASE("homogenized solve with identity tensor is the heat solution") {
    HomProblemSpec s;
    s.grid = GridSpec::centered(2, 128, 8.0);
    s.D_eff = [](const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    s.initial = [](const Vec& x) { return gaussian(x, 0.5); };
    s.T = 0.1;
    const GridSolution sol = solve_homogenized(s);
    const Eigen::VectorXd exact =
        sample(s.grid, [&](const Vec& x) { return heat_exact(x, 0.1, 0.5, 2); });
    CHECK(rel_l2(sol.frames.back(), exact) < 1e-4);
}

TEST_CASE("1D homogenized solve with sqrt(3) rescales time") {
    HomProblemSpec s;
    s.grid = GridSpec::centered(1, 256, 16.0);
    s.D_eff = [](const Vec&) {
        Eigen::MatrixXd d(1, 1);
        d(0, 0) = std::sqrt(3.0);
        return d;
    };
    s.initial = [](const Vec& x) { return gaussian(x, 0.5); };
    s.T = 0.2;
    const GridSolution sol = solve_homogenized(s);
    const Eigen::VectorXd exact = sample(
        s.grid, [&](const Vec& x) { return heat_exact(x, std::sqrt(3.0) * 0.2, 0.5, 1); });
    CHECK(rel_l2(sol.frames.back(), exact) < 1e-4);
}

TEST_CASE("skew part of a constant tensor does not change the solution") {
    HomProblemSpec sym;
    sym.grid = GridSpec::centered(2, 96, 8.0);
    sym.D_eff = [](const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    sym.initial = [](const Vec& x) { return gaussian(x, 0.7); };
    sym.T = 0.1;
    sym.force_fd = true;

    HomProblemSpec skew = sym;
    skew.D_eff = [](const Vec&) {
        Eigen::MatrixXd d = Eigen::MatrixXd::Identity(2, 2);
        d(0, 1) = 0.4;
        d(1, 0) = -0.4;
        return d;
    };
    const GridSolution a = solve_homogenized(sym);
    const GridSolution b = solve_homogenized(skew);
    CHECK((a.frames.back() - b.frames.back()).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("forced finite-difference path agrees with the spectral path") {
    HomProblemSpec s;
    s.grid = GridSpec::centered(2, 96, 8.0);
    Eigen::MatrixXd d(2, 2);
    d << 1.5, 0.2, 0.2, 1.0;
    s.D_eff = [d](const Vec&) { return d; };
    s.initial = [](const Vec& x) { return gaussian(x, 0.7); };
    s.T = 0.1;
    s.dt = 1e-3;
    const GridSolution spectral = solve_homogenized(s);
    s.force_fd = true;
    const GridSolution fd = solve_homogenized(s);
    // second-order stencil vs spectral: gap dominated by the FD truncation error
    CHECK(rel_l2(fd.frames.back(), spectral.frames.back()) < 5e-3);
}

TEST_CASE("moving-coefficient 1D solve: constant coefficient is plain heat") {
    const GridSpec g = GridSpec::centered(1, 512, 32.0);
    const GridSolution sol = solve_moving_coefficient_1d(
        g, [](double) { return 1.0; }, 1.0, [](const Vec& x) { return gaussian(x, 1.0); },
        0.5, 1e-3);
    sol.check_invariants();
    const Eigen::VectorXd exact =
        sample(g, [&](const Vec& x) { return heat_exact(x, 0.5, 1.0, 1); });
    CHECK(rel_l2(sol.frames.back(), exact) < 3e-4);
}

TEST_CASE("invariant checker rejects tampered traces") {
    EpsProblemSpec s;
    s.grid = GridSpec::centered(1, 64, 8.0);
    s.epsilon = 1.0;
    s.D = [](const Vec&, const Vec&) { return Eigen::MatrixXd::Identity(1, 1); };
    s.initial = [](const Vec& x) { return gaussian(x, 0.5); };
    s.T = 0.05;
    GridSolution sol = solve_eps(s);
    sol.check_invariants();
    sol.l2_trace.back() = sol.l2_trace.front() * 1.01;  // fake energy growth
    CHECK_THROWS_AS(sol.check_invariants(), MeanflowError);
}

TEST_CASE("boundary mass diagnostic flags data near the box edge") {
    EpsProblemSpec s;
    s.grid = GridSpec::centered(1, 128, 8.0);
    s.epsilon = 1.0;
    s.D = [](const Vec&, const Vec&) { return Eigen::MatrixXd::Identity(1, 1); };
    s.T = 0.01;
    s.initial = [](const Vec& x) { return gaussian(x, 0.3); };
    CHECK(solve_eps(s).boundary_mass_fraction < 1e-8);
    s.initial = [](const Vec& x) { return gaussian(make_vec({x(0) - 3.9}), 0.3); };
    CHECK(solve_eps(s).boundary_mass_fraction > 1e-3);
}

TEST_CASE("perturbed model: h1 = 0 gives a zero convective correction") {
    PerturbedModelSpec s;
    s.dim = 2;
    s.modes = 32;
    s.h = [](const Vec& y) {
        return make_vec({1.0 + 0.5 * std::cos(kTwoPi * y(1)), 0.5 + 0.5 * std::cos(kTwoPi * y(0))});
    };
    s.D = [](const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    const PerturbedModelResult r = solve_perturbed_model(s);
    CHECK(r.h_star(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.h_star(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.h_field_constant);
    CHECK(r.h_constant_value.norm() < 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 *
                                                      (r.D_eff + r.D_eff.transpose()));
    CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-8);
}

TEST_CASE("perturbed model: constant h1 shifts only the convective field") {
    PerturbedModelSpec base;
    base.dim = 2;
    base.modes = 32;
    base.h = [](const Vec& y) {
        return make_vec({1.0 + 0.5 * std::cos(kTwoPi * y(1)), 0.5 + 0.5 * std::cos(kTwoPi * y(0))});
    };
    base.D = [](const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    const PerturbedModelResult r0 = solve_perturbed_model(base);

    PerturbedModelSpec shifted = base;
    shifted.h1 = [](const Vec&, const Vec&) { return make_vec({0.3, -0.2}); };
    shifted.h1_class = SignalClass::periodic;
    shifted.h1_period = 1.0;
    const PerturbedModelResult r1 = solve_perturbed_model(shifted);
    CHECK(r1.h_field_constant);
    CHECK((r1.h_constant_value - make_vec({0.3, -0.2})).norm() < 1e-10);
    CHECK((r1.D_eff - r0.D_eff).norm() < 1e-10);
}

TEST_CASE("perturbed model: converging h1(x) averages to its limit at infinity") {
    PerturbedModelSpec s;
    s.dim = 2;
    s.modes = 16;
    s.h = [](const Vec&) { return make_vec({1.0, 0.5}); };
    s.D = [](const Vec&) { return Eigen::MatrixXd::Identity(2, 2); };
    s.h1 = [](const Vec& x, const Vec&) {
        return make_vec({2.0 + 1.0 / (1.0 + x.squaredNorm()), 0.0});
    };
    s.h1_class = SignalClass::converging_at_infinity;
    const PerturbedModelResult r = solve_perturbed_model(s);
    const Vec h = r.h_field(make_vec({0.3, -0.8}));
    CHECK(h(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(h(1) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("grid helpers") {
    const GridSpec g = GridSpec::centered(2, 64, 4.0);
    CHECK(g.cells() == 64 * 64);
    CHECK(g.dx(0) == doctest::Approx(0.0625));
    CHECK(g.cell_volume() == doctest::Approx(0.0625 * 0.0625));
    const Vec x0 = g.node(0);
    CHECK(x0(0) == doctest::Approx(-2.0));
    CHECK(x0(1) == doctest::Approx(-2.0));
    GridSpec bad = g;
    bad.n = 0;
    CHECK_THROWS_AS(bad.validate(), MeanflowError);
}

TEST_CASE("space-time norms over shared frames") {
    const GridSpec g = GridSpec::centered(1, 64, 8.0);
    GridSolution a, b;
    a.grid = b.grid = g;
    a.times = b.times = {0.0, 0.5, 1.0};
    for (double t : a.times) {
        a.frames.push_back(sample(g, [&](const Vec& x) { return gaussian(x, 1.0 + t); }));
        b.frames.push_back(a.frames.back());
    }
    CHECK(l2_space_time_distance(a, b) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(l2_space_time_norm(a) > 0.0);
}
