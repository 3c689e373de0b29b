#include <doctest.h>

#include <cmath>
#include <random>

#include "meanflow/flow.hpp"

using namespace meanflow;

TEST_CASE("flow of a constant drift is a straight line") {
    const MeanFlowField f = constant_drift_field(make_vec({1.0, 0.0}));
    const Vec x = integrate_flow(f, make_vec({0.0, 0.0}), 3.0);
    CHECK(x(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(x(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rigid rotation moves (1,0) to (0,1) in a quarter turn") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField f = linear_field(a, make_vec({0.0, 0.0}));
    const Vec x = integrate_flow(f, make_vec({1.0, 0.0}), M_PI / 2);
    CHECK(x(0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(x(1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("shear flow has the closed form (x1 + tau x2, x2)") {
    const MeanFlowField f = shear_field();
    const Vec x = integrate_flow(f, make_vec({1.0, 2.0}), 2.0);
    CHECK(x(0) == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(x(1) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("backward-flow Jacobian of a constant drift is the identity") {
    const MeanFlowField f = constant_drift_field(make_vec({0.4, -1.2}));
    const Mat j = flow_jacobian(f, make_vec({3.0, 1.0}), 7.0);
    CHECK((j - Mat::Identity(2, 2)).norm() == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("shear Jacobian grows linearly: off-diagonal entry -tau") {
    // J(tau, x) is the Jacobian of the backward map Phi_{-tau}, so the
    // shear entry carries a minus sign: Phi_{-5}(x) = (x1 - 5 x2, x2).
    const MeanFlowField f = shear_field();
    const Mat j = flow_jacobian(f, make_vec({0.0, 1.0}), 5.0);
    CHECK(j(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(j(0, 1) == doctest::Approx(-5.0).epsilon(1e-9));
    CHECK(j(1, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(j(1, 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(j.determinant() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rotation Jacobian is the rotation by -tau with unit determinant") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField f = linear_field(a, make_vec({0.0, 0.0}));
    const Mat j = flow_jacobian(f, make_vec({1.0, 0.0}), M_PI);
    Mat expect(2, 2);
    expect << std::cos(M_PI), std::sin(M_PI), -std::sin(M_PI), std::cos(M_PI);
    CHECK((j - expect).norm() == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(j.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(j.jacobiSvd().singularValues().maxCoeff() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("flow representation at tau = 0 is exact") {
    const MeanFlowField f = shear_field();
    auto g = [](const Vec& x) { return std::sin(x(0)) + 1e-15 * x(1); };
    const Vec x = make_vec({0.3, -0.7});
    CHECK(flow_representation(g, f, 0.0, x) == g(x));  // bitwise
}

TEST_CASE("constant drift representation of x1 after tau = 2 is 2") {
    const MeanFlowField f = constant_drift_field(make_vec({1.0, 0.0}));
    auto g = [](const Vec& x) { return x(0); };
    CHECK(flow_representation(g, f, 2.0, make_vec({0.0, 0.0})) ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("group law of the flow on random taus") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField f = linear_field(a, make_vec({0.2, 0.0}));
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 20; ++k) {
        const double t1 = u(rng), t2 = u(rng);
        const Vec x = make_vec({u(rng), u(rng)});
        const Vec two_step = integrate_flow(f, integrate_flow(f, x, t1), t2);
        const Vec one_step = integrate_flow(f, x, t1 + t2);
        CHECK((two_step - one_step).norm() < 1e-8);
    }
}

TEST_CASE("Jacobian cocycle property") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField f = linear_field(a, make_vec({0.0, 0.1}));
    const Vec x = make_vec({0.5, -0.3});
    const double t1 = 0.8, t2 = 1.7;
    const Mat j1 = flow_jacobian(f, x, t1);
    const Mat j2 = flow_jacobian(f, integrate_flow(f, x, -t1), t2);
    const Mat j12 = flow_jacobian(f, x, t1 + t2);
    CHECK((j12 - j2 * j1).norm() < 1e-8);
}

TEST_CASE("transport identity residual") {
    SUBCASE("constant drift") {
        const MeanFlowField f = constant_drift_field(make_vec({2.0, 1.0}));
        CHECK(transport_identity_residual(f, make_vec({0.3, 0.4}), 4.0) < 1e-10);
    }
    SUBCASE("rotation") {
        Mat a(2, 2);
        a << 0, -1, 1, 0;
        const MeanFlowField f = linear_field(a, make_vec({0.0, 0.0}));
        CHECK(transport_identity_residual(f, make_vec({1.0, 0.0}), 1.0) < 1e-8);
    }
    SUBCASE("shear") {
        const MeanFlowField f = shear_field();
        CHECK(transport_identity_residual(f, make_vec({0.0, 1.0}), 10.0) < 1e-8);
    }
}

TEST_CASE("Jacobian bound: rotation plateaus at 1, shear grows") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField rot = linear_field(a, make_vec({0.0, 0.0}));
    const Vec lo = make_vec({-2.0, -2.0}), hi = make_vec({2.0, 2.0});
    const JacobianBound jb = jacobian_bound_estimate(rot, lo, hi, 50.0, 60);
    CHECK(jb.bound == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_FALSE(jb.growth_flag);

    const JacobianBound js = jacobian_bound_estimate(shear_field(), lo, hi, 100.0, 60);
    CHECK(js.bound >= 100.0);
    CHECK(js.growth_flag);

    const MeanFlowField ac = asymptotically_constant_field(1.0, 0.5, 0.75, 1.0);
    const JacobianBound ja = jacobian_bound_estimate(ac, lo, hi, 100.0, 60);
    CHECK(std::isfinite(ja.bound));
    CHECK_FALSE(ja.growth_flag);
}

TEST_CASE("orbit classifier") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    const MeanFlowField rot = linear_field(a, make_vec({0.0, 0.0}));
    CHECK(classify_orbit(rot, make_vec({1.0, 0.0}), 50.0, 5.0) == OrbitClass::bounded);

    const MeanFlowField drift = constant_drift_field(make_vec({1.0, 0.5}));
    CHECK(classify_orbit(drift, make_vec({0.0, 0.0}), 50.0, 5.0) == OrbitClass::escaping);

    const MeanFlowField still = constant_drift_field(make_vec({0.0, 0.0}));
    CHECK(classify_orbit(still, make_vec({1.0, 1.0}), 50.0, 5.0) == OrbitClass::bounded);
}

TEST_CASE("field validation rejects an inconsistent gradient") {
    MeanFlowField f = shear_field();
    f.velocity_gradient = [](const Vec&) {
        Mat g(2, 2);
        g << 0, 2, 0, 0;  // true gradient has g(0,1) = 1
        return g;
    };
    CHECK_THROWS_AS(f.validate_at(make_vec({0.0, 1.0})), MeanflowError);
}
