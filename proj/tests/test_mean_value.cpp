#include <doctest.h>

#include <cmath>

#include "meanflow/mean_value.hpp"

using namespace meanflow;

TEST_CASE("mean of sin over its period is zero") {
    const TemporalSignal s =
        make_scalar_signal([](double t) { return std::sin(t); }, SignalClass::periodic, 2 * M_PI);
    const MeanEstimate m = mean_value(s, WindowSchedule::dyadic());
    CHECK(m.converged);
    CHECK(m.scalar() == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("mean of a signal converging at infinity is its limit") {
    const TemporalSignal s = make_scalar_signal(
        [](double t) { return 2.0 + 1.0 / (1.0 + t * t); }, SignalClass::converging_at_infinity);
    const MeanEstimate m = mean_value(s, WindowSchedule::dyadic());
    CHECK(m.converged);
    CHECK(m.scalar() == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("mean of a trig polynomial is its constant term") {
    const TemporalSignal s =
        make_trig_polynomial({0.0, 1.0, std::sqrt(2.0)}, {3.0, 1.0, 0.0}, {0.0, 0.0, 0.5});
    const MeanEstimate m = mean_value(s, WindowSchedule::dyadic());
    CHECK(m.converged);
    CHECK(m.scalar() == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("exact periodic mean: |sin| over period pi is 2/pi") {
    const TemporalSignal s =
        make_scalar_signal([](double t) { return std::abs(std::sin(t)); },
                           SignalClass::periodic, M_PI);
    // trapezoid over one period: the kink of |sin| limits accuracy to O(h^2)
    CHECK(mean_value_exact(s)(0, 0) == doctest::Approx(2.0 / M_PI).epsilon(1e-7));
}

TEST_CASE("tanh + 5 is rejected as converging at infinity") {
    const TemporalSignal s = make_scalar_signal(
        [](double t) { return std::tanh(t) + 5.0; }, SignalClass::converging_at_infinity);
    CHECK_THROWS_AS(mean_value_exact(s), MeanflowError);
}

TEST_CASE("constant trig polynomial") {
    const TemporalSignal s = make_trig_polynomial({0.0}, {7.0}, {0.0});
    CHECK(mean_value_exact(s)(0, 0) == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("exact mean of a generic signal is unsupported") {
    const TemporalSignal s = make_scalar_signal([](double t) { return std::sin(t); });
    CHECK_THROWS_AS(mean_value_exact(s), MeanflowError);
}

TEST_CASE("Besicovitch seminorm") {
    const WindowSchedule sched = WindowSchedule::dyadic();
    SUBCASE("sin has seminorm 1/sqrt(2)") {
        const TemporalSignal s = make_scalar_signal([](double t) { return std::sin(t); },
                                                    SignalClass::periodic, 2 * M_PI);
        CHECK(besicovitch_seminorm(s, sched).scalar() ==
              doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-8));
    }
    SUBCASE("zero signal") {
        const TemporalSignal s = make_scalar_signal([](double) { return 0.0; },
                                                    SignalClass::periodic, 1.0);
        CHECK(besicovitch_seminorm(s, sched).scalar() == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("constant c has seminorm |c|") {
        const TemporalSignal s = make_scalar_signal([](double) { return -2.5; },
                                                    SignalClass::periodic, 1.0);
        CHECK(besicovitch_seminorm(s, sched).scalar() == doctest::Approx(2.5).epsilon(1e-10));
    }
}

TEST_CASE("linearity of the mean") {
    const auto f = [](double t) { return std::sin(t) + 2.0; };
    const auto g = [](double t) { return std::cos(2.0 * t) - 1.0; };
    const TemporalSignal sf = make_scalar_signal(f, SignalClass::periodic, 2 * M_PI);
    const TemporalSignal sg = make_scalar_signal(g, SignalClass::periodic, 2 * M_PI);
    const TemporalSignal combo = make_scalar_signal(
        [f, g](double t) { return 3.0 * f(t) - 0.5 * g(t); }, SignalClass::periodic, 2 * M_PI);
    const WindowSchedule sched = WindowSchedule::dyadic();
    const double lhs = mean_value(combo, sched).scalar();
    const double rhs =
        3.0 * mean_value(sf, sched).scalar() - 0.5 * mean_value(sg, sched).scalar();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("translation invariance for a periodic signal") {
    const WindowSchedule sched = WindowSchedule::dyadic();
    const auto f = [](double t) { return std::sin(t) * std::sin(t) + std::cos(t); };
    const TemporalSignal a = make_scalar_signal(f, SignalClass::periodic, 2 * M_PI);
    const TemporalSignal b = make_scalar_signal([f](double t) { return f(t - 1.234); },
                                                SignalClass::periodic, 2 * M_PI);
    CHECK(mean_value(a, sched).scalar() ==
          doctest::Approx(mean_value(b, sched).scalar()).epsilon(1e-9));
}

TEST_CASE("periodic quadrature agrees with the exact path") {
    const auto f = [](double t) { return std::exp(std::sin(t)); };
    const TemporalSignal declared = make_scalar_signal(f, SignalClass::periodic, 2 * M_PI);
    const TemporalSignal generic = make_scalar_signal(f);
    const double exact = mean_value_exact(declared)(0, 0);
    const MeanEstimate est = mean_value(generic, WindowSchedule::dyadic(10.0, 10), 1e-6);
    CHECK(est.scalar() == doctest::Approx(exact).epsilon(1e-4));
}

TEST_CASE("dyadic coefficient: exact values and window averages") {
    CHECK(piecewise_dyadic_coefficient(1.5) == 1.0);
    CHECK(piecewise_dyadic_coefficient(3.0) == 2.0);
    CHECK(piecewise_dyadic_coefficient(-20.0) == 1.0);  // |x| in [16, 512)
    CHECK(piecewise_dyadic_coefficient(600.0) == 2.0);
    CHECK(piecewise_dyadic_average(2.0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(piecewise_dyadic_average(16.0) == doctest::Approx(31.0 / 16.0).epsilon(1e-15));
    CHECK(piecewise_dyadic_average(512.0) == doctest::Approx(527.0 / 512.0).epsilon(1e-15));
    // |avg(2^{(2n)^2}) - 2| <= 2^{1-4n} for n = 1, 2
    CHECK(std::abs(piecewise_dyadic_average(16.0) - 2.0) <= std::pow(2.0, -3));
    CHECK(std::abs(piecewise_dyadic_average(std::pow(2.0, 16)) - 2.0) <= std::pow(2.0, -7));
}

TEST_CASE("nonconvergence detector flags the dyadic coefficient") {
    const TemporalSignal sig = piecewise_dyadic_signal();
    WindowSchedule even;  // l_n = 2^{(2n)^2}, n <= 2
    even.lengths = {16.0, 65536.0};
    WindowSchedule odd;  // l_n = 2^{(2n-1)^2}, n <= 3
    odd.lengths = {2.0, 512.0, 33554432.0};
    const NonconvergenceReport rep = detect_nonconvergence(sig, {even, odd}, 0.5);
    CHECK(rep.flagged);
    CHECK(rep.estimates[0](0, 0) == doctest::Approx(2.0).epsilon(0.01));
    CHECK(rep.estimates[1](0, 0) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("nonconvergence detector stays quiet on convergent signals") {
    const TemporalSignal s = make_scalar_signal([](double t) { return std::sin(t); },
                                                SignalClass::periodic, 2 * M_PI);
    WindowSchedule a = WindowSchedule::dyadic(100.0, 2);
    WindowSchedule b = WindowSchedule::dyadic(150.0, 2);
    CHECK_FALSE(detect_nonconvergence(s, {a, b}, 0.05).flagged);

    const TemporalSignal c = make_scalar_signal([](double) { return 2.0; },
                                                SignalClass::periodic, 1.0);
    const NonconvergenceReport rep = detect_nonconvergence(c, {a, b}, 0.05);
    CHECK_FALSE(rep.flagged);
    CHECK(rep.estimates[0](0, 0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(rep.estimates[1](0, 0) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("window schedules must be increasing and positive") {
    WindowSchedule bad;
    bad.lengths = {4.0, 2.0};
    CHECK_THROWS_AS(bad.validate(), MeanflowError);
    WindowSchedule good = WindowSchedule::dyadic(10.0, 4);
    CHECK(good.lengths.size() == 4);
    CHECK(good.lengths[3] == doctest::Approx(80.0));
}
