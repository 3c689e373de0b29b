#include "meanflow/mean_value.hpp"

#include <algorithm>
#include <cmath>

namespace meanflow {

TemporalSignal make_scalar_signal(std::function<double(double)> f, SignalClass cls,
                                  double period) {
    TemporalSignal s;
    s.eval = [f = std::move(f)](double t) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = f(t);
        return m;
    };
    s.cls = cls;
    s.period = period;
    return s;
}

TemporalSignal make_trig_polynomial(std::vector<double> frequencies,
                                    std::vector<double> cos_coefficients,
                                    std::vector<double> sin_coefficients) {
    if (frequencies.size() != cos_coefficients.size() ||
        frequencies.size() != sin_coefficients.size())
        throw MeanflowError("trig polynomial: coefficient lists must match frequencies");
    TemporalSignal s;
    s.cls = SignalClass::trig_polynomial;
    s.frequencies = frequencies;
    for (size_t j = 0; j < frequencies.size(); ++j) {
        Eigen::MatrixXd c(1, 1), d(1, 1);
        c(0, 0) = cos_coefficients[j];
        d(0, 0) = sin_coefficients[j];
        s.cos_coefficients.push_back(c);
        s.sin_coefficients.push_back(d);
    }
    s.eval = [frequencies, cos_coefficients, sin_coefficients](double t) {
        double v = 0;
        for (size_t j = 0; j < frequencies.size(); ++j)
            v += cos_coefficients[j] * std::cos(frequencies[j] * t) +
                 sin_coefficients[j] * std::sin(frequencies[j] * t);
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = v;
        return m;
    };
    return s;
}

void WindowSchedule::validate() const {
    if (lengths.empty()) throw MeanflowError("window schedule is empty");
    double prev = 0;
    for (double l : lengths) {
        if (l <= prev) throw MeanflowError("window lengths must be strictly increasing and positive");
        prev = l;
    }
    if (quadrature_points_per_unit < 1)
        throw MeanflowError("quadrature_points_per_unit must be >= 1");
}

WindowSchedule WindowSchedule::dyadic(double l0, int windows, int points_per_unit) {
    WindowSchedule s;
    s.quadrature_points_per_unit = points_per_unit;
    double l = l0;
    for (int k = 0; k < windows; ++k, l *= 2) s.lengths.push_back(l);
    return s;
}

namespace {

Eigen::MatrixXd window_average(const TemporalSignal& sig, double l, int points_per_unit) {
    if (sig.exact_window_average) return sig.exact_window_average(l);
    // trapezoid on [-l, l]
    long m = std::max<long>(8, std::lround(2.0 * l * points_per_unit));
    double h = 2.0 * l / static_cast<double>(m);
    Eigen::MatrixXd acc = 0.5 * (sig.eval(-l) + sig.eval(l));
    for (long i = 1; i < m; ++i) acc += sig.eval(-l + h * static_cast<double>(i));
    return acc * (h / (2.0 * l));
}

Eigen::MatrixXd one_period_average(const TemporalSignal& sig, long points = 1 << 14) {
    double h = sig.period / static_cast<double>(points);
    Eigen::MatrixXd acc = sig.eval(0.0);
    for (long i = 1; i < points; ++i) acc += sig.eval(h * static_cast<double>(i));
    return acc / static_cast<double>(points);
}

} // namespace

Eigen::MatrixXd mean_value_exact(const TemporalSignal& signal) {
    switch (signal.cls) {
        case SignalClass::periodic: {
            if (signal.period <= 0) throw MeanflowError("periodic signal needs a positive period");
            return one_period_average(signal);
        }
        case SignalClass::converging_at_infinity: {
            // extrapolate towards infinity on a dyadic ladder; require that
            // both directions agree (the class demands a joint limit)
            double t = 32.0;
            Eigen::MatrixXd prev = 0.5 * (signal.eval(t) + signal.eval(-t));
            for (int k = 0; k < 24; ++k) {
                t *= 2.0;
                Eigen::MatrixXd p = signal.eval(t), m = signal.eval(-t);
                double split = (p - m).cwiseAbs().maxCoeff();
                Eigen::MatrixXd cur = 0.5 * (p + m);
                double step = (cur - prev).cwiseAbs().maxCoeff();
                if (step < 1e-11) {
                    if (split > 1e-7)
                        throw MeanflowError(
                            "signal does not converge at infinity: the two directions disagree");
                    return cur;
                }
                prev = cur;
            }
            throw MeanflowError("signal does not converge at infinity within the probe ladder");
        }
        case SignalClass::trig_polynomial: {
            Eigen::MatrixXd acc;
            bool found = false;
            for (size_t j = 0; j < signal.frequencies.size(); ++j) {
                if (signal.frequencies[j] == 0.0) {
                    if (!found) {
                        acc = signal.cos_coefficients[j];
                        found = true;
                    } else {
                        acc += signal.cos_coefficients[j];
                    }
                }
            }
            if (!found) {
                Eigen::MatrixXd probe = signal.eval(0.0);
                acc = Eigen::MatrixXd::Zero(probe.rows(), probe.cols());
            }
            return acc;
        }
        default:
            throw MeanflowError("mean_value_exact: unsupported class (generic)");
    }
}

MeanEstimate mean_value(const TemporalSignal& signal, const WindowSchedule& schedule,
                        double tol) {
    schedule.validate();
    if (tol <= 0) throw MeanflowError("mean_value: tol must be positive");
    MeanEstimate est;
    est.tolerance_used = tol;
    if (signal.cls != SignalClass::generic && !signal.exact_window_average) {
        est.value = mean_value_exact(signal);
        est.converged = true;
        est.trace.emplace_back(schedule.lengths.back(), est.value);
        return est;
    }
    for (double l : schedule.lengths)
        est.trace.emplace_back(l, window_average(signal, l, schedule.quadrature_points_per_unit));
    est.value = est.trace.back().second;
    if (est.trace.size() >= 2) {
        const auto& a = est.trace[est.trace.size() - 2].second;
        const auto& b = est.trace.back().second;
        est.converged = (a - b).cwiseAbs().maxCoeff() <= tol;
    }
    return est;
}

MeanEstimate besicovitch_seminorm(const TemporalSignal& signal, const WindowSchedule& schedule,
                                  double tol) {
    schedule.validate();
    TemporalSignal sq;
    sq.cls = signal.cls;
    sq.period = signal.period;
    sq.eval = [inner = signal.eval](double t) {
        Eigen::MatrixXd v = inner(t);
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = v.squaredNorm();
        return m;
    };
    MeanEstimate est;
    est.tolerance_used = tol;
    if (signal.cls == SignalClass::periodic) {
        est.value = one_period_average(sq);
        est.converged = true;
        est.trace.emplace_back(signal.period, est.value);
    } else {
        for (double l : schedule.lengths)
            est.trace.emplace_back(l, window_average(sq, l, schedule.quadrature_points_per_unit));
        est.value = est.trace.back().second;
        if (est.trace.size() >= 2)
            est.converged = (est.trace[est.trace.size() - 2].second - est.value)
                                .cwiseAbs()
                                .maxCoeff() <= tol;
    }
    est.value(0, 0) = std::sqrt(std::max(0.0, est.value(0, 0)));
    for (auto& [l, v] : est.trace) v(0, 0) = std::sqrt(std::max(0.0, v(0, 0)));
    est.value = est.trace.back().second;
    return est;
}

NonconvergenceReport detect_nonconvergence(const TemporalSignal& signal,
                                           const std::vector<WindowSchedule>& schedules,
                                           double gap_tol) {
    if (schedules.size() < 2)
        throw MeanflowError("detect_nonconvergence needs at least two schedules");
    NonconvergenceReport rep;
    for (const auto& s : schedules) {
        s.validate();
        rep.estimates.push_back(
            window_average(signal, s.lengths.back(), s.quadrature_points_per_unit));
    }
    for (size_t i = 0; i < rep.estimates.size(); ++i)
        for (size_t j = i + 1; j < rep.estimates.size(); ++j)
            rep.max_gap = std::max(
                rep.max_gap, (rep.estimates[i] - rep.estimates[j]).cwiseAbs().maxCoeff());
    rep.flagged = rep.max_gap > gap_tol;
    return rep;
}

double piecewise_dyadic_coefficient(double x) {
    double a = std::abs(x);
    for (int n = 0;; ++n) {
        double lo = std::exp2(static_cast<double>((2 * n) * (2 * n)));
        double hi = std::exp2(static_cast<double>((2 * n + 1) * (2 * n + 1)));
        if (a < lo) return 2.0;
        if (a < hi) return 1.0;
        double next = std::exp2(static_cast<double>((2 * n + 2) * (2 * n + 2)));
        if (a < next) return 2.0;
        if (lo > 1e300) return 2.0;  // unreachable for finite input
    }
}

double piecewise_dyadic_average(double l) {
    if (l <= 0) throw MeanflowError("piecewise_dyadic_average: l must be positive");
    // integral over [0,l]; breakpoints are exact powers of two in double
    double integral = 2.0 * l;  // start from the everywhere-2 baseline
    for (int n = 0;; ++n) {
        double lo = std::exp2(static_cast<double>((2 * n) * (2 * n)));
        if (lo >= l) break;
        double hi = std::exp2(static_cast<double>((2 * n + 1) * (2 * n + 1)));
        integral -= std::min(hi, l) - lo;  // those stretches carry 1, not 2
        if (hi >= l) break;
    }
    return integral / l;  // == (1/2l) * int_{-l}^{l} by symmetry
}

TemporalSignal piecewise_dyadic_signal() {
    TemporalSignal s = make_scalar_signal([](double t) { return piecewise_dyadic_coefficient(t); });
    s.exact_window_average = [](double l) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = piecewise_dyadic_average(l);
        return m;
    };
    return s;
}

} // namespace meanflow
