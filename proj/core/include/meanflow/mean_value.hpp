#ifndef MEANFLOW_MEAN_VALUE_HPP
#define MEANFLOW_MEAN_VALUE_HPP

#include <functional>
#include <utility>
#include <vector>

#include "meanflow/types.hpp"

namespace meanflow {

enum class SignalClass { periodic, converging_at_infinity, trig_polynomial, generic };

/// Matrix-valued fast-time signal tau -> value. Scalars are 1x1. Means of
/// matrix signals are taken entrywise.
struct TemporalSignal {
    std::function<Eigen::MatrixXd(double)> eval;
    SignalClass cls = SignalClass::generic;
    double period = 0;  ///< for SignalClass::periodic

    /// trig polynomial: f(t) = sum_j cosc[j] cos(freq[j] t) + sinc[j] sin(freq[j] t)
    std::vector<double> frequencies;
    std::vector<Eigen::MatrixXd> cos_coefficients;
    std::vector<Eigen::MatrixXd> sin_coefficients;

    /// Optional exact window average (1/2l) int_{-l}^{l}; used instead of
    /// quadrature when present (piecewise coefficients with huge windows).
    std::function<Eigen::MatrixXd(double)> exact_window_average;
};

TemporalSignal make_scalar_signal(std::function<double(double)> f,
                                  SignalClass cls = SignalClass::generic, double period = 0);
TemporalSignal make_trig_polynomial(std::vector<double> frequencies,
                                    std::vector<double> cos_coefficients,
                                    std::vector<double> sin_coefficients);

struct WindowSchedule {
    std::vector<double> lengths;       ///< strictly increasing half-widths
    int quadrature_points_per_unit = 16;

    void validate() const;
    /// dyadic default: l_k = 2^k l0, k = 0..windows-1
    static WindowSchedule dyadic(double l0 = 10.0, int windows = 8,
                                 int points_per_unit = 16);
};

struct MeanEstimate {
    Eigen::MatrixXd value;
    bool converged = false;
    std::vector<std::pair<double, Eigen::MatrixXd>> trace;  ///< (l_k, window average)
    double tolerance_used = 0;

    double scalar() const { return value(0, 0); }
};

/// Cesaro mean M(f) = lim (1/2l) int_{-l}^{l} f. Declared non-generic
/// classes short-circuit to the exact path.
MeanEstimate mean_value(const TemporalSignal& signal, const WindowSchedule& schedule,
                        double tol = 1e-8);

/// Exact mean for a declared class; throws on generic signals or class
/// contract violations.
Eigen::MatrixXd mean_value_exact(const TemporalSignal& signal);

/// sqrt of the window-average estimate of |f|^2 (Frobenius for matrices).
MeanEstimate besicovitch_seminorm(const TemporalSignal& signal, const WindowSchedule& schedule,
                                  double tol = 1e-8);

struct NonconvergenceReport {
    std::vector<Eigen::MatrixXd> estimates;  ///< final window average per schedule
    bool flagged = false;
    double max_gap = 0;
};

NonconvergenceReport detect_nonconvergence(const TemporalSignal& signal,
                                           const std::vector<WindowSchedule>& schedules,
                                           double gap_tol);

/// The dyadic on/off coefficient: 1 if |x| in [2^{(2n)^2}, 2^{(2n+1)^2}),
/// else 2.
double piecewise_dyadic_coefficient(double x);

/// Exact (1/2l) int_{-l}^{l} of the dyadic coefficient; interval summation,
/// no quadrature.
double piecewise_dyadic_average(double l);

/// Signal for the dyadic coefficient shifted along the unit-drift flow,
/// with the exact window average attached.
TemporalSignal piecewise_dyadic_signal();

} // namespace meanflow

#endif
