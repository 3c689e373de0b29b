#ifndef MEANFLOW_SIGMA_HPP
#define MEANFLOW_SIGMA_HPP

#include <array>
#include <map>
#include <optional>
#include <string>

#include "meanflow/cell_solver.hpp"
#include "meanflow/pde.hpp"
#include "meanflow/scenario.hpp"

namespace meanflow {

/// Separable test function psi(t, X, tau, y) =
///   time_factor(t) * space_factor(X) * tau_factor(tau) * cos(2 pi y_mode . y).
/// An empty tau_factor means the constant 1.
struct TestFunction {
    std::string label;
    std::function<double(double)> time_factor;
    std::function<double(const Vec&)> space_factor;  ///< compactly supported in the box
    TemporalSignal tau_factor;
    std::array<int, 3> y_mode{0, 0, 0};

    bool has_tau() const { return static_cast<bool>(tau_factor.eval); }
    double psi(double t, const Vec& X, double tau, const Vec& y) const;
};

struct PairingResult {
    std::string label;
    double epsilon = 0;
    double value = 0;
    double predicted = 0;
    double gap = 0;  ///< |value - predicted|
};

/// Quadrature of  int_0^T int u(t,x) psi(t, Phi_{-t/eps}(x), t/eps, x/eps) dx dt
/// over the stored frames (trapezoid in time).
double sigma_pairing(const GridSolution& sol, const TestFunction& psi,
                     const MeanFlowField& field, double epsilon);

/// Same flow-mapped points shared across a whole battery.
std::vector<double> sigma_pairing_many(const GridSolution& sol,
                                       const std::vector<TestFunction>& psis,
                                       const MeanFlowField& field, double epsilon);

/// Mean of the tau factor (exact for declared classes; 1 when absent).
MeanEstimate tau_factor_mean(const TestFunction& psi,
                             const WindowSchedule& schedule = WindowSchedule::dyadic());

/// Right side of the pairing limit for a separable test function:
///   (int int u0 g h dX dt) * M(f) * (y-mean of the cosine factor).
double predicted_limit(const GridSolution& u0, const TestFunction& psi,
                       const MeanEstimate& tau_mean, const CellSolution* cell = nullptr);

struct DecayTable {
    std::vector<double> eps;
    std::vector<double> values;  ///< |integral| per eps
    double fitted_order = 0;     ///< log-log slope over the last three points
};

/// |int h(Phi_{-t/eps}(x)) cos+isin(2 pi n . x / eps) dx| per eps with the
/// fitted decay order. Rejects n = 0 and flows whose Jacobian bound grows.
DecayTable oscillatory_decay_check(const std::function<double(const Vec&)>& h,
                                   const MeanFlowField& field, const std::array<int, 3>& n_mode,
                                   const std::vector<double>& eps_list, const GridSpec& grid,
                                   double t = 1.0);

struct ConvergenceEntry {
    double eps = 0;
    std::map<std::string, double> errors;  ///< norm name -> error against u0
    double remapped_l2_final = 0;
    std::vector<PairingResult> pairings;
    std::string failure;  ///< non-empty if this eps point failed
};

struct ConvergenceReport {
    std::string scenario;
    std::vector<ConvergenceEntry> entries;
    double fitted_order = 0;  ///< least squares on the last three l2 errors
    bool errors_decreasing = false;
    Eigen::MatrixXd D_eff;  ///< empty for trivial/non-unique scenarios
    Scenario::Verdict verdict = Scenario::Verdict::homogenizes;
};

/// Sweep solve_eps / remap / solve_homogenized over eps and compare.
/// resolution_factor enforces dx <= eps/factor when the scenario carries a
/// microscopic oscillation; frames sets the number of stored time slices.
ConvergenceReport convergence_study(const Scenario& sc, std::vector<double> eps_list,
                                    const std::vector<std::string>& norms = {"l2", "final_l2"},
                                    int resolution_factor = 8, int frames = 11);

/// Battery of separable test functions adapted to the scenario box.
std::vector<TestFunction> default_battery(const Scenario& sc);

struct NonuniquenessBranch {
    double eps = 0;
    double window_average = 0;  ///< exact average of the dyadic coefficient at l = 1/eps
    double dist_to_coeff1 = 0;
    double dist_to_coeff2 = 0;
    int closer_to = 0;
    int predicted = 0;  ///< branch selected by the exact window average
};

struct NonuniquenessReport {
    std::vector<NonuniquenessBranch> branches;
    bool matches_prediction = false;
};

/// Solves the 1D dyadic-coefficient problem at eps = 2^-4 and 2^-9 and
/// reports which constant-coefficient heat solution each run is closer to.
NonuniquenessReport nonuniqueness_study(int n = 2048, double side = 40.0, double dt = 2.5e-4);

} // namespace meanflow

#endif
