#ifndef MEANFLOW_EFFECTIVE_TENSOR_HPP
#define MEANFLOW_EFFECTIVE_TENSOR_HPP

#include <functional>

#include "meanflow/cell_solver.hpp"
#include "meanflow/mean_value.hpp"

namespace meanflow {

/// Dispersion matrix at one (tau, X): raw assembly plus the sym/skew split.
struct BMatrix {
    double tau = 0;
    Vec X;
    Eigen::MatrixXd values;  ///< == sym + asym within assembly tolerance
    Eigen::MatrixXd sym;     ///< int D (grad w_j + e_j).(grad w_i + e_i)
    Eigen::MatrixXd asym;    ///< simplified skew form (cell equation tested by w_j)
};

/// Spectral quadrature of the four dispersion integrals from a converged
/// cell solution. Refuses assembly when residuals exceed tolerance.
BMatrix assemble_B(const CellSolution& cell, const CellProblemSpec& spec,
                   double residual_tol = 1e-6);

struct EffectiveTensor {
    Vec X;
    Eigen::MatrixXd D_eff;
    double sym_min_eig = 0;
    double jacobian_floor = 0;  ///< min over sampled tau of sigma_min(J)^2
    MeanEstimate average_trace; ///< provenance of the orbit average (trace entry = D entries flattened)
};

struct EffectiveOptions {
    WindowSchedule schedule = WindowSchedule::dyadic(10.0, 6, 8);
    SignalClass orbit_class = SignalClass::generic;  ///< declared tau-class of the orbit signal
    double period = 0;                               ///< for periodic orbit signals
    int modes = 32;
    double lambda = 1.0, Lambda = 1.0;
    double tol = 1e-9;
    int max_iter = 500;
    bool x_independent_coefficients = false;  ///< purely periodic: one cell solve reused
    double flow_tol = 1e-10;
};

/// D(X) = M_tau[ Jt B Jt^T ] along the orbit through X (Jt the
/// flow-representation of the backward-flow Jacobian).
EffectiveTensor effective_tensor(const MeanFlowField& field, const Vec& X,
                                 const std::function<Vec(const Vec&, const Vec&)>& b,
                                 const std::function<Eigen::MatrixXd(const Vec&, const Vec&)>& D,
                                 const EffectiveOptions& opts);

/// No-oscillation variant: D(X) = M_tau[ Jt Dt Jt^T ] without cell solves.
EffectiveTensor lagrangian_effective_tensor(
    const MeanFlowField& field, const std::function<Eigen::MatrixXd(const Vec&)>& D,
    const Vec& X, const EffectiveOptions& opts);

struct CoercivityCertificate {
    bool pass = false;
    double margin = 0;  ///< min eig of sym(D_eff) - lambda * jacobian_floor
};

/// pass iff min eig of sym(D_eff) >= lambda * jacobian_floor - tol.
CoercivityCertificate coercivity_certificate(const EffectiveTensor& t, double lambda,
                                             double tol = 1e-8);

} // namespace meanflow

#endif
