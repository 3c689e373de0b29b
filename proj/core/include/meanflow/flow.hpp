#ifndef MEANFLOW_FLOW_HPP
#define MEANFLOW_FLOW_HPP

#include <functional>
#include <utility>
#include <vector>

#include "meanflow/types.hpp"

namespace meanflow {

/// Divergence-free mean field b(x) together with its analytic Jacobian.
/// Immutable after construction; safe to share across threads.
struct MeanFlowField {
    int dim = 0;
    std::function<Vec(const Vec&)> velocity;
    /// (grad)_{ij} = d b_i / d x_j
    std::function<Mat(const Vec&)> velocity_gradient;
    double divergence_tolerance = 1e-8;

    /// Checks |div b| at x and consistency of the analytic gradient with a
    /// central finite difference. Throws MeanflowError on violation.
    void validate_at(const Vec& x, double fd_step = 1e-5) const;
};

/// Thrown when adaptive step control underflows (stiff or blow-up
/// trajectory). Carries the last accepted state.
class FlowIntegrationError : public MeanflowError {
public:
    FlowIntegrationError(const std::string& what, double tau_reached, Vec last_state)
        : MeanflowError(what), tau_reached(tau_reached), last_state(std::move(last_state)) {}
    double tau_reached;
    Vec last_state;
};

struct FlowSample {
    double tau = 0;
    Vec x;
    Vec phi;       ///< Phi_{-tau}(x)
    Mat jacobian;  ///< J(tau, x), Jacobian of the backward flow
    double det_residual = 0;
};

/// Phi_tau(x): flow of dX/ds = b(X), X(0) = x, adaptive RK5(4).
Vec integrate_flow(const MeanFlowField& field, const Vec& x, double tau, double tol = 1e-10);

/// Backward-flow point and Jacobian J(tau,x) = dPhi_{-tau}/dx, obtained by
/// co-integrating the variational equation dM/ds = -grad_b(Phi_{-s}(x)) M.
FlowSample backward_flow_sample(const MeanFlowField& field, const Vec& x, double tau,
                                double tol = 1e-10);

Mat flow_jacobian(const MeanFlowField& field, const Vec& x, double tau, double tol = 1e-10);

/// f(Phi_tau(x)). Exact identity at tau == 0 (no integration performed).
template <typename F>
auto flow_representation(F&& f, const MeanFlowField& field, double tau, const Vec& x,
                         double tol = 1e-10) {
    if (tau == 0.0) return std::forward<F>(f)(x);
    return std::forward<F>(f)(integrate_flow(field, x, tau, tol));
}

/// | b(Phi_{-tau}(x)) - J(tau,x) b(x) |
double transport_identity_residual(const MeanFlowField& field, const Vec& x, double tau,
                                   double tol = 1e-10);

struct JacobianBound {
    double bound = 0;        ///< max operator norm over the sampled set
    bool growth_flag = false;
    /// running max of |J| over dyadic tau windows, (tau_window, max)
    std::vector<std::pair<double, double>> window_max;
};

/// Max operator norm of J(tau,x) over sampled (tau,x) in
/// [-tau_max,tau_max] x box. The growth flag is set when the running max
/// over dyadic tau windows keeps growing (>1% per doubling over the last
/// three doublings).
JacobianBound jacobian_bound_estimate(const MeanFlowField& field, const Vec& box_lo,
                                      const Vec& box_hi, double tau_max, int samples,
                                      double tol = 1e-8, unsigned seed = 12345);

enum class OrbitClass { bounded, escaping, undetermined };

/// Heuristic orbit classifier (samples only; not a proof).
OrbitClass classify_orbit(const MeanFlowField& field, const Vec& x, double tau_max,
                          double radius, double tol = 1e-8);

const char* to_string(OrbitClass c);

// Built-in analytic fields.
MeanFlowField constant_drift_field(const Vec& b_star);
MeanFlowField linear_field(const Mat& a, const Vec& b_star);  ///< b(x) = A x + b*
MeanFlowField shear_field();                                  ///< b(x1,x2) = (x2, 0)
/// b(x) = (speed, v_base + bump * sech^2(x1 / width)): constant drift with a
/// smooth localized transition region; divergence free and C^1, and the flow
/// Jacobian has a joint limit at infinity along every orbit.
MeanFlowField asymptotically_constant_field(double speed, double v_base, double bump,
                                            double width);

} // namespace meanflow

#endif
