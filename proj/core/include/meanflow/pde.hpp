#ifndef MEANFLOW_PDE_HPP
#define MEANFLOW_PDE_HPP

#include <functional>
#include <vector>

#include "meanflow/effective_tensor.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/mean_value.hpp"
#include "meanflow/types.hpp"

namespace meanflow {

/// Uniform periodic box [lo, lo + length)^d with n nodes per axis.
struct GridSpec {
    int dim = 0;
    int n = 0;
    Vec lo;
    Vec length;

    double dx(int axis) const { return length(axis) / n; }
    double min_dx() const;
    long cells() const;
    double cell_volume() const;
    Vec node(long flat) const;
    void validate() const;

    static GridSpec centered(int dim, int n, double side);
};

/// Oscillatory-coefficient problem
///   du/dt + (1/eps) b(x, x/eps) . grad u - div(D(x, x/eps) grad u) = 0
/// on the periodic box (compact data far from the boundary stands in for
/// the whole space).
struct EpsProblemSpec {
    GridSpec grid;
    double epsilon = 1;
    std::function<Vec(const Vec&, const Vec&)> b;              ///< (x, y); empty = no drift
    std::function<Eigen::MatrixXd(const Vec&, const Vec&)> D;  ///< (x, y)
    std::function<double(const Vec&)> initial;
    double T = 0;
    double dt = 0;     ///< 0 = auto (cfl * eps * dx / sup|b|)
    double cfl = 0.25;
    std::vector<double> save_times;  ///< empty = {0, T}
};

/// Homogenized problem du/dt + drift . grad u - div(D_eff grad u) = 0.
struct HomProblemSpec {
    GridSpec grid;
    std::function<Eigen::MatrixXd(const Vec&)> D_eff;
    std::function<Vec(const Vec&)> drift;  ///< optional convective field
    std::function<double(const Vec&)> initial;
    double T = 0;
    double dt = 0;
    bool force_fd = false;  ///< skip the constant-coefficient spectral path
    std::vector<double> save_times;
};

struct GridSolution {
    GridSpec grid;
    std::vector<double> times;            ///< frame times
    std::vector<Eigen::VectorXd> frames;  ///< nodal values, row-major
    std::vector<double> step_times;       ///< after every accepted step
    std::vector<double> mass_trace;       ///< int u dx per step
    std::vector<double> l2_trace;         ///< L2 norm per step; non-increasing
    double dt_used = 0;
    double boundary_mass_fraction = 0;  ///< |initial| mass near the box boundary
    double coverage = 1.0;              ///< remap coverage (periodic wrap: 1)

    double frame_mass(size_t i) const;
    double frame_l2(size_t i) const;
    const Eigen::VectorXd& frame_at(double t, double tol = 1e-9) const;
    void check_invariants(double tol = 1e-10) const;  ///< mass + energy decay
};

GridSolution solve_eps(const EpsProblemSpec& spec);

GridSolution solve_homogenized(const HomProblemSpec& spec);

/// Closed-form exponent of the shear-flow Fourier multiplier:
/// -t xi1^2 - t xi2^2 + (t^2/eps) xi1 xi2 - (t^3/(3 eps^2)) xi1^2.
double shear_multiplier_exponent(double xi1, double xi2, double t, double eps);

/// Exact solution of the 2D shear problem (b = (x2, 0), D = I) in sheared
/// coordinates: frames are v(t, X) = u(t, X1 + (t/eps) X2, X2), which is
/// diagonal in Fourier with the multiplier above.
GridSolution shear_fourier_solution(const GridSpec& grid,
                                    const std::function<double(const Vec&)>& initial,
                                    const std::vector<double>& times, double eps);

/// v(t, X) = u(t, Phi_{t/eps}(X)) on the same grid. Constant drift with a
/// grid-commensurate shift is an exact circular shift; anything else goes
/// through periodic cubic interpolation.
GridSolution lagrangian_remap(const GridSolution& sol, const MeanFlowField& field,
                              double epsilon);

/// 1D heat equation dv/dt = d/dx( a(x + speed t) dv/dx ), Crank-Nicolson
/// with the coefficient frozen at mid-step (moving-slab coefficients).
GridSolution solve_moving_coefficient_1d(const GridSpec& grid,
                                         const std::function<double(double)>& a, double speed,
                                         const std::function<double(const Vec&)>& initial,
                                         double T, double dt,
                                         const std::vector<double>& save_times = {});

/// Two-scale model with an eps-order perturbation of the fluid field:
/// b(x, x/eps) = h(x/eps) + eps h1(x, x/eps).
struct PerturbedModelSpec {
    int dim = 0;
    int modes = 32;
    std::function<Vec(const Vec&)> h;               ///< y -> vector, mean h*
    std::function<Vec(const Vec&, const Vec&)> h1;  ///< (x, y); empty = 0
    SignalClass h1_class = SignalClass::generic;
    double h1_period = 0;
    std::function<Eigen::MatrixXd(const Vec&)> D;  ///< y -> matrix
    double lambda = 1, Lambda = 1;
    double cell_tol = 1e-9;
    WindowSchedule schedule = WindowSchedule::dyadic(10.0, 6, 8);

    GridSpec grid;  ///< macroscopic solve; skipped when T == 0
    std::function<double(const Vec&)> initial;
    double T = 0;
    double dt = 0;
    std::vector<double> save_times;
};

struct PerturbedModelResult {
    Vec h_star;                             ///< mean of h
    Eigen::MatrixXd D_eff;                  ///< constant-drift dispersion tensor
    std::function<Vec(const Vec&)> h_field; ///< effective convective field
    bool h_field_constant = false;
    Vec h_constant_value;
    GridSolution solution;  ///< empty frames when T == 0
};

PerturbedModelResult solve_perturbed_model(const PerturbedModelSpec& spec);

// Space-time norms over the stored frames (trapezoid in time). Both
// solutions must share the grid and frame times.
double l2_space_time_norm(const GridSolution& a);
double l2_space_time_distance(const GridSolution& a, const GridSolution& b);

/// d/dx_axis of one frame (4th-order central differences).
Eigen::VectorXd frame_derivative(const GridSolution& sol, size_t frame, int axis);

/// L2((t0,T) x box) norm of d/dx_axis of the solution.
double gradient_l2(const GridSolution& sol, int axis, double t0 = 0);

} // namespace meanflow

#endif
