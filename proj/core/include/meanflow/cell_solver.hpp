#ifndef MEANFLOW_CELL_SOLVER_HPP
#define MEANFLOW_CELL_SOLVER_HPP

#include <functional>

#include "meanflow/flow.hpp"
#include "meanflow/torus_field.hpp"
#include "meanflow/types.hpp"

namespace meanflow {

/// Coefficients of the cell problem
///   b(y).(grad w_i + e_i) - div(D(y)(grad w_i + e_i)) = b_bar . e_i  on T^d
/// at a frozen macroscopic point.
struct CellProblemSpec {
    int dim = 0;
    int modes = 0;                 ///< Fourier lattice size per axis
    VectorTorusField b_local;      ///< d components, y-divergence free
    MatrixTorusField D_local;      ///< d*d row-major, symmetric, coercive
    Vec b_bar_local;               ///< mean of b_local
    double lambda = 0, Lambda = 0; ///< declared ellipticity bounds

    /// invariant check: divergence, mean consistency, nodal symmetry and
    /// ellipticity. Throws MeanflowError on violation.
    void validate(double tol = 1e-8) const;
};

/// convenience constructors from callables y -> value
CellProblemSpec make_cell_spec(int dim, int modes,
                               const std::function<Vec(const Vec&)>& b,
                               const std::function<Eigen::MatrixXd(const Vec&)>& D,
                               double lambda, double Lambda);

struct CellSolution {
    std::vector<TorusField> omegas;   ///< d correctors, mean zero
    Eigen::VectorXd residual_norms;   ///< spectral residual per right-hand side
    Eigen::VectorXd mean_residuals;
    int iterations = 0;
};

/// |mean(g)| -- the Fredholm compatibility residual of a source term.
double compatibility_residual(const TorusField& g);

/// Preconditioned restarted GMRES on the mean-free Fourier subspace.
/// Products are dealiased on a 3/2-padded nodal grid.
CellSolution solve_cell(const CellProblemSpec& spec, double tol = 1e-9, int max_iter = 500);

/// Cell problem along the flow: coefficients frozen at x = Phi_tau(X).
CellSolution solve_cell_flowrep(const MeanFlowField& field, double tau, const Vec& X,
                                const std::function<Vec(const Vec&, const Vec&)>& b,
                                const std::function<Eigen::MatrixXd(const Vec&, const Vec&)>& D,
                                int modes, double lambda, double Lambda, double tol = 1e-9,
                                int max_iter = 500);

/// Apply the cell operator b.grad w - div(D grad w) to a mean-free field
/// (used by residual checks and tests).
TorusField apply_cell_operator(const CellProblemSpec& spec, const TorusField& omega);

} // namespace meanflow

#endif
