#ifndef MEANFLOW_TORUS_FIELD_HPP
#define MEANFLOW_TORUS_FIELD_HPP

#include <array>
#include <complex>
#include <functional>
#include <vector>

#include "meanflow/types.hpp"

namespace meanflow {

/// Scalar periodic field on the unit torus [0,1)^d stored as Fourier
/// coefficients on an n^d lattice (FFT frequency layout, modes
/// |k| <= n/2). Vector and matrix fields are arrays of these.
/// Immutable in spirit: all operations allocate fresh outputs.
class TorusField {
public:
    TorusField() = default;
    TorusField(int dim, int modes);  ///< zero field

    static TorusField from_nodal(int dim, int modes, const std::vector<double>& values);
    static TorusField from_function(int dim, int modes,
                                    const std::function<double(const Vec&)>& f);
    static TorusField constant(int dim, int modes, double value);

    int dim() const { return dim_; }
    int modes() const { return n_; }
    long size() const { return static_cast<long>(coef_.size()); }

    /// inverse transform to an n_out^d uniform grid (n_out >= n; 0 = n)
    std::vector<double> to_nodal(int n_out = 0) const;

    std::complex<double>& at(long flat) { return coef_[static_cast<size_t>(flat)]; }
    const std::complex<double>& at(long flat) const { return coef_[static_cast<size_t>(flat)]; }
    /// coefficient by signed wavenumber (unused axes must be 0)
    std::complex<double> coefficient(const std::array<int, 3>& k) const;
    void set_coefficient(const std::array<int, 3>& k, std::complex<double> v);

    double mean() const;                 ///< zero mode (real part)
    void set_mean(double m);
    TorusField derivative(int axis) const;  ///< spectral d/dy_axis (2 pi i k)
    TorusField laplacian() const;

    TorusField operator+(const TorusField& o) const;
    TorusField operator-(const TorusField& o) const;
    TorusField operator*(double s) const;

    double max_reality_violation() const;  ///< max |c(-k) - conj(c(k))|
    double spectral_norm() const;          ///< sqrt(sum |c_k|^2) = L2 norm on torus

    /// L2 inner product over the torus via Parseval
    static double inner(const TorusField& a, const TorusField& b);
    /// dealiased product (nodal on a 3/2-padded grid)
    static TorusField multiply(const TorusField& a, const TorusField& b);

private:
    int dim_ = 0;
    int n_ = 0;
    std::vector<std::complex<double>> coef_;

    friend class SpectralWorkspace;
};

using VectorTorusField = std::vector<TorusField>;  ///< d components
using MatrixTorusField = std::vector<TorusField>;  ///< d*d, row-major

TorusField divergence(const VectorTorusField& v);

/// restrict a field to a smaller mode lattice (spectral truncation)
TorusField truncate_to(const TorusField& wide, int modes);

/// signed wavenumber of flat index j on an n-point axis
inline int signed_mode(long j, int n) { return j <= n / 2 ? static_cast<int>(j) : static_cast<int>(j - n); }

/// padded grid size for dealiased quadratic products
int dealias_grid(int n);

struct HelmholtzPotential {
    VectorTorusField upsilon;  ///< d = 3 vector potential, zero mean
    double curl_residual = 0;  ///< relative spectral norm of curl(upsilon) - F
    double mean_residual = 0;
};

/// Vector potential of a mean-zero solenoidal field on T^3:
/// F = curl upsilon with zero-mean upsilon. Throws if F has nonzero mean
/// or divergence beyond tol.
HelmholtzPotential helmholtz_potential(const VectorTorusField& f, double tol = 1e-10);

VectorTorusField curl(const VectorTorusField& v);  ///< d = 3

// CSV import/export of nodal grids (header: axis sizes, then row-major values).
void export_nodal_csv(const TorusField& f, const std::string& path);
TorusField import_nodal_csv(const std::string& path);

} // namespace meanflow

#endif
