#include "meanflow/cell_solver.hpp"

#include <cmath>
#include <numbers>

namespace meanflow {

namespace {

long ipow(long b, int e) {
    long r = 1;
    while (e-- > 0) r *= b;
    return r;
}

// Nodal coefficient tables on the dealiasing grid, shared by all matvecs.
struct OperatorTables {
    int dim, n, p;
    std::vector<std::vector<double>> b_nodal;  // d arrays of p^d
    std::vector<std::vector<double>> d_nodal;  // d*d arrays of p^d

    explicit OperatorTables(const CellProblemSpec& spec)
        : dim(spec.dim), n(spec.modes), p(dealias_grid(spec.modes)) {
        for (int a = 0; a < dim; ++a) b_nodal.push_back(spec.b_local[static_cast<size_t>(a)].to_nodal(p));
        for (int a = 0; a < dim * dim; ++a)
            d_nodal.push_back(spec.D_local[static_cast<size_t>(a)].to_nodal(p));
    }

    // A w = b . grad w - div(D grad w), spectral in/out, mean-free
    TorusField apply(const TorusField& omega) const {
        std::vector<std::vector<double>> grad_nodal;
        std::vector<TorusField> grads;
        for (int a = 0; a < dim; ++a) {
            grads.push_back(omega.derivative(a));
            grad_nodal.push_back(grads.back().to_nodal(p));
        }
        size_t total = grad_nodal[0].size();
        std::vector<double> conv(total, 0.0);
        for (int a = 0; a < dim; ++a)
            for (size_t i = 0; i < total; ++i)
                conv[i] += b_nodal[static_cast<size_t>(a)][i] * grad_nodal[static_cast<size_t>(a)][i];
        TorusField out = truncate_to(TorusField::from_nodal(dim, p, conv), n);
        for (int j = 0; j < dim; ++j) {
            std::vector<double> flux(total, 0.0);
            for (int a = 0; a < dim; ++a)
                for (size_t i = 0; i < total; ++i)
                    flux[i] += d_nodal[static_cast<size_t>(j * dim + a)][i] *
                               grad_nodal[static_cast<size_t>(a)][i];
            out = out - truncate_to(TorusField::from_nodal(dim, p, flux), n).derivative(j);
        }
        out.set_mean(0.0);
        return out;
    }
};

using Cvec = Eigen::VectorXcd;

Cvec to_vec(const TorusField& f) {
    Cvec v(f.size());
    for (long i = 0; i < f.size(); ++i) v[i] = f.at(i);
    return v;
}

TorusField to_field(const Cvec& v, int dim, int n) {
    TorusField f(dim, n);
    for (long i = 0; i < f.size(); ++i) f.at(i) = v[i];
    return f;
}

// Restarted GMRES with right preconditioning. Returns iterations used.
int gmres(const std::function<Cvec(const Cvec&)>& matvec,
          const std::function<Cvec(const Cvec&)>& precond, const Cvec& rhs, Cvec& x,
          double tol, int max_iter, int restart = 60) {
    const double bnorm = std::max(rhs.norm(), 1e-300);
    int total_iters = 0;
    x = Cvec::Zero(rhs.size());
    Cvec r = rhs;
    double rho = r.norm();
    while (rho / bnorm > tol && total_iters < max_iter) {
        int m = std::min(restart, max_iter - total_iters);
        std::vector<Cvec> v{r / rho}, z;
        Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(m + 1, m);
        Eigen::VectorXcd g = Eigen::VectorXcd::Zero(m + 1);
        g[0] = rho;
        std::vector<std::complex<double>> cs(static_cast<size_t>(m)), sn(static_cast<size_t>(m));
        int k = 0;
        for (; k < m; ++k) {
            z.push_back(precond(v[static_cast<size_t>(k)]));
            Cvec w = matvec(z.back());
            for (int i = 0; i <= k; ++i) {
                h(i, k) = v[static_cast<size_t>(i)].dot(w);
                w -= h(i, k) * v[static_cast<size_t>(i)];
            }
            h(k + 1, k) = w.norm();
            // apply accumulated Givens rotations
            for (int i = 0; i < k; ++i) {
                auto t = cs[static_cast<size_t>(i)] * h(i, k) + sn[static_cast<size_t>(i)] * h(i + 1, k);
                h(i + 1, k) = -std::conj(sn[static_cast<size_t>(i)]) * h(i, k) +
                              std::conj(cs[static_cast<size_t>(i)]) * h(i + 1, k);
                h(i, k) = t;
            }
            double denom = std::sqrt(std::norm(h(k, k)) + std::norm(h(k + 1, k)));
            if (denom < 1e-300) { ++k; break; }
            cs[static_cast<size_t>(k)] = std::conj(h(k, k)) / denom;
            sn[static_cast<size_t>(k)] = std::conj(h(k + 1, k)) / denom;
            h(k, k) = cs[static_cast<size_t>(k)] * h(k, k) + sn[static_cast<size_t>(k)] * h(k + 1, k);
            h(k + 1, k) = 0;
            g[k + 1] = -std::conj(sn[static_cast<size_t>(k)]) * g[k];
            g[k] = cs[static_cast<size_t>(k)] * g[k];
            ++total_iters;
            if (std::abs(g[k + 1]) / bnorm <= tol) { ++k; break; }
            if (std::abs(h(k + 1, k)) < 1e-300) { ++k; break; }
            v.push_back(Cvec(w / h(k + 1, k)));
        }
        // solve the triangular system and update
        Eigen::VectorXcd y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        for (int i = 0; i < k; ++i) x += y[i] * z[static_cast<size_t>(i)];
        r = rhs - matvec(x);
        rho = r.norm();
    }
    return total_iters;
}

} // namespace

void CellProblemSpec::validate(double tol) const {
    if (dim < 1 || dim > 3) throw MeanflowError("cell spec: bad dimension");
    if (static_cast<int>(b_local.size()) != dim || static_cast<int>(D_local.size()) != dim * dim)
        throw MeanflowError("cell spec: coefficient shape mismatch");
    double bscale = 0;
    for (const auto& c : b_local) bscale = std::max(bscale, c.spectral_norm());
    if (divergence(b_local).spectral_norm() > tol * std::max(1.0, bscale) * 10)
        throw MeanflowError("cell spec: b is not divergence free in y");
    for (int a = 0; a < dim; ++a)
        if (std::abs(b_local[static_cast<size_t>(a)].mean() - b_bar_local[a]) >
            tol * std::max(1.0, bscale) * 10)
            throw MeanflowError("cell spec: mean of b does not match b_bar");
    // nodal symmetry + ellipticity on the quadrature grid
    int p = dealias_grid(modes);
    std::vector<std::vector<double>> dn;
    for (int a = 0; a < dim * dim; ++a) dn.push_back(D_local[static_cast<size_t>(a)].to_nodal(p));
    long total = ipow(p, dim);
    for (long i = 0; i < total; ++i) {
        Eigen::MatrixXd m(dim, dim);
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c) m(r, c) = dn[static_cast<size_t>(r * dim + c)][static_cast<size_t>(i)];
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff()))
            throw MeanflowError("cell spec: D is not symmetric at a nodal point");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        if (es.eigenvalues().minCoeff() < lambda - 1e-8 ||
            es.eigenvalues().maxCoeff() > Lambda + 1e-8)
            throw MeanflowError("cell spec: nodal eigenvalues of D leave [lambda, Lambda]");
    }
}

CellProblemSpec make_cell_spec(int dim, int modes, const std::function<Vec(const Vec&)>& b,
                               const std::function<Eigen::MatrixXd(const Vec&)>& D,
                               double lambda, double Lambda) {
    CellProblemSpec spec;
    spec.dim = dim;
    spec.modes = modes;
    for (int a = 0; a < dim; ++a)
        spec.b_local.push_back(
            TorusField::from_function(dim, modes, [&, a](const Vec& y) { return b(y)[a]; }));
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
            spec.D_local.push_back(TorusField::from_function(
                dim, modes, [&, r, c](const Vec& y) { return D(y)(r, c); }));
    spec.b_bar_local.resize(dim);
    for (int a = 0; a < dim; ++a) spec.b_bar_local[a] = spec.b_local[static_cast<size_t>(a)].mean();
    spec.lambda = lambda;
    spec.Lambda = Lambda;
    return spec;
}

double compatibility_residual(const TorusField& g) { return std::abs(g.mean()); }

TorusField apply_cell_operator(const CellProblemSpec& spec, const TorusField& omega) {
    return OperatorTables(spec).apply(omega);
}

CellSolution solve_cell(const CellProblemSpec& spec, double tol, int max_iter) {
    const int d = spec.dim, n = spec.modes;
    OperatorTables tables(spec);

    // mean-diffusion Laplacian preconditioner with a small shift
    double dmean = 0;
    for (int a = 0; a < d; ++a) dmean += spec.D_local[static_cast<size_t>(a * d + a)].mean();
    dmean /= d;
    const double two_pi = 2.0 * std::numbers::pi;
    const double shift = 1e-3 * dmean * two_pi * two_pi;
    long total = ipow(n, d);
    Eigen::VectorXd pdiag(total);
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        double k2 = 0;
        for (int a = d - 1; a >= 0; --a) {
            int k = signed_mode(rem % n, n);
            rem /= n;
            k2 += static_cast<double>(k) * k;
        }
        pdiag[flat] = 1.0 / (dmean * two_pi * two_pi * k2 + shift);
    }

    auto matvec = [&](const Cvec& v) -> Cvec {
        Cvec out = to_vec(tables.apply(to_field(v, d, n)));
        out[0] = 0;
        return out;
    };
    auto precond = [&](const Cvec& v) -> Cvec {
        Cvec out = v.cwiseProduct(pdiag.cast<std::complex<double>>());
        out[0] = 0;
        return out;
    };

    CellSolution sol;
    sol.residual_norms.resize(d);
    sol.mean_residuals.resize(d);
    for (int i = 0; i < d; ++i) {
        // rhs_i = b_bar.e_i - b.e_i + div(D e_i)
        TorusField rhs = TorusField::constant(d, n, spec.b_bar_local[i]) -
                         spec.b_local[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j)
            rhs = rhs + spec.D_local[static_cast<size_t>(j * d + i)].derivative(j);
        double compat = compatibility_residual(rhs);
        double rscale = std::max(1.0, rhs.spectral_norm());
        if (compat > 100 * tol * rscale)
            throw MeanflowError("cell problem: Fredholm compatibility violated, |mean(rhs)| = " +
                                std::to_string(compat));
        Cvec rv = to_vec(rhs);
        rv[0] = 0;
        Cvec x;
        int iters = gmres(matvec, precond, rv, x, tol, max_iter);
        sol.iterations = std::max(sol.iterations, iters);
        Cvec resid = rv - matvec(x);
        if (resid.norm() > 10 * tol * std::max(1.0, rv.norm()))
            throw MeanflowError("cell solver did not converge within max_iter (residual " +
                                std::to_string(resid.norm()) + ")");
        TorusField omega = to_field(x, d, n);
        omega.set_mean(0.0);
        sol.omegas.push_back(omega);
        sol.residual_norms[i] = resid.norm();
        sol.mean_residuals[i] = std::abs(omega.mean());
    }
    return sol;
}

CellSolution solve_cell_flowrep(const MeanFlowField& field, double tau, const Vec& X,
                                const std::function<Vec(const Vec&, const Vec&)>& b,
                                const std::function<Eigen::MatrixXd(const Vec&, const Vec&)>& D,
                                int modes, double lambda, double Lambda, double tol,
                                int max_iter) {
    Vec x = integrate_flow(field, X, tau, std::min(tol, 1e-10));
    CellProblemSpec spec = make_cell_spec(
        field.dim, modes, [&](const Vec& y) { return b(x, y); },
        [&](const Vec& y) { return D(x, y); }, lambda, Lambda);
    return solve_cell(spec, tol, max_iter);
}

} // namespace meanflow
