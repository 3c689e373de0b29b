#include "meanflow/pde.hpp"

#include <fftw3.h>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "fft_lock.hpp"
#include "meanflow/cell_solver.hpp"
#include "meanflow/torus_field.hpp"

namespace meanflow {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

long ipow(long b, int e) {
    long r = 1;
    while (e-- > 0) r *= b;
    return r;
}

} // namespace

// ---------------------------------------------------------------- GridSpec

double GridSpec::min_dx() const {
    double m = dx(0);
    for (int a = 1; a < dim; ++a) m = std::min(m, dx(a));
    return m;
}

long GridSpec::cells() const { return ipow(n, dim); }

double GridSpec::cell_volume() const {
    double v = 1;
    for (int a = 0; a < dim; ++a) v *= dx(a);
    return v;
}

Vec GridSpec::node(long flat) const {
    Vec x(dim);
    long rem = flat;
    for (int a = dim - 1; a >= 0; --a) {
        long i = rem % n;
        rem /= n;
        x(a) = lo(a) + static_cast<double>(i) * dx(a);
    }
    return x;
}

void GridSpec::validate() const {
    if (dim < 1 || dim > 3) throw MeanflowError("GridSpec: dimension must be 1, 2 or 3");
    if (n < 4) throw MeanflowError("GridSpec: need at least 4 nodes per axis");
    if (lo.size() != dim || length.size() != dim)
        throw MeanflowError("GridSpec: lo/length size mismatch");
    for (int a = 0; a < dim; ++a)
        if (!(length(a) > 0)) throw MeanflowError("GridSpec: box lengths must be positive");
}

GridSpec GridSpec::centered(int dim, int n, double side) {
    GridSpec g;
    g.dim = dim;
    g.n = n;
    g.lo = Vec::Constant(dim, -side / 2);
    g.length = Vec::Constant(dim, side);
    return g;
}

// ------------------------------------------------------------ GridSolution

double GridSolution::frame_mass(size_t i) const {
    return frames[i].sum() * grid.cell_volume();
}

double GridSolution::frame_l2(size_t i) const {
    return std::sqrt(frames[i].squaredNorm() * grid.cell_volume());
}

const Eigen::VectorXd& GridSolution::frame_at(double t, double tol) const {
    for (size_t j = 0; j < times.size(); ++j)
        if (std::abs(times[j] - t) <= tol) return frames[j];
    std::ostringstream os;
    os << "GridSolution: no frame stored at t = " << t;
    throw MeanflowError(os.str());
}

void GridSolution::check_invariants(double tol) const {
    if (mass_trace.empty()) return;
    const double m0 = mass_trace.front();
    const double mscale = std::max(std::abs(m0), 1e-12);
    for (double m : mass_trace)
        if (std::abs(m - m0) > tol * mscale) {
            std::ostringstream os;
            os << "mass drift " << std::abs(m - m0) / mscale << " exceeds " << tol;
            throw MeanflowError(os.str());
        }
    for (size_t k = 1; k < l2_trace.size(); ++k)
        if (l2_trace[k] > l2_trace[k - 1] * (1 + tol)) {
            std::ostringstream os;
            os << "L2 norm grew at step " << k << ": " << l2_trace[k - 1] << " -> "
               << l2_trace[k];
            throw MeanflowError(os.str());
        }
}

// --------------------------------------------------------- spectral helper

namespace {

/// In-place c2c transforms on one persistent buffer (plans made once).
class SpectralGrid {
public:
    explicit SpectralGrid(const GridSpec& g) : g_(g), total_(g.cells()) {
        buf_.assign(static_cast<size_t>(total_), {0.0, 0.0});
        std::vector<int> shape(static_cast<size_t>(g.dim), g.n);
        std::lock_guard<std::mutex> lock(detail::fft_plan_mutex());
        auto* p = reinterpret_cast<fftw_complex*>(buf_.data());
        fwd_ = fftw_plan_dft(g.dim, shape.data(), p, p, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft(g.dim, shape.data(), p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~SpectralGrid() {
        std::lock_guard<std::mutex> lock(detail::fft_plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    SpectralGrid(const SpectralGrid&) = delete;
    SpectralGrid& operator=(const SpectralGrid&) = delete;

    void load(const Eigen::VectorXd& u) {
        for (long i = 0; i < total_; ++i) buf_[static_cast<size_t>(i)] = u(i);
    }
    void store(Eigen::VectorXd& u) const {
        for (long i = 0; i < total_; ++i) u(i) = buf_[static_cast<size_t>(i)].real();
    }
    void forward() { fftw_execute(fwd_); }
    void backward() {
        fftw_execute(bwd_);
        const double s = 1.0 / static_cast<double>(total_);
        for (auto& c : buf_) c *= s;
    }
    std::complex<double>& at(long i) { return buf_[static_cast<size_t>(i)]; }
    long total() const { return total_; }

    /// physical wavenumber vector 2 pi k / L of flat index i
    Vec kappa(long i) const {
        Vec k(g_.dim);
        long rem = i;
        for (int a = g_.dim - 1; a >= 0; --a) {
            const int m = signed_mode(rem % g_.n, g_.n);
            rem /= g_.n;
            k(a) = two_pi * m / g_.length(a);
        }
        return k;
    }

private:
    GridSpec g_;
    long total_;
    std::vector<std::complex<double>> buf_;
    fftw_plan fwd_, bwd_;
};

// ------------------------------------------------------------- convection

/// Skew-form convection -(1/2)[w . grad u + div(w u)] with 4th-order
/// central differences. The operator is antisymmetric, so the semidiscrete
/// L2 norm is conserved and SSP-RK3 makes it (slightly) dissipative.
struct Convection {
    GridSpec g;
    std::vector<Eigen::VectorXd> w;  ///< per-axis nodal velocity
    double max_speed = 0;

    // (D4 v)_i along axis a
    void d4(const Eigen::VectorXd& v, int a, Eigen::VectorXd& out) const {
        const long total = g.cells();
        long stride = 1;
        for (int b = a + 1; b < g.dim; ++b) stride *= g.n;
        const double inv = 1.0 / (12.0 * g.dx(a));
        const int n = g.n;
        for (long i = 0; i < total; ++i) {
            const long ia = (i / stride) % n;
            const long base = i - ia * stride;
            const long im2 = base + ((ia - 2 + n) % n) * stride;
            const long im1 = base + ((ia - 1 + n) % n) * stride;
            const long ip1 = base + ((ia + 1) % n) * stride;
            const long ip2 = base + ((ia + 2) % n) * stride;
            out(i) = (v(im2) - 8.0 * v(im1) + 8.0 * v(ip1) - v(ip2)) * inv;
        }
    }

    void apply(const Eigen::VectorXd& u, Eigen::VectorXd& out) const {
        const long total = g.cells();
        out.setZero(total);
        Eigen::VectorXd du(total), prod(total);
        for (int a = 0; a < g.dim; ++a) {
            d4(u, a, du);
            prod = w[static_cast<size_t>(a)].cwiseProduct(u);
            Eigen::VectorXd dprod(total);
            d4(prod, a, dprod);
            out.noalias() -= 0.5 * (w[static_cast<size_t>(a)].cwiseProduct(du) + dprod);
        }
    }

    void rk3_step(Eigen::VectorXd& u, double h) const {
        Eigen::VectorXd l(u.size()), u1(u.size()), u2(u.size());
        apply(u, l);
        u1 = u + h * l;
        apply(u1, l);
        u2 = 0.75 * u + 0.25 * (u1 + h * l);
        apply(u2, l);
        u = (1.0 / 3.0) * u + (2.0 / 3.0) * (u2 + h * l);
    }
};

// ------------------------------------------------------- cyclic tridiagonal

/// Thomas algorithm; sub(0) and sup(n-1) are ignored.
Eigen::VectorXd solve_tridiag(Eigen::VectorXd sub, Eigen::VectorXd diag, Eigen::VectorXd sup,
                              Eigen::VectorXd r) {
    const long n = diag.size();
    for (long i = 1; i < n; ++i) {
        const double m = sub(i) / diag(i - 1);
        diag(i) -= m * sup(i - 1);
        r(i) -= m * r(i - 1);
    }
    Eigen::VectorXd x(n);
    x(n - 1) = r(n - 1) / diag(n - 1);
    for (long i = n - 2; i >= 0; --i) x(i) = (r(i) - sup(i) * x(i + 1)) / diag(i);
    return x;
}

/// Periodic tridiagonal system via the Sherman-Morrison correction.
/// corner_top = M(0, n-1), corner_bot = M(n-1, 0).
Eigen::VectorXd solve_cyclic_tridiag(const Eigen::VectorXd& sub, const Eigen::VectorXd& diag,
                                     const Eigen::VectorXd& sup, double corner_top,
                                     double corner_bot, const Eigen::VectorXd& r) {
    const long n = diag.size();
    const double gamma = -diag(0);
    Eigen::VectorXd d = diag;
    d(0) -= gamma;
    d(n - 1) -= corner_top * corner_bot / gamma;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    u(0) = gamma;
    u(n - 1) = corner_bot;
    const Eigen::VectorXd y = solve_tridiag(sub, d, sup, r);
    const Eigen::VectorXd z = solve_tridiag(sub, d, sup, u);
    const double vy = y(0) + corner_top / gamma * y(n - 1);
    const double vz = z(0) + corner_top / gamma * z(n - 1);
    return y - z * (vy / (1.0 + vz));
}

// ---------------------------------------------------- diffusion steppers

/// Flux-form Crank-Nicolson step of du/dt = d/dx(a du/dx) on a periodic
/// 1D grid; face(i) holds the coefficient between nodes i and i+1.
void cn_step_1d(Eigen::VectorXd& u, const Eigen::VectorXd& face, double h, double dx) {
    const long n = u.size();
    const double r = h / (2.0 * dx * dx);
    // rhs = (I + h/2 A) u
    Eigen::VectorXd rhs(n);
    for (long i = 0; i < n; ++i) {
        const long im = (i - 1 + n) % n;
        const long ip = (i + 1) % n;
        const double au =
            face(i) * (u(ip) - u(i)) - face(im) * (u(i) - u(im));
        rhs(i) = u(i) + r * au;
    }
    Eigen::VectorXd sub(n), diag(n), sup(n);
    for (long i = 0; i < n; ++i) {
        const long im = (i - 1 + n) % n;
        diag(i) = 1.0 + r * (face(i) + face(im));
        sup(i) = -r * face(i);
        sub(i) = -r * face(im);
    }
    const double ct = -r * face(n - 1);
    u = solve_cyclic_tridiag(sub, diag, sup, ct, ct, rhs);
}

/// Central-product discretization of div(D grad u): A = sum_ab C_a D_ab C_b
/// with 2nd-order central C_a. Symmetric negative semidefinite for
/// pointwise-PSD symmetric D; column sums vanish, so CN conserves mass and
/// cannot grow the L2 norm.
Eigen::SparseMatrix<double> assemble_diffusion(const GridSpec& g,
                                               const std::vector<Eigen::VectorXd>& Dab) {
    const int d = g.dim;
    const long total = g.cells();
    std::vector<long> stride(static_cast<size_t>(d));
    {
        long s = 1;
        for (int a = d - 1; a >= 0; --a) {
            stride[static_cast<size_t>(a)] = s;
            s *= g.n;
        }
    }
    const int n = g.n;
    auto shifted = [&](long i, int a, int off) {
        const long s = stride[static_cast<size_t>(a)];
        const long ia = (i / s) % n;
        return i - ia * s + ((ia + off + 4 * n) % n) * s;
    };
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(total) * static_cast<size_t>(4 * d * d + 1));
    for (long i = 0; i < total; ++i)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                const double ca = 1.0 / (2.0 * g.dx(a));
                const double cb = 1.0 / (2.0 * g.dx(b));
                const Eigen::VectorXd& coef = Dab[static_cast<size_t>(a * d + b)];
                // (C_a D_ab C_b u)_i = ca [ D(i+e_a)(C_b u)(i+e_a) - D(i-e_a)(C_b u)(i-e_a) ]
                for (int sa : {+1, -1}) {
                    const long j = shifted(i, a, sa);
                    const double f = ca * sa * coef(j) * cb;
                    trips.emplace_back(static_cast<int>(i), static_cast<int>(shifted(j, b, +1)), f);
                    trips.emplace_back(static_cast<int>(i), static_cast<int>(shifted(j, b, -1)), -f);
                }
            }
    Eigen::SparseMatrix<double> A(static_cast<int>(total), static_cast<int>(total));
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

struct SparseCN {
    Eigen::SparseMatrix<double> A;
    Eigen::SparseMatrix<double> identity;
    std::map<double, std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>>> lu;

    explicit SparseCN(Eigen::SparseMatrix<double> a) : A(std::move(a)) {
        identity.resize(A.rows(), A.cols());
        identity.setIdentity();
    }

    void step(Eigen::VectorXd& u, double h) {
        auto it = lu.find(h);
        if (it == lu.end()) {
            auto solver = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
            Eigen::SparseMatrix<double> m = identity - (h / 2.0) * A;
            solver->compute(m);
            if (solver->info() != Eigen::Success)
                throw MeanflowError("diffusion step: sparse factorization failed");
            it = lu.emplace(h, std::move(solver)).first;
        }
        Eigen::VectorXd rhs = u + (h / 2.0) * (A * u);
        u = it->second->solve(rhs);
        if (it->second->info() != Eigen::Success)
            throw MeanflowError("diffusion step: sparse solve failed");
    }
};

// --------------------------------------------------------------- stepping

std::vector<double> normalize_saves(std::vector<double> s, double T) {
    if (s.empty()) s = {0.0, T};
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end(),
                        [&](double a, double b) { return std::abs(a - b) < 1e-12; }),
            s.end());
    for (double t : s)
        if (t < -1e-12 || t > T + 1e-12)
            throw MeanflowError("save time outside [0, T]");
    return s;
}

void time_march(double T, double dt, const std::vector<double>& saves,
                const std::function<void(double, double)>& step,
                const std::function<void(double)>& record_frame,
                const std::function<void(double)>& record_step) {
    const double eps_t = 1e-12 * std::max(1.0, T);
    size_t si = 0;
    record_step(0.0);
    if (si < saves.size() && saves[si] <= eps_t) {
        record_frame(0.0);
        ++si;
    }
    double t = 0;
    while (T - t > eps_t) {
        double target = T;
        if (si < saves.size()) target = std::min(target, saves[si]);
        double h = std::min(dt, target - t);
        if (h > (target - t) - eps_t) h = target - t;
        step(t, h);
        t += h;
        record_step(t);
        if (si < saves.size() && t >= saves[si] - eps_t) {
            record_frame(t);
            ++si;
        }
    }
}

double boundary_mass(const GridSpec& g, const Eigen::VectorXd& u) {
    double total = 0, band = 0;
    const long cells = g.cells();
    for (long i = 0; i < cells; ++i) {
        const Vec x = g.node(i);
        bool near = false;
        for (int a = 0; a < g.dim; ++a) {
            const double margin = std::max(2.0 * g.dx(a), 0.025 * g.length(a));
            const double rel = x(a) - g.lo(a);
            if (rel < margin || rel > g.length(a) - margin) near = true;
        }
        total += std::abs(u(i));
        if (near) band += std::abs(u(i));
    }
    return total > 0 ? band / total : 0.0;
}

Eigen::VectorXd sample_initial(const GridSpec& g, const std::function<double(const Vec&)>& f) {
    if (!f) throw MeanflowError("solver: no initial condition");
    const long total = g.cells();
    Eigen::VectorXd u(total);
    for (long i = 0; i < total; ++i) u(i) = f(g.node(i));
    return u;
}

} // namespace

// ---------------------------------------------------------------- solve_eps

GridSolution solve_eps(const EpsProblemSpec& spec) {
    spec.grid.validate();
    if (!(spec.T > 0)) throw MeanflowError("solve_eps: T must be positive");
    if (!(spec.epsilon > 0)) throw MeanflowError("solve_eps: epsilon must be positive");
    const GridSpec& g = spec.grid;
    const int d = g.dim;
    const long total = g.cells();

    // nodal velocity w = b(x, x/eps)/eps and diffusion tensor D(x, x/eps)
    Convection conv;
    conv.g = g;
    bool has_conv = false;
    if (spec.b) {
        conv.w.assign(static_cast<size_t>(d), Eigen::VectorXd::Zero(total));
        for (long i = 0; i < total; ++i) {
            const Vec x = g.node(i);
            const Vec bx = spec.b(x, x / spec.epsilon);
            double sp = bx.norm() / spec.epsilon;
            conv.max_speed = std::max(conv.max_speed, sp);
            for (int a = 0; a < d; ++a) conv.w[static_cast<size_t>(a)](i) = bx(a) / spec.epsilon;
        }
        has_conv = conv.max_speed > 1e-14;
    }

    if (!spec.D) throw MeanflowError("solve_eps: no diffusion tensor");
    std::vector<Eigen::VectorXd> Dab(static_cast<size_t>(d * d), Eigen::VectorXd::Zero(total));
    Eigen::MatrixXd D0 = spec.D(g.node(0), g.node(0) / spec.epsilon);
    bool constant_D = true;
    for (long i = 0; i < total; ++i) {
        const Vec x = g.node(i);
        const Eigen::MatrixXd Di = spec.D(x, x / spec.epsilon);
        if ((Di - Di.transpose()).norm() > 1e-10 * std::max(1.0, Di.norm()))
            throw MeanflowError("solve_eps: diffusion tensor must be symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Di);
        if (es.eigenvalues().minCoeff() <= 0)
            throw MeanflowError("solve_eps: diffusion tensor not coercive on the grid");
        if ((Di - D0).norm() > 1e-12 * std::max(1.0, D0.norm())) constant_D = false;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) Dab[static_cast<size_t>(a * d + b)](i) = Di(a, b);
    }

    double dt = spec.dt;
    if (dt <= 0) {
        if (has_conv)
            dt = spec.cfl * g.min_dx() / conv.max_speed;
        else
            dt = constant_D ? spec.T : g.min_dx();
    }
    if (has_conv && dt > spec.cfl * g.min_dx() / conv.max_speed * (1 + 1e-9))
        throw MeanflowError("solve_eps: dt violates the convection CFL bound");

    // diffusion stepper
    std::unique_ptr<SpectralGrid> sg;
    std::vector<double> qk;
    std::unique_ptr<SparseCN> cn;
    Eigen::VectorXd face1d;
    if (constant_D) {
        sg = std::make_unique<SpectralGrid>(g);
        qk.resize(static_cast<size_t>(total));
        const Eigen::MatrixXd Dsym = 0.5 * (D0 + D0.transpose());
        for (long i = 0; i < total; ++i) {
            const Vec k = sg->kappa(i);
            qk[static_cast<size_t>(i)] = k.dot(Dsym * k);
        }
    } else if (d == 1) {
        face1d.resize(total);
        for (long i = 0; i < total; ++i) {
            Vec xf(1);
            xf(0) = g.lo(0) + (i + 0.5) * g.dx(0);
            face1d(i) = spec.D(xf, xf / spec.epsilon)(0, 0);
        }
    } else {
        cn = std::make_unique<SparseCN>(assemble_diffusion(g, Dab));
    }

    Eigen::VectorXd u = sample_initial(g, spec.initial);

    GridSolution sol;
    sol.grid = g;
    sol.dt_used = dt;
    sol.boundary_mass_fraction = boundary_mass(g, u);
    const double vol = g.cell_volume();

    auto diffuse = [&](double h) {
        if (constant_D) {
            sg->load(u);
            sg->forward();
            for (long i = 0; i < total; ++i)
                sg->at(i) *= std::exp(-h * qk[static_cast<size_t>(i)]);
            sg->backward();
            sg->store(u);
        } else if (d == 1) {
            cn_step_1d(u, face1d, h, g.dx(0));
        } else {
            cn->step(u, h);
        }
    };
    auto step = [&](double, double h) {
        if (has_conv) {
            conv.rk3_step(u, h / 2);
            diffuse(h);
            conv.rk3_step(u, h / 2);
        } else {
            diffuse(h);
        }
    };
    auto record_step = [&](double t) {
        sol.step_times.push_back(t);
        sol.mass_trace.push_back(u.sum() * vol);
        sol.l2_trace.push_back(std::sqrt(u.squaredNorm() * vol));
    };
    auto record_frame = [&](double t) {
        sol.times.push_back(t);
        sol.frames.push_back(u);
    };

    time_march(spec.T, dt, normalize_saves(spec.save_times, spec.T), step, record_frame,
               record_step);
    return sol;
}

// --------------------------------------------------------- solve_homogenized

GridSolution solve_homogenized(const HomProblemSpec& spec) {
    spec.grid.validate();
    if (!(spec.T > 0)) throw MeanflowError("solve_homogenized: T must be positive");
    if (!spec.D_eff) throw MeanflowError("solve_homogenized: no effective tensor");
    const GridSpec& g = spec.grid;
    const int d = g.dim;
    const long total = g.cells();

    std::vector<Eigen::VectorXd> Dab(static_cast<size_t>(d * d), Eigen::VectorXd::Zero(total));
    Eigen::MatrixXd D0 = spec.D_eff(g.node(0));
    bool constant_D = true;
    for (long i = 0; i < total; ++i) {
        const Vec x = g.node(i);
        const Eigen::MatrixXd Di = spec.D_eff(x);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Di + Di.transpose()));
        if (es.eigenvalues().minCoeff() <= 0)
            throw MeanflowError("solve_homogenized: sym(D_eff) not positive definite");
        if ((Di - D0).norm() > 1e-12 * std::max(1.0, D0.norm())) constant_D = false;
        // only the symmetric part contributes in divergence form
        const Eigen::MatrixXd Ds = 0.5 * (Di + Di.transpose());
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) Dab[static_cast<size_t>(a * d + b)](i) = Ds(a, b);
    }

    Convection conv;
    conv.g = g;
    bool has_conv = false;
    Vec v0 = Vec::Zero(d);
    bool constant_v = true;
    if (spec.drift) {
        conv.w.assign(static_cast<size_t>(d), Eigen::VectorXd::Zero(total));
        v0 = spec.drift(g.node(0));
        for (long i = 0; i < total; ++i) {
            const Vec vi = spec.drift(g.node(i));
            if ((vi - v0).norm() > 1e-12 * std::max(1.0, v0.norm())) constant_v = false;
            conv.max_speed = std::max(conv.max_speed, vi.norm());
            for (int a = 0; a < d; ++a) conv.w[static_cast<size_t>(a)](i) = vi(a);
        }
        has_conv = conv.max_speed > 1e-14;
    }

    const bool spectral = !spec.force_fd && constant_D && (!has_conv || constant_v);

    double dt = spec.dt;
    if (dt <= 0) {
        if (spectral)
            dt = spec.T;
        else {
            dt = g.min_dx() / 2;
            if (has_conv) dt = std::min(dt, 0.25 * g.min_dx() / conv.max_speed);
        }
    }

    Eigen::VectorXd u = sample_initial(g, spec.initial);

    GridSolution sol;
    sol.grid = g;
    sol.dt_used = dt;
    sol.boundary_mass_fraction = boundary_mass(g, u);
    const double vol = g.cell_volume();

    std::unique_ptr<SpectralGrid> sg;
    std::vector<double> qk;
    std::vector<double> vk;  ///< kappa . drift
    std::unique_ptr<SparseCN> cn;
    Eigen::VectorXd face1d;
    if (spectral) {
        sg = std::make_unique<SpectralGrid>(g);
        qk.resize(static_cast<size_t>(total));
        vk.resize(static_cast<size_t>(total));
        const Eigen::MatrixXd Dsym = 0.5 * (D0 + D0.transpose());
        for (long i = 0; i < total; ++i) {
            const Vec k = sg->kappa(i);
            qk[static_cast<size_t>(i)] = k.dot(Dsym * k);
            vk[static_cast<size_t>(i)] = has_conv ? k.dot(v0) : 0.0;
        }
    } else if (d == 1) {
        face1d.resize(total);
        for (long i = 0; i < total; ++i) {
            Vec xf(1);
            xf(0) = g.lo(0) + (i + 0.5) * g.dx(0);
            face1d(i) = spec.D_eff(xf)(0, 0);
        }
    } else {
        cn = std::make_unique<SparseCN>(assemble_diffusion(g, Dab));
    }

    auto step = [&](double, double h) {
        if (spectral) {
            sg->load(u);
            sg->forward();
            for (long i = 0; i < total; ++i)
                sg->at(i) *= std::exp(std::complex<double>(-h * qk[static_cast<size_t>(i)],
                                                           -h * vk[static_cast<size_t>(i)]));
            sg->backward();
            sg->store(u);
        } else {
            if (has_conv) conv.rk3_step(u, h / 2);
            if (d == 1)
                cn_step_1d(u, face1d, h, g.dx(0));
            else
                cn->step(u, h);
            if (has_conv) conv.rk3_step(u, h / 2);
        }
    };
    auto record_step = [&](double t) {
        sol.step_times.push_back(t);
        sol.mass_trace.push_back(u.sum() * vol);
        sol.l2_trace.push_back(std::sqrt(u.squaredNorm() * vol));
    };
    auto record_frame = [&](double t) {
        sol.times.push_back(t);
        sol.frames.push_back(u);
    };

    time_march(spec.T, dt, normalize_saves(spec.save_times, spec.T), step, record_frame,
               record_step);
    return sol;
}

// ----------------------------------------------------------- shear oracle

double shear_multiplier_exponent(double xi1, double xi2, double t, double eps) {
    return -t * xi1 * xi1 - t * xi2 * xi2 + (t * t / eps) * xi1 * xi2 -
           (t * t * t / (3.0 * eps * eps)) * xi1 * xi1;
}

GridSolution shear_fourier_solution(const GridSpec& grid,
                                    const std::function<double(const Vec&)>& initial,
                                    const std::vector<double>& times, double eps) {
    grid.validate();
    if (grid.dim != 2) throw MeanflowError("shear_fourier_solution: dimension must be 2");
    const long total = grid.cells();
    SpectralGrid sg(grid);
    Eigen::VectorXd u0 = sample_initial(grid, initial);
    sg.load(u0);
    sg.forward();
    std::vector<std::complex<double>> hat0(static_cast<size_t>(total));
    for (long i = 0; i < total; ++i) hat0[static_cast<size_t>(i)] = sg.at(i);

    GridSolution sol;
    sol.grid = grid;
    const double vol = grid.cell_volume();
    Eigen::VectorXd u(total);
    for (double t : times) {
        for (long i = 0; i < total; ++i) {
            const Vec k = sg.kappa(i);
            sg.at(i) = hat0[static_cast<size_t>(i)] *
                       std::exp(shear_multiplier_exponent(k(0), k(1), t, eps));
        }
        sg.backward();
        sg.store(u);
        sol.times.push_back(t);
        sol.frames.push_back(u);
        sol.step_times.push_back(t);
        sol.mass_trace.push_back(u.sum() * vol);
        sol.l2_trace.push_back(std::sqrt(u.squaredNorm() * vol));
    }
    return sol;
}

// -------------------------------------------------------- lagrangian_remap

namespace {

void cubic_weights(double theta, double w[4]) {
    w[0] = -theta * (theta - 1.0) * (theta - 2.0) / 6.0;
    w[1] = (theta + 1.0) * (theta - 1.0) * (theta - 2.0) / 2.0;
    w[2] = -theta * (theta + 1.0) * (theta - 2.0) / 2.0;
    w[3] = theta * (theta + 1.0) * (theta - 1.0) / 6.0;
}

double interp_cubic(const GridSpec& g, const Eigen::VectorXd& u, const Vec& x) {
    const int d = g.dim;
    const int n = g.n;
    int base[3];
    double w[3][4];
    for (int a = 0; a < d; ++a) {
        double s = (x(a) - g.lo(a)) / g.dx(a);
        s -= std::floor(s / n) * n;  // periodic wrap into [0, n)
        const double fl = std::floor(s);
        base[a] = static_cast<int>(fl);
        cubic_weights(s - fl, w[a]);
    }
    long stride[3];
    {
        long st = 1;
        for (int a = d - 1; a >= 0; --a) {
            stride[a] = st;
            st *= n;
        }
    }
    double acc = 0;
    const int points = 1 << (2 * d);  // 4^d
    for (int c = 0; c < points; ++c) {
        long flat = 0;
        double weight = 1;
        int rem = c;
        for (int a = 0; a < d; ++a) {
            const int off = rem % 4;
            rem /= 4;
            const int idx = (base[a] + off - 1 + 2 * n) % n;
            flat += idx * stride[a];
            weight *= w[a][off];
        }
        acc += weight * u(flat);
    }
    return acc;
}

} // namespace

GridSolution lagrangian_remap(const GridSolution& sol, const MeanFlowField& field,
                              double epsilon) {
    const GridSpec& g = sol.grid;
    const long total = g.cells();
    const int d = g.dim;

    // pure translations admit an exact (or at least ODE-free) path
    bool translation = true;
    for (int p = 0; p < 3 && translation; ++p) {
        Vec probe = g.lo + g.length * (0.17 + 0.29 * p);
        if (field.velocity_gradient(probe).norm() > 1e-12) translation = false;
    }
    const Vec b_star = translation ? field.velocity(g.lo) : Vec::Zero(d);

    GridSolution out;
    out.grid = g;
    out.dt_used = sol.dt_used;
    out.boundary_mass_fraction = sol.boundary_mass_fraction;
    const double vol = g.cell_volume();

    for (size_t j = 0; j < sol.times.size(); ++j) {
        const double tau = sol.times[j] / epsilon;
        const Eigen::VectorXd& u = sol.frames[j];
        Eigen::VectorXd v(total);

        bool shifted = false;
        if (translation) {
            // v(X) = u(X + b* tau); use the exact circular shift when the
            // displacement is grid-commensurate
            std::array<long, 3> off{0, 0, 0};
            bool commensurate = true;
            for (int a = 0; a < d; ++a) {
                const double oa = b_star(a) * tau / g.dx(a);
                const double ra = std::round(oa);
                if (std::abs(oa - ra) > 1e-9 * std::max(1.0, std::abs(oa))) commensurate = false;
                off[static_cast<size_t>(a)] = static_cast<long>(ra);
            }
            if (commensurate) {
                long stride[3];
                long st = 1;
                for (int a = d - 1; a >= 0; --a) {
                    stride[a] = st;
                    st *= g.n;
                }
                for (long i = 0; i < total; ++i) {
                    long src = 0;
                    long rem = i;
                    for (int a = 0; a < d; ++a) {
                        const long ia = (rem / stride[a]) % g.n;
                        const long mod = ((ia + off[static_cast<size_t>(a)]) % g.n + g.n) % g.n;
                        src += mod * stride[a];
                    }
                    v(i) = u(src);
                }
                shifted = true;
            }
        }
        if (!shifted) {
            for (long i = 0; i < total; ++i) {
                const Vec X = g.node(i);
                Vec x;
                if (translation)
                    x = X + b_star * tau;
                else
                    x = tau == 0.0 ? X : integrate_flow(field, X, tau);
                v(i) = interp_cubic(g, u, x);
            }
        }

        out.times.push_back(sol.times[j]);
        out.frames.push_back(v);
        out.step_times.push_back(sol.times[j]);
        out.mass_trace.push_back(v.sum() * vol);
        out.l2_trace.push_back(std::sqrt(v.squaredNorm() * vol));
    }
    return out;
}

// ------------------------------------------- moving-coefficient 1D solver

GridSolution solve_moving_coefficient_1d(const GridSpec& grid,
                                         const std::function<double(double)>& a, double speed,
                                         const std::function<double(const Vec&)>& initial,
                                         double T, double dt,
                                         const std::vector<double>& save_times) {
    grid.validate();
    if (grid.dim != 1) throw MeanflowError("solve_moving_coefficient_1d: dimension must be 1");
    if (!(dt > 0)) throw MeanflowError("solve_moving_coefficient_1d: dt must be positive");
    const long n = grid.cells();
    const double dx = grid.dx(0);

    Eigen::VectorXd u = sample_initial(grid, initial);
    GridSolution sol;
    sol.grid = grid;
    sol.dt_used = dt;
    sol.boundary_mass_fraction = boundary_mass(grid, u);

    Eigen::VectorXd face(n);
    auto step = [&](double t, double h) {
        const double shift = speed * (t + h / 2);
        for (long i = 0; i < n; ++i)
            face(i) = a(grid.lo(0) + (i + 0.5) * dx + shift);
        cn_step_1d(u, face, h, dx);
    };
    auto record_step = [&](double t) {
        sol.step_times.push_back(t);
        sol.mass_trace.push_back(u.sum() * dx);
        sol.l2_trace.push_back(std::sqrt(u.squaredNorm() * dx));
    };
    auto record_frame = [&](double t) {
        sol.times.push_back(t);
        sol.frames.push_back(u);
    };
    time_march(T, dt, normalize_saves(save_times, T), step, record_frame, record_step);
    return sol;
}

// -------------------------------------------------------- perturbed model

PerturbedModelResult solve_perturbed_model(const PerturbedModelSpec& spec) {
    const int d = spec.dim;
    if (d < 1 || d > 3) throw MeanflowError("solve_perturbed_model: dimension must be 1, 2 or 3");
    if (!spec.h) throw MeanflowError("solve_perturbed_model: no leading fluid field");
    if (!spec.D) throw MeanflowError("solve_perturbed_model: no diffusion tensor");

    PerturbedModelResult out;

    // dispersion tensor from the constant-drift cell problem (J = I)
    CellProblemSpec cp = make_cell_spec(d, spec.modes, spec.h, spec.D, spec.lambda, spec.Lambda);
    out.h_star = cp.b_bar_local;
    CellSolution cell = solve_cell(cp, spec.cell_tol);
    out.D_eff = assemble_B(cell, cp, std::max(1e-6, 100 * spec.cell_tol)).values;

    // effective convective field: mean along the drift of the y-mean of h1
    if (!spec.h1) {
        Vec zero = Vec::Zero(d);
        out.h_field = [zero](const Vec&) { return zero; };
        out.h_field_constant = true;
        out.h_constant_value = zero;
    } else {
        const Vec h_star = out.h_star;
        auto y_mean = [&spec, d](const Vec& x) {
            Vec m(d);
            for (int c = 0; c < d; ++c)
                m(c) = TorusField::from_function(
                           d, spec.modes, [&](const Vec& y) { return spec.h1(x, y)(c); })
                           .mean();
            return m;
        };
        auto h1 = spec.h1;
        const SignalClass cls = spec.h1_class;
        const double period = spec.h1_period;
        const WindowSchedule schedule = spec.schedule;
        const int modes = spec.modes;
        out.h_field = [h1, h_star, cls, period, schedule, d, modes](const Vec& X) {
            TemporalSignal s;
            s.cls = cls;
            s.period = period;
            s.eval = [&h1, &h_star, &X, d, modes](double tau) {
                const Vec x = X + h_star * tau;
                Eigen::MatrixXd m(d, 1);
                for (int c = 0; c < d; ++c)
                    m(c, 0) = TorusField::from_function(
                                  d, modes, [&](const Vec& y) { return h1(x, y)(c); })
                                  .mean();
                return m;
            };
            MeanEstimate est = mean_value(s, schedule);
            if (!est.converged)
                throw MeanflowError("solve_perturbed_model: convective-field mean did not converge");
            return Vec(est.value.col(0));
        };

        // probe a few points to recognize a constant field
        std::vector<double> fracs = {0.23, 0.5, 0.87};
        Vec first;
        out.h_field_constant = true;
        for (size_t p = 0; p < fracs.size(); ++p) {
            Vec X(d);
            for (int a = 0; a < d; ++a)
                X(a) = spec.grid.dim == d ? spec.grid.lo(a) + fracs[p] * spec.grid.length(a)
                                          : fracs[p];
            const Vec val = out.h_field(X);
            if (p == 0)
                first = val;
            else if ((val - first).norm() > 1e-10 * std::max(1.0, first.norm()))
                out.h_field_constant = false;
        }
        if (out.h_field_constant) out.h_constant_value = first;
    }

    if (spec.T > 0) {
        HomProblemSpec hs;
        hs.grid = spec.grid;
        Eigen::MatrixXd D_eff = out.D_eff;
        hs.D_eff = [D_eff](const Vec&) { return D_eff; };
        if (out.h_field_constant) {
            Vec hc = out.h_constant_value;
            if (hc.norm() > 0) hs.drift = [hc](const Vec&) { return hc; };
        } else {
            hs.drift = out.h_field;
        }
        hs.initial = spec.initial;
        hs.T = spec.T;
        hs.dt = spec.dt;
        hs.save_times = spec.save_times;
        out.solution = solve_homogenized(hs);
    }
    return out;
}

// ------------------------------------------------------------------ norms

namespace {

void require_compatible(const GridSolution& a, const GridSolution& b) {
    if (a.grid.dim != b.grid.dim || a.grid.n != b.grid.n)
        throw MeanflowError("space-time norm: grids differ");
    if ((a.grid.lo - b.grid.lo).norm() > 1e-9 || (a.grid.length - b.grid.length).norm() > 1e-9)
        throw MeanflowError("space-time norm: boxes differ");
    if (a.times.size() != b.times.size())
        throw MeanflowError("space-time norm: frame counts differ");
    for (size_t j = 0; j < a.times.size(); ++j)
        if (std::abs(a.times[j] - b.times[j]) > 1e-9)
            throw MeanflowError("space-time norm: frame times differ");
}

double trapezoid_l2(const GridSolution& a, const GridSolution* b) {
    if (a.times.size() < 2) throw MeanflowError("space-time norm: need at least two frames");
    const double vol = a.grid.cell_volume();
    double acc = 0;
    for (size_t j = 0; j + 1 < a.times.size(); ++j) {
        const double w = a.times[j + 1] - a.times[j];
        const double f0 = b ? (a.frames[j] - b->frames[j]).squaredNorm()
                            : a.frames[j].squaredNorm();
        const double f1 = b ? (a.frames[j + 1] - b->frames[j + 1]).squaredNorm()
                            : a.frames[j + 1].squaredNorm();
        acc += 0.5 * w * (f0 + f1) * vol;
    }
    return std::sqrt(acc);
}

} // namespace

double l2_space_time_norm(const GridSolution& a) { return trapezoid_l2(a, nullptr); }

double l2_space_time_distance(const GridSolution& a, const GridSolution& b) {
    require_compatible(a, b);
    return trapezoid_l2(a, &b);
}

Eigen::VectorXd frame_derivative(const GridSolution& sol, size_t frame, int axis) {
    Convection c;
    c.g = sol.grid;
    Eigen::VectorXd out(sol.grid.cells());
    c.d4(sol.frames[frame], axis, out);
    return out;
}

double gradient_l2(const GridSolution& sol, int axis, double t0) {
    std::vector<size_t> keep;
    for (size_t j = 0; j < sol.times.size(); ++j)
        if (sol.times[j] >= t0 - 1e-12) keep.push_back(j);
    if (keep.size() < 2) throw MeanflowError("gradient_l2: need at least two frames past t0");
    const double vol = sol.grid.cell_volume();
    std::vector<double> g2(keep.size());
    for (size_t m = 0; m < keep.size(); ++m)
        g2[m] = frame_derivative(sol, keep[m], axis).squaredNorm() * vol;
    double acc = 0;
    for (size_t m = 0; m + 1 < keep.size(); ++m) {
        const double w = sol.times[keep[m + 1]] - sol.times[keep[m]];
        acc += 0.5 * w * (g2[m] + g2[m + 1]);
    }
    return std::sqrt(acc);
}

} // namespace meanflow
