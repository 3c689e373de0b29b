#include "meanflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace meanflow {

void MeanFlowField::validate_at(const Vec& x, double fd_step) const {
    const Vec bx = velocity(x);
    const Mat g = velocity_gradient(x);
    double div = g.trace();
    if (std::abs(div) > divergence_tolerance)
        throw MeanflowError("mean field is not divergence free at sampled point, |div b| = " +
                            std::to_string(std::abs(div)));
    // central difference check of the analytic gradient, O(h^2)
    for (int j = 0; j < dim; ++j) {
        Vec xp = x, xm = x;
        xp[j] += fd_step;
        xm[j] -= fd_step;
        Vec col = (velocity(xp) - velocity(xm)) / (2.0 * fd_step);
        double scale = std::max(1.0, bx.norm());
        if ((col - g.col(j)).norm() > 1e3 * fd_step * fd_step * scale + 1e-6 * scale)
            throw MeanflowError("analytic velocity gradient disagrees with finite difference");
    }
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

using State = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 12, 1>;  // x plus optional Jacobian

// Adaptive RK5(4) over s in [0, |tau|]; rhs already carries the sign.
template <typename Rhs>
State rk45(Rhs&& rhs, State y, double length, double tol, double* tau_reached, int state_dim) {
    double s = 0;
    double h = std::min(length, 0.1);
    const double atol = tol, rtol = tol;
    State k1 = rhs(y), k2, k3, k4, k5, k6, k7;
    while (s < length) {
        h = std::min(h, length - s);
        if (h < 1e-14 * std::max(1.0, length)) {
            if (tau_reached) *tau_reached = s;
            throw FlowIntegrationError("flow integration step size underflow", s,
                                       y.head(state_dim));
        }
        k2 = rhs(y + h * (a21 * k1));
        k3 = rhs(y + h * (a31 * k1 + a32 * k2));
        k4 = rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        k5 = rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        k6 = rhs(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        State y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        k7 = rhs(y5);
        State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double errnorm = 0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
            errnorm = std::max(errnorm, std::abs(err[i]) / sc);
        }
        if (errnorm <= 1.0) {
            s += h;
            y = y5;
            k1 = k7;  // FSAL
        }
        double fac = 0.9 * std::pow(std::max(errnorm, 1e-10), -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
    }
    if (tau_reached) *tau_reached = s;
    return y;
}

} // namespace

Vec integrate_flow(const MeanFlowField& field, const Vec& x, double tau, double tol) {
    if (tau == 0) return x;
    const int d = field.dim;
    const double sign = tau > 0 ? 1.0 : -1.0;
    auto rhs = [&](const State& y) -> State {
        State dy(d);
        dy.head(d) = sign * field.velocity(y.head(d));
        return dy;
    };
    State y0(d);
    y0.head(d) = x;
    State y = rk45(rhs, y0, std::abs(tau), tol, nullptr, d);
    return y.head(d);
}

FlowSample backward_flow_sample(const MeanFlowField& field, const Vec& x, double tau,
                                double tol) {
    const int d = field.dim;
    FlowSample out;
    out.tau = tau;
    out.x = x;
    if (tau == 0) {
        out.phi = x;
        out.jacobian = Mat::Identity(d, d);
        out.det_residual = 0;
        return out;
    }
    // Y(s) = Phi_{-s sign}(x), M(s) = dY/dx; run over s in [0,|tau|].
    const double sign = tau > 0 ? -1.0 : 1.0;  // backward flow direction
    auto rhs = [&](const State& y) -> State {
        State dy(d + d * d);
        Vec pos = y.head(d);
        dy.head(d) = sign * field.velocity(pos);
        Mat g = field.velocity_gradient(pos);
        Eigen::Map<const Eigen::MatrixXd> m(y.data() + d, d, d);
        Eigen::Map<Eigen::MatrixXd> dm(dy.data() + d, d, d);
        dm = sign * (g * m);
        return dy;
    };
    State y0(d + d * d);
    y0.head(d) = x;
    Eigen::Map<Eigen::MatrixXd>(y0.data() + d, d, d) = Eigen::MatrixXd::Identity(d, d);
    State y = rk45(rhs, y0, std::abs(tau), tol, nullptr, d);
    out.phi = y.head(d);
    out.jacobian = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
    out.det_residual = std::abs(out.jacobian.determinant() - 1.0);
    return out;
}

Mat flow_jacobian(const MeanFlowField& field, const Vec& x, double tau, double tol) {
    return backward_flow_sample(field, x, tau, tol).jacobian;
}

double transport_identity_residual(const MeanFlowField& field, const Vec& x, double tau,
                                   double tol) {
    FlowSample s = backward_flow_sample(field, x, tau, tol);
    return (field.velocity(s.phi) - s.jacobian * field.velocity(x)).norm();
}

JacobianBound jacobian_bound_estimate(const MeanFlowField& field, const Vec& box_lo,
                                      const Vec& box_hi, double tau_max, int samples,
                                      double tol, unsigned seed) {
    if (samples < 1) throw MeanflowError("jacobian_bound_estimate: samples must be >= 1");
    const int d = field.dim;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<Vec> points(static_cast<size_t>(samples));
    for (auto& p : points) {
        p.resize(d);
        for (int j = 0; j < d; ++j) p[j] = box_lo[j] + u01(rng) * (box_hi[j] - box_lo[j]);
    }

    JacobianBound out;
    // dyadic tau windows: tau_max / 2^k down to a floor, evaluated ascending
    std::vector<double> windows;
    for (double w = std::max(tau_max / 64.0, 1e-3); w <= tau_max * (1 + 1e-12); w *= 2)
        windows.push_back(w);
    if (windows.empty() || windows.back() < tau_max) windows.push_back(tau_max);

    double running = 0;
    for (double w : windows) {
        for (const auto& p : points) {
            for (double s : {-1.0, 1.0}) {
                Mat j = flow_jacobian(field, p, s * w, tol);
                running = std::max(running, j.operatorNorm());
            }
        }
        out.window_max.emplace_back(w, running);
    }
    out.bound = running;

    // plateau test: < 1% growth per doubling over the last 3 doublings
    const size_t n = out.window_max.size();
    if (n >= 4) {
        bool plateau = true;
        for (size_t k = n - 3; k < n; ++k) {
            double prev = out.window_max[k - 1].second;
            double cur = out.window_max[k].second;
            if (cur > prev * 1.01) plateau = false;
        }
        out.growth_flag = !plateau;
    } else {
        out.growth_flag = false;
    }
    return out;
}

OrbitClass classify_orbit(const MeanFlowField& field, const Vec& x, double tau_max,
                          double radius, double tol) {
    if (tau_max <= 0) throw MeanflowError("classify_orbit: tau_max must be positive");
    const int nsteps = 256;
    bool inside = true;
    bool escaping_both = true;
    for (double s : {-1.0, 1.0}) {
        std::vector<double> norms;
        Vec p = x;
        for (int k = 1; k <= nsteps; ++k) {
            double target = s * tau_max * k / nsteps;
            p = integrate_flow(field, x, target, tol);
            norms.push_back(p.norm());
            if (norms.back() > radius) inside = false;
        }
        // eventually monotone increasing past radius in this time direction?
        bool mono_past = false;
        for (size_t k0 = 0; k0 + 2 < norms.size(); ++k0) {
            bool mono = true;
            for (size_t k = k0 + 1; k < norms.size(); ++k)
                if (norms[k] <= norms[k - 1] - 1e-12) { mono = false; break; }
            if (mono && norms.back() > radius) { mono_past = true; break; }
        }
        if (!mono_past) escaping_both = false;
    }
    if (inside) return OrbitClass::bounded;
    if (escaping_both) return OrbitClass::escaping;
    return OrbitClass::undetermined;
}

const char* to_string(OrbitClass c) {
    switch (c) {
        case OrbitClass::bounded: return "bounded";
        case OrbitClass::escaping: return "escaping";
        default: return "undetermined";
    }
}

MeanFlowField constant_drift_field(const Vec& b_star) {
    MeanFlowField f;
    f.dim = static_cast<int>(b_star.size());
    Vec b = b_star;
    f.velocity = [b](const Vec&) { return b; };
    int d = f.dim;
    f.velocity_gradient = [d](const Vec&) { return Mat(Mat::Zero(d, d)); };
    return f;
}

MeanFlowField linear_field(const Mat& a, const Vec& b_star) {
    MeanFlowField f;
    f.dim = static_cast<int>(b_star.size());
    Mat am = a;
    Vec b = b_star;
    f.velocity = [am, b](const Vec& x) { return Vec(am * x + b); };
    f.velocity_gradient = [am](const Vec&) { return am; };
    return f;
}

MeanFlowField shear_field() {
    MeanFlowField f;
    f.dim = 2;
    f.velocity = [](const Vec& x) { return make_vec({x[1], 0.0}); };
    f.velocity_gradient = [](const Vec&) {
        Mat g = Mat::Zero(2, 2);
        g(0, 1) = 1.0;
        return g;
    };
    return f;
}

MeanFlowField asymptotically_constant_field(double speed, double v_base, double bump,
                                            double width) {
    MeanFlowField f;
    f.dim = 2;
    // localized perturbation in x1 only; b = (speed, profile(x1)) is divergence
    // free and equals the constant state (speed, v_base) outside the transition,
    // so the Jacobian along any orbit settles to the same matrix in both time
    // directions and its mean at infinity is well defined
    auto profile = [=](double x1) {
        const double c = std::cosh(x1 / width);
        return v_base + bump / (c * c);
    };
    auto dprofile = [=](double x1) {
        const double c = std::cosh(x1 / width), t = std::tanh(x1 / width);
        return -2.0 * bump * t / (width * c * c);
    };
    f.velocity = [=](const Vec& x) { return make_vec({speed, profile(x[0])}); };
    f.velocity_gradient = [=](const Vec& x) {
        Mat g = Mat::Zero(2, 2);
        g(1, 0) = dprofile(x[0]);
        return g;
    };
    return f;
}

} // namespace meanflow
