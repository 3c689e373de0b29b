#include "meanflow/torus_field.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "fft_lock.hpp"

namespace meanflow {

namespace detail {

// FFTW planning is not thread safe; execution on distinct buffers is.
std::mutex& fft_plan_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

namespace {

using detail::fft_plan_mutex;
auto plan_mutex = fft_plan_mutex;

void fft(int dim, int n, std::vector<std::complex<double>>& data, int sign) {
    std::vector<int> shape(static_cast<size_t>(dim), n);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        plan = fftw_plan_dft(dim, shape.data(), reinterpret_cast<fftw_complex*>(data.data()),
                             reinterpret_cast<fftw_complex*>(data.data()), sign,
                             FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
}

long ipow(long b, int e) {
    long r = 1;
    while (e-- > 0) r *= b;
    return r;
}

} // namespace

TorusField::TorusField(int dim, int modes) : dim_(dim), n_(modes) {
    if (dim < 1 || dim > 3) throw MeanflowError("TorusField: dimension must be 1, 2 or 3");
    if (modes < 2) throw MeanflowError("TorusField: need at least 2 modes per axis");
    coef_.assign(static_cast<size_t>(ipow(modes, dim)), {0.0, 0.0});
}

TorusField TorusField::from_nodal(int dim, int modes, const std::vector<double>& values) {
    TorusField f(dim, modes);
    if (static_cast<long>(values.size()) != f.size())
        throw MeanflowError("from_nodal: grid size mismatch");
    for (size_t i = 0; i < values.size(); ++i) f.coef_[i] = {values[i], 0.0};
    fft(dim, modes, f.coef_, FFTW_FORWARD);
    double scale = 1.0 / static_cast<double>(f.size());
    for (auto& c : f.coef_) c *= scale;
    return f;
}

TorusField TorusField::from_function(int dim, int modes,
                                     const std::function<double(const Vec&)>& fn) {
    long total = ipow(modes, dim);
    std::vector<double> vals(static_cast<size_t>(total));
    Vec y(dim);
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        for (int a = dim - 1; a >= 0; --a) {
            y[a] = static_cast<double>(rem % modes) / modes;
            rem /= modes;
        }
        vals[static_cast<size_t>(flat)] = fn(y);
    }
    return from_nodal(dim, modes, vals);
}

TorusField TorusField::constant(int dim, int modes, double value) {
    TorusField f(dim, modes);
    f.coef_[0] = {value, 0.0};
    return f;
}

std::vector<double> TorusField::to_nodal(int n_out) const {
    if (n_out == 0) n_out = n_;
    if (n_out < n_) throw MeanflowError("to_nodal: output grid under-resolves the cutoff");
    long total_out = ipow(n_out, dim_);
    std::vector<std::complex<double>> buf(static_cast<size_t>(total_out), {0.0, 0.0});
    // scatter modes into the (possibly larger) grid, preserving signed wavenumbers
    long total_in = size();
    for (long flat = 0; flat < total_in; ++flat) {
        long rem = flat, out_flat = 0;
        bool nyquist_clip = false;
        long stride = 1;
        // decode little-endian over reversed axes: treat row-major with last axis fastest
        std::array<long, 3> idx{0, 0, 0};
        for (int a = dim_ - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = rem % n_;
            rem /= n_;
        }
        (void)stride;
        for (int a = 0; a < dim_; ++a) {
            int k = signed_mode(idx[static_cast<size_t>(a)], n_);
            if (2 * std::abs(k) > n_out) { nyquist_clip = true; break; }
            long jo = k >= 0 ? k : k + n_out;
            out_flat = out_flat * n_out + jo;
        }
        if (!nyquist_clip) buf[static_cast<size_t>(out_flat)] = coef_[static_cast<size_t>(flat)];
    }
    fft(dim_, n_out, buf, FFTW_BACKWARD);
    std::vector<double> out(static_cast<size_t>(total_out));
    for (size_t i = 0; i < out.size(); ++i) out[i] = buf[i].real();
    return out;
}

std::complex<double> TorusField::coefficient(const std::array<int, 3>& k) const {
    long flat = 0;
    for (int a = 0; a < dim_; ++a) {
        int kk = k[static_cast<size_t>(a)];
        if (2 * std::abs(kk) > n_) return {0.0, 0.0};
        long j = kk >= 0 ? kk : kk + n_;
        flat = flat * n_ + j;
    }
    return coef_[static_cast<size_t>(flat)];
}

void TorusField::set_coefficient(const std::array<int, 3>& k, std::complex<double> v) {
    long flat = 0;
    for (int a = 0; a < dim_; ++a) {
        int kk = k[static_cast<size_t>(a)];
        if (2 * std::abs(kk) > n_) throw MeanflowError("set_coefficient: mode beyond cutoff");
        long j = kk >= 0 ? kk : kk + n_;
        flat = flat * n_ + j;
    }
    coef_[static_cast<size_t>(flat)] = v;
}

double TorusField::mean() const { return coef_[0].real(); }
void TorusField::set_mean(double m) { coef_[0] = {m, 0.0}; }

TorusField TorusField::derivative(int axis) const {
    if (axis < 0 || axis >= dim_) throw MeanflowError("derivative: axis out of range");
    TorusField out(dim_, n_);
    const double two_pi = 2.0 * std::numbers::pi;
    long total = size();
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        int k_axis = 0;
        for (int a = dim_ - 1; a >= 0; --a) {
            long j = rem % n_;
            rem /= n_;
            if (a == axis) k_axis = signed_mode(j, n_);
        }
        if (2 * std::abs(k_axis) == n_) k_axis = 0;  // drop the unmatched Nyquist mode
        out.coef_[static_cast<size_t>(flat)] =
            coef_[static_cast<size_t>(flat)] * std::complex<double>(0.0, two_pi * k_axis);
    }
    return out;
}

TorusField TorusField::laplacian() const {
    TorusField out(dim_, n_);
    const double two_pi = 2.0 * std::numbers::pi;
    long total = size();
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        double k2 = 0;
        for (int a = dim_ - 1; a >= 0; --a) {
            long j = rem % n_;
            rem /= n_;
            int k = signed_mode(j, n_);
            k2 += static_cast<double>(k) * k;
        }
        out.coef_[static_cast<size_t>(flat)] =
            coef_[static_cast<size_t>(flat)] * (-two_pi * two_pi * k2);
    }
    return out;
}

TorusField TorusField::operator+(const TorusField& o) const {
    TorusField out = *this;
    for (size_t i = 0; i < coef_.size(); ++i) out.coef_[i] += o.coef_[i];
    return out;
}

TorusField TorusField::operator-(const TorusField& o) const {
    TorusField out = *this;
    for (size_t i = 0; i < coef_.size(); ++i) out.coef_[i] -= o.coef_[i];
    return out;
}

TorusField TorusField::operator*(double s) const {
    TorusField out = *this;
    for (auto& c : out.coef_) c *= s;
    return out;
}

double TorusField::max_reality_violation() const {
    double worst = 0;
    long total = size();
    for (long flat = 0; flat < total; ++flat) {
        // mirror index
        long rem = flat, mirror = 0;
        for (int a = dim_ - 1; a >= 0; --a) {
            long j = rem % n_;
            rem /= n_;
            long jm = j == 0 ? 0 : n_ - j;
            mirror += jm * ipow(n_, dim_ - 1 - a);
        }
        std::complex<double> diff =
            coef_[static_cast<size_t>(mirror)] - std::conj(coef_[static_cast<size_t>(flat)]);
        worst = std::max(worst, std::abs(diff));
    }
    return worst;
}

double TorusField::spectral_norm() const {
    double s = 0;
    for (const auto& c : coef_) s += std::norm(c);
    return std::sqrt(s);
}

double TorusField::inner(const TorusField& a, const TorusField& b) {
    if (a.dim_ != b.dim_ || a.n_ != b.n_) throw MeanflowError("inner: shape mismatch");
    std::complex<double> s = 0;
    for (size_t i = 0; i < a.coef_.size(); ++i) s += a.coef_[i] * std::conj(b.coef_[i]);
    return s.real();
}

int dealias_grid(int n) {
    int p = 3 * n / 2 + 2;
    if (p % 2) ++p;
    return p;
}

TorusField TorusField::multiply(const TorusField& a, const TorusField& b) {
    if (a.dim_ != b.dim_ || a.n_ != b.n_) throw MeanflowError("multiply: shape mismatch");
    int p = dealias_grid(a.n_);
    std::vector<double> na = a.to_nodal(p), nb = b.to_nodal(p);
    for (size_t i = 0; i < na.size(); ++i) na[i] *= nb[i];
    TorusField wide = from_nodal(a.dim_, p, na);
    return truncate_to(wide, a.n_);
}

TorusField truncate_to(const TorusField& wide, int modes) {
    if (modes > wide.modes()) throw MeanflowError("truncate_to: target is larger than source");
    TorusField out(wide.dim(), modes);
    long total = out.size();
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        std::array<int, 3> k{0, 0, 0};
        for (int a2 = wide.dim() - 1; a2 >= 0; --a2) {
            k[static_cast<size_t>(a2)] = signed_mode(rem % modes, modes);
            rem /= modes;
        }
        out.at(flat) = wide.coefficient(k);
    }
    return out;
}

TorusField divergence(const VectorTorusField& v) {
    if (v.empty()) throw MeanflowError("divergence of empty field");
    TorusField out = v[0].derivative(0);
    for (size_t a = 1; a < v.size(); ++a) out = out + v[a].derivative(static_cast<int>(a));
    return out;
}

VectorTorusField curl(const VectorTorusField& v) {
    if (v.size() != 3) throw MeanflowError("curl requires a 3-component field");
    VectorTorusField out(3);
    out[0] = v[2].derivative(1) - v[1].derivative(2);
    out[1] = v[0].derivative(2) - v[2].derivative(0);
    out[2] = v[1].derivative(0) - v[0].derivative(1);
    return out;
}

HelmholtzPotential helmholtz_potential(const VectorTorusField& f, double tol) {
    if (f.size() != 3 || f[0].dim() != 3)
        throw MeanflowError("helmholtz_potential is defined for d = 3 only");
    const int n = f[0].modes();
    double scale = std::max({f[0].spectral_norm(), f[1].spectral_norm(), f[2].spectral_norm(),
                             1e-30});
    for (int a = 0; a < 3; ++a)
        if (std::abs(f[static_cast<size_t>(a)].mean()) > tol * std::max(1.0, scale))
            throw MeanflowError("helmholtz_potential: input field is not mean zero");
    if (divergence(f).spectral_norm() > 1e3 * tol * std::max(1.0, scale))
        throw MeanflowError("helmholtz_potential: input field is not solenoidal");

    const double two_pi = 2.0 * std::numbers::pi;
    HelmholtzPotential pot;
    pot.upsilon.assign(3, TorusField(3, n));
    long total = f[0].size();
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        std::array<int, 3> k{0, 0, 0};
        for (int a = 2; a >= 0; --a) {
            k[static_cast<size_t>(a)] = signed_mode(rem % n, n);
            rem /= n;
        }
        double k2 = static_cast<double>(k[0]) * k[0] + static_cast<double>(k[1]) * k[1] +
                    static_cast<double>(k[2]) * k[2];
        if (k2 == 0) continue;  // zero mode forced to 0
        std::complex<double> fx = f[0].at(flat), fy = f[1].at(flat), fz = f[2].at(flat);
        std::complex<double> i2pi(0.0, two_pi);
        // (i 2 pi k) x F / |2 pi k|^2
        double denom = two_pi * two_pi * k2;
        pot.upsilon[0].at(flat) = i2pi * (static_cast<double>(k[1]) * fz - static_cast<double>(k[2]) * fy) / denom;
        pot.upsilon[1].at(flat) = i2pi * (static_cast<double>(k[2]) * fx - static_cast<double>(k[0]) * fz) / denom;
        pot.upsilon[2].at(flat) = i2pi * (static_cast<double>(k[0]) * fy - static_cast<double>(k[1]) * fx) / denom;
    }
    VectorTorusField back = curl(pot.upsilon);
    double resid = 0;
    for (int a = 0; a < 3; ++a)
        resid += std::pow((back[static_cast<size_t>(a)] - f[static_cast<size_t>(a)]).spectral_norm(), 2);
    pot.curl_residual = std::sqrt(resid) / std::max(scale, 1e-30);
    pot.mean_residual = std::max({std::abs(pot.upsilon[0].mean()), std::abs(pot.upsilon[1].mean()),
                                  std::abs(pot.upsilon[2].mean())});
    return pot;
}

void export_nodal_csv(const TorusField& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MeanflowError("cannot open " + path + " for writing");
    out << f.dim();
    for (int a = 0; a < f.dim(); ++a) out << "," << f.modes();
    out << "\n";
    std::vector<double> vals = f.to_nodal();
    char buf[32];
    for (size_t i = 0; i < vals.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", vals[i]);
        out << buf << (i + 1 == vals.size() ? "\n" : ",");
    }
}

TorusField import_nodal_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeanflowError("cannot open " + path);
    std::string header;
    std::getline(in, header);
    std::stringstream hs(header);
    std::string tok;
    std::getline(hs, tok, ',');
    int dim = std::stoi(tok);
    int n = 0;
    while (std::getline(hs, tok, ',')) n = std::stoi(tok);
    std::vector<double> vals;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
    }
    return TorusField::from_nodal(dim, n, vals);
}

} // namespace meanflow
