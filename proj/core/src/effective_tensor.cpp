#include "meanflow/effective_tensor.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

namespace meanflow {

namespace {

std::vector<TorusField> gradient_plus_e(const CellSolution& cell, int i, int d) {
    std::vector<TorusField> g;
    g.reserve(static_cast<size_t>(d));
    for (int a = 0; a < d; ++a) {
        TorusField ga = cell.omegas[static_cast<size_t>(i)].derivative(a);
        if (a == i) ga.set_mean(ga.mean() + 1.0);
        g.push_back(std::move(ga));
    }
    return g;
}

} // namespace

BMatrix assemble_B(const CellSolution& cell, const CellProblemSpec& spec,
                   double residual_tol) {
    const int d = spec.dim;
    for (int i = 0; i < d; ++i) {
        if (cell.residual_norms(i) > residual_tol) {
            std::ostringstream os;
            os << "assemble_B: corrector " << i << " residual " << cell.residual_norms(i)
               << " exceeds " << residual_tol;
            throw MeanflowError(os.str());
        }
    }

    std::vector<std::vector<TorusField>> g(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) g[static_cast<size_t>(i)] = gradient_plus_e(cell, i, d);

    BMatrix out;
    out.values = Eigen::MatrixXd::Zero(d, d);
    out.sym = Eigen::MatrixXd::Zero(d, d);
    out.asym = Eigen::MatrixXd::Zero(d, d);

    // sym_ij = int D (grad w_j + e_j) . (grad w_i + e_i)
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0;
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    s += TorusField::inner(
                        TorusField::multiply(spec.D_local[static_cast<size_t>(a * d + b)],
                                             g[static_cast<size_t>(j)][static_cast<size_t>(b)]),
                        g[static_cast<size_t>(i)][static_cast<size_t>(a)]);
            out.sym(i, j) = s;
        }

    // asym_ij = int w_j (b_bar - b) . e_i - int (D grad w_i) . (grad w_j + e_j)
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = -TorusField::inner(cell.omegas[static_cast<size_t>(j)],
                                          spec.b_local[static_cast<size_t>(i)]);
            // mean(w_j) = 0, so the b_bar term vanishes; keep it for safety
            s += spec.b_bar_local(i) * cell.omegas[static_cast<size_t>(j)].mean();
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    s -= TorusField::inner(
                        TorusField::multiply(
                            spec.D_local[static_cast<size_t>(a * d + b)],
                            cell.omegas[static_cast<size_t>(i)].derivative(b)),
                        g[static_cast<size_t>(j)][static_cast<size_t>(a)]);
            out.asym(i, j) = s;
        }

    // direct assembly: int D_ij + int D e_i . grad w_j + (b_bar_i - b_i, w_j)
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = spec.D_local[static_cast<size_t>(i * d + j)].mean();
            for (int b = 0; b < d; ++b)
                s += TorusField::inner(spec.D_local[static_cast<size_t>(i * d + b)],
                                       cell.omegas[static_cast<size_t>(j)].derivative(b));
            s += spec.b_bar_local(i) * cell.omegas[static_cast<size_t>(j)].mean();
            s -= TorusField::inner(cell.omegas[static_cast<size_t>(j)],
                                   spec.b_local[static_cast<size_t>(i)]);
            out.values(i, j) = s;
        }

    const double split_gap = (out.values - out.sym - out.asym).norm();
    const double scale = std::max(1.0, out.values.norm());
    if (split_gap > 1e-6 * scale) {
        std::ostringstream os;
        os << "assemble_B: split disagrees with direct assembly by " << split_gap;
        throw MeanflowError(os.str());
    }
    return out;
}

namespace {

struct FloorTracker {
    double min_sigma_sq = std::numeric_limits<double>::infinity();
    void record(const Mat& jac) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
        const double s = svd.singularValues().minCoeff();
        min_sigma_sq = std::min(min_sigma_sq, s * s);
    }
};

EffectiveTensor average_signal(const MeanFlowField& field, const Vec& X,
                               const std::function<Eigen::MatrixXd(double)>& local_tensor,
                               const EffectiveOptions& opts) {
    auto floor = std::make_shared<FloorTracker>();
    TemporalSignal signal;
    signal.cls = opts.orbit_class;
    signal.period = opts.period;
    signal.eval = [&field, X, local_tensor, floor, &opts](double tau) {
        const Vec x_tau = tau == 0.0 ? X : integrate_flow(field, X, tau, opts.flow_tol);
        const FlowSample s = backward_flow_sample(field, x_tau, tau, opts.flow_tol);
        floor->record(s.jacobian);
        const Eigen::MatrixXd local = local_tensor(tau);
        return Eigen::MatrixXd(s.jacobian * local * s.jacobian.transpose());
    };

    EffectiveTensor out;
    out.X = X;
    out.average_trace = mean_value(signal, opts.schedule, opts.tol);
    out.D_eff = out.average_trace.value;
    out.jacobian_floor = floor->min_sigma_sq;

    Eigen::MatrixXd sym = 0.5 * (out.D_eff + out.D_eff.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    out.sym_min_eig = es.eigenvalues().minCoeff();
    return out;
}

} // namespace

EffectiveTensor effective_tensor(const MeanFlowField& field, const Vec& X,
                                 const std::function<Vec(const Vec&, const Vec&)>& b,
                                 const std::function<Eigen::MatrixXd(const Vec&, const Vec&)>& D,
                                 const EffectiveOptions& opts) {
    const int d = field.dim;

    auto solve_at = [&](const Vec& x) {
        CellProblemSpec spec = make_cell_spec(
            d, opts.modes, [&](const Vec& y) { return b(x, y); },
            [&](const Vec& y) { return D(x, y); }, opts.lambda, opts.Lambda);
        CellSolution cell = solve_cell(spec, opts.tol, opts.max_iter);
        return assemble_B(cell, spec, std::max(1e-6, 100 * opts.tol)).values;
    };

    if (opts.x_independent_coefficients) {
        const Eigen::MatrixXd B0 = solve_at(X);
        return average_signal(field, X, [B0](double) { return B0; }, opts);
    }

    // cell solutions cached on the rounded orbit point
    auto cache = std::make_shared<std::map<std::vector<long long>, Eigen::MatrixXd>>();
    auto local = [&field, X, solve_at, cache, d, &opts](double tau) {
        const Vec x_tau = tau == 0.0 ? X : integrate_flow(field, X, tau, opts.flow_tol);
        std::vector<long long> key(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i)
            key[static_cast<size_t>(i)] = std::llround(x_tau(i) * 1e8);
        auto it = cache->find(key);
        if (it != cache->end()) return it->second;
        Eigen::MatrixXd B = solve_at(x_tau);
        cache->emplace(std::move(key), B);
        return B;
    };
    return average_signal(field, X, local, opts);
}

EffectiveTensor lagrangian_effective_tensor(
    const MeanFlowField& field, const std::function<Eigen::MatrixXd(const Vec&)>& D,
    const Vec& X, const EffectiveOptions& opts) {
    auto local = [&field, X, D, &opts](double tau) {
        const Vec x_tau = tau == 0.0 ? X : integrate_flow(field, X, tau, opts.flow_tol);
        return D(x_tau);
    };
    return average_signal(field, X, local, opts);
}

CoercivityCertificate coercivity_certificate(const EffectiveTensor& t, double lambda,
                                             double tol) {
    CoercivityCertificate c;
    c.margin = t.sym_min_eig - lambda * t.jacobian_floor;
    c.pass = c.margin >= -tol;
    return c;
}

} // namespace meanflow
