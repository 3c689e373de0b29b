#include <benchmark/benchmark.h>

#include <cmath>

#include "meanflow/cell_solver.hpp"
#include "meanflow/effective_tensor.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/torus_field.hpp"

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

void bm_torus_roundtrip(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const meanflow::TorusField f = meanflow::TorusField::from_function(
        2, n, [](const meanflow::Vec& y) {
            return std::sin(kTwoPi * y(0)) * std::cos(2 * kTwoPi * y(1));
        });
    for (auto _ : state) {
        std::vector<double> nodal = f.to_nodal();
        benchmark::DoNotOptimize(nodal.data());
    }
    state.SetComplexityN(n);
}
BENCHMARK(bm_torus_roundtrip)->Arg(32)->Arg(64)->Arg(128)->Complexity();

void bm_torus_derivative(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const meanflow::TorusField f = meanflow::TorusField::from_function(
        2, n, [](const meanflow::Vec& y) {
            return std::sin(kTwoPi * y(0)) + std::cos(kTwoPi * (y(0) + y(1)));
        });
    for (auto _ : state) {
        meanflow::TorusField d = f.derivative(0);
        benchmark::DoNotOptimize(d.spectral_norm());
    }
}
BENCHMARK(bm_torus_derivative)->Arg(32)->Arg(64)->Arg(128);

void bm_cell_solve(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const meanflow::CellProblemSpec spec = meanflow::make_cell_spec(
        2, n,
        [](const meanflow::Vec& y) {
            return meanflow::make_vec({1.0 + 0.5 * std::cos(kTwoPi * y(1)),
                                       0.5 + 0.5 * std::cos(kTwoPi * y(0))});
        },
        [](const meanflow::Vec&) { return Eigen::MatrixXd::Identity(2, 2); }, 1.0, 1.0);
    for (auto _ : state) {
        meanflow::CellSolution cell = meanflow::solve_cell(spec);
        benchmark::DoNotOptimize(cell.residual_norms(0));
    }
}
BENCHMARK(bm_cell_solve)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void bm_assemble_dispersion(benchmark::State& state) {
    const meanflow::CellProblemSpec spec = meanflow::make_cell_spec(
        2, 32,
        [](const meanflow::Vec& y) {
            return meanflow::make_vec({1.0 + 0.5 * std::cos(kTwoPi * y(1)),
                                       0.5 + 0.5 * std::cos(kTwoPi * y(0))});
        },
        [](const meanflow::Vec&) { return Eigen::MatrixXd::Identity(2, 2); }, 1.0, 1.0);
    const meanflow::CellSolution cell = meanflow::solve_cell(spec);
    for (auto _ : state) {
        meanflow::BMatrix b = meanflow::assemble_B(cell, spec);
        benchmark::DoNotOptimize(b.values(0, 0));
    }
}
BENCHMARK(bm_assemble_dispersion)->Unit(benchmark::kMillisecond);

void bm_flow_sample(benchmark::State& state) {
    Eigen::MatrixXd a(2, 2);
    a << 0, -1, 1, 0;
    const meanflow::MeanFlowField field =
        meanflow::linear_field(a, meanflow::make_vec({0.0, 0.0}));
    const meanflow::Vec x = meanflow::make_vec({1.0, 0.5});
    const double tau = static_cast<double>(state.range(0));
    for (auto _ : state) {
        meanflow::FlowSample s = meanflow::backward_flow_sample(field, x, tau);
        benchmark::DoNotOptimize(s.jacobian(0, 0));
    }
}
BENCHMARK(bm_flow_sample)->Arg(1)->Arg(10)->Arg(50)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
