#include <benchmark/benchmark.h>

#include <random>

#include "glhad/control.hpp"
#include "glhad/detect.hpp"
#include "glhad/grouplasso.hpp"
#include "glhad/model.hpp"
#include "glhad/simulate.hpp"
#include "glhad/structure.hpp"

namespace {

using namespace glhad;

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * uni(rng);
  return m;
}

/// A well-conditioned K=3 system comparable in size to the study system.
SystemModel bench_system() {
  std::mt19937_64 rng(42);
  const int K = 3, m = 3, n = 5;
  SystemModel sys;
  for (int k = 0; k <= K; ++k) {
    StageModel st;
    st.k = k;
    if (k > 0) {
      st.A = random_matrix(rng, m, m, 0.5);
      st.B = random_matrix(rng, m, m, 0.8);
      st.W = 0.1 * Matrix::Identity(m, m);
    }
    st.C = random_matrix(rng, n, m);
    st.V = 0.1 * Matrix::Identity(n, n);
    sys.stages.push_back(std::move(st));
  }
  sys.x0 = Vector::Ones(m);
  for (int k = 1; k <= K; ++k) sys.refs.push_back(random_matrix(rng, m, 1, 1.0).col(0));
  sys.U = sys.Z = sys.F = Matrix::Identity(m, m);
  sys.prior_cov = Matrix::Identity(m, m);
  return synthesize(std::move(sys));
}

void BM_BuildStructureClosedForm(benchmark::State& state) {
  const SystemModel sys = bench_system();
  for (auto _ : state) {
    StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
    benchmark::DoNotOptimize(sm.Rp);
  }
}
BENCHMARK(BM_BuildStructureClosedForm);

void BM_GroupLassoSolve(benchmark::State& state) {
  const SystemModel sys = bench_system();
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  const Simulator sim(sys);
  const RunRecord rec = sim.run(std::nullopt, 7);
  GroupProblem problem;
  problem.dictionary = sm.Rp;
  problem.response = (Matrix::Identity(sm.H.rows(), sm.H.rows()) - sm.proj) * rec.y;
  for (const auto& g : sm.groups) problem.groups.emplace_back(g.start, g.size);
  problem.lambda = 0.1 * lambda_max(problem);
  for (auto _ : state) {
    GroupSolution sol = solve(problem);
    benchmark::DoNotOptimize(sol.delta_hat);
  }
}
BENCHMARK(BM_GroupLassoSolve);

void BM_GlhadDetect(benchmark::State& state) {
  const SystemModel sys = bench_system();
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  const GlhadDetector detector(sys, sm, 0.01);
  const Simulator sim(sys);
  const RunRecord rec = sim.run(std::nullopt, 11);
  for (auto _ : state) {
    DetectionResult res = detector.detect(rec.y);
    benchmark::DoNotOptimize(res.t2);
  }
}
BENCHMARK(BM_GlhadDetect);

void BM_BenchmarkDetect(benchmark::State& state) {
  const SystemModel sys = bench_system();
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  const BenchmarkDetector detector(sys, sm.Sigma_eps, 0.01);
  const Simulator sim(sys);
  const RunRecord rec = sim.run(std::nullopt, 11);
  for (auto _ : state) {
    DetectionResult res = detector.detect(rec.y);
    benchmark::DoNotOptimize(res.t2);
  }
}
BENCHMARK(BM_BenchmarkDetect);

}  // namespace

BENCHMARK_MAIN();
