#pragma once

#include <optional>
#include <vector>

#include "glhad/model.hpp"
#include "glhad/structure.hpp"
#include "glhad/types.hpp"

namespace glhad {

enum class Method { GLHAD, BENCHMARK };

/// Rule for picking the group-lasso penalty on each detection problem.
/// Fixed uses `value` directly; FractionOfMax uses value * lambda_max(r),
/// where lambda_max is the smallest penalty zeroing every group.
struct LambdaPolicy {
  enum class Kind { Fixed, FractionOfMax };
  Kind kind = Kind::Fixed;
  double value = 0.0;

  static LambdaPolicy fixed(double v) { return {Kind::Fixed, v}; }
  static LambdaPolicy fraction_of_max(double f) { return {Kind::FractionOfMax, f}; }
};

struct DetectionResult {
  Method method = Method::GLHAD;
  Vector t2;                          // per stage 0..K
  Vector ucl;                         // per stage 0..K
  std::vector<int> dof;               // per stage 0..K
  std::vector<int> alarmed_stages;    // ascending
  std::optional<int> localized;       // argmax t2 over alarms, ties -> lowest
  std::optional<Vector> delta_hat;    // group-lasso coefficients (GLHAD only)
  double lambda = 0.0;                // penalty actually used (GLHAD only)

  bool alarmed() const { return !alarmed_stages.empty(); }
};

/// Inverse chi-square CDF; relative error < 1e-9.
double chi2_quantile(double p, int dof);

/// Regularized lower incomplete gamma P(a, x) (chi-square CDF building block).
double gamma_p(double a, double x);

/// GLHAD detector with cached whitener and per-stage whitened signature bases.
class GlhadDetector {
 public:
  GlhadDetector(const SystemModel& system, const StructureMatrices& structures, double alpha,
                LambdaPolicy lambda = {});

  DetectionResult detect(const Vector& y) const;

  const Vector& ucl() const { return ucl_; }
  const std::vector<int>& dof() const { return dof_; }

 private:
  const StructureMatrices* sm_;
  double alpha_;
  LambdaPolicy lambda_;
  Matrix deflate_;               // I - P_H
  Matrix whitener_;              // Lambda^{-1/2} E^T, d x N
  std::vector<Matrix> bases_;    // G_k: orthonormal basis of whitener * Rp_k
  std::vector<int> dof_;
  Vector ucl_;
};

/// Benchmark in-stage T^2 detector on the block-diagonal sensor model.
class BenchmarkDetector {
 public:
  BenchmarkDetector(const SystemModel& system, const Matrix& sigma_eps, double alpha);

  DetectionResult detect(const Vector& y) const;

  const Vector& ucl() const { return ucl_; }
  const std::vector<int>& dof() const { return dof_; }

 private:
  double alpha_;
  Matrix deflate_;               // I - P_C
  Matrix whitener_;
  std::vector<Matrix> bases_;
  std::vector<int> dof_;
  Vector ucl_;
};

DetectionResult glhad_detect(const StructureMatrices& structures, const SystemModel& system,
                             const Vector& y, double alpha, LambdaPolicy lambda = {});

DetectionResult benchmark_detect(const SystemModel& system, const Matrix& sigma_eps,
                                 const Vector& y, double alpha);

}  // namespace glhad
