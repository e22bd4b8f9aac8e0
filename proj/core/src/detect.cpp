#include "glhad/detect.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "glhad/grouplasso.hpp"

namespace glhad {

namespace {

constexpr double kRankTol = 1e-10;

/// Orthonormal basis (thin QR with column pivoting) of the column space of M,
/// truncated at the numerical rank.
Matrix orthonormal_basis(const Matrix& M) {
  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  qr.setThreshold(kRankTol);
  const int rank = static_cast<int>(qr.rank());
  return qr.householderQ() * Matrix::Identity(M.rows(), rank);
}

/// Retained eigendecomposition of a PSD covariance: pairs with eigenvalue
/// above 1e-10 * max, descending. Returns the whitener Lambda^{-1/2} E^T.
Matrix retained_whitener(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  const int N = static_cast<int>(cov.rows());
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  int keep = 0;
  for (int i = 0; i < N; ++i)
    if (es.eigenvalues()(i) > kRankTol * lmax) ++keep;
  if (keep == 0) throw GeometryError("residual covariance has no retained eigenvalues");
  Matrix wt(keep, N);
  for (int i = 0; i < keep; ++i)
    wt.row(i) = es.eigenvectors().col(N - 1 - i).transpose() /
                std::sqrt(es.eigenvalues()(N - 1 - i));
  return wt;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ModelError("alpha must lie in (0, 1)");
}

/// Fills alarmed_stages and localized from t2/ucl; argmax over alarmed
/// stages, exact ties resolved to the lowest index.
void apply_alarm_rule(DetectionResult& res) {
  res.alarmed_stages.clear();
  res.localized.reset();
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < res.t2.size(); ++k) {
    if (res.t2(k) > res.ucl(k)) {
      res.alarmed_stages.push_back(k);
      if (res.t2(k) > best) {
        best = res.t2(k);
        res.localized = k;
      }
    }
  }
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw NumericalError("gamma_p: domain error");
  if (x == 0.0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    // Series expansion of the lower incomplete gamma.
    double term = 1.0 / a, sum = term, ap = a;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Continued fraction for the upper tail (modified Lentz).
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - h * std::exp(-x + a * std::log(x) - lg);
}

double chi2_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw NumericalError("chi2_quantile: p must lie in (0, 1)");
  if (dof < 1) throw NumericalError("chi2_quantile: dof must be >= 1");
  const double a = 0.5 * dof;

  // Bracket, then bisection-safeguarded Newton on the CDF P(a, x/2).
  double lo = 0.0, hi = static_cast<double>(dof);
  while (gamma_p(a, 0.5 * hi) < p) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = gamma_p(a, 0.5 * x) - p;
    (f < 0.0 ? lo : hi) = x;
    const double logpdf = (a - 1.0) * std::log(0.5 * x) - 0.5 * x - std::lgamma(a);
    const double pdf = 0.5 * std::exp(logpdf);
    double next = x - f / pdf;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-12 * std::max(next, 1.0)) return next;
    x = next;
  }
  return x;
}

GlhadDetector::GlhadDetector(const SystemModel& system, const StructureMatrices& structures,
                             double alpha, LambdaPolicy lambda)
    : sm_(&structures), alpha_(alpha), lambda_(lambda) {
  check_alpha(alpha);
  if (structures.groups.empty() || structures.retained_dim() == 0)
    throw GeometryError("structure geometry not built");
  if (static_cast<int>(structures.groups.size()) != system.num_stages() + 1)
    throw ModelError("structure/system stage count mismatch");

  const int N = static_cast<int>(structures.H.rows());
  deflate_ = Matrix::Identity(N, N) - structures.proj;
  whitener_.resize(structures.retained_dim(), N);
  for (int i = 0; i < structures.retained_dim(); ++i)
    whitener_.row(i) =
        structures.eig_vectors.col(i).transpose() / std::sqrt(structures.eig_values(i));

  const int K1 = static_cast<int>(structures.groups.size());
  ucl_.resize(K1);
  for (int g = 0; g < K1; ++g) {
    const Matrix Wg =
        whitener_ * structures.Rp.middleCols(structures.groups[g].start, structures.groups[g].size);
    Matrix basis = orthonormal_basis(Wg);
    if (basis.cols() == 0)
      throw GeometryError("whitened signatures of stage " + std::to_string(g) + " vanish");
    dof_.push_back(static_cast<int>(basis.cols()));
    ucl_(g) = chi2_quantile(1.0 - alpha, dof_.back());
    bases_.push_back(std::move(basis));
  }
}

DetectionResult GlhadDetector::detect(const Vector& y) const {
  if (y.size() != deflate_.rows()) throw ModelError("measurement vector length mismatch");

  GroupProblem problem;
  problem.dictionary = sm_->Rp;
  problem.response = deflate_ * y;
  for (const auto& g : sm_->groups) problem.groups.emplace_back(g.start, g.size);
  problem.lambda = lambda_.kind == LambdaPolicy::Kind::Fixed
                       ? lambda_.value
                       : lambda_.value * lambda_max(problem);

  const GroupSolution sol = solve(problem);
  const Vector rhat = sm_->Rp * sol.delta_hat;
  const Vector z = whitener_ * rhat;

  DetectionResult res;
  res.method = Method::GLHAD;
  res.lambda = problem.lambda;
  res.delta_hat = sol.delta_hat;
  res.ucl = ucl_;
  res.dof = dof_;
  res.t2.resize(ucl_.size());
  for (std::size_t g = 0; g < bases_.size(); ++g)
    res.t2(static_cast<int>(g)) = (bases_[g].transpose() * z).squaredNorm();
  apply_alarm_rule(res);
  return res;
}

BenchmarkDetector::BenchmarkDetector(const SystemModel& system, const Matrix& sigma_eps,
                                     double alpha)
    : alpha_(alpha) {
  check_alpha(alpha);
  const int K = system.num_stages();
  const int N = system.total_sensors();
  if (sigma_eps.rows() != N || sigma_eps.cols() != N)
    throw ModelError("sigma_eps dimension mismatch");

  int M = 0;
  for (int k = 0; k <= K; ++k) M += system.stages[k].state_dim();
  Matrix Cb = Matrix::Zero(N, M);
  int col = 0;
  for (int k = 0; k <= K; ++k) {
    const auto& st = system.stages[k];
    Eigen::ColPivHouseholderQR<Matrix> qr(st.C);
    qr.setThreshold(kRankTol);
    if (static_cast<int>(qr.rank()) < st.state_dim())
      throw GeometryError("benchmark requires full column rank C at stage " + std::to_string(k));
    Cb.block(system.sensor_offset(k), col, st.sensor_dim(), st.state_dim()) = st.C;
    col += st.state_dim();
  }
  if (M >= N)
    throw GeometryError("block-diagonal C spans the measurement space; benchmark detector blind");

  const Matrix Q = orthonormal_basis(Cb);
  deflate_ = Matrix::Identity(N, N) - Q * Q.transpose();
  whitener_ = retained_whitener(deflate_ * sigma_eps * deflate_.transpose());

  ucl_.resize(K + 1);
  for (int g = 0; g <= K; ++g) {
    const Matrix Sg =
        deflate_.middleCols(system.sensor_offset(g), system.stages[g].sensor_dim());
    Matrix basis = orthonormal_basis(whitener_ * Sg);
    if (basis.cols() == 0)
      throw GeometryError("stage " + std::to_string(g) +
                          " leaves no signature in the benchmark residual");
    dof_.push_back(static_cast<int>(basis.cols()));
    ucl_(g) = chi2_quantile(1.0 - alpha, dof_.back());
    bases_.push_back(std::move(basis));
  }
}

DetectionResult BenchmarkDetector::detect(const Vector& y) const {
  if (y.size() != deflate_.rows()) throw ModelError("measurement vector length mismatch");
  const Vector z = whitener_ * (deflate_ * y);

  DetectionResult res;
  res.method = Method::BENCHMARK;
  res.ucl = ucl_;
  res.dof = dof_;
  res.t2.resize(ucl_.size());
  for (std::size_t g = 0; g < bases_.size(); ++g)
    res.t2(static_cast<int>(g)) = (bases_[g].transpose() * z).squaredNorm();
  apply_alarm_rule(res);
  return res;
}

DetectionResult glhad_detect(const StructureMatrices& structures, const SystemModel& system,
                             const Vector& y, double alpha, LambdaPolicy lambda) {
  return GlhadDetector(system, structures, alpha, lambda).detect(y);
}

DetectionResult benchmark_detect(const SystemModel& system, const Matrix& sigma_eps,
                                 const Vector& y, double alpha) {
  return BenchmarkDetector(system, sigma_eps, alpha).detect(y);
}

}  // namespace glhad
