#include "glhad/grouplasso.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace glhad {

namespace {

double group_weight(int size) { return std::sqrt(static_cast<double>(size)); }

void check_problem(const GroupProblem& p) {
  if (p.dictionary.rows() != p.response.size())
    throw ModelError("group lasso: dictionary rows != response length");
  if (p.lambda < 0.0) throw ModelError("group lasso: lambda must be nonnegative");
  if (p.groups.empty()) throw ModelError("group lasso: no groups");
  int covered = 0;
  for (const auto& [start, len] : p.groups) {
    if (len <= 0 || start != covered)
      throw ModelError("group lasso: groups must be contiguous and nonempty");
    covered += len;
  }
  if (covered != p.dictionary.cols())
    throw ModelError("group lasso: groups do not cover the dictionary columns");
}

/// Minimizes b^T G b - 2 z^T b + lambda w ||b|| for one group. For non-identity
/// Gram matrices the stationarity condition b = (G + lambda w / (2 t) I)^{-1} z
/// with t = ||b|| is solved by bisection on t.
Vector group_minimizer(const Matrix& G, const Vector& z, double lw) {
  const double zn = z.norm();
  // The epsilon guard keeps lambda == lambda_max shrinking exactly to zero
  // despite rounding in the threshold comparison.
  if (2.0 * zn * (1.0 - 1e-14) <= lw) return Vector::Zero(z.size());
  if (lw == 0.0) return G.ldlt().solve(z);

  const Matrix I = Matrix::Identity(G.rows(), G.cols());
  if ((G - I).lpNorm<Eigen::Infinity>() < 1e-12)
    return (1.0 - lw / (2.0 * zn)) * z;

  auto norm_at = [&](double t) {
    return ((G + (lw / (2.0 * t)) * I).ldlt().solve(z)).norm();
  };
  // phi(t) = ||b(t)|| - t is positive for small t and negative for large t.
  double lo = 1e-300, hi = std::max(zn, 1.0);
  while (norm_at(hi) > hi) hi *= 2.0;
  for (int it = 0; it < 200 && (hi - lo) > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (norm_at(mid) > mid ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  return (G + (lw / (2.0 * t)) * I).ldlt().solve(z);
}

}  // namespace

double objective_value(const GroupProblem& p, const Vector& delta) {
  double penalty = 0.0;
  for (const auto& [start, len] : p.groups) {
    const double n = delta.segment(start, len).norm();
    penalty += group_weight(len) * (p.squared_penalty ? n * n : n);
  }
  return (p.dictionary * delta - p.response).squaredNorm() + p.lambda * penalty;
}

GroupSolution solve(const GroupProblem& p, const SolveOptions& opt) {
  check_problem(p);
  const int D = static_cast<int>(p.dictionary.cols());

  // Cached per-group Gram blocks and cross products.
  std::vector<Matrix> gram;
  gram.reserve(p.groups.size());
  for (const auto& [start, len] : p.groups) {
    const Matrix Dg = p.dictionary.middleCols(start, len);
    gram.push_back(Dg.transpose() * Dg);
  }

  GroupSolution sol;
  sol.delta_hat = Vector::Zero(D);

  // Unpenalized problems have the exact (minimum-norm) least-squares
  // minimizer; solve it directly instead of iterating to the BCD tolerance.
  if (p.lambda == 0.0 && !p.squared_penalty) {
    sol.delta_hat = p.dictionary.completeOrthogonalDecomposition().solve(p.response);
    sol.iterations = 1;
    sol.converged = true;
    sol.objective = objective_value(p, sol.delta_hat);
    sol.kkt_residual = kkt_check(p, sol);
    return sol;
  }

  Vector fit = Vector::Zero(p.response.size());  // dictionary * delta_hat

  for (sol.iterations = 1; sol.iterations <= opt.max_iter; ++sol.iterations) {
    double max_change = 0.0;
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
      const auto [start, len] = p.groups[g];
      const auto Dg = p.dictionary.middleCols(start, len);
      const Vector old = sol.delta_hat.segment(start, len);
      const Vector z = Dg.transpose() * (p.response - fit) + gram[g] * old;
      const double lw = p.lambda * group_weight(len);

      Vector next;
      if (p.squared_penalty) {
        next = (gram[g] + lw * Matrix::Identity(len, len)).ldlt().solve(z);
      } else {
        next = group_minimizer(gram[g], z, lw);
      }
      if (next != old) {
        fit += Dg * (next - old);
        sol.delta_hat.segment(start, len) = next;
        max_change = std::max(max_change, (next - old).lpNorm<Eigen::Infinity>());
      }
    }
    if (max_change <= opt.tol) {
      sol.converged = true;
      break;
    }
  }
  sol.iterations = std::min(sol.iterations, opt.max_iter);
  sol.objective = objective_value(p, sol.delta_hat);
  sol.kkt_residual = kkt_check(p, sol);
  return sol;
}

double kkt_check(const GroupProblem& p, const GroupSolution& sol) {
  check_problem(p);
  const Vector grad = 2.0 * p.dictionary.transpose() * (p.dictionary * sol.delta_hat - p.response);
  double worst = 0.0;
  for (const auto& [start, len] : p.groups) {
    const Vector g = grad.segment(start, len);
    const Vector b = sol.delta_hat.segment(start, len);
    const double lw = p.lambda * group_weight(len);
    double viol;
    if (p.squared_penalty) {
      viol = (g + 2.0 * lw * b).norm();
    } else if (b.norm() > 0.0) {
      viol = (g + lw * b / b.norm()).norm();
    } else {
      viol = std::max(0.0, g.norm() - lw);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

double lambda_max(const GroupProblem& p) {
  check_problem(p);
  double lmax = 0.0;
  for (const auto& [start, len] : p.groups) {
    const double score =
        2.0 * (p.dictionary.middleCols(start, len).transpose() * p.response).norm() /
        group_weight(len);
    lmax = std::max(lmax, score);
  }
  return lmax;
}

}  // namespace glhad
