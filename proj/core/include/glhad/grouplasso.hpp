#pragma once

#include <vector>

#include "glhad/types.hpp"

namespace glhad {

/// Group-lasso regression: min ||sum_g D_g b_g - r||^2 + lambda sum_g sqrt(d_g) ||b_g||
/// over contiguous column groups of the dictionary. The squared-penalty
/// variant (||b_g||^2, ridge-like) is available behind a flag.
struct GroupProblem {
  Matrix dictionary;  // N x D
  Vector response;    // N
  std::vector<std::pair<int, int>> groups;  // (start, length) per group
  double lambda = 0.0;
  bool squared_penalty = false;
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 10000;
};

struct GroupSolution {
  Vector delta_hat;
  double objective = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool converged = false;
};

GroupSolution solve(const GroupProblem& problem, const SolveOptions& options = {});

/// Maximum subgradient violation of the solution; 0 for an exact minimizer.
double kkt_check(const GroupProblem& problem, const GroupSolution& solution);

/// Smallest lambda at which the all-zero solution is optimal.
double lambda_max(const GroupProblem& problem);

double objective_value(const GroupProblem& problem, const Vector& delta);

}  // namespace glhad
