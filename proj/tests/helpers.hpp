#pragma once

#include <random>
#include <vector>

#include "glhad/control.hpp"
#include "glhad/model.hpp"

namespace testutil {

using glhad::Matrix;
using glhad::SystemModel;
using glhad::StageModel;
using glhad::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * uni(rng);
  return m;
}

inline Matrix random_spd(std::mt19937_64& rng, int dim, double scale = 0.1) {
  const Matrix a = random_matrix(rng, dim, dim);
  return scale * (a * a.transpose() + Matrix::Identity(dim, dim));
}

/// Scales a square matrix to the requested spectral radius.
inline Matrix stabilize(Matrix a, double radius) {
  const double rho = a.eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 1e-12) a *= radius / rho;
  return a;
}

/// Random stable closed-loop system. Stage dimensions may vary; sensor
/// counts are kept at least the state dimension so every detector geometry
/// is well posed.
inline SystemModel random_system(std::uint64_t seed, int K_max = 4, int m_max = 4,
                                 int n_max = 6) {
  std::mt19937_64 rng(seed);
  const int K = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(K_max - 1));
  const int m = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(m_max - 1));
  std::vector<int> n(K + 1);
  for (int k = 0; k <= K; ++k)
    n[k] = m + static_cast<int>(rng() % static_cast<std::uint64_t>(n_max - m + 1));

  SystemModel sys;
  for (int k = 0; k <= K; ++k) {
    StageModel st;
    st.k = k;
    if (k > 0) {
      st.A = stabilize(random_matrix(rng, m, m), 0.9);
      st.B = random_matrix(rng, m, m);
      st.W = random_spd(rng, m);
    }
    st.C = random_matrix(rng, n[k], m);
    st.V = random_spd(rng, n[k]);
    sys.stages.push_back(std::move(st));
  }
  sys.x0 = random_matrix(rng, m, 1).col(0);
  for (int k = 1; k <= K; ++k) sys.refs.push_back(random_matrix(rng, m, 1).col(0));
  sys.U = Matrix::Identity(m, m);
  sys.Z = Matrix::Identity(m, m);
  sys.F = Matrix::Identity(m, m);
  sys.prior_cov = Matrix::Identity(m, m);
  return sys;
}

/// The reference study system config shipped with the repo.
inline std::string study_system_path() {
  return std::string(GLHAD_SOURCE_DIR) + "/systems/study_numerical.json";
}

inline std::string study_plan_path() {
  return std::string(GLHAD_SOURCE_DIR) + "/plans/study_numerical.json";
}

inline SystemModel study_system(bool with_gains = true) {
  SystemModel sys = glhad::load_system(study_system_path());
  return with_gains ? glhad::synthesize(std::move(sys)) : sys;
}

}  // namespace testutil
