#include "glhad/structure.hpp"

#include <string>

#include "glhad/simulate.hpp"

namespace glhad {

namespace {

void require_gains(const SystemModel& sys) {
  if (!sys.has_gains())
    throw SynthesisError("structure matrices require synthesized gains");
}

/// Downstream propagation of a disturbance entering at stage j. `state` is
/// the disturbance coefficient in x_k, `estimate` the coefficient in
/// x_hat_{k|k}; one step advances both to stage k+1. This is the induction
/// step behind all three block formulas: the controller forwards the
/// estimate, the filter corrects it with the innovation C_k A_k (state -
/// estimate).
struct Propagator {
  Matrix state;     // coeff in x_k
  Matrix estimate;  // coeff in xhat_{k|k}

  void advance(const StageModel& st, const StageGains& g) {
    const Matrix closed = st.A + st.B * g.L;
    const Matrix next_state = st.A * state + st.B * g.L * estimate;
    const Matrix next_est =
        closed * estimate + g.K * st.C * st.A * (state - estimate);
    state = next_state;
    estimate = next_est;
  }
};

}  // namespace

Vector augmented_state(const SystemModel& sys) {
  Vector x(sys.augmented_dim());
  int off = sys.stages[0].state_dim();
  x.head(off) = sys.x0;
  for (const auto& r : sys.refs) {
    x.segment(off, r.size()) = r;
    off += static_cast<int>(r.size());
  }
  return x;
}

Matrix closed_form_H(const SystemModel& sys) {
  require_gains(sys);
  const auto& gains = *sys.gains;
  const int K = sys.num_stages();
  const int N = sys.total_sensors();
  Matrix H = Matrix::Zero(N, sys.augmented_dim());

  // Column block 0: the system input x0. h_{11} = C0, then the K0 C0
  // filtered estimate feeds the downstream cascade.
  {
    const int m0 = sys.stages[0].state_dim();
    Propagator p{Matrix::Identity(m0, m0), gains[0].K * sys.stages[0].C};
    H.block(0, 0, sys.stages[0].sensor_dim(), m0) = sys.stages[0].C;
    for (int i = 1; i <= K; ++i) {
      p.advance(sys.stages[i], gains[i]);
      H.block(sys.sensor_offset(i), 0, sys.stages[i].sensor_dim(), m0) =
          sys.stages[i].C * p.state;
    }
  }

  // Column block j >= 1: reference x_j^r enters through B_j L_{R_j}; the
  // filter tracks it exactly (zero innovation), so estimate == state at the
  // injection stage and the cascade is the (A + B L) product chain.
  int col = sys.stages[0].state_dim();
  for (int j = 1; j <= K; ++j) {
    const int mj = sys.stages[j].state_dim();
    const Matrix seed = sys.stages[j].B * gains[j].LR;
    Propagator p{seed, seed};
    H.block(sys.sensor_offset(j), col, sys.stages[j].sensor_dim(), mj) =
        sys.stages[j].C * seed;
    for (int i = j + 1; i <= K; ++i) {
      p.advance(sys.stages[i], gains[i]);
      H.block(sys.sensor_offset(i), col, sys.stages[i].sensor_dim(), mj) =
          sys.stages[i].C * p.state;
    }
    col += mj;
  }
  return H;
}

Matrix closed_form_H1(const SystemModel& sys) {
  require_gains(sys);
  const auto& gains = *sys.gains;
  const int K = sys.num_stages();
  const int N = sys.total_sensors();
  Matrix H1 = Matrix::Zero(N, N);

  // Identity diagonal blocks; the injected bias reaches later stages only
  // through the corrupted estimate K_j delta.
  for (int j = 0; j <= K; ++j) {
    const int nj = sys.stages[j].sensor_dim();
    const int cj = sys.sensor_offset(j);
    H1.block(cj, cj, nj, nj) = Matrix::Identity(nj, nj);
    const int mj = sys.stages[j].state_dim();
    Propagator p{Matrix::Zero(mj, nj), gains[j].K};
    for (int i = j + 1; i <= K; ++i) {
      p.advance(sys.stages[i], gains[i]);
      H1.block(sys.sensor_offset(i), cj, sys.stages[i].sensor_dim(), nj) =
          sys.stages[i].C * p.state;
    }
  }
  return H1;
}

Matrix closed_form_Hw(const SystemModel& sys) {
  require_gains(sys);
  const auto& gains = *sys.gains;
  const int K = sys.num_stages();
  const int N = sys.total_sensors();
  int wcols = 0;
  for (int k = 1; k <= K; ++k) wcols += sys.stages[k].state_dim();
  Matrix Hw = Matrix::Zero(N, wcols);

  int col = 0;
  for (int j = 1; j <= K; ++j) {
    const int mj = sys.stages[j].state_dim();
    // w_j lands in x_j directly; the filter sees it through the innovation.
    Propagator p{Matrix::Identity(mj, mj), gains[j].K * sys.stages[j].C};
    Hw.block(sys.sensor_offset(j), col, sys.stages[j].sensor_dim(), mj) = sys.stages[j].C;
    for (int i = j + 1; i <= K; ++i) {
      p.advance(sys.stages[i], gains[i]);
      Hw.block(sys.sensor_offset(i), col, sys.stages[i].sensor_dim(), mj) =
          sys.stages[i].C * p.state;
    }
    col += mj;
  }
  return Hw;
}

void oracle_structure_matrices(const SystemModel& sys, Matrix& H, Matrix& H1, Matrix& Hw) {
  require_gains(sys);
  const int K = sys.num_stages();
  const int N = sys.total_sensors();
  Simulator sim(sys);

  const std::vector<Vector> none;
  auto zeros = [](int dim) { return Vector::Zero(dim); };

  H.resize(N, sys.augmented_dim());
  int col = 0;
  const int m0 = sys.stages[0].state_dim();
  for (int i = 0; i < m0; ++i)
    H.col(col++) = sim.propagate(Vector::Unit(m0, i), none, none, none, none).y;
  for (int k = 1; k <= K; ++k) {
    const int mk = sys.stages[k].state_dim();
    for (int i = 0; i < mk; ++i) {
      std::vector<Vector> refs(K);
      refs[k - 1] = Vector::Unit(mk, i);
      H.col(col++) = sim.propagate(zeros(m0), refs, none, none, none).y;
    }
  }

  H1.resize(N, N);
  col = 0;
  for (int k = 0; k <= K; ++k) {
    const int nk = sys.stages[k].sensor_dim();
    for (int i = 0; i < nk; ++i) {
      std::vector<Vector> delta(K + 1);
      delta[k] = Vector::Unit(nk, i);
      H1.col(col++) = sim.propagate(zeros(m0), none, none, none, delta).y;
    }
  }

  int wcols = 0;
  for (int k = 1; k <= K; ++k) wcols += sys.stages[k].state_dim();
  Hw.resize(N, wcols);
  col = 0;
  for (int k = 1; k <= K; ++k) {
    const int mk = sys.stages[k].state_dim();
    for (int i = 0; i < mk; ++i) {
      std::vector<Vector> w(K);
      w[k - 1] = Vector::Unit(mk, i);
      Hw.col(col++) = sim.propagate(zeros(m0), none, w, none, none).y;
    }
  }
}

Matrix sigma_eps(const SystemModel& sys, const Matrix& Hw, const Matrix& H1) {
  const int K = sys.num_stages();
  Matrix sx = Matrix::Zero(Hw.cols(), Hw.cols());
  int off = 0;
  for (int k = 1; k <= K; ++k) {
    const int mk = sys.stages[k].state_dim();
    sx.block(off, off, mk, mk) = sys.stages[k].W;
    off += mk;
  }
  Matrix sy = Matrix::Zero(H1.cols(), H1.cols());
  off = 0;
  for (int k = 0; k <= K; ++k) {
    const int nk = sys.stages[k].sensor_dim();
    sy.block(off, off, nk, nk) = sys.stages[k].V;
    off += nk;
  }
  Matrix s = Hw * sx * Hw.transpose() + H1 * sy * H1.transpose();
  return 0.5 * (s + s.transpose());
}

void residual_geometry(const SystemModel& sys, StructureMatrices& sm) {
  const int N = static_cast<int>(sm.H.rows());
  const int M = static_cast<int>(sm.H.cols());

  Eigen::ColPivHouseholderQR<Matrix> qr(sm.H);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  if (rank < M)
    throw GeometryError("H is rank deficient: rank " + std::to_string(rank) + " < " +
                        std::to_string(M));
  if (rank >= N)
    throw GeometryError("H spans the full measurement space; residual detection impossible");

  const Matrix Q = qr.householderQ() * Matrix::Identity(N, M);
  sm.proj = Q * Q.transpose();
  const Matrix deflate = Matrix::Identity(N, N) - sm.proj;
  sm.R = deflate * sm.H1;

  // Per-group rank reduction: SVD of each stage's column block, retaining
  // unit-norm left singular directions above the global tolerance.
  const double global_sigma = sm.R.jacobiSvd().singularValues().maxCoeff();
  const int K = sys.num_stages();
  std::vector<Matrix> blocks;
  sm.groups.clear();
  int total = 0;
  for (int g = 0; g <= K; ++g) {
    const Matrix Rg = sm.R.middleCols(sys.sensor_offset(g), sys.stages[g].sensor_dim());
    Eigen::JacobiSVD<Matrix> svd(Rg, Eigen::ComputeThinU);
    int keep = 0;
    while (keep < svd.singularValues().size() &&
           svd.singularValues()(keep) > 1e-10 * global_sigma)
      ++keep;
    if (keep == 0)
      throw GeometryError("attack signatures of stage " + std::to_string(g) +
                          " vanish in the residual space");
    blocks.push_back(svd.matrixU().leftCols(keep));
    sm.groups.push_back({total, keep});
    total += keep;
  }
  sm.Rp.resize(N, total);
  for (int g = 0; g <= K; ++g)
    sm.Rp.middleCols(sm.groups[g].start, sm.groups[g].size) = blocks[g];

  Matrix cov = deflate * sm.Sigma_eps * deflate.transpose();
  sm.Cov_r = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sm.Cov_r);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  int keep = 0;
  for (int i = 0; i < N; ++i)
    if (es.eigenvalues()(i) > 1e-10 * lmax) ++keep;
  if (keep == 0) throw GeometryError("residual covariance has no retained eigenvalues");

  sm.eig_values.resize(keep);
  sm.eig_vectors.resize(N, keep);
  for (int i = 0; i < keep; ++i) {  // descending order
    sm.eig_values(i) = es.eigenvalues()(N - 1 - i);
    sm.eig_vectors.col(i) = es.eigenvectors().col(N - 1 - i);
  }
}

StructureMatrices build_structure(const SystemModel& sys, StructureRoute route) {
  StructureMatrices sm;
  if (route == StructureRoute::Oracle) {
    oracle_structure_matrices(sys, sm.H, sm.H1, sm.Hw);
  } else {
    sm.H = closed_form_H(sys);
    sm.H1 = closed_form_H1(sys);
    sm.Hw = closed_form_Hw(sys);
  }
  sm.Sigma_eps = sigma_eps(sys, sm.Hw, sm.H1);
  residual_geometry(sys, sm);
  return sm;
}

}  // namespace glhad
