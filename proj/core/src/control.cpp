#include "glhad/control.hpp"

#include <string>

namespace glhad {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Solves G X = B for symmetric positive-definite G via LDLT; throws when G
/// is numerically singular.
Matrix spd_solve(const Matrix& G, const Matrix& rhs, int stage, const char* what) {
  Eigen::LDLT<Matrix> ldlt(symmetrize(G));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().cwiseAbs().minCoeff() < 1e-13 * std::max(1.0, G.cwiseAbs().maxCoeff()))
    throw SynthesisError(std::string(what) + " singular at stage " + std::to_string(stage));
  return ldlt.solve(rhs);
}

}  // namespace

RiccatiResult riccati_backward(const SystemModel& sys) {
  const int K = sys.num_stages();
  RiccatiResult out;
  out.S.resize(K);
  out.L.resize(K);

  // S[K-1] = F is the weight used for u_K; each step back folds stage k's
  // optimal control into the weight seen by u_{k-1}.
  Matrix S = symmetrize(sys.F);
  for (int k = K; k >= 1; --k) {
    const auto& st = sys.stages[k];
    const Matrix G = st.B.transpose() * S * st.B + sys.Z;
    const Matrix BtSA = st.B.transpose() * S * st.A;
    out.S[k - 1] = S;
    out.L[k - 1] = -spd_solve(G, BtSA, k, "B^T S B + Z");
    if (k > 1) {
      const Matrix gain = spd_solve(G, st.B.transpose() * S, k, "B^T S B + Z");
      S = symmetrize(st.A.transpose() * (S - S * st.B * gain) * st.A + sys.U);
    }
  }
  return out;
}

std::vector<Matrix> reference_gain(const SystemModel& sys, const RiccatiResult& riccati) {
  const int K = sys.num_stages();
  std::vector<Matrix> out(K);
  for (int k = 1; k <= K; ++k) {
    const auto& st = sys.stages[k];
    const Matrix& S = riccati.S[k - 1];
    const Matrix G = st.B.transpose() * S * st.B + sys.Z;
    out[k - 1] = spd_solve(G, st.B.transpose() * S, k, "B^T S B + Z");
  }
  return out;
}

namespace {

struct KalmanSweep {
  std::vector<Matrix> gains;
  std::vector<Matrix> covariances;  // P_{k|k}
};

KalmanSweep kalman_sweep(const SystemModel& sys) {
  const int K = sys.num_stages();
  KalmanSweep out;

  Matrix P = symmetrize(sys.prior_cov);
  for (int k = 0; k <= K; ++k) {
    const auto& st = sys.stages[k];
    if (k > 0) P = symmetrize(st.A * P * st.A.transpose() + st.W);
    const Matrix Sinn = st.C * P * st.C.transpose() + st.V;
    Eigen::LDLT<Matrix> ldlt(symmetrize(Sinn));
    if (ldlt.info() != Eigen::Success ||
        ldlt.vectorD().cwiseAbs().minCoeff() < 1e-13 * std::max(1.0, Sinn.cwiseAbs().maxCoeff()))
      throw SynthesisError("innovation covariance singular at stage " + std::to_string(k));
    const Matrix Kk = ldlt.solve(st.C * P).transpose();
    P = symmetrize((Matrix::Identity(P.rows(), P.cols()) - Kk * st.C) * P);
    out.gains.push_back(Kk);
    out.covariances.push_back(P);
  }
  return out;
}

}  // namespace

std::vector<Matrix> kalman_gains(const SystemModel& sys) { return kalman_sweep(sys).gains; }

std::vector<Matrix> kalman_covariances(const SystemModel& sys) {
  return kalman_sweep(sys).covariances;
}

SystemModel synthesize(SystemModel sys) {
  const auto violations = validate(sys);
  if (!violations.empty())
    throw ModelError("cannot synthesize gains for invalid system: " + to_string(violations.front()));

  const int K = sys.num_stages();
  const auto riccati = riccati_backward(sys);
  const auto lr = reference_gain(sys, riccati);
  const auto kk = kalman_gains(sys);

  std::vector<StageGains> gains(K + 1);
  gains[0].K = kk[0];
  for (int k = 1; k <= K; ++k) {
    gains[k].L = riccati.L[k - 1];
    gains[k].LR = lr[k - 1];
    gains[k].K = kk[k];
  }
  sys.gains = std::move(gains);
  return sys;
}

}  // namespace glhad
