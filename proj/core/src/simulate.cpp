#include "glhad/simulate.hpp"

#include <cmath>
#include <random>
#include <string>

namespace glhad {

namespace {

/// Symmetric square root tolerating PSD-singular covariances.
Matrix covariance_sqrt(const Matrix& cov) {
  if (cov.size() == 0) return cov;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  Vector vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

Vector gaussian(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t counter) {
  return splitmix64(splitmix64(master + 0x632be59bd9b4e019ULL * (stream + 1)) + counter);
}

Simulator::Simulator(const SystemModel& system) : system_(&system) {
  if (!system.has_gains())
    throw SynthesisError("simulator requires synthesized gains; call synthesize() first");
  const int K = system.num_stages();
  for (int k = 1; k <= K; ++k) sqrt_w_.push_back(covariance_sqrt(system.stages[k].W));
  for (int k = 0; k <= K; ++k) sqrt_v_.push_back(covariance_sqrt(system.stages[k].V));
}

RunRecord Simulator::propagate(const Vector& x0, const std::vector<Vector>& refs,
                               const std::vector<Vector>& w, const std::vector<Vector>& v,
                               const std::vector<Vector>& delta) const {
  const auto& sys = *system_;
  const auto& gains = *sys.gains;
  const int K = sys.num_stages();

  auto pick = [](const std::vector<Vector>& list, std::size_t i, Eigen::Index dim) -> Vector {
    if (i < list.size() && list[i].size() != 0) return list[i];
    return Vector::Zero(dim);
  };

  RunRecord rec;
  rec.y.resize(sys.total_sensors());

  Vector x = x0;
  Vector yk = sys.stages[0].C * x + pick(v, 0, sys.stages[0].sensor_dim()) +
              pick(delta, 0, sys.stages[0].sensor_dim());
  rec.y.segment(0, yk.size()) = yk;
  Vector xhat = gains[0].K * yk;
  rec.x.push_back(x);
  rec.xhat.push_back(xhat);

  int offset = static_cast<int>(yk.size());
  for (int k = 1; k <= K; ++k) {
    const auto& st = sys.stages[k];
    const Vector ref = pick(refs, k - 1, st.state_dim());
    const Vector uk = gains[k].L * xhat + gains[k].LR * ref;
    x = st.A * x + st.B * uk + pick(w, k - 1, st.state_dim());
    yk = st.C * x + pick(v, k, st.sensor_dim()) + pick(delta, k, st.sensor_dim());
    rec.y.segment(offset, yk.size()) = yk;

    const Vector xpred = st.A * xhat + st.B * uk;
    xhat = xpred + gains[k].K * (yk - st.C * xpred);
    rec.x.push_back(x);
    rec.xhat.push_back(xhat);
    rec.u.push_back(uk);
    offset += static_cast<int>(yk.size());
  }
  return rec;
}

RunRecord Simulator::run(const std::optional<AttackSpec>& attack, std::uint64_t seed) const {
  const auto& sys = *system_;
  const int K = sys.num_stages();
  if (attack) {
    if (attack->stage < 0 || attack->stage > K)
      throw ModelError("attack stage " + std::to_string(attack->stage) + " out of range 0.." +
                       std::to_string(K));
    if (attack->delta.size() != sys.stages[attack->stage].sensor_dim())
      throw ModelError("attack delta dimension mismatch at stage " +
                       std::to_string(attack->stage));
  }

  std::mt19937_64 rng(seed);
  std::vector<Vector> w, v;
  v.push_back(sqrt_v_[0] * gaussian(rng, sys.stages[0].sensor_dim()));
  for (int k = 1; k <= K; ++k) {
    w.push_back(sqrt_w_[k - 1] * gaussian(rng, sys.stages[k].state_dim()));
    v.push_back(sqrt_v_[k] * gaussian(rng, sys.stages[k].sensor_dim()));
  }
  std::vector<Vector> delta;
  if (attack) {
    delta.resize(K + 1);
    delta[attack->stage] = attack->delta;
  }

  RunRecord rec = propagate(sys.x0, sys.refs, w, v, delta);
  rec.attack = attack;
  rec.seed = seed;
  return rec;
}

RunRecord run_product(const SystemModel& system, const std::optional<AttackSpec>& attack,
                      std::uint64_t seed) {
  return Simulator(system).run(attack, seed);
}

AttackSpec make_attack(const SystemModel& system, const Matrix& sigma_eps, int stage,
                       const Vector& direction, double snr) {
  const int K = system.num_stages();
  if (stage < 0 || stage > K) throw ModelError("attack stage out of range");
  const int n = system.stages[stage].sensor_dim();
  if (direction.size() != n) throw ModelError("attack direction dimension mismatch");
  if (direction.norm() == 0.0) throw ModelError("attack direction must be nonzero");
  if (snr < 0.0) throw ModelError("snr must be nonnegative");

  const int off = system.sensor_offset(stage);
  const Matrix block = sigma_eps.block(off, off, n, n);

  // Quadratic form through the pseudo-inverse of the stage block; a direction
  // entirely in the null space carries no signal and cannot be scaled.
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (block + block.transpose()));
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  double quad = 0.0;
  for (int i = 0; i < n; ++i) {
    const double lambda = es.eigenvalues()(i);
    if (lambda > 1e-12 * lmax) {
      const double proj = es.eigenvectors().col(i).dot(direction);
      quad += proj * proj / lambda;
    }
  }
  if (quad <= 0.0)
    throw GeometryError("attack direction lies in the null space of the stage covariance");

  AttackSpec spec;
  spec.stage = stage;
  spec.delta = (snr / std::sqrt(quad)) * direction;
  return spec;
}

Vector random_unit_direction(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Vector v = gaussian(rng, dim);
  while (v.norm() < 1e-12) v = gaussian(rng, dim);
  return v / v.norm();
}

}  // namespace glhad
