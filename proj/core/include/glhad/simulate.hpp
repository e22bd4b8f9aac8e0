#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "glhad/model.hpp"
#include "glhad/types.hpp"

namespace glhad {

/// One product's trip through the closed loop.
struct RunRecord {
  Vector y;                   // stacked measurements, length N
  std::vector<Vector> x;      // true state per stage 0..K
  std::vector<Vector> xhat;   // filtered estimate per stage 0..K
  std::vector<Vector> u;      // control per stage 1..K
  std::optional<AttackSpec> attack;
  std::uint64_t seed = 0;
};

/// SplitMix64 step; used to derive independent per-replication seeds from a
/// master seed: seed_i = splitmix64(master + i + 1).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t counter);

/// Closed-loop simulator with cached gains and noise factors.
class Simulator {
 public:
  explicit Simulator(const SystemModel& system);

  /// Deterministic propagation with explicit disturbance inputs. Any of the
  /// disturbance lists may be empty, meaning zero. w is indexed 1..K (entry
  /// k-1), v and delta 0..K.
  RunRecord propagate(const Vector& x0, const std::vector<Vector>& refs,
                      const std::vector<Vector>& w, const std::vector<Vector>& v,
                      const std::vector<Vector>& delta) const;

  /// One product with noise drawn from the stage covariances.
  RunRecord run(const std::optional<AttackSpec>& attack, std::uint64_t seed) const;

  const SystemModel& system() const { return *system_; }

 private:
  const SystemModel* system_;
  std::vector<Matrix> sqrt_w_;  // per stage 1..K (entry k-1)
  std::vector<Matrix> sqrt_v_;  // per stage 0..K
};

RunRecord run_product(const SystemModel& system, const std::optional<AttackSpec>& attack,
                      std::uint64_t seed);

/// Scales `direction` so the injected bias has the requested signal-to-noise
/// ratio under the stage block of Cov(y) = sigma_eps.
AttackSpec make_attack(const SystemModel& system, const Matrix& sigma_eps, int stage,
                       const Vector& direction, double snr);

/// Uniform direction on the attacked stage's sensor sphere.
Vector random_unit_direction(int dim, std::uint64_t seed);

}  // namespace glhad
