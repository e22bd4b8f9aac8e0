#pragma once

#include <vector>

#include "glhad/model.hpp"
#include "glhad/types.hpp"

namespace glhad {

/// Backward Riccati sweep. S[k-1] is the cost-to-go weight applied when
/// computing u_k (terminal stage uses F), L[k-1] the regulator gain for
/// stage k, k = 1..K.
struct RiccatiResult {
  std::vector<Matrix> S;
  std::vector<Matrix> L;
};

RiccatiResult riccati_backward(const SystemModel& system);

/// Reference feedforward gains L_{R_k}, k = 1..K (index k-1).
std::vector<Matrix> reference_gain(const SystemModel& system, const RiccatiResult& riccati);

/// Kalman gains K_k for k = 0..K, from the forward covariance recursion
/// started at the configured prior.
std::vector<Matrix> kalman_gains(const SystemModel& system);

/// Filter covariances P_{k|k} for k = 0..K (exposed for tests).
std::vector<Matrix> kalman_covariances(const SystemModel& system);

/// Runs all three syntheses and stores the gains on the model.
SystemModel synthesize(SystemModel system);

}  // namespace glhad
