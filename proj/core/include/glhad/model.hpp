#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glhad/types.hpp"

namespace glhad {

/// One stage of the serial process. Stage 0 is measurement-only: it carries
/// C and V for the raw input but no transition (A, B, W are empty).
struct StageModel {
  int k = 0;
  Matrix A;  // m_k x m_{k-1}
  Matrix B;  // m_k x p_k
  Matrix C;  // n_k x m_k
  Matrix W;  // m_k x m_k
  Matrix V;  // n_k x n_k

  int state_dim() const { return static_cast<int>(C.cols()); }    // m_k
  int sensor_dim() const { return static_cast<int>(C.rows()); }   // n_k
  int control_dim() const { return static_cast<int>(B.cols()); }  // p_k
};

/// Synthesized per-stage gains. Stage 0 has only the Kalman gain.
struct StageGains {
  Matrix L;   // regulator, p_k x m_{k-1}
  Matrix LR;  // reference feedforward, p_k x m_k
  Matrix K;   // Kalman gain, m_k x n_k
};

struct SystemModel {
  std::vector<StageModel> stages;  // stages[k], k = 0..K
  Vector x0;                       // system input, dimension m_0
  std::vector<Vector> refs;        // refs[k-1] = x_k^r, k = 1..K
  Matrix U, Z, F;                  // LQG weights
  Matrix prior_cov;                // Kalman prior covariance at stage 0
  std::uint64_t noise_seed = 0;
  std::optional<std::vector<StageGains>> gains;  // present after synthesis

  int num_stages() const { return static_cast<int>(stages.size()) - 1; }  // K
  int total_sensors() const;                                              // N
  int augmented_dim() const;  // M = m_0 + sum_k m_k over references
  bool has_gains() const { return gains.has_value(); }

  /// Offset of stage k's sensor block in the stacked measurement vector.
  int sensor_offset(int k) const;
};

/// Sensor bias injected at one stage.
struct AttackSpec {
  int stage = 0;
  Vector delta;
};

struct Violation {
  std::string type;   // offending [TYPE]
  int stage = -1;     // stage index, -1 when not stage-specific
  std::string field;  // offending field
  std::string rule;   // violated rule
};

std::string to_string(const Violation& v);

/// Checks every model invariant; returns one entry per violation, empty when
/// the system is well-formed.
std::vector<Violation> validate(const SystemModel& system);

SystemModel load_system(const std::filesystem::path& config_path);
void save_system(const SystemModel& system, const std::filesystem::path& config_path);

std::string serialize_system(const SystemModel& system);
SystemModel parse_system(const std::string& text, const std::string& origin = "<string>");

}  // namespace glhad
