#pragma once

#include <utility>
#include <vector>

#include "glhad/model.hpp"
#include "glhad/types.hpp"

namespace glhad {

struct GroupRange {
  int start = 0;
  int size = 0;
};

/// Linear structure of the closed loop: maps from external inputs, injected
/// bias and process noise to the stacked measurement vector, plus the
/// residual-space geometry the detectors run on.
struct StructureMatrices {
  Matrix H;          // N x M, augmented input -> y
  Matrix H1;         // N x N, injected bias -> y
  Matrix Hw;         // N x (sum m_k, k>=1), process noise -> y
  Matrix Sigma_eps;  // N x N, Cov(y) about its deterministic mean

  Matrix proj;                     // P_H
  Matrix R;                        // (I - P_H) H1
  Matrix Rp;                       // per-group rank-reduced dictionary
  std::vector<GroupRange> groups;  // column ranges of Rp per stage 0..K
  Matrix Cov_r;
  Vector eig_values;   // retained eigenvalues of Cov_r, descending
  Matrix eig_vectors;  // N x d, matching columns

  int retained_dim() const { return static_cast<int>(eig_values.size()); }
};

Matrix closed_form_H(const SystemModel& system);
Matrix closed_form_H1(const SystemModel& system);
Matrix closed_form_Hw(const SystemModel& system);

/// Independent construction of H, H1, Hw by propagating unit impulses through
/// the exact closed-loop recursion with all noise at zero; exact by linearity.
void oracle_structure_matrices(const SystemModel& system, Matrix& H, Matrix& H1, Matrix& Hw);

Matrix sigma_eps(const SystemModel& system, const Matrix& Hw, const Matrix& H1);

/// Fills proj, R, Rp, groups, Cov_r and the retained eigendecomposition.
void residual_geometry(const SystemModel& system, StructureMatrices& sm);

enum class StructureRoute { Oracle, ClosedForm };

/// Builds the full structure (matrices + geometry) along the chosen route.
StructureMatrices build_structure(const SystemModel& system,
                                  StructureRoute route = StructureRoute::Oracle);

/// Stacked augmented input [x0; x_1^r; ...; x_K^r].
Vector augmented_state(const SystemModel& system);

}  // namespace glhad
