#pragma once

#include <cstddef>
#include <iosfwd>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "oufield/grid.hpp"

namespace oufield {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr std::size_t kDenseThreshold = 3000;

// Square sparse matrix with a recorded symmetry flag. Immutable once built.
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(SparseMatrix matrix, bool symmetric);

  static SparseOperator identity(std::size_t n, double scale = 1.0);
  static SparseOperator from_dense(const Eigen::MatrixXd& dense);

  std::size_t n() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  const SparseMatrix& matrix() const noexcept { return matrix_; }
  bool symmetric() const noexcept { return symmetric_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix_); }
  double max_diagonal() const;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return matrix_ * x; }

 private:
  SparseMatrix matrix_;
  bool symmetric_ = false;
};

enum class Boundary { ZeroFlux, Periodic };

// Negative discrete Laplacian (graph Laplacian scaled by 1/dx^2, 1/dy^2):
// symmetric positive semidefinite with D * 1 = 0.
SparseOperator assemble_diffusion(const Grid& grid, Boundary boundary = Boundary::ZeroFlux);

// First-order donor-cell upwind advection in flux form. With drift -C y,
// row P carries a_L = -max(v_l, 0)/dx, a_R = -max(-v_r, 0)/dx and
// a_P = (max(v_r, 0) + max(-v_l, 0))/dx plus the y-direction analogue.
// Under zero flux the domain-edge faces carry no flux, so 1^T C = 0.
SparseOperator assemble_advection(const Grid& grid, const FaceWind& wind,
                                  Boundary boundary = Boundary::ZeroFlux);

struct TransportComponents {
  SparseOperator diffusion;
  SparseOperator advection;
};

TransportComponents assemble_components(const Grid& grid, const FaceWind& wind,
                                        Boundary boundary = Boundary::ZeroFlux);

// A = gamma * D + alpha * C + r * I; symmetric iff alpha == 0 (given D symmetric).
SparseOperator assemble_transport(const SparseOperator& diffusion, const SparseOperator& advection,
                                  double gamma, double alpha, double r);

// Minimum real part over the spectrum (dense eigensolve).
double min_real_eigenvalue(const SparseOperator& a, std::size_t dense_threshold = kDenseThreshold);

struct OperatorReport {
  double diffusion_row_sum_defect = 0.0;     // max |D 1|
  double column_sum_defect = 0.0;            // max |1^T (gamma D + alpha C)|
  double flux_norm_inf = 0.0;                // ||gamma D + alpha C||_inf
  double max_offdiagonal = 0.0;              // of A; <= 0 for an M-matrix sign pattern
  double min_diagonal = 0.0;                 // of A
  double diffusion_asymmetry = 0.0;          // max |D - D^T|
  bool m_matrix_pattern = false;
  bool eigenvalue_checked = false;
  double min_real_eigenvalue = 0.0;
};

OperatorReport inspect_operator(const TransportComponents& parts, double gamma, double alpha,
                                double r, std::size_t eigen_threshold = kDenseThreshold);

}  // namespace oufield
