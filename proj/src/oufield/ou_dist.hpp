#pragma once

#include <memory>
#include <optional>
#include <variant>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include "oufield/transport.hpp"

namespace oufield {

// Solves A X + X A^T = Q by Bartels-Stewart on the real Schur form of A.
// Requires every eigenvalue of A to have positive real part (StabilityError
// otherwise) and checks ||A X + X A^T - Q||_F <= 1e-8 ||Q||_F (NumericalError).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

// Same equation for a sparse operator. When A is flagged symmetric and
// Q = q I the closed form X = (q / 2) A^{-1} is used.
Eigen::MatrixXd solve_lyapunov(const SparseOperator& a, const Eigen::MatrixXd& q,
                               std::size_t dense_threshold = kDenseThreshold);

double lyapunov_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& q);

// e^{-A t} as a dense matrix.
Eigen::MatrixXd expm_neg(const Eigen::MatrixXd& a, double t);

// e^{-A t} V. Uses the dense exponential when n is within the threshold and
// the scaled truncated Taylor action otherwise.
Eigen::MatrixXd expm_action(const SparseOperator& a, double t, const Eigen::MatrixXd& v,
                            std::size_t dense_threshold = kDenseThreshold);

// Scaled truncated Taylor series for e^{-A t} V; works for any n. Each of the
// s = ceil(t ||A||_1) substeps sums terms until they fall below `tol` relative.
Eigen::MatrixXd expm_action_taylor(const SparseMatrix& a, double t, const Eigen::MatrixXd& v,
                                   double tol = 1e-16);

// d y = (-A y + m) dt + sigma B dW.
struct OUSystem {
  SparseOperator a;
  Eigen::VectorXd m;
  std::optional<Eigen::MatrixXd> b;  // nullopt: B = I
  double sigma2 = 1.0;

  std::size_t n() const noexcept { return a.n(); }
  bool identity_noise() const noexcept { return !b.has_value(); }
  // sigma^2 B B^T
  Eigen::MatrixXd noise_covariance() const;
  // The simulator accepts sigma2 = 0; the distributions do not.
  void validate(bool allow_noiseless = false) const;
};

enum class Provenance { Transient, Stationary, TimeAveragedExact, TimeAveragedSar };

const char* to_string(Provenance p) noexcept;

struct SparsePrecision {
  SparseMatrix q;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix>> factor;
};

// Multivariate Gaussian over grid cells with either a dense covariance or a
// sparse precision (with its Cholesky factor computed once and shared).
class GaussianField {
 public:
  GaussianField(Eigen::VectorXd mean, Eigen::MatrixXd covariance, Provenance provenance);
  GaussianField(Eigen::VectorXd mean, SparseMatrix precision, Provenance provenance);

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  Provenance provenance() const noexcept { return provenance_; }
  bool has_dense_covariance() const noexcept {
    return std::holds_alternative<Eigen::MatrixXd>(second_moment_);
  }

  const Eigen::MatrixXd& covariance() const;
  const SparsePrecision& precision() const;

  // Dense covariance for either representation (inverts the precision when sparse).
  Eigen::MatrixXd dense_covariance(std::size_t dense_threshold = kDenseThreshold) const;

  double log_density(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  std::variant<Eigen::MatrixXd, SparsePrecision> second_moment_;
  Provenance provenance_;
};

// Law of y_t given y_0 (dense; n <= threshold). Covariance is computed as
// Sigma_inf - e^{-At} Sigma_inf e^{-A^T t}.
GaussianField transient(const OUSystem& sys, const Eigen::VectorXd& y0, double t,
                        std::size_t dense_threshold = kDenseThreshold);

// Stationary law N(A^{-1} m, Sigma). Symmetric A with B = I gives the sparse
// CAR precision (2 / sigma^2) A; otherwise a dense Lyapunov solve.
GaussianField stationary(const OUSystem& sys, std::size_t dense_threshold = kDenseThreshold);

// Law of (1/T) int_0^T y_s ds for a stationary start (dense Psi).
GaussianField time_avg_exact(const OUSystem& sys, double horizon,
                             std::size_t dense_threshold = kDenseThreshold);

// SAR approximation of the time-averaged law: precision (T / sigma^2) A^T A.
GaussianField time_avg_sar(const OUSystem& sys, double horizon);

// (1 - e^{-delta T}) / (T^2 delta^3): spectral-norm bound on Psi - Phi for A = gamma D + delta I.
double phi_error_bound(double delta, double horizon);

// A^{-1} m by sparse LU; throws StabilityError when A is singular.
Eigen::VectorXd sparse_solve(const SparseOperator& a, const Eigen::VectorXd& rhs);

}  // namespace oufield
