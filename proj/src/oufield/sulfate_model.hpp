#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseLU>

#include "oufield/rng.hpp"
#include "oufield/transport.hpp"

namespace oufield {

// gamma: sub-annual wind transport, alpha: annual wind advection,
// eta: SO2 -> SO4 reaction rate, beta: proportional SO2 emission rate,
// sigma2: process variance. delta (SO4 deposition) and T (averaging window,
// years) stay fixed during inference.
struct Theta {
  double gamma = 0.0;
  double alpha = 0.0;
  double eta = 1.0;
  double beta = 1.0;
  double sigma2 = 1.0;
  double delta = 50.0;
  double T = 1.0;

  void validate() const;
};

// 1 marks a valid cell. An empty mask means every cell is valid.
using Mask = std::vector<std::uint8_t>;

std::size_t count_valid(const Mask& mask, std::size_t n);

// Pieces of the log-likelihood that do not depend on sigma2.
struct LikelihoodParts {
  std::size_t n_valid = 0;
  double log_det = 0.0;  // (n_valid / n) log|det A_y|
  double ssr = 0.0;      // sum over valid rows of (A_y v~ - eta Z)^2

  double evaluate(double sigma2, double horizon) const;
};

// Linear-in-beta design of the residual: r(beta) = r0 - beta * w on valid rows.
struct BetaDesign {
  Eigen::VectorXd r0;
  Eigen::VectorXd w;
};

// Coupled model: A_z Z = beta X (steady SO2), A_y mu = eta Z (time-averaged SO4),
// V ~ N(mu, (sigma2 / T) (A_y^T A_y)^{-1}).
class SulfateModel {
 public:
  SulfateModel(std::shared_ptr<const TransportComponents> parts, Eigen::VectorXd emissions,
               Theta theta);

  const Theta& theta() const noexcept { return theta_; }
  // Factorizations survive when (gamma, alpha, delta) or (gamma, alpha, eta) are unchanged.
  void set_theta(const Theta& theta);

  std::size_t n() const noexcept { return parts_->diffusion.n(); }
  const Eigen::VectorXd& emissions() const noexcept { return x_; }
  const TransportComponents& components() const noexcept { return *parts_; }
  std::shared_ptr<const TransportComponents> shared_components() const noexcept { return parts_; }

  const SparseOperator& a_y() const;
  const SparseOperator& a_z() const;

  Eigen::VectorXd so2_steady_state() const;
  Eigen::VectorXd so2_steady_state_for(const Eigen::VectorXd& x) const;
  Eigen::VectorXd so4_mean() const;
  Eigen::VectorXd so4_mean_for(const Eigen::VectorXd& x) const;

  // log|det A_y| with the sign asserted positive.
  double log_abs_det() const;

  LikelihoodParts likelihood_parts(const Eigen::VectorXd& v_obs, const Mask& mask) const;
  double log_likelihood(const Eigen::VectorXd& v_obs, const Mask& mask = {}) const;

  BetaDesign beta_design(const Eigen::VectorXd& v_obs, const Mask& mask = {}) const;

  // mu + A_y^{-1} w with w ~ N(0, (sigma2 / T) I).
  Eigen::VectorXd sample_field(Rng& rng) const;
  Eigen::VectorXd sample_field_for(const Eigen::VectorXd& x, Rng& rng, bool include_noise = true) const;

  Eigen::VectorXd solve_y(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd solve_z(const Eigen::VectorXd& rhs) const;

 private:
  struct Factor {
    SparseOperator a;
    std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu;
    double log_abs_det = 0.0;
    double key_gamma = -1.0;
    double key_alpha = -1.0;
    double key_rate = -1.0;
  };

  void refresh(Factor& f, double rate) const;
  Eigen::VectorXd solve(Factor& f, double rate, const Eigen::VectorXd& rhs) const;
  void check_observations(const Eigen::VectorXd& v_obs, const Mask& mask) const;

  std::shared_ptr<const TransportComponents> parts_;
  Eigen::VectorXd x_;
  Theta theta_;
  mutable Factor fy_;
  mutable Factor fz_;
};

}  // namespace oufield
