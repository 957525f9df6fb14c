#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "oufield/ou_dist.hpp"
#include "oufield/rng.hpp"
#include "oufield/sulfate_model.hpp"

namespace oufield {

enum class InitKind { Zero, Stationary, Given };

// Euler-Maruyama settings. A "stationary" start is produced by running the
// same scheme for `spin_up` time units from A^{-1} m before t = 0.
struct SimConfig {
  double dt = 1e-3;
  double horizon = 1.0;
  int n_paths = 1;
  std::uint64_t seed = 0;
  InitKind init = InitKind::Zero;
  Eigen::VectorXd y0;
  double spin_up = 0.0;
  int thin = 1;  // store every thin-th step (the last step is always stored)

  void validate() const;
};

struct Path {
  std::vector<double> times;
  Eigen::MatrixXd states;  // one row per stored time
};

// Throws StabilityError when dt * max_diag(A) >= 0.5.
void check_em_stability(const SparseOperator& a, double dt);

// y_{k+1} = y_k + (-A y_k + m) dt + sigma B sqrt(dt) eps_k.
Path simulate_path(const OUSystem& sys, const SimConfig& cfg, Rng& rng);

// Trapezoid rule over the stored times, divided by the time span.
Eigen::VectorXd time_average_path(const Path& path);

struct CoupledPath {
  Path so4;
  Path so2;
};

// SO2 is deterministic: z' = -A_z z + beta X. SO4 is forced by eta z.
// z starts at its steady state unless `z0` is given.
CoupledPath simulate_coupled(const SulfateModel& model, const SimConfig& cfg, Rng& rng,
                             const Eigen::VectorXd* z0 = nullptr);

struct EnsembleMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
  long count = 0;
};

// Streaming accumulator (Welford) for ensemble mean and covariance.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(Eigen::Index n);
  void add(const Eigen::VectorXd& x);
  EnsembleMoments result() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  long count_ = 0;
};

struct EnsembleResult {
  EnsembleMoments time_average;  // of (1/T) int_0^T y dt
  EnsembleMoments initial;       // of y at t = 0 (after spin-up for a stationary start)
  EnsembleMoments final_state;   // of y at t = T
};

// n_paths independent paths, path p on stream (seed, p); nothing is stored
// beyond the running moments.
EnsembleResult simulate_ensemble(const OUSystem& sys, const SimConfig& cfg);

// Same for the coupled model: moments of the time-averaged SO4 path.
EnsembleResult simulate_coupled_ensemble(const SulfateModel& model, const SimConfig& cfg);

}  // namespace oufield
