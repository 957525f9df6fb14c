#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oufield/error.hpp"
#include "oufield/rng.hpp"
#include "oufield/sulfate_model.hpp"

namespace oufield {

enum Param : int { kGamma = 0, kAlpha = 1, kEta = 2, kBeta = 3, kSigma2 = 4 };
inline constexpr int kNumParams = 5;
inline constexpr std::array<const char*, kNumParams> kParamNames = {"gamma", "alpha", "eta", "beta",
                                                                    "sigma2"};

std::array<double, kNumParams> theta_values(const Theta& t);
Theta theta_from_values(const std::array<double, kNumParams>& v, double delta, double horizon);

// Half-normal scales for gamma, alpha, beta; exponential rates for eta, sigma2.
struct PriorSpec {
  double gamma_scale = 5000.0;
  double alpha_scale = 10.0;
  double beta_scale = 10.0;
  double eta_rate = 1.0;
  double sigma2_rate = 1e-4;

  void validate() const;
  // Log density of one coordinate (up to the shared normalizing constants
  // being included; -inf outside the support).
  double log_density(int param, double value) const;
  double log_density(const Theta& t) const;
  double draw(int param, Rng& rng) const;
};

struct InferenceData {
  std::shared_ptr<const TransportComponents> parts;
  Eigen::VectorXd emissions;
  Eigen::VectorXd v_obs;
  Mask mask;  // empty: all valid
  double delta = 50.0;
  double T = 1.0;
};

enum class BetaUpdate { Gibbs, Metropolis };

struct McmcConfig {
  int chains = 5;
  int iterations = 150000;
  int burn_in = 25000;
  int adapt_interval = 50;
  double target_accept = 0.44;
  std::array<double, kNumParams> initial_step = {0.1, 0.1, 0.1, 0.1, 0.1};
  BetaUpdate beta_update = BetaUpdate::Gibbs;
  int threads = 1;
  // When set, chains start here (with no jitter); otherwise from prior draws.
  std::optional<Theta> init;

  void validate() const;
};

// One state of a chain with the cached likelihood pieces.
struct ChainState {
  Theta theta;
  LikelihoodParts lik;
  double log_lik = 0.0;
  double log_post = 0.0;
};

struct Trace {
  int chain_id = 0;
  std::uint64_t seed = 0;
  int burn_in = 0;
  Eigen::MatrixXd samples;      // iterations x 5 (gamma, alpha, eta, beta, sigma2)
  Eigen::VectorXd log_post;     // per iteration
  Eigen::VectorXd log_lik;      // per iteration
  Eigen::MatrixXd step_sizes;   // iterations x 5, proposal scale used at each iteration
  std::array<double, kNumParams> acceptance{};  // post-burn-in acceptance rates
  std::array<double, kNumParams> acceptance_burn_in{};
  double delta = 50.0;
  double T = 1.0;

  int iterations() const noexcept { return static_cast<int>(samples.rows()); }
  Theta theta_at(int iter) const;
};

// Raised when a chain dies; carries every trace produced so far (the dead
// chain's trace truncated at the failing iteration).
class SamplerFailure : public SamplerError {
 public:
  SamplerFailure(const std::string& message, std::vector<Trace> partial)
      : SamplerError(message), partial_(std::move(partial)) {}
  const std::vector<Trace>& partial() const noexcept { return partial_; }

 private:
  std::vector<Trace> partial_;
};

// Evaluates log prior + log likelihood for a state, reusing the model's caches.
class Posterior {
 public:
  Posterior(const InferenceData& data, const PriorSpec& prior);

  ChainState evaluate(const Theta& theta);
  // Same factorizations, new sigma2: no solves needed.
  ChainState with_sigma2(const ChainState& s, double sigma2) const;

  SulfateModel& model() noexcept { return model_; }
  const InferenceData& data() const noexcept { return data_; }
  const PriorSpec& prior() const noexcept { return prior_; }

 private:
  const InferenceData& data_;
  PriorSpec prior_;
  SulfateModel model_;
};

struct BlockResult {
  ChainState state;
  bool accepted = false;
};

// Log-scale random walk: theta' = theta exp(eps), eps ~ N(0, step^2), with the
// log(theta'/theta) Jacobian term in the acceptance ratio.
BlockResult metropolis_block(Posterior& post, const ChainState& current, int block, double step,
                             Rng& rng);

// Same update with the log-increment supplied, for tests that fix eps.
BlockResult metropolis_block_with_increment(Posterior& post, const ChainState& current, int block,
                                            double eps, double u);

// Metropolis-Hastings acceptance probability on the log scale.
double mh_accept_probability(double log_target_new, double log_target_old, double log_jacobian);

struct BetaConditional {
  double mean = 0.0;      // of the untruncated Gaussian
  double variance = 0.0;
};

BetaConditional beta_conditional(Posterior& post, const Theta& theta);
// Draw beta from its full conditional (Gaussian truncated to beta > 0).
double gibbs_beta(Posterior& post, const Theta& theta, Rng& rng);

// Draw from N(mean, sd^2) truncated to (0, inf).
double truncated_normal_positive(double mean, double sd, Rng& rng);

std::vector<Trace> run_chains(const McmcConfig& config, const InferenceData& data,
                              const PriorSpec& prior, const std::vector<std::uint64_t>& seeds);

Trace run_chain(const McmcConfig& config, const InferenceData& data, const PriorSpec& prior,
                std::uint64_t seed, int chain_id);

struct Diagnostics {
  std::array<double, kNumParams> rhat{};
  std::array<double, kNumParams> ess{};
  std::vector<std::string> warnings;
};

// Split-Rhat and multi-chain ESS (Geyer initial-monotone truncation) over
// post-burn-in samples. Requires >= 2 chains and >= 100 post-burn-in samples each.
Diagnostics diagnostics(const std::vector<Trace>& traces);

// Single-parameter versions over raw chains (each vector is one chain).
double split_rhat(const std::vector<std::vector<double>>& chains);
double effective_sample_size(const std::vector<std::vector<double>>& chains);

struct DicResult {
  double dbar = 0.0;
  double d_at_mean = 0.0;
  double p_d = 0.0;
  double dic = 0.0;
};

DicResult dic_from_deviance(const std::vector<double>& deviances, double deviance_at_mean);
DicResult dic(const std::vector<Trace>& traces, const InferenceData& data);

// Post-burn-in rows of every chain, stacked.
Eigen::MatrixXd pooled_samples(const std::vector<Trace>& traces);
std::vector<Theta> pooled_thetas(const std::vector<Trace>& traces);

}  // namespace oufield
