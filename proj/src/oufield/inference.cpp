#include "oufield/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include <boost/random/exponential_distribution.hpp>

namespace oufield {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double half_normal_log_density(double x, double scale) {
  if (!(x > 0.0)) return kNegInf;
  return std::log(2.0) - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi) -
         0.5 * (x / scale) * (x / scale);
}

double exponential_log_density(double x, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return std::log(rate) - rate * x;
}

double& coord(Theta& t, int p) {
  switch (p) {
    case kGamma: return t.gamma;
    case kAlpha: return t.alpha;
    case kEta: return t.eta;
    case kBeta: return t.beta;
    default: return t.sigma2;
  }
}

double coord(const Theta& t, int p) { return coord(const_cast<Theta&>(t), p); }

}  // namespace

std::array<double, kNumParams> theta_values(const Theta& t) {
  return {t.gamma, t.alpha, t.eta, t.beta, t.sigma2};
}

Theta theta_from_values(const std::array<double, kNumParams>& v, double delta, double horizon) {
  Theta t;
  t.gamma = v[kGamma];
  t.alpha = v[kAlpha];
  t.eta = v[kEta];
  t.beta = v[kBeta];
  t.sigma2 = v[kSigma2];
  t.delta = delta;
  t.T = horizon;
  return t;
}

Theta Trace::theta_at(int iter) const {
  std::array<double, kNumParams> v{};
  for (int p = 0; p < kNumParams; ++p) v[p] = samples(iter, p);
  return theta_from_values(v, delta, T);
}

void PriorSpec::validate() const {
  auto check = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw ConfigError(std::string("priors.") + name + " must be finite and > 0");
    }
  };
  check(gamma_scale, "gamma_scale");
  check(alpha_scale, "alpha_scale");
  check(beta_scale, "beta_scale");
  check(eta_rate, "eta_rate");
  check(sigma2_rate, "sigma2_rate");
}

double PriorSpec::log_density(int param, double value) const {
  switch (param) {
    case kGamma: return half_normal_log_density(value, gamma_scale);
    case kAlpha: return half_normal_log_density(value, alpha_scale);
    case kEta: return exponential_log_density(value, eta_rate);
    case kBeta: return half_normal_log_density(value, beta_scale);
    case kSigma2: return exponential_log_density(value, sigma2_rate);
    default: throw DomainError("prior: unknown parameter index");
  }
}

double PriorSpec::log_density(const Theta& t) const {
  double s = 0.0;
  for (int p = 0; p < kNumParams; ++p) s += log_density(p, coord(t, p));
  return s;
}

double PriorSpec::draw(int param, Rng& rng) const {
  switch (param) {
    case kGamma: return std::abs(standard_normal(rng)) * gamma_scale;
    case kAlpha: return std::abs(standard_normal(rng)) * alpha_scale;
    case kBeta: return std::abs(standard_normal(rng)) * beta_scale;
    case kEta: return boost::random::exponential_distribution<double>(eta_rate)(rng);
    case kSigma2: return boost::random::exponential_distribution<double>(sigma2_rate)(rng);
    default: throw DomainError("prior: unknown parameter index");
  }
}

void McmcConfig::validate() const {
  if (chains < 1) throw ConfigError("mcmc.chains must be >= 1");
  if (iterations < 1) throw ConfigError("mcmc.iterations must be >= 1");
  if (burn_in < 0 || burn_in >= iterations) throw ConfigError("mcmc.burn_in must be in [0, iterations)");
  if (adapt_interval < 1) throw ConfigError("mcmc.adapt_interval must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("mcmc.target_accept must be in (0, 1)");
  for (double s : initial_step) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("mcmc.initial_step entries must be > 0");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

Posterior::Posterior(const InferenceData& data, const PriorSpec& prior)
    : data_(data),
      prior_(prior),
      model_(data.parts, data.emissions,
             Theta{0.0, 0.0, 1.0, 1.0, 1.0, data.delta, data.T}) {
  prior_.validate();
  count_valid(data.mask, model_.n());
  if (static_cast<std::size_t>(data.v_obs.size()) != model_.n()) {
    throw DataError("inference: observation vector has the wrong length");
  }
}

ChainState Posterior::evaluate(const Theta& theta) {
  ChainState s;
  s.theta = theta;
  s.theta.delta = data_.delta;
  s.theta.T = data_.T;
  const double lp = prior_.log_density(s.theta);
  if (lp == kNegInf) {
    s.log_lik = kNaN;
    s.log_post = kNegInf;
    return s;
  }
  model_.set_theta(s.theta);
  s.lik = model_.likelihood_parts(data_.v_obs, data_.mask);
  s.log_lik = s.lik.evaluate(s.theta.sigma2, s.theta.T);
  s.log_post = lp + s.log_lik;
  return s;
}

ChainState Posterior::with_sigma2(const ChainState& s, double sigma2) const {
  ChainState out = s;
  out.theta.sigma2 = sigma2;
  const double lp = prior_.log_density(out.theta);
  if (lp == kNegInf) {
    out.log_post = kNegInf;
    return out;
  }
  out.log_lik = out.lik.evaluate(sigma2, out.theta.T);
  out.log_post = lp + out.log_lik;
  return out;
}

double mh_accept_probability(double log_target_new, double log_target_old, double log_jacobian) {
  if (std::isnan(log_target_new) || log_target_new == kNegInf) return 0.0;
  const double log_ratio = log_target_new - log_target_old + log_jacobian;
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);
}

BlockResult metropolis_block_with_increment(Posterior& post, const ChainState& current, int block,
                                            double eps, double u) {
  if (block < 0 || block >= kNumParams) throw DomainError("metropolis: unknown block");
  if (!std::isfinite(current.log_post)) {
    throw SamplerError("metropolis: non-finite log-posterior at the current state");
  }
  Theta proposal = current.theta;
  coord(proposal, block) = coord(current.theta, block) * std::exp(eps);
  ChainState candidate;
  try {
    candidate = block == kSigma2 ? post.with_sigma2(current, proposal.sigma2) : post.evaluate(proposal);
  } catch (const StabilityError&) {
    return {current, false};
  } catch (const NumericalError&) {
    return {current, false};
  }
  // log(theta'/theta) = eps
  const double prob = mh_accept_probability(candidate.log_post, current.log_post, eps);
  if (u < prob) return {candidate, true};
  return {current, false};
}

BlockResult metropolis_block(Posterior& post, const ChainState& current, int block, double step,
                             Rng& rng) {
  const double eps = step * standard_normal(rng);
  const double u = uniform01(rng);
  return metropolis_block_with_increment(post, current, block, eps, u);
}

BetaConditional beta_conditional(Posterior& post, const Theta& theta) {
  const double s = post.prior().beta_scale;
  post.model().set_theta(theta);
  const auto& data = post.data();
  const std::size_t nv = count_valid(data.mask, post.model().n());
  BetaConditional c;
  if (nv == 0) {
    c.mean = 0.0;
    c.variance = s * s;
    return c;
  }
  if (data.emissions.cwiseAbs().maxCoeff() == 0.0) {
    throw SamplerError("gibbs beta: degenerate design (all emissions are zero)");
  }
  const BetaDesign d = post.model().beta_design(data.v_obs, data.mask);
  const double scale = theta.T / theta.sigma2;
  const double ww = d.w.squaredNorm();
  c.variance = 1.0 / (1.0 / (s * s) + scale * ww);
  c.mean = c.variance * scale * d.w.dot(d.r0);
  return c;
}

double truncated_normal_positive(double mean, double sd, Rng& rng) {
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
    throw SamplerError("truncated normal: invalid parameters");
  }
  const double a = -mean / sd;  // standardized lower bound
  if (a < 0.5) {
    for (;;) {
      const double z = standard_normal(rng);
      if (z > a) return mean + sd * z;
    }
  }
  // Exponential proposal (Robert 1995) for far tails.
  const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
  boost::random::exponential_distribution<double> expo(lambda);
  for (;;) {
    const double z = a + expo(rng);
    const double rho = std::exp(-0.5 * (z - lambda) * (z - lambda));
    if (uniform01(rng) <= rho) return mean + sd * z;
  }
}

double gibbs_beta(Posterior& post, const Theta& theta, Rng& rng) {
  const BetaConditional c = beta_conditional(post, theta);
  return truncated_normal_positive(c.mean, std::sqrt(c.variance), rng);
}

namespace {

void run_chain_into(const McmcConfig& config, const InferenceData& data, const PriorSpec& prior,
                    std::uint64_t seed, int chain_id, Trace& trace) {
  trace.chain_id = chain_id;
  trace.seed = seed;
  trace.burn_in = config.burn_in;
  trace.delta = data.delta;
  trace.T = data.T;
  const int iters = config.iterations;
  trace.samples.resize(iters, kNumParams);
  trace.log_post.resize(iters);
  trace.log_lik.resize(iters);
  trace.step_sizes.resize(iters, kNumParams);

  Rng rng = make_rng(seed, static_cast<std::uint64_t>(chain_id));
  Posterior post(data, prior);

  ChainState state;
  if (config.init) {
    state = post.evaluate(*config.init);
  } else {
    // Prior draws until the start has finite posterior density.
    for (int attempt = 0;; ++attempt) {
      Theta t;
      for (int p = 0; p < kNumParams; ++p) coord(t, p) = prior.draw(p, rng);
      t.delta = data.delta;
      t.T = data.T;
      try {
        state = post.evaluate(t);
      } catch (const StabilityError&) {
        state.log_post = kNegInf;
      } catch (const NumericalError&) {
        state.log_post = kNegInf;
      }
      if (std::isfinite(state.log_post)) break;
      if (attempt > 1000) throw SamplerError("mcmc: could not find a finite starting point");
    }
  }
  if (!std::isfinite(state.log_post)) {
    throw SamplerError("mcmc: initial state has non-finite log-posterior");
  }

  std::array<double, kNumParams> step = config.initial_step;
  std::array<int, kNumParams> batch_accept{};
  std::array<long, kNumParams> accept_post{};
  std::array<long, kNumParams> accept_burn{};
  int batches = 0;
  int completed = 0;

  try {
    for (int it = 0; it < iters; ++it) {
      const bool burning = it < config.burn_in;
      for (int p = 0; p < kNumParams; ++p) trace.step_sizes(it, p) = step[p];
      for (int block : {kGamma, kAlpha, kEta, kSigma2}) {
        auto r = metropolis_block(post, state, block, step[block], rng);
        state = r.state;
        if (r.accepted) {
          ++batch_accept[block];
          ++(burning ? accept_burn : accept_post)[block];
        }
      }
      if (config.beta_update == BetaUpdate::Gibbs) {
        Theta t = state.theta;
        t.beta = gibbs_beta(post, t, rng);
        state = post.evaluate(t);
        ++batch_accept[kBeta];
        ++(burning ? accept_burn : accept_post)[kBeta];
      } else {
        auto r = metropolis_block(post, state, kBeta, step[kBeta], rng);
        state = r.state;
        if (r.accepted) {
          ++batch_accept[kBeta];
          ++(burning ? accept_burn : accept_post)[kBeta];
        }
      }
      if (!std::isfinite(state.log_post)) {
        throw SamplerError("mcmc: chain " + std::to_string(chain_id) +
                           " reached a non-finite log-posterior at iteration " + std::to_string(it));
      }
      const auto vals = theta_values(state.theta);
      for (int p = 0; p < kNumParams; ++p) trace.samples(it, p) = vals[p];
      trace.log_post[it] = state.log_post;
      trace.log_lik[it] = state.log_lik;
      completed = it + 1;

      if (burning && (it + 1) % config.adapt_interval == 0) {
        ++batches;
        const double gain = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(batches)));
        for (int p = 0; p < kNumParams; ++p) {
          if (p == kBeta && config.beta_update == BetaUpdate::Gibbs) {
            batch_accept[p] = 0;
            continue;
          }
          const double rate = static_cast<double>(batch_accept[p]) / config.adapt_interval;
          step[p] *= std::exp(rate > config.target_accept ? gain : -gain);
          step[p] = std::clamp(step[p], 1e-5, 10.0);
          batch_accept[p] = 0;
        }
      }
    }
  } catch (...) {
    trace.samples.conservativeResize(completed, kNumParams);
    trace.log_post.conservativeResize(completed);
    trace.log_lik.conservativeResize(completed);
    trace.step_sizes.conservativeResize(completed, kNumParams);
    throw;
  }

  const double n_post = std::max(1, iters - config.burn_in);
  const double n_burn = std::max(1, config.burn_in);
  for (int p = 0; p < kNumParams; ++p) {
    trace.acceptance[p] = static_cast<double>(accept_post[p]) / n_post;
    trace.acceptance_burn_in[p] = config.burn_in > 0 ? static_cast<double>(accept_burn[p]) / n_burn : 0.0;
  }
}

}  // namespace

Trace run_chain(const McmcConfig& config, const InferenceData& data, const PriorSpec& prior,
                std::uint64_t seed, int chain_id) {
  config.validate();
  Trace t;
  run_chain_into(config, data, prior, seed, chain_id, t);
  return t;
}

std::vector<Trace> run_chains(const McmcConfig& config, const InferenceData& data,
                              const PriorSpec& prior, const std::vector<std::uint64_t>& seeds) {
  config.validate();
  prior.validate();
  if (seeds.size() != static_cast<std::size_t>(config.chains)) {
    throw ConfigError("mcmc: need exactly one seed per chain");
  }
  const int n = config.chains;
  std::vector<Trace> traces(static_cast<std::size_t>(n));
  std::vector<std::string> failures(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < n; c = next++) {
      try {
        run_chain_into(config, data, prior, seeds[c], c, traces[c]);
      } catch (const std::exception& e) {
        failures[c] = e.what();
        if (failures[c].empty()) failures[c] = "unknown failure";
      }
    }
  };
  const int workers = std::min(config.threads, n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (int c = 0; c < n; ++c) {
    if (!failures[c].empty()) {
      throw SamplerFailure("mcmc: chain " + std::to_string(c) + " failed: " + failures[c],
                           std::move(traces));
    }
  }
  return traces;
}

namespace {

struct ChainMoments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
};

ChainMoments moments(const std::vector<double>& x) {
  ChainMoments m;
  const double n = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= n;
  for (double v : x) m.var += (v - m.mean) * (v - m.mean);
  m.var /= (n - 1.0);
  return m;
}

// Between/within decomposition over equal-length chains.
void between_within(const std::vector<std::vector<double>>& chains, double& w, double& b,
                    std::vector<ChainMoments>& per_chain) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  per_chain.clear();
  double grand = 0.0;
  w = 0.0;
  for (const auto& c : chains) {
    per_chain.push_back(moments(c));
    grand += per_chain.back().mean;
    w += per_chain.back().var;
  }
  grand /= m;
  w /= m;
  b = 0.0;
  for (const auto& pc : per_chain) b += (pc.mean - grand) * (pc.mean - grand);
  b *= n / (m - 1.0);
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw DiagnosticsError("rhat: no chains");
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());
  const std::size_t half = len / 2;
  if (half < 2) throw DiagnosticsError("rhat: chains too short");
  std::vector<std::vector<double>> split;
  for (const auto& c : chains) {
    split.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    split.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(len - half),
                       c.begin() + static_cast<std::ptrdiff_t>(len));
  }
  double w = 0.0;
  double b = 0.0;
  std::vector<ChainMoments> pc;
  between_within(split, w, b, pc);
  if (!(w > 0.0)) return kNaN;
  const double n = static_cast<double>(half);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw DiagnosticsError("ess: no chains");
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len < 4) throw DiagnosticsError("ess: chains too short");
  std::vector<std::vector<double>> eq;
  for (const auto& c : chains) eq.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(len));
  const double m = static_cast<double>(eq.size());
  const double n = static_cast<double>(len);
  double w = 0.0;
  double b = 0.0;
  std::vector<ChainMoments> pc;
  if (eq.size() >= 2) {
    between_within(eq, w, b, pc);
  } else {
    pc.push_back(moments(eq.front()));
    w = pc.front().var;
  }
  const double var_plus = (n - 1.0) / n * w + b / n;
  if (!(var_plus > 0.0)) return kNaN;

  // Autocovariance at lag t averaged over chains (biased estimator, 1/n).
  auto mean_acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < eq.size(); ++c) {
      const auto& x = eq[c];
      const double mu = pc[c].mean;
      double a = 0.0;
      for (std::size_t i = 0; i + lag < len; ++i) a += (x[i] - mu) * (x[i + lag] - mu);
      s += a / n;
    }
    return s / m;
  };
  auto rho = [&](std::size_t lag) {
    // w is unbiased; convert chain acov to the same footing as in the standard estimator.
    return 1.0 - (w * (n - 1.0) / n - mean_acov(lag)) / var_plus;
  };

  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < len; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);  // initial monotone sequence
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(m * n));
  return m * n / tau;
}

Diagnostics diagnostics(const std::vector<Trace>& traces) {
  if (traces.size() < 2) throw DiagnosticsError("diagnostics: need at least 2 chains");
  for (const auto& t : traces) {
    if (t.iterations() - t.burn_in < 100) {
      throw DiagnosticsError("diagnostics: need at least 100 post-burn-in samples per chain");
    }
  }
  Diagnostics d;
  for (int p = 0; p < kNumParams; ++p) {
    std::vector<std::vector<double>> chains;
    for (const auto& t : traces) {
      std::vector<double> c;
      for (int i = t.burn_in; i < t.iterations(); ++i) c.push_back(t.samples(i, p));
      chains.push_back(std::move(c));
    }
    d.rhat[p] = split_rhat(chains);
    d.ess[p] = effective_sample_size(chains);
    if (std::isnan(d.rhat[p])) {
      d.warnings.push_back(std::string("rhat undefined for ") + kParamNames[p] +
                           " (zero within-chain variance)");
    }
  }
  return d;
}

DicResult dic_from_deviance(const std::vector<double>& deviances, double deviance_at_mean) {
  if (deviances.empty()) throw DiagnosticsError("dic: empty deviance series");
  DicResult r;
  // Accumulate offsets from the first value so a constant series averages exactly.
  const double d0 = deviances.front();
  double acc = 0.0;
  for (double d : deviances) {
    if (!std::isfinite(d)) throw NumericalError("dic: non-finite deviance in trace");
    acc += d - d0;
  }
  r.dbar = d0 + acc / static_cast<double>(deviances.size());
  if (!std::isfinite(deviance_at_mean)) throw NumericalError("dic: non-finite deviance at posterior mean");
  r.d_at_mean = deviance_at_mean;
  r.p_d = r.dbar - r.d_at_mean;
  r.dic = r.dbar + r.p_d;
  return r;
}

Eigen::MatrixXd pooled_samples(const std::vector<Trace>& traces) {
  Eigen::Index rows = 0;
  for (const auto& t : traces) rows += std::max(0, t.iterations() - t.burn_in);
  Eigen::MatrixXd out(rows, kNumParams);
  Eigen::Index r = 0;
  for (const auto& t : traces) {
    const int keep = t.iterations() - t.burn_in;
    if (keep <= 0) continue;
    out.middleRows(r, keep) = t.samples.bottomRows(keep);
    r += keep;
  }
  return out;
}

std::vector<Theta> pooled_thetas(const std::vector<Trace>& traces) {
  std::vector<Theta> out;
  for (const auto& t : traces) {
    for (int i = t.burn_in; i < t.iterations(); ++i) out.push_back(t.theta_at(i));
  }
  return out;
}

DicResult dic(const std::vector<Trace>& traces, const InferenceData& data) {
  if (traces.empty()) throw DiagnosticsError("dic: no traces");
  std::vector<double> dev;
  const Eigen::MatrixXd pooled = pooled_samples(traces);
  for (const auto& t : traces) {
    for (int i = t.burn_in; i < t.iterations(); ++i) dev.push_back(-2.0 * t.log_lik[i]);
  }
  if (dev.empty()) throw DiagnosticsError("dic: no post-burn-in samples");
  std::array<double, kNumParams> v{};
  for (int p = 0; p < kNumParams; ++p) {
    const double x0 = pooled(0, p);
    v[p] = x0 + (pooled.col(p).array() - x0).sum() / static_cast<double>(pooled.rows());
  }
  SulfateModel model(data.parts, data.emissions, theta_from_values(v, data.delta, data.T));
  const double d_mean = -2.0 * model.log_likelihood(data.v_obs, data.mask);
  return dic_from_deviance(dev, d_mean);
}

}  // namespace oufield
