#include "oufield/sulfate_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "oufield/error.hpp"

namespace oufield {

void Theta::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(gamma) || gamma < 0.0) throw DomainError("theta: gamma must be finite and >= 0");
  if (!finite(alpha) || alpha < 0.0) throw DomainError("theta: alpha must be finite and >= 0");
  if (!finite(eta) || !(eta > 0.0)) throw DomainError("theta: eta must be > 0");
  if (!finite(beta) || !(beta > 0.0)) throw DomainError("theta: beta must be > 0");
  if (!finite(sigma2) || !(sigma2 > 0.0)) throw DomainError("theta: sigma2 must be > 0");
  if (!finite(delta) || !(delta > 0.0)) throw DomainError("theta: delta must be > 0");
  if (!finite(T) || !(T > 0.0)) throw DomainError("theta: T must be > 0");
}

std::size_t count_valid(const Mask& mask, std::size_t n) {
  if (mask.empty()) return n;
  if (mask.size() != n) throw DataError("mask: length does not match the grid");
  std::size_t c = 0;
  for (auto m : mask) c += m ? 1 : 0;
  return c;
}

double LikelihoodParts::evaluate(double sigma2, double horizon) const {
  if (n_valid == 0) return 0.0;
  const double nv = static_cast<double>(n_valid);
  return 0.5 * nv * std::log(horizon / (2.0 * std::numbers::pi * sigma2)) + log_det -
         horizon / (2.0 * sigma2) * ssr;
}

SulfateModel::SulfateModel(std::shared_ptr<const TransportComponents> parts,
                           Eigen::VectorXd emissions, Theta theta)
    : parts_(std::move(parts)), x_(std::move(emissions)), theta_(theta) {
  if (!parts_) throw DomainError("sulfate model: missing transport components");
  if (parts_->diffusion.n() != parts_->advection.n()) {
    throw DomainError("sulfate model: D and C sizes differ");
  }
  if (static_cast<std::size_t>(x_.size()) != n()) {
    throw DataError("sulfate model: emissions vector has the wrong length");
  }
  if (!x_.allFinite() || (x_.array() < 0.0).any()) {
    throw DataError("sulfate model: emissions must be finite and >= 0");
  }
  theta_.validate();
}

void SulfateModel::set_theta(const Theta& theta) {
  theta.validate();
  theta_ = theta;
}

void SulfateModel::refresh(Factor& f, double rate) const {
  if (f.lu && f.key_gamma == theta_.gamma && f.key_alpha == theta_.alpha && f.key_rate == rate) {
    return;
  }
  f.lu.reset();
  f.a = assemble_transport(parts_->diffusion, parts_->advection, theta_.gamma, theta_.alpha, rate);
  auto lu = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
  lu->analyzePattern(f.a.matrix());
  lu->factorize(f.a.matrix());
  if (lu->info() != Eigen::Success) throw StabilityError("sulfate model: transport operator is singular");
  const double sign = lu->signDeterminant();
  if (!(sign > 0.0)) {
    throw NumericalError("sulfate model: LU reports det A <= 0 for a stable operator");
  }
  f.log_abs_det = lu->logAbsDeterminant();
  if (!std::isfinite(f.log_abs_det)) throw NumericalError("sulfate model: non-finite log determinant");
  f.lu = std::move(lu);
  f.key_gamma = theta_.gamma;
  f.key_alpha = theta_.alpha;
  f.key_rate = rate;
}

Eigen::VectorXd SulfateModel::solve(Factor& f, double rate, const Eigen::VectorXd& rhs) const {
  refresh(f, rate);
  Eigen::VectorXd x = f.lu->solve(rhs);
  if (f.lu->info() != Eigen::Success || !x.allFinite()) {
    throw StabilityError("sulfate model: sparse solve failed");
  }
  return x;
}

const SparseOperator& SulfateModel::a_y() const {
  refresh(fy_, theta_.delta);
  return fy_.a;
}

const SparseOperator& SulfateModel::a_z() const {
  refresh(fz_, theta_.eta);
  return fz_.a;
}

Eigen::VectorXd SulfateModel::solve_y(const Eigen::VectorXd& rhs) const { return solve(fy_, theta_.delta, rhs); }
Eigen::VectorXd SulfateModel::solve_z(const Eigen::VectorXd& rhs) const { return solve(fz_, theta_.eta, rhs); }

Eigen::VectorXd SulfateModel::so2_steady_state() const { return so2_steady_state_for(x_); }

Eigen::VectorXd SulfateModel::so2_steady_state_for(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != n()) throw DataError("so2: emissions vector has the wrong length");
  return solve_z(theta_.beta * x);
}

Eigen::VectorXd SulfateModel::so4_mean() const { return so4_mean_for(x_); }

Eigen::VectorXd SulfateModel::so4_mean_for(const Eigen::VectorXd& x) const {
  return solve_y(theta_.eta * so2_steady_state_for(x));
}

double SulfateModel::log_abs_det() const {
  refresh(fy_, theta_.delta);
  return fy_.log_abs_det;
}

void SulfateModel::check_observations(const Eigen::VectorXd& v_obs, const Mask& mask) const {
  if (static_cast<std::size_t>(v_obs.size()) != n()) {
    throw DataError("likelihood: observation vector has the wrong length");
  }
  count_valid(mask, n());
  for (Eigen::Index k = 0; k < v_obs.size(); ++k) {
    const bool valid = mask.empty() || mask[static_cast<std::size_t>(k)];
    if (valid && !std::isfinite(v_obs[k])) {
      throw DataError("likelihood: non-finite observation in valid cell " + std::to_string(k));
    }
  }
}

LikelihoodParts SulfateModel::likelihood_parts(const Eigen::VectorXd& v_obs, const Mask& mask) const {
  check_observations(v_obs, mask);
  LikelihoodParts out;
  out.n_valid = count_valid(mask, n());
  if (out.n_valid == 0) return out;

  const Eigen::VectorXd eta_z = theta_.eta * so2_steady_state();
  Eigen::VectorXd v = v_obs;
  if (out.n_valid < n()) {
    // Masked cells are filled with the model mean, so they contribute no
    // residual of their own; their rows are then dropped.
    const Eigen::VectorXd mu = solve_y(eta_z);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (!mask[static_cast<std::size_t>(k)]) v[k] = mu[k];
    }
  }
  const Eigen::VectorXd r = a_y().matrix() * v - eta_z;
  double ssr = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    if (mask.empty() || mask[static_cast<std::size_t>(k)]) ssr += r[k] * r[k];
  }
  out.ssr = ssr;
  out.log_det = static_cast<double>(out.n_valid) / static_cast<double>(n()) * log_abs_det();
  return out;
}

double SulfateModel::log_likelihood(const Eigen::VectorXd& v_obs, const Mask& mask) const {
  return likelihood_parts(v_obs, mask).evaluate(theta_.sigma2, theta_.T);
}

BetaDesign SulfateModel::beta_design(const Eigen::VectorXd& v_obs, const Mask& mask) const {
  check_observations(v_obs, mask);
  const std::size_t nv = count_valid(mask, n());
  BetaDesign d;
  d.r0.resize(static_cast<Eigen::Index>(nv));
  d.w.resize(static_cast<Eigen::Index>(nv));
  if (nv == 0) return d;

  // Mean at beta = 1; mean(beta) = beta * u.
  const Eigen::VectorXd z1 = solve_z(x_);
  const Eigen::VectorXd u = solve_y(theta_.eta * z1);
  Eigen::VectorXd v_valid = v_obs;
  Eigen::VectorXd u_valid = u;
  for (Eigen::Index k = 0; k < v_valid.size(); ++k) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(k)]) {
      v_valid[k] = 0.0;
      u_valid[k] = 0.0;
    }
  }
  const SparseMatrix& a = a_y().matrix();
  const Eigen::VectorXd r0 = a * v_valid;
  const Eigen::VectorXd w = a * u_valid;
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < r0.size(); ++k) {
    if (mask.empty() || mask[static_cast<std::size_t>(k)]) {
      d.r0[row] = r0[k];
      d.w[row] = w[k];
      ++row;
    }
  }
  return d;
}

Eigen::VectorXd SulfateModel::sample_field(Rng& rng) const { return sample_field_for(x_, rng, true); }

Eigen::VectorXd SulfateModel::sample_field_for(const Eigen::VectorXd& x, Rng& rng, bool include_noise) const {
  Eigen::VectorXd mu = so4_mean_for(x);
  if (!include_noise) return mu;
  Eigen::VectorXd w(static_cast<Eigen::Index>(n()));
  fill_standard_normal(rng, w);
  w *= std::sqrt(theta_.sigma2 / theta_.T);
  return mu + solve_y(w);
}

}  // namespace oufield
