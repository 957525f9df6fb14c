#include "oufield/ou_dist.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/MatrixFunctions>

#include "oufield/error.hpp"

namespace oufield {

namespace {

void require_dense_size(std::size_t n, std::size_t threshold, const char* what) {
  if (n > threshold) {
    throw UnsupportedError(std::string(what) + ": n=" + std::to_string(n) +
                           " exceeds dense threshold " + std::to_string(threshold));
  }
}

double sparse_norm1(const SparseMatrix& a) {
  double best = 0.0;
  for (Eigen::Index c = 0; c < a.outerSize(); ++c) {
    double col = 0.0;
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) col += std::abs(it.value());
    best = std::max(best, col);
  }
  return best;
}

}  // namespace

Eigen::MatrixXd expm_neg(const Eigen::MatrixXd& a, double t) {
  if (a.rows() != a.cols()) throw DomainError("expm: matrix must be square");
  if (t == 0.0) return Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd scaled = -t * a;
  Eigen::MatrixXd e = scaled.exp();
  if (!e.allFinite()) throw NumericalError("expm: non-finite matrix exponential");
  return e;
}

Eigen::MatrixXd expm_action_taylor(const SparseMatrix& a, double t, const Eigen::MatrixXd& v,
                                   double tol) {
  if (a.rows() != a.cols() || a.cols() != v.rows()) throw DomainError("expm_action: size mismatch");
  if (t == 0.0) return v;
  const double norm = std::abs(t) * sparse_norm1(a);
  const auto steps = static_cast<int>(std::max(1.0, std::ceil(norm)));
  const double h = t / steps;
  constexpr int kMaxTerms = 60;
  Eigen::MatrixXd acc = v;
  for (int s = 0; s < steps; ++s) {
    Eigen::MatrixXd term = acc;
    Eigen::MatrixXd sum = acc;
    bool converged = false;
    bool prev_small = false;
    for (int k = 1; k <= kMaxTerms; ++k) {
      term = (-h / k) * (a * term);
      sum += term;
      const double tn = term.cwiseAbs().maxCoeff();
      const double sn = sum.cwiseAbs().maxCoeff();
      const bool small = tn <= tol * std::max(sn, 1e-300);
      if (small && prev_small) {
        converged = true;
        break;
      }
      prev_small = small;
    }
    if (!converged || !sum.allFinite()) {
      throw NumericalError("expm_action: Taylor series did not converge");
    }
    acc = std::move(sum);
  }
  return acc;
}

Eigen::MatrixXd expm_action(const SparseOperator& a, double t, const Eigen::MatrixXd& v,
                            std::size_t dense_threshold) {
  if (static_cast<std::size_t>(v.rows()) != a.n()) throw DomainError("expm_action: size mismatch");
  if (t == 0.0) return v;
  if (a.n() <= dense_threshold) return expm_neg(a.dense(), t) * v;
  return expm_action_taylor(a.matrix(), t, v);
}

Eigen::VectorXd sparse_solve(const SparseOperator& a, const Eigen::VectorXd& rhs) {
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(a.matrix());
  if (lu.info() != Eigen::Success) throw StabilityError("solve: operator is singular");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw StabilityError("solve: sparse solve failed");
  return x;
}

Eigen::MatrixXd OUSystem::noise_covariance() const {
  const auto n = static_cast<Eigen::Index>(this->n());
  if (!b) return sigma2 * Eigen::MatrixXd::Identity(n, n);
  return sigma2 * (*b) * b->transpose();
}

void OUSystem::validate(bool allow_noiseless) const {
  const auto n = static_cast<Eigen::Index>(a.n());
  if (m.size() != n) throw DomainError("OU system: source vector has the wrong length");
  if (!std::isfinite(sigma2) || sigma2 < 0.0 || (sigma2 == 0.0 && !allow_noiseless)) {
    throw DomainError(allow_noiseless ? "OU system: sigma2 must be >= 0" : "OU system: sigma2 must be > 0");
  }
  if (b && (b->rows() != n || b->cols() != n)) throw DomainError("OU system: B must be n x n");
  if (!m.allFinite()) throw DomainError("OU system: source vector must be finite");
}

const char* to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::Transient: return "transient";
    case Provenance::Stationary: return "stationary";
    case Provenance::TimeAveragedExact: return "time-averaged-exact";
    case Provenance::TimeAveragedSar: return "time-averaged-SAR";
  }
  return "unknown";
}

GaussianField::GaussianField(Eigen::VectorXd mean, Eigen::MatrixXd covariance, Provenance provenance)
    : mean_(std::move(mean)), provenance_(provenance) {
  if (covariance.rows() != mean_.size() || covariance.cols() != mean_.size()) {
    throw DomainError("gaussian field: covariance size mismatch");
  }
  if (!mean_.allFinite()) throw NumericalError("gaussian field: non-finite mean");
  const double scale = covariance.cwiseAbs().maxCoeff();
  const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(scale, 1e-300) && asym > 0.0) {
    throw NumericalError("gaussian field: covariance is not symmetric");
  }
  second_moment_ = std::move(covariance);
}

GaussianField::GaussianField(Eigen::VectorXd mean, SparseMatrix precision, Provenance provenance)
    : mean_(std::move(mean)), provenance_(provenance) {
  if (precision.rows() != mean_.size() || precision.cols() != mean_.size()) {
    throw DomainError("gaussian field: precision size mismatch");
  }
  if (!mean_.allFinite()) throw NumericalError("gaussian field: non-finite mean");
  precision.makeCompressed();
  auto factor = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(precision);
  if (factor->info() != Eigen::Success) {
    throw StabilityError("gaussian field: precision is not positive definite");
  }
  second_moment_ = SparsePrecision{std::move(precision), std::move(factor)};
}

const Eigen::MatrixXd& GaussianField::covariance() const {
  if (const auto* c = std::get_if<Eigen::MatrixXd>(&second_moment_)) return *c;
  throw UnsupportedError("gaussian field: represented by a sparse precision");
}

const SparsePrecision& GaussianField::precision() const {
  if (const auto* p = std::get_if<SparsePrecision>(&second_moment_)) return *p;
  throw UnsupportedError("gaussian field: represented by a dense covariance");
}

Eigen::MatrixXd GaussianField::dense_covariance(std::size_t dense_threshold) const {
  if (has_dense_covariance()) return covariance();
  require_dense_size(n(), dense_threshold, "dense_covariance");
  const auto& p = precision();
  const auto nn = static_cast<Eigen::Index>(n());
  Eigen::MatrixXd inv = p.factor->solve(Eigen::MatrixXd::Identity(nn, nn));
  return 0.5 * (inv + inv.transpose());
}

double GaussianField::log_density(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw DomainError("gaussian field: point has the wrong length");
  const Eigen::VectorXd r = x - mean_;
  const double nn = static_cast<double>(n());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  if (has_dense_covariance()) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance());
    if (llt.info() != Eigen::Success) throw NumericalError("gaussian field: covariance not SPD");
    const Eigen::VectorXd z = llt.matrixL().solve(r);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (nn * log2pi + logdet + z.squaredNorm());
  }
  const auto& p = precision();
  const double quad = r.dot(p.q * r);
  double logdet_q = 0.0;
  const SparseMatrix l = p.factor->matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet_q += 2.0 * std::log(l.coeff(i, i));
  return -0.5 * (nn * log2pi - logdet_q + quad);
}

GaussianField transient(const OUSystem& sys, const Eigen::VectorXd& y0, double t,
                        std::size_t dense_threshold) {
  sys.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("transient: t must be finite and >= 0");
  require_dense_size(sys.n(), dense_threshold, "transient");
  if (y0.size() != static_cast<Eigen::Index>(sys.n())) throw DomainError("transient: y0 has the wrong length");
  const Eigen::MatrixXd a = sys.a.dense();
  const Eigen::MatrixXd e = expm_neg(a, t);
  const Eigen::VectorXd eq = sparse_solve(sys.a, sys.m);
  const Eigen::VectorXd mean = e * y0 + eq - e * eq;
  const Eigen::MatrixXd sigma = solve_lyapunov(sys.a, sys.noise_covariance(), dense_threshold);
  Eigen::MatrixXd cov = sigma - e * sigma * e.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return GaussianField(mean, std::move(cov), Provenance::Transient);
}

GaussianField stationary(const OUSystem& sys, std::size_t dense_threshold) {
  sys.validate();
  Eigen::VectorXd mean = sparse_solve(sys.a, sys.m);
  if (sys.identity_noise() && sys.a.symmetric()) {
    SparseMatrix q = (2.0 / sys.sigma2) * sys.a.matrix();
    try {
      return GaussianField(std::move(mean), std::move(q), Provenance::Stationary);
    } catch (const StabilityError&) {
      throw StabilityError("stationary: symmetric A is not positive definite (process is not stable)");
    }
  }
  require_dense_size(sys.n(), dense_threshold, "stationary");
  Eigen::MatrixXd sigma = solve_lyapunov(sys.a, sys.noise_covariance(), dense_threshold);
  return GaussianField(std::move(mean), std::move(sigma), Provenance::Stationary);
}

GaussianField time_avg_exact(const OUSystem& sys, double horizon, std::size_t dense_threshold) {
  sys.validate();
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("time_avg_exact: T must be > 0");
  require_dense_size(sys.n(), dense_threshold, "time_avg_exact");
  const auto n = static_cast<Eigen::Index>(sys.n());
  const Eigen::MatrixXd a = sys.a.dense();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::MatrixXd a_inv = lu.inverse();
  if (!a_inv.allFinite()) throw StabilityError("time_avg_exact: A is singular");
  const Eigen::MatrixXd a_inv2 = a_inv * a_inv;
  const Eigen::MatrixXd at_inv2 = a_inv2.transpose();
  const Eigen::MatrixXd sigma = solve_lyapunov(sys.a, sys.noise_covariance(), dense_threshold);
  const Eigen::MatrixXd e = expm_neg(a, horizon);

  // (sigma^2 / T) (A^T (B B^T)^{-1} A)^{-1} = (1 / T) A^{-1} (sigma^2 B B^T) A^{-T}
  const Eigen::MatrixXd phi = (a_inv * sys.noise_covariance() * a_inv.transpose()) / horizon;
  const Eigen::MatrixXd left = sigma * (id - e.transpose()) * at_inv2;
  const Eigen::MatrixXd right = (id - e) * a_inv2 * sigma;
  Eigen::MatrixXd psi = phi - (left + right) / (horizon * horizon);

  const double scale = psi.norm();
  const double defect = (psi - psi.transpose()).norm();
  if (defect > 1e-8 * std::max(scale, 1e-300) && defect > 0.0) {
    throw NumericalError("time_avg_exact: asymmetry defect " + std::to_string(defect / scale) +
                         " exceeds 1e-8 relative");
  }
  psi = 0.5 * (psi + psi.transpose());
  Eigen::VectorXd mean = sparse_solve(sys.a, sys.m);
  return GaussianField(std::move(mean), std::move(psi), Provenance::TimeAveragedExact);
}

GaussianField time_avg_sar(const OUSystem& sys, double horizon) {
  sys.validate();
  if (!sys.identity_noise()) throw UnsupportedError("time_avg_sar: requires B = I");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("time_avg_sar: T must be > 0");
  Eigen::VectorXd mean = sparse_solve(sys.a, sys.m);
  const SparseMatrix at = sys.a.matrix().transpose();
  SparseMatrix q = (horizon / sys.sigma2) * (at * sys.a.matrix());
  return GaussianField(std::move(mean), std::move(q), Provenance::TimeAveragedSar);
}

double phi_error_bound(double delta, double horizon) {
  if (!(delta > 0.0) || !(horizon > 0.0) || !std::isfinite(delta) || !std::isfinite(horizon)) {
    throw DomainError("phi_error_bound: delta and T must be > 0");
  }
  return -std::expm1(-delta * horizon) / (horizon * horizon * delta * delta * delta);
}

}  // namespace oufield
