#pragma once

// Reference computations that share no code with the library.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace oracles {

// Stationary covariance from the vectorized Lyapunov system
// (I (x) A + A (x) I) vec(S) = vec(Q); only for small n.
inline Eigen::MatrixXd lyapunov_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) += a(i, j) * id;
      k.block(i * n, j * n, n, n) += id(i, j) * a;
    }
  }
  const Eigen::VectorXd s = k.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(q.data(), n * n));
  return Eigen::Map<const Eigen::MatrixXd>(s.data(), n, n);
}

// (1/T^2) int_0^T int_0^T k(s, t) ds dt for the stationary OU kernel
// k(s, t) = e^{-A(t-s)} S for t >= s and S e^{-A^T (s-t)} otherwise, by the
// product trapezoid rule on (nodes x nodes) points.
inline Eigen::MatrixXd time_average_quadrature(const Eigen::MatrixXd& a, const Eigen::MatrixXd& s, double horizon,
                                               int nodes) {
  const int m = nodes - 1;
  const double h = horizon / m;
  std::vector<double> w(nodes, h);
  w.front() = w.back() = h / 2.0;
  // c[k] = sum_i w_i w_{i+k}: total weight of node pairs at lag k.
  std::vector<double> c(nodes, 0.0);
  for (int k = 0; k < nodes; ++k) {
    for (int i = 0; i + k < nodes; ++i) c[k] += w[i] * w[i + k];
  }
  const Eigen::MatrixXd step = (-a * h).exp();
  Eigen::MatrixXd e = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd sum = c[0] * s;
  for (int k = 1; k < nodes; ++k) {
    e = e * step;
    const Eigen::MatrixXd es = e * s;
    sum += c[k] * (es + es.transpose());
  }
  return sum / (horizon * horizon);
}

// Scalar OU pieces in closed form.
inline double scalar_transient_mean(double a, double m, double y0, double t) {
  return m / a + (y0 - m / a) * std::exp(-a * t);
}
inline double scalar_transient_var(double a, double sigma2, double t) {
  return sigma2 * (1.0 - std::exp(-2.0 * a * t)) / (2.0 * a);
}
// Variance of (1/T) int_0^T y dt for a stationary scalar OU: the double
// integral of (sigma^2 / 2a) e^{-a|t-s|} over the square, done by hand.
inline double scalar_time_average_var(double a, double sigma2, double horizon) {
  const double at = a * horizon;
  return sigma2 / (a * a * horizon) * (1.0 - (1.0 - std::exp(-at)) / at);
}

// Dense multivariate normal log density via LDLT.
inline double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd z = llt.matrixL().solve(x - mu);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + logdet + z.squaredNorm());
}

}  // namespace oracles
