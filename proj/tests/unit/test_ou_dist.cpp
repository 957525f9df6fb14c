#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "oufield/error.hpp"
#include "oufield/ou_dist.hpp"

using namespace oufield;
using testing_support::rel_frobenius;

namespace {

SparseOperator scalar(double a) { return SparseOperator::from_dense(Eigen::MatrixXd::Constant(1, 1, a)); }

OUSystem scalar_system(double a, double m, double sigma2) {
  return OUSystem{scalar(a), Eigen::VectorXd::Constant(1, m), std::nullopt, sigma2};
}

Eigen::MatrixXd random_stable(int n, std::mt19937_64& gen) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = z(gen);
  // Shift past the spectral abscissa.
  const Eigen::VectorXcd ev = r.eigenvalues();
  const double shift = -ev.real().minCoeff() + 0.5;
  return r + shift * Eigen::MatrixXd::Identity(n, n);
}

SparseOperator strip_d_plus_i() {
  const Grid g = Grid::strip(3, 1.0);
  const auto parts = assemble_components(g, FaceWind(3, 1));
  return assemble_transport(parts.diffusion, parts.advection, 1.0, 0.0, 1.0);
}

}  // namespace

TEST_CASE("scalar Lyapunov") {
  const Eigen::MatrixXd x = solve_lyapunov(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::MatrixXd::Constant(1, 1, 1.0));
  CHECK(x(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("symmetric shortcut agrees with Bartels-Stewart") {
  const SparseOperator a = strip_d_plus_i();
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd shortcut = solve_lyapunov(a, q);
  const Eigen::MatrixXd bs = solve_lyapunov(a.dense(), q);
  CHECK(rel_frobenius(shortcut, bs) <= 1e-10);
  CHECK(rel_frobenius(shortcut, 0.5 * a.dense().inverse()) <= 1e-12);
}

TEST_CASE("Bartels-Stewart residual and Kronecker oracle on random systems") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + trial % 9;
    const Eigen::MatrixXd a = random_stable(n, gen);
    Eigen::MatrixXd b = Eigen::MatrixXd::Random(n, n);
    const Eigen::MatrixXd q = b * b.transpose() + Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd x = solve_lyapunov(a, q);
    CHECK(lyapunov_residual(a, x, q) <= 1e-8 * q.norm());
    CHECK(rel_frobenius(x, oracles::lyapunov_kron(a, q)) <= 1e-8);
  }
}

TEST_CASE("unstable operators are rejected") {
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(solve_lyapunov(a, Eigen::MatrixXd::Identity(2, 2)), StabilityError);
}

TEST_CASE("transient law") {
  SUBCASE("t = 0 returns the initial state") {
    const OUSystem sys{strip_d_plus_i(), Eigen::VectorXd::Ones(3), std::nullopt, 2.0};
    Eigen::VectorXd y0(3);
    y0 << 1.0, -2.0, 4.0;
    const GaussianField f = transient(sys, y0, 0.0);
    CHECK((f.mean() - y0).norm() == doctest::Approx(0.0));
    CHECK(f.covariance().norm() <= 1e-14);
  }
  SUBCASE("scalar closed form") {
    const GaussianField f = transient(scalar_system(1.0, 0.0, 1.0), Eigen::VectorXd::Constant(1, 3.0), 1.0);
    CHECK(std::abs(f.mean()[0] - oracles::scalar_transient_mean(1.0, 0.0, 3.0, 1.0)) <= 1e-10);
    CHECK(std::abs(f.covariance()(0, 0) - oracles::scalar_transient_var(1.0, 1.0, 1.0)) <= 1e-10);
    CHECK(f.mean()[0] == doctest::Approx(1.10364).epsilon(1e-5));
    CHECK(f.covariance()(0, 0) == doctest::Approx(0.43233).epsilon(1e-5));
  }
  SUBCASE("long horizon reaches the stationary law") {
    const auto parts = testing_support::components(3, 3, 1.0, 1.0, 0.5);
    const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 1.0, 1.0, 0.5);
    Eigen::VectorXd m = Eigen::VectorXd::LinSpaced(9, 0.0, 2.0);
    const OUSystem sys{a, m, std::nullopt, 1.5};
    const double t = 50.0 / min_real_eigenvalue(a);
    const GaussianField ft = transient(sys, Eigen::VectorXd::Constant(9, 10.0), t);
    const GaussianField fs = stationary(sys);
    CHECK((ft.mean() - fs.mean()).norm() <= 1e-6 * fs.mean().norm());
    CHECK(rel_frobenius(ft.covariance(), fs.dense_covariance()) <= 1e-6);
  }
}

TEST_CASE("stationary law") {
  SUBCASE("scalar") {
    const GaussianField f = stationary(scalar_system(2.0, 4.0, 1.0));
    CHECK(f.mean()[0] == doctest::Approx(2.0));
    CHECK(f.dense_covariance()(0, 0) == doctest::Approx(0.25));
  }
  SUBCASE("constant mode of D + I") {
    const GaussianField f = stationary(OUSystem{strip_d_plus_i(), Eigen::VectorXd::Ones(3), std::nullopt, 1.0});
    CHECK((f.mean() - Eigen::VectorXd::Ones(3)).norm() <= 1e-12);
  }
  SUBCASE("symmetric operator with B = I gives the sparse precision (2 / sigma^2) A") {
    const SparseOperator a = strip_d_plus_i();
    const GaussianField f = stationary(OUSystem{a, Eigen::VectorXd::Zero(3), std::nullopt, 3.0});
    REQUIRE_FALSE(f.has_dense_covariance());
    CHECK((Eigen::MatrixXd(f.precision().q) - (2.0 / 3.0) * a.dense()).norm() <= 1e-14);
  }
  SUBCASE("nonsymmetric operator matches the Kronecker oracle") {
    const auto parts = testing_support::components(3, 2, 1.0, 2.0, -1.0);
    const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 0.7, 1.3, 0.4);
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(6, 6);
    b(0, 1) = 0.5;
    const OUSystem sys{a, Eigen::VectorXd::Zero(6), b, 2.0};
    const GaussianField f = stationary(sys);
    CHECK(rel_frobenius(f.covariance(), oracles::lyapunov_kron(a.dense(), 2.0 * b * b.transpose())) <= 1e-10);
  }
}

TEST_CASE("time-averaged law") {
  SUBCASE("scalar value") {
    const GaussianField f = time_avg_exact(scalar_system(2.0, 0.0, 1.0), 1.0);
    CHECK(std::abs(f.covariance()(0, 0) - oracles::scalar_time_average_var(2.0, 1.0, 1.0)) <= 1e-12);
    CHECK(f.covariance()(0, 0) == doctest::Approx(0.141917).epsilon(1e-6));
  }
  SUBCASE("shrinks like 1/T and keeps the mean") {
    const OUSystem sys = scalar_system(2.0, 4.0, 1.0);
    double prev = 1e300;
    for (double t : {1.0, 10.0, 100.0, 1000.0}) {
      const GaussianField f = time_avg_exact(sys, t);
      CHECK(f.mean()[0] == doctest::Approx(2.0));
      CHECK(f.covariance()(0, 0) <= 1.0 / (4.0 * t) + 1e-15);
      CHECK(f.covariance()(0, 0) < prev);
      prev = f.covariance()(0, 0);
    }
  }
  SUBCASE("double quadrature of the stationary kernel on a 3 x 3 grid") {
    const auto parts = testing_support::components(3, 3, 1.0, 0.0, 0.0);
    const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 1.0, 0.0, 1.0);
    const OUSystem sys{a, Eigen::VectorXd::Zero(9), std::nullopt, 1.0};
    const Eigen::MatrixXd psi = time_avg_exact(sys, 1.0).covariance();
    const Eigen::MatrixXd quad =
        oracles::time_average_quadrature(a.dense(), 0.5 * a.dense().inverse(), 1.0, 400);
    CHECK(rel_frobenius(psi, quad) <= 1e-4);
  }
  SUBCASE("nonsymmetric kernel quadrature") {
    const auto parts = testing_support::components(3, 3, 1.0, 1.5, 0.5);
    const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 1.0, 1.0, 1.0);
    const OUSystem sys{a, Eigen::VectorXd::Zero(9), std::nullopt, 1.0};
    const Eigen::MatrixXd psi = time_avg_exact(sys, 2.0).covariance();
    const Eigen::MatrixXd s = oracles::lyapunov_kron(a.dense(), Eigen::MatrixXd::Identity(9, 9));
    CHECK(rel_frobenius(psi, oracles::time_average_quadrature(a.dense(), s, 2.0, 600)) <= 1e-4);
  }
}

TEST_CASE("SAR approximation") {
  const GaussianField f = time_avg_sar(scalar_system(2.0, 0.0, 1.0), 1.0);
  CHECK(f.dense_covariance()(0, 0) == doctest::Approx(0.25));
  const auto parts = testing_support::components(4, 4, 1.0, 1.0, 1.0);
  const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 1.0, 1.0, 2.0);
  const GaussianField g = time_avg_sar(OUSystem{a, Eigen::VectorXd::Zero(16), std::nullopt, 2.0}, 0.5);
  const Eigen::MatrixXd ad = a.dense();
  CHECK(rel_frobenius(g.dense_covariance(), (2.0 / 0.5) * (ad.transpose() * ad).inverse()) <= 1e-10);
}

TEST_CASE("error bound") {
  CHECK(phi_error_bound(50.0, 1.0) == doctest::Approx(8.0e-6).epsilon(1e-12));
  CHECK(phi_error_bound(50.0, 1.0) <= 8.0e-6);
  CHECK(phi_error_bound(1.0, 0.01) > phi_error_bound(1.0, 0.1));
  CHECK_THROWS(phi_error_bound(0.0, 1.0));
  const auto parts = testing_support::components(4, 4, 1.0, 0.0, 0.0);
  for (double delta : {1.0, 5.0, 50.0}) {
    for (double t : {0.1, 1.0}) {
      const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 1.0, 0.0, delta);
      const OUSystem sys{a, Eigen::VectorXd::Zero(16), std::nullopt, 1.0};
      const Eigen::MatrixXd diff = time_avg_exact(sys, t).covariance() - time_avg_sar(sys, t).dense_covariance();
      const double gap = Eigen::JacobiSVD<Eigen::MatrixXd>(diff).singularValues()(0);
      // The bound is attained along the constant vector.
      CHECK(gap <= phi_error_bound(delta, t) * (1.0 + 1e-9));
      CHECK(gap == doctest::Approx(phi_error_bound(delta, t)).epsilon(1e-6));
    }
  }
}

TEST_CASE("matrix exponential action") {
  SUBCASE("t = 0") {
    const Eigen::MatrixXd v = Eigen::MatrixXd::Random(3, 2);
    CHECK((expm_action(strip_d_plus_i(), 0.0, v) - v).norm() == 0.0);
  }
  SUBCASE("diagonal") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 2.0;
    const Eigen::MatrixXd e = expm_neg(a, 1.0);
    CHECK(e(0, 0) == doctest::Approx(std::exp(-1.0)));
    CHECK(e(1, 1) == doctest::Approx(std::exp(-2.0)));
    CHECK(e(0, 1) == 0.0);
  }
  SUBCASE("diagonal plus nilpotent") {
    const double a = 0.7, t = 1.3;
    Eigen::MatrixXd m(3, 3);
    m << a, 1, 0, 0, a, 1, 0, 0, a;
    Eigen::MatrixXd expect(3, 3);
    expect << 1, -t, t * t / 2, 0, 1, -t, 0, 0, 1;
    expect *= std::exp(-a * t);
    CHECK((expm_neg(m, t) - expect).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(3, 3);
    CHECK((expm_action_taylor(SparseOperator::from_dense(m).matrix(), t, v) - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("Taylor action agrees with the dense exponential") {
    const auto parts = testing_support::components(6, 5, 1.0, 1.0, -2.0);
    const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 1.0, 1.0, 3.0);
    const Eigen::MatrixXd v = Eigen::MatrixXd::Random(30, 3);
    const Eigen::MatrixXd dense = expm_neg(a.dense(), 0.8) * v;
    CHECK(rel_frobenius(expm_action_taylor(a.matrix(), 0.8, v), dense) <= 1e-12);
    CHECK(rel_frobenius(expm_action(a, 0.8, v, 10), dense) <= 1e-12);
  }
}

TEST_CASE("Gaussian field log density: sparse precision vs dense covariance") {
  const auto parts = testing_support::components(4, 4, 1.0, 0.0, 0.0);
  const SparseOperator a = assemble_transport(parts->diffusion, parts->advection, 2.0, 0.0, 1.5);
  const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(16, -1.0, 1.0);
  const GaussianField sparse(mu, SparseMatrix(a.matrix()), Provenance::Stationary);
  const Eigen::MatrixXd cov = a.dense().inverse();
  const GaussianField dense(mu, cov, Provenance::Stationary);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd x(16);
    for (auto& xi : x) xi = z(gen);
    CHECK(std::abs(sparse.log_density(x) - oracles::mvn_log_density(x, mu, cov)) <= 1e-8);
    CHECK(std::abs(dense.log_density(x) - oracles::mvn_log_density(x, mu, cov)) <= 1e-8);
  }
}

TEST_CASE("invalid systems") {
  OUSystem sys = scalar_system(1.0, 0.0, -1.0);
  CHECK_THROWS(sys.validate());
  OUSystem wrong{strip_d_plus_i(), Eigen::VectorXd::Zero(2), std::nullopt, 1.0};
  CHECK_THROWS(stationary(wrong));
}
