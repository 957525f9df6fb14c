#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "fixtures.hpp"
#include "oufield/transport.hpp"

using namespace oufield;
using testing_support::random_wind;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("diffusion on a 3 x 1 strip") {
  const Grid g = Grid::strip(3, 1.0);
  Eigen::Matrix3d expect;
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK(max_abs(assemble_diffusion(g).dense() - expect) == 0.0);
}

TEST_CASE("diffusion on a 2 x 2 grid") {
  const Grid g = Grid::build(2, 2, {}, 1.0, 1.0);
  const Eigen::MatrixXd d = assemble_diffusion(g).dense();
  for (int k = 0; k < 4; ++k) {
    CHECK(d.row(k).sum() == doctest::Approx(0.0));
    CHECK(d(k, k) == 2.0);
  }
  CHECK(max_abs(d - d.transpose()) == 0.0);
}

TEST_CASE("diffusion nullspace and symmetry with anisotropic spacing") {
  for (auto boundary : {Boundary::ZeroFlux, Boundary::Periodic}) {
    const Grid g = Grid::build(6, 4, {}, 2.0, 3.0);
    const SparseOperator d = assemble_diffusion(g, boundary);
    CHECK(d.symmetric());
    CHECK(max_abs(d.apply(Eigen::VectorXd::Ones(24))) <= 1e-14);
    const Eigen::MatrixXd m = d.dense();
    CHECK(max_abs(m - m.transpose()) == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("upwind row on a 3 x 1 strip with eastward wind") {
  const Grid g = Grid::strip(3, 1.0);
  FaceWind w(3, 1);
  w.u(1, 0) = 2.0;
  w.u(2, 0) = 2.0;
  const Eigen::MatrixXd c = assemble_advection(g, w).dense();
  CHECK(c(1, 0) == -2.0);
  CHECK(c(1, 1) == 2.0);
  CHECK(c(1, 2) == 0.0);
  // Donor cell 0 loses what cell 1 gains.
  CHECK(c(0, 0) == 2.0);
  CHECK(c(2, 2) == 0.0);
  CHECK(c(2, 1) == -2.0);
}

TEST_CASE("upwind row with westward wind takes the east neighbor") {
  const Grid g = Grid::strip(3, 2.0);
  FaceWind w(3, 1);
  w.u(1, 0) = -4.0;
  w.u(2, 0) = -4.0;
  const Eigen::MatrixXd c = assemble_advection(g, w).dense();
  CHECK(c(1, 2) == doctest::Approx(-2.0));
  CHECK(c(1, 1) == doctest::Approx(2.0));
  CHECK(c(1, 0) == 0.0);
}

TEST_CASE("zero wind gives a zero advection operator") {
  const Grid g = Grid::build(4, 3, {}, 1.0, 1.0);
  CHECK(assemble_advection(g, FaceWind(4, 3)).matrix().norm() == 0.0);
}

TEST_CASE("boundary face winds carry no flux under zero flux") {
  const Grid g = Grid::strip(3, 1.0);
  FaceWind w(3, 1);
  w.u(0, 0) = 7.0;
  w.u(3, 0) = 7.0;
  CHECK(assemble_advection(g, w).matrix().norm() == 0.0);
}

TEST_CASE("advection column sums vanish for random winds") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int nx = 2 + trial % 7, ny = 2 + (trial * 3) % 5;
    const Grid g = Grid::build(nx, ny, {}, 1.0 + trial % 3, 2.0);
    for (auto boundary : {Boundary::ZeroFlux, Boundary::Periodic}) {
      const Eigen::MatrixXd c = assemble_advection(g, random_wind(g, 5.0, gen), boundary).dense();
      CHECK(max_abs(c.colwise().sum()) <= 1e-12 * std::max(1.0, max_abs(c)));
      // Off-diagonals are nonpositive, the diagonal nonnegative.
      for (int i = 0; i < c.rows(); ++i) {
        for (int j = 0; j < c.cols(); ++j) {
          if (i == j) CHECK(c(i, j) >= 0.0);
          else CHECK(c(i, j) <= 0.0);
        }
      }
    }
  }
}

TEST_CASE("transport assembly") {
  const Grid g = Grid::strip(3, 1.0);
  const auto parts = assemble_components(g, FaceWind::uniform(g, 1.0, 0.0));
  SUBCASE("pure deposition") {
    const SparseOperator a = assemble_transport(parts.diffusion, parts.advection, 0.0, 0.0, 50.0);
    CHECK(max_abs(a.dense() - 50.0 * Eigen::MatrixXd::Identity(3, 3)) == 0.0);
  }
  SUBCASE("D + I is symmetric") {
    const SparseOperator a = assemble_transport(parts.diffusion, parts.advection, 1.0, 0.0, 1.0);
    CHECK(a.symmetric());
    CHECK(max_abs(a.dense() - (parts.diffusion.dense() + Eigen::MatrixXd::Identity(3, 3))) == 0.0);
  }
  SUBCASE("reference point is gamma D + alpha C + r I entrywise") {
    const SparseOperator a = assemble_transport(parts.diffusion, parts.advection, 1510.0, 0.53, 50.0);
    CHECK_FALSE(a.symmetric());
    const Eigen::MatrixXd expect =
        1510.0 * parts.diffusion.dense() + 0.53 * parts.advection.dense() + 50.0 * Eigen::MatrixXd::Identity(3, 3);
    CHECK(max_abs(a.dense() - expect) <= 1e-12 * max_abs(expect));
  }
  SUBCASE("negative coefficients are rejected") {
    CHECK_THROWS(assemble_transport(parts.diffusion, parts.advection, -1.0, 0.0, 1.0));
  }
}

TEST_CASE("minimum real eigenvalue") {
  CHECK(min_real_eigenvalue(SparseOperator::identity(5, 50.0)) == doctest::Approx(50.0));
  const Grid g = Grid::build(4, 4, {}, 1.0, 1.0);
  const auto parts = assemble_components(g, FaceWind::uniform(g, 2.0, -1.0));
  const SparseOperator sym = assemble_transport(parts.diffusion, parts.advection, 3.0, 0.0, 7.0);
  CHECK(min_real_eigenvalue(sym) == doctest::Approx(7.0));
  const SparseOperator full = assemble_transport(parts.diffusion, parts.advection, 3.0, 1.5, 7.0);
  CHECK(min_real_eigenvalue(full) >= 7.0 - 1e-8);
}

TEST_CASE("operator report on random winds") {
  std::mt19937_64 gen(3);
  for (int n : {2, 5, 9}) {
    const Grid g = Grid::build(n, n + 1, {}, 1.5, 1.0);
    const TransportComponents parts = assemble_components(g, random_wind(g, 3.0, gen));
    const OperatorReport r = inspect_operator(parts, 2.0, 0.7, 4.0);
    CHECK(r.diffusion_row_sum_defect <= 1e-12);
    CHECK(r.column_sum_defect <= 1e-10 * r.flux_norm_inf);
    CHECK(r.m_matrix_pattern);
    CHECK(r.eigenvalue_checked);
    CHECK(r.min_real_eigenvalue >= 4.0 - 1e-8);
    CHECK(r.diffusion_asymmetry == 0.0);
  }
}

TEST_CASE("M-matrix inverse is entrywise nonnegative") {
  std::mt19937_64 gen(8);
  const Grid g = Grid::build(5, 4, {}, 1.0, 1.0);
  const TransportComponents parts = assemble_components(g, random_wind(g, 4.0, gen));
  const Eigen::MatrixXd a = assemble_transport(parts.diffusion, parts.advection, 1.0, 1.0, 0.5).dense();
  CHECK(a.inverse().minCoeff() >= -1e-14);
}
