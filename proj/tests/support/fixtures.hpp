#pragma once

#include <memory>
#include <random>

#include <Eigen/Dense>

#include "oufield/grid.hpp"
#include "oufield/transport.hpp"

namespace testing_support {

inline std::shared_ptr<oufield::TransportComponents> components(int nx, int ny, double dx, double u, double v) {
  const oufield::Grid g = oufield::Grid::build(nx, ny, {}, dx, dx);
  return std::make_shared<oufield::TransportComponents>(
      oufield::assemble_components(g, oufield::FaceWind::uniform(g, u, v)));
}

// Face winds drawn uniformly from [-scale, scale].
inline oufield::FaceWind random_wind(const oufield::Grid& g, double scale, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(-scale, scale);
  oufield::FaceWind w(g.nx(), g.ny());
  for (double& x : w.u_values()) x = d(gen);
  for (double& x : w.v_values()) x = d(gen);
  return w;
}

// Single-cell components (D = C = 0) for scalar checks.
inline std::shared_ptr<oufield::TransportComponents> scalar_components() {
  oufield::SparseMatrix z(1, 1);
  return std::make_shared<oufield::TransportComponents>(
      oufield::TransportComponents{oufield::SparseOperator(z, true), oufield::SparseOperator(z, true)});
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

}  // namespace testing_support
