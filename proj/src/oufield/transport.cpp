#include "oufield/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "oufield/error.hpp"

namespace oufield {

SparseOperator::SparseOperator(SparseMatrix matrix, bool symmetric)
    : matrix_(std::move(matrix)), symmetric_(symmetric) {
  if (matrix_.rows() != matrix_.cols()) throw DomainError("operator: matrix must be square");
  matrix_.makeCompressed();
  for (Eigen::Index c = 0; c < matrix_.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(matrix_, c); it; ++it) {
      if (!std::isfinite(it.value())) throw NumericalError("operator: non-finite entry");
    }
  }
}

SparseOperator SparseOperator::identity(std::size_t n, double scale) {
  SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setIdentity();
  m *= scale;
  return SparseOperator(std::move(m), true);
}

SparseOperator SparseOperator::from_dense(const Eigen::MatrixXd& dense) {
  SparseMatrix m = dense.sparseView();
  const bool sym = dense.rows() == dense.cols() && (dense - dense.transpose()).cwiseAbs().maxCoeff() == 0.0;
  return SparseOperator(std::move(m), sym);
}

double SparseOperator::max_diagonal() const {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < matrix_.rows(); ++i) best = std::max(best, matrix_.coeff(i, i));
  return best;
}

namespace {

using Triplet = Eigen::Triplet<double>;

// Neighbour across the face in the given direction, or -1 at a zero-flux edge.
int neighbour(int idx, int step, int count, Boundary boundary) {
  const int next = idx + step;
  if (next >= 0 && next < count) return next;
  if (boundary == Boundary::Periodic && count > 2) return (next + count) % count;
  return -1;
}

}  // namespace

SparseOperator assemble_diffusion(const Grid& grid, Boundary boundary) {
  const int nx = grid.nx();
  const int ny = grid.ny();
  const double cx = 1.0 / (grid.dx() * grid.dx());
  const double cy = 1.0 / (grid.dy() * grid.dy());
  std::vector<Triplet> t;
  t.reserve(grid.size() * 5);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const auto p = static_cast<int>(grid.index(i, j));
      double diag = 0.0;
      for (int step : {-1, 1}) {
        const int ii = neighbour(i, step, nx, boundary);
        if (ii >= 0) {
          t.emplace_back(p, static_cast<int>(grid.index(ii, j)), -cx);
          diag += cx;
        }
        const int jj = neighbour(j, step, ny, boundary);
        if (jj >= 0) {
          t.emplace_back(p, static_cast<int>(grid.index(i, jj)), -cy);
          diag += cy;
        }
      }
      t.emplace_back(p, p, diag);
    }
  }
  SparseMatrix m(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(grid.size()));
  m.setFromTriplets(t.begin(), t.end());
  return SparseOperator(std::move(m), true);
}

SparseOperator assemble_advection(const Grid& grid, const FaceWind& wind, Boundary boundary) {
  if (!wind.matches(grid)) throw DomainError("advection: face wind dimensions do not match grid");
  const int nx = grid.nx();
  const int ny = grid.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      if (!std::isfinite(wind.u(i, j))) {
        throw NumericalError("advection: non-finite u on face (i=" + std::to_string(i) +
                             ", j=" + std::to_string(j) + ")");
      }
    }
  }
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (!std::isfinite(wind.v(i, j))) {
        throw NumericalError("advection: non-finite v on face (i=" + std::to_string(i) +
                             ", j=" + std::to_string(j) + ")");
      }
    }
  }

  std::vector<Triplet> t;
  t.reserve(grid.size() * 5);
  // Each interior face moves mass from its upwind cell to the downwind cell:
  // the donor loses flux on its diagonal, the receiver gains it off-diagonal.
  auto add_face = [&](int donor, int receiver, double speed, double width) {
    const double rate = speed / width;
    t.emplace_back(donor, donor, rate);
    t.emplace_back(receiver, donor, -rate);
  };
  // Faces between (i-1, j) and (i, j), velocity u(i, j) positive eastward.
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      int west = i - 1;
      int east = i;
      if (i == 0 || i == nx) {
        if (boundary != Boundary::Periodic || i == nx || nx <= 2) continue;
        west = nx - 1;  // wrap face shared by the last and first column
      }
      const double u = wind.u(i, j);
      const auto w = static_cast<int>(grid.index(west, j));
      const auto e = static_cast<int>(grid.index(east, j));
      if (u > 0.0) add_face(w, e, u, grid.dx());
      else if (u < 0.0) add_face(e, w, -u, grid.dx());
    }
  }
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int south = j - 1;
      int north = j;
      if (j == 0 || j == ny) {
        if (boundary != Boundary::Periodic || j == ny || ny <= 2) continue;
        south = ny - 1;
      }
      const double v = wind.v(i, j);
      const auto s = static_cast<int>(grid.index(i, south));
      const auto n = static_cast<int>(grid.index(i, north));
      if (v > 0.0) add_face(s, n, v, grid.dy());
      else if (v < 0.0) add_face(n, s, -v, grid.dy());
    }
  }
  SparseMatrix m(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(grid.size()));
  m.setFromTriplets(t.begin(), t.end());
  m.prune(0.0);
  const bool empty = m.nonZeros() == 0;
  return SparseOperator(std::move(m), empty);
}

TransportComponents assemble_components(const Grid& grid, const FaceWind& wind, Boundary boundary) {
  return {assemble_diffusion(grid, boundary), assemble_advection(grid, wind, boundary)};
}

SparseOperator assemble_transport(const SparseOperator& diffusion, const SparseOperator& advection,
                                  double gamma, double alpha, double r) {
  if (diffusion.n() != advection.n()) throw DomainError("transport: D and C sizes differ");
  if (!(gamma >= 0.0) || !(alpha >= 0.0) || !std::isfinite(gamma) || !std::isfinite(alpha)) {
    throw DomainError("transport: gamma and alpha must be finite and >= 0");
  }
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw DomainError("transport: diagonal rate must be > 0 for a stable operator");
  }
  SparseMatrix id(diffusion.matrix().rows(), diffusion.matrix().cols());
  id.setIdentity();
  SparseMatrix a = gamma * diffusion.matrix() + alpha * advection.matrix() + r * id;
  const bool sym = diffusion.symmetric() && (alpha == 0.0 || advection.symmetric());
  return SparseOperator(std::move(a), sym);
}

double min_real_eigenvalue(const SparseOperator& a, std::size_t dense_threshold) {
  if (a.n() > dense_threshold) {
    throw UnsupportedError("min_real_eigenvalue: n=" + std::to_string(a.n()) +
                           " exceeds dense threshold " + std::to_string(dense_threshold));
  }
  const Eigen::MatrixXd dense = a.dense();
  if (a.symmetric()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("min_real_eigenvalue: eigensolver failed");
    return es.eigenvalues().minCoeff();
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(dense, false);
  if (es.info() != Eigen::Success) throw NumericalError("min_real_eigenvalue: eigensolver failed");
  return es.eigenvalues().real().minCoeff();
}

OperatorReport inspect_operator(const TransportComponents& parts, double gamma, double alpha,
                                double r, std::size_t eigen_threshold) {
  OperatorReport rep;
  const auto n = static_cast<Eigen::Index>(parts.diffusion.n());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  rep.diffusion_row_sum_defect = (parts.diffusion.matrix() * ones).cwiseAbs().maxCoeff();
  const SparseMatrix flux = gamma * parts.diffusion.matrix() + alpha * parts.advection.matrix();
  const Eigen::RowVectorXd colsum = ones.transpose() * flux;
  rep.column_sum_defect = colsum.cwiseAbs().maxCoeff();
  {
    Eigen::VectorXd rowabs = Eigen::VectorXd::Zero(n);
    for (Eigen::Index c = 0; c < flux.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(flux, c); it; ++it) rowabs[it.row()] += std::abs(it.value());
    }
    rep.flux_norm_inf = rowabs.maxCoeff();
  }
  const SparseOperator a = assemble_transport(parts.diffusion, parts.advection, gamma, alpha, r);
  rep.max_offdiagonal = -std::numeric_limits<double>::infinity();
  rep.min_diagonal = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < a.matrix().outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(a.matrix(), c); it; ++it) {
      if (it.row() == it.col()) rep.min_diagonal = std::min(rep.min_diagonal, it.value());
      else rep.max_offdiagonal = std::max(rep.max_offdiagonal, it.value());
    }
  }
  if (rep.max_offdiagonal == -std::numeric_limits<double>::infinity()) rep.max_offdiagonal = 0.0;
  rep.m_matrix_pattern = rep.max_offdiagonal <= 0.0 && rep.min_diagonal > 0.0;
  const SparseMatrix dt = parts.diffusion.matrix().transpose();
  const SparseMatrix asym = parts.diffusion.matrix() - dt;
  rep.diffusion_asymmetry = 0.0;
  for (Eigen::Index c = 0; c < asym.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(asym, c); it; ++it) {
      rep.diffusion_asymmetry = std::max(rep.diffusion_asymmetry, std::abs(it.value()));
    }
  }
  if (a.n() <= eigen_threshold) {
    rep.eigenvalue_checked = true;
    rep.min_real_eigenvalue = min_real_eigenvalue(a, eigen_threshold);
  }
  return rep;
}

}  // namespace oufield
