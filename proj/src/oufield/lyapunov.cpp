#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "oufield/error.hpp"
#include "oufield/ou_dist.hpp"

namespace oufield {

namespace {

struct SchurBlock {
  Eigen::Index start;
  Eigen::Index size;  // 1 or 2
};

std::vector<SchurBlock> schur_blocks(const Eigen::MatrixXd& t) {
  std::vector<SchurBlock> blocks;
  const Eigen::Index n = t.rows();
  for (Eigen::Index i = 0; i < n;) {
    if (i + 1 < n && t(i + 1, i) != 0.0) {
      blocks.push_back({i, 2});
      i += 2;
    } else {
      blocks.push_back({i, 1});
      i += 1;
    }
  }
  return blocks;
}

double block_real_part(const Eigen::MatrixXd& t, const SchurBlock& b) {
  if (b.size == 1) return t(b.start, b.start);
  return 0.5 * (t(b.start, b.start) + t(b.start + 1, b.start + 1));
}

}  // namespace

double lyapunov_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& q) {
  return (a * x + x * a.transpose() - q).norm();
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n) {
    throw DomainError("lyapunov: A and Q must be square and of equal size");
  }
  if (!a.allFinite() || !q.allFinite()) throw NumericalError("lyapunov: non-finite input");

  Eigen::RealSchur<Eigen::MatrixXd> schur(a);
  if (schur.info() != Eigen::Success) throw NumericalError("lyapunov: real Schur decomposition failed");
  const Eigen::MatrixXd& t = schur.matrixT();
  const Eigen::MatrixXd& u = schur.matrixU();
  const auto blocks = schur_blocks(t);
  for (const auto& b : blocks) {
    const double re = block_real_part(t, b);
    if (!(re > 0.0)) {
      throw StabilityError("lyapunov: A has an eigenvalue with nonpositive real part (" +
                           std::to_string(re) + ")");
    }
  }

  // Transformed equation T Y + Y T^T = F with F = U^T Q U, solved block by
  // block from the bottom-right corner; each block is a Sylvester system of
  // order at most 4.
  const Eigen::MatrixXd f = u.transpose() * q * u;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, n);
  for (auto bj = blocks.rbegin(); bj != blocks.rend(); ++bj) {
    const Eigen::Index cj = bj->start;
    const Eigen::Index qn = bj->size;
    const Eigen::Index tail_j = n - cj - qn;
    for (auto bi = blocks.rbegin(); bi != blocks.rend(); ++bi) {
      const Eigen::Index ri = bi->start;
      const Eigen::Index pn = bi->size;
      const Eigen::Index tail_i = n - ri - pn;
      Eigen::MatrixXd rhs = f.block(ri, cj, pn, qn);
      if (tail_i > 0) rhs.noalias() -= t.block(ri, ri + pn, pn, tail_i) * y.block(ri + pn, cj, tail_i, qn);
      if (tail_j > 0) {
        rhs.noalias() -= y.block(ri, cj + qn, pn, tail_j) * t.block(cj, cj + qn, qn, tail_j).transpose();
      }
      const Eigen::MatrixXd tii = t.block(ri, ri, pn, pn);
      const Eigen::MatrixXd tjj = t.block(cj, cj, qn, qn);
      if (pn == 1 && qn == 1) {
        y(ri, cj) = rhs(0, 0) / (tii(0, 0) + tjj(0, 0));
        continue;
      }
      // vec(Tii X) = (I_q kron Tii) vec X, vec(X Tjj^T) = (Tjj kron I_p) vec X.
      const Eigen::Index m = pn * qn;
      Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
      for (Eigen::Index c = 0; c < qn; ++c) k.block(c * pn, c * pn, pn, pn) += tii;
      for (Eigen::Index r = 0; r < qn; ++r) {
        for (Eigen::Index c = 0; c < qn; ++c) {
          k.block(r * pn, c * pn, pn, pn) += tjj(r, c) * Eigen::MatrixXd::Identity(pn, pn);
        }
      }
      const Eigen::VectorXd vec_rhs = Eigen::Map<const Eigen::VectorXd>(rhs.data(), m);
      const Eigen::VectorXd sol = k.fullPivLu().solve(vec_rhs);
      y.block(ri, cj, pn, qn) = Eigen::Map<const Eigen::MatrixXd>(sol.data(), pn, qn);
    }
  }

  Eigen::MatrixXd x = u * y * u.transpose();
  const double residual = lyapunov_residual(a, x, q);
  const double scale = q.norm();
  if (!(residual <= 1e-8 * scale) && !(scale == 0.0 && residual == 0.0)) {
    throw NumericalError("lyapunov: residual " + std::to_string(residual) +
                         " exceeds 1e-8 * ||Q||_F = " + std::to_string(1e-8 * scale));
  }
  return 0.5 * (x + x.transpose());
}

Eigen::MatrixXd solve_lyapunov(const SparseOperator& a, const Eigen::MatrixXd& q,
                               std::size_t dense_threshold) {
  const auto n = static_cast<Eigen::Index>(a.n());
  if (a.n() > dense_threshold) {
    throw UnsupportedError("lyapunov: n=" + std::to_string(a.n()) + " exceeds dense threshold " +
                           std::to_string(dense_threshold));
  }
  if (q.rows() != n || q.cols() != n) throw DomainError("lyapunov: Q has the wrong size");
  const double q0 = n > 0 ? q(0, 0) : 0.0;
  const bool scaled_identity =
      n > 0 && (q - q0 * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0;
  if (a.symmetric() && scaled_identity) {
    Eigen::SimplicialLLT<SparseMatrix> llt(a.matrix());
    if (llt.info() != Eigen::Success) {
      throw StabilityError("lyapunov: symmetric A is not positive definite");
    }
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd x = 0.5 * q0 * inv;
    return 0.5 * (x + x.transpose());
  }
  return solve_lyapunov(a.dense(), q);
}

}  // namespace oufield
