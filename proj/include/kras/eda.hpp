#pragma once

// Equivalent decomposition-approximation of distributed-delay kernels.
//
// Per delay interval the user supplies three blocks of scalar functions:
//   f      weakly differentiable block (kernels of the Krasovskii functional),
//   varphi L2 block that closes f' under the span of h = [varphi; f],
//   phi    L2 block approximated by h in the least-squares sense.
// The stacked vector g = [phi; varphi; f] must have a positive definite
// Gramian over the interval; every kernel entry is then an exact linear
// combination of the rows of g. The block ordering [phi; varphi; f] is fixed;
// all downstream index maps depend on it.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kras/errors.hpp"
#include "kras/expr.hpp"
#include "kras/quad.hpp"

namespace kras::eda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct IntervalBasis {
  int index = 1;              // 1-based interval number
  double left = 0, right = 0; // interval [left, right] = [-r_i, -r_{i-1}]
  std::vector<ScalarExpr> f, varphi, phi;

  int d() const { return int(f.size()); }
  int delta() const { return int(varphi.size()); }
  int mu() const { return int(phi.size()); }
  int vkappa() const { return d() + delta(); }        // dim of h
  int kappa() const { return d() + delta() + mu(); }  // dim of g

  VectorXd eval_f(double tau) const { return eval(f, tau); }
  VectorXd eval_varphi(double tau) const { return eval(varphi, tau); }
  VectorXd eval_phi(double tau) const { return eval(phi, tau); }

  VectorXd eval_h(double tau) const {
    VectorXd v(vkappa());
    v << eval(varphi, tau), eval(f, tau);
    return v;
  }

  VectorXd eval_g(double tau) const {
    VectorXd v(kappa());
    v << eval(phi, tau), eval(varphi, tau), eval(f, tau);
    return v;
  }

 private:
  static VectorXd eval(const std::vector<ScalarExpr>& block, double tau) {
    VectorXd v(block.size());
    for (std::size_t i = 0; i < block.size(); ++i) v[int(i)] = block[i].eval(tau);
    return v;
  }
};

/// Gramian of the stacked basis vector over its interval.
inline MatrixXd basis_gramian(const IntervalBasis& b, double rel_tol = 1e-13) {
  return quad::integrate([&](double tau) -> MatrixXd {
    VectorXd g = b.eval_g(tau);
    return g * g.transpose();
  }, b.left, b.right, rel_tol);
}

/// Validate a candidate basis: f non-empty and the Gramian of g positive
/// definite (rows linearly independent in the Lebesgue sense). The PD check
/// runs on the diagonally normalized Gramian with threshold 1e-10.
inline IntervalBasis build_basis_exprs(std::vector<ScalarExpr> f, std::vector<ScalarExpr> varphi,
                                       std::vector<ScalarExpr> phi, double left, double right,
                                       int index = 1) {
  if (f.empty()) throw Error("build_basis: block f must contain at least one function");
  if (!(left < right)) throw Error("build_basis: empty interval");
  IntervalBasis b;
  b.index = index;
  b.left = left;
  b.right = right;
  b.f = std::move(f);
  b.varphi = std::move(varphi);
  b.phi = std::move(phi);

  MatrixXd G = basis_gramian(b);
  VectorXd dn = G.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  MatrixXd Gn = dn.asDiagonal() * G * dn.asDiagonal();
  double lam = quad::min_eigenvalue(Gn);
  if (lam <= 1e-10)
    throw LinearlyDependentBasis("build_basis: normalized Gramian eigenvalue " +
                                 std::to_string(lam) +
                                 " <= 1e-10; rows of g are not linearly independent");
  return b;
}

inline std::vector<ScalarExpr> parse_all(const std::vector<std::string>& texts) {
  std::vector<ScalarExpr> out;
  out.reserve(texts.size());
  for (const auto& s : texts) out.push_back(parse_expr(s));
  return out;
}

inline IntervalBasis build_basis(const std::vector<std::string>& f,
                                 const std::vector<std::string>& varphi,
                                 const std::vector<std::string>& phi, double left, double right,
                                 int index = 1) {
  return build_basis_exprs(parse_all(f), parse_all(varphi), parse_all(phi), left, right, index);
}

/// Derivative-coupling matrix: the L2 projection of f' onto span h,
///   M = (int f' h^T)(int h h^T)^{-1},
/// required to be exact: the relative residual int ||f' - M h||^2 must not
/// exceed 1e-16 * int ||f'||^2. A larger residual means f' is not in span h
/// and varphi must be enlarged (any number of new functions can be added).
inline MatrixXd derive_M(const IntervalBasis& b, double rel_tol = 1e-13) {
  std::vector<ScalarExpr> fp;
  fp.reserve(b.f.size());
  for (const auto& e : b.f) fp.push_back(e.derivative());

  auto eval_fp = [&](double tau) {
    VectorXd v(fp.size());
    for (std::size_t i = 0; i < fp.size(); ++i) v[int(i)] = fp[i].eval(tau);
    return v;
  };

  MatrixXd A = quad::integrate([&](double tau) -> MatrixXd {
    return eval_fp(tau) * b.eval_h(tau).transpose();
  }, b.left, b.right, rel_tol);
  MatrixXd Hh = quad::integrate([&](double tau) -> MatrixXd {
    VectorXd h = b.eval_h(tau);
    return h * h.transpose();
  }, b.left, b.right, rel_tol);

  MatrixXd M = Hh.ldlt().solve(A.transpose()).transpose();

  double fp_norm = quad::integrate([&](double tau) -> MatrixXd {
    MatrixXd r(1, 1);
    r(0, 0) = eval_fp(tau).squaredNorm();
    return r;
  }, b.left, b.right, rel_tol)(0, 0);
  double resid = quad::integrate([&](double tau) -> MatrixXd {
    MatrixXd r(1, 1);
    r(0, 0) = (eval_fp(tau) - M * b.eval_h(tau)).squaredNorm();
    return r;
  }, b.left, b.right, rel_tol, 1e-18 * (1.0 + fp_norm))(0, 0);

  if (resid > 1e-16 * fp_norm + 1e-28)
    throw NotClosedUnderDerivative(
        "derive_M: residual " + std::to_string(resid) + " exceeds 1e-16 * " +
        std::to_string(fp_norm) +
        "; f' is not in span h -- enlarge varphi with the missing derivatives");
  return M;
}

/// Coefficient matrix of an exact kernel factorization: every scalar entry
/// a(tau) of the kernel is projected onto span g, the relative L2 residual is
/// required to be below 1e-12, and coefficients are packed so that
/// Coeff * (g(tau) (x) I_block_dim) reproduces the kernel pointwise.
inline MatrixXd decompose_matrix(const ExprGrid& kernel, const IntervalBasis& b, int block_dim,
                                 double rel_tol = 1e-13) {
  if (block_dim != kernel.cols)
    throw DimensionMismatch("decompose_matrix: block_dim " + std::to_string(block_dim) +
                            " must equal kernel column count " + std::to_string(kernel.cols));
  const int kap = b.kappa();
  MatrixXd G = basis_gramian(b, rel_tol);
  Eigen::LDLT<MatrixXd> Gld(G);

  MatrixXd coeff = MatrixXd::Zero(kernel.rows, std::size_t(kap) * block_dim);
  double worst_rel = 0.0;
  int worst_r = -1, worst_c = -1;

  for (int r = 0; r < kernel.rows; ++r) {
    for (int c = 0; c < kernel.cols; ++c) {
      const ScalarExpr& a = kernel.at(r, c);
      if (a.is_zero()) continue;
      VectorXd mom = quad::integrate([&](double tau) -> MatrixXd {
        return b.eval_g(tau) * a.eval(tau);
      }, b.left, b.right, rel_tol);
      VectorXd cf = Gld.solve(mom);
      double a2 = quad::integrate([&](double tau) -> MatrixXd {
        MatrixXd v(1, 1);
        v(0, 0) = a.eval(tau) * a.eval(tau);
        return v;
      }, b.left, b.right, rel_tol)(0, 0);
      double resid = quad::integrate([&](double tau) -> MatrixXd {
        MatrixXd v(1, 1);
        double e = a.eval(tau) - cf.dot(b.eval_g(tau));
        v(0, 0) = e * e;
        return v;
      }, b.left, b.right, rel_tol, 1e-16 * (1.0 + a2))(0, 0);
      double rel = resid / (a2 + 1e-300);
      if (rel > worst_rel) {
        worst_rel = rel;
        worst_r = r;
        worst_c = c;
      }
      if (resid > 1e-12 * a2 + 1e-28)
        throw NotRepresentable("decompose_matrix: entry (" + std::to_string(r) + "," +
                               std::to_string(c) + ") not in span g, relative residual " +
                               std::to_string(rel));
      for (int k = 0; k < kap; ++k) coeff(r, k * block_dim + c) = cf[k];
    }
  }
  (void)worst_r;
  (void)worst_c;
  return coeff;
}

/// One interval's decomposition data: the derivative-coupling matrix plus the
/// coefficient matrices of all four kernels, together with the basis that
/// produced them.
struct EdaDecomposition {
  IntervalBasis basis;
  MatrixXd M;        // d x (d + delta)
  MatrixXd Ahat;     // n x kappa*n
  MatrixXd Bhat;     // n x kappa*p
  MatrixXd Chat;     // m x kappa*n
  MatrixXd Bouthat;  // m x kappa*p
};

inline EdaDecomposition decompose(const IntervalBasis& basis, const ExprGrid& Atil,
                                  const ExprGrid& Btil, const ExprGrid& Ctil,
                                  const ExprGrid& Bouttil) {
  EdaDecomposition d;
  d.basis = basis;
  d.M = derive_M(basis);
  d.Ahat = decompose_matrix(Atil, basis, Atil.cols);
  d.Bhat = decompose_matrix(Btil, basis, Btil.cols);
  d.Chat = decompose_matrix(Ctil, basis, Ctil.cols);
  d.Bouthat = decompose_matrix(Bouttil, basis, Bouttil.cols);
  return d;
}

}  // namespace kras::eda

namespace kras::quad {

/// Moment matrices of one interval basis: the Gramian and its blocks, the
/// least-squares operator data, the approximation-error Gramian, and the
/// square-root factors used by the synthesis conditions.
struct GramianSet {
  MatrixXd G;         // kappa x kappa Gramian of g
  MatrixXd Hh;        // vkappa x vkappa Gramian of h (lower-right block of G)
  MatrixXd Gamma;     // mu x vkappa cross moments int phi h^T
  MatrixXd PhiPhi;    // mu x mu Gramian of phi (upper-left block of G)
  MatrixXd Ee;        // mu x mu least-squares error Gramian
  MatrixXd Ff;        // d x d Gramian of f
  MatrixXd sqrt_Hh, sqrt_Hh_inv;
  MatrixXd sqrt_Ff, sqrt_Ff_inv;
  MatrixXd sqrt_Ee;
  MatrixXd T;     // kappa x vkappa
  MatrixXd Ttil;  // kappa x mu
};

namespace detail {
inline void require_pd(const MatrixXd& X, const char* name) {
  if (X.rows() == 0) return;
  double lam = min_eigenvalue(X);
  double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
  if (lam <= 1e-12 * scale)
    throw NotPositiveDefinite(std::string(name) + ": smallest eigenvalue " +
                              std::to_string(lam) + " not positive definite");
}
}  // namespace detail

/// All moment data of one interval. When mu = 0 the Gamma/Ee/Ttil members are
/// empty matrices of the correct shape.
inline GramianSet interval_data(const eda::IntervalBasis& b, double rel_tol = 1e-13) {
  const int mu = b.mu(), vk = b.vkappa(), d = b.d();
  GramianSet g;
  g.G = eda::basis_gramian(b, rel_tol);
  detail::require_pd(g.G, "G");
  g.PhiPhi = g.G.topLeftCorner(mu, mu);
  g.Gamma = g.G.topRightCorner(mu, vk);
  g.Hh = g.G.bottomRightCorner(vk, vk);
  detail::require_pd(g.Hh, "Hh");
  g.Ff = g.Hh.bottomRightCorner(d, d);
  detail::require_pd(g.Ff, "Ff");

  MatrixXd HhInvGammaT = g.Hh.ldlt().solve(g.Gamma.transpose());
  g.Ee = g.PhiPhi - g.Gamma * HhInvGammaT;
  if (mu > 0) {
    double lam = min_eigenvalue(g.Ee);
    double scale = std::max(1.0, g.Ee.cwiseAbs().maxCoeff());
    if (lam < -1e-12 * scale)
      throw NotPositiveDefinite("Ee: eigenvalue " + std::to_string(lam) + " below -1e-12");
  }

  g.sqrt_Hh = sqrt_pd(g.Hh);
  g.sqrt_Hh_inv = inv_psd(g.sqrt_Hh);
  g.sqrt_Ff = sqrt_pd(g.Ff);
  g.sqrt_Ff_inv = inv_psd(g.sqrt_Ff);
  g.sqrt_Ee = mu > 0 ? sqrt_pd(g.Ee) : MatrixXd(0, 0);

  g.T.resize(mu + vk, vk);
  g.T.topRows(mu) = g.Gamma * g.sqrt_Hh_inv;
  g.T.bottomRows(vk) = g.sqrt_Hh;

  g.Ttil.resize(mu + vk, mu);
  if (mu > 0) {
    g.Ttil.topRows(mu) = g.sqrt_Ee;
    g.Ttil.bottomRows(vk).setZero();
  }
  return g;
}

}  // namespace kras::quad
