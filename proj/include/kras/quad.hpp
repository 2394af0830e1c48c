#pragma once

// Panel-based Gauss-Legendre integration over delay intervals, symmetric
// matrix square roots, and the per-interval moment matrices that drive the
// kernel decomposition and the synthesis conditions. Everything here is pure
// and reentrant; per-interval computations can run concurrently.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "kras/errors.hpp"

namespace kras::quad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

// 15-point Gauss-Legendre nodes/weights on [-1, 1].
inline const double* gl15_nodes() {
  static const double x[15] = {
      -0.98799251802048542848956571858661, -0.93727339240070590430775894771021,
      -0.84820658341042721620064832077422, -0.72441773136017004741618605461394,
      -0.57097217260853884753722673725391, -0.39415134707756336989720737098573,
      -0.20119409399743452230062830339460, 0.0,
      0.20119409399743452230062830339460,  0.39415134707756336989720737098573,
      0.57097217260853884753722673725391,  0.72441773136017004741618605461394,
      0.84820658341042721620064832077422,  0.93727339240070590430775894771021,
      0.98799251802048542848956571858661};
  return x;
}

inline const double* gl15_weights() {
  static const double w[15] = {
      0.03075324199611726835462839357720, 0.07036604748810812470926741645066,
      0.10715922046717193501186954668587, 0.13957067792615431444780479451103,
      0.16626920581699393355320086048121, 0.18616100001556221102680056186642,
      0.19843148532711157645611832644384, 0.20257824192556127288062019996752,
      0.19843148532711157645611832644384, 0.18616100001556221102680056186642,
      0.16626920581699393355320086048121, 0.13957067792615431444780479451103,
      0.10715922046717193501186954668587, 0.07036604748810812470926741645066,
      0.03075324199611726835462839357720};
  return w;
}

}  // namespace detail

/// Composite 15-point Gauss-Legendre quadrature of a matrix-valued integrand
/// over [a, b] with dyadic panel refinement. Refinement stops when two
/// successive estimates agree entrywise to rel_tol; throws NoConvergence
/// after 20 refinement levels. The panel schedule is deterministic.
inline MatrixXd integrate(const std::function<MatrixXd(double)>& fn, double a, double b,
                          double rel_tol = 1e-13, double abs_tol = 0.0) {
  const double* xs = detail::gl15_nodes();
  const double* ws = detail::gl15_weights();

  // absint accumulates the integral of the entrywise max magnitude; it keeps
  // the stopping rule meaningful when the integral itself cancels to zero.
  auto level_estimate = [&](int panels, double* absint) {
    MatrixXd acc;
    *absint = 0.0;
    const double hw = (b - a) / panels;
    for (int pidx = 0; pidx < panels; ++pidx) {
      const double lo = a + pidx * hw;
      const double mid = lo + 0.5 * hw;
      const double half = 0.5 * hw;
      for (int k = 0; k < 15; ++k) {
        MatrixXd v = fn(mid + half * xs[k]);
        *absint += ws[k] * half * v.cwiseAbs().maxCoeff();
        if (acc.size() == 0)
          acc = (ws[k] * half) * v;
        else
          acc += (ws[k] * half) * v;
      }
    }
    return acc;
  };

  double absint = 0.0;
  MatrixXd prev = level_estimate(1, &absint);
  for (int level = 1; level <= 20; ++level) {
    MatrixXd cur = level_estimate(1 << level, &absint);
    const double scale = std::max(cur.cwiseAbs().maxCoeff(), absint);
    const double diff = (cur - prev).cwiseAbs().maxCoeff();
    if (diff <= std::max(rel_tol * scale, abs_tol)) return cur;
    prev = cur;
  }
  throw NoConvergence("quadrature did not converge after 20 dyadic refinements");
}

/// Unique symmetric PSD square root of a symmetric matrix. Eigenvalues in
/// [-1e-12 * ||X||, 0) are clamped to zero; anything below -1e-9 * ||X||
/// raises NotPositiveDefinite.
inline MatrixXd sqrt_pd(const MatrixXd& X) {
  if (X.rows() != X.cols()) throw DimensionMismatch("sqrt_pd: matrix not square");
  if (X.rows() == 0) return X;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (X + X.transpose()));
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  VectorXd lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    if (lam[i] < -1e-9 * scale)
      throw NotPositiveDefinite("sqrt_pd: eigenvalue " + std::to_string(lam[i]) +
                                " below tolerance");
    lam[i] = lam[i] > 0 ? std::sqrt(lam[i]) : 0.0;
  }
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric positive (semi)definite inverse via eigendecomposition, with the
/// same clamping policy as sqrt_pd. Near-zero eigenvalues invert to zero
/// (pseudo-inverse), which is what the vanishing approximation-error channel
/// needs.
inline MatrixXd inv_psd(const MatrixXd& X, double rel_floor = 1e-13) {
  if (X.rows() == 0) return X;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (X + X.transpose()));
  const double scale = std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff());
  VectorXd lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) lam[i] = lam[i] > rel_floor * scale ? 1.0 / lam[i] : 0.0;
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline double min_eigenvalue(const MatrixXd& X) {
  if (X.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (X + X.transpose()),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace kras::quad
