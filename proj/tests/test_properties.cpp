#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "kras/linalg.hpp"
#include "kras/quad.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace quad = kras::quad;

namespace {

std::mt19937 rng(2024);

MatrixXd randm(int r, int c) {
  std::normal_distribution<double> N(0, 1);
  MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = N(rng);
  return M;
}

MatrixXd rand_psd(int n) {
  MatrixXd A = randm(n, n);
  return A * A.transpose();
}

}  // namespace

TEST_CASE("Kronecker mixed-product identities on random matrices") {
  for (int trial = 0; trial < 25; ++trial) {
    int n = 2 + trial % 3, m = 2 + (trial / 2) % 3, p = 2, q = 3, r = 2;
    MatrixXd X = randm(n, m), Y = randm(m, p), Z = randm(q, r);
    MatrixXd lhs = kras::kron(X, MatrixXd::Identity(q, q)) * kras::kron(Y, Z);
    MatrixXd mid = kras::kron(MatrixXd(X * Y), Z);
    MatrixXd rhs = kras::kron(X, Z) * kras::kron(Y, MatrixXd::Identity(r, r));
    MatrixXd rhs2 = kras::kron(MatrixXd::Identity(n, n), Z) *
                    kras::kron(MatrixXd(X * Y), MatrixXd::Identity(r, r));
    CHECK((lhs - mid).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rhs - mid).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rhs2 - mid).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Kronecker block distribution and the diagonal identity") {
  MatrixXd A = randm(2, 2), B = randm(2, 3), C = randm(1, 2), D = randm(1, 3), X = randm(2, 2);
  MatrixXd blk = kras::vcat({kras::hcat({A, B}), kras::hcat({C, D})});
  MatrixXd lhs = kras::kron(blk, X);
  MatrixXd rhs = kras::vcat({kras::hcat({kras::kron(A, X), kras::kron(B, X)}),
                             kras::hcat({kras::kron(C, X), kras::kron(D, X)})});
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);

  MatrixXd IX = kras::kron(MatrixXd::Identity(3, 3), X);
  CHECK((IX - kras::dirsum({X, X, X})).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("row/column stacking identities for sums of products") {
  for (int trial = 0; trial < 25; ++trial) {
    const int k = 3, n = 2, m = 2;
    std::vector<MatrixXd> Xs, Ys, Zs;
    std::vector<VectorXd> vs;
    for (int i = 0; i < k; ++i) {
      Xs.push_back(randm(n, m));
      Ys.push_back(randm(n, n));
      Zs.push_back(randm(n, m));
      vs.push_back(randm(m, 1));
    }
    VectorXd direct = VectorXd::Zero(n);
    for (int i = 0; i < k; ++i) direct += (Xs[i] + Ys[i] * Zs[i]) * vs[i];

    std::vector<MatrixXd> sumrow, Yrow;
    MatrixXd vcol(k * m, 1);
    for (int i = 0; i < k; ++i) {
      sumrow.push_back(Xs[i] + Ys[i] * Zs[i]);
      Yrow.push_back(Ys[i]);
      vcol.block(i * m, 0, m, 1) = vs[i];
    }
    VectorXd via_row = kras::hcat(sumrow) * vcol;
    CHECK((via_row - direct).cwiseAbs().maxCoeff() < 1e-12);

    std::vector<MatrixXd> Xrow, Zdiag;
    for (int i = 0; i < k; ++i) {
      Xrow.push_back(Xs[i]);
      Zdiag.push_back(Zs[i]);
    }
    VectorXd split = kras::hcat(Xrow) * vcol + kras::hcat(Yrow) * kras::dirsum(Zdiag) * vcol;
    CHECK((split - direct).cwiseAbs().maxCoeff() < 1e-12);

    // diag(Y_i Z_i) kron I = (diag Y_i kron I)(diag Z_i kron I)
    std::vector<MatrixXd> YZ;
    for (int i = 0; i < k; ++i) YZ.push_back(Ys[i] * Zs[i]);
    MatrixXd lhs = kras::kron(kras::dirsum(YZ), MatrixXd::Identity(2, 2));
    MatrixXd rhs = kras::kron(kras::dirsum(Yrow), MatrixXd::Identity(2, 2)) *
                   kras::kron(kras::dirsum(Zdiag), MatrixXd::Identity(2, 2));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-11);
  }
}

namespace {

// Piecewise-cubic test signal on [-2, 0], n = 2.
struct PiecewiseX {
  MatrixXd c1, c2;  // 2 x 4 coefficient blocks per interval
  VectorXd at(double tau) const {
    const MatrixXd& c = tau >= -1.0 ? c1 : c2;
    VectorXd mono(4);
    mono << 1, tau, tau * tau, tau * tau * tau;
    return c * mono;
  }
};

}  // namespace

TEST_CASE("least-squares integral inequality holds on 500 randomized trials") {
  // Two intervals, weight 1: for PSD X_i,
  //   sum_i int x^T X_i x >= xi-term + err-term >= xi-term.
  const double lo[2] = {-1.0, -2.0}, hi[2] = {0.0, -1.0};
  double worst1 = 0, worst2 = 0;
  for (int trial = 0; trial < 500; ++trial) {
    PiecewiseX x{randm(2, 4), randm(2, 4)};
    double lhs = 0, mid = 0, low = 0;
    for (int i = 0; i < 2; ++i) {
      MatrixXd Xi = rand_psd(2);
      // random smooth bases: f (2 rows), g (1 row), polynomials
      MatrixXd fc = randm(2, 3), gc = randm(1, 3);
      auto fv = [&](double t) {
        VectorXd mono(3);
        mono << 1, t, t * t;
        return VectorXd(fc * mono);
      };
      auto gv = [&](double t) {
        VectorXd mono(3);
        mono << 1, t, t * t;
        return VectorXd(gc * mono);
      };
      MatrixXd Ff = quad::integrate([&](double t) -> MatrixXd {
        return fv(t) * fv(t).transpose();
      }, lo[i], hi[i], 1e-12);
      MatrixXd Gf = quad::integrate([&](double t) -> MatrixXd {
        return gv(t) * fv(t).transpose();
      }, lo[i], hi[i], 1e-12);
      MatrixXd Af = Gf * Ff.inverse();
      auto ev = [&](double t) { return VectorXd(gv(t) - Af * fv(t)); };
      MatrixXd Ee = quad::integrate([&](double t) -> MatrixXd {
        return ev(t) * ev(t).transpose();
      }, lo[i], hi[i], 1e-12);

      lhs += quad::integrate([&](double t) -> MatrixXd {
        MatrixXd v(1, 1);
        v(0, 0) = x.at(t).dot(Xi * x.at(t));
        return v;
      }, lo[i], hi[i], 1e-12)(0, 0);

      VectorXd fmom = quad::integrate([&](double t) -> MatrixXd {
        return kras::kron(MatrixXd(fv(t)), MatrixXd::Identity(2, 2)) * x.at(t);
      }, lo[i], hi[i], 1e-12);
      VectorXd emom = quad::integrate([&](double t) -> MatrixXd {
        return kras::kron(MatrixXd(ev(t)), MatrixXd::Identity(2, 2)) * x.at(t);
      }, lo[i], hi[i], 1e-12);

      double fterm = fmom.dot(kras::kron(MatrixXd(Ff.inverse()), Xi) * fmom);
      double eterm = emom.dot(kras::kron(MatrixXd(Ee.inverse()), Xi) * emom);
      low += fterm;
      mid += fterm + eterm;
    }
    worst1 = std::min(worst1, lhs - mid);
    worst2 = std::min(worst2, mid - low);
  }
  CHECK(worst1 >= -1e-9);
  CHECK(worst2 >= -1e-9);
}

TEST_CASE("psd-convex overestimate: tight at the anchor, sound off it") {
  const int n = 2, l = 4;
  std::uniform_real_distribution<double> U(0.1, 0.9);
  int sound_hits = 0, attempts = 0;
  while (sound_hits < 20 && attempts < 2000) {
    ++attempts;
    MatrixXd Z = MatrixXd::Zero(n, n);
    Z(0, 0) = U(rng);
    Z(1, 1) = U(rng);
    MatrixXd Gt = randm(n, l), Nt = randm(n, l);
    MatrixXd G = Gt + 0.3 * randm(n, l), N = Nt + 0.3 * randm(n, l);
    MatrixXd T = -kras::sy(Gt.transpose() * N + G.transpose() * Nt - Gt.transpose() * Nt) -
                 (1.0 + std::abs(randm(1, 1)(0, 0))) * MatrixXd::Identity(l, l);

    MatrixXd big = MatrixXd::Zero(l + 2 * n, l + 2 * n);
    big.topLeftCorner(l, l) =
        T + kras::sy(Gt.transpose() * N + G.transpose() * Nt - Gt.transpose() * Nt);
    big.block(0, l, l, n) = (G - Gt).transpose();
    big.block(l, 0, n, l) = G - Gt;
    big.block(0, l + n, l, n) = (N - Nt).transpose();
    big.block(l + n, 0, n, l) = N - Nt;
    big.block(l, l, n, n) = -Z;
    big.block(l + n, l + n, n, n) = Z - MatrixXd::Identity(n, n);

    double lam_big = Eigen::SelfAdjointEigenSolver<MatrixXd>(big).eigenvalues().maxCoeff();
    if (lam_big >= 0) continue;  // not a solution of the block inequality
    ++sound_hits;
    MatrixXd orig = T + kras::sy(G.transpose() * N);
    double lam = Eigen::SelfAdjointEigenSolver<MatrixXd>(orig).eigenvalues().maxCoeff();
    CHECK(lam < 1e-9);
  }
  REQUIRE(sound_hits == 20);

  // Tightness at the anchor: with G = Gt, N = Nt the block inequality reduces
  // exactly to the original one.
  MatrixXd Gt = randm(n, l), Nt = randm(n, l);
  MatrixXd T = -kras::sy(Gt.transpose() * Nt) - MatrixXd::Identity(l, l);
  MatrixXd Z = 0.5 * MatrixXd::Identity(n, n);
  MatrixXd big = MatrixXd::Zero(l + 2 * n, l + 2 * n);
  big.topLeftCorner(l, l) = T + kras::sy(Gt.transpose() * Nt);
  big.block(l, l, n, n) = -Z;
  big.block(l + n, l + n, n, n) = Z - MatrixXd::Identity(n, n);
  double lam_big = Eigen::SelfAdjointEigenSolver<MatrixXd>(big).eigenvalues().maxCoeff();
  double lam_orig = Eigen::SelfAdjointEigenSolver<MatrixXd>(
                        MatrixXd(T + kras::sy(Gt.transpose() * Nt)))
                        .eigenvalues()
                        .maxCoeff();
  CHECK(lam_big < 0.0);
  CHECK(lam_orig < 0.0);
  CHECK(std::max(lam_big, -0.5) == Catch::Approx(std::max(lam_orig, -0.5)).margin(1e-12));
}
