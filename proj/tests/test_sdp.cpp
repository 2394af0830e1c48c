#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "kras/sdp.hpp"
#include "kras/solver.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace sdp = kras::sdp;

TEST_CASE("minimize t over [t 1; 1 t] >= 0 gives t = 1") {
  sdp::SdpProblem prob;
  auto t = prob.scalar("t");
  sdp::AffineMat M(2, 2);
  M.add_term(0, 0, t.base, 1.0);
  M.add_term(1, 1, t.base, 1.0);
  M.add_const(0, 1, 1.0);
  M.add_const(1, 0, 1.0);
  prob.add(sdp::LmiBlock::pos("m", M, 0.0));
  prob.objective_add(t, 1.0);
  auto sol = prob.solve();
  CHECK(sol.status == sdp::SolveStatus::Optimal);
  CHECK(sol.scalar(t) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("feasibility of I > 0 with no variables") {
  sdp::SdpProblem prob;
  prob.add(sdp::LmiBlock::pos("id", sdp::AffineMat::constant(MatrixXd::Identity(3, 3))));
  auto sol = prob.solve();
  CHECK(sol.status == sdp::SolveStatus::Optimal);
  CHECK(sol.values.empty());
}

TEST_CASE("contradictory scalar bounds detected infeasible") {
  sdp::SdpProblem prob;
  auto x = prob.scalar("x");
  sdp::AffineMat lo(1, 1);  // x - 1 >= 0
  lo.add_term(0, 0, x.base, 1.0);
  lo.add_const(0, 0, -1.0);
  sdp::AffineMat hi(1, 1);  // -x >= 0
  hi.add_term(0, 0, x.base, -1.0);
  prob.add(sdp::LmiBlock::pos("lo", lo, 0.0));
  prob.add(sdp::LmiBlock::pos("hi", hi, 0.0));
  prob.objective_add(x, 1.0);
  CHECK_THROWS_AS(prob.solve(), kras::InfeasibleCertificate);
}

TEST_CASE("largest eigenvalue via t I - M >= 0") {
  std::mt19937 rng(5);
  std::normal_distribution<double> N(0, 1);
  MatrixXd A(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = N(rng);
  MatrixXd M = 0.5 * (A + A.transpose());
  double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(M).eigenvalues().maxCoeff();

  sdp::SdpProblem prob;
  auto t = prob.scalar("t");
  sdp::AffineMat E = sdp::AffineMat::constant(-M);
  for (int i = 0; i < 3; ++i) E.add_term(i, i, t.base, 1.0);
  prob.add(sdp::LmiBlock::pos("ti-m", E, 0.0));
  prob.objective_add(t, 1.0);
  auto sol = prob.solve();
  CHECK(sol.scalar(t) == Catch::Approx(lmax).margin(1e-6));
}

TEST_CASE("frobenius epigraph: constant expression") {
  sdp::SdpProblem prob;
  auto expr = sdp::AffineMat::constant(MatrixXd::Constant(1, 1, 5.0));
  auto [t, blk] = prob.frobenius_epigraph(expr, MatrixXd::Constant(1, 1, 3.0), 1.0, "epi");
  prob.add(blk);
  prob.objective_add(t, 1.0);
  auto sol = prob.solve();
  CHECK(sol.scalar(t) == Catch::Approx(4.0).margin(1e-6));
}

TEST_CASE("frobenius epigraph: random rectangular matrices") {
  std::mt19937 rng(11);
  std::normal_distribution<double> N(0, 1);
  MatrixXd M(2, 3), A(2, 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      M(i, j) = N(rng);
      A(i, j) = N(rng);
    }
  sdp::SdpProblem prob;
  auto [t, blk] = prob.frobenius_epigraph(sdp::AffineMat::constant(M), A, 2.0, "epi");
  prob.add(blk);
  prob.objective_add(t, 1.0);
  auto sol = prob.solve();
  CHECK(sol.scalar(t) == Catch::Approx((M - A).squaredNorm()).margin(1e-8));
}

TEST_CASE("frobenius epigraph: anchor equals the optimizer") {
  sdp::SdpProblem prob;
  auto x = prob.rect("x", 1, 1);
  MatrixXd anchor = MatrixXd::Constant(1, 1, 3.0);
  auto [t, blk] = prob.frobenius_epigraph(prob.var_mat(x), anchor, 1.0, "epi");
  prob.add(blk);
  prob.objective_add(t, 1.0);
  auto sol = prob.solve();
  CHECK(sol.scalar(t) == Catch::Approx(0.0).margin(1e-6));
  CHECK(sol.value(x)(0, 0) == Catch::Approx(3.0).margin(1e-4));
}

TEST_CASE("symmetric variable packing round-trips through a solve") {
  // min t s.t. P - M >= 0 entrywise-shifted identity and t >= trace-ish bound:
  // use P >= M and t I >= P; at the optimum t = lambda_max(M).
  MatrixXd M(2, 2);
  M << 2, -1, -1, 3;
  sdp::SdpProblem prob;
  auto P = prob.symmetric("P", 2);
  auto t = prob.scalar("t");
  auto Pm = prob.var_mat(P);
  prob.add(sdp::LmiBlock::pos("P>=M", Pm - sdp::AffineMat::constant(M), 0.0));
  sdp::AffineMat tI(2, 2);
  tI.add_term(0, 0, t.base, 1.0);
  tI.add_term(1, 1, t.base, 1.0);
  prob.add(sdp::LmiBlock::pos("tI>=P", tI - Pm, 0.0));
  prob.objective_add(t, 1.0);
  auto sol = prob.solve();
  double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(M).eigenvalues().maxCoeff();
  CHECK(sol.scalar(t) == Catch::Approx(lmax).margin(1e-6));
  MatrixXd Pv = sol.value(P);
  CHECK((Pv - Pv.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("SDPA dump round-trips bit for bit") {
  sdp::SdpProblem prob;
  auto t = prob.scalar("t");
  auto K = prob.rect("K", 1, 2);
  sdp::AffineMat M(3, 3);
  M.add_term(0, 0, t.base, 1.0);
  M.add_term(1, 1, t.base, 0.123456789012345678);
  M.add_term(0, 1, K.index(0, 0), -0.7);
  M.add_term(1, 0, K.index(0, 0), -0.7);
  M.add_term(2, 2, K.index(0, 1), 1e-17);
  M.add_const(2, 2, 3.0000000000000004);
  M.add_const(0, 2, -1.0 / 3.0);
  M.add_const(2, 0, -1.0 / 3.0);
  prob.add(sdp::LmiBlock::pos("m", M));
  prob.objective_add(t, 1.0 / 7.0);
  sdp::ConicProblem p = prob.lower();

  std::stringstream ss;
  sdp::dump_sdpa(p, ss);
  sdp::ConicProblem p2 = sdp::read_sdpa(ss);

  REQUIRE(p2.nvars == p.nvars);
  REQUIRE(p2.blocks.size() == p.blocks.size());
  CHECK((p2.c - p.c).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    CHECK((p2.blocks[b].F0 - p.blocks[b].F0).cwiseAbs().maxCoeff() == 0.0);
    // reconstruct dense F_i both sides
    for (const auto& v : p.blocks[b].vars) {
      MatrixXd Fi = MatrixXd::Zero(p.blocks[b].dim, p.blocks[b].dim);
      for (const auto& tr : v.entries) Fi(tr.r, tr.c) += tr.v;
      MatrixXd Fi2 = MatrixXd::Zero(p.blocks[b].dim, p.blocks[b].dim);
      for (const auto& v2 : p2.blocks[b].vars)
        if (v2.var == v.var)
          for (const auto& tr : v2.entries) Fi2(tr.r, tr.c) += tr.v;
      CHECK((Fi - Fi2).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("affine algebra building blocks") {
  sdp::SdpProblem prob;
  auto K = prob.rect("K", 1, 2);
  auto Km = prob.var_mat(K);
  MatrixXd L(2, 1);
  L << 2, -1;
  sdp::AffineMat LK = L * Km;  // 2x2
  VectorXd y = VectorXd::Zero(prob.scalar_count());
  y[K.index(0, 0)] = 3;
  y[K.index(0, 1)] = 4;
  MatrixXd E = LK.eval(y);
  MatrixXd want(2, 2);
  want << 6, 8, -3, -4;
  CHECK((E - want).cwiseAbs().maxCoeff() == 0.0);

  sdp::AffineMat IK = sdp::kron_const_affine(MatrixXd::Identity(2, 2), Km);
  MatrixXd E2 = IK.eval(y);
  CHECK(E2.rows() == 2);
  CHECK(E2.cols() == 4);
  CHECK(E2(0, 0) == 3.0);
  CHECK(E2(1, 2) == 3.0);
  CHECK(E2(1, 3) == 4.0);
  CHECK(E2(0, 2) == 0.0);

  CHECK(sdp::sy(LK).eval(y).isApprox(E + E.transpose()));
}
