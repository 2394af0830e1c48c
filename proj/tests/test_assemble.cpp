#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kras/assemble.hpp"
#include "kras/benchmarks.hpp"
#include "kras/synth.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace assemble = kras::assemble;
namespace eda = kras::eda;
namespace quad = kras::quad;
using kras::ControllerStructure;
using kras::DelaySystem;
using kras::SupplyRate;

namespace {

DelaySystem scalar_system(double r) {
  DelaySystem s;
  s.n = s.m = s.p = s.q = 1;
  s.delays = {r};
  s.A = {MatrixXd::Constant(1, 1, -1.0), MatrixXd::Constant(1, 1, 0.2)};
  s.B = {MatrixXd::Constant(1, 1, 1.0), MatrixXd::Zero(1, 1)};
  s.C = {MatrixXd::Constant(1, 1, 1.0), MatrixXd::Zero(1, 1)};
  s.Bout = {MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)};
  s.D1 = MatrixXd::Constant(1, 1, 0.5);
  s.D2 = MatrixXd::Constant(1, 1, 0.1);
  s.fill_defaults();
  s.validate();
  return s;
}

kras::synth::SynthContext benchmark_context(int sigma, int lambda,
                                            ControllerStructure cs = ControllerStructure::Static) {
  DelaySystem sys = cs == ControllerStructure::Static
                        ? kras::benchmarks::multi_delay_example()
                        : kras::benchmarks::no_input_delay_example();
  auto bases = kras::benchmarks::example_bases(sys, sigma, lambda);
  return kras::synth::SynthContext::build(sys, bases, SupplyRate::l2_gain(sys.m, sys.q), cs);
}

}  // namespace

TEST_CASE("degenerate single constant basis: M row is [1/sqrt r, -1/sqrt r, 0]") {
  DelaySystem sys = scalar_system(0.8);
  auto basis = eda::build_basis({"1"}, {}, {}, -0.8, 0.0);
  auto ctx = kras::synth::SynthContext::build(sys, {basis}, SupplyRate::l2_gain(1, 1),
                                              ControllerStructure::Static);
  const auto& b = ctx.bold;
  REQUIRE(b.Mmat.rows() == 1);
  REQUIRE(b.Mmat.cols() == 3);
  const double is = 1.0 / std::sqrt(0.8);
  CHECK(b.Mmat(0, 0) == Catch::Approx(is).margin(1e-10));
  CHECK(b.Mmat(0, 1) == Catch::Approx(-is).margin(1e-10));
  CHECK(std::abs(b.Mmat(0, 2)) < 1e-10);

  // A = [A0 A1 | zero xi column | D1]; beta = 3.
  CHECK(b.dims.beta == 3);
  REQUIRE(b.A.rows() == 1);
  REQUIRE(b.A.cols() == 4);
  CHECK(b.A(0, 0) == -1.0);
  CHECK(b.A(0, 1) == 0.2);
  CHECK(std::abs(b.A(0, 2)) < 1e-12);
  CHECK(b.A(0, 3) == 0.5);
}

TEST_CASE("benchmark dimensions: beta and bold column counts") {
  auto ctx = benchmark_context(1, 1);
  const auto& dm = ctx.bold.dims;
  CHECK(dm.k_i[0] == 7);
  CHECK(dm.k_i[1] == 7);
  CHECK(dm.beta == 17);
  CHECK(ctx.bold.A.cols() == 17 * 2 + 1);
  CHECK(ctx.bold.A.rows() == 2);
  CHECK(ctx.bold.B1.cols() == 17 * 1 + 1);
  CHECK(ctx.bold.C.cols() == 35);
  CHECK(ctx.bold.Mmat.cols() == 1 + 2 + dm.vkappa);
  CHECK(ctx.bold.Ihat.rows() == dm.d * 2);
  CHECK(ctx.bold.Ihat.cols() == dm.vkappa * 2);
}

TEST_CASE("Lambda for delays (1, 1.7)") {
  auto ctx = benchmark_context(1, 1);
  MatrixXd want = MatrixXd::Zero(4, 4);
  want.topLeftCorner(2, 2) = MatrixXd::Identity(2, 2);
  want.bottomRightCorner(2, 2) = 0.7 * MatrixXd::Identity(2, 2);
  CHECK((ctx.bold.Lambda - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("T and Ttil reconstruct g pointwise") {
  auto ctx = benchmark_context(1, 1);
  for (int i = 0; i < 2; ++i) {
    const auto& g = ctx.grams[i];
    const auto& basis = ctx.bases[i];
    MatrixXd W = g.Hh.ldlt().solve(g.Gamma.transpose()).transpose();  // Gamma Hh^{-1}
    MatrixXd sqrt_Ee_inv = quad::inv_psd(g.sqrt_Ee);
    for (double frac : {0.1, 0.45, 0.8}) {
      double tau = basis.left + frac * (basis.right - basis.left);
      VectorXd h = basis.eval_h(tau);
      VectorXd eps = basis.eval_phi(tau) - W * h;
      VectorXd rec = g.T * (g.sqrt_Hh_inv * h) + g.Ttil * (sqrt_Ee_inv * eps);
      CHECK((rec - basis.eval_g(tau)).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("z(t) dynamics match the assembled M matrix (finite differences)") {
  auto ctx = benchmark_context(1, 1);
  const auto& dm = ctx.bold.dims;
  const int n = 2;

  // A smooth synthetic trajectory on [-r_nu - 1, 1].
  auto xfun = [](double t) {
    VectorXd v(2);
    v << std::sin(0.7 * t) + 0.3 * std::cos(2.1 * t), std::cos(1.3 * t) - 0.2 * std::sin(0.4 * t);
    return v;
  };

  auto xi_of = [&](double t) {
    VectorXd xi(dm.vkappa * n);
    int at = 0;
    for (int i = 0; i < 2; ++i) {
      MatrixXd blockint = quad::integrate([&](double tau) -> MatrixXd {
        return kras::kron(VectorXd(ctx.grams[i].sqrt_Hh_inv * ctx.bases[i].eval_h(tau)),
                          MatrixXd::Identity(n, n)) * xfun(t + tau);
      }, ctx.bases[i].left, ctx.bases[i].right, 1e-11);
      xi.segment(at, dm.vk_i[i] * n) = blockint;
      at += dm.vk_i[i] * n;
    }
    return xi;
  };

  auto z_of = [&](double t) {
    VectorXd z(dm.d * n);
    int at = 0;
    for (int i = 0; i < 2; ++i) {
      MatrixXd blockint = quad::integrate([&](double tau) -> MatrixXd {
        return kras::kron(VectorXd(ctx.grams[i].sqrt_Ff_inv * ctx.bases[i].eval_f(tau)),
                          MatrixXd::Identity(n, n)) * xfun(t + tau);
      }, ctx.bases[i].left, ctx.bases[i].right, 1e-11);
      z.segment(at, dm.d_i[i] * n) = blockint;
      at += dm.d_i[i] * n;
    }
    return z;
  };

  const double t = 0.3;
  VectorXd omega(dm.n + dm.nu * n + dm.vkappa * n);
  omega << xfun(t), xfun(t - 1.0), xfun(t - 1.7), xi_of(t);

  // z = Ihat xi.
  CHECK((z_of(t) - ctx.bold.Ihat * xi_of(t)).cwiseAbs().maxCoeff() < 1e-8);

  const double dt = 1e-5;
  VectorXd dz_fd = (z_of(t + dt) - z_of(t - dt)) / (2 * dt);
  VectorXd dz_model = kras::kron(ctx.bold.Mmat, MatrixXd::Identity(n, n)) * omega;
  CHECK((dz_fd - dz_model).cwiseAbs().maxCoeff() < 1e-6 * (1 + dz_model.cwiseAbs().maxCoeff()));
}

TEST_CASE("Xi builder at Q = R = I matches direct substitution") {
  auto ctx = benchmark_context(1, 1);
  const auto& dm = ctx.bold.dims;
  const int n = dm.n;
  std::vector<kras::sdp::AffineMat> Q, R;
  for (int i = 0; i < dm.nu; ++i) {
    Q.push_back(kras::sdp::AffineMat::constant(MatrixXd::Identity(n, n)));
    R.push_back(kras::sdp::AffineMat::constant(MatrixXd::Identity(n, n)));
  }
  kras::sdp::AffineMat J3 = kras::sdp::AffineMat::constant(MatrixXd::Identity(1, 1) * 2.0);
  MatrixXd Xi = assemble::xi_block(ctx.bold, Q, R, J3).eval(VectorXd::Zero(1));

  // Direct substitution: first bracket minus second bracket.
  MatrixXd first = kras::dirsum({MatrixXd((1 + 1.0) * MatrixXd::Identity(n, n)),
                                 MatrixXd((1 + 0.7) * MatrixXd::Identity(n, n)),
                                 MatrixXd::Zero(n, n), MatrixXd::Zero(dm.kappa * n, dm.kappa * n),
                                 MatrixXd::Zero(1, 1)});
  MatrixXd second = kras::dirsum(
      {MatrixXd::Zero(n, n), MatrixXd::Identity(2 * n, 2 * n),
       MatrixXd::Identity(dm.vkappa * n, dm.vkappa * n),
       MatrixXd::Identity(dm.mu * n, dm.mu * n), MatrixXd(2.0 * MatrixXd::Identity(1, 1))});
  CHECK((Xi - (first - second)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all-free analysis mode is refused as bilinear") {
  auto ctx = benchmark_context(1, 1);
  kras::sdp::SdpProblem prob;
  CHECK_THROWS_AS(assemble::lmi_analysis(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply,
                                         ControllerStructure::Static, assemble::AllFree{}),
                  kras::BilinearityError);
}

TEST_CASE("alpha_1 = 0 is refused") {
  auto ctx = benchmark_context(1, 1);
  kras::sdp::SdpProblem prob;
  std::vector<double> alpha(std::size_t(ctx.bold.dims.beta), 0.0);
  CHECK_THROWS_AS(assemble::lmi_convex(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply,
                                       ControllerStructure::Static, alpha),
                  kras::AlphaZero);
}

TEST_CASE("invalid Z is refused") {
  auto ctx = benchmark_context(1, 1);
  kras::sdp::SdpProblem prob;
  assemble::OverestimateAnchors anchors;
  anchors.P1t = MatrixXd::Identity(2, 2);
  anchors.P2t = MatrixXd::Zero(2, ctx.bold.dims.d * 2);
  anchors.gains_t.structure = ControllerStructure::Static;
  anchors.gains_t.K = MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(assemble::lmi_overestimate(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply,
                                             ControllerStructure::Static, anchors,
                                             MatrixXd(1.5 * MatrixXd::Identity(2, 2))),
                  kras::InvalidZ);
}

TEST_CASE("structural unknown counts of the analysis condition") {
  auto ctx = benchmark_context(1, 1);
  const auto& dm = ctx.bold.dims;
  // d = 8, n = 2: P1 carries 3 scalars, P2 32, P3 136, Q/R 12, K 2.
  CHECK(assemble::analysis_unknowns(dm, ControllerStructure::Static, /*k_fixed=*/true) == 183);
  CHECK(assemble::analysis_unknowns(dm, ControllerStructure::Static, /*k_fixed=*/false) == 150);

  // Declared variable counts in the emitted problems agree (gamma adds 1).
  kras::sdp::SdpProblem p1;
  kras::ControllerGains zero;
  zero.structure = ControllerStructure::Static;
  zero.K = MatrixXd::Zero(1, 2);
  assemble::lmi_analysis(p1, ctx.sys, ctx.bold, ctx.grams, ctx.supply, ControllerStructure::Static,
                         assemble::KFixed{zero});
  CHECK(p1.scalar_count() == 183 + 1);

  kras::sdp::SdpProblem p2;
  assemble::lmi_analysis(p2, ctx.sys, ctx.bold, ctx.grams, ctx.supply, ControllerStructure::Static,
                         assemble::PFixed{MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 16)});
  CHECK(p2.scalar_count() == 150 + 1);
}

TEST_CASE("emitted core blocks have the declared sizes and symmetry") {
  auto ctx = benchmark_context(1, 1);
  const auto& dm = ctx.bold.dims;
  kras::sdp::SdpProblem prob;
  auto vars = assemble::lmi_convex(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply,
                                   ControllerStructure::Static, ctx.default_alpha());
  (void)vars;
  bool found = false;
  for (const auto& blk : prob.blocks()) {
    if (blk.name == "th2.core") {
      found = true;
      CHECK(blk.expr.rows() == dm.n + dm.core());
      CHECK(blk.expr.cols() == blk.expr.rows());
    }
  }
  CHECK(found);
}
