#pragma once

// Closed-loop block-matrix assembly and the matrix-inequality emitters for
// the synthesis conditions: the analysis form (bilinear unless one side is
// fixed), the projection-lemma convexification, and the psd-convex
// overestimate used by the iterative algorithm.
//
// The augmented signal vector ordering is fixed throughout:
//   theta = [x; x(t-r_1..r_nu); xi_1..xi_nu; e_1..e_nu; w]
// with xi_i the sqrt(Hh_i)^{-1}-normalized h_i moments of the state history
// and e_i the sqrt(Ee_i)^{-1}-normalized least-squares error moments.

#include <Eigen/Dense>
#include <optional>
#include <variant>
#include <vector>

#include "kras/eda.hpp"
#include "kras/linalg.hpp"
#include "kras/sdp.hpp"
#include "kras/system.hpp"

namespace kras::assemble {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using sdp::AffineMat;
using sdp::LmiBlock;
using sdp::SdpProblem;
using sdp::VarRef;

struct Dims {
  int n = 0, m = 0, p = 0, q = 0, nu = 0;
  std::vector<int> d_i, delta_i, mu_i, vk_i, k_i;
  int d = 0, vkappa = 0, mu = 0, kappa = 0, beta = 0;

  int theta() const { return beta * n + q; }    // columns of bold A / C
  int theta_u() const { return beta * p + q; }  // columns of bold B1 / B2
  int core() const { return beta * n + q + m; } // size of the main inequality

  int off_x() const { return 0; }
  int off_chi() const { return n; }
  int off_xi() const { return n + nu * n; }
  int off_xi_i(int i) const {  // 0-based interval
    int at = off_xi();
    for (int j = 0; j < i; ++j) at += vk_i[j] * n;
    return at;
  }
  int off_e() const { return off_xi() + vkappa * n; }
  int off_e_i(int i) const {
    int at = off_e();
    for (int j = 0; j < i; ++j) at += mu_i[j] * n;
    return at;
  }
  int off_w() const { return off_e() + mu * n; }
};

/// All constant block matrices of the augmented closed-loop form.
struct BoldSet {
  Dims dims;
  MatrixXd A;       // n x theta
  MatrixXd B1;      // n x theta_u
  MatrixXd C;       // m x theta
  MatrixXd B2;      // m x theta_u
  MatrixXd Mmat;    // d x (1 + nu + vkappa); d z(t)/dt = (Mmat kron I_n) omega
  MatrixXd Ihat;    // dn x vkappa n;  z(t) = Ihat xi(t)
  MatrixXd Lambda;  // nu*n
  MatrixXd S;       // (n + dn) x theta; eta = S theta
};

inline BoldSet bold_matrices(const DelaySystem& sys, const std::vector<eda::EdaDecomposition>& dec,
                             const std::vector<quad::GramianSet>& gr) {
  const int nu = sys.nu();
  if (int(dec.size()) != nu || int(gr.size()) != nu)
    throw DimensionMismatch("bold_matrices: need one decomposition and gramian set per interval");

  BoldSet b;
  Dims& dm = b.dims;
  dm.n = sys.n;
  dm.m = sys.m;
  dm.p = sys.p;
  dm.q = sys.q;
  dm.nu = nu;
  for (int i = 0; i < nu; ++i) {
    const auto& basis = dec[i].basis;
    dm.d_i.push_back(basis.d());
    dm.delta_i.push_back(basis.delta());
    dm.mu_i.push_back(basis.mu());
    dm.vk_i.push_back(basis.vkappa());
    dm.k_i.push_back(basis.kappa());
    dm.d += basis.d();
    dm.vkappa += basis.vkappa();
    dm.mu += basis.mu();
    dm.kappa += basis.kappa();
  }
  dm.beta = 1 + nu + dm.kappa;
  const int n = dm.n, m = dm.m, p = dm.p, q = dm.q;

  auto check = [&](const MatrixXd& M, int r, int c, const char* name) {
    if (M.rows() != r || M.cols() != c)
      throw DimensionMismatch(std::string("bold_matrices: block ") + name + " has shape " +
                              std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
                              ", expected " + std::to_string(r) + "x" + std::to_string(c));
  };

  // Bold A / B1 / C / B2 per the augmented closed-loop expansion.
  std::vector<MatrixXd> Ar, B1r, Cr, B2r;
  for (int i = 0; i <= nu; ++i) {
    Ar.push_back(sys.A[i]);
    B1r.push_back(sys.B[i]);
    Cr.push_back(sys.C[i]);
    B2r.push_back(sys.Bout[i]);
  }
  const MatrixXd In = MatrixXd::Identity(n, n);
  const MatrixXd Ip = MatrixXd::Identity(p, p);
  for (int i = 0; i < nu; ++i) {
    check(dec[i].Ahat, n, dm.k_i[i] * n, "Ahat");
    check(dec[i].Bhat, n, dm.k_i[i] * p, "Bhat");
    check(dec[i].Chat, m, dm.k_i[i] * n, "Chat");
    check(dec[i].Bouthat, m, dm.k_i[i] * p, "Bouthat");
    check(gr[i].T, dm.k_i[i], dm.vk_i[i], "T");
    check(gr[i].Ttil, dm.k_i[i], dm.mu_i[i], "Ttil");
    Ar.push_back(dec[i].Ahat * kron(gr[i].T, In));
    B1r.push_back(dec[i].Bhat * kron(gr[i].T, Ip));
    Cr.push_back(dec[i].Chat * kron(gr[i].T, In));
    B2r.push_back(dec[i].Bouthat * kron(gr[i].T, Ip));
  }
  for (int i = 0; i < nu; ++i) {
    Ar.push_back(dec[i].Ahat * kron(gr[i].Ttil, In));
    B1r.push_back(dec[i].Bhat * kron(gr[i].Ttil, Ip));
    Cr.push_back(dec[i].Chat * kron(gr[i].Ttil, In));
    B2r.push_back(dec[i].Bouthat * kron(gr[i].Ttil, Ip));
  }
  Ar.push_back(sys.D1);
  B1r.push_back(MatrixXd::Zero(n, q));
  Cr.push_back(sys.D2);
  B2r.push_back(MatrixXd::Zero(m, q));
  b.A = hcat(Ar);
  b.B1 = hcat(B1r);
  b.C = hcat(Cr);
  b.B2 = hcat(B2r);
  check(b.A, n, dm.theta(), "A");
  check(b.B1, n, dm.theta_u(), "B1");
  check(b.C, m, dm.theta(), "C");
  check(b.B2, m, dm.theta_u(), "B2");

  // Mmat: d x (1 + nu + vkappa). Column blocks follow [x(t-r_0..r_nu); xi].
  b.Mmat = MatrixXd::Zero(dm.d, 1 + nu + dm.vkappa);
  {
    int rat = 0, xat = 1 + nu;
    for (int i = 0; i < nu; ++i) {
      const auto& basis = dec[i].basis;
      const VectorXd f_right = basis.eval_f(sys.interval_right(i));  // f_i(-r_{i-1})
      const VectorXd f_left = basis.eval_f(sys.interval_left(i));    // f_i(-r_i)
      b.Mmat.block(rat, i, dm.d_i[i], 1) = gr[i].sqrt_Ff_inv * f_right;
      b.Mmat.block(rat, i + 1, dm.d_i[i], 1) -= gr[i].sqrt_Ff_inv * f_left;
      b.Mmat.block(rat, xat, dm.d_i[i], dm.vk_i[i]) =
          -gr[i].sqrt_Ff_inv * dec[i].M * gr[i].sqrt_Hh;
      rat += dm.d_i[i];
      xat += dm.vk_i[i];
    }
  }

  // Ihat: diag_i( sqrt(Ff)^-1 [O I] sqrt(Hh) ) kron I_n.
  {
    std::vector<MatrixXd> blocks;
    for (int i = 0; i < nu; ++i) {
      MatrixXd sel = MatrixXd::Zero(dm.d_i[i], dm.vk_i[i]);
      sel.rightCols(dm.d_i[i]) = MatrixXd::Identity(dm.d_i[i], dm.d_i[i]);
      blocks.push_back(gr[i].sqrt_Ff_inv * sel * gr[i].sqrt_Hh);
    }
    b.Ihat = kron(dirsum(blocks), In);
  }

  // Lambda = diag_i (r_i - r_{i-1}) I_n.
  {
    std::vector<MatrixXd> blocks;
    for (int i = 0; i < nu; ++i) blocks.push_back((sys.r(i + 1) - sys.r(i)) * In);
    b.Lambda = dirsum(blocks);
  }

  // S: eta = [x; z] = S theta.
  b.S = MatrixXd::Zero(n + dm.d * n, dm.theta());
  b.S.topLeftCorner(n, n) = In;
  b.S.block(n, dm.off_xi(), dm.d * n, dm.vkappa * n) = b.Ihat;

  return b;
}

// ---------------------------------------------------------------------------
// Gain expressions (numeric or decision-variable) shared by the emitters.

/// Gains as affine expressions; constants carry no variable terms.
struct GainExpr {
  ControllerStructure structure = ControllerStructure::Static;
  AffineMat K;                     // static: p x n
  std::vector<AffineMat> K_point;  // delayed: 0..nu, each p x n
  std::vector<AffineMat> K_dist;   // delayed: 1..nu, each p x (kappa_i n)
};

inline GainExpr gain_expr_from_values(const ControllerGains& g) {
  GainExpr e;
  e.structure = g.structure;
  if (g.structure == ControllerStructure::Static) {
    e.K = AffineMat::constant(g.K);
  } else {
    for (const auto& Kp : g.K_point) e.K_point.push_back(AffineMat::constant(Kp));
    for (const auto& Kd : g.K_dist) e.K_dist.push_back(AffineMat::constant(Kd));
  }
  return e;
}

/// Static mode: the (beta p + q) x (beta n + q) map [(I_beta kron K) (+) O_q].
inline AffineMat gain_lift_static(const AffineMat& K, const Dims& dm) {
  AffineMat lift = sdp::kron_const_affine(MatrixXd::Identity(dm.beta, dm.beta), K);
  return sdp::dirsum({lift, AffineMat::zero(dm.q, dm.q)});
}

/// Delayed mode: the p x (beta n + q) row
///   [K_0 .. K_nu | Kd_i (T_i kron I_n) | Kd_i (Ttil_i kron I_n) | O_{p,q}].
inline AffineMat gain_row_delayed(const GainExpr& g, const Dims& dm,
                                  const std::vector<quad::GramianSet>& gr) {
  const MatrixXd In = MatrixXd::Identity(dm.n, dm.n);
  std::vector<AffineMat> parts;
  for (int i = 0; i <= dm.nu; ++i) parts.push_back(g.K_point[i]);
  for (int i = 0; i < dm.nu; ++i) parts.push_back(g.K_dist[i] * kron(gr[i].T, In));
  for (int i = 0; i < dm.nu; ++i) parts.push_back(g.K_dist[i] * kron(gr[i].Ttil, In));
  parts.push_back(AffineMat::zero(dm.p, dm.q));
  return sdp::hcat(parts);
}

/// Closed-loop state row Omega (n x theta) and output row Sigma (m x theta).
struct ClRows {
  AffineMat Omega, Sigma;
};

inline ClRows closed_loop_rows(const DelaySystem& sys, const BoldSet& b,
                               const std::vector<quad::GramianSet>& gr, const GainExpr& g) {
  ClRows r;
  if (g.structure == ControllerStructure::Static) {
    AffineMat lift = gain_lift_static(g.K, b.dims);
    r.Omega = AffineMat::constant(b.A) + AffineMat(b.B1 * lift);
    r.Sigma = AffineMat::constant(b.C) + AffineMat(b.B2 * lift);
  } else {
    AffineMat row = gain_row_delayed(g, b.dims, gr);
    r.Omega = AffineMat::constant(b.A) + AffineMat(sys.B[0] * row);
    r.Sigma = AffineMat::constant(b.C) + AffineMat(sys.Bout[0] * row);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Supply-rate blocks as affine expressions (gamma may be a decision variable).

struct SupplyExpr {
  AffineMat J1;  // m x m
  AffineMat J3;  // q x q
  MatrixXd J2;   // m x q, constant in both modes
  MatrixXd Jt;   // m x m, constant in both modes
};

inline SupplyExpr supply_expr(const SupplyRate& s, std::optional<VarRef> gamma) {
  SupplyExpr e;
  if (s.l2) {
    if (!gamma) throw Error("supply_expr: L2-gain supply rate needs a gamma variable");
    e.J1 = AffineMat(s.m, s.m);
    e.J3 = AffineMat(s.q, s.q);
    for (int i = 0; i < s.m; ++i) e.J1.add_term(i, i, gamma->base, -1.0);
    for (int i = 0; i < s.q; ++i) e.J3.add_term(i, i, gamma->base, 1.0);
    e.J2 = MatrixXd::Zero(s.m, s.q);
    e.Jt = MatrixXd::Identity(s.m, s.m);
  } else {
    e.J1 = AffineMat::constant(s.J1);
    e.J3 = AffineMat::constant(s.J3);
    e.J2 = s.J2;
    e.Jt = s.Jt;
  }
  return e;
}

// ---------------------------------------------------------------------------
// The variable-dependent blocks of the main inequality.

/// Xi(Q, R): the pointwise/interval quadratic bookkeeping block (theta-sized).
inline AffineMat xi_block(const BoldSet& b, const std::vector<AffineMat>& Q,
                          const std::vector<AffineMat>& R, const AffineMat& J3) {
  const Dims& dm = b.dims;
  const int nu = dm.nu, n = dm.n;
  std::vector<AffineMat> first;
  {
    std::vector<AffineMat> qr;
    for (int i = 0; i < nu; ++i) qr.push_back(Q[i] + (b.Lambda.block(i * n, i * n, n, n)(0, 0)) * R[i]);
    first = {sdp::dirsum(qr), AffineMat::zero(n, n), AffineMat::zero(dm.kappa * n, dm.kappa * n),
             AffineMat::zero(dm.q, dm.q)};
  }
  std::vector<AffineMat> second = {AffineMat::zero(n, n)};
  second.push_back(sdp::dirsum(Q));
  {
    std::vector<AffineMat> rr;
    for (int i = 0; i < nu; ++i)
      rr.push_back(sdp::kron_const_affine(MatrixXd::Identity(dm.vk_i[i], dm.vk_i[i]), R[i]));
    second.push_back(sdp::dirsum(rr));
  }
  {
    std::vector<AffineMat> rr;
    for (int i = 0; i < nu; ++i)
      rr.push_back(sdp::kron_const_affine(MatrixXd::Identity(dm.mu_i[i], dm.mu_i[i]), R[i]));
    second.push_back(sdp::dirsum(rr));
  }
  second.push_back(J3);
  return sdp::dirsum(first) - sdp::dirsum(second);
}

/// Phi(P2, P3, Q, R; Sigma): everything in the main inequality except the
/// Sy(P^T Pi) coupling. Its bottom-right m-block is J1.
inline AffineMat phi_block(const BoldSet& b, const AffineMat& P2, const AffineMat& P3,
                           const std::vector<AffineMat>& Q, const std::vector<AffineMat>& R,
                           const AffineMat& Sigma, const SupplyExpr& js) {
  const Dims& dm = b.dims;
  const int n = dm.n, m = dm.m, q = dm.q, nu = dm.nu, dn = dm.d * n;
  const int N = dm.core();

  AffineMat Cp = sdp::vcat({P2, AffineMat::zero(nu * n, dn),
                            AffineMat(MatrixXd(b.Ihat.transpose()) * P3),
                            AffineMat::zero(dm.mu * n + q + m, dn)});
  MatrixXd Mrow = hcat({kron(b.Mmat, MatrixXd::Identity(n, n)),
                        MatrixXd::Zero(dn, dm.mu * n + q + m)});
  MatrixXd Cj = vcat({MatrixXd::Zero(dm.beta * n, m), MatrixXd(-js.J2.transpose()), js.Jt});
  AffineMat Sigrow = sdp::hcat({Sigma, AffineMat::zero(m, m)});

  AffineMat phi = sdp::sy(Cp * Mrow + Cj * Sigrow);
  phi = phi + sdp::dirsum({xi_block(b, Q, R, js.J3), js.J1});
  if (phi.rows() != N) throw DimensionMismatch("phi_block: size audit failed");
  return phi;
}

/// P-row [P1, O, P2 Ihat, O] of width core().
inline AffineMat p_row(const BoldSet& b, const AffineMat& P1, const AffineMat& P2) {
  const Dims& dm = b.dims;
  return sdp::hcat({P1, AffineMat::zero(dm.n, dm.nu * dm.n), P2 * b.Ihat,
                    AffineMat::zero(dm.n, dm.mu * dm.n + dm.q + dm.m)});
}

// ---------------------------------------------------------------------------
// Variable bundles declared by the emitters.

struct GainVars {
  ControllerStructure structure = ControllerStructure::Static;
  VarRef K;
  std::vector<VarRef> K_point;
  std::vector<VarRef> K_dist;
};

inline GainVars declare_gains(SdpProblem& prob, const Dims& dm, ControllerStructure cs,
                              const char* prefix) {
  GainVars g;
  g.structure = cs;
  if (cs == ControllerStructure::Static) {
    g.K = prob.rect(std::string(prefix) + ".K", dm.p, dm.n);
  } else {
    g.K_point.push_back(prob.rect(std::string(prefix) + ".K0", dm.p, dm.n));
    for (int i = 1; i <= dm.nu; ++i) {
      if (cs == ControllerStructure::Delayed)
        g.K_point.push_back(prob.rect(std::string(prefix) + ".K" + std::to_string(i), dm.p, dm.n));
    }
    if (cs == ControllerStructure::Delayed)
      for (int i = 1; i <= dm.nu; ++i)
        g.K_dist.push_back(
            prob.rect(std::string(prefix) + ".Kd" + std::to_string(i), dm.p, dm.k_i[i - 1] * dm.n));
  }
  return g;
}

inline GainExpr gain_expr_from_vars(const SdpProblem& prob, const GainVars& g, const Dims& dm) {
  GainExpr e;
  e.structure = g.structure == ControllerStructure::DelayedStatic ? ControllerStructure::Delayed
                                                                  : g.structure;
  if (g.structure == ControllerStructure::Static) {
    e.K = prob.var_mat(g.K);
    return e;
  }
  e.K_point.push_back(prob.var_mat(g.K_point[0]));
  for (int i = 1; i <= dm.nu; ++i) {
    if (g.structure == ControllerStructure::Delayed)
      e.K_point.push_back(prob.var_mat(g.K_point[i]));
    else
      e.K_point.push_back(AffineMat::zero(dm.p, dm.n));
  }
  for (int i = 0; i < dm.nu; ++i) {
    if (g.structure == ControllerStructure::Delayed)
      e.K_dist.push_back(prob.var_mat(g.K_dist[i]));
    else
      e.K_dist.push_back(AffineMat::zero(dm.p, dm.k_i[i] * dm.n));
  }
  return e;
}

struct CertVars {
  VarRef P1, P2, P3;
  std::vector<VarRef> Q, R;
  std::optional<VarRef> gamma;
};

inline CertVars declare_certificates(SdpProblem& prob, const Dims& dm, bool with_gamma,
                                     const char* prefix) {
  CertVars v;
  v.P1 = prob.symmetric(std::string(prefix) + ".P1", dm.n);
  v.P2 = prob.rect(std::string(prefix) + ".P2", dm.n, dm.d * dm.n);
  v.P3 = prob.symmetric(std::string(prefix) + ".P3", dm.d * dm.n);
  for (int i = 0; i < dm.nu; ++i) {
    v.Q.push_back(prob.symmetric(std::string(prefix) + ".Q" + std::to_string(i + 1), dm.n));
    v.R.push_back(prob.symmetric(std::string(prefix) + ".R" + std::to_string(i + 1), dm.n));
  }
  if (with_gamma) v.gamma = prob.scalar(std::string(prefix) + ".gamma");
  return v;
}

/// (47)/(73)-style positivity block on [P1 P2; * P3] augmented by Q.
inline LmiBlock p_positivity(const BoldSet& b, const AffineMat& P1, const AffineMat& P2,
                             const AffineMat& P3, const std::vector<AffineMat>& Q,
                             const std::string& name) {
  const Dims& dm = b.dims;
  AffineMat Pfull = sdp::vcat({sdp::hcat({P1, P2}), sdp::hcat({P2.transpose(), P3})});
  std::vector<AffineMat> aug = {AffineMat::zero(dm.n, dm.n)};
  for (int i = 0; i < dm.nu; ++i)
    aug.push_back(sdp::kron_const_affine(MatrixXd::Identity(dm.d_i[i], dm.d_i[i]), Q[i]));
  return LmiBlock::pos(name, Pfull + sdp::dirsum(aug));
}

inline void add_qr_positivity(SdpProblem& prob, const CertVars& v, const char* prefix) {
  for (std::size_t i = 0; i < v.Q.size(); ++i) {
    prob.add(LmiBlock::pos(std::string(prefix) + ".Q" + std::to_string(i + 1),
                           prob.var_mat(v.Q[i])));
    prob.add(LmiBlock::pos(std::string(prefix) + ".R" + std::to_string(i + 1),
                           prob.var_mat(v.R[i])));
  }
}

inline void add_gamma_floor(SdpProblem& prob, const VarRef& gamma) {
  AffineMat g(1, 1);
  g.add_term(0, 0, gamma.base, 1.0);
  g.add_const(0, 0, -1e-6);
  prob.add(LmiBlock::pos("gamma.floor", g, 0.0));
}

// ---------------------------------------------------------------------------
// Emitters.

/// Fixing mode for the analysis condition.
struct KFixed {
  ControllerGains gains;
};
struct PFixed {
  MatrixXd P1, P2;
};
struct AllFree {};
using Fixing = std::variant<KFixed, PFixed, AllFree>;

struct AnalysisEmit {
  CertVars cert;        // P3/Q/R always variables; P1/P2 variables only in KFixed
  GainVars gains;       // populated in PFixed mode
  bool gains_are_vars = false;
};

/// Emit (47)-(49) into `prob`. In KFixed mode the decision variables are
/// {P1, P2, P3, Q_i, R_i, gamma}; in PFixed mode {gains, P3, Q_i, R_i, gamma}.
/// The gain multiplies only P1, P2 through the Sy(P^T Pi) coupling, so fixing
/// either side restores affinity; AllFree is bilinear and refused.
inline AnalysisEmit lmi_analysis(SdpProblem& prob, const DelaySystem& sys, const BoldSet& b,
                                 const std::vector<quad::GramianSet>& gr, const SupplyRate& supply,
                                 ControllerStructure cs, const Fixing& fixing) {
  const Dims& dm = b.dims;
  if (std::holds_alternative<AllFree>(fixing))
    throw BilinearityError(
        "lmi_analysis: with gains and P1/P2 both free the condition is bilinear and cannot be "
        "sent to the convex solver");

  AnalysisEmit out;
  const bool k_fixed = std::holds_alternative<KFixed>(fixing);

  // Certificates.
  CertVars v;
  AffineMat P1m, P2m;
  if (k_fixed) {
    v = declare_certificates(prob, dm, supply.l2, "th1");
    P1m = prob.var_mat(v.P1);
    P2m = prob.var_mat(v.P2);
  } else {
    const auto& pf = std::get<PFixed>(fixing);
    if (pf.P1.rows() != dm.n || pf.P2.cols() != dm.d * dm.n)
      throw DimensionMismatch("lmi_analysis: fixed P1/P2 have wrong shape");
    v.P3 = prob.symmetric("th1.P3", dm.d * dm.n);
    for (int i = 0; i < dm.nu; ++i) {
      v.Q.push_back(prob.symmetric("th1.Q" + std::to_string(i + 1), dm.n));
      v.R.push_back(prob.symmetric("th1.R" + std::to_string(i + 1), dm.n));
    }
    if (supply.l2) v.gamma = prob.scalar("th1.gamma");
    P1m = AffineMat::constant(pf.P1);
    P2m = AffineMat::constant(pf.P2);
  }
  out.cert = v;

  // Gains.
  GainExpr g;
  if (k_fixed) {
    g = gain_expr_from_values(std::get<KFixed>(fixing).gains);
  } else {
    out.gains = declare_gains(prob, dm, cs, "th1");
    out.gains_are_vars = true;
    g = gain_expr_from_vars(prob, out.gains, dm);
  }

  SupplyExpr js = supply_expr(supply, v.gamma);
  std::vector<AffineMat> Q, R;
  for (int i = 0; i < dm.nu; ++i) {
    Q.push_back(prob.var_mat(v.Q[i]));
    R.push_back(prob.var_mat(v.R[i]));
  }

  prob.add(p_positivity(b, P1m, P2m, prob.var_mat(v.P3), Q, "th1.p_pos"));
  add_qr_positivity(prob, v, "th1");
  if (v.gamma) add_gamma_floor(prob, *v.gamma);

  ClRows rows = closed_loop_rows(sys, b, gr, g);
  AffineMat Pi = sdp::hcat({rows.Omega, AffineMat::zero(dm.n, dm.m)});
  AffineMat core = sdp::sy(p_row(b, P1m, P2m).transpose() * Pi) +
                   phi_block(b, P2m, prob.var_mat(v.P3), Q, R, rows.Sigma, js);
  prob.add(LmiBlock::neg("th1.core", core));
  return out;
}

// ---------------------------------------------------------------------------

struct ConvexVars {
  VarRef X;
  CertVars cert;  // acute P1/P2/P3/Q/R and gamma
  GainVars V;     // V (static) or V0..Vnu, Vd_i (delayed)
};

/// Emit the projection-lemma convexification into `prob`. Gains recover as
/// K = V X^{-1} (static) or K_i = V_i X^{-1}, Kd_i = Vd_i (I kron X^{-1}).
inline ConvexVars lmi_convex(SdpProblem& prob, const DelaySystem& sys, const BoldSet& b,
                             const std::vector<quad::GramianSet>& gr, const SupplyRate& supply,
                             ControllerStructure cs, const std::vector<double>& alpha) {
  const Dims& dm = b.dims;
  if (int(alpha.size()) != dm.beta)
    throw DimensionMismatch("lmi_convex: alpha must have beta = " + std::to_string(dm.beta) +
                            " entries");
  if (alpha[0] == 0.0)
    throw AlphaZero("lmi_convex: alpha_1 = 0 makes the leading diagonal block infeasible");

  ConvexVars out;
  out.X = prob.symmetric("th2.X", dm.n);
  out.cert = declare_certificates(prob, dm, supply.l2, "th2");
  out.V = declare_gains(prob, dm, cs, "th2.V");

  AffineMat Xm = prob.var_mat(out.X);
  SupplyExpr js = supply_expr(supply, out.cert.gamma);
  std::vector<AffineMat> Q, R;
  for (int i = 0; i < dm.nu; ++i) {
    Q.push_back(prob.var_mat(out.cert.Q[i]));
    R.push_back(prob.var_mat(out.cert.R[i]));
  }
  AffineMat P1m = prob.var_mat(out.cert.P1);
  AffineMat P2m = prob.var_mat(out.cert.P2);
  AffineMat P3m = prob.var_mat(out.cert.P3);

  prob.add(p_positivity(b, P1m, P2m, P3m, Q, "th2.p_pos"));
  add_qr_positivity(prob, out.cert, "th2");
  if (out.cert.gamma) add_gamma_floor(prob, *out.cert.gamma);

  // Pi-acute and Sigma-acute: congruence-transformed closed-loop rows.
  const MatrixXd Ibeta = MatrixXd::Identity(dm.beta, dm.beta);
  AffineMat XI = sdp::dirsum({sdp::kron_const_affine(Ibeta, Xm),
                              AffineMat::constant(MatrixXd::Identity(dm.q, dm.q))});
  GainExpr gv = gain_expr_from_vars(prob, out.V, dm);
  AffineMat PiA(dm.n, dm.theta()), SigA(dm.m, dm.theta());
  if (cs == ControllerStructure::Static) {
    AffineMat VL = gain_lift_static(gv.K, dm);
    PiA = AffineMat::constant(b.A) * XI + AffineMat::constant(b.B1) * VL;
    SigA = AffineMat::constant(b.C) * XI + AffineMat::constant(b.B2) * VL;
  } else {
    AffineMat Vrow = gain_row_delayed(gv, dm, gr);
    PiA = AffineMat::constant(b.A) * XI + MatrixXd(sys.B[0]) * Vrow;
    SigA = AffineMat::constant(b.C) * XI + MatrixXd(sys.Bout[0]) * Vrow;
  }
  AffineMat PiAcute = sdp::hcat({PiA, AffineMat::zero(dm.n, dm.m)});

  // Sy(col(I, alpha_i I, O) [-X PiAcute]) + [O P; * Phi] < 0.
  std::vector<MatrixXd> colparts = {MatrixXd::Identity(dm.n, dm.n)};
  for (int i = 0; i < dm.beta; ++i)
    colparts.push_back(alpha[i] * MatrixXd::Identity(dm.n, dm.n));
  colparts.push_back(MatrixXd::Zero(dm.q + dm.m, dm.n));
  MatrixXd colAlpha = vcat(colparts);

  AffineMat left = sdp::hcat({-1.0 * Xm, PiAcute});
  AffineMat Sy_part = sdp::sy(AffineMat::constant(colAlpha) * left);

  AffineMat Prow = p_row(b, P1m, P2m);
  AffineMat Phi = phi_block(b, P2m, P3m, Q, R, SigA, js);
  AffineMat corner = sdp::vcat({sdp::hcat({AffineMat::zero(dm.n, dm.n), Prow}),
                                sdp::hcat({Prow.transpose(), Phi})});
  prob.add(LmiBlock::neg("th2.core", Sy_part + corner));
  return out;
}

// ---------------------------------------------------------------------------

struct OverestimateAnchors {
  MatrixXd P1t, P2t;       // anchor P-blocks
  ControllerGains gains_t; // anchor gains
};

struct OverestimateEmit {
  CertVars cert;
  GainVars gains;
};

/// Emit (47), (48) and the 3x3 overestimate inequality whose feasibility
/// implies the analysis condition; tight when the variables sit at the
/// anchors. Z must satisfy Z (+) (I - Z) > 0.
inline OverestimateEmit lmi_overestimate(SdpProblem& prob, const DelaySystem& sys,
                                         const BoldSet& b,
                                         const std::vector<quad::GramianSet>& gr,
                                         const SupplyRate& supply, ControllerStructure cs,
                                         const OverestimateAnchors& anchors, const MatrixXd& Z) {
  const Dims& dm = b.dims;
  const int n = dm.n, N = dm.core();
  if (Z.rows() != n || Z.cols() != n) throw DimensionMismatch("lmi_overestimate: Z must be n x n");
  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Z + Z.transpose()));
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (lo <= 0 || hi >= 1)
      throw InvalidZ("lmi_overestimate: Z and I - Z must both be positive definite");
  }

  OverestimateEmit out;
  out.cert = declare_certificates(prob, dm, supply.l2, "ica");
  out.gains = declare_gains(prob, dm, cs, "ica");

  AffineMat P1m = prob.var_mat(out.cert.P1);
  AffineMat P2m = prob.var_mat(out.cert.P2);
  AffineMat P3m = prob.var_mat(out.cert.P3);
  SupplyExpr js = supply_expr(supply, out.cert.gamma);
  std::vector<AffineMat> Q, R;
  for (int i = 0; i < dm.nu; ++i) {
    Q.push_back(prob.var_mat(out.cert.Q[i]));
    R.push_back(prob.var_mat(out.cert.R[i]));
  }

  prob.add(p_positivity(b, P1m, P2m, P3m, Q, "ica.p_pos"));
  add_qr_positivity(prob, out.cert, "ica");
  if (out.cert.gamma) add_gamma_floor(prob, *out.cert.gamma);

  // N = B K (static) or B0 [Kbold O] (delayed), as affine n x N rows.
  GainExpr gv = gain_expr_from_vars(prob, out.gains, dm);
  GainExpr ga = gain_expr_from_values(anchors.gains_t);
  auto n_row = [&](const GainExpr& g) -> AffineMat {
    if (g.structure == ControllerStructure::Static) {
      AffineMat lift = sdp::dirsum({sdp::kron_const_affine(
                                        MatrixXd::Identity(dm.beta, dm.beta), g.K),
                                    AffineMat::zero(dm.q + dm.m, dm.q + dm.m)});
      MatrixXd Bfull = hcat({b.B1, MatrixXd::Zero(n, dm.m)});
      return AffineMat::constant(Bfull) * lift;
    }
    AffineMat row = sdp::hcat({gain_row_delayed(g, dm, gr), AffineMat::zero(dm.p, dm.m)});
    return MatrixXd(sys.B[0]) * row;
  };
  AffineMat Nvar = n_row(gv);
  MatrixXd Ntil = n_row(ga).constant_part();

  AffineMat Prow = p_row(b, P1m, P2m);
  MatrixXd Ptil = hcat({anchors.P1t, MatrixXd::Zero(n, dm.nu * n),
                        MatrixXd(anchors.P2t * b.Ihat), MatrixXd::Zero(n, dm.mu * n + dm.q + dm.m)});

  // Sigma stays an exact affine function of the gains inside Phi-hat.
  ClRows rows = closed_loop_rows(sys, b, gr, gv);
  MatrixXd Arow = hcat({b.A, MatrixXd::Zero(n, dm.m)});
  AffineMat PhiHat = sdp::sy(Prow.transpose() * Arow) +
                     phi_block(b, P2m, P3m, Q, R, rows.Sigma, js);

  AffineMat core11 = PhiHat + sdp::sy(AffineMat::constant(Ptil.transpose()) * Nvar +
                                      Prow.transpose() * Ntil -
                                      AffineMat::constant(Ptil.transpose() * Ntil));

  AffineMat row1 = sdp::hcat({core11, Prow.transpose() - AffineMat::constant(Ptil.transpose()),
                              Nvar.transpose() - AffineMat::constant(Ntil.transpose())});
  AffineMat row2 = sdp::hcat({Prow - AffineMat::constant(Ptil),
                              AffineMat::constant(MatrixXd(-Z)), AffineMat::zero(n, n)});
  AffineMat row3 = sdp::hcat({Nvar - AffineMat::constant(Ntil), AffineMat::zero(n, n),
                              AffineMat::constant(MatrixXd(Z - MatrixXd::Identity(n, n)))});
  AffineMat big = sdp::vcat({row1, row2, row3});
  if (big.rows() != N + 2 * n) throw DimensionMismatch("lmi_overestimate: size audit failed");
  // Strictness margin pinned to the anchor-free data scale so that large
  // anchor gains cannot inflate it between iterations.
  prob.add(LmiBlock::neg("ica.core", big, LmiBlock::default_margin(PhiHat)));
  return out;
}

/// Structural unknown count (scalar decision variables) of the analysis
/// condition in a given mode, gamma excluded.
inline int analysis_unknowns(const Dims& dm, ControllerStructure cs, bool k_fixed) {
  int count = 0;
  if (k_fixed) {
    count += dm.n * (dm.n + 1) / 2;              // P1
    count += dm.n * dm.d * dm.n;                 // P2
  } else {
    if (cs == ControllerStructure::Static) count += dm.p * dm.n;
    else {
      int npoint = cs == ControllerStructure::Delayed ? dm.nu + 1 : 1;
      count += npoint * dm.p * dm.n;
      if (cs == ControllerStructure::Delayed)
        for (int i = 0; i < dm.nu; ++i) count += dm.p * dm.k_i[i] * dm.n;
    }
  }
  count += (dm.d * dm.n) * (dm.d * dm.n + 1) / 2;  // P3
  count += 2 * dm.nu * dm.n * (dm.n + 1) / 2;      // Q_i, R_i
  return count;
}

}  // namespace kras::assemble
