#pragma once

// Controller synthesis: convex initialization through the projection-lemma
// condition, alternating refinement with one side of the bilinearity fixed,
// and the proximal inner-convex-approximation loop. A single run is
// sequential; independent runs (parameter sweeps) may execute concurrently.

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "kras/assemble.hpp"
#include "kras/solver.hpp"

namespace kras::synth {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using sdp::AffineMat;

struct SynthContext {
  DelaySystem sys;
  std::vector<eda::IntervalBasis> bases;
  std::vector<eda::EdaDecomposition> dec;
  std::vector<quad::GramianSet> grams;
  assemble::BoldSet bold;
  SupplyRate supply;
  ControllerStructure ctrl = ControllerStructure::Static;
  sdp::SolveSettings solver;

  static SynthContext build(DelaySystem system, std::vector<eda::IntervalBasis> bases,
                            SupplyRate supply, ControllerStructure ctrl) {
    system.fill_defaults();
    system.validate();
    if (ctrl != ControllerStructure::Static && system.input_delays)
      throw Error("delayed controllers require the no-input-delay system form");
    SynthContext c;
    c.sys = std::move(system);
    c.bases = std::move(bases);
    for (int i = 0; i < c.sys.nu(); ++i) {
      c.dec.push_back(eda::decompose(c.bases[i], c.sys.Atil[i], c.sys.Btil[i], c.sys.Ctil[i],
                                     c.sys.Bouttil[i]));
      c.grams.push_back(quad::interval_data(c.bases[i]));
    }
    c.bold = assemble::bold_matrices(c.sys, c.dec, c.grams);
    c.supply = std::move(supply);
    c.ctrl = ctrl;
    return c;
  }

  std::vector<double> default_alpha(double alpha1 = 5.0) const {
    std::vector<double> a(std::size_t(bold.dims.beta), 0.0);
    a[0] = alpha1;
    return a;
  }
};

struct Certificates {
  MatrixXd P1, P2, P3;
  std::vector<MatrixXd> Q, R;
  double gamma = 0.0;
};

struct SynthResult {
  ControllerGains gains;
  double gamma = 0.0;
  Certificates cert;
};

namespace detail {

inline Certificates extract_cert(const sdp::Solution& sol, const assemble::CertVars& v) {
  Certificates c;
  if (v.P1.id >= 0) c.P1 = sol.value(v.P1);
  if (v.P2.id >= 0) c.P2 = sol.value(v.P2);
  c.P3 = sol.value(v.P3);
  for (const auto& q : v.Q) c.Q.push_back(sol.value(q));
  for (const auto& r : v.R) c.R.push_back(sol.value(r));
  if (v.gamma) c.gamma = sol.scalar(*v.gamma);
  return c;
}

inline ControllerGains extract_gains(const sdp::Solution& sol, const assemble::GainVars& g,
                                     const assemble::Dims& dm) {
  ControllerGains out;
  out.structure = g.structure;
  if (g.structure == ControllerStructure::Static) {
    out.K = sol.value(g.K);
    return out;
  }
  out.K_point.push_back(sol.value(g.K_point[0]));
  for (int i = 1; i <= dm.nu; ++i)
    out.K_point.push_back(g.structure == ControllerStructure::Delayed
                              ? sol.value(g.K_point[i])
                              : MatrixXd::Zero(dm.p, dm.n));
  for (int i = 0; i < dm.nu; ++i)
    out.K_dist.push_back(g.structure == ControllerStructure::Delayed
                             ? sol.value(g.K_dist[i])
                             : MatrixXd::Zero(dm.p, dm.k_i[i] * dm.n));
  return out;
}

}  // namespace detail

/// Convex synthesis: solve the projection-lemma condition minimizing gamma
/// and recover the gains by X-inversion. Infeasibility here is not a proof
/// of non-stabilizability.
inline SynthResult synth_convex(const SynthContext& ctx, const std::vector<double>& alpha) {
  sdp::SdpProblem prob;
  auto vars = assemble::lmi_convex(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply, ctx.ctrl, alpha);
  if (vars.cert.gamma) prob.objective_add(*vars.cert.gamma, 1.0);
  sdp::Solution sol;
  try {
    sol = prob.solve(ctx.solver);
  } catch (const InfeasibleCertificate& e) {
    throw Infeasible(std::string("convex synthesis infeasible: ") + e.what());
  }

  const auto& dm = ctx.bold.dims;
  MatrixXd X = sol.value(vars.X);
  MatrixXd Xinv = X.inverse();

  SynthResult r;
  r.gains.structure = ctx.ctrl;
  if (ctx.ctrl == ControllerStructure::Static) {
    r.gains.K = sol.value(vars.V.K) * Xinv;
  } else {
    r.gains.K_point.push_back(sol.value(vars.V.K_point[0]) * Xinv);
    for (int i = 1; i <= dm.nu; ++i)
      r.gains.K_point.push_back(ctx.ctrl == ControllerStructure::Delayed
                                    ? MatrixXd(sol.value(vars.V.K_point[i]) * Xinv)
                                    : MatrixXd::Zero(dm.p, dm.n));
    for (int i = 0; i < dm.nu; ++i)
      r.gains.K_dist.push_back(
          ctx.ctrl == ControllerStructure::Delayed
              ? MatrixXd(sol.value(vars.V.K_dist[i]) *
                         kron(MatrixXd::Identity(dm.k_i[i], dm.k_i[i]), Xinv))
              : MatrixXd::Zero(dm.p, dm.k_i[i] * dm.n));
  }

  // Certificates back in original coordinates (congruence by X^{-1}).
  Certificates acute = detail::extract_cert(sol, vars.cert);
  MatrixXd IdX = kron(MatrixXd::Identity(dm.d, dm.d), Xinv);
  r.cert.P1 = Xinv.transpose() * acute.P1 * Xinv;
  r.cert.P2 = Xinv.transpose() * acute.P2 * IdX;
  r.cert.P3 = IdX.transpose() * acute.P3 * IdX;
  for (int i = 0; i < dm.nu; ++i) {
    r.cert.Q.push_back(Xinv.transpose() * acute.Q[i] * Xinv);
    r.cert.R.push_back(Xinv.transpose() * acute.R[i] * Xinv);
  }
  r.cert.gamma = acute.gamma;
  r.gamma = acute.gamma;
  return r;
}

/// Analysis with the gains fixed: certify and minimize gamma over the
/// functional parameters.
inline Certificates refine_fixed_K(const SynthContext& ctx, const ControllerGains& gains) {
  sdp::SdpProblem prob;
  auto emit = assemble::lmi_analysis(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply, ctx.ctrl,
                                     assemble::KFixed{gains});
  if (emit.cert.gamma) prob.objective_add(*emit.cert.gamma, 1.0);
  try {
    sdp::Solution sol = prob.solve(ctx.solver);
    return detail::extract_cert(sol, emit.cert);
  } catch (const InfeasibleCertificate& e) {
    throw Infeasible(std::string("gain not certifiable: ") + e.what());
  }
}

/// Analysis with P1, P2 fixed: minimize gamma over the gains and the
/// remaining functional parameters.
inline SynthResult refine_fixed_P(const SynthContext& ctx, const MatrixXd& P1,
                                  const MatrixXd& P2) {
  sdp::SdpProblem prob;
  auto emit = assemble::lmi_analysis(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply, ctx.ctrl,
                                     assemble::PFixed{P1, P2});
  if (emit.cert.gamma) prob.objective_add(*emit.cert.gamma, 1.0);
  try {
    sdp::Solution sol = prob.solve(ctx.solver);
    SynthResult r;
    r.gains = detail::extract_gains(sol, emit.gains, ctx.bold.dims);
    r.cert = detail::extract_cert(sol, emit.cert);
    r.cert.P1 = P1;
    r.cert.P2 = P2;
    r.gamma = r.cert.gamma;
    return r;
  } catch (const InfeasibleCertificate& e) {
    throw Infeasible(std::string("refine_fixed_P infeasible: ") + e.what());
  }
}

struct IterParams {
  double rho1 = 1e-2, rho2 = 1e-2;
  double eps = 1e-3;
  double z = 0.5;  // Z = z I
  int max_iters = 50;
  std::vector<double> alpha;  // empty: (5, 0, ..., 0)
};

struct IterationRecord {
  int iter = 0;
  double gamma = 0.0;
  double dP = 0.0, dK = 0.0;
  std::string status;
  double seconds = 0.0;
};

struct IterationLog {
  double gamma_init = 0.0;       // convex initialization
  double gamma_certified = 0.0;  // first fixed-gain certification
  double gamma_alternate = 0.0;  // fixed-P refinement
  std::vector<IterationRecord> records;
  ControllerGains final_gains;
  Certificates final_cert;
  double final_gamma = 0.0;
  std::string status;  // "converged" | "max_iters" | "stalled: ..."
};

/// The staged iterative algorithm: convex init, one alternation sweep, then
/// proximal inner-convex-approximation steps on the overestimated condition
/// until the relative anchor movement drops below eps or max_iters is hit.
/// Every reported gain is re-certified with the gains fixed before return.
inline IterationLog iterate(const SynthContext& ctx, const IterParams& params) {
  if (params.rho1 <= 0 || params.rho2 <= 0 || params.eps < 0)
    throw Error("iterate: rho1, rho2 must be positive and eps nonnegative");
  if (!(params.z > 0 && params.z < 1))
    throw InvalidZ("iterate: need 0 < z < 1 so that Z and I - Z are positive definite");

  const auto& dm = ctx.bold.dims;
  const MatrixXd Z = params.z * MatrixXd::Identity(dm.n, dm.n);
  std::vector<double> alpha = params.alpha.empty() ? ctx.default_alpha() : params.alpha;

  IterationLog log;

  // Stage 1-3: convex init, certify, alternate.
  SynthResult init = synth_convex(ctx, alpha);
  log.gamma_init = init.gamma;
  Certificates cert = refine_fixed_K(ctx, init.gains);
  log.gamma_certified = cert.gamma;
  SynthResult alt = refine_fixed_P(ctx, cert.P1, cert.P2);
  log.gamma_alternate = alt.gamma;

  // Anchors.
  MatrixXd P1t = cert.P1, P2t = cert.P2;
  ControllerGains gains_t = alt.gains;
  ControllerGains last_gains = gains_t;
  Certificates last_cert = alt.cert;
  double prev_gamma = alt.gamma;
  log.status = "max_iters";

  auto anchor_norm = [&](const MatrixXd& P1a, const MatrixXd& P2a, const ControllerGains& ga) {
    double nP = std::max(P1a.cwiseAbs().maxCoeff(),
                         P2a.size() ? (P2a * ctx.bold.Ihat).cwiseAbs().maxCoeff() : 0.0);
    return std::max(nP, ga.flat().cwiseAbs().maxCoeff());
  };

  for (int it = 1; it <= params.max_iters; ++it) {
    auto t0 = std::chrono::steady_clock::now();
    sdp::SdpProblem prob;
    assemble::OverestimateAnchors anchors{P1t, P2t, gains_t};
    assemble::OverestimateEmit emit;
    try {
      emit = assemble::lmi_overestimate(prob, ctx.sys, ctx.bold, ctx.grams, ctx.supply, ctx.ctrl,
                                        anchors, Z);
    } catch (const Error& e) {
      log.status = std::string("stalled: ") + e.what();
      break;
    }

    // Objective: gamma plus the proximal distances to the anchors.
    AffineMat P1m = prob.var_mat(emit.cert.P1);
    AffineMat P2m = prob.var_mat(emit.cert.P2);
    sdp::AffineMat pexpr = sdp::hcat({P1m, P2m * ctx.bold.Ihat});
    MatrixXd panchor = hcat({P1t, MatrixXd(P2t * ctx.bold.Ihat)});
    auto [tP, blkP] = prob.frobenius_epigraph(pexpr, panchor, params.rho1, "prox.P");
    prob.add(blkP);
    prob.objective_add(tP, params.rho1);

    sdp::AffineMat kexpr;
    MatrixXd kanchor;
    if (ctx.ctrl == ControllerStructure::Static) {
      kexpr = prob.var_mat(emit.gains.K);
      kanchor = gains_t.K;
    } else {
      auto ge = assemble::gain_expr_from_vars(prob, emit.gains, dm);
      std::vector<sdp::AffineMat> parts(ge.K_point.begin(), ge.K_point.end());
      for (auto& kd : ge.K_dist) parts.push_back(kd);
      kexpr = sdp::hcat(parts);
      kanchor = gains_t.flat();
    }
    auto [tK, blkK] = prob.frobenius_epigraph(kexpr, kanchor, params.rho2, "prox.K");
    prob.add(blkK);
    prob.objective_add(tK, params.rho2);
    if (emit.cert.gamma) prob.objective_add(*emit.cert.gamma, 1.0);

    IterationRecord rec;
    rec.iter = it;
    try {
      sdp::Solution sol = prob.solve(ctx.solver);
      Certificates c = detail::extract_cert(sol, emit.cert);
      ControllerGains g = detail::extract_gains(sol, emit.gains, dm);
      rec.gamma = c.gamma;
      rec.dP = std::sqrt((c.P1 - P1t).squaredNorm() +
                         ((c.P2 - P2t) * ctx.bold.Ihat).squaredNorm());
      rec.dK = (g.flat() - gains_t.flat()).norm();
      rec.status = "optimal";
      last_cert = c;
      last_gains = g;

      const double move = std::max((c.P1 - P1t).cwiseAbs().maxCoeff(),
                                   std::max(((c.P2 - P2t) * ctx.bold.Ihat).cwiseAbs().maxCoeff(),
                                            (g.flat() - gains_t.flat()).cwiseAbs().maxCoeff()));
      const double ratio = move / (anchor_norm(P1t, P2t, gains_t) + 1.0);
      P1t = c.P1;
      P2t = c.P2;
      gains_t = g;
      prev_gamma = c.gamma;

      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log.records.push_back(rec);
      if (ratio < params.eps) {
        log.status = "converged";
        break;
      }
    } catch (const Error& e) {
      rec.status = std::string("solver failure: ") + e.what();
      rec.gamma = prev_gamma;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log.records.push_back(rec);
      log.status = std::string("stalled: ") + e.what();
      break;
    }
  }

  // Soundness: re-certify the gains before reporting them.
  log.final_gains = last_gains;
  try {
    log.final_cert = refine_fixed_K(ctx, last_gains);
    log.final_gamma = log.final_cert.gamma;
  } catch (const Infeasible&) {
    log.final_cert = last_cert;
    log.final_gamma = last_cert.gamma;
    log.status += " (final re-certification failed; reporting subproblem certificate)";
  }
  return log;
}

}  // namespace kras::synth
