#pragma once

// Dense primal-dual interior-point backend for the modeling layer's
// "affine map into PSD cones" contract:
//
//   minimize c^T y  subject to  F_b(y) = F0_b + sum_i y_i F_i_b >= 0.
//
// A feasibility phase minimizes t over F_b(y) + t I >= 0, t >= -1; its
// strictly feasible iterate then warm-starts the main path-following loop,
// which stays exactly primal feasible and takes HKM steps with a Mehrotra
// corrector. Problem sizes here are a few hundred scalars with blocks of
// order <= 100, where dense Schur-complement assembly is the right tool.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "kras/sdp.hpp"

namespace kras::sdp {

class IpmBackend : public ConicBackend {
 public:
  ConicResult solve(const ConicProblem& p, const SolveSettings& s) const override {
    if (p.nvars == 0) return trivial(p);
    // Feasibility phase.
    ConicProblem aug = p;
    aug.nvars = p.nvars + 1;
    const int tvar = p.nvars;
    aug.c = VectorXd::Zero(aug.nvars);
    aug.c[tvar] = 1.0;
    for (auto& b : aug.blocks) {
      ConicBlockVar tv;
      tv.var = tvar;
      for (int i = 0; i < b.dim; ++i) tv.entries.push_back({i, i, 1.0});
      b.vars.push_back(std::move(tv));
    }
    {
      ConicBlock bound;
      bound.name = "phase1.bound";
      bound.dim = 1;
      bound.F0 = MatrixXd::Constant(1, 1, 1.0);
      bound.vars.push_back({tvar, {{0, 0, 1.0}}});
      aug.blocks.push_back(std::move(bound));
    }
    VectorXd y0 = VectorXd::Zero(aug.nvars);
    double t0 = 0.0;
    for (const auto& b : p.blocks) {
      double lam = b.dim > 0 ? quad_min_eig(b.F0) : 0.0;
      t0 = std::max(t0, -lam);
    }
    y0[tvar] = 1.1 * t0 + 1.0;

    SolveSettings s1 = s;
    ConicResult r1 = path_follow(aug, s1, y0, /*early_exit_var=*/tvar, -1e-4);
    const double tstar = r1.y[tvar];
    if (r1.status == SolveStatus::NumericalFailure && tstar > -1e-7)
      return fail("feasibility phase failed: " + r1.message);
    if (tstar > -1e-7) {
      ConicResult r;
      r.status = SolveStatus::Infeasible;
      r.y = r1.y.head(p.nvars);
      r.message = "infeasibility certificate: min t = " + std::to_string(tstar);
      return r;
    }

    // Main solve from the strictly feasible point.
    VectorXd yfeas = r1.y.head(p.nvars);
    ConicResult r = path_follow(p, s, yfeas, -1, 0.0);
    return r;
  }

 private:
  static double quad_min_eig(const MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()),
                                               Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  static ConicResult fail(const std::string& msg) {
    ConicResult r;
    r.status = SolveStatus::NumericalFailure;
    r.message = msg;
    return r;
  }

  static ConicResult trivial(const ConicProblem& p) {
    ConicResult r;
    r.y = VectorXd::Zero(0);
    bool ok = true;
    for (const auto& b : p.blocks) ok = ok && (b.dim == 0 || quad_min_eig(b.F0) >= 0);
    r.status = ok ? SolveStatus::Optimal : SolveStatus::Infeasible;
    return r;
  }

  static MatrixXd eval_block(const ConicBlock& b, const VectorXd& y) {
    MatrixXd S = b.F0;
    for (const auto& v : b.vars) {
      const double yv = y[v.var];
      if (yv == 0.0) continue;
      for (const auto& t : v.entries) S(t.r, t.c) += yv * t.v;
    }
    return S;
  }

  static double trace_with(const std::vector<ConicTriplet>& trips, const MatrixXd& G) {
    double acc = 0.0;
    for (const auto& t : trips) acc += t.v * G(t.c, t.r);
    return acc;
  }

  // Largest alpha in (0, 1] with M + alpha dM >= 0, given chol(M).
  static double max_step(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& dM) {
    MatrixXd W = llt.matrixL().solve(dM);
    W = llt.matrixL().solve(W.transpose()).transpose();
    double lam = quad_min_eig(W);
    if (lam >= -1e-12) return 1.0;
    return std::min(1.0, -1.0 / lam);
  }

  /// Path-following with exact primal feasibility, starting from y0 with
  /// F_b(y0) > 0. If early_exit_var >= 0, returns as soon as that coordinate
  /// drops below early_exit_level (used by the feasibility phase).
  ConicResult path_follow(const ConicProblem& p, const SolveSettings& s, VectorXd y,
                          int early_exit_var, double early_exit_level) const {
    const int m = p.nvars;
    const int nb = int(p.blocks.size());
    int Ltot = 0;
    for (const auto& b : p.blocks) Ltot += b.dim;

    std::vector<MatrixXd> S(nb), X(nb), Sinv(nb);
    std::vector<Eigen::LLT<MatrixXd>> Schol(nb);
    const double xscale = 1.0 + p.c.cwiseAbs().maxCoeff();
    for (int b = 0; b < nb; ++b) {
      S[b] = eval_block(p.blocks[b], y);
      X[b] = xscale * MatrixXd::Identity(p.blocks[b].dim, p.blocks[b].dim);
    }

    ConicResult res;
    res.y = y;
    ConicResult best;
    best.y = y;
    double best_score = 1e300;
    double best_gap = 1e300;
    int stall = 0;

    for (int iter = 0; iter < s.max_iters; ++iter) {
      // Factor S, compute residuals.
      for (int b = 0; b < nb; ++b) {
        Schol[b].compute(S[b]);
        if (Schol[b].info() != Eigen::Success) {
          // tiny jitter against roundoff loss of definiteness
          double j = 1e-14 * (1.0 + S[b].cwiseAbs().maxCoeff());
          Schol[b].compute(S[b] + j * MatrixXd::Identity(S[b].rows(), S[b].cols()));
          if (Schol[b].info() != Eigen::Success) {
            if (best_score <= 1e-6) {
              best.status = SolveStatus::Optimal;
              best.message = "slack degenerated at acceptable accuracy";
              return best;
            }
            return fail("slack matrix lost definiteness in block " + p.blocks[b].name);
          }
        }
        Sinv[b] = Schol[b].solve(MatrixXd::Identity(S[b].rows(), S[b].cols()));
      }

      VectorXd rd = p.c;  // rd_i = c_i - sum_b tr(F_i X_b)
      double mu = 0.0;
      for (int b = 0; b < nb; ++b) {
        mu += (X[b].cwiseProduct(S[b])).sum();
        for (const auto& v : p.blocks[b].vars) rd[v.var] -= trace_with(v.entries, X[b]);
      }
      mu /= std::max(1, Ltot);

      const double pobj = p.c.dot(y);
      double dobj = 0.0;
      for (int b = 0; b < nb; ++b) dobj -= (p.blocks[b].F0.cwiseProduct(X[b])).sum();
      const double gap = mu * Ltot / (1.0 + std::abs(pobj) + std::abs(dobj));
      const double rdn = rd.cwiseAbs().maxCoeff() / (1.0 + p.c.cwiseAbs().maxCoeff());

      res.y = y;
      res.objective = pobj;
      res.mu = mu;
      res.dual_inf = rdn;
      res.prim_inf = 0.0;
      res.iterations = iter;

      if (s.verbose)
        std::fprintf(stderr, "  ipm %3d  pobj % .9e  dobj % .9e  gap %.2e  rd %.2e\n", iter,
                     pobj, dobj, gap, rdn);

      if (std::max(std::abs(gap), rdn) < best_score) {
        best_score = std::max(std::abs(gap), rdn);
        best = res;
      }
      if (early_exit_var >= 0 && y[early_exit_var] < early_exit_level) {
        res.status = SolveStatus::Optimal;
        return res;
      }
      if (std::abs(gap) <= s.feas_tol && rdn <= std::max(100.0 * s.feas_tol, 1e-7)) {
        res.status = SolveStatus::Optimal;
        return res;
      }
      if (std::abs(pobj) > 1e13) return fail("objective diverging (problem likely unbounded)");
      if (gap < best_gap * 0.9999) {
        best_gap = gap;
        stall = 0;
      } else if (++stall > 12) {
        if (best_score <= 1e-6) {
          best.status = SolveStatus::Optimal;
          best.message = "converged to reduced accuracy";
          return best;
        }
        return fail("progress stalled at gap " + std::to_string(gap));
      }

      // Schur complement H_ij = sum_b tr(F_i X F_j S^{-1}) and the constant
      // pieces of the right-hand side.
      MatrixXd H = MatrixXd::Zero(m, m);
      VectorXd aS(m);  // tr(F_i S^{-1})
      aS.setZero();
      std::vector<std::vector<MatrixXd>> W(nb);  // W[b][k] = X F_jk S^{-1}
      for (int b = 0; b < nb; ++b) {
        const auto& blk = p.blocks[b];
        const int na = int(blk.vars.size());
        W[b].resize(na);
        for (int k = 0; k < na; ++k) {
          const auto& vj = blk.vars[k];
          MatrixXd FS = MatrixXd::Zero(blk.dim, blk.dim);  // F_j S^{-1}
          for (const auto& t : vj.entries) FS.row(t.r) += t.v * Sinv[b].row(t.c);
          W[b][k].noalias() = X[b] * FS;
          aS[vj.var] += trace_with(vj.entries, Sinv[b]);
        }
        for (int k = 0; k < na; ++k)
          for (int l = 0; l < na; ++l)
            H(blk.vars[l].var, blk.vars[k].var) += trace_with(blk.vars[l].entries, W[b][k]);
      }
      H = 0.5 * (H + H.transpose());
      H.diagonal().array() += 1e-13 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
      Eigen::LDLT<MatrixXd> Hf(H);
      if (Hf.info() != Eigen::Success) return fail("Schur complement factorization failed");

      auto ds_of = [&](const VectorXd& dy, int b) {
        MatrixXd dS = MatrixXd::Zero(p.blocks[b].dim, p.blocks[b].dim);
        for (const auto& v : p.blocks[b].vars) {
          const double d = dy[v.var];
          if (d == 0.0) continue;
          for (const auto& t : v.entries) dS(t.r, t.c) += d * t.v;
        }
        return dS;
      };

      // Predictor (affine direction). With exact primal feasibility the
      // reduced system collapses to H dy = -c; the dual residual cancels.
      VectorXd dy_aff = Hf.solve(-p.c);
      std::vector<MatrixXd> dS_aff(nb), dX_aff(nb);
      double ap_aff = 1.0, ad_aff = 1.0;
      for (int b = 0; b < nb; ++b) {
        dS_aff[b] = ds_of(dy_aff, b);
        MatrixXd dX = -X[b] - X[b] * dS_aff[b] * Sinv[b];
        dX_aff[b] = 0.5 * (dX + dX.transpose());
        Eigen::LLT<MatrixXd> Xc(X[b]);
        ad_aff = std::min(ad_aff, max_step(Schol[b], dS_aff[b]));
        ap_aff = std::min(ap_aff, max_step(Xc, dX_aff[b]));
      }
      double mu_aff = 0.0;
      for (int b = 0; b < nb; ++b)
        mu_aff += ((X[b] + ap_aff * dX_aff[b]).cwiseProduct(S[b] + ad_aff * dS_aff[b])).sum();
      mu_aff /= std::max(1, Ltot);
      double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
      sigma = std::min(1.0, std::max(1e-10, sigma));

      // Corrector.
      VectorXd rhs = -p.c;
      for (int b = 0; b < nb; ++b) {
        MatrixXd CorrS = dX_aff[b] * dS_aff[b] * Sinv[b];
        for (const auto& v : p.blocks[b].vars)
          rhs[v.var] += sigma * mu * trace_with(v.entries, Sinv[b]) - trace_with(v.entries, CorrS);
      }
      VectorXd dy = Hf.solve(rhs);
      std::vector<MatrixXd> dS(nb), dX(nb);
      double ap = 1.0, ad = 1.0;
      for (int b = 0; b < nb; ++b) {
        dS[b] = ds_of(dy, b);
        MatrixXd d = sigma * mu * Sinv[b] - X[b] - dX_aff[b] * dS_aff[b] * Sinv[b] -
                     X[b] * dS[b] * Sinv[b];
        dX[b] = 0.5 * (d + d.transpose());
        Eigen::LLT<MatrixXd> Xc(X[b]);
        ad = std::min(ad, max_step(Schol[b], dS[b]));
        ap = std::min(ap, max_step(Xc, dX[b]));
      }
      const double tau = 0.95;
      ap = std::min(1.0, tau * ap);
      ad = std::min(1.0, tau * ad);
      if (ap < 1e-10 && ad < 1e-10) {
        if (best_score <= 1e-6) {
          best.status = SolveStatus::Optimal;
          best.message = "step collapsed at acceptable accuracy";
          return best;
        }
        return fail("step length collapsed at gap " + std::to_string(gap));
      }

      y += ad * dy;
      for (int b = 0; b < nb; ++b) {
        X[b] += ap * dX[b];
        S[b] = eval_block(p.blocks[b], y);
      }
    }
    if (res.mu * Ltot <= 1e-7 * (1.0 + std::abs(res.objective))) {
      res.status = SolveStatus::Optimal;
      res.message = "iteration cap reached at acceptable accuracy";
      return res;
    }
    return fail("iteration limit reached, gap still " + std::to_string(res.mu));
  }
};

inline const ConicBackend& default_backend() {
  static IpmBackend backend;
  return backend;
}

inline Solution SdpProblem::solve(const SolveSettings& settings, const ConicBackend* backend) const {
  ConicProblem cp = lower();
  const ConicBackend& be = backend ? *backend : default_backend();
  ConicResult r = be.solve(cp, settings);

  Solution sol;
  sol.status = r.status;
  sol.objective = r.objective;
  sol.mu = r.mu;
  sol.prim_inf = r.prim_inf;
  sol.dual_inf = r.dual_inf;
  sol.iterations = r.iterations;
  sol.message = r.message;
  if (r.status == SolveStatus::Infeasible)
    throw InfeasibleCertificate("SDP infeasible: " + r.message);
  if (r.status != SolveStatus::Optimal) throw SolverFailure("SDP solve failed: " + r.message);
  sol.y = r.y;
  sol.values = unpack(r.y);

  // Substitution audit: every constraint must hold with eigenvalue margin
  // >= -1e-7 (relative to the block scale) after substitution.
  for (const auto& b : blocks_) {
    MatrixXd E = b.expr.eval(sol.y);
    if (b.negate) E = -E;
    E.diagonal().array() -= b.shift;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (E + E.transpose()),
                                               Eigen::EigenvaluesOnly);
    double lam = E.rows() > 0 ? es.eigenvalues().minCoeff() : 0.0;
    double scale = 1.0 + b.expr.constant_part().cwiseAbs().maxCoeff();
    if (lam < -1e-7 * scale)
      throw SolverFailure("substitution audit failed on block " + b.name + ": eigenvalue " +
                          std::to_string(lam));
  }
  return sol;
}

}  // namespace kras::sdp
