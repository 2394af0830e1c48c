#pragma once

// Independent closed-loop verification: pseudospectral rightmost-eigenvalue
// computation, fixed-step simulation of the delay dynamics by the method of
// steps, empirical L2 gain, and a numerical audit of the certificate
// functional along trajectories. Nothing here reuses the decomposition or
// the LMI assembly; kernels are evaluated directly from their expressions.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <vector>

#include "kras/eda.hpp"
#include "kras/linalg.hpp"
#include "kras/quad.hpp"
#include "kras/system.hpp"

namespace kras::verify {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Effective closed-loop data: pointwise matrices and kernel evaluators after
/// substituting the controller.
struct ClosedLoop {
  int n = 0, m = 0, p = 0, q = 0;
  std::vector<double> delays;
  std::vector<MatrixXd> A, C;  // 0..nu
  MatrixXd D1, D2;
  std::vector<std::function<MatrixXd(double)>> Akern, Ckern;  // per interval
  // control reconstruction
  std::vector<MatrixXd> Ku;                             // pointwise gains 0..nu (p x n)
  std::vector<std::function<MatrixXd(double)>> Kukern;  // distributed gains (p x n)

  int nu() const { return int(delays.size()); }
  double r(int i) const { return i == 0 ? 0.0 : delays[i - 1]; }
  double r_max() const { return delays.back(); }
};

/// Build the closed loop for a static gain u = K x or a delayed-structure
/// controller. Kernels compose pointwise in tau.
inline ClosedLoop make_closed_loop(const DelaySystem& sys, const ControllerGains& gains,
                                   const std::vector<eda::IntervalBasis>* bases = nullptr) {
  ClosedLoop cl;
  cl.n = sys.n;
  cl.m = sys.m;
  cl.p = sys.p;
  cl.q = sys.q;
  cl.delays = sys.delays;
  cl.D1 = sys.D1;
  cl.D2 = sys.D2;

  auto grid_eval = [](const ExprGrid& g) {
    return [g](double tau) {
      MatrixXd M(g.rows, g.cols);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) M(r, c) = g.at(r, c).eval(tau);
      return M;
    };
  };

  if (gains.is_static()) {
    const MatrixXd& K = gains.K;
    for (int i = 0; i <= sys.nu(); ++i) {
      cl.A.push_back(sys.A[i] + sys.B[i] * K);
      cl.C.push_back(sys.C[i] + sys.Bout[i] * K);
      cl.Ku.push_back(i == 0 ? K : MatrixXd::Zero(sys.p, sys.n));
    }
    for (int i = 0; i < sys.nu(); ++i) {
      auto Ae = grid_eval(sys.Atil[i]);
      auto Be = grid_eval(sys.Btil[i]);
      auto Ce = grid_eval(sys.Ctil[i]);
      auto Boe = grid_eval(sys.Bouttil[i]);
      cl.Akern.push_back([Ae, Be, K](double tau) -> MatrixXd { return Ae(tau) + Be(tau) * K; });
      cl.Ckern.push_back([Ce, Boe, K](double tau) -> MatrixXd { return Ce(tau) + Boe(tau) * K; });
      cl.Kukern.push_back([p = sys.p, n = sys.n](double) { return MatrixXd::Zero(p, n); });
    }
  } else {
    if (!bases) throw Error("make_closed_loop: delayed controller needs the interval bases");
    if (sys.input_delays)
      throw Error("make_closed_loop: delayed controller requires the no-input-delay form");
    const MatrixXd B0 = sys.B[0], Bo0 = sys.Bout[0];
    for (int i = 0; i <= sys.nu(); ++i) {
      cl.A.push_back(sys.A[i] + B0 * gains.K_point[i]);
      cl.C.push_back(sys.C[i] + Bo0 * gains.K_point[i]);
      cl.Ku.push_back(gains.K_point[i]);
    }
    for (int i = 0; i < sys.nu(); ++i) {
      auto Ae = grid_eval(sys.Atil[i]);
      auto Ce = grid_eval(sys.Ctil[i]);
      const eda::IntervalBasis basis = (*bases)[i];
      const MatrixXd Kd = gains.K_dist[i];
      const int n = sys.n;
      auto Kk = [basis, Kd, n](double tau) -> MatrixXd {
        return Kd * kron(MatrixXd(basis.eval_g(tau)), MatrixXd::Identity(n, n));
      };
      cl.Akern.push_back([Ae, B0, Kk](double tau) -> MatrixXd { return Ae(tau) + B0 * Kk(tau); });
      cl.Ckern.push_back(
          [Ce, Bo0, Kk](double tau) -> MatrixXd { return Ce(tau) + Bo0 * Kk(tau); });
      cl.Kukern.push_back(Kk);
    }
  }
  return cl;
}

namespace detail {

/// Chebyshev-Gauss-Lobatto points s_j = cos(j pi / N) with differentiation
/// matrix and Clenshaw-Curtis weights on [-1, 1].
struct ChebGrid {
  VectorXd s;   // N+1 points, s_0 = 1 down to s_N = -1
  MatrixXd D;   // differentiation matrix
  VectorXd w;   // quadrature weights
};

inline ChebGrid cheb(int N) {
  ChebGrid g;
  g.s.resize(N + 1);
  for (int j = 0; j <= N; ++j) g.s[j] = std::cos(M_PI * j / N);
  g.D = MatrixXd::Zero(N + 1, N + 1);
  auto cc = [N](int i) { return (i == 0 || i == N) ? 2.0 : 1.0; };
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      if (i != j) g.D(i, j) = (cc(i) / cc(j)) * ((i + j) % 2 ? -1.0 : 1.0) / (g.s[i] - g.s[j]);
  for (int i = 0; i <= N; ++i) g.D(i, i) = -g.D.row(i).sum();

  g.w = VectorXd::Zero(N + 1);
  std::vector<double> theta(N + 1);
  for (int j = 0; j <= N; ++j) theta[j] = M_PI * j / N;
  if (N % 2 == 0) {
    g.w[0] = g.w[N] = 1.0 / (N * N - 1);
    for (int i = 1; i < N; ++i) {
      double v = 1.0;
      for (int k = 1; k <= N / 2 - 1; ++k) v -= 2.0 * std::cos(2 * k * theta[i]) / (4.0 * k * k - 1);
      v -= std::cos(N * theta[i]) / (N * N - 1);
      g.w[i] = 2.0 * v / N;
    }
  } else {
    g.w[0] = g.w[N] = 1.0 / (N * N);
    for (int i = 1; i < N; ++i) {
      double v = 1.0;
      for (int k = 1; k <= (N - 1) / 2; ++k)
        v -= 2.0 * std::cos(2 * k * theta[i]) / (4.0 * k * k - 1);
      g.w[i] = 2.0 * v / N;
    }
  }
  return g;
}

/// Rightmost eigenvalue of the collocated infinitesimal generator with N
/// Chebyshev nodes per delay interval.
inline double sa_once(const ClosedLoop& cl, int N) {
  const int nu = cl.nu(), n = cl.n;
  const ChebGrid g = cheb(N);
  const int M = nu * N + 1;  // distinct nodes, shared interval endpoints merged

  // Node tau values: global id 0 is tau = 0; interval i contributes ids
  // (i-1)N+1 .. iN for its nodes j = 1..N (j = 0 merges with the neighbor).
  auto node_id = [&](int i, int j) { return i * N + j; };  // i: 0-based interval
  std::vector<double> tau(M);
  std::vector<double> mid(nu), half(nu);
  for (int i = 0; i < nu; ++i) {
    double a = -cl.r(i + 1), b = -cl.r(i);
    mid[i] = 0.5 * (a + b);
    half[i] = 0.5 * (b - a);
    for (int j = (i == 0 ? 0 : 1); j <= N; ++j) tau[node_id(i, j)] = mid[i] + half[i] * g.s[j];
  }

  MatrixXd G = MatrixXd::Zero(M * n, M * n);
  const MatrixXd In = MatrixXd::Identity(n, n);

  // Dynamics row at tau = 0.
  G.block(0, 0, n, n) += cl.A[0];
  for (int i = 1; i <= nu; ++i) G.block(0, node_id(i - 1, N) * n, n, n) += cl.A[i];
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j <= N; ++j)
      G.block(0, node_id(i, j) * n, n, n) += half[i] * g.w[j] * cl.Akern[i](tau[node_id(i, j)]);

  // Derivative rows for every other node.
  for (int i = 0; i < nu; ++i)
    for (int j = 1; j <= N; ++j)
      for (int k = 0; k <= N; ++k)
        G.block(node_id(i, j) * n, node_id(i, k) * n, n, n) += (g.D(j, k) / half[i]) * In;

  Eigen::EigenSolver<MatrixXd> es(G, /*computeEigenvectors=*/false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace detail

/// Spectral abscissa of the closed loop via pseudospectral collocation,
/// doubling the per-interval node count until two estimates agree to 1e-4.
inline double spectral_abscissa(const ClosedLoop& cl, int N = 16) {
  if (N < 8) throw Error("spectral_abscissa: need at least 8 nodes per interval");
  double prev = detail::sa_once(cl, N);
  for (int k = 2 * N; k <= 256; k *= 2) {
    double cur = detail::sa_once(cl, k);
    if (std::abs(cur - prev) <= 1e-4) return cur;
    prev = cur;
  }
  throw NoConvergence("spectral_abscissa: estimates still moving at 256 nodes (last " +
                      std::to_string(prev) + ")");
}

// ---------------------------------------------------------------------------

struct Trajectory {
  double h = 0.0;
  double t0 = 0.0;        // first stored time (t0 <= -r_max covers the history)
  std::vector<double> t;  // uniform grid
  MatrixXd x;             // n x len
  MatrixXd u;             // p x len
  MatrixXd z;             // m x len
  MatrixXd w;             // q x len

  int len() const { return int(t.size()); }
  int index_of_time_zero() const { return int(std::llround(-t0 / h)); }
};

struct SimConfig {
  double h = 0.002;
  double T = 20.0;
  int dd_points = 200;  // trapezoid panels per delay interval
};

namespace detail {

/// 4-point Lagrange interpolation of stored columns at time tt; tolerates
/// extrapolation by up to 2h past the last filled column. The stencil never
/// straddles the t = 0 column (break_col), where the history meets the
/// solution and the derivative generally jumps.
inline VectorXd interp_state(const MatrixXd& X, double t_first, double h, int filled, double tt,
                             int break_col = -1) {
  const double pos = (tt - t_first) / h;
  if (pos < -1e-9 || pos > filled - 1 + 2.0 + 1e-9)
    throw HistoryGap("state requested at t = " + std::to_string(tt) +
                     " outside the stored range");
  int base = int(std::floor(pos)) - 1;
  base = std::max(0, std::min(base, filled - 4));
  if (break_col >= 0) {
    if (pos >= break_col && base < break_col)
      base = std::min(break_col, std::max(0, filled - 4));
    else if (pos <= break_col && base + 3 > break_col)
      base = std::max(0, break_col - 3);
  }
  VectorXd out = VectorXd::Zero(X.rows());
  for (int a = 0; a < 4; ++a) {
    double L = 1.0;
    for (int b = 0; b < 4; ++b)
      if (a != b) L *= (pos - (base + b)) / double(a - b);
    out += L * X.col(base + a);
  }
  return out;
}

struct KernelQuad {
  // trapezoid nodes per interval, excluding any tau = 0 node which folds into
  // the instantaneous matrix
  std::vector<double> tau;
  std::vector<MatrixXd> Wmat;  // weight * kernel(tau)
  MatrixXd inst;               // contribution at tau = 0 (if the interval touches 0)
};

inline KernelQuad precompute_kernel(const std::function<MatrixXd(double)>& kern, double a,
                                    double b, int panels, int rows, int cols) {
  KernelQuad kq;
  kq.inst = MatrixXd::Zero(rows, cols);
  const double step = (b - a) / panels;
  for (int j = 0; j <= panels; ++j) {
    const double tau = a + j * step;
    const double wgt = (j == 0 || j == panels) ? 0.5 * step : step;
    MatrixXd Wm = wgt * kern(tau);
    if (std::abs(tau) < 1e-12) {
      kq.inst += Wm;
    } else {
      kq.tau.push_back(tau);
      kq.Wmat.push_back(std::move(Wm));
    }
  }
  return kq;
}

}  // namespace detail

/// Fixed-step RK4 on the closed loop by the method of steps: pointwise delays
/// read from the stored trajectory with cubic interpolation, distributed
/// terms replaced by their composite-trapezoid discretization.
inline Trajectory simulate(const ClosedLoop& cl,
                           const std::function<VectorXd(double)>& history,
                           const std::function<VectorXd(double)>& wfun, const SimConfig& cfg) {
  if (cfg.h <= 0) throw Error("simulate: step must be positive");
  if (cfg.dd_points < 16) throw Error("simulate: need at least 16 quadrature panels");
  const int n = cl.n, nu = cl.nu();

  std::vector<detail::KernelQuad> aq, cq, uq;
  for (int i = 0; i < nu; ++i) {
    aq.push_back(detail::precompute_kernel(cl.Akern[i], -cl.r(i + 1), -cl.r(i), cfg.dd_points,
                                           n, n));
    cq.push_back(detail::precompute_kernel(cl.Ckern[i], -cl.r(i + 1), -cl.r(i), cfg.dd_points,
                                           cl.m, n));
    uq.push_back(detail::precompute_kernel(cl.Kukern[i], -cl.r(i + 1), -cl.r(i), cfg.dd_points,
                                           cl.p, n));
  }
  MatrixXd A0 = cl.A[0];
  for (int i = 0; i < nu; ++i) A0 += aq[i].inst;

  const int H = int(std::ceil(cl.r_max() / cfg.h - 1e-12));
  const int Ns = int(std::ceil(cfg.T / cfg.h - 1e-12));
  const double t_first = -H * cfg.h;

  Trajectory tr;
  tr.h = cfg.h;
  tr.t0 = t_first;
  tr.t.resize(H + Ns + 1);
  tr.x = MatrixXd::Zero(n, H + Ns + 1);
  for (int k = 0; k <= H + Ns; ++k) tr.t[k] = t_first + k * cfg.h;

  for (int k = 0; k <= H; ++k) {
    double th = std::max(tr.t[k], -cl.r_max());
    tr.x.col(k) = history(std::min(th, 0.0));
  }

  int filled = H + 1;
  auto deriv = [&](double tt, const VectorXd& xc) {
    VectorXd dx = A0 * xc + cl.D1 * wfun(tt);
    for (int i = 1; i <= nu; ++i)
      dx += cl.A[i] * detail::interp_state(tr.x, t_first, cfg.h, filled, tt - cl.r(i), H);
    for (int i = 0; i < nu; ++i)
      for (std::size_t j = 0; j < aq[i].tau.size(); ++j)
        dx += aq[i].Wmat[j] *
              detail::interp_state(tr.x, t_first, cfg.h, filled, tt + aq[i].tau[j], H);
    return dx;
  };

  for (int k = H; k < H + Ns; ++k) {
    const double tt = tr.t[k];
    const VectorXd xk = tr.x.col(k);
    VectorXd k1 = deriv(tt, xk);
    VectorXd k2 = deriv(tt + 0.5 * cfg.h, xk + 0.5 * cfg.h * k1);
    VectorXd k3 = deriv(tt + 0.5 * cfg.h, xk + 0.5 * cfg.h * k2);
    VectorXd k4 = deriv(tt + cfg.h, xk + cfg.h * k3);
    tr.x.col(k + 1) = xk + (cfg.h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    filled = k + 2;
  }

  // Outputs and control action along the stored grid.
  const int len = tr.len();
  tr.u = MatrixXd::Zero(cl.p, len);
  tr.z = MatrixXd::Zero(cl.m, len);
  tr.w = MatrixXd::Zero(cl.q, len);
  MatrixXd C0 = cl.C[0];
  for (int i = 0; i < nu; ++i) C0 += cq[i].inst;
  MatrixXd Ku0 = cl.Ku[0];
  for (int i = 0; i < nu; ++i) Ku0 += uq[i].inst;
  for (int k = 0; k < len; ++k) {
    const double tt = tr.t[k];
    tr.w.col(k) = tt >= 0 ? wfun(tt) : VectorXd::Zero(cl.q);
    if (tt < 0) continue;  // outputs reported for t >= 0 only
    VectorXd z = C0 * tr.x.col(k) + cl.D2 * tr.w.col(k);
    VectorXd u = Ku0 * tr.x.col(k);
    for (int i = 1; i <= nu; ++i) {
      VectorXd xd = detail::interp_state(tr.x, t_first, cfg.h, len, tt - cl.r(i), H);
      z += cl.C[i] * xd;
      u += cl.Ku[i] * xd;
    }
    for (int i = 0; i < nu; ++i) {
      for (std::size_t j = 0; j < cq[i].tau.size(); ++j) {
        VectorXd xd = detail::interp_state(tr.x, t_first, cfg.h, len, tt + cq[i].tau[j], H);
        z += cq[i].Wmat[j] * xd;
        u += uq[i].Wmat[j] * xd;
      }
    }
    tr.z.col(k) = z;
    tr.u.col(k) = u;
  }
  return tr;
}

/// ||z||_2 / ||w||_2 over the stored horizon (t >= 0), trapezoid in time.
inline double l2_gain_estimate(const Trajectory& tr) {
  const int k0 = tr.index_of_time_zero();
  double zz = 0, ww = 0;
  for (int k = k0; k < tr.len(); ++k) {
    const double wgt = (k == k0 || k == tr.len() - 1) ? 0.5 : 1.0;
    zz += wgt * tr.z.col(k).squaredNorm();
    ww += wgt * tr.w.col(k).squaredNorm();
  }
  if (ww <= 1e-300) throw ZeroInput("l2_gain_estimate: disturbance is identically zero");
  return std::sqrt(zz / ww);
}

// ---------------------------------------------------------------------------
// Krasovskii functional audit.

struct KfParams {
  MatrixXd P1, P2, P3;
  std::vector<MatrixXd> Q, R;
};

/// v(x_t) evaluated from trajectory samples at grid index k: the quadratic
/// form in [x(t); z(t)] plus the interval integrals of x^T (Q_i +
/// (tau + r_i) R_i) x, all by trapezoid on the stored grid.
inline double kf_value(const Trajectory& tr, int k, const KfParams& par,
                       const std::vector<quad::GramianSet>& grams,
                       const std::vector<eda::IntervalBasis>& bases) {
  const int n = int(tr.x.rows());
  const int nu = int(bases.size());
  const double h = tr.h;
  const double t = tr.t[k];
  const double r_max = -bases[nu - 1].left;
  if (t - r_max < tr.t[0] - 1e-9)
    throw WindowTooShort("kf_value: window [t - r_max, t] not covered by the trajectory");

  VectorXd zvec(par.P2.cols());
  int at = 0;
  double integrals = 0.0;
  for (int i = 0; i < nu; ++i) {
    const auto& b = bases[i];
    const int di = b.d();
    const int steps = std::max(8, int(std::round((b.right - b.left) / h)));
    const double dt = (b.right - b.left) / steps;
    VectorXd acc = VectorXd::Zero(di * n);
    double qint = 0.0;
    const double ri = -b.left;
    for (int s = 0; s <= steps; ++s) {
      const double tau = b.left + s * dt;
      const double wgt = (s == 0 || s == steps) ? 0.5 * dt : dt;
      VectorXd xs = detail::interp_state(tr.x, tr.t[0], h, tr.len(), t + tau);
      acc += wgt * kron(MatrixXd(grams[i].sqrt_Ff_inv * b.eval_f(tau)),
                        MatrixXd::Identity(n, n)) *
             xs;
      MatrixXd Wq = par.Q[i] + (tau + ri) * par.R[i];
      qint += wgt * (xs.dot(Wq * xs));
    }
    zvec.segment(at, di * n) = acc;
    at += di * n;
    integrals += qint;
  }
  VectorXd xnow = tr.x.col(k);
  double quad_form = xnow.dot(par.P1 * xnow) + 2.0 * xnow.dot(par.P2 * zvec) +
                     zvec.dot(par.P3 * zvec);
  return quad_form + integrals;
}

struct DissipationReport {
  int checkpoints = 0;
  int violations = 0;
  double worst_slack = 0.0;  // most negative margin seen (>= 0 means clean)
  std::vector<double> times;
};

/// Check v(x_t) - v(x_{t0}) <= int_{t0}^{t} s(z, w) dtheta + tol at evenly
/// spaced checkpoints. tol = 1e-4 (1 + |int s|).
inline DissipationReport check_dissipation(const Trajectory& tr, const SupplyRate& supply,
                                           double gamma, const KfParams& par,
                                           const std::vector<quad::GramianSet>& grams,
                                           const std::vector<eda::IntervalBasis>& bases,
                                           int checkpoints = 50) {
  DissipationReport rep;
  const int k0 = tr.index_of_time_zero();
  const double v0 = kf_value(tr, k0, par, grams, bases);

  // cumulative supply integral on the grid
  std::vector<double> supply_cum(tr.len(), 0.0);
  for (int k = k0 + 1; k < tr.len(); ++k) {
    double s_prev = supply.evaluate(tr.z.col(k - 1), tr.w.col(k - 1), gamma);
    double s_cur = supply.evaluate(tr.z.col(k), tr.w.col(k), gamma);
    supply_cum[k] = supply_cum[k - 1] + 0.5 * tr.h * (s_prev + s_cur);
  }

  rep.checkpoints = checkpoints;
  for (int c = 1; c <= checkpoints; ++c) {
    int k = k0 + int((std::int64_t(tr.len() - 1 - k0) * c) / checkpoints);
    double v = kf_value(tr, k, par, grams, bases);
    double bound = supply_cum[k];
    double tol = 1e-4 * (1.0 + std::abs(bound));
    double slack = bound + tol - (v - v0);
    if (slack < rep.worst_slack) rep.worst_slack = slack;
    if (v - v0 > bound + tol) {
      ++rep.violations;
      rep.times.push_back(tr.t[k]);
    }
  }
  return rep;
}

}  // namespace kras::verify
