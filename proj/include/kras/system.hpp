#pragma once

// Open-loop system data: pointwise state-space matrices per delay, expression
// grids for the distributed-delay kernels per interval, disturbance channels,
// and the quadratic supply rate.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kras/errors.hpp"
#include "kras/expr.hpp"

namespace kras {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ControllerStructure {
  Static,        // u(t) = K x(t); the only choice when input delays are present
  Delayed,       // pointwise and distributed gains (no input delays)
  DelayedStatic  // delayed machinery restricted to the K0 term, as a baseline
};

struct DelaySystem {
  int n = 0, m = 0, p = 0, q = 0;
  std::vector<double> delays;  // r_1 < ... < r_nu, with r_0 = 0 implicit

  // Pointwise matrices indexed 0..nu.
  std::vector<MatrixXd> A, B, C, Bout;
  MatrixXd D1, D2;

  // Distributed kernels per interval I_i = [-r_i, -r_{i-1}], indexed 0..nu-1.
  std::vector<ExprGrid> Atil, Btil, Ctil, Bouttil;

  bool input_delays = true;  // false: B_i, Btil_i, Bout_i, Bouttil_i vanish for i >= 1

  int nu() const { return int(delays.size()); }
  double r(int i) const { return i == 0 ? 0.0 : delays[i - 1]; }  // r_0 = 0
  double r_max() const { return delays.back(); }
  double interval_left(int i) const { return -r(i + 1); }    // i in 0..nu-1
  double interval_right(int i) const { return -r(i); }

  void validate() const {
    if (n < 1 || m < 1 || p < 1 || q < 1) throw DimensionMismatch("dims must be positive");
    if (delays.empty()) throw DimensionMismatch("at least one delay required");
    double prev = 0.0;
    for (double d : delays) {
      if (!(d > prev)) throw DimensionMismatch("delays must be strictly increasing and positive");
      prev = d;
    }
    auto chk = [&](const std::vector<MatrixXd>& v, int rr, int cc, const char* name) {
      if (int(v.size()) != nu() + 1)
        throw DimensionMismatch(std::string(name) + ": expected " + std::to_string(nu() + 1) +
                                " matrices");
      for (const auto& Mt : v)
        if (Mt.rows() != rr || Mt.cols() != cc)
          throw DimensionMismatch(std::string(name) + ": wrong shape");
    };
    chk(A, n, n, "A");
    chk(B, n, p, "B");
    chk(C, m, n, "C");
    chk(Bout, m, p, "Bout");
    if (D1.rows() != n || D1.cols() != q) throw DimensionMismatch("D1: wrong shape");
    if (D2.rows() != m || D2.cols() != q) throw DimensionMismatch("D2: wrong shape");
    auto chkg = [&](const std::vector<ExprGrid>& v, int rr, int cc, const char* name) {
      if (int(v.size()) != nu())
        throw DimensionMismatch(std::string(name) + ": expected one grid per interval");
      for (const auto& g : v)
        if (g.rows != rr || g.cols != cc) throw DimensionMismatch(std::string(name) + ": wrong shape");
    };
    chkg(Atil, n, n, "Atil");
    chkg(Btil, n, p, "Btil");
    chkg(Ctil, m, n, "Ctil");
    chkg(Bouttil, m, p, "Bouttil");
    if (!input_delays) {
      for (int i = 1; i <= nu(); ++i)
        if (B[i].cwiseAbs().maxCoeff() > 0 || Bout[i].cwiseAbs().maxCoeff() > 0)
          throw DimensionMismatch("mode says no input delays but B_i / Bout_i nonzero");
      for (int i = 0; i < nu(); ++i)
        if (!Btil[i].all_zero() || !Bouttil[i].all_zero())
          throw DimensionMismatch("mode says no input delays but Btil / Bouttil nonzero");
    }
  }

  /// Fill any missing pointwise matrices / kernel grids with zeros of the
  /// right shape.
  void fill_defaults() {
    auto fill = [&](std::vector<MatrixXd>& v, int rr, int cc) {
      v.resize(nu() + 1, MatrixXd::Zero(rr, cc));
      for (auto& Mt : v)
        if (Mt.size() == 0) Mt = MatrixXd::Zero(rr, cc);
    };
    fill(A, n, n);
    fill(B, n, p);
    fill(C, m, n);
    fill(Bout, m, p);
    if (D1.size() == 0) D1 = MatrixXd::Zero(n, q);
    if (D2.size() == 0) D2 = MatrixXd::Zero(m, q);
    auto fillg = [&](std::vector<ExprGrid>& v, int rr, int cc) {
      if (v.empty()) v.assign(nu(), ExprGrid::zero(rr, cc));
      for (auto& g : v)
        if (g.rows == 0 && g.cols == 0) g = ExprGrid::zero(rr, cc);
    };
    fillg(Atil, n, n);
    fillg(Btil, n, p);
    fillg(Ctil, m, n);
    fillg(Bouttil, m, p);
  }
};

/// Controller gains. Static mode uses K only. Both delayed modes carry the
/// full arrays K_point (0..nu) and K_dist (1..nu, each p x kappa_i n) with
/// zero matrices where the structure pins a gain to zero, so downstream
/// assembly never needs to special-case the baseline.
struct ControllerGains {
  ControllerStructure structure = ControllerStructure::Static;
  MatrixXd K;
  std::vector<MatrixXd> K_point;
  std::vector<MatrixXd> K_dist;

  bool is_static() const { return structure == ControllerStructure::Static; }

  /// Flattened gain row [K] or [K_0 .. K_nu, Kd_1 .. Kd_nu] used by anchor
  /// distances and stopping rules.
  MatrixXd flat() const {
    if (is_static()) return K;
    std::vector<MatrixXd> parts(K_point.begin(), K_point.end());
    for (const auto& Kd : K_dist) parts.push_back(Kd);
    MatrixXd out(K.size() ? K.rows() : K_point[0].rows(), 0);
    int cols = 0;
    for (const auto& Pt : parts) cols += int(Pt.cols());
    out.resize(K_point[0].rows(), cols);
    int at = 0;
    for (const auto& Pt : parts) {
      out.middleCols(at, int(Pt.cols())) = Pt;
      at += int(Pt.cols());
    }
    return out;
  }
};

/// Quadratic supply rate s(z, w) = [z; w]^T [Jt^T J1^{-1} Jt, J2; *, J3] [z; w].
/// In L2-gain mode the blocks are the gamma-parameterized family
/// J1 = -gamma I, Jt = I, J2 = 0, J3 = gamma I and gamma is a decision
/// variable of the synthesis problems; in fixed mode the blocks are given
/// numerically.
struct SupplyRate {
  bool l2 = true;
  MatrixXd Jt, J1, J2, J3;  // used when !l2 (fixed numeric supply rate)
  int m = 0, q = 0;

  static SupplyRate l2_gain(int m, int q) {
    SupplyRate s;
    s.l2 = true;
    s.m = m;
    s.q = q;
    return s;
  }

  static SupplyRate fixed(MatrixXd Jt, MatrixXd J1, MatrixXd J2, MatrixXd J3) {
    SupplyRate s;
    s.l2 = false;
    s.m = int(Jt.rows());
    s.q = int(J3.rows());
    s.Jt = std::move(Jt);
    s.J1 = std::move(J1);
    s.J2 = std::move(J2);
    s.J3 = std::move(J3);
    s.check(1.0);
    return s;
  }

  static SupplyRate strict_passivity(int m) {
    return fixed(MatrixXd::Zero(m, m), -MatrixXd::Identity(m, m), MatrixXd::Identity(m, m),
                 MatrixXd::Zero(m, m));
  }

  MatrixXd Jt_at(double gamma) const { return l2 ? MatrixXd::Identity(m, m) : Jt; }
  MatrixXd J1_at(double gamma) const { return l2 ? MatrixXd(-gamma * MatrixXd::Identity(m, m)) : J1; }
  MatrixXd J2_at(double gamma) const { return l2 ? MatrixXd::Zero(m, q) : J2; }
  MatrixXd J3_at(double gamma) const { return l2 ? MatrixXd(gamma * MatrixXd::Identity(q, q)) : J3; }

  /// s(z, w) evaluated numerically at a fixed gamma.
  double evaluate(const VectorXd& z, const VectorXd& w, double gamma) const {
    MatrixXd J1i = J1_at(gamma).inverse();
    double zz = (Jt_at(gamma) * z).transpose() * J1i * (Jt_at(gamma) * z);
    double zw = 2.0 * z.dot(J2_at(gamma) * w);
    double ww = w.dot(J3_at(gamma) * w);
    return zz + zw + ww;
  }

  /// Validity at a fixed gamma: J1^{-1} < 0 and Jt^T J1^{-1} Jt <= 0.
  void check(double gamma) const {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(J1_at(gamma));
    if (es.eigenvalues().maxCoeff() >= 0)
      throw Error("supply rate: J1 must be negative definite");
    MatrixXd Up = Jt_at(gamma).transpose() * J1_at(gamma).inverse() * Jt_at(gamma);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es2(0.5 * (Up + Up.transpose()));
    if (es2.eigenvalues().maxCoeff() > 1e-12)
      throw Error("supply rate: Jt^T J1^{-1} Jt must be negative semidefinite");
  }
};

}  // namespace kras
