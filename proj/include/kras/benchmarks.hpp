#pragma once

// Bundled benchmark systems: an unstable two-delay plant with eight
// distributed kernels driven through both state and input channels, and its
// no-input-delay variant used for delayed-controller synthesis. Reference
// results for these benchmarks are embedded next to the CLI's
// reproduce-paper command.

#include <string>
#include <vector>

#include "kras/eda.hpp"
#include "kras/system.hpp"

namespace kras::benchmarks {

inline ExprGrid grid(int rows, int cols, const std::vector<std::string>& entries) {
  ExprGrid g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g.at(r, c) = parse_expr(entries[std::size_t(r) * cols + c]);
  return g;
}

inline MatrixXd mat2(double a, double b, double c, double d) {
  MatrixXd M(2, 2);
  M << a, b, c, d;
  return M;
}

inline MatrixXd col2(double a, double b) {
  MatrixXd M(2, 1);
  M << a, b;
  return M;
}

/// Two-delay benchmark with r = (1, 1.7), n = m = 2, p = q = 1, an unstable
/// nominal A0 and distributed kernels built from trigonometric, rational and
/// exponential terms.
inline DelaySystem multi_delay_example() {
  DelaySystem s;
  s.n = 2; s.m = 2; s.p = 1; s.q = 1;
  s.delays = {1.0, 1.7};
  s.input_delays = true;

  s.A = {mat2(-2, 0, 2, 0.01), mat2(-1, 0.1, 0.2, 0), mat2(-0.1, 0, 0, -0.2)};
  s.B = {col2(0, 1), col2(0.01, 0.1), col2(-0.1, -0.1)};
  s.C = {mat2(-0.1, 0.2, 0, 0.1), mat2(-0.1, 0, 0, 0.2), mat2(0, 0.1, -0.1, 0)};
  s.Bout = {MatrixXd::Zero(2, 1), MatrixXd::Zero(2, 1), MatrixXd::Zero(2, 1)};
  s.D1 = col2(0.2, 0.3);
  s.D2 = col2(0.12, 0.1);

  s.Atil = {grid(2, 2,
                 {"0.1 + 3*sin(20*t)", "0.8*exp(sin(20*t)) - 0.3*exp(cos(20*t))",
                  "0.3 + 1/(sin(1.2*t)^2 + 1.0)", "3*sin(20*t)"}),
            grid(2, 2,
                 {"-10*cos(18*t)", "0.3*exp(cos(18*t)) - 1/(cos(0.7*t)^2 + 1)",
                  "0.1*exp(sin(18*t))", "0.2 - 10*cos(18*t)"})};
  s.Btil = {grid(2, 1,
                 {"0.01*t - 0.01/(sin(1.2*t)^2 + 1) + 0.1",
                  "0.1*t + 0.02/(sin(1.2*t)^2 + 1)"}),
            grid(2, 1,
                 {"0.2*exp(cos(18*t)) + 0.01*exp(sin(18*t)) + 0.01/(cos(0.7*t)^2 + 1)",
                  "0.1*exp(cos(18*t)) + 0.02*exp(sin(18*t))"})};
  s.Ctil = {grid(2, 2,
                 {"0.7 + cos(20*t)", "1/(sin(1.2*t)^2 + 1) - 0.2",
                  "0.4 - 0.5*exp(sin(20*t))", "0.8 - sin(20*t)"}),
            grid(2, 2,
                 {"0.2 + sin(18*t)", "0.3 + exp(cos(18*t))",
                  "0", "0.1 - 1/(cos(0.7*t)^2 + 1)"})};
  s.Bouttil = {grid(2, 1,
                    {"0.01*t + 0.1*exp(sin(20*t)) - 0.1/(sin(1.2*t)^2 + 1)",
                     "0.2*exp(sin(20*t))"}),
               grid(2, 1,
                    {"0.2*exp(cos(18*t)) + 0.01*exp(sin(18*t)) + 0.1/(cos(0.7*t)^2 + 1)",
                     "0.02*exp(sin(18*t)) + 0.2/(cos(0.7*t)^2 + 1)"})};
  s.validate();
  return s;
}

/// Same plant with the input-delay channels removed (B_i, Btil, Bout_i,
/// Bouttil all zero for i >= 1); the setting for controllers that carry
/// their own delays.
inline DelaySystem no_input_delay_example() {
  DelaySystem s = multi_delay_example();
  s.input_delays = false;
  for (int i = 1; i <= s.nu(); ++i) {
    s.B[i].setZero();
    s.Bout[i].setZero();
  }
  for (auto& g : s.Btil) g = ExprGrid::zero(2, 1);
  for (auto& g : s.Bouttil) g = ExprGrid::zero(2, 1);
  s.validate();
  return s;
}

/// Basis blocks for the benchmark kernels: both distributed exponentials are
/// approximated, the rational terms are factorized directly, and f carries
/// polynomials up to degree sigma plus harmonics up to order lambda of the
/// kernel base frequency (20 rad/s on the first interval, 18 rad/s on the
/// second).
inline std::vector<eda::IntervalBasis> example_bases(const DelaySystem& s, int sigma, int lambda) {
  const double freq[2] = {20.0, 18.0};
  const char* rational[2] = {"1/(sin(1.2*t)^2 + 1)", "1/(cos(0.7*t)^2 + 1)"};
  std::vector<eda::IntervalBasis> out;
  for (int i = 0; i < s.nu(); ++i) {
    std::vector<std::string> f, varphi, phi;
    for (int j = 0; j <= sigma; ++j) {
      if (j == 0) f.push_back("1");
      else if (j == 1) f.push_back("t");
      else f.push_back("t^" + std::to_string(j));
    }
    for (int j = 1; j <= lambda; ++j)
      f.push_back("sin(" + std::to_string(freq[i] * j) + "*t)");
    for (int j = 1; j <= lambda; ++j)
      f.push_back("cos(" + std::to_string(freq[i] * j) + "*t)");
    varphi.push_back(rational[i]);
    phi.push_back("exp(sin(" + std::to_string(freq[i]) + "*t))");
    phi.push_back("exp(cos(" + std::to_string(freq[i]) + "*t))");
    out.push_back(eda::build_basis(f, varphi, phi, s.interval_left(i), s.interval_right(i), i + 1));
  }
  return out;
}

}  // namespace kras::benchmarks
