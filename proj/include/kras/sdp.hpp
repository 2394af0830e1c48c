#pragma once

// Minimal semidefinite-programming modeling layer: matrix decision variables,
// affine symmetric-matrix expressions, PSD-cone constraints with strictness
// margins, a linear objective, and lowering to a block "affine map into PSD
// cones" form consumed by a pluggable conic backend. Problems are immutable
// once lowered; distinct problems may be solved concurrently.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "kras/errors.hpp"
#include "kras/linalg.hpp"

namespace kras::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class VarKind { Symmetric, Rect, Scalar };

struct VarRef {
  int id = -1;
  VarKind kind = VarKind::Scalar;
  int rows = 0, cols = 0;
  int base = 0;  // first scalar index in the flat variable vector
  std::string name;

  int scalar_count() const {
    switch (kind) {
      case VarKind::Symmetric: return rows * (rows + 1) / 2;
      case VarKind::Rect: return rows * cols;
      case VarKind::Scalar: return 1;
    }
    return 0;
  }

  /// Flat index of entry (i, j); symmetric variables share (i,j) and (j,i).
  int index(int i, int j) const {
    if (i < 0 || j < 0 || i >= rows || j >= cols) throw DimensionMismatch("VarRef::index");
    if (kind == VarKind::Symmetric) {
      if (i > j) std::swap(i, j);
      return base + j * (j + 1) / 2 + i;
    }
    return base + j * rows + i;
  }
};

struct LinTerm {
  int idx;
  double c;
};

namespace detail {
inline void add_term(std::vector<LinTerm>& list, int idx, double c) {
  if (c == 0.0) return;
  for (auto& t : list)
    if (t.idx == idx) {
      t.c += c;
      return;
    }
  list.push_back({idx, c});
}
}  // namespace detail

/// Affine matrix-valued expression: constant part plus, per entry, a linear
/// form in the problem's scalar decision variables. Products are only defined
/// against constant matrices, which keeps every expression affine by
/// construction.
class AffineMat {
 public:
  AffineMat() = default;
  AffineMat(int r, int c) : rows_(r), cols_(c), c0_(MatrixXd::Zero(r, c)), terms_(std::size_t(r) * c) {}

  static AffineMat constant(const MatrixXd& M) {
    AffineMat a(int(M.rows()), int(M.cols()));
    a.c0_ = M;
    return a;
  }

  static AffineMat zero(int r, int c) { return AffineMat(r, c); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const MatrixXd& constant_part() const { return c0_; }
  const std::vector<LinTerm>& terms_at(int i, int j) const { return terms_[pos(i, j)]; }
  bool is_constant() const {
    for (const auto& t : terms_)
      if (!t.empty()) return false;
    return true;
  }

  void add_const(int i, int j, double v) { c0_(i, j) += v; }
  void add_term(int i, int j, int idx, double c) { detail::add_term(terms_[pos(i, j)], idx, c); }

  AffineMat transpose() const {
    AffineMat r(cols_, rows_);
    r.c0_ = c0_.transpose();
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) r.terms_[r.pos(j, i)] = terms_[pos(i, j)];
    return r;
  }

  friend AffineMat operator+(const AffineMat& a, const AffineMat& b) {
    a.require_same_shape(b, "+");
    AffineMat r = a;
    r.c0_ += b.c0_;
    for (std::size_t k = 0; k < r.terms_.size(); ++k)
      for (const auto& t : b.terms_[k]) detail::add_term(r.terms_[k], t.idx, t.c);
    return r;
  }

  friend AffineMat operator-(const AffineMat& a, const AffineMat& b) {
    a.require_same_shape(b, "-");
    AffineMat r = a;
    r.c0_ -= b.c0_;
    for (std::size_t k = 0; k < r.terms_.size(); ++k)
      for (const auto& t : b.terms_[k]) detail::add_term(r.terms_[k], t.idx, -t.c);
    return r;
  }

  friend AffineMat operator*(double s, const AffineMat& a) {
    AffineMat r = a;
    r.c0_ *= s;
    for (auto& list : r.terms_)
      for (auto& t : list) t.c *= s;
    return r;
  }

  AffineMat operator-() const { return -1.0 * (*this); }

  /// Constant-left product L * A.
  friend AffineMat operator*(const MatrixXd& L, const AffineMat& a) {
    if (L.cols() != a.rows_) throw DimensionMismatch("AffineMat: const*affine shape");
    AffineMat r(int(L.rows()), a.cols_);
    r.c0_ = L * a.c0_;
    for (int i = 0; i < r.rows_; ++i)
      for (int j = 0; j < r.cols_; ++j) {
        auto& dst = r.terms_[r.pos(i, j)];
        for (int k = 0; k < a.rows_; ++k) {
          double l = L(i, k);
          if (l == 0.0) continue;
          for (const auto& t : a.terms_[a.pos(k, j)]) detail::add_term(dst, t.idx, l * t.c);
        }
      }
    return r;
  }

  /// Product of two expressions, at most one of which may carry variable
  /// terms; a genuinely bilinear product is refused.
  friend AffineMat operator*(const AffineMat& a, const AffineMat& b) {
    if (a.is_constant()) return a.c0_ * b;
    if (b.is_constant()) return a * b.c0_;
    throw BilinearityError("AffineMat: product of two variable-bearing expressions");
  }

  /// Constant-right product A * R.
  friend AffineMat operator*(const AffineMat& a, const MatrixXd& R) {
    if (a.cols_ != R.rows()) throw DimensionMismatch("AffineMat: affine*const shape");
    AffineMat r(a.rows_, int(R.cols()));
    r.c0_ = a.c0_ * R;
    for (int i = 0; i < r.rows_; ++i)
      for (int j = 0; j < r.cols_; ++j) {
        auto& dst = r.terms_[r.pos(i, j)];
        for (int k = 0; k < a.cols_; ++k) {
          double v = R(k, j);
          if (v == 0.0) continue;
          for (const auto& t : a.terms_[a.pos(i, k)]) detail::add_term(dst, t.idx, v * t.c);
        }
      }
    return r;
  }

  /// Write `a` into this expression at block (r0, c0).
  void set_block(int r0, int c0, const AffineMat& a) {
    if (r0 + a.rows_ > rows_ || c0 + a.cols_ > cols_)
      throw DimensionMismatch("AffineMat::set_block out of range");
    c0_.block(r0, c0, a.rows_, a.cols_) = a.c0_;
    for (int i = 0; i < a.rows_; ++i)
      for (int j = 0; j < a.cols_; ++j) terms_[pos(r0 + i, c0 + j)] = a.terms_[a.pos(i, j)];
  }

  AffineMat block(int r0, int c0, int r, int c) const {
    if (r0 + r > rows_ || c0 + c > cols_) throw DimensionMismatch("AffineMat::block out of range");
    AffineMat out(r, c);
    out.c0_ = c0_.block(r0, c0, r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.terms_[out.pos(i, j)] = terms_[pos(r0 + i, c0 + j)];
    return out;
  }

  MatrixXd eval(const VectorXd& y) const {
    MatrixXd M = c0_;
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j)
        for (const auto& t : terms_[pos(i, j)]) M(i, j) += t.c * y[t.idx];
    return M;
  }

  /// vec() stacking of all columns as an (rows*cols) x 1 affine expression.
  AffineMat vec() const {
    AffineMat out(rows_ * cols_, 1);
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i) {
        out.c0_(j * rows_ + i, 0) = c0_(i, j);
        out.terms_[out.pos(j * rows_ + i, 0)] = terms_[pos(i, j)];
      }
    return out;
  }

 private:
  int rows_ = 0, cols_ = 0;
  MatrixXd c0_;
  std::vector<std::vector<LinTerm>> terms_;

  std::size_t pos(int i, int j) const { return std::size_t(i) * cols_ + j; }

  void require_same_shape(const AffineMat& b, const char* op) const {
    if (rows_ != b.rows_ || cols_ != b.cols_)
      throw DimensionMismatch(std::string("AffineMat: shape mismatch in ") + op);
  }
};

inline AffineMat sy(const AffineMat& a) { return a + a.transpose(); }

inline AffineMat kron_const_affine(const MatrixXd& L, const AffineMat& a) {
  AffineMat r(int(L.rows()) * a.rows(), int(L.cols()) * a.cols());
  for (int i = 0; i < L.rows(); ++i)
    for (int j = 0; j < L.cols(); ++j)
      if (L(i, j) != 0.0) r.set_block(i * a.rows(), j * a.cols(), L(i, j) * a);
  return r;
}

/// [a b; c d]-style assembly from a grid of blocks (row-major), with
/// consistent block row/column heights.
inline AffineMat hcat(const std::vector<AffineMat>& parts) {
  int rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.cols() == 0) continue;
    rows = std::max(rows, p.rows());
    cols += p.cols();
  }
  AffineMat out(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    if (p.cols() == 0) continue;
    if (p.rows() != rows) throw DimensionMismatch("hcat(AffineMat): row mismatch");
    out.set_block(0, at, p);
    at += p.cols();
  }
  return out;
}

inline AffineMat vcat(const std::vector<AffineMat>& parts) {
  int rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.rows() == 0) continue;
    cols = std::max(cols, p.cols());
    rows += p.rows();
  }
  AffineMat out(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    if (p.rows() == 0) continue;
    if (p.cols() != cols) throw DimensionMismatch("vcat(AffineMat): column mismatch");
    out.set_block(at, 0, p);
    at += p.rows();
  }
  return out;
}

inline AffineMat dirsum(const std::vector<AffineMat>& parts) {
  int rows = 0, cols = 0;
  for (const auto& p : parts) {
    rows += p.rows();
    cols += p.cols();
  }
  AffineMat out(rows, cols);
  int r = 0, c = 0;
  for (const auto& p : parts) {
    if (p.rows() > 0 && p.cols() > 0) out.set_block(r, c, p);
    r += p.rows();
    c += p.cols();
  }
  return out;
}

/// One PSD-cone constraint: expr - shift*I >= 0 (sense Pos) or
/// -expr - shift*I >= 0 (sense Neg). The default shift realizes strict
/// inequalities with the margin 1e-8 * (1 + ||constant term||_F).
struct LmiBlock {
  std::string name;
  AffineMat expr;
  bool negate = false;
  double shift = 0.0;

  static double default_margin(const AffineMat& e) {
    return 1e-8 * (1.0 + e.constant_part().norm());
  }

  static LmiBlock pos(std::string name, AffineMat e, double margin = -1.0) {
    if (e.rows() != e.cols()) throw DimensionMismatch("LmiBlock: expression not square");
    double sh = margin >= 0 ? margin : default_margin(e);
    return LmiBlock{std::move(name), std::move(e), false, sh};
  }

  static LmiBlock neg(std::string name, AffineMat e, double margin = -1.0) {
    if (e.rows() != e.cols()) throw DimensionMismatch("LmiBlock: expression not square");
    double sh = margin >= 0 ? margin : default_margin(e);
    return LmiBlock{std::move(name), std::move(e), true, sh};
  }
};

// ---------------------------------------------------------------------------
// Lowered form consumed by conic backends: per block F0 + sum_i y_i F_i >= 0.

struct ConicTriplet {
  int r, c;
  double v;
};

struct ConicBlockVar {
  int var;  // flat scalar index
  std::vector<ConicTriplet> entries;
};

struct ConicBlock {
  std::string name;
  int dim = 0;
  MatrixXd F0;
  std::vector<ConicBlockVar> vars;
};

struct ConicProblem {
  int nvars = 0;
  VectorXd c;  // minimize c^T y
  std::vector<ConicBlock> blocks;
};

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

struct ConicResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  VectorXd y;
  double objective = 0.0;
  double mu = 0.0, prim_inf = 0.0, dual_inf = 0.0;
  int iterations = 0;
  std::string message;
};

struct SolveSettings {
  double feas_tol = 1e-9;
  int max_iters = 200;
  bool verbose = false;
};

/// Abstract conic backend: solves min c^T y subject to block-wise
/// F0 + sum y_i F_i >= 0.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual ConicResult solve(const ConicProblem& p, const SolveSettings& s) const = 0;
};

// ---------------------------------------------------------------------------

struct Solution {
  SolveStatus status = SolveStatus::NumericalFailure;
  VectorXd y;
  std::map<int, MatrixXd> values;  // var id -> value
  double objective = 0.0;
  double mu = 0.0, prim_inf = 0.0, dual_inf = 0.0;
  int iterations = 0;
  std::string message;

  const MatrixXd& value(const VarRef& v) const {
    auto it = values.find(v.id);
    if (it == values.end()) throw Error("Solution: unknown variable " + v.name);
    return it->second;
  }
  double scalar(const VarRef& v) const { return value(v)(0, 0); }
};

class SdpProblem {
 public:
  VarRef symmetric(std::string name, int n) { return declare(VarKind::Symmetric, n, n, name); }
  VarRef rect(std::string name, int r, int c) { return declare(VarKind::Rect, r, c, name); }
  VarRef scalar(std::string name) { return declare(VarKind::Scalar, 1, 1, name); }

  int scalar_count() const { return next_index_; }
  const std::vector<VarRef>& variables() const { return vars_; }
  const std::vector<LmiBlock>& blocks() const { return blocks_; }

  /// Whole variable as an affine expression.
  AffineMat var_mat(const VarRef& v) const {
    AffineMat a(v.rows, v.cols);
    for (int j = 0; j < v.cols; ++j)
      for (int i = 0; i < v.rows; ++i) a.add_term(i, j, v.index(i, j), 1.0);
    return a;
  }

  void add(LmiBlock b) {
    audit_symmetry(b);
    blocks_.push_back(std::move(b));
  }

  void objective_add(const VarRef& v, double weight) {
    if (v.kind != VarKind::Scalar) throw Error("objective terms must be scalar variables");
    detail::add_term(objective_, v.base, weight);
  }

  /// Epigraph of a weighted squared Frobenius norm: declares t and adds the
  /// Schur block [t, vec(expr - anchor)^T; *, I] >= 0 so that t bounds
  /// ||expr - anchor||_F^2; the caller puts weight * t into the objective.
  std::pair<VarRef, LmiBlock> frobenius_epigraph(const AffineMat& expr, const MatrixXd& anchor,
                                                 double weight, const std::string& name) {
    if (weight <= 0) throw Error("frobenius_epigraph: weight must be positive");
    if (expr.rows() != anchor.rows() || expr.cols() != anchor.cols())
      throw DimensionMismatch("frobenius_epigraph: anchor shape");
    VarRef t = scalar(name + ".t");
    AffineMat v = (expr - AffineMat::constant(anchor)).vec();
    const int k = v.rows();
    AffineMat blockmat(1 + k, 1 + k);
    blockmat.add_term(0, 0, t.base, 1.0);
    blockmat.set_block(1, 0, v);
    blockmat.set_block(0, 1, v.transpose());
    blockmat.set_block(1, 1, AffineMat::constant(MatrixXd::Identity(k, k)));
    return {t, LmiBlock::pos(name, std::move(blockmat), 0.0)};
  }

  ConicProblem lower() const {
    ConicProblem p;
    p.nvars = next_index_;
    p.c = VectorXd::Zero(p.nvars);
    for (const auto& t : objective_) p.c[t.idx] = t.c;

    std::vector<char> used(std::size_t(p.nvars), 0);
    for (const auto& b : blocks_) {
      ConicBlock cb;
      cb.name = b.name;
      cb.dim = b.expr.rows();
      double sgn = b.negate ? -1.0 : 1.0;
      cb.F0 = sgn * b.expr.constant_part() - b.shift * MatrixXd::Identity(cb.dim, cb.dim);
      std::map<int, std::vector<ConicTriplet>> per_var;
      for (int i = 0; i < cb.dim; ++i)
        for (int j = 0; j < cb.dim; ++j)
          for (const auto& t : b.expr.terms_at(i, j))
            per_var[t.idx].push_back({i, j, sgn * t.c});
      for (auto& [idx, trips] : per_var) {
        used[idx] = 1;
        cb.vars.push_back({idx, std::move(trips)});
      }
      p.blocks.push_back(std::move(cb));
    }
    for (int i = 0; i < p.nvars; ++i)
      if (!used[i] && p.c[i] != 0.0)
        throw Error("objective variable with index " + std::to_string(i) +
                    " appears in no constraint");
    return p;
  }

  /// Solve through the given backend (or the library default) and audit the
  /// result by substituting back into every constraint.
  Solution solve(const SolveSettings& settings = {}, const ConicBackend* backend = nullptr) const;

  /// Values of all declared variables from the flat vector.
  std::map<int, MatrixXd> unpack(const VectorXd& y) const {
    std::map<int, MatrixXd> out;
    for (const auto& v : vars_) {
      MatrixXd M(v.rows, v.cols);
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j) M(i, j) = y[v.index(i, j)];
      out[v.id] = std::move(M);
    }
    return out;
  }

 private:
  std::vector<VarRef> vars_;
  std::vector<LmiBlock> blocks_;
  std::vector<LinTerm> objective_;
  int next_index_ = 0;

  VarRef declare(VarKind kind, int r, int c, std::string& name) {
    VarRef v;
    v.id = int(vars_.size());
    v.kind = kind;
    v.rows = r;
    v.cols = c;
    v.base = next_index_;
    v.name = name;
    next_index_ += v.scalar_count();
    vars_.push_back(v);
    return v;
  }

  void audit_symmetry(const LmiBlock& b) const {
    const auto& C = b.expr.constant_part();
    if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + C.cwiseAbs().maxCoeff()))
      throw DimensionMismatch("LmiBlock " + b.name + ": constant part not symmetric");
    // random-probe the variable part
    VectorXd y = VectorXd::LinSpaced(next_index_ > 0 ? next_index_ : 1, 0.37, 1.73);
    MatrixXd E = b.expr.eval(y);
    if ((E - E.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + E.cwiseAbs().maxCoeff()))
      throw DimensionMismatch("LmiBlock " + b.name + ": expression not symmetric");
  }
};

// ---------------------------------------------------------------------------
// Sparse SDPA-format text dump of the lowered problem (and a reader, for
// cross-solver debugging). Values use 17 significant digits so the dump
// round-trips doubles exactly.

inline void dump_sdpa(const ConicProblem& p, std::ostream& os) {
  os << "\"kras conic problem\n";
  os << p.nvars << " = mDIM\n";
  os << p.blocks.size() << " = nBLOCK\n";
  char buf[64];
  for (std::size_t b = 0; b < p.blocks.size(); ++b) os << (b ? " " : "") << p.blocks[b].dim;
  os << " = bLOCKsTRUCT\n";
  for (int i = 0; i < p.nvars; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.c[i]);
    os << (i ? " " : "") << buf;
  }
  os << "\n";
  // SDPA convention: X = sum y_i F_i - F0 >= 0, so our F0 flips sign.
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    for (int i = 0; i < blk.dim; ++i)
      for (int j = i; j < blk.dim; ++j)
        if (blk.F0(i, j) != 0.0) {
          std::snprintf(buf, sizeof(buf), "%.17g", -blk.F0(i, j));
          os << 0 << " " << b + 1 << " " << i + 1 << " " << j + 1 << " " << buf << "\n";
        }
    for (const auto& v : blk.vars)
      for (const auto& t : v.entries)
        if (t.r <= t.c) {
          std::snprintf(buf, sizeof(buf), "%.17g", t.v);
          os << v.var + 1 << " " << b + 1 << " " << t.r + 1 << " " << t.c + 1 << " " << buf
             << "\n";
        }
  }
}

inline ConicProblem read_sdpa(std::istream& is) {
  auto next_data_line = [&](std::string& line) {
    while (std::getline(is, line)) {
      if (!line.empty() && line[0] != '"' && line[0] != '*') return true;
    }
    return false;
  };
  std::string line;
  ConicProblem p;
  if (!next_data_line(line)) throw Error("read_sdpa: missing mDIM");
  p.nvars = std::stoi(line);
  if (!next_data_line(line)) throw Error("read_sdpa: missing nBLOCK");
  int nblocks = std::stoi(line);
  if (!next_data_line(line)) throw Error("read_sdpa: missing bLOCKsTRUCT");
  {
    p.blocks.resize(nblocks);
    std::size_t at = 0;
    for (int b = 0; b < nblocks; ++b) {
      std::size_t used = 0;
      int dim = std::stoi(line.substr(at), &used);
      at += used;
      p.blocks[b].dim = std::abs(dim);
      p.blocks[b].F0 = MatrixXd::Zero(p.blocks[b].dim, p.blocks[b].dim);
    }
  }
  if (!next_data_line(line)) throw Error("read_sdpa: missing objective");
  {
    p.c = VectorXd::Zero(p.nvars);
    std::size_t at = 0;
    for (int i = 0; i < p.nvars; ++i) {
      std::size_t used = 0;
      p.c[i] = std::stod(line.substr(at), &used);
      at += used;
    }
  }
  std::map<std::pair<int, int>, std::vector<ConicTriplet>> entries;  // (block, var) -> triplets
  while (next_data_line(line)) {
    int matno, blkno, i, j;
    double v;
    if (std::sscanf(line.c_str(), "%d %d %d %d %lf", &matno, &blkno, &i, &j, &v) != 5) continue;
    auto& blk = p.blocks[blkno - 1];
    if (matno == 0) {
      blk.F0(i - 1, j - 1) = -v;
      if (i != j) blk.F0(j - 1, i - 1) = -v;
    } else {
      auto& list = entries[{blkno - 1, matno - 1}];
      list.push_back({i - 1, j - 1, v});
      if (i != j) list.push_back({j - 1, i - 1, v});
    }
  }
  for (auto& [key, trips] : entries) p.blocks[key.first].vars.push_back({key.second, std::move(trips)});
  return p;
}

}  // namespace kras::sdp
