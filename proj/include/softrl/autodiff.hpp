// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff on a tape of 2-D tensors.
//
// The primitive set is closed: add, multiply, matmul, tanh, relu, exp, log,
// sum, mean, square, min. Everything else (sub, clamp, softplus, column
// slicing, ...) is composed from these so that one set of backward rules
// covers the whole project. Constant-operand forms (Scale, AddConst) and the
// bias broadcast (AddRow) are compact encodings of add/multiply, not new
// primitives.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "softrl/tensor.hpp"

namespace softrl {

enum class Op : std::uint8_t {
  Leaf,
  Add,       // same shape
  AddRow,    // (m x n) + (1 x n)
  AddConst,  // x + c
  Scale,     // c * x
  Mul,       // elementwise, same shape
  Matmul,
  Tanh,
  Relu,
  Exp,
  Log,
  Square,
  Min,      // elementwise, same shape; ties route the gradient to the left
  Sum,      // all entries -> 1x1
  RowSum,   // (m x n) -> (m x 1)
  Mean,     // all entries -> 1x1
  Detach,   // identity value, blocks gradient
};

class Tape;

struct DiffNode {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Tensor& adjoint() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  double item() const;
};

class Tape {
 public:
  struct Node {
    Tensor val;
    Tensor adj;  // allocated to val's shape on first backward() reach
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double c = 0.0;           // constant operand for Scale / AddConst
    Tensor* grad_sink = nullptr;  // external gradient accumulator (parameters)
  };

  DiffNode constant(Tensor v) { return push(std::move(v), Op::Leaf, -1, -1); }

  DiffNode scalar(double v) { return constant(Tensor::scalar(v)); }

  // Leaf bound to an external gradient buffer. One node per distinct sink:
  // repeated uses of the same parameter share the leaf so its adjoint
  // accumulates across all uses.
  DiffNode leaf(const Tensor& value, Tensor* grad_sink) {
    if (grad_sink != nullptr) {
      auto it = sink_cache_.find(grad_sink);
      if (it != sink_cache_.end()) return DiffNode{this, it->second};
    }
    DiffNode n = push(value, Op::Leaf, -1, -1);
    nodes_[n.id].grad_sink = grad_sink;
    if (grad_sink != nullptr) sink_cache_[grad_sink] = n.id;
    return n;
  }

  const Node& node(int id) const { return nodes_[id]; }
  Node& node(int id) { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  void clear() {
    nodes_.clear();
    sink_cache_.clear();
  }

  void zero_adjoints() {
    for (Node& n : nodes_) n.adj.fill(0.0);
  }

  // --- primitives -----------------------------------------------------

  DiffNode add(DiffNode x, DiffNode y) {
    const Tensor& a = val(x);
    const Tensor& b = val(y);
    if (a.same_shape(b)) {
      Tensor out = a;
      for (int i = 0; i < out.size(); ++i) out[i] += b[i];
      return push(std::move(out), Op::Add, x.id, y.id);
    }
    if (b.rows == 1 && b.cols == a.cols) {
      Tensor out = a;
      for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) out.at(r, c) += b[c];
      return push(std::move(out), Op::AddRow, x.id, y.id);
    }
    throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }

  DiffNode add_const(DiffNode x, double c) {
    Tensor out = val(x);
    for (double& v : out.data) v += c;
    DiffNode n = push(std::move(out), Op::AddConst, x.id, -1);
    nodes_[n.id].c = c;
    return n;
  }

  DiffNode scale(DiffNode x, double c) {
    Tensor out = val(x);
    for (double& v : out.data) v *= c;
    DiffNode n = push(std::move(out), Op::Scale, x.id, -1);
    nodes_[n.id].c = c;
    return n;
  }

  DiffNode mul(DiffNode x, DiffNode y) {
    const Tensor& a = val(x);
    const Tensor& b = val(y);
    if (!a.same_shape(b))
      throw std::invalid_argument("mul: shape mismatch " + a.shape_str() + " vs " +
                                  b.shape_str());
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] *= b[i];
    return push(std::move(out), Op::Mul, x.id, y.id);
  }

  DiffNode matmul(DiffNode x, DiffNode y) {
    const Tensor& a = val(x);
    const Tensor& b = val(y);
    if (a.cols != b.rows)
      throw std::invalid_argument("matmul: inner dims " + a.shape_str() + " vs " +
                                  b.shape_str());
    Tensor out(a.rows, b.cols);
    matmul_into(a, b, out);
    return push(std::move(out), Op::Matmul, x.id, y.id);
  }

  DiffNode tanh(DiffNode x) {
    Tensor out = val(x);
    for (double& v : out.data) v = std::tanh(v);
    return push(std::move(out), Op::Tanh, x.id, -1);
  }

  DiffNode relu(DiffNode x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), Op::Relu, x.id, -1);
  }

  DiffNode exp(DiffNode x) {
    Tensor out = val(x);
    for (double& v : out.data) v = std::exp(v);
    return push(std::move(out), Op::Exp, x.id, -1);
  }

  DiffNode log(DiffNode x) {
    Tensor out = val(x);
    for (double& v : out.data) v = std::log(v);
    return push(std::move(out), Op::Log, x.id, -1);
  }

  DiffNode square(DiffNode x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v * v;
    return push(std::move(out), Op::Square, x.id, -1);
  }

  DiffNode min(DiffNode x, DiffNode y) {
    const Tensor& a = val(x);
    const Tensor& b = val(y);
    if (!a.same_shape(b))
      throw std::invalid_argument("min: shape mismatch " + a.shape_str() + " vs " +
                                  b.shape_str());
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] = a[i] <= b[i] ? a[i] : b[i];
    return push(std::move(out), Op::Min, x.id, y.id);
  }

  DiffNode sum(DiffNode x) {
    double s = 0.0;
    for (double v : val(x).data) s += v;
    return push(Tensor::scalar(s), Op::Sum, x.id, -1);
  }

  DiffNode row_sum(DiffNode x) {
    const Tensor& a = val(x);
    Tensor out(a.rows, 1);
    for (int r = 0; r < a.rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < a.cols; ++c) s += a.at(r, c);
      out[r] = s;
    }
    return push(std::move(out), Op::RowSum, x.id, -1);
  }

  DiffNode mean(DiffNode x) {
    const Tensor& a = val(x);
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : a.data) s += v;
    return push(Tensor::scalar(s / a.size()), Op::Mean, x.id, -1);
  }

  DiffNode detach(DiffNode x) { return push(val(x), Op::Detach, x.id, -1); }

  // --- backward --------------------------------------------------------

  // Accumulates d(root)/d(node) into every ancestor's adjoint and into bound
  // parameter gradient buffers. Each call propagates from a fresh unit seed,
  // so repeated calls without zero_adjoints() add up.
  void backward(DiffNode root) {
    if (!root.valid() || root.tape != this)
      throw std::invalid_argument("backward: node does not belong to this tape");
    const Tensor& rv = nodes_[root.id].val;
    if (rv.rows != 1 || rv.cols != 1)
      throw std::invalid_argument("backward: root must be scalar, got " +
                                  rv.shape_str());

    const int n = root.id + 1;
    reach_.assign(n, 0);
    stack_.clear();
    stack_.push_back(root.id);
    reach_[root.id] = 1;
    while (!stack_.empty()) {
      int i = stack_.back();
      stack_.pop_back();
      const Node& nd = nodes_[i];
      if (nd.op == Op::Detach) continue;  // gradient stops here
      if (nd.a >= 0 && !reach_[nd.a]) {
        reach_[nd.a] = 1;
        stack_.push_back(nd.a);
      }
      if (nd.b >= 0 && !reach_[nd.b]) {
        reach_[nd.b] = 1;
        stack_.push_back(nd.b);
      }
    }

    if (static_cast<int>(grad_.size()) < n) grad_.resize(n);
    for (int i = 0; i < n; ++i) {
      if (!reach_[i]) continue;
      Tensor& g = grad_[i];
      const Tensor& v = nodes_[i].val;
      if (!g.same_shape(v)) g = Tensor(v.rows, v.cols);
      g.fill(0.0);
    }
    grad_[root.id][0] = 1.0;

    for (int i = root.id; i >= 0; --i) {
      if (!reach_[i]) continue;
      propagate(i);
    }

    for (int i = 0; i < n; ++i) {
      if (!reach_[i]) continue;
      Node& nd = nodes_[i];
      const Tensor& g = grad_[i];
      if (!nd.adj.same_shape(g)) nd.adj = Tensor(g.rows, g.cols);
      for (int k = 0; k < g.size(); ++k) nd.adj[k] += g[k];
      if (nd.grad_sink != nullptr)
        for (int k = 0; k < g.size(); ++k) (*nd.grad_sink)[k] += g[k];
    }
  }

  static void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
    const int m = a.rows, kk = a.cols, nn = b.cols;
    const double* ap = a.data.data();
    const double* bp = b.data.data();
    double* op = out.data.data();
    for (int i = 0; i < m; ++i) {
      double* orow = op + static_cast<std::size_t>(i) * nn;
      const double* arow = ap + static_cast<std::size_t>(i) * kk;
      for (int k = 0; k < kk; ++k) {
        const double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = bp + static_cast<std::size_t>(k) * nn;
        for (int j = 0; j < nn; ++j) orow[j] += av * brow[j];
      }
    }
  }

 private:
  friend struct DiffNode;

  const Tensor& val(DiffNode x) const {
    if (!x.valid() || x.tape != this)
      throw std::invalid_argument("op input does not belong to this tape");
    return nodes_[x.id].val;
  }

  DiffNode push(Tensor v, Op op, int a, int b) {
    Node nd;
    nd.val = std::move(v);
    nd.op = op;
    nd.a = a;
    nd.b = b;
    nodes_.push_back(std::move(nd));
    return DiffNode{this, static_cast<int>(nodes_.size()) - 1};
  }

  void propagate(int i) {
    const Node& nd = nodes_[i];
    const Tensor& g = grad_[i];
    switch (nd.op) {
      case Op::Leaf:
      case Op::Detach:
        return;
      case Op::Add: {
        Tensor& ga = grad_[nd.a];
        Tensor& gb = grad_[nd.b];
        for (int k = 0; k < g.size(); ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        return;
      }
      case Op::AddRow: {
        Tensor& ga = grad_[nd.a];
        Tensor& gb = grad_[nd.b];
        const int rows = nd.val.rows, cols = nd.val.cols;
        for (int k = 0; k < g.size(); ++k) ga[k] += g[k];
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gb[c] += g.at(r, c);
        return;
      }
      case Op::AddConst: {
        Tensor& ga = grad_[nd.a];
        for (int k = 0; k < g.size(); ++k) ga[k] += g[k];
        return;
      }
      case Op::Scale: {
        Tensor& ga = grad_[nd.a];
        for (int k = 0; k < g.size(); ++k) ga[k] += nd.c * g[k];
        return;
      }
      case Op::Mul: {
        Tensor& ga = grad_[nd.a];
        Tensor& gb = grad_[nd.b];
        const Tensor& av = nodes_[nd.a].val;
        const Tensor& bv = nodes_[nd.b].val;
        for (int k = 0; k < g.size(); ++k) {
          ga[k] += g[k] * bv[k];
          gb[k] += g[k] * av[k];
        }
        return;
      }
      case Op::Matmul: {
        // C = A B:  dA += G B^T,  dB += A^T G
        const Tensor& A = nodes_[nd.a].val;
        const Tensor& B = nodes_[nd.b].val;
        Tensor& ga = grad_[nd.a];
        Tensor& gb = grad_[nd.b];
        const int m = A.rows, kk = A.cols, nn = B.cols;
        for (int r = 0; r < m; ++r) {
          const double* grow = &g.data[static_cast<std::size_t>(r) * nn];
          double* garow = &ga.data[static_cast<std::size_t>(r) * kk];
          for (int k = 0; k < kk; ++k) {
            const double* brow = &B.data[static_cast<std::size_t>(k) * nn];
            double s = 0.0;
            for (int j = 0; j < nn; ++j) s += grow[j] * brow[j];
            garow[k] += s;
          }
        }
        for (int r = 0; r < m; ++r) {
          const double* arow = &A.data[static_cast<std::size_t>(r) * kk];
          const double* grow = &g.data[static_cast<std::size_t>(r) * nn];
          for (int k = 0; k < kk; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            double* gbrow = &gb.data[static_cast<std::size_t>(k) * nn];
            for (int j = 0; j < nn; ++j) gbrow[j] += av * grow[j];
          }
        }
        return;
      }
      case Op::Tanh: {
        Tensor& ga = grad_[nd.a];
        for (int k = 0; k < g.size(); ++k) {
          const double y = nd.val[k];
          ga[k] += g[k] * (1.0 - y * y);
        }
        return;
      }
      case Op::Relu: {
        Tensor& ga = grad_[nd.a];
        const Tensor& x = nodes_[nd.a].val;
        for (int k = 0; k < g.size(); ++k)
          if (x[k] > 0.0) ga[k] += g[k];
        return;
      }
      case Op::Exp: {
        Tensor& ga = grad_[nd.a];
        for (int k = 0; k < g.size(); ++k) ga[k] += g[k] * nd.val[k];
        return;
      }
      case Op::Log: {
        Tensor& ga = grad_[nd.a];
        const Tensor& x = nodes_[nd.a].val;
        for (int k = 0; k < g.size(); ++k) ga[k] += g[k] / x[k];
        return;
      }
      case Op::Square: {
        Tensor& ga = grad_[nd.a];
        const Tensor& x = nodes_[nd.a].val;
        for (int k = 0; k < g.size(); ++k) ga[k] += g[k] * 2.0 * x[k];
        return;
      }
      case Op::Min: {
        Tensor& ga = grad_[nd.a];
        Tensor& gb = grad_[nd.b];
        const Tensor& av = nodes_[nd.a].val;
        const Tensor& bv = nodes_[nd.b].val;
        for (int k = 0; k < g.size(); ++k) {
          if (av[k] <= bv[k])
            ga[k] += g[k];
          else
            gb[k] += g[k];
        }
        return;
      }
      case Op::Sum: {
        Tensor& ga = grad_[nd.a];
        const double gv = g[0];
        for (int k = 0; k < ga.size(); ++k) ga[k] += gv;
        return;
      }
      case Op::RowSum: {
        Tensor& ga = grad_[nd.a];
        const int rows = ga.rows, cols = ga.cols;
        for (int r = 0; r < rows; ++r) {
          const double gv = g[r];
          double* row = &ga.data[static_cast<std::size_t>(r) * cols];
          for (int c = 0; c < cols; ++c) row[c] += gv;
        }
        return;
      }
      case Op::Mean: {
        Tensor& ga = grad_[nd.a];
        const double gv = g[0] / ga.size();
        for (int k = 0; k < ga.size(); ++k) ga[k] += gv;
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<Tensor*, int> sink_cache_;
  std::vector<Tensor> grad_;
  std::vector<std::uint8_t> reach_;
  std::vector<int> stack_;
};

inline const Tensor& DiffNode::value() const { return tape->node(id).val; }
inline const Tensor& DiffNode::adjoint() const { return tape->node(id).adj; }
inline double DiffNode::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw std::logic_error("item(): tensor is not scalar");
  return v[0];
}

// --- operator sugar and composites --------------------------------------

inline DiffNode operator+(DiffNode a, DiffNode b) { return a.tape->add(a, b); }
inline DiffNode operator+(DiffNode a, double c) { return a.tape->add_const(a, c); }
inline DiffNode operator+(double c, DiffNode a) { return a.tape->add_const(a, c); }
inline DiffNode operator*(DiffNode a, DiffNode b) { return a.tape->mul(a, b); }
inline DiffNode operator*(double c, DiffNode a) { return a.tape->scale(a, c); }
inline DiffNode operator*(DiffNode a, double c) { return a.tape->scale(a, c); }
inline DiffNode operator-(DiffNode a) { return a.tape->scale(a, -1.0); }
inline DiffNode operator-(DiffNode a, DiffNode b) {
  return a.tape->add(a, b.tape->scale(b, -1.0));
}
inline DiffNode operator-(DiffNode a, double c) { return a.tape->add_const(a, -c); }
inline DiffNode operator-(double c, DiffNode a) {
  return a.tape->add_const(a.tape->scale(a, -1.0), c);
}

inline DiffNode matmul(DiffNode a, DiffNode b) { return a.tape->matmul(a, b); }
inline DiffNode tanh(DiffNode a) { return a.tape->tanh(a); }
inline DiffNode relu(DiffNode a) { return a.tape->relu(a); }
inline DiffNode exp(DiffNode a) { return a.tape->exp(a); }
inline DiffNode log(DiffNode a) { return a.tape->log(a); }
inline DiffNode square(DiffNode a) { return a.tape->square(a); }
inline DiffNode min_elem(DiffNode a, DiffNode b) { return a.tape->min(a, b); }
inline DiffNode sum(DiffNode a) { return a.tape->sum(a); }
inline DiffNode row_sum(DiffNode a) { return a.tape->row_sum(a); }
inline DiffNode mean(DiffNode a) { return a.tape->mean(a); }
inline DiffNode detach(DiffNode a) { return a.tape->detach(a); }

// lo + relu(x - lo) - relu(x - hi); gradient is 1 inside [lo, hi], 0 outside.
inline DiffNode clamp(DiffNode x, double lo, double hi) {
  return relu(x - lo) - relu(x - hi) + lo;
}

inline DiffNode abs(DiffNode x) { return relu(x) + relu(-x); }

// Stable softplus composed from the primitive set:
// softplus(x) = relu(x) + log(1 + exp(-|x|)). The exp argument is <= 0, so
// this never overflows.
inline DiffNode softplus(DiffNode x) {
  return relu(x) + log(exp(-abs(x)) + 1.0);
}

// Columns [begin, begin+count) selected via a constant selector matrix, so
// slicing stays inside the matmul primitive.
inline DiffNode slice_cols(DiffNode x, int begin, int count) {
  Tape& t = *x.tape;
  const int d = x.cols();
  if (begin < 0 || count <= 0 || begin + count > d)
    throw std::invalid_argument("slice_cols: range out of bounds");
  Tensor sel(d, count);
  for (int j = 0; j < count; ++j) sel.at(begin + j, j) = 1.0;
  return t.matmul(x, t.constant(std::move(sel)));
}

// Places the columns of x (m x count) into a wider zero matrix (m x total)
// starting at `begin`; the adjoint of the other columns is zero.
inline DiffNode spread_cols(DiffNode x, int total, int begin) {
  Tape& t = *x.tape;
  const int count = x.cols();
  if (begin < 0 || begin + count > total)
    throw std::invalid_argument("spread_cols: range out of bounds");
  Tensor sel(count, total);
  for (int j = 0; j < count; ++j) sel.at(j, begin + j) = 1.0;
  return t.matmul(x, t.constant(std::move(sel)));
}

}  // namespace softrl
