#pragma once

// Tape-based reverse-mode automatic differentiation over dense matrices.
// Nodes are evaluated eagerly as the graph is built; backward() runs one
// reverse sweep and leaves gradients in the node slots. Binary elementwise
// ops broadcast a [m x 1] column, [1 x n] row or [1 x 1] scalar operand
// against a [m x n] tensor; nothing fancier.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elegant/tensor.hpp"

namespace elegant::ad {

enum class Op : uint8_t {
  Const,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  ScalarMul,
  MatMul,
  Tanh,
  Relu,
  Exp,
  Log,
  Square,
  Sum,
  ColSum,
  ConcatRows,
  SliceRows,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Param: return "param";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::ScalarMul: return "scalar_mul";
    case Op::MatMul: return "matmul";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::ColSum: return "colsum";
    case Op::ConcatRows: return "concat_rows";
    case Op::SliceRows: return "slice_rows";
  }
  return "?";
}

using Id = int;

struct Node {
  Op op;
  Id a = -1;
  Id b = -1;
  double scalar = 0.0;  // ScalarMul factor, SliceRows start row
  int row0 = 0, row1 = 0;
  Tensor val;
  Tensor grad;
  std::string pname;  // Param only
};

class Graph {
 public:
  Id constant(Tensor t) { return push(Op::Const, -1, -1, std::move(t)); }

  Id constant_scalar(double x) { return constant(Tensor::scalar(x)); }

  Id param(const std::string& name, const Tensor& value) {
    Id id = push(Op::Param, -1, -1, value);
    nodes_[id].pname = name;
    return id;
  }

  Id add(Id a, Id b) { return elementwise(Op::Add, a, b); }
  Id sub(Id a, Id b) { return elementwise(Op::Sub, a, b); }
  Id mul(Id a, Id b) { return elementwise(Op::Mul, a, b); }
  Id div(Id a, Id b) { return elementwise(Op::Div, a, b); }

  Id scalar_mul(double c, Id a) {
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x *= c;
    Id id = push(Op::ScalarMul, a, -1, std::move(out));
    nodes_[id].scalar = c;
    return id;
  }

  Id matmul(Id a, Id b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (A.cols != B.rows)
      throw Error("matmul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    // k ascending per output element (the plain mirrors rely on the order).
    Tensor out(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int k = 0; k < A.cols; ++k) {
        const double aik = A.at(i, k);
        const double* brow = &B.v[static_cast<size_t>(k) * B.cols];
        double* orow = &out.v[static_cast<size_t>(i) * out.cols];
        for (int j = 0; j < B.cols; ++j) orow[j] += aik * brow[j];
      }
    return push(Op::MatMul, a, b, std::move(out));
  }

  // matvec is matmul restricted to a column-vector right operand.
  Id matvec(Id a, Id x) {
    if (nodes_[x].val.cols != 1)
      throw Error("matvec: right operand must be a column vector, got " +
                  nodes_[x].val.shape_str());
    return matmul(a, x);
  }

  Id tanh(Id a) { return unary(Op::Tanh, a, [](double x) { return std::tanh(x); }); }
  Id relu(Id a) { return unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
  Id exp(Id a) { return unary(Op::Exp, a, [](double x) { return std::exp(x); }); }
  Id log(Id a) { return unary(Op::Log, a, [](double x) { return std::log(x); }); }
  Id square(Id a) { return unary(Op::Square, a, [](double x) { return x * x; }); }

  Id sum(Id a) {
    double acc = 0.0;
    for (double x : nodes_[a].val.v) acc += x;
    return push(Op::Sum, a, -1, Tensor::scalar(acc));
  }

  // Sum over rows: [m x n] -> [1 x n].
  Id colsum(Id a) {
    const Tensor& A = nodes_[a].val;
    Tensor out(1, A.cols);
    for (int j = 0; j < A.cols; ++j) {
      double acc = 0.0;
      for (int i = 0; i < A.rows; ++i) acc += A.at(i, j);
      out.at(0, j) = acc;
    }
    return push(Op::ColSum, a, -1, std::move(out));
  }

  Id concat_rows(Id a, Id b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (A.cols != B.cols)
      throw Error("concat_rows: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out(A.rows + B.rows, A.cols);
    std::copy(A.v.begin(), A.v.end(), out.v.begin());
    std::copy(B.v.begin(), B.v.end(), out.v.begin() + A.v.size());
    return push(Op::ConcatRows, a, b, std::move(out));
  }

  Id slice_rows(Id a, int row0, int row1) {
    const Tensor& A = nodes_[a].val;
    if (row0 < 0 || row1 > A.rows || row0 >= row1)
      throw Error("slice_rows: bad range [" + std::to_string(row0) + "," +
                  std::to_string(row1) + ") on " + A.shape_str());
    Tensor out(row1 - row0, A.cols);
    for (int i = row0; i < row1; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(i - row0, j) = A.at(i, j);
    Id id = push(Op::SliceRows, a, -1, std::move(out));
    nodes_[id].row0 = row0;
    nodes_[id].row1 = row1;
    return id;
  }

  const Tensor& value(Id id) const { return nodes_[id].val; }
  const Tensor& grad(Id id) const { return nodes_[id].grad; }
  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root. Gradients accumulate in node slots;
  // repeated calls keep accumulating unless zero_grads() is called first.
  void backward(Id root, double seed = 1.0) {
    Node& r = nodes_[root];
    if (r.val.rows != 1 || r.val.cols != 1)
      throw Error("backward: root must be scalar, got " + r.val.shape_str());
    for (Node& n : nodes_)
      if (n.grad.v.empty()) n.grad = Tensor(n.val.rows, n.val.cols);
    r.grad.v[0] += seed;
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) backward_one(i);
  }

  void zero_grads() {
    for (Node& n : nodes_)
      for (double& g : n.grad.v) g = 0.0;
  }

  // Sum gradients of all Param nodes, keyed by name (a parameter may appear
  // as many nodes in an unrolled graph).
  std::map<std::string, Tensor> param_grads() const {
    std::map<std::string, Tensor> out;
    for (const Node& n : nodes_) {
      if (n.op != Op::Param) continue;
      auto it = out.find(n.pname);
      if (it == out.end()) {
        out.emplace(n.pname, n.grad);
      } else {
        for (size_t i = 0; i < n.grad.v.size(); ++i) it->second.v[i] += n.grad.v[i];
      }
    }
    return out;
  }

 private:
  std::vector<Node> nodes_;

  Id push(Op op, Id a, Id b, Tensor val) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  template <class F>
  Id unary(Op op, Id a, F f) {
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x = f(x);
    return push(op, a, -1, std::move(out));
  }

  static bool broadcast_ok(const Tensor& a, const Tensor& b) {
    auto dim_ok = [](int x, int y) { return x == y || x == 1 || y == 1; };
    return dim_ok(a.rows, b.rows) && dim_ok(a.cols, b.cols);
  }

  Id elementwise(Op op, Id a, Id b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (!broadcast_ok(A, B))
      throw Error(std::string(op_name(op)) + ": shape mismatch " + A.shape_str() + " vs " +
                  B.shape_str());
    const int rows = std::max(A.rows, B.rows);
    const int cols = std::max(A.cols, B.cols);
    Tensor out(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const double x = A.at(A.rows == 1 ? 0 : i, A.cols == 1 ? 0 : j);
        const double y = B.at(B.rows == 1 ? 0 : i, B.cols == 1 ? 0 : j);
        double z = 0.0;
        switch (op) {
          case Op::Add: z = x + y; break;
          case Op::Sub: z = x - y; break;
          case Op::Mul: z = x * y; break;
          case Op::Div: z = x / y; break;
          default: break;
        }
        out.at(i, j) = z;
      }
    return push(op, a, b, std::move(out));
  }

  // Accumulate g into the operand's grad, reducing over broadcast dims.
  void bcast_accum(Tensor& dst, const Tensor& g, int i, int j, double val) {
    dst.at(dst.rows == 1 ? 0 : i, dst.cols == 1 ? 0 : j) += val;
    (void)g;
  }

  void backward_one(Id id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    bool any = false;
    for (double x : g.v)
      if (x != 0.0) {
        any = true;
        break;
      }
    if (!any) return;
    switch (n.op) {
      case Op::Const:
      case Op::Param:
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        Node& na = nodes_[n.a];
        Node& nb = nodes_[n.b];
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) {
            const double gi = g.at(i, j);
            if (gi == 0.0) continue;
            const double x = na.val.at(na.val.rows == 1 ? 0 : i, na.val.cols == 1 ? 0 : j);
            const double y = nb.val.at(nb.val.rows == 1 ? 0 : i, nb.val.cols == 1 ? 0 : j);
            double da = 0.0, db = 0.0;
            switch (n.op) {
              case Op::Add: da = gi; db = gi; break;
              case Op::Sub: da = gi; db = -gi; break;
              case Op::Mul: da = gi * y; db = gi * x; break;
              case Op::Div: da = gi / y; db = -gi * x / (y * y); break;
              default: break;
            }
            bcast_accum(na.grad, g, i, j, da);
            bcast_accum(nb.grad, g, i, j, db);
          }
        break;
      }
      case Op::ScalarMul: {
        Node& na = nodes_[n.a];
        for (size_t i = 0; i < g.v.size(); ++i) na.grad.v[i] += n.scalar * g.v[i];
        break;
      }
      case Op::MatMul: {
        Node& na = nodes_[n.a];
        Node& nb = nodes_[n.b];
        const Tensor& A = na.val;
        const Tensor& B = nb.val;
        // dA = g B^T, dB = A^T g
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            double acc = 0.0;
            const double* grow = &g.v[static_cast<size_t>(i) * g.cols];
            const double* brow = &B.v[static_cast<size_t>(k) * B.cols];
            for (int j = 0; j < B.cols; ++j) acc += grow[j] * brow[j];
            na.grad.at(i, k) += acc;
          }
        for (int i = 0; i < A.rows; ++i) {
          const double* grow = &g.v[static_cast<size_t>(i) * g.cols];
          for (int k = 0; k < A.cols; ++k) {
            const double aik = A.at(i, k);
            double* drow = &nb.grad.v[static_cast<size_t>(k) * nb.grad.cols];
            for (int j = 0; j < B.cols; ++j) drow[j] += aik * grow[j];
          }
        }
        break;
      }
      case Op::Tanh: {
        Node& na = nodes_[n.a];
        for (size_t i = 0; i < g.v.size(); ++i) {
          const double t = n.val.v[i];
          na.grad.v[i] += g.v[i] * (1.0 - t * t);
        }
        break;
      }
      case Op::Relu: {
        Node& na = nodes_[n.a];
        for (size_t i = 0; i < g.v.size(); ++i)
          na.grad.v[i] += na.val.v[i] > 0.0 ? g.v[i] : 0.0;
        break;
      }
      case Op::Exp: {
        Node& na = nodes_[n.a];
        for (size_t i = 0; i < g.v.size(); ++i) na.grad.v[i] += g.v[i] * n.val.v[i];
        break;
      }
      case Op::Log: {
        Node& na = nodes_[n.a];
        for (size_t i = 0; i < g.v.size(); ++i) na.grad.v[i] += g.v[i] / na.val.v[i];
        break;
      }
      case Op::Square: {
        Node& na = nodes_[n.a];
        for (size_t i = 0; i < g.v.size(); ++i) na.grad.v[i] += g.v[i] * 2.0 * na.val.v[i];
        break;
      }
      case Op::Sum: {
        Node& na = nodes_[n.a];
        const double gi = g.v[0];
        for (double& d : na.grad.v) d += gi;
        break;
      }
      case Op::ColSum: {
        Node& na = nodes_[n.a];
        for (int i = 0; i < na.val.rows; ++i)
          for (int j = 0; j < na.val.cols; ++j) na.grad.at(i, j) += g.at(0, j);
        break;
      }
      case Op::ConcatRows: {
        Node& na = nodes_[n.a];
        Node& nb = nodes_[n.b];
        for (size_t i = 0; i < na.grad.v.size(); ++i) na.grad.v[i] += g.v[i];
        for (size_t i = 0; i < nb.grad.v.size(); ++i) nb.grad.v[i] += g.v[na.grad.v.size() + i];
        break;
      }
      case Op::SliceRows: {
        Node& na = nodes_[n.a];
        for (int i = n.row0; i < n.row1; ++i)
          for (int j = 0; j < g.cols; ++j) na.grad.at(i, j) += g.at(i - n.row0, j);
        break;
      }
    }
  }
};

}  // namespace elegant::ad
