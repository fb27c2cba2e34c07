#include "melon/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "melon/error.hpp"

namespace melon {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Concat: return "concat";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Relu: return "relu";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Neg: return "neg";
    case Op::Softmax: return "softmax";
    case Op::Softplus: return "softplus";
    case Op::Broadcast: return "broadcast";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  // log(1 + e^x) without overflow on large |x|.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

int Tape::push(Node n) {
  if (Tensor::checked()) n.value.require_finite(op_name(n.op));
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

const Node& Tape::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw NumericError("tape: unknown node id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

Node& Tape::node(int id) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(id));
}

void Tape::bad_shapes(Op op, int a, int b) const {
  std::string msg = std::string("tape: ") + op_name(op) + " shape mismatch: " +
                    shape_str(node(a).value.shape());
  if (b >= 0) msg += " vs " + shape_str(node(b).value.shape());
  throw NumericError(msg);
}

int Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  if (!x.same_shape(y)) bad_shapes(Op::Add, a, b);
  Node n;
  n.op = Op::Add;
  n.parents = {a, b};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] + y[i];
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  if (!x.same_shape(y)) bad_shapes(Op::Sub, a, b);
  Node n;
  n.op = Op::Sub;
  n.parents = {a, b};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] - y[i];
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  if (!x.same_shape(y)) bad_shapes(Op::Mul, a, b);
  Node n;
  n.op = Op::Mul;
  n.parents = {a, b};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] * y[i];
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  if (x.ndim() != 2 || y.ndim() != 2 || x.cols() != y.rows()) bad_shapes(Op::MatMul, a, b);
  const std::size_t m = x.rows(), k = x.cols(), p = y.cols();
  Node n;
  n.op = Op::MatMul;
  n.parents = {a, b};
  n.value = Tensor({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double xv = x[i * k + l];
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) n.value[i * p + j] += xv * y[l * p + j];
    }
  }
  return push(std::move(n));
}

int Tape::concat(std::span<const int> parts, int axis) {
  if (parts.empty()) throw NumericError("tape: concat of zero inputs");
  const Tensor& first = node(parts[0]).value;
  const std::size_t nd = first.ndim();
  if (nd == 0 || nd > 2 || axis < 0 || axis >= static_cast<int>(nd)) {
    throw NumericError("tape: concat axis " + std::to_string(axis) + " on shape " +
                       shape_str(first.shape()));
  }
  Shape out = first.shape();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Tensor& t = node(parts[i]).value;
    if (t.ndim() != nd) bad_shapes(Op::Concat, parts[0], parts[i]);
    for (std::size_t d = 0; d < nd; ++d) {
      if (d == static_cast<std::size_t>(axis)) continue;
      if (t.shape()[d] != first.shape()[d]) bad_shapes(Op::Concat, parts[0], parts[i]);
    }
    out[static_cast<std::size_t>(axis)] += t.shape()[static_cast<std::size_t>(axis)];
  }

  Node n;
  n.op = Op::Concat;
  n.attr = axis;
  n.parents.assign(parts.begin(), parts.end());
  n.value = Tensor(out);
  if (nd == 1 || axis == 0) {
    std::size_t pos = 0;
    for (int p : parts) {
      const Tensor& t = node(p).value;
      std::copy(t.data(), t.data() + t.numel(), n.value.data() + pos);
      pos += t.numel();
    }
  } else {  // 2-D, axis 1
    const std::size_t rows = out[0], out_cols = out[1];
    std::size_t col0 = 0;
    for (int p : parts) {
      const Tensor& t = node(p).value;
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(t.data() + r * t.cols(), t.data() + (r + 1) * t.cols(),
                  n.value.data() + r * out_cols + col0);
      }
      col0 += t.cols();
    }
  }
  return push(std::move(n));
}

int Tape::sum(int a) {
  const Tensor& x = node(a).value;
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  Node n;
  n.op = Op::Sum;
  n.parents = {a};
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

int Tape::mean(int a) {
  const Tensor& x = node(a).value;
  if (x.numel() == 0) throw NumericError("tape: mean of empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  Node n;
  n.op = Op::Mean;
  n.parents = {a};
  n.value = Tensor::scalar(s / static_cast<double>(x.numel()));
  return push(std::move(n));
}

int Tape::relu(int a) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::Relu;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
  return push(std::move(n));
}

int Tape::leaky_relu(int a, double slope) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::LeakyRelu;
  n.attr = slope;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return push(std::move(n));
}

int Tape::sigmoid(int a) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::Sigmoid;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = stable_sigmoid(x[i]);
  return push(std::move(n));
}

int Tape::log_op(int a) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::Log;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = std::log(x[i]);
  return push(std::move(n));
}

int Tape::exp_op(int a) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::Exp;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = std::exp(x[i]);
  return push(std::move(n));
}

int Tape::neg(int a) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::Neg;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = -x[i];
  return push(std::move(n));
}

int Tape::softmax(int a) {
  const Tensor& x = node(a).value;
  if (x.ndim() == 0 || x.ndim() > 2) {
    throw NumericError("tape: softmax on shape " + shape_str(x.shape()));
  }
  const std::size_t cols = x.ndim() == 1 ? x.numel() : x.cols();
  const std::size_t rows = x.numel() / cols;
  if (cols == 0) throw NumericError("tape: softmax over zero elements");
  Node n;
  n.op = Op::Softmax;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* out = n.value.data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
  return push(std::move(n));
}

int Tape::softplus(int a) {
  const Tensor& x = node(a).value;
  Node n;
  n.op = Op::Softplus;
  n.parents = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = stable_softplus(x[i]);
  return push(std::move(n));
}

int Tape::broadcast(int a, Shape to) {
  const Tensor& x = node(a).value;
  const std::size_t target = shape_numel(to);
  Node n;
  n.op = Op::Broadcast;
  n.parents = {a};

  if (x.numel() == 1) {
    n.value = Tensor::full(std::move(to), x[0]);
    return push(std::move(n));
  }
  // Row-vector (k) or (1,k) tiled down a (m,k) matrix.
  const bool row_like = x.ndim() == 1 || (x.ndim() == 2 && x.rows() == 1);
  if (row_like && to.size() == 2 && to[1] == (x.ndim() == 1 ? x.numel() : x.cols())) {
    n.value = Tensor(to);
    const std::size_t k = to[1];
    for (std::size_t r = 0; r < to[0]; ++r) {
      std::copy(x.data(), x.data() + k, n.value.data() + r * k);
    }
    return push(std::move(n));
  }
  // Column vector (m,1) tiled across a (m,k) matrix.
  if (x.ndim() == 2 && x.cols() == 1 && to.size() == 2 && to[0] == x.rows()) {
    n.value = Tensor(to);
    for (std::size_t r = 0; r < to[0]; ++r) {
      for (std::size_t c = 0; c < to[1]; ++c) n.value[r * to[1] + c] = x[r];
    }
    return push(std::move(n));
  }
  throw NumericError("tape: broadcast " + shape_str(x.shape()) + " -> " + shape_str(to) +
                     " unsupported (numel " + std::to_string(target) + ")");
}

int Tape::reshape(int a, Shape to) {
  const Tensor& x = node(a).value;
  if (shape_numel(to) != x.numel()) bad_shapes(Op::Reshape, a, -1);
  Node n;
  n.op = Op::Reshape;
  n.parents = {a};
  n.value = Tensor(std::move(to), std::vector<double>(x.data(), x.data() + x.numel()));
  return push(std::move(n));
}

int Tape::detach(int a) {
  Node n;
  n.op = Op::Leaf;
  n.value = node(a).value;
  return push(std::move(n));
}

void Tape::backward(int root) {
  const Tensor& v = node(root).value;
  if (v.numel() != 1) {
    throw NumericError("tape: backward on non-scalar root needs an explicit seed, shape " +
                       shape_str(v.shape()));
  }
  backward(root, Tensor::full(v.shape(), 1.0));
}

void Tape::backward(int root, const Tensor& seed) {
  if (nodes_.empty()) throw NumericError("tape: backward on empty tape");
  Node& r = node(root);
  if (!seed.same_shape(r.value)) {
    throw NumericError("tape: seed shape " + shape_str(seed.shape()) +
                       " does not match root " + shape_str(r.value.shape()));
  }
  for (auto& n : nodes_) n.adjoint = Tensor(n.value.shape());
  std::vector<char> touched(nodes_.size(), 0);
  r.adjoint = seed;
  touched[static_cast<std::size_t>(root)] = 1;

  for (int id = root; id >= 0; --id) {
    if (!touched[static_cast<std::size_t>(id)]) continue;
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Leaf) continue;
    for (std::int32_t p : n.parents) touched[static_cast<std::size_t>(p)] = 1;
    const Tensor& g = n.adjoint;

    switch (n.op) {
      case Op::Add: {
        Tensor& da = node(n.parents[0]).adjoint;
        Tensor& db = node(n.parents[1]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i];
          db[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        Tensor& da = node(n.parents[0]).adjoint;
        Tensor& db = node(n.parents[1]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i];
          db[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& b = node(n.parents[1]).value;
        Tensor& da = node(n.parents[0]).adjoint;
        Tensor& db = node(n.parents[1]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i] * b[i];
          db[i] += g[i] * a[i];
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& a = node(n.parents[0]).value;  // (m,k)
        const Tensor& b = node(n.parents[1]).value;  // (k,p)
        Tensor& da = node(n.parents[0]).adjoint;
        Tensor& db = node(n.parents[1]).adjoint;
        const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
        // dA += g * B^T ; dB += A^T * g
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < p; ++j) {
            const double gv = g[i * p + j];
            if (gv == 0.0) continue;
            for (std::size_t l = 0; l < k; ++l) {
              da[i * k + l] += gv * b[l * p + j];
              db[l * p + j] += gv * a[i * k + l];
            }
          }
        }
        break;
      }
      case Op::Concat: {
        const int axis = static_cast<int>(n.attr);
        if (n.value.ndim() == 1 || axis == 0) {
          std::size_t pos = 0;
          for (std::int32_t p : n.parents) {
            Tensor& dp = node(p).adjoint;
            for (std::size_t i = 0; i < dp.numel(); ++i) dp[i] += g[pos + i];
            pos += dp.numel();
          }
        } else {
          const std::size_t out_cols = n.value.cols();
          std::size_t col0 = 0;
          for (std::int32_t p : n.parents) {
            Tensor& dp = node(p).adjoint;
            const std::size_t pc = dp.cols();
            for (std::size_t rr = 0; rr < dp.rows(); ++rr) {
              for (std::size_t cc = 0; cc < pc; ++cc) {
                dp[rr * pc + cc] += g[rr * out_cols + col0 + cc];
              }
            }
            col0 += pc;
          }
        }
        break;
      }
      case Op::Sum: {
        Tensor& da = node(n.parents[0]).adjoint;
        const double gv = g[0];
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += gv;
        break;
      }
      case Op::Mean: {
        Tensor& da = node(n.parents[0]).adjoint;
        const double gv = g[0] / static_cast<double>(da.numel());
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += gv;
        break;
      }
      case Op::Relu: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (a[i] > 0.0) da[i] += g[i];
        }
        break;
      }
      case Op::LeakyRelu: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i] * (a[i] > 0.0 ? 1.0 : n.attr);
        }
        break;
      }
      case Op::Sigmoid: {
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double s = n.value[i];
          da[i] += g[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::Log: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] / a[i];
        break;
      }
      case Op::Exp: {
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n.value[i];
        break;
      }
      case Op::Neg: {
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] -= g[i];
        break;
      }
      case Op::Softmax: {
        Tensor& da = node(n.parents[0]).adjoint;
        const std::size_t cols = n.value.ndim() == 1 ? n.value.numel() : n.value.cols();
        const std::size_t rows = n.value.numel() / cols;
        for (std::size_t rr = 0; rr < rows; ++rr) {
          const double* y = n.value.data() + rr * cols;
          const double* gr = g.data() + rr * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
          for (std::size_t c = 0; c < cols; ++c) da[rr * cols + c] += y[c] * (gr[c] - dot);
        }
        break;
      }
      case Op::Softplus: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * stable_sigmoid(a[i]);
        break;
      }
      case Op::Broadcast: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& da = node(n.parents[0]).adjoint;
        if (a.numel() == 1) {
          double s = 0.0;
          for (std::size_t i = 0; i < g.numel(); ++i) s += g[i];
          da[0] += s;
        } else if (a.ndim() == 2 && a.cols() == 1 && g.ndim() == 2 && g.rows() == a.rows()) {
          for (std::size_t rr = 0; rr < g.rows(); ++rr) {
            double s = 0.0;
            for (std::size_t cc = 0; cc < g.cols(); ++cc) s += g[rr * g.cols() + cc];
            da[rr] += s;
          }
        } else {  // row vector tiled over rows
          const std::size_t k = a.numel();
          const std::size_t rows = g.numel() / k;
          for (std::size_t rr = 0; rr < rows; ++rr) {
            for (std::size_t cc = 0; cc < k; ++cc) da[cc] += g[rr * k + cc];
          }
        }
        break;
      }
      case Op::Reshape: {
        Tensor& da = node(n.parents[0]).adjoint;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        break;
      }
      case Op::Leaf:
        break;
    }
  }
}

const Tensor& Tape::adjoint(int id) const {
  const Node& n = node(id);
  if (n.adjoint.numel() != n.value.numel()) {
    throw NumericError("tape: adjoint requested before backward()");
  }
  return n.adjoint;
}

void Tape::rewind(std::size_t mark) {
  if (mark > nodes_.size()) throw NumericError("tape: rewind past the end");
  nodes_.resize(mark);
}

}  // namespace melon
