#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "melon/tensor.hpp"

namespace melon {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,        // elementwise, same shape
  MatMul,     // 2-D x 2-D
  Concat,     // axis in attr
  Sum,        // full reduction to a single element
  Mean,
  Relu,
  LeakyRelu,  // slope in attr
  Sigmoid,
  Log,
  Exp,
  Neg,
  Softmax,    // along the last axis
  Softplus,   // log(1 + e^x), evaluated overflow-safe
  Broadcast,  // scalar/row-vector -> matrix
  Reshape,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  double attr = 0.0;  // LeakyRelu slope, Concat axis
  std::vector<std::int32_t> parents;
  Tensor value;
  Tensor adjoint;  // materialized by backward()
};

// Append-only reverse-mode tape. Parents always precede their node, so the
// backward pass is a single strictly-decreasing sweep over ids.
class Tape {
 public:
  int leaf(Tensor v);
  int constant(double v) { return leaf(Tensor::scalar(v)); }

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int matmul(int a, int b);
  int concat(std::span<const int> parts, int axis);
  int sum(int a);
  int mean(int a);
  int relu(int a);
  int leaky_relu(int a, double slope);
  int sigmoid(int a);
  int log_op(int a);
  int exp_op(int a);
  int neg(int a);
  int softmax(int a);
  int softplus(int a);
  int broadcast(int a, Shape to);
  int reshape(int a, Shape to);

  // New leaf carrying the same value; gradients do not flow through it.
  int detach(int a);

  // Seeds the root with ones (root must be single-element) or with `seed`
  // (same shape as root), then accumulates adjoints into every ancestor.
  // Non-ancestors get zero adjoints.
  void backward(int root);
  void backward(int root, const Tensor& seed);

  const Tensor& value(int id) const { return node(id).value; }
  double value_scalar(int id) const { return node(id).value.scalar_value(); }
  const Tensor& adjoint(int id) const;

  std::size_t checkpoint() const { return nodes_.size(); }
  // Drops exactly the nodes appended after the checkpoint.
  void rewind(std::size_t mark);

  std::size_t size() const { return nodes_.size(); }

 private:
  int push(Node n);
  const Node& node(int id) const;
  Node& node(int id);
  [[noreturn]] void bad_shapes(Op op, int a, int b) const;

  std::vector<Node> nodes_;
};

}  // namespace melon
