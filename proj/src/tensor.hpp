#pragma once

// Dense row-major tensors plus a reverse-mode autodiff graph. The graph is an
// append-only tape: building an op computes its value immediately, backward()
// walks the tape in reverse and accumulates gradients additively on fan-out.
// All graph arithmetic is 64-bit.

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace rmas {

using Shape = std::vector<int>;

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(const Shape& s);
  static Tensor filled(const Shape& s, double v);
  static Tensor from(const Shape& s, std::vector<double> values);
  static Tensor row_vector(std::vector<double> values);  // shape [1, n]

  int ndim() const { return static_cast<int>(shape.size()); }
  std::int64_t numel() const;
  bool is_scalar() const { return numel() == 1; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 2-D accessors; a 1-D tensor of length n acts as a single row [1, n].
  int rows() const;
  int cols() const;
  double& at(int i, int j);
  double at(int i, int j) const;

  double scalar() const;
  std::string shape_str() const;
};

// Value-level kernels. The graph ops call these for both initial computation
// and deterministic replay.
Tensor t_matmul(const Tensor& a, const Tensor& b);
Tensor t_transpose(const Tensor& a);
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_affine(const Tensor& x, double a, double b);  // a*x + b elementwise
Tensor t_gelu(const Tensor& x);
Tensor t_softmax_rows(const Tensor& x, bool causal);
Tensor t_layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps);
Tensor t_row_gather(const Tensor& table, const std::vector<int>& idx);
Tensor t_slice_rows(const Tensor& x, int start, int count);
Tensor t_concat_rows(const std::vector<const Tensor*>& parts);
Tensor t_sum_all(const Tensor& x);
Tensor t_cross_entropy(const Tensor& logits, const std::vector<int>& targets);
Tensor t_cosine(const Tensor& u, const Tensor& v);

// Exact GELU x * Phi(x) with the Gaussian CDF, and its derivative.
double gelu_scalar(double x);
double gelu_prime_scalar(double x);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double l2_norm(const std::vector<double>& a);

// Largest singular value by power iteration on M^T M. Deterministic start
// vector; stops when successive estimates differ by < tol or after max_iter
// iterations. An all-zero matrix yields 0.
double spectral_norm(const Tensor& m, double tol = 1e-9, int max_iter = 10000);

enum class Op {
  leaf,
  matmul,
  transpose,
  add,
  add_n,
  sub,
  mul,
  affine,
  gelu,
  softmax_rows,
  layer_norm_rows,
  row_gather,
  slice_rows,
  concat_rows,
  sum_all,
  cross_entropy,
  cosine,
};

using NodeId = int;

class Graph {
 public:
  NodeId leaf(Tensor value, bool trainable = false);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId add_n(const std::vector<NodeId>& xs);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId affine(NodeId x, double a, double b);
  NodeId gelu(NodeId x);
  NodeId softmax_rows(NodeId x, bool causal = false);
  NodeId layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId row_gather(NodeId table, std::vector<int> idx);
  NodeId slice_rows(NodeId x, int start, int count);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId sum_all(NodeId x);
  NodeId cross_entropy(NodeId logits, std::vector<int> targets);
  NodeId cosine(NodeId u, NodeId v);

  const Tensor& value(NodeId id) const;
  double scalar(NodeId id) const { return value(id).scalar(); }

  // Gradient of the last backward() target w.r.t. this node; zeros if the
  // node did not participate.
  Tensor grad(NodeId id) const;
  bool has_grad(NodeId id) const;

  bool is_trainable_leaf(NodeId id) const;

  // Replaces a leaf's value (shape must match). Used by finite-difference
  // probes together with replay().
  void set_leaf_value(NodeId id, Tensor v);

  // Recomputes every non-leaf value in tape order. Deterministic: identical
  // leaves reproduce identical activations bit-for-bit.
  void replay();

  // Reverse pass from a scalar node. Clears previous gradients.
  void backward(NodeId loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool trainable = false;
    double a = 1.0, b = 0.0;  // affine coefficients
    bool causal = false;      // softmax_rows mask
    double eps = 0.0;         // layer_norm epsilon
    std::vector<int> idx;     // gather rows / CE targets / slice {start,count}
  };

  std::vector<Node> nodes_;

  NodeId push(Node n);
  void compute(Node& n) const;
  void backprop(Node& n);
  Tensor& grad_buf(NodeId id);
  void check(NodeId id) const;
  const Node& node(NodeId id) const;
};

}  // namespace rmas
