#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace rmas {

namespace {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    require(d >= 0, ErrorKind::dimension, "negative dimension");
    n *= d;
  }
  return n;
}

void check_finite(const Tensor& t, const char* where) {
  for (double v : t.data) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, std::string("non-finite value in ") + where);
  }
}

}  // namespace

Tensor Tensor::zeros(const Shape& s) {
  Tensor t;
  t.shape = s;
  t.data.assign(static_cast<std::size_t>(shape_numel(s)), 0.0);
  return t;
}

Tensor Tensor::filled(const Shape& s, double v) {
  Tensor t = zeros(s);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor Tensor::from(const Shape& s, std::vector<double> values) {
  require(shape_numel(s) == static_cast<std::int64_t>(values.size()), ErrorKind::dimension,
          "value count does not match shape");
  Tensor t;
  t.shape = s;
  t.data = std::move(values);
  return t;
}

Tensor Tensor::row_vector(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return from({1, n}, std::move(values));
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

int Tensor::rows() const {
  if (ndim() == 1) return 1;
  require(ndim() == 2, ErrorKind::dimension, "rows() needs a 1-D or 2-D tensor");
  return shape[0];
}

int Tensor::cols() const {
  if (ndim() == 1) return shape[0];
  require(ndim() == 2, ErrorKind::dimension, "cols() needs a 1-D or 2-D tensor");
  return shape[1];
}

double& Tensor::at(int i, int j) {
  return data[static_cast<std::size_t>(i) * cols() + j];
}

double Tensor::at(int i, int j) const {
  return data[static_cast<std::size_t>(i) * cols() + j];
}

double Tensor::scalar() const {
  require(is_scalar(), ErrorKind::dimension, "scalar() on non-scalar tensor");
  return data[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor t_matmul(const Tensor& a, const Tensor& b) {
  int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  require(k == k2, ErrorKind::dimension,
          "matmul inner dimensions differ: " + a.shape_str() + " x " + b.shape_str());
  Tensor c = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const double* ai = &a.data[static_cast<std::size_t>(i) * k];
    double* ci = &c.data[static_cast<std::size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = &b.data[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

Tensor t_transpose(const Tensor& a) {
  int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor t_add(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::dimension,
          "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::dimension,
          "sub shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor t_mul(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::dimension,
          "mul shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Tensor t_affine(const Tensor& x, double a, double b) {
  Tensor out = x;
  for (double& v : out.data) v = a * v + b;
  return out;
}

double gelu_scalar(double x) {
  // Phi(x) = 0.5 * erfc(-x / sqrt(2)); exact Gaussian CDF, not the tanh fit.
  return x * 0.5 * std::erfc(-x * M_SQRT1_2);
}

double gelu_prime_scalar(double x) {
  double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  double Phi = 0.5 * std::erfc(-x * M_SQRT1_2);
  return Phi + x * phi;
}

Tensor t_gelu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = gelu_scalar(v);
  return out;
}

Tensor t_softmax_rows(const Tensor& x, bool causal) {
  int r = x.rows(), c = x.cols();
  if (causal)
    require(r == c, ErrorKind::dimension, "causal softmax needs a square matrix");
  Tensor out = Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    int usable = causal ? i + 1 : c;
    double mx = x.at(i, 0);
    for (int j = 1; j < usable; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (int j = 0; j < usable; ++j) {
      double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < usable; ++j) out.at(i, j) /= z;
  }
  return out;
}

Tensor t_layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps) {
  int r = x.rows(), c = x.cols();
  require(gain.numel() == c && bias.numel() == c, ErrorKind::dimension,
          "layer_norm gain/bias width mismatch");
  Tensor out = Tensor::zeros(x.shape);
  for (int i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += x.at(i, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j)
      out.at(i, j) = (x.at(i, j) - mu) * inv * gain.data[j] + bias.data[j];
  }
  return out;
}

Tensor t_row_gather(const Tensor& table, const std::vector<int>& idx) {
  int r = table.rows(), c = table.cols();
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < r, ErrorKind::index,
            "row_gather index " + std::to_string(idx[i]) + " out of range [0," +
                std::to_string(r) + ")");
    std::memcpy(&out.data[i * c], &table.data[static_cast<std::size_t>(idx[i]) * c],
                sizeof(double) * c);
  }
  return out;
}

Tensor t_slice_rows(const Tensor& x, int start, int count) {
  int r = x.rows(), c = x.cols();
  require(start >= 0 && count >= 0 && start + count <= r, ErrorKind::index,
          "slice_rows range out of bounds");
  Tensor out = Tensor::zeros({count, c});
  std::memcpy(out.data.data(), &x.data[static_cast<std::size_t>(start) * c],
              sizeof(double) * static_cast<std::size_t>(count) * c);
  return out;
}

Tensor t_concat_rows(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), ErrorKind::dimension, "concat_rows needs at least one part");
  int c = parts[0]->cols();
  int total = 0;
  for (const Tensor* p : parts) {
    require(p->cols() == c, ErrorKind::dimension, "concat_rows width mismatch");
    total += p->rows();
  }
  Tensor out = Tensor::zeros({total, c});
  std::size_t off = 0;
  for (const Tensor* p : parts) {
    std::memcpy(&out.data[off], p->data.data(), sizeof(double) * p->data.size());
    off += p->data.size();
  }
  return out;
}

Tensor t_sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data) s += v;
  return Tensor::from({1}, {s});
}

Tensor t_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  int r = logits.rows(), c = logits.cols();
  require(static_cast<int>(targets.size()) == r, ErrorKind::dimension,
          "cross_entropy target count must equal logit rows");
  double loss = 0.0;
  for (int i = 0; i < r; ++i) {
    int y = targets[i];
    require(y >= 0 && y < c, ErrorKind::index, "cross_entropy target out of range");
    double mx = logits.at(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - mx);
    loss += std::log(z) - (logits.at(i, y) - mx);
  }
  return Tensor::from({1}, {loss / r});
}

Tensor t_cosine(const Tensor& u, const Tensor& v) {
  require(u.numel() == v.numel(), ErrorKind::dimension, "cosine length mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::int64_t i = 0; i < u.numel(); ++i) {
    uu += u.data[i] * u.data[i];
    vv += v.data[i] * v.data[i];
    uv += u.data[i] * v.data[i];
  }
  require(uu > 0.0 && vv > 0.0, ErrorKind::degenerate,
          "cosine similarity undefined for zero-norm input");
  return Tensor::from({1}, {uv / (std::sqrt(uu) * std::sqrt(vv))});
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double spectral_norm(const Tensor& m, double tol, int max_iter) {
  int r = m.rows(), c = m.cols();
  require(r > 0 && c > 0, ErrorKind::dimension, "spectral_norm of empty matrix");
  bool all_zero = true;
  for (double v : m.data) {
    if (v != 0.0) { all_zero = false; break; }
  }
  if (all_zero) return 0.0;

  Rng rng(0xA5A5A5A5ULL);
  std::vector<double> v(c);
  auto reseed = [&] {
    double n = 0.0;
    for (double& x : v) { x = rng.normal(); }
    n = l2_norm(v);
    for (double& x : v) x /= n;
  };
  reseed();

  std::vector<double> mv(r), w(c);
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // mv = M v
    for (int i = 0; i < r; ++i) {
      double s = 0.0;
      for (int j = 0; j < c; ++j) s += m.at(i, j) * v[j];
      mv[i] = s;
    }
    // w = M^T mv
    for (int j = 0; j < c; ++j) w[j] = 0.0;
    for (int i = 0; i < r; ++i) {
      double x = mv[i];
      for (int j = 0; j < c; ++j) w[j] += m.at(i, j) * x;
    }
    double nw = l2_norm(w);
    if (nw == 0.0) {
      // v landed in the null space; restart from a fresh direction.
      reseed();
      continue;
    }
    double next = l2_norm(mv);
    for (int j = 0; j < c; ++j) v[j] = w[j] / nw;
    if (it > 0 && std::abs(next - est) < tol) return next;
    est = next;
  }
  return est;
}

NodeId Graph::push(Node n) {
  check_finite(n.value, "graph node");
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check(NodeId id) const {
  require(id >= 0 && id < static_cast<NodeId>(nodes_.size()), ErrorKind::index,
          "graph node id out of range");
}

const Graph::Node& Graph::node(NodeId id) const {
  check(id);
  return nodes_[id];
}

NodeId Graph::leaf(Tensor value, bool trainable) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.trainable = trainable;
  n.requires_grad = trainable;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::matmul;
  n.inputs = {a, b};
  n.value = t_matmul(node(a).value, node(b).value);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  Node n;
  n.op = Op::transpose;
  n.inputs = {a};
  n.value = t_transpose(node(a).value);
  n.requires_grad = node(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::add;
  n.inputs = {a, b};
  n.value = t_add(node(a).value, node(b).value);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::add_n(const std::vector<NodeId>& xs) {
  require(!xs.empty(), ErrorKind::dimension, "add_n needs at least one input");
  Node n;
  n.op = Op::add_n;
  n.inputs = xs;
  Tensor acc = node(xs[0]).value;
  for (std::size_t i = 1; i < xs.size(); ++i) acc = t_add(acc, node(xs[i]).value);
  n.value = std::move(acc);
  for (NodeId x : xs) n.requires_grad = n.requires_grad || node(x).requires_grad;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::sub;
  n.inputs = {a, b};
  n.value = t_sub(node(a).value, node(b).value);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::mul;
  n.inputs = {a, b};
  n.value = t_mul(node(a).value, node(b).value);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, double a, double b) {
  Node n;
  n.op = Op::affine;
  n.inputs = {x};
  n.a = a;
  n.b = b;
  n.value = t_affine(node(x).value, a, b);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

NodeId Graph::gelu(NodeId x) {
  Node n;
  n.op = Op::gelu;
  n.inputs = {x};
  n.value = t_gelu(node(x).value);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

NodeId Graph::softmax_rows(NodeId x, bool causal) {
  Node n;
  n.op = Op::softmax_rows;
  n.inputs = {x};
  n.causal = causal;
  n.value = t_softmax_rows(node(x).value, causal);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

NodeId Graph::layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps) {
  Node n;
  n.op = Op::layer_norm_rows;
  n.inputs = {x, gain, bias};
  n.eps = eps;
  n.value = t_layer_norm_rows(node(x).value, node(gain).value, node(bias).value, eps);
  n.requires_grad =
      node(x).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
  return push(std::move(n));
}

NodeId Graph::row_gather(NodeId table, std::vector<int> idx) {
  Node n;
  n.op = Op::row_gather;
  n.inputs = {table};
  n.value = t_row_gather(node(table).value, idx);
  n.idx = std::move(idx);
  n.requires_grad = node(table).requires_grad;
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId x, int start, int count) {
  Node n;
  n.op = Op::slice_rows;
  n.inputs = {x};
  n.idx = {start, count};
  n.value = t_slice_rows(node(x).value, start, count);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  Node n;
  n.op = Op::concat_rows;
  n.inputs = parts;
  std::vector<const Tensor*> ps;
  ps.reserve(parts.size());
  for (NodeId p : parts) ps.push_back(&node(p).value);
  n.value = t_concat_rows(ps);
  for (NodeId p : parts) n.requires_grad = n.requires_grad || node(p).requires_grad;
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId x) {
  Node n;
  n.op = Op::sum_all;
  n.inputs = {x};
  n.value = t_sum_all(node(x).value);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId logits, std::vector<int> targets) {
  Node n;
  n.op = Op::cross_entropy;
  n.inputs = {logits};
  n.value = t_cross_entropy(node(logits).value, targets);
  n.idx = std::move(targets);
  n.requires_grad = node(logits).requires_grad;
  return push(std::move(n));
}

NodeId Graph::cosine(NodeId u, NodeId v) {
  Node n;
  n.op = Op::cosine;
  n.inputs = {u, v};
  n.value = t_cosine(node(u).value, node(v).value);
  n.requires_grad = node(u).requires_grad || node(v).requires_grad;
  return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

Tensor Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.has_grad) return n.grad;
  return Tensor::zeros(n.value.shape);
}

bool Graph::has_grad(NodeId id) const { return node(id).has_grad; }

bool Graph::is_trainable_leaf(NodeId id) const {
  const Node& n = node(id);
  return n.op == Op::leaf && n.trainable;
}

void Graph::set_leaf_value(NodeId id, Tensor v) {
  check(id);
  Node& n = nodes_[id];
  require(n.op == Op::leaf, ErrorKind::config, "set_leaf_value on non-leaf node");
  require(n.value.same_shape(v), ErrorKind::dimension, "set_leaf_value shape mismatch");
  n.value = std::move(v);
}

void Graph::compute(Node& n) const {
  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul:
      n.value = t_matmul(node(n.inputs[0]).value, node(n.inputs[1]).value);
      return;
    case Op::transpose:
      n.value = t_transpose(node(n.inputs[0]).value);
      return;
    case Op::add:
      n.value = t_add(node(n.inputs[0]).value, node(n.inputs[1]).value);
      return;
    case Op::add_n: {
      Tensor acc = node(n.inputs[0]).value;
      for (std::size_t i = 1; i < n.inputs.size(); ++i)
        acc = t_add(acc, node(n.inputs[i]).value);
      n.value = std::move(acc);
      return;
    }
    case Op::sub:
      n.value = t_sub(node(n.inputs[0]).value, node(n.inputs[1]).value);
      return;
    case Op::mul:
      n.value = t_mul(node(n.inputs[0]).value, node(n.inputs[1]).value);
      return;
    case Op::affine:
      n.value = t_affine(node(n.inputs[0]).value, n.a, n.b);
      return;
    case Op::gelu:
      n.value = t_gelu(node(n.inputs[0]).value);
      return;
    case Op::softmax_rows:
      n.value = t_softmax_rows(node(n.inputs[0]).value, n.causal);
      return;
    case Op::layer_norm_rows:
      n.value = t_layer_norm_rows(node(n.inputs[0]).value, node(n.inputs[1]).value,
                                  node(n.inputs[2]).value, n.eps);
      return;
    case Op::row_gather:
      n.value = t_row_gather(node(n.inputs[0]).value, n.idx);
      return;
    case Op::slice_rows:
      n.value = t_slice_rows(node(n.inputs[0]).value, n.idx[0], n.idx[1]);
      return;
    case Op::concat_rows: {
      std::vector<const Tensor*> ps;
      ps.reserve(n.inputs.size());
      for (NodeId p : n.inputs) ps.push_back(&node(p).value);
      n.value = t_concat_rows(ps);
      return;
    }
    case Op::sum_all:
      n.value = t_sum_all(node(n.inputs[0]).value);
      return;
    case Op::cross_entropy:
      n.value = t_cross_entropy(node(n.inputs[0]).value, n.idx);
      return;
    case Op::cosine:
      n.value = t_cosine(node(n.inputs[0]).value, node(n.inputs[1]).value);
      return;
  }
  fail(ErrorKind::config, "unknown op in compute");
}

void Graph::replay() {
  for (Node& n : nodes_) {
    compute(n);
    check_finite(n.value, "replayed graph node");
  }
}

Tensor& Graph::grad_buf(NodeId id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape);
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(NodeId loss) {
  check(loss);
  require(nodes_[loss].value.is_scalar(), ErrorKind::dimension,
          "backward requires a scalar loss node");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!nodes_[loss].requires_grad) return;
  grad_buf(loss).data[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad || n.op == Op::leaf) continue;
    backprop(n);
  }
}

void Graph::backprop(Node& n) {
  const Tensor& g = n.grad;
  auto in_val = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  auto wants = [&](int i) { return nodes_[n.inputs[i]].requires_grad; };
  auto buf = [&](int i) -> Tensor& { return grad_buf(n.inputs[i]); };

  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (wants(0)) {
        Tensor da = t_matmul(g, t_transpose(b));
        Tensor& acc = buf(0);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += da.data[i];
      }
      if (wants(1)) {
        Tensor db = t_matmul(t_transpose(a), g);
        Tensor& acc = buf(1);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += db.data[i];
      }
      return;
    }
    case Op::transpose: {
      if (!wants(0)) return;
      Tensor dg = t_transpose(g);
      Tensor& acc = buf(0);
      for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += dg.data[i];
      return;
    }
    case Op::add:
      for (int k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& acc = buf(k);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
      }
      return;
    case Op::add_n:
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (!wants(static_cast<int>(k))) continue;
        Tensor& acc = buf(static_cast<int>(k));
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
      }
      return;
    case Op::sub: {
      if (wants(0)) {
        Tensor& acc = buf(0);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
      }
      if (wants(1)) {
        Tensor& acc = buf(1);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] -= g.data[i];
      }
      return;
    }
    case Op::mul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (wants(0)) {
        Tensor& acc = buf(0);
        for (std::size_t i = 0; i < acc.data.size(); ++i)
          acc.data[i] += g.data[i] * b.data[i];
      }
      if (wants(1)) {
        Tensor& acc = buf(1);
        for (std::size_t i = 0; i < acc.data.size(); ++i)
          acc.data[i] += g.data[i] * a.data[i];
      }
      return;
    }
    case Op::affine: {
      if (!wants(0)) return;
      Tensor& acc = buf(0);
      for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += n.a * g.data[i];
      return;
    }
    case Op::gelu: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& acc = buf(0);
      for (std::size_t i = 0; i < acc.data.size(); ++i)
        acc.data[i] += g.data[i] * gelu_prime_scalar(x.data[i]);
      return;
    }
    case Op::softmax_rows: {
      if (!wants(0)) return;
      const Tensor& p = n.value;
      int r = p.rows(), c = p.cols();
      Tensor& acc = buf(0);
      for (int i = 0; i < r; ++i) {
        int usable = n.causal ? i + 1 : c;
        double dotpg = 0.0;
        for (int j = 0; j < usable; ++j) dotpg += p.at(i, j) * g.at(i, j);
        for (int j = 0; j < usable; ++j)
          acc.at(i, j) += p.at(i, j) * (g.at(i, j) - dotpg);
      }
      return;
    }
    case Op::layer_norm_rows: {
      const Tensor& x = in_val(0);
      const Tensor& gain = in_val(1);
      int r = x.rows(), c = x.cols();
      for (int i = 0; i < r; ++i) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x.at(i, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
          double d = x.at(i, j) - mu;
          var += d * d;
        }
        var /= c;
        double inv = 1.0 / std::sqrt(var + n.eps);
        // y = normalized row; dy = upstream grad scaled by gain.
        double mean_dy = 0.0, mean_dyy = 0.0;
        std::vector<double> y(c), dy(c);
        for (int j = 0; j < c; ++j) {
          y[j] = (x.at(i, j) - mu) * inv;
          dy[j] = g.at(i, j) * gain.data[j];
          mean_dy += dy[j];
          mean_dyy += dy[j] * y[j];
        }
        mean_dy /= c;
        mean_dyy /= c;
        if (wants(0)) {
          Tensor& acc = buf(0);
          for (int j = 0; j < c; ++j)
            acc.at(i, j) += (dy[j] - mean_dy - y[j] * mean_dyy) * inv;
        }
        if (wants(1)) {
          Tensor& acc = buf(1);
          for (int j = 0; j < c; ++j) acc.data[j] += g.at(i, j) * y[j];
        }
        if (wants(2)) {
          Tensor& acc = buf(2);
          for (int j = 0; j < c; ++j) acc.data[j] += g.at(i, j);
        }
      }
      return;
    }
    case Op::row_gather: {
      if (!wants(0)) return;
      Tensor& acc = buf(0);
      int c = acc.cols();
      for (std::size_t i = 0; i < n.idx.size(); ++i)
        for (int j = 0; j < c; ++j) acc.at(n.idx[i], j) += g.at(static_cast<int>(i), j);
      return;
    }
    case Op::slice_rows: {
      if (!wants(0)) return;
      Tensor& acc = buf(0);
      int c = acc.cols();
      for (int i = 0; i < n.idx[1]; ++i)
        for (int j = 0; j < c; ++j) acc.at(n.idx[0] + i, j) += g.at(i, j);
      return;
    }
    case Op::concat_rows: {
      int off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& part = in_val(static_cast<int>(k));
        int pr = part.rows(), c = part.cols();
        if (wants(static_cast<int>(k))) {
          Tensor& acc = buf(static_cast<int>(k));
          for (int i = 0; i < pr; ++i)
            for (int j = 0; j < c; ++j) acc.at(i, j) += g.at(off + i, j);
        }
        off += pr;
      }
      return;
    }
    case Op::sum_all: {
      if (!wants(0)) return;
      Tensor& acc = buf(0);
      for (double& v : acc.data) v += g.data[0];
      return;
    }
    case Op::cross_entropy: {
      if (!wants(0)) return;
      const Tensor& logits = in_val(0);
      Tensor p = t_softmax_rows(logits, false);
      int r = p.rows(), c = p.cols();
      Tensor& acc = buf(0);
      double scale = g.data[0] / r;
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) acc.at(i, j) += scale * p.at(i, j);
        acc.at(i, n.idx[i]) -= scale;
      }
      return;
    }
    case Op::cosine: {
      const Tensor& u = in_val(0);
      const Tensor& v = in_val(1);
      double uu = 0.0, vv = 0.0, uv = 0.0;
      for (std::int64_t i = 0; i < u.numel(); ++i) {
        uu += u.data[i] * u.data[i];
        vv += v.data[i] * v.data[i];
        uv += u.data[i] * v.data[i];
      }
      double nu = std::sqrt(uu), nv = std::sqrt(vv);
      double c = uv / (nu * nv);
      double gs = g.data[0];
      if (wants(0)) {
        Tensor& acc = buf(0);
        for (std::int64_t i = 0; i < u.numel(); ++i)
          acc.data[i] += gs * (v.data[i] / (nu * nv) - c * u.data[i] / uu);
      }
      if (wants(1)) {
        Tensor& acc = buf(1);
        for (std::int64_t i = 0; i < v.numel(); ++i)
          acc.data[i] += gs * (u.data[i] / (nu * nv) - c * v.data[i] / vv);
      }
      return;
    }
  }
  fail(ErrorKind::config, "unknown op in backprop");
}

}  // namespace rmas
