#include "link.hpp"

namespace rmas {

const char* link_kind_name(LinkKind k) {
  switch (k) {
    case LinkKind::inner: return "inner";
    case LinkKind::outer: return "outer";
    case LinkKind::variant_1layer: return "1layer";
    case LinkKind::variant_res1layer: return "res1layer";
    case LinkKind::variant_2layer: return "2layer";
  }
  fail(ErrorKind::config, "unknown link kind");
}

LinkKind link_kind_from_name(const std::string& name) {
  if (name == "inner") return LinkKind::inner;
  if (name == "outer") return LinkKind::outer;
  if (name == "1layer") return LinkKind::variant_1layer;
  if (name == "res1layer") return LinkKind::variant_res1layer;
  if (name == "2layer") return LinkKind::variant_2layer;
  fail(ErrorKind::config, "unknown link kind '" + name + "'");
}

namespace {

Tensor kaiming(int rows, int cols, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  double sd = std::sqrt(2.0 / rows);
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

Tensor block_identity(int rows, int cols) {
  Tensor t = Tensor::zeros({rows, cols});
  int d = std::min(rows, cols);
  for (int i = 0; i < d; ++i) t.at(i, i) = 1.0;
  return t;
}

bool uses_residual_identity(const LinkParams& p) {
  // Square residual variants add h directly instead of carrying a W3.
  return (p.kind == LinkKind::inner) ||
         (p.kind == LinkKind::variant_res1layer && !p.has_w3());
}

}  // namespace

LinkParams init_link(LinkKind kind, int d_src, int d_mid, int d_tgt,
                     std::uint64_t seed) {
  require(d_src > 0 && d_tgt > 0, ErrorKind::dimension, "link dims must be positive");
  if (d_mid <= 0) d_mid = d_tgt;
  LinkParams p;
  p.kind = kind;
  p.d_src = d_src;
  p.d_mid = d_mid;
  p.d_tgt = d_tgt;
  Rng rng(seed);
  switch (kind) {
    case LinkKind::inner:
      require(d_src == d_tgt, ErrorKind::dimension,
              "inner link requires d_src == d_tgt");
      p.w1 = kaiming(d_src, d_mid, rng);
      p.w2 = kaiming(d_mid, d_tgt, rng);
      break;
    case LinkKind::outer:
      p.w1 = kaiming(d_src, d_mid, rng);
      p.w2 = kaiming(d_mid, d_tgt, rng);
      p.w3 = block_identity(d_src, d_tgt);
      break;
    case LinkKind::variant_1layer:
      p.w1 = kaiming(d_src, d_tgt, rng);
      break;
    case LinkKind::variant_res1layer:
      p.w1 = kaiming(d_src, d_tgt, rng);
      if (d_src != d_tgt) p.w3 = block_identity(d_src, d_tgt);
      break;
    case LinkKind::variant_2layer:
      p.w1 = kaiming(d_src, d_mid, rng);
      p.w2 = kaiming(d_mid, d_tgt, rng);
      break;
  }
  return p;
}

Tensor apply_link(const LinkParams& p, const Tensor& h) {
  require(h.cols() == p.d_src, ErrorKind::dimension,
          "link input width " + std::to_string(h.cols()) + " != d_src " +
              std::to_string(p.d_src));
  switch (p.kind) {
    case LinkKind::inner:
      return t_add(h, t_matmul(t_gelu(t_matmul(h, p.w1)), p.w2));
    case LinkKind::outer:
      return t_add(t_matmul(h, p.w3), t_matmul(t_gelu(t_matmul(h, p.w1)), p.w2));
    case LinkKind::variant_1layer:
      return t_matmul(h, p.w1);
    case LinkKind::variant_res1layer: {
      Tensor lin = t_matmul(h, p.w1);
      if (p.has_w3()) return t_add(t_matmul(h, p.w3), lin);
      return t_add(h, lin);
    }
    case LinkKind::variant_2layer:
      return t_matmul(t_gelu(t_matmul(h, p.w1)), p.w2);
  }
  fail(ErrorKind::config, "unknown link kind");
}

Tensor apply_inner(const LinkParams& p, const Tensor& h) {
  require(p.kind == LinkKind::inner, ErrorKind::config,
          "apply_inner requires an inner link");
  return apply_link(p, h);
}

Tensor apply_outer(const LinkParams& p, const Tensor& h) {
  require(p.kind == LinkKind::outer, ErrorKind::config,
          "apply_outer requires an outer link");
  return apply_link(p, h);
}

std::uint64_t link_macs(const LinkParams& p) {
  std::uint64_t src = p.d_src, mid = p.d_mid, tgt = p.d_tgt;
  switch (p.kind) {
    case LinkKind::inner:
    case LinkKind::variant_2layer:
      return src * mid + mid * tgt;
    case LinkKind::outer:
      return src * tgt + src * mid + mid * tgt;
    case LinkKind::variant_1layer:
      return src * tgt;
    case LinkKind::variant_res1layer:
      return p.has_w3() ? 2 * src * tgt : src * tgt;
  }
  fail(ErrorKind::config, "unknown link kind");
}

LinkNodes bind_link(Graph& g, const LinkParams& p, bool trainable) {
  LinkNodes n;
  n.w1 = g.leaf(p.w1, trainable);
  if (p.has_w2()) n.w2 = g.leaf(p.w2, trainable);
  if (p.has_w3()) n.w3 = g.leaf(p.w3, trainable);
  return n;
}

NodeId apply_link_graph(Graph& g, const LinkParams& p, const LinkNodes& nodes,
                        NodeId h) {
  require(g.value(h).cols() == p.d_src, ErrorKind::dimension,
          "link input width mismatch in graph apply");
  switch (p.kind) {
    case LinkKind::inner:
      return g.add(h, g.matmul(g.gelu(g.matmul(h, nodes.w1)), nodes.w2));
    case LinkKind::outer:
      return g.add(g.matmul(h, nodes.w3),
                   g.matmul(g.gelu(g.matmul(h, nodes.w1)), nodes.w2));
    case LinkKind::variant_1layer:
      return g.matmul(h, nodes.w1);
    case LinkKind::variant_res1layer: {
      NodeId lin = g.matmul(h, nodes.w1);
      if (nodes.w3 >= 0) return g.add(g.matmul(h, nodes.w3), lin);
      return g.add(h, lin);
    }
    case LinkKind::variant_2layer:
      return g.matmul(g.gelu(g.matmul(h, nodes.w1)), nodes.w2);
  }
  fail(ErrorKind::config, "unknown link kind");
}

Tensor link_jacobian(const LinkParams& p, const Tensor& h) {
  require(h.rows() == 1 && h.cols() == p.d_src, ErrorKind::dimension,
          "link_jacobian expects a single row vector of width d_src");
  Tensor j = Tensor::zeros({p.d_tgt, p.d_src});

  // Residual / base-map part.
  if (uses_residual_identity(p)) {
    for (int i = 0; i < std::min(p.d_tgt, p.d_src); ++i) j.at(i, i) += 1.0;
  } else if (p.has_w3()) {
    for (int i = 0; i < p.d_tgt; ++i)
      for (int jj = 0; jj < p.d_src; ++jj) j.at(i, jj) += p.w3.at(jj, i);
  }

  // Nonlinear part: W2^T diag(gelu'(h W1)) W1^T, or plain W1^T for the
  // single-layer variants.
  if (p.kind == LinkKind::variant_1layer || p.kind == LinkKind::variant_res1layer) {
    for (int i = 0; i < p.d_tgt; ++i)
      for (int jj = 0; jj < p.d_src; ++jj) j.at(i, jj) += p.w1.at(jj, i);
  } else {
    Tensor z = t_matmul(h, p.w1);  // [1, d_mid]
    Tensor scaled = p.w2;          // [d_mid, d_tgt], row k scaled by gelu'(z_k)
    for (int k = 0; k < p.d_mid; ++k) {
      double gp = gelu_prime_scalar(z.at(0, k));
      for (int i = 0; i < p.d_tgt; ++i) scaled.at(k, i) *= gp;
    }
    Tensor nl = t_matmul(t_transpose(scaled), t_transpose(p.w1));
    for (int i = 0; i < p.d_tgt; ++i)
      for (int jj = 0; jj < p.d_src; ++jj) j.at(i, jj) += nl.at(i, jj);
  }
  return j;
}

Tensor apply_text_link(const Tensor& out_proj, const Tensor& embed, const Tensor& h) {
  require(h.cols() == out_proj.rows(), ErrorKind::dimension,
          "text link: hidden width != out_proj rows");
  require(out_proj.cols() == embed.rows(), ErrorKind::dimension,
          "text link: vocab mismatch between out_proj and embed");
  Tensor p = t_softmax_rows(t_matmul(h, out_proj), false);
  return t_matmul(p, embed);
}

NodeId apply_text_link_graph(Graph& g, NodeId out_proj, NodeId embed, NodeId h) {
  NodeId p = g.softmax_rows(g.matmul(h, out_proj), false);
  return g.matmul(p, embed);
}

}  // namespace rmas
