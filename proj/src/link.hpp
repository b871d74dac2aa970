#pragma once

// Trainable link modules that carry hidden vectors between reasoning steps
// and between agents. The standard step link is a gated residual block
//   R_in(h)  = h + gelu(h W1) W2              (square)
// and the standard transfer link adds a learned base map
//   R_out(h) = h W3 + gelu(h W1) W2           (any dims)
// All linear maps are biasless. Vectors are rows; every apply_* accepts a
// [T x d_src] matrix and maps each row independently.

#include <cstdint>

#include "tensor.hpp"

namespace rmas {

enum class LinkKind {
  inner,             // h + gelu(h W1) W2, requires d_src == d_tgt
  outer,             // h W3 + gelu(h W1) W2
  variant_1layer,    // h W1, W1: [d_src x d_tgt]
  variant_res1layer, // h + h W1 (square) or h W3 + h W1
  variant_2layer,    // gelu(h W1) W2, no residual
};

const char* link_kind_name(LinkKind k);
LinkKind link_kind_from_name(const std::string& name);

struct LinkParams {
  LinkKind kind = LinkKind::inner;
  int d_src = 0, d_mid = 0, d_tgt = 0;
  Tensor w1;  // [d_src, d_mid], or [d_src, d_tgt] for 1layer/res1layer
  Tensor w2;  // [d_mid, d_tgt]; unused for 1layer/res1layer
  Tensor w3;  // [d_src, d_tgt]; outer and rectangular res1layer only

  bool has_w2() const { return !w2.data.empty(); }
  bool has_w3() const { return !w3.data.empty(); }
};

// W1/W2 are Kaiming-normal (sd = sqrt(2 / fan_in)); W3 starts as identity
// (block identity when rectangular). d_mid <= 0 defaults to d_tgt.
LinkParams init_link(LinkKind kind, int d_src, int d_mid, int d_tgt,
                     std::uint64_t seed);

// Value-level application, one or more row vectors.
Tensor apply_link(const LinkParams& p, const Tensor& h);
Tensor apply_inner(const LinkParams& p, const Tensor& h);  // requires kind inner
Tensor apply_outer(const LinkParams& p, const Tensor& h);  // requires kind outer

// Multiply-accumulate count for applying the link to a single vector.
std::uint64_t link_macs(const LinkParams& p);

// Graph-level application. `nodes` holds the leaf ids for this link's
// weights; unused slots stay -1.
struct LinkNodes {
  NodeId w1 = -1, w2 = -1, w3 = -1;
};
LinkNodes bind_link(Graph& g, const LinkParams& p, bool trainable);
NodeId apply_link_graph(Graph& g, const LinkParams& p, const LinkNodes& nodes,
                        NodeId h);

// Analytic Jacobian of apply_link at h (single row vector), in row
// convention: J[i][j] = d out_i / d h_j, shape [d_tgt x d_src].
Tensor link_jacobian(const LinkParams& p, const Tensor& h);

// Differentiable text bottleneck: out = softmax(h W_out) W_in, where W_out is
// an agent's output projection [d_h x V] and W_in its embedding table
// [V x d_h]. The hard (argmax) variant of this map is what the text baseline
// performs between steps.
Tensor apply_text_link(const Tensor& out_proj, const Tensor& embed, const Tensor& h);
NodeId apply_text_link_graph(Graph& g, NodeId out_proj, NodeId embed, NodeId h);

}  // namespace rmas
