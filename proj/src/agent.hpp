#pragma once

// A tiny decoder-only transformer agent. Pre-norm blocks, per-head projection
// matrices, biasless linears, learned absolute positions, untied embedding
// and output matrices. Two execution paths share the same parameters:
//   - a graph path (training): full recompute over the input sequence, all
//     gradients flow through recorded ops;
//   - a stream path (inference): incremental evaluation with per-block K/V
//     caches and multiply-accumulate counters.

#include <cstdint>
#include <vector>

#include "link.hpp"
#include "tensor.hpp"

namespace rmas {

struct AgentConfig {
  int d_h = 0;
  int layers = 0;
  int heads = 0;
  int vocab = 0;
  int max_pos = 0;
  int role_id = 3;
  int d_ff = 0;  // 0 -> 4 * d_h

  int head_dim() const { return d_h / heads; }
  int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_h; }
  void validate() const;
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // [d_h]
  std::vector<Tensor> wq, wk, wv;                 // per head [d_h, head_dim]
  std::vector<Tensor> wo;                         // per head [head_dim, d_h]
  Tensor wff1;                                    // [d_h, d_ff]
  Tensor wff2;                                    // [d_ff, d_h]
};

struct AgentParams {
  AgentConfig cfg;
  Tensor embed;  // [vocab, d_h]
  Tensor pos;    // [max_pos, d_h]
  std::vector<BlockParams> blocks;
  Tensor final_gain, final_bias;  // [d_h]
  Tensor out_proj;                // [d_h, vocab]
};

// Deterministic init; the embedding table and output projection are rescaled
// to spectral norm <= 2 afterwards.
AgentParams init_agent(const AgentConfig& cfg, std::uint64_t seed);

// Token + positional embedding rows for positions 0..len-1. Rejects tokens
// outside [0, vocab) and sequences longer than max_pos.
Tensor embed_tokens(const AgentParams& p, const std::vector<int>& tokens);

// Positional row for one absolute position.
Tensor pos_row(const AgentParams& p, int position);

// Value-level vocabulary projection of hidden rows: [T x d_h] -> [T x vocab].
Tensor logits(const AgentParams& p, const Tensor& hidden);

// ---- graph path ----

struct AgentNodes {
  struct Block {
    NodeId ln1g, ln1b, ln2g, ln2b, wff1, wff2;
    std::vector<NodeId> wq, wk, wv, wo;
  };
  NodeId embed = -1, pos = -1;
  std::vector<Block> blocks;
  NodeId final_gain = -1, final_bias = -1, out_proj = -1;
};

AgentNodes bind_agent(Graph& g, const AgentParams& p, bool trainable = false);

// Last-layer hidden states for every position of an input row matrix
// [T x d_h] (positional terms must already be included in the rows).
NodeId forward_hidden_graph(Graph& g, const AgentParams& p, const AgentNodes& n,
                            NodeId x);

// Incremental sequence builder over the graph path: pushed rows receive their
// positional embedding here; forward() recomputes the full causal pass.
class GraphSeq {
 public:
  GraphSeq(Graph& g, const AgentParams& p, const AgentNodes& n);

  void push_tokens(const std::vector<int>& tokens);  // frozen rows
  void push_vector(NodeId base_row);                 // differentiable row
  int length() const { return len_; }

  NodeId forward();      // H over all rows, [len x d_h]
  NodeId last_hidden();  // [1 x d_h]

 private:
  Graph& g_;
  const AgentParams& p_;
  const AgentNodes& n_;
  std::vector<NodeId> rows_;
  int len_ = 0;
  NodeId cached_h_ = -1;
  int cached_len_ = -1;
};

// Generates m latent thoughts: the hidden at the end of the current sequence
// plus m more obtained by feeding each hidden through the step link and
// appending the result as the next input row. Returns m+1 hidden nodes.
std::vector<NodeId> generate_latent_graph(Graph& g, GraphSeq& seq,
                                          const LinkParams& inner,
                                          const LinkNodes& inner_nodes, int m);

// ---- stream path ----

struct MacCounters {
  std::uint64_t attention = 0;
  std::uint64_t feedforward = 0;
  std::uint64_t step_link = 0;
  std::uint64_t projection = 0;
  std::uint64_t transfer = 0;
  std::uint64_t projection_calls = 0;
};

class AgentStream {
 public:
  explicit AgentStream(const AgentParams& p, MacCounters* macs = nullptr);

  int length() const { return pos_; }
  const AgentParams& params() const { return p_; }

  // Pushes one input row (positional term added here); returns the
  // last-layer hidden state at that position.
  std::vector<double> push(const std::vector<double>& base);
  std::vector<double> push_token(int token);

  // Vocabulary projection; counted as a projection event.
  std::vector<double> token_logits(const std::vector<double>& hidden);

 private:
  const AgentParams& p_;
  MacCounters* macs_;
  int pos_ = 0;
  // kcache_[block][head] is a flat row-major [t x head_dim] buffer.
  std::vector<std::vector<std::vector<double>>> kcache_, vcache_;
};

// Token choice from one logit row: temperature 0 is argmax with
// smallest-index tie break, otherwise softmax sampling at that temperature,
// consuming one uniform draw.
int pick_token(const std::vector<double>& logits, double temperature, Rng& rng);

// Greedy / sampled continuation from a live stream. `hidden` is the hidden
// state at the stream's current end. Decoding stops at the end token or after
// max_tokens; with fixed_budget it always runs exactly max_tokens steps.
// Temperature 0 is argmax with smallest-index tie break.
std::vector<int> decode_stream(AgentStream& stream, std::vector<double> hidden,
                               int max_tokens, double temperature,
                               std::uint64_t seed, bool fixed_budget = false);

// Stand-alone decode from an embedding-sequence context (rows get positions
// 0..t-1 internally).
std::vector<int> decode_text(const AgentParams& p, const Tensor& context_rows,
                             int max_tokens, double temperature, std::uint64_t seed,
                             MacCounters* macs = nullptr);

}  // namespace rmas
