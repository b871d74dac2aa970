#pragma once

// Wires agents and latent-space links into fixed collaboration patterns and
// runs the n-round recursive loop. Within a round, agents fire along the
// pattern edges and hand their latent sequences through per-edge transfer
// links; the closing edge feeds the final agent's latents back to the round
// opener of the next round. Only the designated decoder emits text, in the
// final round. A token-mediated baseline shares the topology but replaces
// every hand-off with decoded text that the receiver re-embeds.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "agent.hpp"
#include "link.hpp"
#include "tensor.hpp"

namespace rmas {

enum class Pattern { sequential, mixture, distillation, deliberation, self_loop };

const char* pattern_name(Pattern p);
Pattern pattern_from_name(const std::string& name);

struct AgentSlot {
  AgentParams params;
  std::string role;  // "planner", "critic", ...
  LinkParams inner;  // step link used during latent generation
};

struct EdgeSpec {
  int src = 0;
  int dst = 0;
  bool closing = false;  // delivers into the next round
  LinkParams link;
};

struct SystemSpec {
  Pattern pattern = Pattern::sequential;
  int n = 1;  // recursion rounds
  int m = 4;  // latent budget per agent
  std::vector<AgentSlot> agents;
  std::vector<EdgeSpec> edges;  // within-round edges first, closing edges after
  int decoder = 0;              // index of the text-emitting agent
};

// Shape/topology checks; throws a config error describing every violation.
void validate_system(const SystemSpec& s);

// Token context an agent sees at the start of every round: begin marker, its
// role token, then the question.
std::vector<int> agent_context(const SystemSpec& s, int agent,
                               const std::vector<int>& question);

struct BuildConfig {
  Pattern pattern = Pattern::sequential;
  int n = 2;
  int m = 4;
  int d_h = 32;
  int layers = 1;
  int heads = 2;
  int vocab = 40;
  int max_pos = 192;
  int d_mid = 0;  // 0 -> d_h
  LinkKind inner_kind = LinkKind::inner;
  LinkKind outer_kind = LinkKind::outer;
  int expert_scale = 2;  // width multiplier for the distillation expert
  std::uint64_t seed = 1;
};

// Constructs agents, step links and transfer links for a pattern, with
// canonical role labels and role tokens assigned by agent index.
SystemSpec build_system(const BuildConfig& bc);

// Canonical (name, tensor) enumeration over every parameter in the system,
// used by persistence and the optimizer. Names are stable across runs:
// agent{i}.embed, agent{i}.blk{b}.h{h}.wq, inner{i}.w1, edge{e}.w2, ...
struct NamedParam {
  std::string name;
  Tensor* tensor;
};
std::vector<NamedParam> enumerate_params(SystemSpec& s);
std::vector<NamedParam> enumerate_agent_params(SystemSpec& s);
std::vector<NamedParam> enumerate_inner_params(SystemSpec& s);
std::vector<NamedParam> enumerate_outer_params(SystemSpec& s);

// ---- value-level execution (inference) ----

struct CellTrace {
  int round = 0;  // 1-based
  int agent = 0;
  std::string role;
  int context_len = 0;        // token context length (role marker + question)
  Tensor latents;             // [m+1 x d_h]; empty in text mode
  std::vector<int> decoded;   // non-empty at decode points only
  MacCounters macs;
  double wall_time_s = 0.0;
};

struct RecursionTrace {
  std::vector<CellTrace> cells;  // n * N, round-major
  std::vector<int> answer;
  std::vector<std::uint64_t> edge_fires;  // parallel to SystemSpec::edges
  std::uint64_t emitted_tokens = 0;       // total decoded tokens
  MacCounters totals;
};

struct RunOptions {
  int decode_budget = 8;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  bool fixed_budget = false;  // decode exactly decode_budget tokens, no early stop
  bool timing = false;        // fill wall_time_s (off by default for replayable output)
};

// Latent-mode recursion: transfers are link-mapped latent sequences; only the
// decoder emits tokens, in round n, after producing its own latents.
RecursionTrace run_recursion(const SystemSpec& s, const std::vector<int>& question,
                             const RunOptions& opt);

// Token-mediated baseline over the same topology: every agent decodes up to
// decode_budget tokens each round and downstream agents re-embed that text.
RecursionTrace run_text_baseline(const SystemSpec& s, const std::vector<int>& question,
                                 const RunOptions& opt);

// Evaluates an integer-arithmetic token span (digits, + - *, parentheses).
// `span` excludes the surrounding tool markers. Returns digit tokens (with a
// leading minus token when negative); malformed input yields the in-band
// error token.
std::vector<int> invoke_tool_stub(const std::vector<int>& span);

// Result tokens for the tool span ending at the final token of `emitted`
// (which must be the tool-close token): the span opens at the last tool-open
// token that follows any previous tool-close. No open span, or an empty or
// malformed expression, yields the error token.
std::vector<int> tool_splice_result(const std::vector<int>& emitted);

// Decode loop that evaluates tool-call spans in-band: on a tool-close token
// the bracketed expression's result tokens are spliced into both the output
// and the context, without counting against the emission budget.
std::vector<int> decode_with_tools(AgentStream& stream, std::vector<double> hidden,
                                   const RunOptions& opt);

// ---- graph-level execution (training) ----

struct SystemNodes {
  std::vector<AgentNodes> agents;
  std::vector<LinkNodes> inner;  // per agent
  std::vector<LinkNodes> outer;  // per edge
};

SystemNodes bind_system(Graph& g, const SystemSpec& s, bool outer_trainable,
                        bool inner_trainable, bool agents_trainable = false);

// Full unrolled recursion on the autodiff graph. Latent hand-offs go through
// the bound edge links (or, with text_surrogate, through the source agent's
// vocabulary projection followed by its embedding: a differentiable stand-in
// for decode-then-re-embed). Keeps every per-cell sequence alive so callers
// can extend the decoder sequence for teacher forcing.
struct GraphUnroll {
  std::vector<std::unique_ptr<GraphSeq>> seqs;   // n * N, round-major
  std::vector<std::vector<NodeId>> latents;      // per cell, m+1 hidden nodes
  std::vector<NodeId> transfers;                 // mapped incoming blocks
  std::vector<int> transfer_round;               // 1-based round per transfer
  std::vector<int> transfer_edge;                // edge index per transfer
  int decoder_cell = -1;
};

GraphUnroll unroll_recursion_graph(Graph& g, const SystemSpec& s,
                                   const SystemNodes& nodes,
                                   const std::vector<int>& question,
                                   bool text_surrogate = false);

}  // namespace rmas
