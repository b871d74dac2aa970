#pragma once

// Two-stage optimization of the link modules. Stage one warm-starts each
// agent's step link by aligning link-mapped latent thoughts with the
// embedding rows of a role-specific target (cosine objective). Stage two
// trains the transfer links end to end with teacher-forced cross-entropy
// through the fully unrolled recursion. Agent weights stay frozen: gradients
// flow through them, updates never touch them.

#include <cstdint>
#include <string>
#include <vector>

#include "orchestrator.hpp"
#include "tasks.hpp"

namespace rmas {

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 4;
  int steps = 200;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;  // 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool tune_inner_in_outer = false;  // stage two also updates step links
  void validate() const;
};

// Cosine decay from lr0 at step 0 to 0 at step == total.
double cosine_lr(double lr0, int step, int total);

// Decoupled-weight-decay adaptive optimizer over named parameters.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, const TrainConfig& cfg);

  // One update; `grads` aligns with the construction-order parameters (an
  // empty tensor is a zero gradient). Returns the pre-clip global norm.
  double step(const std::vector<Tensor>& grads, double lr);
  const std::vector<NamedParam>& params() const { return params_; }

 private:
  std::vector<NamedParam> params_;
  TrainConfig cfg_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Embedding-table rows of y (no positional terms; the alignment target lives
// in token-embedding space).
Tensor target_embed_rows(const AgentParams& p, const std::vector<int>& y);

// Mean over aligned positions of (1 - cosine) between linked latent rows and
// target rows, truncated to the shorter sequence.
double inner_loss_value(const Tensor& linked, const Tensor& targets);
NodeId inner_loss_graph(Graph& g, const std::vector<NodeId>& linked_rows,
                        const Tensor& targets);

// Per-role supervision derived from a task example's derivation: the round
// opener learns the step list, verifying roles append a check mark and the
// answer, terminal roles learn the answer, off-domain specialists learn to
// stop immediately.
TrainExample build_role_targets(const TaskExample& ex, Pattern pattern,
                                TaskKind kind);

// Teacher-forced cross-entropy over answer + end token at the decoder cell
// of an unrolled recursion.
NodeId outer_loss_graph(Graph& g, const SystemSpec& s, const SystemNodes& nodes,
                        GraphUnroll& u, const std::vector<int>& answer);

// Forward-only teacher-forced loss of the current system on one example.
double outer_loss_example(const SystemSpec& s, const TrainExample& ex);

struct LossPoint {
  int step = 0;
  std::string stage;  // "inner:<role>" or "outer"
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

// Stage one for one agent; updates only that agent's step link.
std::vector<LossPoint> train_inner(SystemSpec& s, int agent,
                                   const std::vector<TrainExample>& data,
                                   const TrainConfig& cfg);

// Stage two; updates transfer links (and step links when tune_inner_in_outer).
std::vector<LossPoint> train_outer(SystemSpec& s,
                                   const std::vector<TrainExample>& data,
                                   const TrainConfig& cfg);

}  // namespace rmas
