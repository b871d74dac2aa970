#include "training.hpp"

#include <algorithm>
#include <cmath>

#include "vocab.hpp"

namespace rmas {

void TrainConfig::validate() const {
  require(learning_rate > 0.0, ErrorKind::config, "learning_rate must be > 0");
  require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
  require(steps >= 1, ErrorKind::config, "steps must be >= 1");
  require(weight_decay >= 0.0, ErrorKind::config, "weight_decay must be >= 0");
  require(grad_clip_norm >= 0.0, ErrorKind::config, "grad_clip_norm must be >= 0");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0,
          ErrorKind::config, "betas must lie in (0, 1)");
  require(eps > 0.0, ErrorKind::config, "eps must be > 0");
}

double cosine_lr(double lr0, int step, int total) {
  require(total >= 1, ErrorKind::config, "schedule length must be >= 1");
  double s = std::clamp(static_cast<double>(step), 0.0, static_cast<double>(total));
  const double pi = 3.14159265358979323846;
  return lr0 * 0.5 * (1.0 + std::cos(pi * s / total));
}

AdamW::AdamW(std::vector<NamedParam> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require(params_[i].tensor != nullptr, ErrorKind::config,
            "optimizer parameter '" + params_[i].name + "' is null");
    m_[i] = Tensor::zeros(params_[i].tensor->shape);
    v_[i] = Tensor::zeros(params_[i].tensor->shape);
  }
}

double AdamW::step(const std::vector<Tensor>& grads, double lr) {
  require(grads.size() == params_.size(), ErrorKind::dimension,
          "gradient list does not align with the parameter list");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].data.empty()) continue;
    require(grads[i].shape == params_[i].tensor->shape, ErrorKind::dimension,
            "gradient shape mismatch for '" + params_[i].name + "'");
    for (double gv : grads[i].data) sq += gv * gv;
  }
  double norm = std::sqrt(sq);
  require(std::isfinite(norm), ErrorKind::numeric, "non-finite gradient norm");
  double scale = 1.0;
  if (cfg_.grad_clip_norm > 0.0 && norm > cfg_.grad_clip_norm)
    scale = cfg_.grad_clip_norm / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& theta = *params_[i].tensor;
    const bool zero_grad = grads[i].data.empty();
    for (std::size_t j = 0; j < theta.data.size(); ++j) {
      double gv = zero_grad ? 0.0 : grads[i].data[j] * scale;
      double& m = m_[i].data[j];
      double& v = v_[i].data[j];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gv;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gv * gv;
      double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      theta.data[j] -= lr * (update + cfg_.weight_decay * theta.data[j]);
    }
  }
  return norm;
}

Tensor target_embed_rows(const AgentParams& p, const std::vector<int>& y) {
  require(!y.empty(), ErrorKind::dimension, "target sequence is empty");
  Tensor out = Tensor::zeros({static_cast<int>(y.size()), p.cfg.d_h});
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(y[i] >= 0 && y[i] < p.cfg.vocab, ErrorKind::index,
            "target token " + std::to_string(y[i]) + " outside the vocabulary");
    for (int j = 0; j < p.cfg.d_h; ++j)
      out.at(static_cast<int>(i), j) = p.embed.at(y[i], j);
  }
  return out;
}

namespace {

double row_cosine(const Tensor& a, int ai, const Tensor& b, int bi) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int j = 0; j < a.cols(); ++j) {
    dot += a.at(ai, j) * b.at(bi, j);
    na += a.at(ai, j) * a.at(ai, j);
    nb += b.at(bi, j) * b.at(bi, j);
  }
  require(na > 0.0 && nb > 0.0, ErrorKind::degenerate,
          "zero-norm vector in cosine alignment");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double inner_loss_value(const Tensor& linked, const Tensor& targets) {
  require(linked.rows() >= 1 && targets.rows() >= 1, ErrorKind::dimension,
          "alignment needs non-empty sequences");
  require(linked.cols() == targets.cols(), ErrorKind::dimension,
          "alignment width mismatch");
  int k = std::min(linked.rows(), targets.rows());
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += 1.0 - row_cosine(linked, i, targets, i);
  return acc / k;
}

NodeId inner_loss_graph(Graph& g, const std::vector<NodeId>& linked_rows,
                        const Tensor& targets) {
  require(!linked_rows.empty() && targets.rows() >= 1, ErrorKind::dimension,
          "alignment needs non-empty sequences");
  int k = std::min(static_cast<int>(linked_rows.size()), targets.rows());
  std::vector<NodeId> cosines;
  for (int i = 0; i < k; ++i) {
    NodeId target_row = g.leaf(t_slice_rows(targets, i, 1));
    cosines.push_back(g.cosine(linked_rows[i], target_row));
  }
  // mean(1 - cos) = 1 - mean(cos)
  return g.affine(g.add_n(cosines), -1.0 / k, 1.0);
}

TrainExample build_role_targets(const TaskExample& ex, Pattern pattern,
                                TaskKind kind) {
  require(!ex.answer.empty(), ErrorKind::dimension, "example has no answer");
  TrainExample out;
  out.question = ex.question;
  out.answer = ex.answer;

  std::vector<int> steps_flat;
  for (const std::vector<int>& st : ex.steps)
    steps_flat.insert(steps_flat.end(), st.begin(), st.end());
  if (steps_flat.empty()) steps_flat = ex.answer;

  auto& rt = out.role_targets;
  switch (pattern) {
    case Pattern::sequential: {
      rt["planner"] = steps_flat;
      std::vector<int> critic = steps_flat;
      critic.push_back(vocab::VERIFY);
      critic.insert(critic.end(), ex.answer.begin(), ex.answer.end());
      rt["critic"] = std::move(critic);
      rt["solver"] = ex.answer;
      break;
    }
    case Pattern::mixture: {
      const char* match = kind == TaskKind::arith_chain ? "specialist_arith"
                          : kind == TaskKind::seq_transform ? "specialist_seq"
                                                            : "specialist_lookup";
      for (const char* role :
           {"specialist_arith", "specialist_seq", "specialist_lookup"})
        rt[role] = role == std::string(match) ? ex.answer
                                              : std::vector<int>{vocab::EOS};
      rt["summarizer"] = ex.answer;
      break;
    }
    case Pattern::distillation: {
      std::vector<int> expert = steps_flat;
      expert.insert(expert.end(), ex.answer.begin(), ex.answer.end());
      rt["expert"] = std::move(expert);
      rt["learner"] = ex.answer;
      break;
    }
    case Pattern::deliberation:
      rt["reflector"] = steps_flat;
      rt["tool_caller"] = ex.answer;
      break;
    case Pattern::self_loop:
      rt["solo"] = ex.answer;
      break;
  }
  return out;
}

NodeId outer_loss_graph(Graph& g, const SystemSpec& s, const SystemNodes& nodes,
                        GraphUnroll& u, const std::vector<int>& answer) {
  require(!answer.empty(), ErrorKind::dimension, "answer is empty");
  require(u.decoder_cell >= 0, ErrorKind::config, "unroll has no decoder cell");
  GraphSeq& seq = *u.seqs[u.decoder_cell];
  const int latent_end = seq.length();  // position after the last latent
  seq.push_tokens(answer);
  NodeId h = seq.forward();
  const int k = static_cast<int>(answer.size());
  NodeId rows = g.slice_rows(h, latent_end - 1, k + 1);
  NodeId logits = g.matmul(rows, nodes.agents[s.decoder].out_proj);
  std::vector<int> targets = answer;
  targets.push_back(vocab::EOS);
  return g.cross_entropy(logits, targets);
}

double outer_loss_example(const SystemSpec& s, const TrainExample& ex) {
  Graph g;
  SystemNodes nodes = bind_system(g, s, false, false);
  GraphUnroll u = unroll_recursion_graph(g, s, nodes, ex.question);
  NodeId loss = outer_loss_graph(g, s, nodes, u, ex.answer);
  return g.value(loss).at(0, 0);
}

namespace {

// Trainable-leaf node list aligned with the NamedParam enumeration order so
// optimizer state and gradients stay in lockstep.
void push_link_nodes(std::vector<NodeId>& out, const LinkNodes& ln,
                     const LinkParams& link) {
  if (!link.w1.data.empty()) out.push_back(ln.w1);
  if (link.has_w2()) out.push_back(ln.w2);
  if (link.has_w3()) out.push_back(ln.w3);
}

std::vector<NamedParam> named_link_params(const std::string& prefix,
                                          LinkParams& link) {
  std::vector<NamedParam> out;
  if (!link.w1.data.empty()) out.push_back({prefix + ".w1", &link.w1});
  if (link.has_w2()) out.push_back({prefix + ".w2", &link.w2});
  if (link.has_w3()) out.push_back({prefix + ".w3", &link.w3});
  return out;
}

std::vector<Tensor> collect_grads(const Graph& g, const std::vector<NodeId>& nodes) {
  std::vector<Tensor> grads;
  grads.reserve(nodes.size());
  for (NodeId n : nodes) grads.push_back(g.grad(n));
  return grads;
}

[[noreturn]] void abort_non_finite(const std::string& stage, int step,
                                   int example_id) {
  fail(ErrorKind::numeric, "non-finite loss in stage " + stage + " at step " +
                               std::to_string(step) + ", example " +
                               std::to_string(example_id));
}

}  // namespace

std::vector<LossPoint> train_inner(SystemSpec& s, int agent,
                                   const std::vector<TrainExample>& data,
                                   const TrainConfig& cfg) {
  cfg.validate();
  validate_system(s);
  require(agent >= 0 && agent < static_cast<int>(s.agents.size()),
          ErrorKind::index, "agent index out of range");
  require(!data.empty(), ErrorKind::config, "training set is empty");
  AgentSlot& slot = s.agents[agent];
  const std::string stage = "inner:" + slot.role;
  for (const TrainExample& ex : data)
    require(ex.role_targets.count(slot.role) == 1, ErrorKind::config,
            "example lacks a target for role '" + slot.role + "'");

  AdamW opt(named_link_params("inner" + std::to_string(agent), slot.inner), cfg);

  std::vector<LossPoint> curve;
  for (int step = 0; step < cfg.steps; ++step) {
    Graph g;
    AgentNodes an = bind_agent(g, slot.params, false);
    LinkNodes ln = bind_link(g, slot.inner, true);
    std::vector<NodeId> leaf_nodes;
    push_link_nodes(leaf_nodes, ln, slot.inner);

    std::vector<NodeId> example_losses;
    int first_example = -1;
    for (int b = 0; b < cfg.batch_size; ++b) {
      int idx = static_cast<int>(
          (static_cast<long long>(step) * cfg.batch_size + b) % data.size());
      if (first_example < 0) first_example = idx;
      const TrainExample& ex = data[idx];
      GraphSeq seq(g, slot.params, an);
      seq.push_tokens(agent_context(s, agent, ex.question));
      std::vector<NodeId> latents =
          generate_latent_graph(g, seq, slot.inner, ln, s.m);
      std::vector<NodeId> linked;
      for (NodeId lat : latents)
        linked.push_back(apply_link_graph(g, slot.inner, ln, lat));
      Tensor targets =
          target_embed_rows(slot.params, ex.role_targets.at(slot.role));
      example_losses.push_back(inner_loss_graph(g, linked, targets));
    }
    NodeId loss = g.affine(g.add_n(example_losses), 1.0 / cfg.batch_size, 0.0);
    double loss_v = g.value(loss).at(0, 0);
    if (!std::isfinite(loss_v)) abort_non_finite(stage, step, first_example);
    g.backward(loss);

    double lr = cosine_lr(cfg.learning_rate, step, cfg.steps);
    double gnorm = opt.step(collect_grads(g, leaf_nodes), lr);
    curve.push_back({step, stage, loss_v, lr, gnorm});
  }
  return curve;
}

std::vector<LossPoint> train_outer(SystemSpec& s,
                                   const std::vector<TrainExample>& data,
                                   const TrainConfig& cfg) {
  cfg.validate();
  validate_system(s);
  require(!data.empty(), ErrorKind::config, "training set is empty");

  AdamW opt(
      [&] {
        std::vector<NamedParam> named = enumerate_outer_params(s);
        if (cfg.tune_inner_in_outer)
          for (NamedParam& p : enumerate_inner_params(s)) named.push_back(p);
        return named;
      }(),
      cfg);

  std::vector<LossPoint> curve;
  for (int step = 0; step < cfg.steps; ++step) {
    Graph g;
    SystemNodes nodes = bind_system(g, s, true, cfg.tune_inner_in_outer);
    std::vector<NodeId> leaf_nodes;
    for (std::size_t e = 0; e < s.edges.size(); ++e)
      push_link_nodes(leaf_nodes, nodes.outer[e], s.edges[e].link);
    if (cfg.tune_inner_in_outer)
      for (std::size_t i = 0; i < s.agents.size(); ++i)
        push_link_nodes(leaf_nodes, nodes.inner[i], s.agents[i].inner);

    std::vector<NodeId> example_losses;
    int first_example = -1;
    for (int b = 0; b < cfg.batch_size; ++b) {
      int idx = static_cast<int>(
          (static_cast<long long>(step) * cfg.batch_size + b) % data.size());
      if (first_example < 0) first_example = idx;
      const TrainExample& ex = data[idx];
      GraphUnroll u = unroll_recursion_graph(g, s, nodes, ex.question);
      example_losses.push_back(outer_loss_graph(g, s, nodes, u, ex.answer));
    }
    NodeId loss = g.affine(g.add_n(example_losses), 1.0 / cfg.batch_size, 0.0);
    double loss_v = g.value(loss).at(0, 0);
    if (!std::isfinite(loss_v)) abort_non_finite("outer", step, first_example);
    g.backward(loss);

    double lr = cosine_lr(cfg.learning_rate, step, cfg.steps);
    double gnorm = opt.step(collect_grads(g, leaf_nodes), lr);
    curve.push_back({step, "outer", loss_v, lr, gnorm});
  }
  return curve;
}

}  // namespace rmas
