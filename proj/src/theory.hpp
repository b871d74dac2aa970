#pragma once

// Closed-form cost accounting for the two hand-off modes, and numerical
// verification of the softmax-bottleneck and residual-link gradient bounds:
// the covariance identities of the categorical softmax Jacobian, the
// text-link norm chain, and the spectral health of random step links.

#include <cstdint>
#include <string>
#include <vector>

#include "agent.hpp"
#include "link.hpp"
#include "orchestrator.hpp"

namespace rmas {

enum class CostMode { latent, text };

struct CostModelInput {
  std::uint64_t agents = 1;  // cooperating agents
  std::uint64_t m = 0;       // generated rows per agent per round
  std::uint64_t t = 1;       // context length
  std::uint64_t d_h = 1;     // hidden width
  std::uint64_t vocab = 1;   // vocabulary size
  CostMode mode = CostMode::latent;
  void validate() const;
};

// Per-agent dominant-cost pieces with the big-Theta constants fixed to 1.
// The divergent piece is what separates the modes: re-embedding generated
// rows costs m*d_h^2 in latent space but m*vocab*d_h through the vocabulary.
struct CostTerms {
  std::uint64_t divergent = 0;  // m*d_h^2 (latent) or m*vocab*d_h (text)
  std::uint64_t linear = 0;     // (t+m)*d_h^2
  std::uint64_t quadratic = 0;  // (t+m)^2*d_h
  std::uint64_t total = 0;      // agents * (divergent + linear + quadratic)
};
CostTerms cost_model_terms(const CostModelInput& in);
std::uint64_t cost_model(const CostModelInput& in);

// The divergent term as the instrumented counters measure it, per agent and
// round, with exact constants: 2*m*d_h*d_mid for the step link, m*vocab*d_h
// for per-token vocabulary projections. d_mid is ignored in text mode.
std::uint64_t divergent_macs_per_cell(const CostModelInput& in,
                                      std::uint64_t d_mid);

// Instrumented-run counters collapsed to the cost model's categories. The
// link_or_projection bucket carries the mode's divergent term: step-link
// work for a latent trace, vocabulary projections for a text trace.
struct MacBuckets {
  std::uint64_t attention = 0;
  std::uint64_t feedforward = 0;
  std::uint64_t link_or_projection = 0;
  bool latent_mode = false;
};
MacBuckets measured_macs(const RecursionTrace& trace);

// Shannon entropy in nats of a probability vector (entries >= 0, sum within
// 1e-9 of one); 0*ln(0) counts as 0.
double entropy(const std::vector<double>& p);

// Checks the categorical-covariance facts behind the text-link bound for
// S = diag(p) - p p^T: the trace identity Tr(S) = 1 - |p|^2 (to 1e-12) and
// the chain |S|_2 <= Tr(S) <= entropy(p).
struct CovarianceReport {
  double trace = 0.0;         // Tr(S)
  double trace_gap = 0.0;     // |Tr(S) - (1 - |p|^2)|
  double spectral = 0.0;      // |S|_2
  double entropy_value = 0.0;
  bool ok = false;
};
CovarianceReport verify_covariance_bounds(const std::vector<double>& p);

// Draws a random logit direction and bisects a scale factor so that
// softmax(h W_out) has the requested entropy (within 1e-9 absolute).
// Directions whose entropy cannot reach the target (tied maxima) are
// redrawn from `rng`.
Tensor make_low_entropy_h(const Tensor& out_proj, double target_entropy,
                          Rng& rng);

// Jacobian of the text hand-off out = softmax(h W_out) W_in at a single row
// h, computed by reverse-mode sweeps: J[i][j] = d out_i / d h_j.
Tensor text_jacobian(const Tensor& out_proj, const Tensor& embed,
                     const Tensor& h);

struct JacobianReport {
  std::string mode;            // "text-link" or "recursive-link"
  double entropy = 0.0;        // entropy level this row certifies
  double spectral_norm = 0.0;  // worst observed norm across trials
  double median_norm = 0.0;
  double bound = 0.0;          // |W_in|_2 * |W_out|_2 * entropy
  int trials = 0;
  int d_h = 0;
  double delta = 0.0;
  bool ok = false;  // norm <= bound and the chain inequality, every trial
};

// For each entropy level, manufactures `trials` low-entropy inputs, computes
// the text-link Jacobian, and certifies both the summary bound
// |J|_2 <= |W_in|_2 |W_out|_2 eps and the sample-wise chain
// |J|_2 <= |W_in|_2 |S|_2 |W_out|_2.
std::vector<JacobianReport> verify_text_jacobian(
    const AgentParams& p, int trials, const std::vector<double>& entropy_grid,
    std::uint64_t seed);

// Spectral-norm distribution of step-link Jacobians I + W2 diag(gelu') W1
// over Kaiming-initialized links and standard-normal inputs.
struct LinkNormSummary {
  int d_h = 0;
  int trials = 0;
  double delta = 0.0;
  double min = 0.0;
  double median = 0.0;
  double delta_quantile = 0.0;  // empirical delta-quantile of the norms
  double below_0_1 = 0.0;       // fraction of trials with norm < 0.1
  double below_0_5 = 0.0;
  double below_0_9 = 0.0;
};
LinkNormSummary verify_link_jacobian(int d_h, int trials, double delta,
                                     std::uint64_t seed);

}  // namespace rmas
