#pragma once

// Experiment drivers over the synthetic tasks: exact-match evaluation with
// token and MAC counters, the train-vs-infer recursion grid, the latent
// budget sweep, the link-design ablation, and answer-embedding drift export
// through a two-component principal projection.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "orchestrator.hpp"
#include "tasks.hpp"
#include "training.hpp"

namespace rmas {

struct MetricsRow {
  std::string task;
  std::string pattern;
  int train_rounds = 0;
  int infer_rounds = 0;
  int m = 0;
  double accuracy = 0.0;
  std::uint64_t tokens_emitted = 0;
  std::uint64_t macs = 0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
};

// Deterministic decimal formatting shared by every CSV writer.
std::string fmt_double(double v);

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

// Canonical answer form for exact matching: tool spans removed, output cut
// at the first end-of-sequence token.
std::vector<int> canonical_answer(const std::vector<int>& decoded);

// Every counter an agent or link increments, collapsed to one figure.
inline std::uint64_t macs_total(const MacCounters& c) {
  return c.attention + c.feedforward + c.step_link + c.projection + c.transfer;
}

struct EvalOptions {
  int decode_budget = 8;
  std::uint64_t seed = 0;
  int workers = 1;       // parallel over examples; aggregation stays ordered
  bool text_mode = false;  // run the token-mediated baseline instead
  bool timing = false;     // fill wall_time_s; zero keeps the CSV byte-stable
  int train_rounds = 0;    // label copied into the emitted rows
};

// Exact-match accuracy of decoded answers against ground truth, one row per
// infer-rounds value, counters summed over examples. Empty dataset: no rows.
std::vector<MetricsRow> evaluate(const SystemSpec& s, const std::string& task,
                                 const std::vector<TrainExample>& data,
                                 const std::vector<int>& infer_rounds,
                                 const EvalOptions& opt);

struct TrainPlan {
  TrainConfig inner;
  TrainConfig outer;
  bool run_inner = true;
};

// Stage-one warm start of every agent's step link, then stage two over the
// transfer links. Returns the concatenated loss curves.
std::vector<LossPoint> train_system(SystemSpec& s,
                                    const std::vector<TrainExample>& data,
                                    const TrainPlan& plan);

// Builds a fresh untrained system for one grid setting.
using SystemFactory = std::function<SystemSpec(int)>;

// Trains one system per train-rounds value and evaluates it at every
// infer-rounds value; |train_rounds| x |infer_rounds| rows in grid order.
std::vector<MetricsRow> recursion_grid(const SystemFactory& make,
                                       const std::vector<int>& train_rounds,
                                       const std::vector<int>& infer_rounds,
                                       const std::string& task,
                                       const std::vector<TrainExample>& train_data,
                                       const std::vector<TrainExample>& test_data,
                                       const TrainPlan& plan,
                                       const EvalOptions& opt);

// Train+evaluate per latent budget; rows sorted by m.
std::vector<MetricsRow> latent_length_sweep(const SystemFactory& make,
                                            std::vector<int> m_values,
                                            const std::string& task,
                                            const std::vector<TrainExample>& train_data,
                                            const std::vector<TrainExample>& test_data,
                                            const TrainPlan& plan,
                                            const EvalOptions& opt);

struct AblationRow {
  std::string variant;
  double final_loss = 0.0;  // last outer-stage loss point
  double accuracy = 0.0;
};

std::string ablation_csv_header();
std::string ablation_csv_line(const AblationRow& row);

// Equal-budget comparison of transfer-link designs: the factory must vary
// only the link kind (same seeds, same agents).
std::vector<AblationRow> link_design_ablation(
    const std::function<SystemSpec(LinkKind)>& make,
    const std::vector<LinkKind>& variants, const std::string& task,
    const std::vector<TrainExample>& train_data,
    const std::vector<TrainExample>& test_data, const TrainPlan& plan,
    const EvalOptions& opt);

struct PcaResult {
  Tensor projected;   // rows x k
  Tensor components;  // d x k columns; largest-magnitude coordinate positive
  Tensor mean;        // 1 x d column means
  std::vector<double> eigenvalues;  // all d, descending
};

// Center columns, eigendecompose the sample covariance, project onto the
// top-k eigenvectors with a deterministic sign convention.
PcaResult pca_fit(const Tensor& x, int k);
Tensor pca_project(const Tensor& x, int k);

struct EmbeddingRow {
  int round = 0;
  std::string kind;  // "generated" or "truth"
  int answer_id = 0;
  std::vector<double> vec;   // mean-pooled answer embedding
  std::vector<double> proj;  // joint 2-component projection
};

struct DriftReport {
  std::vector<EmbeddingRow> rows;
  std::map<int, double> centroid_distance;  // per round
};

std::string embedding_csv_header(int dims, const std::string& prefix);
std::string embedding_csv_line(const EmbeddingRow& row, bool projected);

// For each round, decodes the sample's answers, mean-pools their token
// embeddings (decoder agent's table) alongside the ground truths, projects
// everything jointly to two components, and reports per-round distances
// between the generated and ground-truth centroids.
DriftReport export_answer_embeddings(const SystemSpec& s,
                                     const std::vector<TrainExample>& sample,
                                     const std::vector<int>& rounds,
                                     const EvalOptions& opt);

}  // namespace rmas
