#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "vocab.hpp"

namespace rmas {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string metrics_csv_header() {
  return "task,pattern,train_rounds,infer_rounds,m,accuracy,tokens_emitted,"
         "macs,wall_time_s,seed";
}

std::string metrics_csv_line(const MetricsRow& r) {
  return r.task + "," + r.pattern + "," + std::to_string(r.train_rounds) + "," +
         std::to_string(r.infer_rounds) + "," + std::to_string(r.m) + "," +
         fmt_double(r.accuracy) + "," + std::to_string(r.tokens_emitted) + "," +
         std::to_string(r.macs) + "," + fmt_double(r.wall_time_s) + "," +
         std::to_string(r.seed);
}

std::vector<int> canonical_answer(const std::vector<int>& decoded) {
  std::vector<int> out;
  bool in_tool = false;
  for (int tok : decoded) {
    if (tok == vocab::EOS) break;
    if (tok == vocab::TOOL_OPEN) {
      in_tool = true;
      continue;
    }
    if (tok == vocab::TOOL_CLOSE) {
      in_tool = false;
      continue;
    }
    if (!in_tool) out.push_back(tok);
  }
  return out;
}

namespace {

struct ExampleOutcome {
  bool correct = false;
  std::uint64_t tokens = 0;
  std::uint64_t macs = 0;
  double wall = 0.0;
};

ExampleOutcome eval_one(const SystemSpec& s, const TrainExample& ex,
                        const EvalOptions& opt, std::uint64_t index) {
  RunOptions ropt;
  ropt.decode_budget = opt.decode_budget;
  ropt.temperature = 0.0;
  ropt.seed = derive_seed(opt.seed, index);
  ropt.timing = opt.timing;
  RecursionTrace tr = opt.text_mode ? run_text_baseline(s, ex.question, ropt)
                                    : run_recursion(s, ex.question, ropt);
  ExampleOutcome o;
  o.correct = canonical_answer(tr.answer) == ex.answer;
  o.tokens = tr.emitted_tokens;
  o.macs = macs_total(tr.totals);
  for (const CellTrace& c : tr.cells) o.wall += c.wall_time_s;
  return o;
}

// Parallel over examples with a fixed index->worker assignment; outcomes
// land in index order so aggregation is independent of the worker count.
std::vector<ExampleOutcome> eval_all(const SystemSpec& s,
                                     const std::vector<TrainExample>& data,
                                     const EvalOptions& opt) {
  std::vector<ExampleOutcome> outs(data.size());
  int workers = std::max(1, opt.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < data.size(); ++i)
      outs[i] = eval_one(s, data[i], opt, i);
    return outs;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < data.size(); i += workers)
          outs[i] = eval_one(s, data[i], opt, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return outs;
}

double mean_or_zero(std::uint64_t hits, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

std::vector<MetricsRow> evaluate(const SystemSpec& s, const std::string& task,
                                 const std::vector<TrainExample>& data,
                                 const std::vector<int>& infer_rounds,
                                 const EvalOptions& opt) {
  validate_system(s);
  for (int r : infer_rounds)
    require(r >= 1, ErrorKind::config, "infer rounds must be >= 1");
  std::vector<MetricsRow> rows;
  if (data.empty()) return rows;

  for (int r : infer_rounds) {
    SystemSpec sr = s;
    sr.n = r;
    std::vector<ExampleOutcome> outs = eval_all(sr, data, opt);
    MetricsRow row;
    row.task = task;
    row.pattern = pattern_name(s.pattern);
    row.train_rounds = opt.train_rounds;
    row.infer_rounds = r;
    row.m = s.m;
    std::uint64_t hits = 0;
    for (const ExampleOutcome& o : outs) {
      hits += o.correct ? 1 : 0;
      row.tokens_emitted += o.tokens;
      row.macs += o.macs;
      row.wall_time_s += o.wall;
    }
    row.accuracy = mean_or_zero(hits, outs.size());
    if (!opt.timing) row.wall_time_s = 0.0;
    row.seed = opt.seed;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LossPoint> train_system(SystemSpec& s,
                                    const std::vector<TrainExample>& data,
                                    const TrainPlan& plan) {
  std::vector<LossPoint> points;
  if (plan.run_inner)
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
      std::vector<LossPoint> p = train_inner(s, static_cast<int>(i), data, plan.inner);
      points.insert(points.end(), p.begin(), p.end());
    }
  std::vector<LossPoint> p = train_outer(s, data, plan.outer);
  points.insert(points.end(), p.begin(), p.end());
  return points;
}

std::vector<MetricsRow> recursion_grid(const SystemFactory& make,
                                       const std::vector<int>& train_rounds,
                                       const std::vector<int>& infer_rounds,
                                       const std::string& task,
                                       const std::vector<TrainExample>& train_data,
                                       const std::vector<TrainExample>& test_data,
                                       const TrainPlan& plan,
                                       const EvalOptions& opt) {
  require(!train_rounds.empty() && !infer_rounds.empty(), ErrorKind::config,
          "grid needs non-empty round lists");
  std::vector<MetricsRow> rows;
  for (int tr : train_rounds) {
    SystemSpec s = make(tr);
    train_system(s, train_data, plan);
    EvalOptions eo = opt;
    eo.train_rounds = tr;
    std::vector<MetricsRow> r = evaluate(s, task, test_data, infer_rounds, eo);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

std::vector<MetricsRow> latent_length_sweep(const SystemFactory& make,
                                            std::vector<int> m_values,
                                            const std::string& task,
                                            const std::vector<TrainExample>& train_data,
                                            const std::vector<TrainExample>& test_data,
                                            const TrainPlan& plan,
                                            const EvalOptions& opt) {
  require(!m_values.empty(), ErrorKind::config, "sweep needs at least one m value");
  for (int m : m_values)
    require(m >= 0, ErrorKind::config, "latent budget must be >= 0");
  std::sort(m_values.begin(), m_values.end());
  std::vector<MetricsRow> rows;
  for (int m : m_values) {
    SystemSpec s = make(m);
    require(s.m == m, ErrorKind::config, "factory ignored the requested latent budget");
    TrainPlan p = plan;
    if (m == 0) p.run_inner = false;  // the step link never fires at m=0
    train_system(s, train_data, p);
    std::vector<MetricsRow> r = evaluate(s, task, test_data, {s.n}, opt);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

std::string ablation_csv_header() { return "variant,final_loss,accuracy"; }

std::string ablation_csv_line(const AblationRow& r) {
  return r.variant + "," + fmt_double(r.final_loss) + "," + fmt_double(r.accuracy);
}

std::vector<AblationRow> link_design_ablation(
    const std::function<SystemSpec(LinkKind)>& make,
    const std::vector<LinkKind>& variants, const std::string& task,
    const std::vector<TrainExample>& train_data,
    const std::vector<TrainExample>& test_data, const TrainPlan& plan,
    const EvalOptions& opt) {
  require(!variants.empty(), ErrorKind::config, "ablation needs at least one variant");
  require(plan.outer.steps >= 1, ErrorKind::config,
          "ablation needs at least one outer step");
  std::vector<AblationRow> rows;
  for (LinkKind kind : variants) {
    SystemSpec s = make(kind);
    std::vector<LossPoint> points = train_system(s, train_data, plan);
    AblationRow row;
    row.variant = link_kind_name(kind);
    for (const LossPoint& p : points)
      if (p.stage == "outer") row.final_loss = p.loss;
    row.accuracy = evaluate(s, task, test_data, {s.n}, opt)[0].accuracy;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// Cyclic Jacobi on a symmetric matrix, accumulating the rotations so the
// eigenvectors come out alongside the values.
void jacobi_symmetric(Tensor a, std::vector<double>& values, Tensor& vectors) {
  const int n = a.rows();
  vectors = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) vectors.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a.at(p, q)) < 1e-300) continue;
        double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = vectors.at(k, p), vkq = vectors.at(k, q);
          vectors.at(k, p) = c * vkp - s * vkq;
          vectors.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  values.assign(n, 0.0);
  for (int i = 0; i < n; ++i) values[i] = a.at(i, i);
}

}  // namespace

PcaResult pca_fit(const Tensor& x, int k) {
  require(x.rows() >= 2, ErrorKind::config,
          "principal projection needs at least two rows");
  require(k >= 1 && k <= x.cols(), ErrorKind::config,
          "component count must lie in [1, columns]");
  const int rows = x.rows(), d = x.cols();

  PcaResult res;
  res.mean = Tensor::zeros({1, d});
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < rows; ++i) s += x.at(i, j);
    res.mean.at(0, j) = s / rows;
  }
  Tensor xc = x;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < d; ++j) xc.at(i, j) -= res.mean.at(0, j);

  Tensor cov = t_affine(t_matmul(t_transpose(xc), xc), 1.0 / (rows - 1), 0.0);
  std::vector<double> values;
  Tensor vectors;
  jacobi_symmetric(cov, values, vectors);

  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });

  res.eigenvalues.resize(d);
  for (int i = 0; i < d; ++i) res.eigenvalues[i] = values[order[i]];
  res.components = Tensor::zeros({d, k});
  for (int c = 0; c < k; ++c) {
    int src = order[c];
    int arg = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(vectors.at(i, src)) > std::abs(vectors.at(arg, src))) arg = i;
    double sign = vectors.at(arg, src) < 0.0 ? -1.0 : 1.0;
    for (int i = 0; i < d; ++i) res.components.at(i, c) = sign * vectors.at(i, src);
  }
  res.projected = t_matmul(xc, res.components);
  return res;
}

Tensor pca_project(const Tensor& x, int k) { return pca_fit(x, k).projected; }

std::string embedding_csv_header(int dims, const std::string& prefix) {
  std::string h = "round,kind,answer_id";
  for (int i = 0; i < dims; ++i) h += "," + prefix + std::to_string(i);
  return h;
}

std::string embedding_csv_line(const EmbeddingRow& r, bool projected) {
  std::string line = std::to_string(r.round) + "," + r.kind + "," +
                     std::to_string(r.answer_id);
  for (double v : projected ? r.proj : r.vec) line += "," + fmt_double(v);
  return line;
}

namespace {

std::vector<double> mean_pooled_embedding(const AgentParams& p,
                                          const std::vector<int>& tokens) {
  std::vector<double> out(static_cast<std::size_t>(p.cfg.d_h), 0.0);
  if (tokens.empty()) return out;
  Tensor rows = embed_tokens(p, tokens);
  for (int i = 0; i < rows.rows(); ++i)
    for (int j = 0; j < rows.cols(); ++j) out[j] += rows.at(i, j);
  for (double& v : out) v /= rows.rows();
  return out;
}

}  // namespace

DriftReport export_answer_embeddings(const SystemSpec& s,
                                     const std::vector<TrainExample>& sample,
                                     const std::vector<int>& rounds,
                                     const EvalOptions& opt) {
  validate_system(s);
  require(!sample.empty(), ErrorKind::config, "embedding export needs examples");
  require(!rounds.empty(), ErrorKind::config, "embedding export needs rounds");
  const AgentParams& dec = s.agents[s.decoder].params;
  require(dec.cfg.d_h >= 2, ErrorKind::config,
          "two-component projection needs hidden width >= 2");

  DriftReport rep;
  for (int r : rounds) {
    require(r >= 1, ErrorKind::config, "rounds must be >= 1");
    SystemSpec sr = s;
    sr.n = r;
    std::vector<double> gen_centroid(dec.cfg.d_h, 0.0);
    std::vector<double> truth_centroid(dec.cfg.d_h, 0.0);
    for (std::size_t id = 0; id < sample.size(); ++id) {
      RunOptions ropt;
      ropt.decode_budget = opt.decode_budget;
      ropt.temperature = 0.0;
      ropt.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(r) * 1000003 + id);
      RecursionTrace tr = run_recursion(sr, sample[id].question, ropt);

      EmbeddingRow gen;
      gen.round = r;
      gen.kind = "generated";
      gen.answer_id = static_cast<int>(id);
      gen.vec = mean_pooled_embedding(dec, canonical_answer(tr.answer));
      EmbeddingRow truth = gen;
      truth.kind = "truth";
      truth.vec = mean_pooled_embedding(dec, sample[id].answer);
      for (int j = 0; j < dec.cfg.d_h; ++j) {
        gen_centroid[j] += gen.vec[j];
        truth_centroid[j] += truth.vec[j];
      }
      rep.rows.push_back(std::move(gen));
      rep.rows.push_back(std::move(truth));
    }
    double dist = 0.0;
    for (int j = 0; j < dec.cfg.d_h; ++j) {
      double diff = (gen_centroid[j] - truth_centroid[j]) / sample.size();
      dist += diff * diff;
    }
    rep.centroid_distance[r] = std::sqrt(dist);
  }

  Tensor all = Tensor::zeros({static_cast<int>(rep.rows.size()), dec.cfg.d_h});
  for (std::size_t i = 0; i < rep.rows.size(); ++i)
    for (int j = 0; j < dec.cfg.d_h; ++j) all.at(static_cast<int>(i), j) = rep.rows[i].vec[j];
  Tensor proj = pca_project(all, 2);
  for (std::size_t i = 0; i < rep.rows.size(); ++i)
    rep.rows[i].proj = {proj.at(static_cast<int>(i), 0), proj.at(static_cast<int>(i), 1)};
  return rep;
}

}  // namespace rmas
