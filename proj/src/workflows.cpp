#include "workflows.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <utility>

#include "checkpoint.hpp"
#include "config.hpp"
#include "harness.hpp"
#include "theory.hpp"

namespace rmas {

namespace {

std::string hex16(std::uint64_t v) {
  char b[17];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
  return b;
}

// Collects every artifact written under one run directory and closes with a
// manifest of (checksum, name) pairs for replay comparison.
struct OutputDir {
  std::string root;
  std::vector<std::pair<std::string, std::uint64_t>> entries;

  explicit OutputDir(std::string r) : root(std::move(r)) {
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory: " + root);
  }

  std::string path(const std::string& name) const { return root + "/" + name; }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write " + path(name));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    os.flush();
    if (!os) fail(ErrorKind::io, "short write on " + path(name));
    entries.emplace_back(name, fnv1a64(text.data(), text.size()));
  }

  // Checksums a file another writer produced (checkpoints).
  void note(const std::string& name) {
    std::ifstream is(path(name), std::ios::binary);
    if (!is) fail(ErrorKind::io, "cannot read back " + path(name));
    std::string bytes((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
    entries.emplace_back(name, fnv1a64(bytes.data(), bytes.size()));
  }

  void finish() {
    std::sort(entries.begin(), entries.end());
    std::string m;
    for (const auto& [name, sum] : entries) m += hex16(sum) + "  " + name + "\n";
    std::ofstream os(path("manifest.txt"), std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write " + path("manifest.txt"));
    os.write(m.data(), static_cast<std::streamsize>(m.size()));
  }
};

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(ids[i]);
  }
  return s;
}

std::string loss_csv(const std::vector<LossPoint>& curve) {
  std::string s = "step,stage,loss,lr,grad_norm\n";
  for (const LossPoint& p : curve)
    s += std::to_string(p.step) + "," + p.stage + "," + fmt_double(p.loss) +
         "," + fmt_double(p.lr) + "," + fmt_double(p.grad_norm) + "\n";
  return s;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s = metrics_csv_header() + "\n";
  for (const MetricsRow& r : rows) s += metrics_csv_line(r) + "\n";
  return s;
}

std::vector<TrainExample> make_data(const RunConfig& cfg, Pattern pattern,
                                    int size, Split split) {
  std::vector<TaskExample> raw =
      generate_dataset(cfg.task, size, cfg.data_seed, split);
  std::vector<TrainExample> out;
  out.reserve(raw.size());
  for (const TaskExample& ex : raw)
    out.push_back(build_role_targets(ex, pattern, cfg.task.kind));
  return out;
}

EvalOptions eval_opt(const RunConfig& cfg, int train_label) {
  EvalOptions o;
  o.decode_budget = cfg.decode_budget;
  o.seed = cfg.system.seed;
  o.workers = cfg.workers;
  o.train_rounds = train_label;
  return o;
}

struct Prepared {
  SystemSpec system;
  BuildConfig built;
};

// Fresh build from [system], or the checkpointed system when one is named.
Prepared starting_system(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) {
    LoadedSystem ls = load_checkpoint(cfg.checkpoint);
    return {std::move(ls.system), ls.built};
  }
  return {build_system(cfg.system), cfg.system};
}

Prepared trained_system(const RunConfig& cfg) {
  // Validated before dispatch; defensive here.
  require(!cfg.checkpoint.empty(), ErrorKind::config,
          "[io] checkpoint is required: train a system first");
  LoadedSystem ls = load_checkpoint(cfg.checkpoint);
  return {std::move(ls.system), ls.built};
}

int cmd_train_inner(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  Prepared p = starting_system(cfg);
  std::vector<TrainExample> data =
      make_data(cfg, p.system.pattern, cfg.train_size, Split::train);
  std::vector<LossPoint> curve;
  for (std::size_t a = 0; a < p.system.agents.size(); ++a) {
    std::vector<LossPoint> c =
        train_inner(p.system, static_cast<int>(a), data, cfg.plan.inner);
    curve.insert(curve.end(), c.begin(), c.end());
  }
  dir.write_text("loss.csv", loss_csv(curve));
  save_checkpoint(p.system, p.built, dir.path("checkpoint.rmas"));
  dir.note("checkpoint.rmas");
  out << "warm-started " << p.system.agents.size() << " step links on "
      << data.size() << " examples; final loss "
      << fmt_double(curve.empty() ? 0.0 : curve.back().loss) << "\n";
  return 0;
}

int cmd_train_outer(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  Prepared p = starting_system(cfg);
  std::vector<TrainExample> data =
      make_data(cfg, p.system.pattern, cfg.train_size, Split::train);
  std::vector<LossPoint> curve = train_system(p.system, data, cfg.plan);
  dir.write_text("loss.csv", loss_csv(curve));
  save_checkpoint(p.system, p.built, dir.path("checkpoint.rmas"));
  dir.note("checkpoint.rmas");
  double last_outer = 0.0;
  for (const LossPoint& pt : curve)
    if (pt.stage == "outer") last_outer = pt.loss;
  out << "trained on " << data.size() << " examples; final outer loss "
      << fmt_double(last_outer) << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  Prepared p = trained_system(cfg);
  std::vector<TrainExample> data =
      make_data(cfg, p.system.pattern, cfg.test_size, Split::test);
  RunOptions ro;
  ro.decode_budget = cfg.decode_budget;
  std::string csv = "index,expected,decoded,correct,tokens,macs\n";
  int correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ro.seed = derive_seed(cfg.system.seed, i);
    RecursionTrace tr = run_recursion(p.system, data[i].question, ro);
    std::vector<int> got = canonical_answer(tr.answer);
    bool hit = got == data[i].answer;
    correct += hit ? 1 : 0;
    csv += std::to_string(i) + "," + join_ids(data[i].answer) + "," +
           join_ids(got) + "," + (hit ? "1" : "0") + "," +
           std::to_string(tr.emitted_tokens) + "," +
           std::to_string(macs_total(tr.totals)) + "\n";
  }
  dir.write_text("answers.csv", csv);
  out << correct << "/" << data.size() << " exact matches at r=" << p.system.n
      << "\n";
  return 0;
}

int run_evaluate(const RunConfig& cfg, OutputDir& dir, std::ostream& out,
                 bool text_mode, const std::string& file) {
  Prepared p = trained_system(cfg);
  std::vector<TrainExample> data =
      make_data(cfg, p.system.pattern, cfg.test_size, Split::test);
  EvalOptions o = eval_opt(cfg, p.built.n);
  o.text_mode = text_mode;
  std::vector<MetricsRow> rows = evaluate(p.system, task_name(cfg.task.kind),
                                          data, cfg.infer_rounds, o);
  dir.write_text(file, metrics_csv(rows));
  for (const MetricsRow& r : rows)
    out << "r=" << r.infer_rounds << " accuracy=" << fmt_double(r.accuracy)
        << " tokens=" << r.tokens_emitted << " macs=" << r.macs << "\n";
  return 0;
}

int cmd_grid(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuildConfig base = cfg.system;
  SystemFactory make = [base](int n) {
    BuildConfig b = base;
    b.n = n;
    return build_system(b);
  };
  std::vector<TrainExample> train =
      make_data(cfg, base.pattern, cfg.train_size, Split::train);
  std::vector<TrainExample> test =
      make_data(cfg, base.pattern, cfg.test_size, Split::test);
  std::vector<MetricsRow> rows =
      recursion_grid(make, cfg.train_rounds, cfg.infer_rounds,
                     task_name(cfg.task.kind), train, test, cfg.plan,
                     eval_opt(cfg, 0));
  dir.write_text("metrics.csv", metrics_csv(rows));
  out << rows.size() << " grid cells over " << cfg.train_rounds.size()
      << " train depths\n";
  return 0;
}

int cmd_sweep_m(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuildConfig base = cfg.system;
  SystemFactory make = [base](int m) {
    BuildConfig b = base;
    b.m = m;
    return build_system(b);
  };
  std::vector<TrainExample> train =
      make_data(cfg, base.pattern, cfg.train_size, Split::train);
  std::vector<TrainExample> test =
      make_data(cfg, base.pattern, cfg.test_size, Split::test);
  std::vector<MetricsRow> rows =
      latent_length_sweep(make, cfg.m_values, task_name(cfg.task.kind), train,
                          test, cfg.plan, eval_opt(cfg, base.n));
  dir.write_text("metrics.csv", metrics_csv(rows));
  out << rows.size() << " latent budgets swept\n";
  return 0;
}

int cmd_ablate_link(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuildConfig base = cfg.system;
  auto make = [base](LinkKind kind) {
    BuildConfig b = base;
    b.outer_kind = kind;
    return build_system(b);
  };
  std::vector<LinkKind> designs = {LinkKind::variant_1layer,
                                   LinkKind::variant_res1layer,
                                   LinkKind::variant_2layer, LinkKind::outer};
  std::vector<TrainExample> train =
      make_data(cfg, base.pattern, cfg.train_size, Split::train);
  std::vector<TrainExample> test =
      make_data(cfg, base.pattern, cfg.test_size, Split::test);
  std::vector<AblationRow> rows =
      link_design_ablation(make, designs, task_name(cfg.task.kind), train,
                           test, cfg.plan, eval_opt(cfg, base.n));
  std::string csv = ablation_csv_header() + "\n";
  for (const AblationRow& r : rows) {
    csv += ablation_csv_line(r) + "\n";
    out << r.variant << ": final loss " << fmt_double(r.final_loss)
        << ", accuracy " << fmt_double(r.accuracy) << "\n";
  }
  dir.write_text("ablation.csv", csv);
  return 0;
}

int cmd_verify_theory(const RunConfig& cfg, OutputDir& dir, std::ostream& out,
                      std::ostream& err) {
  AgentConfig ac;
  ac.d_h = cfg.system.d_h;
  ac.layers = cfg.system.layers;
  ac.heads = cfg.system.heads;
  ac.vocab = cfg.system.vocab;
  ac.max_pos = cfg.system.max_pos;
  AgentParams agent = init_agent(ac, cfg.verify.seed);

  std::string csv = "check,d_h,level,trials,worst,median,bound,ok\n";
  int bad = 0;
  std::vector<JacobianReport> text =
      verify_text_jacobian(agent, cfg.verify.text_trials,
                           cfg.verify.entropy_levels, cfg.verify.seed);
  for (const JacobianReport& r : text) {
    csv += std::string("text-link,") + std::to_string(r.d_h) + "," +
           fmt_double(r.entropy) + "," + std::to_string(r.trials) + "," +
           fmt_double(r.spectral_norm) + "," + fmt_double(r.median_norm) +
           "," + fmt_double(r.bound) + "," + (r.ok ? "1" : "0") + "\n";
    bad += r.ok ? 0 : 1;
    out << "text-link eps=" << fmt_double(r.entropy) << " worst "
        << fmt_double(r.spectral_norm) << " <= bound " << fmt_double(r.bound)
        << (r.ok ? "" : " VIOLATED") << "\n";
  }
  const double floor = 0.5;  // stability acceptance floor for link norms
  for (int w : cfg.verify.link_widths) {
    LinkNormSummary s = verify_link_jacobian(w, cfg.verify.link_trials,
                                             cfg.verify.delta,
                                             cfg.verify.seed);
    bool ok = s.min >= floor;
    csv += std::string("recursive-link,") + std::to_string(s.d_h) + "," +
           fmt_double(s.delta) + "," + std::to_string(s.trials) + "," +
           fmt_double(s.min) + "," + fmt_double(s.median) + "," +
           fmt_double(floor) + "," + (ok ? "1" : "0") + "\n";
    bad += ok ? 0 : 1;
    out << "recursive-link d_h=" << w << " min " << fmt_double(s.min)
        << " >= " << fmt_double(floor) << (ok ? "" : " VIOLATED") << "\n";
  }
  dir.write_text("verification.csv", csv);
  if (bad > 0) {
    err << "error: " << bad << " verification row(s) out of bounds\n";
    return 2;
  }
  return 0;
}

int cmd_bench_cost(const RunConfig& cfg, OutputDir& dir, std::ostream& out) {
  SystemSpec s = build_system(cfg.system);
  std::vector<TrainExample> data =
      make_data(cfg, cfg.system.pattern, 1, Split::test);
  const std::vector<int>& q = data.front().question;
  const std::uint64_t cells =
      static_cast<std::uint64_t>(s.n) * s.agents.size();
  const int d_mid = cfg.system.d_mid == 0 ? cfg.system.d_h : cfg.system.d_mid;

  RunOptions ro;
  ro.decode_budget = cfg.decode_budget;
  ro.seed = cfg.system.seed;
  RecursionTrace latent = run_recursion(s, q, ro);

  // Equal per-cell budgets make the text-mode projection term exact.
  RunOptions rt = ro;
  rt.fixed_budget = true;
  rt.decode_budget = s.m;
  RecursionTrace text = run_text_baseline(s, q, rt);

  CostModelInput in;
  in.agents = 1;
  in.m = static_cast<std::uint64_t>(s.m);
  in.t = static_cast<std::uint64_t>(q.size()) + 2;
  in.d_h = static_cast<std::uint64_t>(cfg.system.d_h);
  in.vocab = static_cast<std::uint64_t>(cfg.system.vocab);

  std::string csv = "mode,cells,m,d_h,vocab,d_mid,predicted,measured,match,tokens\n";
  bool all = true;
  struct Row {
    const char* mode;
    CostMode cm;
    const RecursionTrace* trace;
  } modes[2] = {{"latent", CostMode::latent, &latent},
                {"text", CostMode::text, &text}};
  for (const Row& r : modes) {
    in.mode = r.cm;
    std::uint64_t predicted = cells * divergent_macs_per_cell(in, d_mid);
    std::uint64_t measured = measured_macs(*r.trace).link_or_projection;
    bool match = predicted == measured;
    all = all && match;
    csv += std::string(r.mode) + "," + std::to_string(cells) + "," +
           std::to_string(s.m) + "," + std::to_string(cfg.system.d_h) + "," +
           std::to_string(cfg.system.vocab) + "," + std::to_string(d_mid) +
           "," + std::to_string(predicted) + "," + std::to_string(measured) +
           "," + (match ? "1" : "0") + "," +
           std::to_string(r.trace->emitted_tokens) + "\n";
    out << r.mode << ": predicted " << predicted << ", measured " << measured
        << (match ? " (exact)" : " (MISMATCH)") << "\n";
  }
  dir.write_text("cost.csv", csv);
  require(all, ErrorKind::numeric, "counter identity failed; see cost.csv");
  return 0;
}

int cmd_export_embeddings(const RunConfig& cfg, OutputDir& dir,
                          std::ostream& out) {
  Prepared p = trained_system(cfg);
  std::vector<TrainExample> sample =
      make_data(cfg, p.system.pattern, cfg.export_sample, Split::test);
  DriftReport rep = export_answer_embeddings(p.system, sample,
                                             cfg.infer_rounds,
                                             eval_opt(cfg, p.built.n));
  std::string proj = embedding_csv_header(2, "p") + "\n";
  std::string raw = embedding_csv_header(p.built.d_h, "e") + "\n";
  for (const EmbeddingRow& r : rep.rows) {
    proj += embedding_csv_line(r, true) + "\n";
    raw += embedding_csv_line(r, false) + "\n";
  }
  std::string drift = "round,centroid_distance\n";
  for (const auto& [round, dist] : rep.centroid_distance) {
    drift += std::to_string(round) + "," + fmt_double(dist) + "\n";
    out << "r=" << round << " centroid distance " << fmt_double(dist) << "\n";
  }
  dir.write_text("embeddings.csv", proj);
  dir.write_text("embeddings_raw.csv", raw);
  dir.write_text("drift.csv", drift);
  return 0;
}

int dispatch(const std::string& cmd, const RunConfig& cfg, OutputDir& dir,
             std::ostream& out, std::ostream& err) {
  if (cmd == "train-inner") return cmd_train_inner(cfg, dir, out);
  if (cmd == "train-outer") return cmd_train_outer(cfg, dir, out);
  if (cmd == "infer") return cmd_infer(cfg, dir, out);
  if (cmd == "evaluate") return run_evaluate(cfg, dir, out, false, "metrics.csv");
  if (cmd == "baseline-text") return run_evaluate(cfg, dir, out, true, "baseline.csv");
  if (cmd == "grid") return cmd_grid(cfg, dir, out);
  if (cmd == "sweep-m") return cmd_sweep_m(cfg, dir, out);
  if (cmd == "ablate-link") return cmd_ablate_link(cfg, dir, out);
  if (cmd == "verify-theory") return cmd_verify_theory(cfg, dir, out, err);
  if (cmd == "bench-cost") return cmd_bench_cost(cfg, dir, out);
  if (cmd == "export-embeddings") return cmd_export_embeddings(cfg, dir, out);
  fail(ErrorKind::config, "unreachable: unknown command " + cmd);
}

bool known_command(const std::string& cmd) {
  static const char* names[] = {"train-inner", "train-outer", "infer",
                                "evaluate",    "baseline-text", "grid",
                                "sweep-m",     "ablate-link", "verify-theory",
                                "bench-cost",  "export-embeddings"};
  for (const char* n : names)
    if (cmd == n) return true;
  return false;
}

bool parse_u64_arg(const std::string& s, std::uint64_t* v) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  unsigned long long x = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size() || s[0] == '-') return false;
  *v = x;
  return true;
}

}  // namespace

std::string usage_text() {
  return
      "usage: rmas <command> --config PATH [--seed N] [--out DIR] [--workers N]\n"
      "commands:\n"
      "  train-inner        warm-start every step link; loss.csv, checkpoint.rmas\n"
      "  train-outer        two-stage training; loss.csv, checkpoint.rmas\n"
      "  infer              decode the test split; answers.csv\n"
      "  evaluate           exact-match metrics per infer rounds; metrics.csv\n"
      "  baseline-text      token-mediated baseline metrics; baseline.csv\n"
      "  grid               train-vs-infer rounds accuracy grid; metrics.csv\n"
      "  sweep-m            latent budget sweep; metrics.csv\n"
      "  ablate-link        transfer link design comparison; ablation.csv\n"
      "  verify-theory      jacobian norm bound checks; verification.csv\n"
      "  bench-cost         counters vs closed-form cost terms; cost.csv\n"
      "  export-embeddings  answer embedding drift; embeddings.csv, drift.csv\n"
      "flags:\n"
      "  --config PATH  run configuration file (required)\n"
      "  --seed N       override the [system] seed\n"
      "  --out DIR      output directory (default: [io] out_dir, $RMAS_OUT, ./out)\n"
      "  --workers N    override the [io] worker count\n";
}

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  if (args.empty()) {
    err << usage_text();
    return 1;
  }
  const std::string cmd = args[0];
  if (cmd == "help" || cmd == "--help" || cmd == "-h") {
    out << usage_text();
    return 0;
  }
  if (!known_command(cmd)) {
    err << "unknown command '" << cmd << "'\n" << usage_text();
    return 1;
  }

  std::string config_path, out_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::uint64_t> workers_flag;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto value = [&](const char* flag) -> const std::string* {
      if (i + 1 >= args.size()) {
        err << flag << " needs a value\n" << usage_text();
        return nullptr;
      }
      return &args[++i];
    };
    if (a == "--config") {
      const std::string* v = value("--config");
      if (!v) return 1;
      config_path = *v;
    } else if (a == "--seed") {
      const std::string* v = value("--seed");
      if (!v) return 1;
      std::uint64_t n = 0;
      if (!parse_u64_arg(*v, &n)) {
        err << "--seed wants a non-negative integer, got '" << *v << "'\n";
        return 1;
      }
      seed_flag = n;
    } else if (a == "--out") {
      const std::string* v = value("--out");
      if (!v) return 1;
      out_flag = *v;
    } else if (a == "--workers") {
      const std::string* v = value("--workers");
      if (!v) return 1;
      std::uint64_t n = 0;
      if (!parse_u64_arg(*v, &n) || n < 1) {
        err << "--workers wants a positive integer, got '" << *v << "'\n";
        return 1;
      }
      workers_flag = n;
    } else {
      err << "unknown flag '" << a << "'\n" << usage_text();
      return 1;
    }
  }
  if (config_path.empty()) {
    err << "--config PATH is required\n" << usage_text();
    return 1;
  }

  try {
    RunConfig cfg = parse_config(config_path);
    if (seed_flag) cfg.system.seed = *seed_flag;
    if (workers_flag) cfg.workers = static_cast<int>(*workers_flag);

    const bool needs_checkpoint = cmd == "infer" || cmd == "evaluate" ||
                                  cmd == "baseline-text" ||
                                  cmd == "export-embeddings";
    if (needs_checkpoint && cfg.checkpoint.empty()) {
      err << "error: '" << cmd
          << "' needs [io] checkpoint: train a system first\n";
      return 1;
    }

    std::string out_root = out_flag;
    if (out_root.empty()) out_root = cfg.out_dir;
    if (out_root.empty()) {
      const char* env = std::getenv("RMAS_OUT");
      if (env && *env) out_root = env;
    }
    if (out_root.empty()) out_root = "out";

    OutputDir dir(out_root);
    int rc = dispatch(cmd, cfg, dir, out, err);
    dir.finish();
    return rc;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind == ErrorKind::config ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace rmas
