#include "config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "link.hpp"
#include "vocab.hpp"

namespace rmas {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_ll(const std::string& v, long long& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtoll(v.c_str(), &end, 10);
  return errno == 0 && end == v.c_str() + v.size();
}

bool parse_u64(const std::string& v, std::uint64_t& out) {
  if (v.empty() || v[0] == '-') return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtoull(v.c_str(), &end, 10);
  return errno == 0 && end == v.c_str() + v.size();
}

bool parse_dbl(const std::string& v, double& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(v.c_str(), &end);
  return errno == 0 && end == v.c_str() + v.size();
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") return out = true, true;
  if (v == "false" || v == "0") return out = false, true;
  return false;
}

std::vector<std::string> split_ws(const std::string& v) {
  std::istringstream is(v);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

struct Parser {
  RunConfig cfg;
  std::vector<std::string> issues;
  std::map<std::string, int> seen;  // "section.key" -> first line

  // Inner-stage overrides applied after the shared [train] keys.
  std::optional<double> inner_lr;
  std::optional<int> inner_batch, inner_steps;
  std::optional<std::uint64_t> inner_seed;

  void issue(int line, const std::string& msg) {
    issues.push_back("line " + std::to_string(line) + ": " + msg);
  }
  void semantic(const std::string& msg) { issues.push_back(msg); }

  using Handler = std::function<void(Parser&, const std::string&, int)>;
  std::map<std::string, std::map<std::string, Handler>> table;

  Parser() { build_table(); }

  void set_int(int& dst, const std::string& key, const std::string& v, int line) {
    long long x;
    if (parse_ll(v, x))
      dst = static_cast<int>(x);
    else
      issue(line, "key '" + key + "' expects an integer, got '" + v + "'");
  }
  void set_u64(std::uint64_t& dst, const std::string& key, const std::string& v,
               int line) {
    std::uint64_t x;
    if (parse_u64(v, x))
      dst = x;
    else
      issue(line, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  void set_dbl(double& dst, const std::string& key, const std::string& v, int line) {
    double x;
    if (parse_dbl(v, x))
      dst = x;
    else
      issue(line, "key '" + key + "' expects a number, got '" + v + "'");
  }
  void set_bool(bool& dst, const std::string& key, const std::string& v, int line) {
    bool x;
    if (parse_bool(v, x))
      dst = x;
    else
      issue(line, "key '" + key + "' expects true or false, got '" + v + "'");
  }
  void set_int_list(std::vector<int>& dst, const std::string& key,
                    const std::string& v, int line) {
    std::vector<int> out;
    for (const std::string& tok : split_ws(v)) {
      long long x;
      if (!parse_ll(tok, x)) {
        issue(line, "key '" + key + "' expects integers, got '" + tok + "'");
        return;
      }
      out.push_back(static_cast<int>(x));
    }
    if (out.empty())
      issue(line, "key '" + key + "' expects at least one value");
    else
      dst = out;
  }
  void set_dbl_list(std::vector<double>& dst, const std::string& key,
                    const std::string& v, int line) {
    std::vector<double> out;
    for (const std::string& tok : split_ws(v)) {
      double x;
      if (!parse_dbl(tok, x)) {
        issue(line, "key '" + key + "' expects numbers, got '" + tok + "'");
        return;
      }
      out.push_back(x);
    }
    if (out.empty())
      issue(line, "key '" + key + "' expects at least one value");
    else
      dst = out;
  }

  void build_table() {
    auto& sys = table["system"];
    sys["pattern"] = [](Parser& p, const std::string& v, int line) {
      try {
        p.cfg.system.pattern = pattern_from_name(v);
      } catch (const Error& e) {
        p.issue(line, e.what());
      }
    };
    sys["n"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.n, "n", v, l); };
    sys["m"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.m, "m", v, l); };
    sys["d_h"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.d_h, "d_h", v, l); };
    sys["layers"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.layers, "layers", v, l); };
    sys["heads"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.heads, "heads", v, l); };
    sys["vocab"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.vocab, "vocab", v, l); };
    sys["max_pos"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.max_pos, "max_pos", v, l); };
    sys["d_mid"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.d_mid, "d_mid", v, l); };
    sys["expert_scale"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.system.expert_scale, "expert_scale", v, l); };
    sys["seed"] = [](Parser& p, const std::string& v, int l) { p.set_u64(p.cfg.system.seed, "seed", v, l); };
    sys["inner_link"] = [](Parser& p, const std::string& v, int line) {
      try {
        p.cfg.system.inner_kind = link_kind_from_name(v);
      } catch (const Error& e) {
        p.issue(line, e.what());
      }
    };
    sys["outer_link"] = [](Parser& p, const std::string& v, int line) {
      try {
        p.cfg.system.outer_kind = link_kind_from_name(v);
      } catch (const Error& e) {
        p.issue(line, e.what());
      }
    };

    auto& tr = table["train"];
    tr["learning_rate"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.plan.outer.learning_rate, "learning_rate", v, l); };
    tr["batch_size"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.plan.outer.batch_size, "batch_size", v, l); };
    tr["steps"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.plan.outer.steps, "steps", v, l); };
    tr["seed"] = [](Parser& p, const std::string& v, int l) { p.set_u64(p.cfg.plan.outer.seed, "seed", v, l); };
    tr["weight_decay"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.plan.outer.weight_decay, "weight_decay", v, l); };
    tr["grad_clip_norm"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.plan.outer.grad_clip_norm, "grad_clip_norm", v, l); };
    tr["beta1"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.plan.outer.beta1, "beta1", v, l); };
    tr["beta2"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.plan.outer.beta2, "beta2", v, l); };
    tr["eps"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.plan.outer.eps, "eps", v, l); };
    tr["tune_inner_in_outer"] = [](Parser& p, const std::string& v, int l) { p.set_bool(p.cfg.plan.outer.tune_inner_in_outer, "tune_inner_in_outer", v, l); };
    tr["run_inner"] = [](Parser& p, const std::string& v, int l) { p.set_bool(p.cfg.plan.run_inner, "run_inner", v, l); };
    tr["inner_learning_rate"] = [](Parser& p, const std::string& v, int l) {
      double x = 0;
      p.set_dbl(x, "inner_learning_rate", v, l);
      p.inner_lr = x;
    };
    tr["inner_batch_size"] = [](Parser& p, const std::string& v, int l) {
      int x = 0;
      p.set_int(x, "inner_batch_size", v, l);
      p.inner_batch = x;
    };
    tr["inner_steps"] = [](Parser& p, const std::string& v, int l) {
      int x = 0;
      p.set_int(x, "inner_steps", v, l);
      p.inner_steps = x;
    };
    tr["inner_seed"] = [](Parser& p, const std::string& v, int l) {
      std::uint64_t x = 0;
      p.set_u64(x, "inner_seed", v, l);
      p.inner_seed = x;
    };

    auto& tk = table["task"];
    tk["kind"] = [](Parser& p, const std::string& v, int line) {
      try {
        p.cfg.task.kind = task_from_name(v);
      } catch (const Error& e) {
        p.issue(line, e.what());
      }
    };
    tk["k"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.task.k, "k", v, l); };
    tk["list_len"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.task.list_len, "list_len", v, l); };
    tk["table_size"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.task.table_size, "table_size", v, l); };
    tk["train_size"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.train_size, "train_size", v, l); };
    tk["test_size"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.test_size, "test_size", v, l); };
    tk["data_seed"] = [](Parser& p, const std::string& v, int l) { p.set_u64(p.cfg.data_seed, "data_seed", v, l); };
    tk["decode_budget"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.decode_budget, "decode_budget", v, l); };
    tk["train_rounds"] = [](Parser& p, const std::string& v, int l) { p.set_int_list(p.cfg.train_rounds, "train_rounds", v, l); };
    tk["infer_rounds"] = [](Parser& p, const std::string& v, int l) { p.set_int_list(p.cfg.infer_rounds, "infer_rounds", v, l); };
    tk["m_values"] = [](Parser& p, const std::string& v, int l) { p.set_int_list(p.cfg.m_values, "m_values", v, l); };
    tk["export_sample"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.export_sample, "export_sample", v, l); };

    auto& io = table["io"];
    io["out_dir"] = [](Parser& p, const std::string& v, int) { p.cfg.out_dir = v; };
    io["checkpoint"] = [](Parser& p, const std::string& v, int) { p.cfg.checkpoint = v; };
    io["workers"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.workers, "workers", v, l); };

    auto& vf = table["verify"];
    vf["text_trials"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.verify.text_trials, "text_trials", v, l); };
    vf["link_trials"] = [](Parser& p, const std::string& v, int l) { p.set_int(p.cfg.verify.link_trials, "link_trials", v, l); };
    vf["entropy_levels"] = [](Parser& p, const std::string& v, int l) { p.set_dbl_list(p.cfg.verify.entropy_levels, "entropy_levels", v, l); };
    vf["link_widths"] = [](Parser& p, const std::string& v, int l) { p.set_int_list(p.cfg.verify.link_widths, "link_widths", v, l); };
    vf["delta"] = [](Parser& p, const std::string& v, int l) { p.set_dbl(p.cfg.verify.delta, "delta", v, l); };
    vf["seed"] = [](Parser& p, const std::string& v, int l) { p.set_u64(p.cfg.verify.seed, "seed", v, l); };
  }

  void parse(const std::string& text) {
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(is, raw)) {
      ++line_no;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          issue(line_no, "unterminated section header");
          continue;
        }
        section = trim(line.substr(1, line.size() - 2));
        if (!table.count(section)) {
          issue(line_no, "unknown section '" + section + "'");
          section.clear();
        }
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        issue(line_no, "expected 'key = value'");
        continue;
      }
      if (section.empty()) {
        issue(line_no, "key outside any section");
        continue;
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      auto& handlers = table[section];
      auto it = handlers.find(key);
      if (it == handlers.end()) {
        issue(line_no, "unknown key '" + key + "' in section [" + section + "]");
        continue;
      }
      std::string full = section + "." + key;
      auto [prev, fresh] = seen.emplace(full, line_no);
      if (!fresh) {
        issue(line_no, "duplicate key '" + key + "' (first set on line " +
                           std::to_string(prev->second) + ")");
        continue;
      }
      it->second(*this, value, line_no);
    }
  }

  void check_train_stage(const TrainConfig& c, const std::string& prefix) {
    if (!(c.learning_rate > 0.0)) semantic(prefix + "learning_rate must be > 0");
    if (c.batch_size < 1) semantic(prefix + "batch_size must be >= 1");
    if (c.steps < 1) semantic(prefix + "steps must be >= 1");
    if (c.weight_decay < 0.0) semantic(prefix + "weight_decay must be >= 0");
    if (c.grad_clip_norm < 0.0) semantic(prefix + "grad_clip_norm must be >= 0");
    if (!(c.beta1 > 0.0 && c.beta1 < 1.0)) semantic(prefix + "beta1 must lie in (0, 1)");
    if (!(c.beta2 > 0.0 && c.beta2 < 1.0)) semantic(prefix + "beta2 must lie in (0, 1)");
    if (!(c.eps > 0.0)) semantic(prefix + "eps must be > 0");
  }

  void validate() {
    // Propagate shared train keys to the inner stage, then apply overrides.
    TrainConfig inner = cfg.plan.outer;
    if (inner_lr) inner.learning_rate = *inner_lr;
    if (inner_batch) inner.batch_size = *inner_batch;
    if (inner_steps) inner.steps = *inner_steps;
    if (inner_seed) inner.seed = *inner_seed;
    cfg.plan.inner = inner;

    const BuildConfig& s = cfg.system;
    if (s.n < 1) semantic("n must be >= 1");
    if (s.m < 0) semantic("m must be >= 0");
    if (s.d_h < 1) semantic("d_h must be >= 1");
    if (s.layers < 1) semantic("layers must be >= 1");
    if (s.heads < 1) semantic("heads must be >= 1");
    if (s.heads >= 1 && s.d_h >= 1 && s.d_h % s.heads != 0)
      semantic("d_h must be divisible by heads");
    if (s.vocab < vocab::MIN_VOCAB)
      semantic("vocab must be >= " + std::to_string(vocab::MIN_VOCAB) +
               " to cover the reserved tokens");
    if (s.max_pos < 8) semantic("max_pos must be >= 8");
    if (s.d_mid < 0) semantic("d_mid must be >= 0");
    if (s.expert_scale < 1) semantic("expert_scale must be >= 1");

    check_train_stage(cfg.plan.outer, "");
    check_train_stage(cfg.plan.inner, "inner_");

    const TaskSpec& t = cfg.task;
    if (t.k < 1) semantic("k must be >= 1");
    if (t.list_len < 2 || t.list_len > 10) semantic("list_len must lie in [2, 10]");
    if (t.table_size < 2 || t.table_size > 10)
      semantic("table_size must lie in [2, 10]");
    if (cfg.train_size < 1) semantic("train_size must be >= 1");
    if (cfg.test_size < 1) semantic("test_size must be >= 1");
    if (cfg.decode_budget < 1) semantic("decode_budget must be >= 1");
    for (int r : cfg.train_rounds)
      if (r < 1) semantic("train_rounds entries must be >= 1");
    for (int r : cfg.infer_rounds)
      if (r < 1) semantic("infer_rounds entries must be >= 1");
    for (int m : cfg.m_values)
      if (m < 0) semantic("m_values entries must be >= 0");
    if (cfg.export_sample < 1) semantic("export_sample must be >= 1");
    if (cfg.workers < 1) semantic("workers must be >= 1");

    const VerifyConfig& v = cfg.verify;
    if (v.text_trials < 1) semantic("text_trials must be >= 1");
    if (v.link_trials < 100) semantic("link_trials must be >= 100");
    for (double e : v.entropy_levels)
      if (!(e > 0.0) || (s.vocab >= 2 && e >= std::log(double(s.vocab))))
        semantic("entropy_levels must lie in (0, ln vocab)");
    if (!(v.delta >= 0.0 && v.delta < 1.0)) semantic("delta must lie in [0, 1)");
    for (int w : v.link_widths)
      if (w < 1) semantic("link_widths entries must be >= 1");
  }
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  Parser p;
  p.parse(text);
  p.validate();
  if (!p.issues.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& s : p.issues) msg += "\n" + s;
    fail(ErrorKind::config, msg);
  }
  return p.cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace rmas
