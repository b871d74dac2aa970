#include <cstdio>
#include <fstream>
#include <string>

#include "config.hpp"
#include "doctest.h"

using namespace rmas;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

bool mentions(const std::string& msg, const std::string& needle) {
  return msg.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  RunConfig cfg = parse_config_text("");
  CHECK(cfg.plan.outer.learning_rate == 5e-4);
  CHECK(cfg.plan.outer.batch_size == 4);
  CHECK(cfg.plan.inner.learning_rate == 5e-4);
  CHECK(cfg.plan.run_inner);
  CHECK(cfg.system.pattern == Pattern::sequential);
  CHECK(cfg.system.d_h == 32);
  CHECK(cfg.task.kind == TaskKind::arith_chain);
  CHECK(cfg.task.k == 3);
  CHECK(cfg.workers == 1);
  CHECK(cfg.verify.entropy_levels == std::vector<double>{0.001, 0.01, 0.05});
}

TEST_CASE("a full document reaches every section") {
  std::string text =
      "# experiment setup\n"
      "[system]\n"
      "pattern = mixture\n"
      "n = 3\n"
      "m = 6\n"
      "d_h = 24\n"
      "layers = 2\n"
      "heads = 3\n"
      "vocab = 40\n"
      "max_pos = 128\n"
      "d_mid = 12\n"
      "inner_link = inner\n"
      "outer_link = 2layer\n"
      "expert_scale = 2\n"
      "seed = 11\n"
      "\n"
      "[train]\n"
      "learning_rate = 0.003\n"
      "batch_size = 8\n"
      "steps = 40\n"
      "weight_decay = 0.01\n"
      "grad_clip_norm = 0.5\n"
      "tune_inner_in_outer = true\n"
      "inner_learning_rate = 0.005\n"
      "inner_steps = 25\n"
      "\n"
      "[task]\n"
      "kind = seq_transform\n"
      "k = 2\n"
      "list_len = 5\n"
      "train_size = 100\n"
      "test_size = 50\n"
      "data_seed = 77\n"
      "decode_budget = 6\n"
      "train_rounds = 1 3\n"
      "infer_rounds = 1 2 3\n"
      "m_values = 0 4\n"
      "export_sample = 8\n"
      "\n"
      "[io]\n"
      "out_dir = /tmp/rmas_run\n"
      "checkpoint = model.rmas\n"
      "workers = 2\n"
      "\n"
      "[verify]\n"
      "text_trials = 150\n"
      "link_trials = 120\n"
      "entropy_levels = 0.01 0.05\n"
      "link_widths = 32 64\n"
      "delta = 0.05\n"
      "seed = 3\n";
  RunConfig cfg = parse_config_text(text);
  CHECK(cfg.system.pattern == Pattern::mixture);
  CHECK(cfg.system.n == 3);
  CHECK(cfg.system.m == 6);
  CHECK(cfg.system.heads == 3);
  CHECK(cfg.system.d_mid == 12);
  CHECK(cfg.system.outer_kind == LinkKind::variant_2layer);
  CHECK(cfg.plan.outer.learning_rate == 0.003);
  CHECK(cfg.plan.outer.steps == 40);
  CHECK(cfg.plan.outer.tune_inner_in_outer);
  CHECK(cfg.plan.inner.learning_rate == 0.005);
  CHECK(cfg.plan.inner.steps == 25);
  CHECK(cfg.plan.inner.batch_size == 8);  // inherited from the shared key
  CHECK(cfg.task.kind == TaskKind::seq_transform);
  CHECK(cfg.task.list_len == 5);
  CHECK(cfg.train_rounds == std::vector<int>{1, 3});
  CHECK(cfg.infer_rounds == std::vector<int>{1, 2, 3});
  CHECK(cfg.m_values == std::vector<int>{0, 4});
  CHECK(cfg.out_dir == "/tmp/rmas_run");
  CHECK(cfg.checkpoint == "model.rmas");
  CHECK(cfg.workers == 2);
  CHECK(cfg.verify.link_trials == 120);
  CHECK(cfg.verify.link_widths == std::vector<int>{32, 64});
}

TEST_CASE("misspelled keys are rejected by name and line") {
  std::string msg = error_of("[train]\nlearning_rte = 0.01\n");
  CHECK(mentions(msg, "learning_rte"));
  CHECK(mentions(msg, "line 2"));
}

TEST_CASE("unknown sections and stray keys are syntax errors") {
  CHECK(mentions(error_of("[sytem]\nn = 2\n"), "unknown section 'sytem'"));
  CHECK(mentions(error_of("n = 2\n"), "key outside any section"));
  CHECK(mentions(error_of("[system\nn = 2\n"), "unterminated section header"));
  CHECK(mentions(error_of("[system]\njust words\n"), "expected 'key = value'"));
}

TEST_CASE("head divisibility is checked semantically") {
  std::string msg = error_of("[system]\nd_h = 30\nheads = 4\n");
  CHECK(mentions(msg, "d_h must be divisible by heads"));
}

TEST_CASE("all problems are reported together") {
  std::string text =
      "[system]\n"
      "d_h = fast\n"
      "heads = 0\n"
      "[train]\n"
      "steps = -3\n"
      "bogus = 1\n";
  std::string msg = error_of(text);
  CHECK(mentions(msg, "line 2"));
  CHECK(mentions(msg, "heads must be >= 1"));
  CHECK(mentions(msg, "steps must be >= 1"));
  CHECK(mentions(msg, "bogus"));
}

TEST_CASE("duplicate keys are rejected with both lines") {
  std::string msg = error_of("[train]\nsteps = 5\nsteps = 9\n");
  CHECK(mentions(msg, "duplicate key 'steps'"));
  CHECK(mentions(msg, "line 3"));
  CHECK(mentions(msg, "line 2"));
}

TEST_CASE("value parsing is strict about types") {
  CHECK(mentions(error_of("[system]\nn = 3x\n"), "expects an integer"));
  CHECK(mentions(error_of("[system]\nseed = -1\n"), "non-negative"));
  CHECK(mentions(error_of("[train]\ntune_inner_in_outer = maybe\n"),
                 "expects true or false"));
  CHECK(mentions(error_of("[task]\ninfer_rounds =\n"), "at least one value"));
  CHECK(mentions(error_of("[verify]\nentropy_levels = a b\n"), "expects numbers"));
}

TEST_CASE("bad names inside values name the offender") {
  CHECK(mentions(error_of("[system]\npattern = circle\n"), "circle"));
  CHECK(mentions(error_of("[system]\nouter_link = 3layer\n"), "3layer"));
  CHECK(mentions(error_of("[task]\nkind = riddles\n"), "riddles"));
}

TEST_CASE("list entries and ranges are validated") {
  CHECK(mentions(error_of("[task]\ninfer_rounds = 0 2\n"),
                 "infer_rounds entries must be >= 1"));
  CHECK(mentions(error_of("[task]\nm_values = -1\n"), "m_values entries must be >= 0"));
  CHECK(mentions(error_of("[verify]\nentropy_levels = 4.0\n"),
                 "entropy_levels must lie in (0, ln vocab)"));
  CHECK(mentions(error_of("[verify]\nlink_trials = 99\n"), "link_trials must be >= 100"));
  CHECK(mentions(error_of("[system]\nvocab = 20\n"), "vocab must be >= 35"));
  CHECK(mentions(error_of("[task]\nlist_len = 11\n"), "list_len must lie in [2, 10]"));
}

TEST_CASE("config files load from disk and report missing paths") {
  std::string path = "/tmp/rmas_config_roundtrip.ini";
  {
    std::ofstream os(path);
    os << "[system]\nn = 4\n[train]\nsteps = 7\n";
  }
  RunConfig cfg = parse_config(path);
  CHECK(cfg.system.n == 4);
  CHECK(cfg.plan.outer.steps == 7);
  std::remove(path.c_str());

  try {
    parse_config("/tmp/rmas_config_does_not_exist.ini");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind == ErrorKind::io);
  }
}
