#include "rmas.h"

#include <cstring>
#include <iostream>
#include <new>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "harness.hpp"
#include "workflows.hpp"

// Opaque handle behind the C interface: the system plus the build settings
// needed to write a descriptor-complete checkpoint.
struct rmas_system {
  rmas::SystemSpec system;
  rmas::BuildConfig built;
};

namespace {

thread_local std::string g_error;

rmas_status set_error(const rmas::Error& e) {
  g_error = e.what();
  return e.kind == rmas::ErrorKind::config ? RMAS_CONFIG_ERROR
                                           : RMAS_RUNTIME_ERROR;
}

rmas_status set_error(const std::exception& e) {
  g_error = e.what();
  return RMAS_RUNTIME_ERROR;
}

rmas_status require_args(bool ok) {
  if (!ok) g_error = "null argument";
  return ok ? RMAS_OK : RMAS_CONFIG_ERROR;
}

}  // namespace

extern "C" {

const char* rmas_version(void) { return "1.0.0"; }

const char* rmas_last_error(void) { return g_error.c_str(); }

int rmas_run_command(int argc, const char* const* argv) {
  g_error.clear();
  std::vector<std::string> args;
  args.reserve(argc > 0 ? static_cast<std::size_t>(argc) : 0);
  for (int i = 0; i < argc; ++i) args.emplace_back(argv[i] ? argv[i] : "");
  try {
    return rmas::run_command(args, std::cout, std::cerr);
  } catch (const std::exception& e) {
    g_error = e.what();
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

rmas_status rmas_system_build(const char* config_text, rmas_system** out) {
  g_error.clear();
  if (rmas_status st = require_args(config_text && out)) return st;
  try {
    rmas::RunConfig cfg = rmas::parse_config_text(config_text);
    auto* handle = new rmas_system;
    handle->built = cfg.system;
    handle->system = rmas::build_system(cfg.system);
    *out = handle;
    return RMAS_OK;
  } catch (const rmas::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

rmas_status rmas_system_load(const char* path, rmas_system** out) {
  g_error.clear();
  if (rmas_status st = require_args(path && out)) return st;
  try {
    rmas::LoadedSystem ls = rmas::load_checkpoint(path);
    auto* handle = new rmas_system;
    handle->built = ls.built;
    handle->system = std::move(ls.system);
    *out = handle;
    return RMAS_OK;
  } catch (const rmas::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

rmas_status rmas_system_save(const rmas_system* s, const char* path) {
  g_error.clear();
  if (rmas_status st = require_args(s && path)) return st;
  try {
    // Parameter enumeration needs mutable pointers; saving never mutates.
    auto* mutable_s = const_cast<rmas_system*>(s);
    rmas::save_checkpoint(mutable_s->system, s->built, path);
    return RMAS_OK;
  } catch (const rmas::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

rmas_status rmas_system_describe(const rmas_system* s, rmas_system_info* out) {
  g_error.clear();
  if (rmas_status st = require_args(s && out)) return st;
  out->pattern = static_cast<int32_t>(s->built.pattern);
  out->rounds = s->system.n;
  out->latent_budget = s->system.m;
  out->d_h = s->built.d_h;
  out->layers = s->built.layers;
  out->heads = s->built.heads;
  out->vocab = s->built.vocab;
  out->agents = static_cast<int32_t>(s->system.agents.size());
  return RMAS_OK;
}

void rmas_system_free(rmas_system* s) { delete s; }

rmas_status rmas_system_train(rmas_system* s, const char* config_text,
                              double* final_loss) {
  g_error.clear();
  if (rmas_status st = require_args(s && config_text)) return st;
  try {
    rmas::RunConfig cfg = rmas::parse_config_text(config_text);
    std::vector<rmas::TaskExample> raw = rmas::generate_dataset(
        cfg.task, cfg.train_size, cfg.data_seed, rmas::Split::train);
    std::vector<rmas::TrainExample> data;
    data.reserve(raw.size());
    for (const rmas::TaskExample& ex : raw)
      data.push_back(
          rmas::build_role_targets(ex, s->system.pattern, cfg.task.kind));
    std::vector<rmas::LossPoint> curve =
        rmas::train_system(s->system, data, cfg.plan);
    if (final_loss) {
      double last = 0.0;
      for (const rmas::LossPoint& p : curve)
        if (p.stage == "outer") last = p.loss;
      *final_loss = last;
    }
    return RMAS_OK;
  } catch (const rmas::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

rmas_status rmas_system_infer(const rmas_system* s, const int32_t* question,
                              size_t question_len, int32_t infer_rounds,
                              uint64_t seed, int32_t decode_budget,
                              int32_t** answer, size_t* answer_len) {
  g_error.clear();
  if (rmas_status st = require_args(s && answer && answer_len &&
                                    (question || question_len == 0)))
    return st;
  try {
    rmas::SystemSpec run = s->system;
    if (infer_rounds > 0) run.n = infer_rounds;
    std::vector<int> q(question, question + question_len);
    rmas::RunOptions ro;
    ro.seed = seed;
    if (decode_budget > 0) ro.decode_budget = decode_budget;
    rmas::RecursionTrace tr = rmas::run_recursion(run, q, ro);
    std::vector<int> canon = rmas::canonical_answer(tr.answer);
    auto* buf = new int32_t[canon.empty() ? 1 : canon.size()];
    for (std::size_t i = 0; i < canon.size(); ++i)
      buf[i] = static_cast<int32_t>(canon[i]);
    *answer = buf;
    *answer_len = canon.size();
    return RMAS_OK;
  } catch (const rmas::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

void rmas_ids_free(int32_t* ids) { delete[] ids; }

}  // extern "C"
