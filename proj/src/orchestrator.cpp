#include "orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <utility>

#include "vocab.hpp"

namespace rmas {

const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::sequential: return "sequential";
    case Pattern::mixture: return "mixture";
    case Pattern::distillation: return "distillation";
    case Pattern::deliberation: return "deliberation";
    case Pattern::self_loop: return "self_loop";
  }
  fail(ErrorKind::config, "unknown pattern");
}

Pattern pattern_from_name(const std::string& name) {
  if (name == "sequential") return Pattern::sequential;
  if (name == "mixture") return Pattern::mixture;
  if (name == "distillation") return Pattern::distillation;
  if (name == "deliberation") return Pattern::deliberation;
  if (name == "self_loop") return Pattern::self_loop;
  fail(ErrorKind::config, "unknown pattern '" + name + "'");
}

namespace {

std::vector<std::string> pattern_roles(Pattern p) {
  switch (p) {
    case Pattern::sequential: return {"planner", "critic", "solver"};
    case Pattern::mixture:
      return {"specialist_arith", "specialist_seq", "specialist_lookup",
              "summarizer"};
    case Pattern::distillation: return {"expert", "learner"};
    case Pattern::deliberation: return {"reflector", "tool_caller"};
    case Pattern::self_loop: return {"solo"};
  }
  fail(ErrorKind::config, "unknown pattern");
}

// Edge list as (src, dst, closing), within-round edges first.
std::vector<std::tuple<int, int, bool>> pattern_edges(Pattern p) {
  switch (p) {
    case Pattern::sequential:
      return {{0, 1, false}, {1, 2, false}, {2, 0, true}};
    case Pattern::mixture:
      return {{0, 3, false}, {1, 3, false}, {2, 3, false},
              {3, 0, true},  {3, 1, true},  {3, 2, true}};
    case Pattern::distillation: return {{0, 1, false}, {1, 0, true}};
    case Pattern::deliberation: return {{0, 1, false}, {1, 0, true}};
    case Pattern::self_loop: return {{0, 0, true}};
  }
  fail(ErrorKind::config, "unknown pattern");
}

[[noreturn]] void rethrow_located(const Error& e, int round, int agent,
                                  const std::string& role) {
  fail(e.kind, "round " + std::to_string(round) + ", agent " +
                   std::to_string(agent) + " (" + role + "): " + e.what());
}

}  // namespace

std::vector<int> agent_context(const SystemSpec& s, int agent,
                               const std::vector<int>& question) {
  std::vector<int> ctx = {vocab::BOS, s.agents[agent].params.cfg.role_id};
  ctx.insert(ctx.end(), question.begin(), question.end());
  return ctx;
}

void validate_system(const SystemSpec& s) {
  std::vector<std::string> issues;
  auto bad = [&](const std::string& msg) { issues.push_back(msg); };

  if (s.n < 1) bad("rounds n must be >= 1");
  if (s.m < 0) bad("latent budget m must be >= 0");
  const int N = static_cast<int>(s.agents.size());
  if (N == 0) bad("system has no agents");
  for (int i = 0; i < N; ++i) {
    const AgentSlot& a = s.agents[i];
    const int d = a.params.cfg.d_h;
    if (a.role.empty()) bad("agent " + std::to_string(i) + " has no role label");
    if (a.inner.d_src != d || a.inner.d_tgt != d)
      bad("agent " + std::to_string(i) + " step link dims (" +
          std::to_string(a.inner.d_src) + "->" + std::to_string(a.inner.d_tgt) +
          ") do not match width " + std::to_string(d));
  }
  if (s.decoder != N - 1)
    bad("decoder must be the last agent (got " + std::to_string(s.decoder) + ")");

  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    const EdgeSpec& ed = s.edges[e];
    if (ed.src < 0 || ed.src >= N || ed.dst < 0 || ed.dst >= N) {
      bad("edge " + std::to_string(e) + " references a missing agent");
      continue;
    }
    if (!ed.closing && ed.src >= ed.dst)
      bad("edge " + std::to_string(e) + " must run forward within a round");
    if (ed.link.d_src != s.agents[ed.src].params.cfg.d_h)
      bad("edge " + std::to_string(e) + " link d_src != source agent width");
    if (ed.link.d_tgt != s.agents[ed.dst].params.cfg.d_h)
      bad("edge " + std::to_string(e) + " link d_tgt != target agent width");
  }

  // Exact topology per pattern.
  if (N > 0) {
    auto want = pattern_edges(s.pattern);
    bool shape_ok = want.size() == s.edges.size() &&
                    N == static_cast<int>(pattern_roles(s.pattern).size());
    if (shape_ok)
      for (std::size_t e = 0; e < want.size(); ++e) {
        auto [src, dst, closing] = want[e];
        if (s.edges[e].src != src || s.edges[e].dst != dst ||
            s.edges[e].closing != closing)
          shape_ok = false;
      }
    if (!shape_ok)
      bad(std::string("edge list does not match the ") + pattern_name(s.pattern) +
          " pattern");
  }

  if (!issues.empty()) {
    std::string msg = "invalid system:";
    for (const std::string& is : issues) msg += "\n  - " + is;
    fail(ErrorKind::config, msg);
  }
}

SystemSpec build_system(const BuildConfig& bc) {
  require(bc.d_h > 0 && bc.vocab >= vocab::MIN_VOCAB, ErrorKind::config,
          "build_system needs d_h > 0 and vocab >= " +
              std::to_string(vocab::MIN_VOCAB));
  SystemSpec s;
  s.pattern = bc.pattern;
  s.n = bc.n;
  s.m = bc.m;

  std::vector<std::string> roles = pattern_roles(bc.pattern);
  const int N = static_cast<int>(roles.size());
  for (int i = 0; i < N; ++i) {
    AgentConfig cfg;
    cfg.d_h = bc.d_h;
    cfg.layers = bc.layers;
    cfg.heads = bc.heads;
    cfg.vocab = bc.vocab;
    cfg.max_pos = bc.max_pos;
    cfg.role_id = vocab::role(i);
    if (bc.pattern == Pattern::distillation && roles[i] == "expert") {
      cfg.d_h = bc.d_h * bc.expert_scale;
      cfg.layers = bc.layers + 1;
    }
    AgentSlot slot;
    slot.params = init_agent(cfg, derive_seed(bc.seed, 100 + i));
    slot.role = roles[i];
    int d_mid = bc.d_mid > 0 ? bc.d_mid : cfg.d_h;
    slot.inner = init_link(bc.inner_kind, cfg.d_h, d_mid, cfg.d_h,
                           derive_seed(bc.seed, 200 + i));
    s.agents.push_back(std::move(slot));
  }

  auto edges = pattern_edges(bc.pattern);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [src, dst, closing] = edges[e];
    EdgeSpec ed;
    ed.src = src;
    ed.dst = dst;
    ed.closing = closing;
    ed.link = init_link(bc.outer_kind, s.agents[src].params.cfg.d_h, bc.d_mid,
                        s.agents[dst].params.cfg.d_h,
                        derive_seed(bc.seed, 300 + static_cast<int>(e)));
    s.edges.push_back(std::move(ed));
  }
  s.decoder = N - 1;
  validate_system(s);
  return s;
}

namespace {

void push_link_params(std::vector<NamedParam>& out, const std::string& prefix,
                      LinkParams& l) {
  if (!l.w1.data.empty()) out.push_back({prefix + ".w1", &l.w1});
  if (l.has_w2()) out.push_back({prefix + ".w2", &l.w2});
  if (l.has_w3()) out.push_back({prefix + ".w3", &l.w3});
}

}  // namespace

std::vector<NamedParam> enumerate_agent_params(SystemSpec& s) {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    AgentParams& p = s.agents[i].params;
    std::string ap = "agent" + std::to_string(i);
    out.push_back({ap + ".embed", &p.embed});
    out.push_back({ap + ".pos", &p.pos});
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
      BlockParams& blk = p.blocks[b];
      std::string bp = ap + ".blk" + std::to_string(b);
      out.push_back({bp + ".ln1_gain", &blk.ln1_gain});
      out.push_back({bp + ".ln1_bias", &blk.ln1_bias});
      out.push_back({bp + ".ln2_gain", &blk.ln2_gain});
      out.push_back({bp + ".ln2_bias", &blk.ln2_bias});
      for (std::size_t h = 0; h < blk.wq.size(); ++h) {
        std::string hp = bp + ".h" + std::to_string(h);
        out.push_back({hp + ".wq", &blk.wq[h]});
        out.push_back({hp + ".wk", &blk.wk[h]});
        out.push_back({hp + ".wv", &blk.wv[h]});
        out.push_back({hp + ".wo", &blk.wo[h]});
      }
      out.push_back({bp + ".wff1", &blk.wff1});
      out.push_back({bp + ".wff2", &blk.wff2});
    }
    out.push_back({ap + ".final_gain", &p.final_gain});
    out.push_back({ap + ".final_bias", &p.final_bias});
    out.push_back({ap + ".out_proj", &p.out_proj});
  }
  return out;
}

std::vector<NamedParam> enumerate_inner_params(SystemSpec& s) {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < s.agents.size(); ++i)
    push_link_params(out, "inner" + std::to_string(i), s.agents[i].inner);
  return out;
}

std::vector<NamedParam> enumerate_outer_params(SystemSpec& s) {
  std::vector<NamedParam> out;
  for (std::size_t e = 0; e < s.edges.size(); ++e)
    push_link_params(out, "edge" + std::to_string(e), s.edges[e].link);
  return out;
}

std::vector<NamedParam> enumerate_params(SystemSpec& s) {
  std::vector<NamedParam> out = enumerate_agent_params(s);
  for (NamedParam& p : enumerate_inner_params(s)) out.push_back(p);
  for (NamedParam& p : enumerate_outer_params(s)) out.push_back(p);
  return out;
}

// ---- tool stub ----

namespace {

// Recursive-descent integer evaluator over token spans:
//   expr   := term (('+'|'-') term)*
//   term   := factor ('*' factor)*
//   factor := digits | '-' factor | '(' expr ')'
struct ToolParser {
  const std::vector<int>& t;
  std::size_t i = 0;
  bool ok = true;

  bool at(int tok) const { return i < t.size() && t[i] == tok; }

  long long factor() {
    if (!ok) return 0;
    if (at(vocab::MINUS)) {
      ++i;
      return -factor();
    }
    if (at(vocab::LPAREN)) {
      ++i;
      long long v = expr();
      if (!at(vocab::RPAREN)) {
        ok = false;
        return 0;
      }
      ++i;
      return v;
    }
    if (i < t.size() && vocab::is_digit(t[i])) {
      long long v = 0;
      while (i < t.size() && vocab::is_digit(t[i])) {
        v = v * 10 + vocab::digit_value(t[i]);
        ++i;
      }
      return v;
    }
    ok = false;
    return 0;
  }

  long long term() {
    long long v = factor();
    while (ok && at(vocab::TIMES)) {
      ++i;
      v *= factor();
    }
    return v;
  }

  long long expr() {
    long long v = term();
    while (ok && (at(vocab::PLUS) || at(vocab::MINUS))) {
      bool plus = at(vocab::PLUS);
      ++i;
      long long r = term();
      v = plus ? v + r : v - r;
    }
    return v;
  }
};

}  // namespace

std::vector<int> invoke_tool_stub(const std::vector<int>& span) {
  ToolParser p{span};
  long long v = p.expr();
  if (!p.ok || p.i != span.size() || span.empty()) return {vocab::TOOL_ERR};
  std::vector<int> out;
  if (v < 0) {
    out.push_back(vocab::MINUS);
    v = -v;
  }
  std::string digits = std::to_string(v);
  for (char c : digits) out.push_back(vocab::digit(c - '0'));
  return out;
}

std::vector<int> tool_splice_result(const std::vector<int>& emitted) {
  require(!emitted.empty() && emitted.back() == vocab::TOOL_CLOSE,
          ErrorKind::dimension, "splice expects a tool-close terminated span");
  int open_at = -1;
  for (std::size_t k = 0; k + 1 < emitted.size(); ++k) {
    if (emitted[k] == vocab::TOOL_OPEN) open_at = static_cast<int>(k);
    else if (emitted[k] == vocab::TOOL_CLOSE) open_at = -1;
  }
  if (open_at < 0) return {vocab::TOOL_ERR};
  std::vector<int> span(emitted.begin() + open_at + 1, emitted.end() - 1);
  return invoke_tool_stub(span);
}

std::vector<int> decode_with_tools(AgentStream& stream, std::vector<double> hidden,
                                   const RunOptions& opt) {
  require(opt.decode_budget >= 1, ErrorKind::config, "decode budget must be >= 1");
  Rng rng(opt.seed);
  std::vector<int> out;
  int emitted = 0;
  while (emitted < opt.decode_budget) {
    int token = pick_token(stream.token_logits(hidden), opt.temperature, rng);
    out.push_back(token);
    ++emitted;
    if (!opt.fixed_budget && token == vocab::EOS) break;
    if (token == vocab::TOOL_CLOSE) {
      std::vector<int> result = tool_splice_result(out);
      hidden = stream.push_token(token);
      for (int rt : result) {
        out.push_back(rt);
        hidden = stream.push_token(rt);
      }
      continue;
    }
    if (emitted == opt.decode_budget) break;
    hidden = stream.push_token(token);
  }
  return out;
}

// ---- value-level execution ----

namespace {

struct Delivery {
  std::size_t edge;
  Tensor latent_rows;       // latent mode: link-mapped rows
  std::vector<int> tokens;  // text mode: decoded tokens
};

std::vector<double> tensor_row_vec(const Tensor& t, int i) {
  std::vector<double> out(t.cols());
  for (int j = 0; j < t.cols(); ++j) out[j] = t.at(i, j);
  return out;
}

void accumulate(MacCounters& total, const MacCounters& c) {
  total.attention += c.attention;
  total.feedforward += c.feedforward;
  total.step_link += c.step_link;
  total.projection += c.projection;
  total.transfer += c.transfer;
  total.projection_calls += c.projection_calls;
}

RecursionTrace run_loop(const SystemSpec& s, const std::vector<int>& question,
                        const RunOptions& opt, bool text_mode) {
  validate_system(s);
  const int N = static_cast<int>(s.agents.size());
  RecursionTrace tr;
  tr.edge_fires.assign(s.edges.size(), 0);

  std::vector<std::vector<Delivery>> inbox(N), inbox_next(N);

  for (int r = 1; r <= s.n; ++r) {
    inbox.swap(inbox_next);
    for (auto& box : inbox_next) box.clear();

    for (int i = 0; i < N; ++i) {
      const AgentSlot& slot = s.agents[i];
      CellTrace cell;
      cell.round = r;
      cell.agent = i;
      cell.role = slot.role;
      auto t0 = std::chrono::steady_clock::now();
      try {
        AgentStream stream(slot.params, &cell.macs);
        std::vector<double> h;
        std::vector<int> ctx = agent_context(s, i, question);
        for (int tok : ctx) h = stream.push_token(tok);
        cell.context_len = static_cast<int>(ctx.size());

        std::sort(inbox[i].begin(), inbox[i].end(),
                  [](const Delivery& a, const Delivery& b) { return a.edge < b.edge; });
        for (const Delivery& d : inbox[i]) {
          if (text_mode)
            for (int tok : d.tokens) h = stream.push_token(tok);
          else
            for (int k = 0; k < d.latent_rows.rows(); ++k)
              h = stream.push(tensor_row_vec(d.latent_rows, k));
        }

        bool tools = s.pattern == Pattern::deliberation && slot.role == "tool_caller";
        if (text_mode) {
          RunOptions dopt = opt;
          dopt.seed = derive_seed(opt.seed, r * 1000 + i);
          cell.decoded = tools ? decode_with_tools(stream, h, dopt)
                               : decode_stream(stream, h, dopt.decode_budget,
                                               dopt.temperature, dopt.seed,
                                               dopt.fixed_budget);
        } else {
          Tensor lat = Tensor::zeros({s.m + 1, slot.params.cfg.d_h});
          for (int j = 0; j < lat.cols(); ++j) lat.at(0, j) = h[j];
          for (int step = 1; step <= s.m; ++step) {
            Tensor v = apply_link(slot.inner, Tensor::row_vector(h));
            cell.macs.step_link += link_macs(slot.inner);
            h = stream.push(tensor_row_vec(v, 0));
            for (int j = 0; j < lat.cols(); ++j) lat.at(step, j) = h[j];
          }
          cell.latents = std::move(lat);
          if (r == s.n && i == s.decoder) {
            RunOptions dopt = opt;
            cell.decoded = tools ? decode_with_tools(stream, h, dopt)
                                 : decode_stream(stream, h, dopt.decode_budget,
                                                 dopt.temperature, dopt.seed,
                                                 dopt.fixed_budget);
          }
        }

        // Dispatch along out-edges; closing edges skip the final round.
        for (std::size_t e = 0; e < s.edges.size(); ++e) {
          const EdgeSpec& ed = s.edges[e];
          if (ed.src != i) continue;
          if (ed.closing && r == s.n) continue;
          Delivery d;
          d.edge = e;
          if (text_mode) {
            d.tokens = cell.decoded;
          } else {
            d.latent_rows = apply_link(ed.link, cell.latents);
            cell.macs.transfer +=
                static_cast<std::uint64_t>(cell.latents.rows()) * link_macs(ed.link);
          }
          tr.edge_fires[e] += 1;
          (ed.closing ? inbox_next : inbox)[ed.dst].push_back(std::move(d));
        }
      } catch (const Error& e) {
        rethrow_located(e, r, i, slot.role);
      }
      if (opt.timing) {
        auto t1 = std::chrono::steady_clock::now();
        cell.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
      }
      tr.emitted_tokens += cell.decoded.size();
      accumulate(tr.totals, cell.macs);
      tr.cells.push_back(std::move(cell));
    }
  }

  const CellTrace& last = tr.cells[static_cast<std::size_t>(s.n - 1) * N + s.decoder];
  tr.answer = last.decoded;
  return tr;
}

}  // namespace

RecursionTrace run_recursion(const SystemSpec& s, const std::vector<int>& question,
                             const RunOptions& opt) {
  return run_loop(s, question, opt, /*text_mode=*/false);
}

RecursionTrace run_text_baseline(const SystemSpec& s, const std::vector<int>& question,
                                 const RunOptions& opt) {
  return run_loop(s, question, opt, /*text_mode=*/true);
}

// ---- graph-level execution ----

SystemNodes bind_system(Graph& g, const SystemSpec& s, bool outer_trainable,
                        bool inner_trainable, bool agents_trainable) {
  SystemNodes n;
  for (const AgentSlot& a : s.agents) {
    n.agents.push_back(bind_agent(g, a.params, agents_trainable));
    n.inner.push_back(bind_link(g, a.inner, inner_trainable));
  }
  for (const EdgeSpec& e : s.edges) n.outer.push_back(bind_link(g, e.link, outer_trainable));
  return n;
}

GraphUnroll unroll_recursion_graph(Graph& g, const SystemSpec& s,
                                   const SystemNodes& nodes,
                                   const std::vector<int>& question,
                                   bool text_surrogate) {
  validate_system(s);
  const int N = static_cast<int>(s.agents.size());
  if (text_surrogate)
    for (const EdgeSpec& e : s.edges)
      require(s.agents[e.src].params.cfg.d_h == s.agents[e.dst].params.cfg.d_h,
              ErrorKind::config,
              "text-surrogate transfer requires equal agent widths");

  GraphUnroll u;
  struct NodeDelivery {
    std::size_t edge;
    NodeId rows;
    int row_count;
  };
  std::vector<std::vector<NodeDelivery>> inbox(N), inbox_next(N);
  std::vector<NodeId> block_of(N, -1);  // this round's latent block per agent

  for (int r = 1; r <= s.n; ++r) {
    inbox.swap(inbox_next);
    for (auto& box : inbox_next) box.clear();

    for (int i = 0; i < N; ++i) {
      const AgentSlot& slot = s.agents[i];
      try {
        auto seq = std::make_unique<GraphSeq>(g, slot.params, nodes.agents[i]);
        seq->push_tokens(agent_context(s, i, question));

        std::sort(inbox[i].begin(), inbox[i].end(),
                  [](const NodeDelivery& a, const NodeDelivery& b) {
                    return a.edge < b.edge;
                  });
        for (const NodeDelivery& d : inbox[i])
          for (int k = 0; k < d.row_count; ++k)
            seq->push_vector(g.slice_rows(d.rows, k, 1));

        std::vector<NodeId> lat =
            generate_latent_graph(g, *seq, slot.inner, nodes.inner[i], s.m);
        NodeId block = g.concat_rows(lat);
        block_of[i] = block;

        for (std::size_t e = 0; e < s.edges.size(); ++e) {
          const EdgeSpec& ed = s.edges[e];
          if (ed.src != i) continue;
          if (ed.closing && r == s.n) continue;
          NodeId mapped =
              text_surrogate
                  ? apply_text_link_graph(g, nodes.agents[i].out_proj,
                                          nodes.agents[i].embed, block)
                  : apply_link_graph(g, ed.link, nodes.outer[e], block);
          u.transfers.push_back(mapped);
          u.transfer_round.push_back(r);
          u.transfer_edge.push_back(static_cast<int>(e));
          (ed.closing ? inbox_next : inbox)[ed.dst].push_back(
              {e, mapped, s.m + 1});
        }

        u.latents.push_back(std::move(lat));
        u.seqs.push_back(std::move(seq));
        if (r == s.n && i == s.decoder)
          u.decoder_cell = static_cast<int>(u.seqs.size()) - 1;
      } catch (const Error& e) {
        rethrow_located(e, r, i, slot.role);
      }
    }
  }
  return u;
}

}  // namespace rmas
