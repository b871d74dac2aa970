#include "agent.hpp"

#include <algorithm>
#include <cmath>

#include "vocab.hpp"

namespace rmas {

void AgentConfig::validate() const {
  require(d_h > 0, ErrorKind::config, "d_h must be positive");
  require(layers > 0, ErrorKind::config, "layers must be positive");
  require(heads > 0, ErrorKind::config, "heads must be positive");
  require(d_h % heads == 0, ErrorKind::config, "d_h must be divisible by heads");
  require(vocab >= 4, ErrorKind::config, "vocab must be at least 4");
  require(max_pos > 0, ErrorKind::config, "max_pos must be positive");
  require(role_id >= 3 && role_id < vocab, ErrorKind::config,
          "role_id must be a reserved token in [3, vocab)");
}

namespace {

Tensor gaussian(const Shape& s, double sd, Rng& rng) {
  Tensor t = Tensor::zeros(s);
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

void rescale_spectral(Tensor& m, double cap) {
  double sigma = spectral_norm(m);
  if (sigma > cap) {
    double s = cap / sigma;
    for (double& v : m.data) v *= s;
  }
}

}  // namespace

AgentParams init_agent(const AgentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  double sd = 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
  AgentParams p;
  p.cfg = cfg;
  p.embed = gaussian({cfg.vocab, cfg.d_h}, sd, rng);
  p.pos = gaussian({cfg.max_pos, cfg.d_h}, 0.1, rng);
  int dk = cfg.head_dim();
  int dff = cfg.ff_dim();
  p.blocks.resize(cfg.layers);
  for (BlockParams& b : p.blocks) {
    b.ln1_gain = Tensor::filled({cfg.d_h}, 1.0);
    b.ln1_bias = Tensor::zeros({cfg.d_h});
    b.ln2_gain = Tensor::filled({cfg.d_h}, 1.0);
    b.ln2_bias = Tensor::zeros({cfg.d_h});
    for (int h = 0; h < cfg.heads; ++h) {
      b.wq.push_back(gaussian({cfg.d_h, dk}, sd, rng));
      b.wk.push_back(gaussian({cfg.d_h, dk}, sd, rng));
      b.wv.push_back(gaussian({cfg.d_h, dk}, sd, rng));
      b.wo.push_back(gaussian({dk, cfg.d_h}, sd, rng));
    }
    b.wff1 = gaussian({cfg.d_h, dff}, sd, rng);
    b.wff2 = gaussian({dff, cfg.d_h}, sd, rng);
  }
  p.final_gain = Tensor::filled({cfg.d_h}, 1.0);
  p.final_bias = Tensor::zeros({cfg.d_h});
  p.out_proj = gaussian({cfg.d_h, cfg.vocab}, sd, rng);
  rescale_spectral(p.embed, 2.0);
  rescale_spectral(p.out_proj, 2.0);
  return p;
}

Tensor embed_tokens(const AgentParams& p, const std::vector<int>& tokens) {
  require(!tokens.empty(), ErrorKind::dimension, "embed_tokens on empty sequence");
  require(static_cast<int>(tokens.size()) <= p.cfg.max_pos, ErrorKind::capacity,
          "sequence length " + std::to_string(tokens.size()) + " exceeds max_pos " +
              std::to_string(p.cfg.max_pos));
  for (int t : tokens)
    require(t >= 0 && t < p.cfg.vocab, ErrorKind::index,
            "token " + std::to_string(t) + " outside vocabulary");
  int len = static_cast<int>(tokens.size());
  Tensor out = Tensor::zeros({len, p.cfg.d_h});
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < p.cfg.d_h; ++j)
      out.at(i, j) = p.embed.at(tokens[i], j) + p.pos.at(i, j);
  return out;
}

Tensor pos_row(const AgentParams& p, int position) {
  require(position >= 0 && position < p.cfg.max_pos, ErrorKind::capacity,
          "position " + std::to_string(position) + " exceeds max_pos " +
              std::to_string(p.cfg.max_pos));
  return t_slice_rows(p.pos, position, 1);
}

Tensor logits(const AgentParams& p, const Tensor& hidden) {
  return t_matmul(hidden, p.out_proj);
}

AgentNodes bind_agent(Graph& g, const AgentParams& p, bool trainable) {
  AgentNodes n;
  n.embed = g.leaf(p.embed, trainable);
  n.pos = g.leaf(p.pos, trainable);
  for (const BlockParams& b : p.blocks) {
    AgentNodes::Block nb;
    nb.ln1g = g.leaf(b.ln1_gain, trainable);
    nb.ln1b = g.leaf(b.ln1_bias, trainable);
    nb.ln2g = g.leaf(b.ln2_gain, trainable);
    nb.ln2b = g.leaf(b.ln2_bias, trainable);
    for (std::size_t h = 0; h < b.wq.size(); ++h) {
      nb.wq.push_back(g.leaf(b.wq[h], trainable));
      nb.wk.push_back(g.leaf(b.wk[h], trainable));
      nb.wv.push_back(g.leaf(b.wv[h], trainable));
      nb.wo.push_back(g.leaf(b.wo[h], trainable));
    }
    nb.wff1 = g.leaf(b.wff1, trainable);
    nb.wff2 = g.leaf(b.wff2, trainable);
    n.blocks.push_back(std::move(nb));
  }
  n.final_gain = g.leaf(p.final_gain, trainable);
  n.final_bias = g.leaf(p.final_bias, trainable);
  n.out_proj = g.leaf(p.out_proj, trainable);
  return n;
}

NodeId forward_hidden_graph(Graph& g, const AgentParams& p, const AgentNodes& n,
                            NodeId x) {
  require(g.value(x).cols() == p.cfg.d_h, ErrorKind::dimension,
          "forward input width != d_h");
  double scale = 1.0 / std::sqrt(static_cast<double>(p.cfg.head_dim()));
  for (const AgentNodes::Block& b : n.blocks) {
    NodeId a = g.layer_norm_rows(x, b.ln1g, b.ln1b);
    std::vector<NodeId> contribs;
    for (std::size_t h = 0; h < b.wq.size(); ++h) {
      NodeId q = g.matmul(a, b.wq[h]);
      NodeId k = g.matmul(a, b.wk[h]);
      NodeId v = g.matmul(a, b.wv[h]);
      NodeId scores = g.affine(g.matmul(q, g.transpose(k)), scale, 0.0);
      NodeId attn = g.softmax_rows(scores, /*causal=*/true);
      contribs.push_back(g.matmul(g.matmul(attn, v), b.wo[h]));
    }
    x = g.add(x, contribs.size() == 1 ? contribs[0] : g.add_n(contribs));
    NodeId f = g.layer_norm_rows(x, b.ln2g, b.ln2b);
    x = g.add(x, g.matmul(g.gelu(g.matmul(f, b.wff1)), b.wff2));
  }
  return g.layer_norm_rows(x, n.final_gain, n.final_bias);
}

GraphSeq::GraphSeq(Graph& g, const AgentParams& p, const AgentNodes& n)
    : g_(g), p_(p), n_(n) {}

void GraphSeq::push_tokens(const std::vector<int>& tokens) {
  require(len_ + static_cast<int>(tokens.size()) <= p_.cfg.max_pos,
          ErrorKind::capacity, "sequence exceeds max_pos");
  for (int t : tokens)
    require(t >= 0 && t < p_.cfg.vocab, ErrorKind::index, "token outside vocabulary");
  // Frozen rows: token embedding + positional, computed at value level.
  Tensor rows = Tensor::zeros({static_cast<int>(tokens.size()), p_.cfg.d_h});
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (int j = 0; j < p_.cfg.d_h; ++j)
      rows.at(static_cast<int>(i), j) =
          p_.embed.at(tokens[i], j) + p_.pos.at(len_ + static_cast<int>(i), j);
  rows_.push_back(g_.leaf(std::move(rows)));
  len_ += static_cast<int>(tokens.size());
}

void GraphSeq::push_vector(NodeId base_row) {
  require(len_ < p_.cfg.max_pos, ErrorKind::capacity, "sequence exceeds max_pos");
  require(g_.value(base_row).rows() == 1 && g_.value(base_row).cols() == p_.cfg.d_h,
          ErrorKind::dimension, "pushed row must be [1 x d_h]");
  NodeId prow = g_.leaf(pos_row(p_, len_));
  rows_.push_back(g_.add(base_row, prow));
  len_ += 1;
}

NodeId GraphSeq::forward() {
  require(len_ > 0, ErrorKind::dimension, "forward on empty sequence");
  if (cached_len_ == len_) return cached_h_;
  NodeId x = rows_.size() == 1 ? rows_[0] : g_.concat_rows(rows_);
  cached_h_ = forward_hidden_graph(g_, p_, n_, x);
  cached_len_ = len_;
  return cached_h_;
}

NodeId GraphSeq::last_hidden() { return g_.slice_rows(forward(), len_ - 1, 1); }

std::vector<NodeId> generate_latent_graph(Graph& g, GraphSeq& seq,
                                          const LinkParams& inner,
                                          const LinkNodes& inner_nodes, int m) {
  require(m >= 0, ErrorKind::config, "latent budget must be non-negative");
  require(inner.kind == LinkKind::inner, ErrorKind::config,
          "generation requires an inner step link");
  std::vector<NodeId> latents;
  NodeId h = seq.last_hidden();
  latents.push_back(h);
  for (int j = 0; j < m; ++j) {
    NodeId e = apply_link_graph(g, inner, inner_nodes, h);
    seq.push_vector(e);
    h = seq.last_hidden();
    latents.push_back(h);
  }
  return latents;
}

AgentStream::AgentStream(const AgentParams& p, MacCounters* macs)
    : p_(p), macs_(macs) {
  kcache_.assign(p.cfg.layers, std::vector<std::vector<double>>(p.cfg.heads));
  vcache_.assign(p.cfg.layers, std::vector<std::vector<double>>(p.cfg.heads));
}

namespace {

void layer_norm_row(const std::vector<double>& x, const Tensor& gain,
                    const Tensor& bias, std::vector<double>& out) {
  int d = static_cast<int>(x.size());
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= d;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= d;
  double inv = 1.0 / std::sqrt(var + 1e-5);
  out.resize(d);
  for (int j = 0; j < d; ++j)
    out[j] = (x[j] - mu) * inv * gain.data[j] + bias.data[j];
}

// row [1 x r] times matrix [r x c]
void vecmat(const std::vector<double>& x, const Tensor& w, std::vector<double>& out) {
  int r = w.rows(), c = w.cols();
  out.assign(c, 0.0);
  for (int i = 0; i < r; ++i) {
    double xv = x[i];
    const double* wr = &w.data[static_cast<std::size_t>(i) * c];
    for (int j = 0; j < c; ++j) out[j] += xv * wr[j];
  }
}

}  // namespace

std::vector<double> AgentStream::push(const std::vector<double>& base) {
  require(static_cast<int>(base.size()) == p_.cfg.d_h, ErrorKind::dimension,
          "stream row width != d_h");
  require(pos_ < p_.cfg.max_pos, ErrorKind::capacity,
          "stream length exceeds max_pos");
  int d = p_.cfg.d_h, dk = p_.cfg.head_dim(), heads = p_.cfg.heads;
  int dff = p_.cfg.ff_dim();
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<double> x(d);
  for (int j = 0; j < d; ++j) x[j] = base[j] + p_.pos.at(pos_, j);

  std::vector<double> a, q, k, v, f, z, tmp;
  for (int b = 0; b < p_.cfg.layers; ++b) {
    const BlockParams& blk = p_.blocks[b];
    layer_norm_row(x, blk.ln1_gain, blk.ln1_bias, a);
    std::vector<double> attn_out(d, 0.0);
    for (int h = 0; h < heads; ++h) {
      vecmat(a, blk.wq[h], q);
      vecmat(a, blk.wk[h], k);
      vecmat(a, blk.wv[h], v);
      auto& kc = kcache_[b][h];
      auto& vc = vcache_[b][h];
      kc.insert(kc.end(), k.begin(), k.end());
      vc.insert(vc.end(), v.begin(), v.end());
      int t = pos_ + 1;  // cached positions including self
      std::vector<double> scores(t);
      double mx = -1e300;
      for (int i = 0; i < t; ++i) {
        double s = 0.0;
        const double* kr = &kc[static_cast<std::size_t>(i) * dk];
        for (int j = 0; j < dk; ++j) s += q[j] * kr[j];
        scores[i] = s * scale;
        mx = std::max(mx, scores[i]);
      }
      double zsum = 0.0;
      for (int i = 0; i < t; ++i) {
        scores[i] = std::exp(scores[i] - mx);
        zsum += scores[i];
      }
      std::vector<double> ctx(dk, 0.0);
      for (int i = 0; i < t; ++i) {
        double w = scores[i] / zsum;
        const double* vr = &vc[static_cast<std::size_t>(i) * dk];
        for (int j = 0; j < dk; ++j) ctx[j] += w * vr[j];
      }
      vecmat(ctx, blk.wo[h], tmp);
      for (int j = 0; j < d; ++j) attn_out[j] += tmp[j];
      if (macs_)
        macs_->attention += static_cast<std::uint64_t>(3 * d * dk)  // q,k,v
                            + static_cast<std::uint64_t>(2 * t * dk)  // scores+ctx
                            + static_cast<std::uint64_t>(dk * d);     // output
    }
    for (int j = 0; j < d; ++j) x[j] += attn_out[j];
    layer_norm_row(x, blk.ln2_gain, blk.ln2_bias, f);
    vecmat(f, blk.wff1, z);
    for (double& zv : z) zv = gelu_scalar(zv);
    vecmat(z, blk.wff2, tmp);
    for (int j = 0; j < d; ++j) x[j] += tmp[j];
    if (macs_) macs_->feedforward += static_cast<std::uint64_t>(2) * d * dff;
  }
  pos_ += 1;
  std::vector<double> hidden;
  layer_norm_row(x, p_.final_gain, p_.final_bias, hidden);
  for (double hv : hidden)
    require(std::isfinite(hv), ErrorKind::numeric, "non-finite hidden state");
  return hidden;
}

std::vector<double> AgentStream::push_token(int token) {
  require(token >= 0 && token < p_.cfg.vocab, ErrorKind::index,
          "token outside vocabulary");
  std::vector<double> base(p_.cfg.d_h);
  for (int j = 0; j < p_.cfg.d_h; ++j) base[j] = p_.embed.at(token, j);
  return push(base);
}

std::vector<double> AgentStream::token_logits(const std::vector<double>& hidden) {
  std::vector<double> out;
  vecmat(hidden, p_.out_proj, out);
  if (macs_) {
    macs_->projection += static_cast<std::uint64_t>(p_.cfg.d_h) * p_.cfg.vocab;
    macs_->projection_calls += 1;
  }
  return out;
}

int pick_token(const std::vector<double>& logits, double temperature, Rng& rng) {
  require(!logits.empty(), ErrorKind::dimension, "pick_token needs logits");
  require(temperature >= 0.0, ErrorKind::config, "temperature must be >= 0");
  if (temperature == 0.0) {
    int token = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
      if (logits[j] > logits[token]) token = static_cast<int>(j);
    return token;
  }
  std::vector<double> lg = logits;
  double mx = *std::max_element(lg.begin(), lg.end());
  double z = 0.0;
  for (double& v : lg) {
    v = std::exp((v - mx) / temperature);
    z += v;
  }
  double u = rng.uniform() * z;
  int token = static_cast<int>(lg.size()) - 1;
  double acc = 0.0;
  for (std::size_t j = 0; j < lg.size(); ++j) {
    acc += lg[j];
    if (u < acc) {
      token = static_cast<int>(j);
      break;
    }
  }
  return token;
}

std::vector<int> decode_stream(AgentStream& stream, std::vector<double> hidden,
                               int max_tokens, double temperature,
                               std::uint64_t seed, bool fixed_budget) {
  require(max_tokens >= 1, ErrorKind::config, "decode budget must be >= 1");
  require(temperature >= 0.0, ErrorKind::config, "temperature must be >= 0");
  Rng rng(seed);
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_tokens) {
    std::vector<double> lg = stream.token_logits(hidden);
    int token = pick_token(lg, temperature, rng);
    out.push_back(token);
    if (!fixed_budget && token == vocab::EOS) break;
    if (static_cast<int>(out.size()) == max_tokens) break;
    hidden = stream.push_token(token);
  }
  return out;
}

std::vector<int> decode_text(const AgentParams& p, const Tensor& context_rows,
                             int max_tokens, double temperature, std::uint64_t seed,
                             MacCounters* macs) {
  require(context_rows.rows() >= 1, ErrorKind::dimension,
          "decode_text requires a non-empty context");
  AgentStream stream(p, macs);
  std::vector<double> hidden;
  for (int i = 0; i < context_rows.rows(); ++i) {
    std::vector<double> row(p.cfg.d_h);
    for (int j = 0; j < p.cfg.d_h; ++j) row[j] = context_rows.at(i, j);
    hidden = stream.push(row);
  }
  return decode_stream(stream, hidden, max_tokens, temperature, seed, false);
}

}  // namespace rmas
