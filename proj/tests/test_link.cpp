#include <cmath>

#include "doctest.h"
#include "link.hpp"
#include "test_util.hpp"

using namespace rmas;
using testutil::random_tensor;

namespace {

// Independent reference: apply one vector through the link with scalar loops.
std::vector<double> apply_ref(const LinkParams& p, const std::vector<double>& h) {
  auto matvec = [](const std::vector<double>& x, const Tensor& w) {
    std::vector<double> out(w.cols(), 0.0);
    for (int j = 0; j < w.cols(); ++j)
      for (int i = 0; i < w.rows(); ++i) out[j] += x[i] * w.at(i, j);
    return out;
  };
  std::vector<double> out(p.d_tgt, 0.0);
  if (p.kind == LinkKind::inner) {
    auto z = matvec(h, p.w1);
    for (double& v : z) v = gelu_scalar(v);
    auto nl = matvec(z, p.w2);
    for (int i = 0; i < p.d_tgt; ++i) out[i] = h[i] + nl[i];
  } else if (p.kind == LinkKind::outer) {
    auto base = matvec(h, p.w3);
    auto z = matvec(h, p.w1);
    for (double& v : z) v = gelu_scalar(v);
    auto nl = matvec(z, p.w2);
    for (int i = 0; i < p.d_tgt; ++i) out[i] = base[i] + nl[i];
  } else if (p.kind == LinkKind::variant_1layer) {
    out = matvec(h, p.w1);
  } else if (p.kind == LinkKind::variant_res1layer) {
    auto lin = matvec(h, p.w1);
    if (p.has_w3()) {
      auto base = matvec(h, p.w3);
      for (int i = 0; i < p.d_tgt; ++i) out[i] = base[i] + lin[i];
    } else {
      for (int i = 0; i < p.d_tgt; ++i) out[i] = h[i] + lin[i];
    }
  } else {
    auto z = matvec(h, p.w1);
    for (double& v : z) v = gelu_scalar(v);
    out = matvec(z, p.w2);
  }
  return out;
}

Tensor row_of(const std::vector<double>& h) { return Tensor::row_vector(h); }

}  // namespace

TEST_CASE("init_link: Kaiming variance within 5% of 2/fan_in over many draws") {
  // Monte-Carlo oracle: pooled sample variance of W1 entries across links.
  double sum = 0.0, sumsq = 0.0;
  std::int64_t count = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    LinkParams p = init_link(LinkKind::inner, 16, 16, 16, 1000 + s);
    for (double v : p.w1.data) {
      sum += v;
      sumsq += v * v;
      ++count;
    }
  }
  double mean = sum / count;
  double var = sumsq / count - mean * mean;
  CHECK(var == doctest::Approx(2.0 / 16).epsilon(0.05));
}

TEST_CASE("init_link: W3 is identity, block identity when rectangular") {
  LinkParams sq = init_link(LinkKind::outer, 6, 6, 6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) CHECK(sq.w3.at(i, j) == (i == j ? 1.0 : 0.0));

  LinkParams rect = init_link(LinkKind::outer, 8, 4, 5, 3);
  CHECK(rect.w3.rows() == 8);
  CHECK(rect.w3.cols() == 5);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(rect.w3.at(i, j) == ((i == j && i < 5) ? 1.0 : 0.0));
}

TEST_CASE("init_link rejects non-square inner links and bad dims") {
  CHECK_THROWS_AS(init_link(LinkKind::inner, 4, 4, 8, 1), Error);
  CHECK_THROWS_AS(init_link(LinkKind::outer, 0, 4, 4, 1), Error);
}

TEST_CASE("d_mid defaults to d_tgt") {
  LinkParams p = init_link(LinkKind::outer, 7, 0, 5, 9);
  CHECK(p.d_mid == 5);
  CHECK(p.w1.cols() == 5);
  CHECK(p.w2.rows() == 5);
}

TEST_CASE("apply_inner at h = 0 returns exactly 0") {
  LinkParams p = init_link(LinkKind::inner, 8, 8, 8, 11);
  Tensor out = apply_inner(p, Tensor::zeros({1, 8}));
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("every link kind matches the scalar-loop reference") {
  Rng rng(21);
  std::vector<LinkParams> links = {
      init_link(LinkKind::inner, 6, 6, 6, 100),
      init_link(LinkKind::inner, 6, 10, 6, 101),
      init_link(LinkKind::outer, 6, 8, 4, 102),
      init_link(LinkKind::variant_1layer, 5, 0, 7, 103),
      init_link(LinkKind::variant_res1layer, 6, 0, 6, 104),
      init_link(LinkKind::variant_res1layer, 6, 0, 4, 105),
      init_link(LinkKind::variant_2layer, 6, 5, 6, 106),
  };
  for (const LinkParams& p : links) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> h(p.d_src);
      for (double& v : h) v = rng.normal();
      Tensor got = apply_link(p, row_of(h));
      auto ref = apply_ref(p, h);
      REQUIRE(got.cols() == p.d_tgt);
      for (int i = 0; i < p.d_tgt; ++i)
        CHECK(got.at(0, i) == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("apply_link maps each row of a sequence independently") {
  Rng rng(23);
  LinkParams p = init_link(LinkKind::outer, 6, 6, 4, 31);
  Tensor seq = random_tensor({5, 6}, rng);
  Tensor mapped = apply_link(p, seq);
  for (int r = 0; r < 5; ++r) {
    Tensor one = t_slice_rows(seq, r, 1);
    Tensor out = apply_link(p, one);
    for (int j = 0; j < 4; ++j)
      CHECK(mapped.at(r, j) == doctest::Approx(out.at(0, j)).epsilon(1e-14));
  }
}

TEST_CASE("apply_inner / apply_outer enforce their kinds; width mismatch fails") {
  LinkParams inner = init_link(LinkKind::inner, 4, 4, 4, 1);
  LinkParams outer = init_link(LinkKind::outer, 4, 4, 4, 1);
  Rng rng(3);
  Tensor h = random_tensor({1, 4}, rng);
  CHECK_THROWS_AS(apply_inner(outer, h), Error);
  CHECK_THROWS_AS(apply_outer(inner, h), Error);
  CHECK_THROWS_AS(apply_link(inner, random_tensor({1, 5}, rng)), Error);
}

TEST_CASE("graph apply equals value apply for all kinds") {
  Rng rng(41);
  std::vector<LinkParams> links = {
      init_link(LinkKind::inner, 6, 6, 6, 200),
      init_link(LinkKind::outer, 6, 6, 4, 201),
      init_link(LinkKind::variant_1layer, 4, 0, 6, 202),
      init_link(LinkKind::variant_res1layer, 5, 0, 5, 203),
      init_link(LinkKind::variant_2layer, 5, 4, 5, 204),
  };
  for (const LinkParams& p : links) {
    Tensor h = random_tensor({3, p.d_src}, rng);
    Graph g;
    LinkNodes nodes = bind_link(g, p, true);
    NodeId hn = g.leaf(h);
    NodeId out = apply_link_graph(g, p, nodes, hn);
    Tensor val = apply_link(p, h);
    for (std::size_t i = 0; i < val.data.size(); ++i)
      CHECK(g.value(out).data[i] == doctest::Approx(val.data[i]).epsilon(1e-14));
  }
}

TEST_CASE("link weight gradients pass finite differences") {
  Rng rng(43);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    LinkParams p = init_link(LinkKind::outer, 5, 4, 6, 300 + seed);
    Graph g;
    LinkNodes nodes = bind_link(g, p, true);
    NodeId h = g.leaf(random_tensor({2, 5}, rng));
    NodeId out = apply_link_graph(g, p, nodes, h);
    NodeId loss = g.sum_all(g.mul(out, out));
    auto r = testutil::finite_diff_check(g, loss);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("analytic Jacobian matches finite differences of apply_link") {
  Rng rng(47);
  std::vector<LinkParams> links = {
      init_link(LinkKind::inner, 6, 6, 6, 400),
      init_link(LinkKind::outer, 6, 5, 4, 401),
      init_link(LinkKind::variant_1layer, 4, 0, 5, 402),
      init_link(LinkKind::variant_res1layer, 5, 0, 5, 403),
      init_link(LinkKind::variant_2layer, 6, 4, 6, 404),
  };
  const double step = 1e-6;
  for (const LinkParams& p : links) {
    Tensor h = random_tensor({1, p.d_src}, rng);
    Tensor jac = link_jacobian(p, h);
    REQUIRE(jac.rows() == p.d_tgt);
    REQUIRE(jac.cols() == p.d_src);
    for (int j = 0; j < p.d_src; ++j) {
      Tensor hp = h, hm = h;
      hp.at(0, j) += step;
      hm.at(0, j) -= step;
      Tensor up = apply_link(p, hp);
      Tensor dn = apply_link(p, hm);
      for (int i = 0; i < p.d_tgt; ++i) {
        double fd = (up.at(0, i) - dn.at(0, i)) / (2 * step);
        CHECK(testutil::rel_err(fd, jac.at(i, j)) < 1e-4);
      }
    }
  }
}

TEST_CASE("analytic Jacobian agrees with the autodiff Jacobian to 1e-8") {
  // 100 random (link, h) pairs across kinds; autodiff rows come from backward
  // passes seeded with one-hot output selectors.
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    LinkKind kind = static_cast<LinkKind>(trial % 5);
    int d_src = 3 + static_cast<int>(rng.below(4));
    int d_tgt = (kind == LinkKind::inner ||
                 (kind == LinkKind::variant_res1layer && trial % 2 == 0))
                    ? d_src
                    : 3 + static_cast<int>(rng.below(4));
    LinkParams p = init_link(kind, d_src, 0, d_tgt, 700 + trial);
    Tensor h = random_tensor({1, d_src}, rng);
    Tensor jac = link_jacobian(p, h);

    for (int i = 0; i < d_tgt; ++i) {
      Graph g;
      LinkNodes nodes = bind_link(g, p, false);
      NodeId hn = g.leaf(h, true);
      NodeId out = apply_link_graph(g, p, nodes, hn);
      Tensor pick = Tensor::zeros({1, d_tgt});
      pick.at(0, i) = 1.0;
      g.backward(g.sum_all(g.mul(out, g.leaf(pick))));
      Tensor row = g.grad(hn);
      for (int j = 0; j < d_src; ++j)
        CHECK(std::abs(row.at(0, j) - jac.at(i, j)) < 1e-8);
    }
  }
}

TEST_CASE("Jacobian of the 1layer variant is W1^T independent of h") {
  LinkParams p = init_link(LinkKind::variant_1layer, 4, 0, 6, 71);
  Rng rng(59);
  Tensor j1 = link_jacobian(p, random_tensor({1, 4}, rng));
  Tensor j2 = link_jacobian(p, random_tensor({1, 4}, rng, 5.0));
  for (std::size_t i = 0; i < j1.data.size(); ++i) CHECK(j1.data[i] == j2.data[i]);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) CHECK(j1.at(i, j) == p.w1.at(j, i));
}

TEST_CASE("text link: softmax-weighted embedding mix, two-step oracle") {
  // V = 3, d = 2. Hand-computed: p = softmax(h W_out), out = p W_in.
  Tensor out_proj = Tensor::from({2, 3}, {1, 0, -1, 0, 1, 0});
  Tensor embed = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor h = Tensor::row_vector({std::log(2.0), std::log(3.0)});
  // logits = [ln2, ln3, -ln2]; p = [2, 3, 0.5] / 5.5
  Tensor got = apply_text_link(out_proj, embed, h);
  double p0 = 2.0 / 5.5, p1 = 3.0 / 5.5, p2 = 0.5 / 5.5;
  CHECK(got.at(0, 0) == doctest::Approx(p0 * 1 + p1 * 3 + p2 * 5).epsilon(1e-12));
  CHECK(got.at(0, 1) == doctest::Approx(p0 * 2 + p1 * 4 + p2 * 6).epsilon(1e-12));
}

TEST_CASE("text link with uniform logits returns the embedding column means") {
  Rng rng(61);
  Tensor embed = random_tensor({5, 3}, rng);
  Tensor out_proj = Tensor::zeros({3, 5});  // all logits 0 -> uniform p
  Tensor h = random_tensor({1, 3}, rng);
  Tensor got = apply_text_link(out_proj, embed, h);
  for (int j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (int i = 0; i < 5; ++i) mean += embed.at(i, j) / 5.0;
    CHECK(got.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("graph text link matches value text link and is differentiable") {
  Rng rng(67);
  Tensor out_proj = random_tensor({4, 6}, rng);
  Tensor embed = random_tensor({6, 4}, rng);
  Tensor h = random_tensor({1, 4}, rng);
  Graph g;
  NodeId op = g.leaf(out_proj);
  NodeId em = g.leaf(embed);
  NodeId hn = g.leaf(h, true);
  NodeId out = apply_text_link_graph(g, op, em, hn);
  Tensor val = apply_text_link(out_proj, embed, h);
  for (int j = 0; j < 4; ++j)
    CHECK(g.value(out).at(0, j) == doctest::Approx(val.at(0, j)).epsilon(1e-14));
  auto r = testutil::finite_diff_check(g, g.sum_all(g.mul(out, out)));
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("link_macs matches the per-kind closed forms") {
  CHECK(link_macs(init_link(LinkKind::inner, 8, 6, 8, 1)) == 8u * 6 + 6u * 8);
  CHECK(link_macs(init_link(LinkKind::outer, 8, 6, 4, 1)) == 8u * 4 + 8u * 6 + 6u * 4);
  CHECK(link_macs(init_link(LinkKind::variant_1layer, 8, 0, 4, 1)) == 32u);
  CHECK(link_macs(init_link(LinkKind::variant_res1layer, 8, 0, 8, 1)) == 64u);
  CHECK(link_macs(init_link(LinkKind::variant_res1layer, 8, 0, 4, 1)) == 64u);
  CHECK(link_macs(init_link(LinkKind::variant_2layer, 8, 6, 8, 1)) == 8u * 6 + 6u * 8);
  // Standard inner link with d_mid = d_h: exactly 2 d_h^2 per vector.
  CHECK(link_macs(init_link(LinkKind::inner, 16, 16, 16, 1)) == 2u * 16 * 16);
}
