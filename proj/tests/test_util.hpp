#pragma once

// Shared oracle helpers for the test suites. Everything here is written
// independently of the library's computation path: reference kernels use
// different algorithms (or at least different loop structures) so that a bug
// in the library cannot hide in its own oracle.

#include <cmath>
#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace testutil {

// Reference matmul, j-before-p loop order with explicit accumulator.
inline rmas::Tensor matmul_ref(const rmas::Tensor& a, const rmas::Tensor& b) {
  int m = a.rows(), k = a.cols(), n = b.cols();
  rmas::Tensor c = rmas::Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  return c;
}

// Gaussian CDF by Simpson's rule over [-12, x]; independent of erf/erfc.
inline double normal_cdf_quadrature(double x) {
  const double lo = -12.0;
  if (x <= lo) return 0.0;
  const int steps = 20000;  // even
  double h = (x - lo) / steps;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double s = pdf(lo) + pdf(x);
  for (int i = 1; i < steps; ++i) s += pdf(lo + i * h) * ((i % 2) ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
// descending. Oracle for spectral norms (via M^T M) and PCA spectra.
inline std::vector<double> jacobi_eigenvalues(rmas::Tensor a) {
  int n = a.rows();
  for (int sweep = 0; sweep < 120; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-24) break;
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
      }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a.at(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

// Spectral norm oracle: sqrt of top eigenvalue of M^T M via Jacobi.
inline double spectral_norm_ref(const rmas::Tensor& m) {
  rmas::Tensor mtm = matmul_ref(rmas::t_transpose(m), m);
  double top = jacobi_eigenvalues(mtm)[0];
  return std::sqrt(std::max(0.0, top));
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

inline double rel_err(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

// Central finite differences against backward() on every trainable leaf of a
// scalar-loss graph. Perturbs leaf coordinates (all, or a sampled subset),
// replays the tape, and compares slopes.
inline GradCheckResult finite_diff_check(rmas::Graph& g, rmas::NodeId loss,
                                         double step = 1e-5,
                                         int max_coords_per_leaf = 0,
                                         std::uint64_t seed = 1) {
  g.backward(loss);
  std::vector<std::pair<rmas::NodeId, rmas::Tensor>> grads;
  for (rmas::NodeId id = 0; id < static_cast<rmas::NodeId>(g.size()); ++id)
    if (g.is_trainable_leaf(id)) grads.emplace_back(id, g.grad(id));

  rmas::Rng rng(seed);
  GradCheckResult res;
  for (auto& [id, grad] : grads) {
    rmas::Tensor base = g.value(id);
    std::int64_t n = base.numel();
    std::vector<std::int64_t> coords;
    if (max_coords_per_leaf <= 0 || n <= max_coords_per_leaf) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_leaf; ++i)
        coords.push_back(static_cast<std::int64_t>(rng.below(n)));
    }
    for (std::int64_t c : coords) {
      rmas::Tensor t = base;
      t.data[c] = base.data[c] + step;
      g.set_leaf_value(id, t);
      g.replay();
      double up = g.value(loss).scalar();
      t.data[c] = base.data[c] - step;
      g.set_leaf_value(id, t);
      g.replay();
      double down = g.value(loss).scalar();
      double fd = (up - down) / (2.0 * step);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(fd, grad.data[c]));
      ++res.checked;
    }
    g.set_leaf_value(id, base);
  }
  g.replay();
  return res;
}

inline rmas::Tensor random_tensor(const rmas::Shape& s, rmas::Rng& rng,
                                  double sd = 1.0) {
  rmas::Tensor t = rmas::Tensor::zeros(s);
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

}  // namespace testutil
