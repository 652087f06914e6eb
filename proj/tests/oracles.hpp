#pragma once

// Independent reference implementations used to check the library. They
// share no code with src/ and favor obviousness over speed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b, double eps = 1e-12) {
  const double na = std::max(std::sqrt(dot(a, a)), eps);
  const double nb = std::max(std::sqrt(dot(b, b)), eps);
  return dot(a, b) / (na * nb);
}

/// Full similarity matrix, stable sort by descending similarity, mean of the
/// first k pool rows.
inline Rows knn(const Rows& src, const Rows& pool, int k) {
  const std::size_t p = pool.size();
  std::vector<std::vector<double>> sim(src.size(), std::vector<double>(p));
  for (std::size_t t = 0; t < src.size(); ++t) {
    for (std::size_t j = 0; j < p; ++j) sim[t][j] = cosine(src[t], pool[j]);
  }
  Rows out;
  for (std::size_t t = 0; t < src.size(); ++t) {
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sim[t][a] > sim[t][b]; });
    std::vector<double> mean(src[t].size(), 0.0);
    for (int n = 0; n < k; ++n) {
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += pool[idx[n]][d];
    }
    for (double& v : mean) v /= k;
    out.push_back(mean);
  }
  return out;
}

/// Magnitude spectrum via the O(N^2) DFT, bins 0..N/2.
inline std::vector<double> dft_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n));
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Linear convolution truncated to x.size().
inline std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    for (std::size_t j = 0; j < h.size() && j <= n; ++j) y[n] += h[j] * x[n - j];
  }
  return y;
}

inline double power(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

/// Cross-entropy of a tanh MLP, written out loop by loop. w1 is F x H, w2 is H x C.
inline double mlp_loss(const std::vector<double>& x, const Rows& w1, const std::vector<double>& b1,
                       const Rows& w2, const std::vector<double>& b2, std::size_t label) {
  const std::size_t h_dim = b1.size(), c_dim = b2.size();
  std::vector<double> h(h_dim);
  for (std::size_t j = 0; j < h_dim; ++j) {
    double a = b1[j];
    for (std::size_t i = 0; i < x.size(); ++i) a += x[i] * w1[i][j];
    h[j] = std::tanh(a);
  }
  std::vector<double> z(c_dim);
  for (std::size_t c = 0; c < c_dim; ++c) {
    double a = b2[c];
    for (std::size_t j = 0; j < h_dim; ++j) a += h[j] * w2[j][c];
    z[c] = a;
  }
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s) - z[label];
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace oracle
