// Independent reference implementations used as test oracles. They work on
// plain nested vectors and share no code with the library's tensor ops.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lgsgm/numcore.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const lgsgm::num::Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline lgsgm::num::Tensor to_tensor(const Mat& m, std::size_t cols_if_empty = 0) {
  const std::size_t r = m.size(), c = r ? m[0].size() : cols_if_empty;
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return lgsgm::num::Tensor::from(r, c, v);
}

inline Vec row_of(const lgsgm::num::Tensor& t, std::size_t r = 0) { return to_mat(t)[r]; }

inline Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, Vec(c));
  for (auto& row : m)
    for (auto& x : row) x = u(rng);
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size(), k = b.size(), m = k ? b[0].size() : 0;
  Mat c(n, Vec(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i][j] += a[i][t] * b[t][j];
  return c;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double swish(double x) { return x * sigmoid(x); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// One affine layer plus swish applied to a single row vector. W is in x out.
inline Vec affine_swish(const Vec& x, const Mat& w, const Vec& b) {
  Vec y(b);
  for (std::size_t j = 0; j < y.size(); ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * w[i][j];
    y[j] = swish(y[j]);
  }
  return y;
}

// mean over queries of the best dot product against any candidate.
inline double mean_best_dot(const Mat& queries, const Mat& candidates) {
  if (queries.empty() || candidates.empty()) return 0.0;
  double total = 0.0;
  for (const auto& q : queries) {
    double best = -INFINITY;
    for (const auto& c : candidates) best = std::max(best, dot(q, c));
    total += best;
  }
  return total / static_cast<double>(queries.size());
}

inline double cosine(const Vec& a, const Vec& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

// sum_n sigmoid(x_n . relu(W mean(x))) x_n with W stored d x d.
inline Vec attention_pool(const Mat& x, const Mat& w) {
  const std::size_t d = w.size();
  Vec out(d, 0.0);
  if (x.empty()) return out;
  Vec avg(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) avg[j] += r[j] / static_cast<double>(x.size());
  Vec ctx(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) ctx[i] += w[i][j] * avg[j];
    ctx[i] = relu(ctx[i]);
  }
  for (const auto& r : x) {
    const double a = sigmoid(dot(r, ctx));
    for (std::size_t j = 0; j < d; ++j) out[j] += a * r[j];
  }
  return out;
}

inline Vec embed_graph(const Mat& nodes, const Mat& edges, const Mat& wh, const Mat& wr) {
  Vec a = attention_pool(nodes, wh);
  const Vec b = attention_pool(edges, wr);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Bidirectional hinge with hardest (or least-matching) in-batch negatives.
inline double batch_loss(const Mat& s, double m, bool hardest = true) {
  const std::size_t b = s.size();
  double total = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    double row = hardest ? -INFINITY : INFINITY, col = row;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == k) continue;
      row = hardest ? std::max(row, s[k][j]) : std::min(row, s[k][j]);
      col = hardest ? std::max(col, s[j][k]) : std::min(col, s[j][k]);
    }
    total += relu(m - s[k][k] + row) + relu(m - s[k][k] + col);
  }
  return total;
}

struct LstmWeights {
  Mat wx;  // in x 4h
  Mat wh;  // h x 4h
  Vec b;   // 4h
};

// Gate order i, f, g, o along the 4h axis.
inline void lstm_step(const Vec& x, Vec& h, Vec& c, const LstmWeights& w) {
  const std::size_t n = h.size();
  Vec z(w.b);
  for (std::size_t j = 0; j < 4 * n; ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) z[j] += x[i] * w.wx[i][j];
    for (std::size_t i = 0; i < n; ++i) z[j] += h[i] * w.wh[i][j];
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double ig = sigmoid(z[j]), fg = sigmoid(z[n + j]), gg = std::tanh(z[2 * n + j]),
                 og = sigmoid(z[3 * n + j]);
    c[j] = fg * c[j] + ig * gg;
    h[j] = og * std::tanh(c[j]);
  }
}

// Forward and backward hidden states at every position.
inline std::pair<Mat, Mat> bilstm(const Mat& xs, const LstmWeights& fwd, const LstmWeights& bwd) {
  const std::size_t n = fwd.wh.size(), t = xs.size();
  Mat f(t), b(t);
  Vec h(n, 0.0), c(n, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    lstm_step(xs[i], h, c, fwd);
    f[i] = h;
  }
  h.assign(n, 0.0);
  c.assign(n, 0.0);
  for (std::size_t i = t; i-- > 0;) {
    lstm_step(xs[i], h, c, bwd);
    b[i] = h;
  }
  return {f, b};
}

// Relative error between two gradient vectors, measured on their norms.
inline double relative_error(const Vec& analytic, const Vec& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nn));
  if (scale < 1e-10) return 0.0;
  return std::sqrt(diff) / scale;
}

// Compares tape gradients of `f` against central differences for every
// tensor in `inputs`. `f` must rebuild its result from the inputs on each
// call. Returns the worst relative error.
inline double gradient_check(std::vector<lgsgm::num::Tensor> inputs,
                             const std::function<lgsgm::num::Tensor()>& f, double step = 1e-5) {
  using lgsgm::num::Tensor;
  for (auto& t : inputs) t.set_requires_grad(true);
  std::vector<Vec> analytic;
  {
    lgsgm::num::Tape tape;
    Tensor out;
    {
      lgsgm::num::TapeScope scope(tape);
      out = f();
    }
    for (auto& t : inputs) t.zero_grad();
    tape.backward(out);
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto vals = inputs[k].mutable_values();
    Vec numeric(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + step;
      const double up = f().item();
      vals[i] = keep - step;
      const double down = f().item();
      vals[i] = keep;
      numeric[i] = (up - down) / (2.0 * step);
    }
    worst = std::max(worst, relative_error(analytic[k], numeric));
  }
  return worst;
}

}  // namespace oracle
