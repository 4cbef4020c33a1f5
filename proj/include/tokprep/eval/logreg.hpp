#pragma once

// Multinomial logistic regression trained by full-batch gradient descent from
// a zero initialization. Used as a probe on frozen sentence embeddings.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "tokprep/error.hpp"

namespace tokprep::eval {

using FeatureMatrix = std::vector<std::vector<double>>;

struct LogRegOptions {
  double l2 = 1e-4;
  std::size_t epochs = 200;
  double lr = 0.1;
};

// weights is [classes x (dim + 1)], the last column being the bias.
struct LogisticRegression {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> loss_history;  // loss before each epoch, plus the final loss

  double& w(std::size_t c, std::size_t f) { return weights[c * (dim + 1) + f]; }
  double w(std::size_t c, std::size_t f) const { return weights[c * (dim + 1) + f]; }

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> z(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      double s = w(c, dim);
      for (std::size_t f = 0; f < dim; ++f) s += w(c, f) * x[f];
      z[c] = s;
    }
    return z;
  }

  std::size_t predict(std::span<const double> x) const {
    const auto z = logits(x);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }
};

namespace detail {

inline void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

inline void check_data(const FeatureMatrix& x, std::span<const std::size_t> y) {
  if (x.empty()) throw ConfigError("logistic regression needs training data");
  if (x.size() != y.size()) throw ShapeError("feature and label counts differ");
  for (const auto& row : x) {
    if (row.size() != x.front().size()) throw ShapeError("ragged feature matrix");
  }
}

}  // namespace detail

// Mean cross-entropy + (l2 / 2) * ||W||^2 (bias excluded). Writes the
// gradient with respect to `model.weights` into `grad` when non-null.
inline double loss_and_grad(const LogisticRegression& model, const FeatureMatrix& x,
                            std::span<const std::size_t> y, double l2,
                            std::vector<double>* grad = nullptr) {
  const std::size_t dim = model.dim, stride = dim + 1;
  if (grad) grad->assign(model.weights.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto p = model.logits(x[i]);
    detail::softmax_inplace(p);
    loss -= std::log(std::max(p[y[i]], 1e-300)) * inv_n;
    if (!grad) continue;
    for (std::size_t c = 0; c < model.classes; ++c) {
      const double delta = (p[c] - (c == y[i] ? 1.0 : 0.0)) * inv_n;
      double* g = grad->data() + c * stride;
      for (std::size_t f = 0; f < dim; ++f) g[f] += delta * x[i][f];
      g[dim] += delta;
    }
  }
  for (std::size_t c = 0; c < model.classes; ++c) {
    for (std::size_t f = 0; f < dim; ++f) {
      const double wv = model.w(c, f);
      loss += 0.5 * l2 * wv * wv;
      if (grad) (*grad)[c * stride + f] += l2 * wv;
    }
  }
  return loss;
}

inline LogisticRegression train_logreg(const FeatureMatrix& x, std::span<const std::size_t> y,
                                       const LogRegOptions& opt = {}) {
  detail::check_data(x, y);
  const std::size_t classes = *std::max_element(y.begin(), y.end()) + 1;
  std::vector<bool> seen(classes, false);
  for (auto label : y) seen[label] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw ConfigError("logistic regression needs at least two classes in the training set");
  }
  LogisticRegression model;
  model.classes = classes;
  model.dim = x.front().size();
  model.weights.assign(classes * (model.dim + 1), 0.0);
  std::vector<double> grad;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    model.loss_history.push_back(loss_and_grad(model, x, y, opt.l2, &grad));
    for (std::size_t i = 0; i < grad.size(); ++i) model.weights[i] -= opt.lr * grad[i];
  }
  model.loss_history.push_back(loss_and_grad(model, x, y, opt.l2));
  return model;
}

// Accuracy x 100.
inline double accuracy(const LogisticRegression& model, const FeatureMatrix& x,
                       std::span<const std::size_t> y) {
  detail::check_data(x, y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += model.predict(x[i]) == y[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(x.size());
}

// z-scores every feature with the statistics of `train`; constant features
// are only centred.
struct Standardizer {
  std::vector<double> mean, scale;

  explicit Standardizer(const FeatureMatrix& train) {
    const std::size_t d = train.empty() ? 0 : train.front().size();
    mean.assign(d, 0.0);
    scale.assign(d, 1.0);
    const double n = static_cast<double>(train.size());
    for (const auto& r : train)
      for (std::size_t f = 0; f < d; ++f) mean[f] += r[f] / n;
    std::vector<double> var(d, 0.0);
    for (const auto& r : train)
      for (std::size_t f = 0; f < d; ++f) var[f] += (r[f] - mean[f]) * (r[f] - mean[f]) / n;
    for (std::size_t f = 0; f < d; ++f) {
      if (var[f] > 0.0) scale[f] = 1.0 / std::sqrt(var[f]);
    }
  }

  FeatureMatrix apply(FeatureMatrix x) const {
    for (auto& r : x)
      for (std::size_t f = 0; f < r.size(); ++f) r[f] = (r[f] - mean[f]) * scale[f];
    return x;
  }
};

// Bundled synthetic probe sets.
struct SyntheticSet {
  FeatureMatrix x;
  std::vector<std::size_t> y;
};

// Two classes on either side of the line x0 + x1 = 0 with margin >= 1.
inline SyntheticSet separable_2d_set() {
  SyntheticSet s;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double a = -2.0 + 0.4 * i, b = -2.0 + 0.4 * j;
      const double shift = (a + b >= 0.0) ? 1.0 : -1.0;
      s.x.push_back({a + shift, b + shift});
      s.y.push_back(a + b >= 0.0 ? 1 : 0);
    }
  }
  return s;
}

// Three Gaussian blobs in 2-d.
inline SyntheticSet three_blobs_set(std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.5);
  const double centers[3][2] = {{-2.0, 0.0}, {2.0, 0.0}, {0.0, 2.5}};
  SyntheticSet s;
  for (int i = 0; i < 150; ++i) {
    const int c = i % 3;
    s.x.push_back({centers[c][0] + noise(rng), centers[c][1] + noise(rng)});
    s.y.push_back(static_cast<std::size_t>(c));
  }
  return s;
}

// Labels drawn independently of the features; class 0 is the majority.
inline SyntheticSet random_label_set(std::uint64_t seed, std::size_t n = 400, std::size_t dim = 8) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> feat(0.0, 1.0);
  std::bernoulli_distribution is_minority(0.3);
  SyntheticSet s;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(dim);
    for (double& v : row) v = feat(rng);
    s.x.push_back(std::move(row));
    s.y.push_back(is_minority(rng) ? 1 : 0);
  }
  return s;
}

}  // namespace tokprep::eval
