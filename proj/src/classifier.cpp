#include "viewclean/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "viewclean/sampling.hpp"

namespace viewclean {

namespace {

constexpr double kTau = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b) {
  if (kind == KernelKind::kLinear) return dot(a, b);
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

// Dual: min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a_i <= C_i.
struct SmoResult {
  std::vector<double> alpha;
  double rho = 0.0;
  std::size_t iterations = 0;
};

SmoResult solve_dual(const std::vector<std::vector<double>>& kernel, const std::vector<int>& y,
                     const std::vector<double>& upper, double eps) {
  const std::size_t n = y.size();
  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * kernel[i][j]; };
  auto at_upper = [&](std::size_t t) { return alpha[t] >= upper[t]; };
  auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  const std::size_t max_iter = std::max<std::size_t>(100000, 100 * n);
  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!at_upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i = t;
        }
      } else if (!at_lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i = t;
      }
    }
    if (i == n) break;

    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      double grad_diff = 0.0;
      double quad = 0.0;
      if (y[t] == 1) {
        if (at_lower(t)) continue;
        gmax2 = std::max(gmax2, grad[t]);
        grad_diff = gmax + grad[t];
        quad = kernel[i][i] + kernel[t][t] - 2.0 * y[i] * q(i, t);
      } else {
        if (at_upper(t)) continue;
        gmax2 = std::max(gmax2, -grad[t]);
        grad_diff = gmax - grad[t];
        quad = kernel[i][i] + kernel[t][t] + 2.0 * y[i] * q(i, t);
      }
      if (grad_diff > 0.0) {
        const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < eps || j == n) break;

    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double ci = upper[i];
    const double cj = upper[j];
    if (y[i] != y[j]) {
      double quad = kernel[i][i] + kernel[j][j] + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = ci - diff;
        }
      } else if (alpha[j] > cj) {
        alpha[j] = cj;
        alpha[i] = cj + diff;
      }
    } else {
      double quad = kernel[i][i] + kernel[j][j] - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = sum - ci;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > cj) {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = sum - cj;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
  }

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] == -1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (at_lower(t)) {
      if (y[t] == 1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      ++free;
      sum_free += yg;
    }
  }
  SmoResult out;
  out.rho = free > 0 ? sum_free / static_cast<double>(free) : (ub + lb) / 2.0;
  out.alpha = std::move(alpha);
  out.iterations = iter;
  return out;
}

}  // namespace

Model train(std::span<const LabeledPair> data, const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("cannot train on an empty training set");
  const std::size_t arity = data.front().features.size();
  std::size_t positives = 0;
  for (const auto& ex : data) {
    if (ex.features.size() != arity) throw std::invalid_argument("training vectors differ in arity");
    if (ex.duplicate) ++positives;
  }
  const std::size_t n = data.size();
  const std::size_t negatives = n - positives;

  Model model;
  model.kernel_ = options.kernel;
  model.arity_ = arity;
  model.gamma_ = options.gamma > 0.0 ? options.gamma : 1.0 / static_cast<double>(std::max<std::size_t>(1, arity));
  if (positives == 0 || negatives == 0) {
    model.constant_ = true;
    model.constant_value_ = positives > 0 ? 1.0 : -1.0;
    return model;
  }
  model.positive_weight_ = static_cast<double>(n) / (2.0 * static_cast<double>(positives));
  model.negative_weight_ = static_cast<double>(n) / (2.0 * static_cast<double>(negatives));

  std::vector<std::vector<double>> kernel(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      kernel[i][j] = kernel[j][i] = kernel_value(options.kernel, model.gamma_, data[i].features, data[j].features);
    }
  }
  std::vector<int> y(n);
  std::vector<double> upper(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = data[i].duplicate ? 1 : -1;
    upper[i] = options.c * (data[i].duplicate ? model.positive_weight_ : model.negative_weight_);
  }
  const auto result = solve_dual(kernel, y, upper, options.tolerance);

  model.rho_ = result.rho;
  model.iterations_ = result.iterations;
  for (std::size_t i = 0; i < n; ++i) {
    if (result.alpha[i] <= 0.0) continue;
    model.support_.push_back(data[i].features);
    model.coef_.push_back(result.alpha[i] * y[i]);
  }
  if (options.kernel == KernelKind::kLinear) {
    model.weights_.assign(arity, 0.0);
    for (std::size_t s = 0; s < model.support_.size(); ++s) {
      for (std::size_t f = 0; f < arity; ++f) model.weights_[f] += model.coef_[s] * model.support_[s][f];
    }
  }
  return model;
}

double Model::decision(std::span<const double> x) const {
  if (x.size() != arity_) {
    throw std::invalid_argument("feature arity " + std::to_string(x.size()) + " does not match model arity " +
                                std::to_string(arity_));
  }
  if (constant_) return constant_value_;
  if (kernel_ == KernelKind::kLinear) return dot(weights_, x) - rho_;
  double sum = 0.0;
  for (std::size_t s = 0; s < support_.size(); ++s) sum += coef_[s] * kernel_value(kernel_, gamma_, support_[s], x);
  return sum - rho_;
}

std::string Model::dump() const {
  std::ostringstream os;
  os.precision(10);
  os << "kernel " << (kernel_ == KernelKind::kLinear ? "linear" : "gaussian") << '\n';
  if (kernel_ == KernelKind::kGaussian) os << "gamma " << gamma_ << '\n';
  os << "arity " << arity_ << '\n';
  if (constant_) {
    os << "constant " << constant_value_ << '\n';
    return os.str();
  }
  os << "class_weights " << positive_weight_ << ' ' << negative_weight_ << '\n';
  os << "rho " << rho_ << '\n';
  os << "support_vectors " << support_.size() << '\n';
  if (!weights_.empty()) {
    os << "w";
    for (double w : weights_) os << ' ' << w;
    os << '\n';
  }
  for (std::size_t s = 0; s < support_.size(); ++s) {
    os << coef_[s];
    for (double v : support_[s]) os << ' ' << v;
    os << '\n';
  }
  return os.str();
}

std::vector<Prediction> predict(const Model& model, std::span<const FeatureVector> pairs) {
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  for (const auto& fv : pairs) {
    const double d = model.decision(fv.values);
    out.push_back({fv.pair, d > 0.0, d});
  }
  return out;
}

double vote_uncertainty(double p) { return 1.0 - std::abs(2.0 * p - 1.0); }

double vote_entropy(double p) {
  auto term = [](double x) { return x <= 0.0 ? 0.0 : -x * std::log2(x); };
  return term(p) + term(1.0 - p);
}

std::vector<EnsembleScore> ensemble_scores(std::span<const LabeledPair> data,
                                           std::span<const FeatureVector> candidates,
                                           std::size_t members, std::uint64_t seed,
                                           const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("ensemble needs training data");
  if (members == 0) throw std::invalid_argument("ensemble needs at least one member");
  Rng rng(seed);
  std::vector<std::size_t> votes(candidates.size(), 0);
  std::vector<LabeledPair> sample;
  for (std::size_t m = 0; m < members; ++m) {
    sample.clear();
    for (std::size_t i = 0; i < data.size(); ++i) sample.push_back(data[rng.below(data.size())]);
    const Model model = train(sample, options);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (model.is_duplicate(candidates[c].values)) ++votes[c];
    }
  }
  std::vector<EnsembleScore> out;
  out.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double p = static_cast<double>(votes[c]) / static_cast<double>(members);
    out.push_back({candidates[c].pair, p, vote_uncertainty(p), vote_entropy(p)});
  }
  return out;
}

double f1_score(const ConfusionCounts& c) {
  if (c.true_positive + c.false_positive + c.false_negative == 0) return 1.0;
  const double predicted = static_cast<double>(c.true_positive + c.false_positive);
  const double actual = static_cast<double>(c.true_positive + c.false_negative);
  if (predicted == 0.0 || actual == 0.0 || c.true_positive == 0) return 0.0;
  const double precision = static_cast<double>(c.true_positive) / predicted;
  const double recall = static_cast<double>(c.true_positive) / actual;
  return 2.0 * precision * recall / (precision + recall);
}

double f1_on_holdout(const Model& model, std::span<const LabeledPair> holdout) {
  if (holdout.empty()) throw std::invalid_argument("empty holdout set");
  ConfusionCounts counts;
  for (const auto& ex : holdout) {
    const bool predicted = model.is_duplicate(ex.features);
    if (predicted && ex.duplicate) ++counts.true_positive;
    if (predicted && !ex.duplicate) ++counts.false_positive;
    if (!predicted && ex.duplicate) ++counts.false_negative;
    if (!predicted && !ex.duplicate) ++counts.true_negative;
  }
  return f1_score(counts);
}

}  // namespace viewclean
