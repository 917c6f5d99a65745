#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "viewclean/relation.hpp"

namespace viewclean {

enum class KernelKind { kLinear, kGaussian };

struct TrainOptions {
  KernelKind kernel = KernelKind::kLinear;
  double c = 10.0;          // base soft-margin penalty, scaled per class
  double gamma = 0.0;       // gaussian width; 0 means 1 / number of features
  double tolerance = 1e-3;  // KKT violation tolerance of the SMO solver
};

struct LabeledPair {
  PairKey pair;
  std::vector<double> features;
  bool duplicate = false;
};

struct FeatureVector {
  PairKey pair;
  std::vector<double> values;
};

struct Prediction {
  PairKey pair;
  bool duplicate = false;
  double decision = 0.0;  // > 0 means duplicate; ties map to not-duplicate
};

// Soft-margin SVM trained by sequential minimal optimization with
// second-order working-set selection. Penalties per class are
// c * n / (2 * n_class), i.e. reciprocal class cardinalities rescaled so the
// average penalty is c.
class Model {
 public:
  double decision(std::span<const double> x) const;
  bool is_duplicate(std::span<const double> x) const { return decision(x) > 0.0; }

  std::size_t arity() const { return arity_; }
  KernelKind kernel() const { return kernel_; }
  bool is_constant() const { return constant_; }
  double positive_weight() const { return positive_weight_; }
  double negative_weight() const { return negative_weight_; }
  std::size_t support_vector_count() const { return support_.size(); }
  std::size_t iterations() const { return iterations_; }

  std::string dump() const;

 private:
  friend Model train(std::span<const LabeledPair> data, const TrainOptions& options);

  KernelKind kernel_ = KernelKind::kLinear;
  double gamma_ = 0.0;
  std::size_t arity_ = 0;
  bool constant_ = false;
  double constant_value_ = -1.0;
  double positive_weight_ = 1.0;
  double negative_weight_ = 1.0;
  std::vector<std::vector<double>> support_;
  std::vector<double> coef_;    // alpha_i * y_i
  std::vector<double> weights_; // primal weights, linear kernel only
  double rho_ = 0.0;
  std::size_t iterations_ = 0;
};

// Throws std::invalid_argument on an empty training set or ragged features.
// A single-class training set yields a constant model (decision +1 or -1).
Model train(std::span<const LabeledPair> data, const TrainOptions& options = {});

// Throws std::invalid_argument when a vector's arity differs from the model's.
std::vector<Prediction> predict(const Model& model, std::span<const FeatureVector> pairs);

struct EnsembleScore {
  PairKey pair;
  double vote_fraction = 0.0;  // share of members voting duplicate
  double uncertainty = 0.0;    // 1 - |2p - 1|
  double entropy = 0.0;        // binary entropy of p, in bits
};

double vote_uncertainty(double p);
double vote_entropy(double p);

// Trains `members` models on bootstrap resamples (with replacement, same size
// as `data`) and scores each candidate by the members' disagreement.
std::vector<EnsembleScore> ensemble_scores(std::span<const LabeledPair> data,
                                           std::span<const FeatureVector> candidates,
                                           std::size_t members, std::uint64_t seed,
                                           const TrainOptions& options = {});

struct ConfusionCounts {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
};

// F1 of the duplicate class; 1 when there are no positives and none are
// predicted, 0 whenever precision or recall is 0/0.
double f1_score(const ConfusionCounts& counts);

// Throws std::invalid_argument on an empty holdout.
double f1_on_holdout(const Model& model, std::span<const LabeledPair> holdout);

}  // namespace viewclean
