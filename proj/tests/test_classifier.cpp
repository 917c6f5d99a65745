#include <cmath>

#include "doctest.h"
#include "viewclean/classifier.hpp"
#include "viewclean/sampling.hpp"

using namespace viewclean;

namespace {

LabeledPair ex(RecordId id, std::vector<double> x, bool dup) { return {PairKey(id, id + 1000), std::move(x), dup}; }

std::vector<LabeledPair> separable(Rng& rng, std::size_t pos, std::size_t neg) {
  std::vector<LabeledPair> out;
  RecordId id = 0;
  for (std::size_t i = 0; i < pos; ++i) out.push_back(ex(id++, {0.8 + 0.2 * rng.uniform(), 0.7 + 0.3 * rng.uniform()}, true));
  for (std::size_t i = 0; i < neg; ++i) out.push_back(ex(id++, {0.4 * rng.uniform(), 0.5 * rng.uniform()}, false));
  return out;
}

}  // namespace

TEST_CASE("two-point problem has the analytic max-margin solution") {
  std::vector<LabeledPair> data = {ex(0, {0.9, 0.9}, true), ex(1, {0.1, 0.1}, false)};
  auto model = train(data);
  std::vector<double> pos = {0.9, 0.9};
  std::vector<double> neg = {0.1, 0.1};
  std::vector<double> mid = {0.5, 0.5};
  std::vector<double> off = {0.9, 0.1};
  CHECK(model.decision(pos) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(model.decision(neg) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(std::abs(model.decision(mid)) < 1e-3);
  CHECK(std::abs(model.decision(off)) < 1e-3);
  CHECK(model.support_vector_count() == 2);

  Model gaussian = train(data, {KernelKind::kGaussian});
  CHECK(gaussian.is_duplicate(pos));
  CHECK_FALSE(gaussian.is_duplicate(neg));
}

TEST_CASE("exact zero decision maps to not duplicate") {
  std::vector<LabeledPair> data = {ex(0, {1.0}, true), ex(1, {-1.0}, false)};
  auto model = train(data);
  std::vector<FeatureVector> at_boundary = {{PairKey(0, 1), {0.0}}};
  auto pred = predict(model, at_boundary);
  CHECK(pred[0].decision == 0.0);
  CHECK_FALSE(pred[0].duplicate);
}

TEST_CASE("separable toy set is fit perfectly") {
  Rng rng(1);
  auto data = separable(rng, 10, 10);
  for (auto kernel : {KernelKind::kLinear, KernelKind::kGaussian}) {
    auto model = train(data, {kernel});
    for (const auto& d : data) {
      CHECK(model.is_duplicate(d.features) == d.duplicate);
      CHECK(std::abs(model.decision(d.features)) > 0.0);
    }
  }
}

TEST_CASE("class weights are reciprocal cardinalities") {
  Rng rng(2);
  auto data = separable(rng, 4, 96);
  auto model = train(data);
  CHECK(model.positive_weight() / model.negative_weight() == doctest::Approx(24.0));
  CHECK((4 * model.positive_weight() + 96 * model.negative_weight()) / 100 == doctest::Approx(1.0));
  for (const auto& d : data) {
    if (d.duplicate) CHECK(model.is_duplicate(d.features));
  }
}

TEST_CASE("single class and errors") {
  std::vector<LabeledPair> negatives = {ex(0, {0.2}, false), ex(1, {0.9}, false)};
  auto model = train(negatives);
  CHECK(model.is_constant());
  std::vector<double> x = {0.5};
  CHECK(model.decision(x) == -1.0);
  std::vector<LabeledPair> positives = {ex(0, {0.2}, true)};
  CHECK(train(positives).decision(x) == 1.0);

  CHECK_THROWS_AS(train({}), std::invalid_argument);
  std::vector<LabeledPair> ragged = {ex(0, {0.2}, true), ex(1, {0.2, 0.3}, false)};
  CHECK_THROWS_AS(train(ragged), std::invalid_argument);
  std::vector<FeatureVector> wrong = {{PairKey(0, 1), {0.1, 0.2}}};
  CHECK_THROWS_AS(predict(model, wrong), std::invalid_argument);
  CHECK(predict(model, std::vector<FeatureVector>{}).empty());
}

TEST_CASE("training is deterministic") {
  Rng rng(3);
  auto data = separable(rng, 15, 30);
  data.push_back(ex(500, {0.1, 0.1}, true));  // label noise keeps some slack
  CHECK(train(data).dump() == train(data).dump());
}

TEST_CASE("soft margin on overlapping classes") {
  Rng rng(4);
  std::vector<LabeledPair> data;
  for (RecordId i = 0; i < 200; ++i) {
    const bool dup = i % 2 == 0;
    const double center = dup ? 0.6 : 0.4;
    data.push_back(ex(i, {center + 0.3 * (rng.uniform() - 0.5), rng.uniform()}, dup));
  }
  auto model = train(data);
  std::size_t correct = 0;
  for (const auto& d : data) correct += model.is_duplicate(d.features) == d.duplicate;
  CHECK(correct >= 150);
}

TEST_CASE("ensemble disagreement scores") {
  CHECK(vote_uncertainty(0.5) == 1.0);
  CHECK(vote_uncertainty(1.0) == 0.0);
  CHECK(vote_uncertainty(0.0) == 0.0);
  CHECK(vote_entropy(0.5) == doctest::Approx(1.0));
  CHECK(vote_entropy(0.0) == 0.0);
  CHECK(vote_entropy(1.0) == 0.0);
  CHECK(vote_entropy(0.8) == doctest::Approx(0.7219).epsilon(1e-3));
  for (int k = 0; k < 10; ++k) {
    const double p = k * 0.05;
    CHECK(vote_uncertainty(p) < vote_uncertainty(p + 0.05) + 1e-12);
    CHECK(vote_entropy(p) < vote_entropy(p + 0.05) + 1e-12);
    CHECK(vote_entropy(p) == doctest::Approx(vote_entropy(1 - p)));
  }

  Rng rng(5);
  auto data = separable(rng, 10, 10);
  std::vector<FeatureVector> far = {{PairKey(0, 1), {0.95, 0.95}}, {PairKey(0, 2), {0.0, 0.0}}};
  auto scores = ensemble_scores(data, far, 10, 9);
  REQUIRE(scores.size() == 2);
  for (const auto& s : scores) {
    CHECK(s.uncertainty == 0.0);
    CHECK(s.entropy == 0.0);
  }
  CHECK(scores[0].vote_fraction == 1.0);
  auto again = ensemble_scores(data, far, 10, 9);
  CHECK(again[0].vote_fraction == scores[0].vote_fraction);
  CHECK_THROWS_AS(ensemble_scores({}, far, 10, 1), std::invalid_argument);
}

TEST_CASE("f1") {
  CHECK(f1_score({2, 1, 1, 0}) == doctest::Approx(2.0 / 3));
  CHECK(f1_score({0, 0, 0, 5}) == 1.0);
  CHECK(f1_score({0, 0, 3, 5}) == 0.0);
  CHECK(f1_score({0, 2, 0, 5}) == 0.0);
  CHECK(f1_score({4, 0, 0, 1}) == 1.0);

  std::vector<LabeledPair> data = {ex(0, {0.9}, true), ex(1, {0.1}, false)};
  auto model = train(data);
  CHECK(f1_on_holdout(model, data) == 1.0);
  std::vector<LabeledPair> negatives = {ex(0, {0.2}, false)};
  auto never = train(negatives);
  CHECK(f1_on_holdout(never, data) == 0.0);
  CHECK_THROWS_AS(f1_on_holdout(model, {}), std::invalid_argument);
}
