#include <doctest.h>

#include <cmath>

#include "gls/metrics.hpp"
#include "gls/rng.hpp"

using namespace gls;

namespace {

ProbVector random_prob2(Rng& rng) {
  const double p = rng.uniform(0.01, 0.99);
  return ProbVector{{p, 1.0 - p}};
}

// logits equal the input features, so predictions are fully scripted
MlpModel passthrough_model() {
  MlpModel m = make_mlp({2, 2}, 1);
  m.weights[0] = Mat(2, 2);
  m.weights[0](0, 0) = 1.0;
  m.weights[0](1, 1) = 1.0;
  m.biases[0] = Vec{0.0, 0.0};
  return m;
}

}  // namespace

TEST_CASE("model confidence") {
  CHECK(model_confidence(ProbVector{{0.8, 0.2}}, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(model_confidence(ProbVector{{0.8, 0.2}}, 1) == doctest::Approx(-0.6).epsilon(1e-12));
  CHECK(model_confidence(ProbVector{{0.7, 0.2, 0.1}}, 0) == doctest::Approx(0.55).epsilon(1e-12));

  for (int k : {2, 3, 10}) {
    const ProbVector uniform{Vec(static_cast<std::size_t>(k), 1.0 / k)};
    for (int y = 0; y < k; ++y) CHECK(model_confidence(uniform, y) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("multi-class confidence reduces to the binary margin at K=2") {
  Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    const ProbVector p = random_prob2(rng);
    const int y = static_cast<int>(rng.uniform_index(2));
    const double margin = p[y] - p[1 - y];
    CHECK(std::abs(model_confidence(p, y) - margin) <= 1e-12);
  }
}

TEST_CASE("loss-based confidence") {
  CHECK(loss_confidence(ProbVector{{0.5, 0.5}}, 0) == doctest::Approx(0.0));
  CHECK(loss_confidence(ProbVector{{0.8, 0.2}}, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(loss_confidence(ProbVector{{0.8, 0.2}}, 0) == doctest::Approx(1.3862943611198906).epsilon(1e-9));

  Rng rng(32);
  for (int t = 0; t < 200; ++t) {
    const ProbVector p = random_prob2(rng);
    const int y = static_cast<int>(rng.uniform_index(2));
    CHECK(loss_confidence(p, 1 - y) == doctest::Approx(-loss_confidence(p, y)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(loss_confidence(ProbVector{{0.5, 0.3, 0.2}}, 0), std::invalid_argument);
}

TEST_CASE("margin and log-odds confidences order models identically") {
  Rng rng(33);
  for (int t = 0; t < 1000; ++t) {
    const ProbVector a = random_prob2(rng);
    const ProbVector b = random_prob2(rng);
    const int y = static_cast<int>(rng.uniform_index(2));
    const double mc_gap = model_confidence(a, y) - model_confidence(b, y);
    const double lc_gap = loss_confidence(a, y) - loss_confidence(b, y);
    if (std::abs(mc_gap) > 1e-12) CHECK(mc_gap * lc_gap > 0.0);
  }
}

TEST_CASE("confidence partition on a scripted model") {
  const MlpModel m = passthrough_model();
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.features = Mat(4, 2);
  // logits (x0, x1): margins +, -, 0, +
  const double rows[4][2] = {{2.0, 0.0}, {0.0, 2.0}, {1.0, 1.0}, {3.0, 1.0}};
  for (int i = 0; i < 4; ++i) {
    ds.features(i, 0) = rows[i][0];
    ds.features(i, 1) = rows[i][1];
  }
  ds.labels = {0, 0, 0, 0};

  const auto [d_plus, d_minus] = partition_by_confidence(m, ds);
  CHECK(d_plus == std::vector<int>{0, 3});
  CHECK(d_minus == std::vector<int>{1, 2});  // zero margin lands in the wrong-side pool

  const ConfidenceReport rep = confidence_report(m, ds);
  CHECK(rep.d_plus_count == 2);
  CHECK(rep.d_minus_count == 2);
  CHECK(rep.mc_correct_mean > 0.0);
  CHECK(rep.mc_wrong_mean <= 0.0);
  CHECK(rep.expected_mc ==
        doctest::Approx((rep.mc[0] + rep.mc[1] + rep.mc[2] + rep.mc[3]) / 4.0).epsilon(1e-12));

  // a uniform model puts every sample in the wrong-side pool
  MlpModel zero = make_mlp({2, 2}, 2);
  zero.weights[0] = Mat(2, 2);
  zero.biases[0] = Vec{0.0, 0.0};
  const auto [plus, minus] = partition_by_confidence(zero, ds);
  CHECK(plus.empty());
  CHECK(minus.size() == 4);
}

TEST_CASE("bias and variance over replicate predictions") {
  const std::vector<int> labels{0};

  // identical replicates: variance is exactly zero, bias is the mean CE
  {
    std::vector<std::vector<ProbVector>> reps(3, std::vector<ProbVector>{ProbVector{{0.8, 0.2}}});
    const BiasVarianceReport rep = bias_variance_from_predictions(reps, labels, 2);
    CHECK(rep.variance == 0.0);
    CHECK(rep.bias == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
    CHECK(rep.num_replicates == 3);
  }

  // mirrored pair: geometric mean is uniform, variance is the hand value
  {
    std::vector<std::vector<ProbVector>> reps{{ProbVector{{0.8, 0.2}}}, {ProbVector{{0.2, 0.8}}}};
    const BiasVarianceReport rep = bias_variance_from_predictions(reps, labels, 2);
    CHECK(rep.variance == doctest::Approx(0.2231435513142097).epsilon(1e-6));
    CHECK(rep.bias == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }

  // highly confident identical replicates have vanishing bias
  {
    std::vector<std::vector<ProbVector>> reps(2, std::vector<ProbVector>{ProbVector{{1.0 - 1e-7, 1e-7}}});
    const BiasVarianceReport rep = bias_variance_from_predictions(reps, labels, 2);
    CHECK(rep.bias <= -std::log(1.0 - 1e-7 * 1.0) + 1e-9);
    CHECK(rep.bias >= 0.0);
  }

  std::vector<std::vector<ProbVector>> one(1, std::vector<ProbVector>{ProbVector{{0.5, 0.5}}});
  CHECK_THROWS_AS(bias_variance_from_predictions(one, labels, 2), std::invalid_argument);
}

TEST_CASE("bias and variance are nonnegative on random replicates") {
  Rng rng(34);
  for (int t = 0; t < 50; ++t) {
    const int reps = 2 + static_cast<int>(rng.uniform_index(4));
    const int n = 1 + static_cast<int>(rng.uniform_index(6));
    std::vector<std::vector<ProbVector>> preds(static_cast<std::size_t>(reps));
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_index(2)));
    for (int rep = 0; rep < reps; ++rep)
      for (int i = 0; i < n; ++i) preds[static_cast<std::size_t>(rep)].push_back(random_prob2(rng));
    const BiasVarianceReport out = bias_variance_from_predictions(preds, labels, 2);
    CHECK(out.bias >= 0.0);
    CHECK(out.variance >= -1e-15);
  }
}

TEST_CASE("model-based bias/variance wrapper agrees with the prediction form") {
  const MlpModel a = make_mlp({2, 4, 2}, 10);
  const MlpModel b = make_mlp({2, 4, 2}, 11);
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.features = Mat(6, 2);
  Rng rng(35);
  for (int i = 0; i < 6; ++i) {
    ds.features(i, 0) = rng.uniform(-1.0, 1.0);
    ds.features(i, 1) = rng.uniform(-1.0, 1.0);
    ds.labels.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  std::vector<MlpModel> models{a, b};
  const BiasVarianceReport via_models = bias_variance(models, ds);

  std::vector<std::vector<ProbVector>> preds(2);
  for (int rep = 0; rep < 2; ++rep)
    for (int i = 0; i < 6; ++i)
      preds[static_cast<std::size_t>(rep)].push_back(forward(models[static_cast<std::size_t>(rep)], ds.sample(i)));
  const BiasVarianceReport via_preds = bias_variance_from_predictions(preds, ds.labels, 2);
  CHECK(via_models.bias == doctest::Approx(via_preds.bias).epsilon(1e-15));
  CHECK(via_models.variance == doctest::Approx(via_preds.variance).epsilon(1e-15));
}
