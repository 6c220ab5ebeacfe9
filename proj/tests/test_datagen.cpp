#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gls/datagen.hpp"
#include "gls/rng.hpp"

using namespace gls;

namespace {

double radius(const LabeledDataset& ds, int i) { return std::hypot(ds.features(i, 0), ds.features(i, 1)); }

SyntheticSpec type1_spec(std::uint64_t seed, int n = 500) {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::type1;
  spec.n_per_class = n;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("type-1 samples respect their radii") {
  const LabeledDataset ds = gen_synthetic(type1_spec(1));
  CHECK(ds.size() == 1000);
  CHECK(ds.num_classes == 2);
  int inner = 0, outer = 0;
  for (int i = 0; i < ds.size(); ++i) {
    const double r = radius(ds, i);
    if (ds.labels[static_cast<std::size_t>(i)] == 0) {
      CHECK(r <= 0.25 + 1e-12);
      ++inner;
    } else {
      CHECK(r >= 0.28 - 1e-12);
      CHECK(r <= 0.45 + 1e-12);
      ++outer;
    }
  }
  CHECK(inner == 500);
  CHECK(outer == 500);
}

TEST_CASE("a radius threshold separates type-1 perfectly") {
  const LabeledDataset ds = gen_synthetic(type1_spec(2));
  int correct = 0;
  for (int i = 0; i < ds.size(); ++i) {
    const int predicted = radius(ds, i) < 0.265 ? 0 : 1;
    correct += predicted == ds.labels[static_cast<std::size_t>(i)];
  }
  CHECK(correct == ds.size());
}

TEST_CASE("disk sampling is uniform in squared radius") {
  const LabeledDataset ds = gen_synthetic(type1_spec(3, 10000));
  double mean_r2 = 0.0;
  int count = 0;
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels[static_cast<std::size_t>(i)] != 0) continue;
    const double r = radius(ds, i);
    mean_r2 += r * r;
    ++count;
  }
  mean_r2 /= count;
  // r^2 ~ U(0, R^2): mean R^2/2, sd R^2/sqrt(12)
  const double expected = 0.25 * 0.25 / 2.0;
  const double sigma = 0.25 * 0.25 / std::sqrt(12.0 * count);
  CHECK(std::abs(mean_r2 - expected) <= 3.0 * sigma);
}

TEST_CASE("generation is a pure function of the spec") {
  const LabeledDataset a = gen_synthetic(type1_spec(4));
  const LabeledDataset b = gen_synthetic(type1_spec(4));
  CHECK(a.features.data() == b.features.data());
  CHECK(a.labels == b.labels);
  const LabeledDataset c = gen_synthetic(type1_spec(5));
  CHECK(a.features.data() != c.features.data());
}

TEST_CASE("type-2 band relabeling, flip mode") {
  SyntheticSpec spec = type1_spec(6);
  spec.kind = SyntheticSpec::Kind::type2;
  spec.band_mode = SyntheticSpec::BandMode::flip_to_other;
  const LabeledDataset noisy = gen_synthetic(spec);
  const LabeledDataset clean = gen_synthetic(type1_spec(6));

  int band = 0, flipped = 0;
  for (int i = 0; i < noisy.size(); ++i) {
    const double r = radius(noisy, i);
    const bool in_band = r >= 0.22 && r <= 0.31;
    const bool changed = noisy.labels[static_cast<std::size_t>(i)] != clean.labels[static_cast<std::size_t>(i)];
    if (!in_band) CHECK_FALSE(changed);
    if (in_band) {
      ++band;
      flipped += changed;
    }
  }
  CHECK(band > 100);
  // half the band is selected and every selected label flips
  const double frac = static_cast<double>(flipped) / band;
  const double sigma = std::sqrt(0.5 * 0.5 / band);
  CHECK(std::abs(frac - 0.5) <= 3.0 * sigma);
}

TEST_CASE("type-2 band relabeling, fair-coin mode") {
  SyntheticSpec spec = type1_spec(7);
  spec.kind = SyntheticSpec::Kind::type2;
  spec.band_mode = SyntheticSpec::BandMode::uniform_random;
  const LabeledDataset noisy = gen_synthetic(spec);
  const LabeledDataset clean = gen_synthetic(type1_spec(7));

  int band = 0, flipped = 0;
  for (int i = 0; i < noisy.size(); ++i) {
    const double r = radius(noisy, i);
    if (r < 0.22 || r > 0.31) continue;
    ++band;
    flipped += noisy.labels[static_cast<std::size_t>(i)] != clean.labels[static_cast<std::size_t>(i)];
  }
  // half selected times half re-coined to the other class
  const double frac = static_cast<double>(flipped) / band;
  const double sigma = std::sqrt(0.25 * 0.75 / band);
  CHECK(std::abs(frac - 0.25) <= 3.0 * sigma);
}

TEST_CASE("invalid radii are rejected") {
  SyntheticSpec spec = type1_spec(8);
  spec.disk_radius = 0.30;  // above the annulus inner radius
  CHECK_THROWS_AS(gen_synthetic(spec), std::invalid_argument);
  spec = type1_spec(8);
  spec.n_per_class = 0;
  CHECK_THROWS_AS(gen_synthetic(spec), std::invalid_argument);
}

TEST_CASE("csv round trip") {
  const LabeledDataset ds = gen_synthetic(type1_spec(9, 50));
  const std::string path = (std::filesystem::temp_directory_path() / "gls_roundtrip.csv").string();
  save_csv(ds, path);
  const LabeledDataset back = load_csv(path);
  CHECK(back.size() == ds.size());
  CHECK(back.labels == ds.labels);
  for (int i = 0; i < ds.size(); ++i)
    for (int j = 0; j < ds.dim(); ++j)
      CHECK(std::abs(back.features(i, j) - ds.features(i, j)) <= 1e-9);
  std::filesystem::remove(path);
}

TEST_CASE("csv ingestion re-indexes labels densely") {
  const std::string path = (std::filesystem::temp_directory_path() / "gls_pm1.csv").string();
  {
    std::ofstream file(path);
    file << "f0,f1,label\n1.0,2.0,-1\n0.5,0.25,1\n-1.5,0.75,-1\n";
  }
  const LabeledDataset ds = load_csv(path);
  CHECK(ds.num_classes == 2);
  CHECK(ds.labels == std::vector<int>{0, 1, 0});
  CHECK(ds.features(1, 1) == 0.25);
  std::filesystem::remove(path);
}

TEST_CASE("csv ingestion keeps a clean-label column when present") {
  const std::string path = (std::filesystem::temp_directory_path() / "gls_clean.csv").string();
  {
    std::ofstream file(path);
    file << "f0,label,clean_label\n1.0,0,1\n2.0,1,1\n3.0,0,0\n";
  }
  const LabeledDataset ds = load_csv(path);
  CHECK(ds.labels == std::vector<int>{0, 1, 0});
  CHECK(ds.clean_labels == std::vector<int>{1, 1, 0});
  std::filesystem::remove(path);
}

TEST_CASE("csv error paths") {
  CHECK_THROWS_AS(load_csv("/nonexistent/data.csv"), std::runtime_error);

  const std::string path = (std::filesystem::temp_directory_path() / "gls_bad.csv").string();
  {
    std::ofstream file(path);
    file << "f0,label\nabc,0\n1.0,1\n";
  }
  CHECK_THROWS_AS(load_csv(path), std::runtime_error);
  {
    std::ofstream file(path);
    file << "f0,label\n1.0,0\n2.0,0\n";
  }
  CHECK_THROWS_AS(load_csv(path), std::runtime_error);  // single class
  std::filesystem::remove(path);
}

TEST_CASE("standardization uses training statistics and zeroes constant columns") {
  LabeledDataset train;
  train.num_classes = 2;
  train.features = Mat(4, 2);
  const double values[4] = {1.0, 2.0, 3.0, 4.0};
  for (int i = 0; i < 4; ++i) {
    train.features(i, 0) = values[i];
    train.features(i, 1) = 7.0;  // constant column
    train.labels.push_back(i % 2);
  }
  LabeledDataset test = train;

  standardize_features(train, {&test});
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < 4; ++i) mean += train.features(i, 0);
  mean /= 4;
  for (int i = 0; i < 4; ++i) var += (train.features(i, 0) - mean) * (train.features(i, 0) - mean);
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(var / 4 == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < 4; ++i) {
    CHECK(train.features(i, 1) == 0.0);
    CHECK(test.features(i, 0) == train.features(i, 0));
  }
}

TEST_CASE("stratified split") {
  const LabeledDataset ds = gen_synthetic(type1_spec(10));
  const SplitResult parts = split(ds, 0.6, 0.2, 0.2, 42);
  CHECK(parts.train.size() == 600);
  CHECK(parts.val.size() == 200);
  CHECK(parts.test.size() == 200);

  // per-class counts stay balanced
  auto count_ones = [](const LabeledDataset& d) {
    int ones = 0;
    for (int y : d.labels) ones += y;
    return ones;
  };
  CHECK(count_ones(parts.train) == 300);
  CHECK(count_ones(parts.val) == 100);
  CHECK(count_ones(parts.test) == 100);

  // determinism
  const SplitResult again = split(ds, 0.6, 0.2, 0.2, 42);
  CHECK(again.train.labels == parts.train.labels);
  CHECK(again.train.features.data() == parts.train.features.data());

  const SplitResult other = split(ds, 0.6, 0.2, 0.2, 43);
  CHECK(other.train.features.data() != parts.train.features.data());

  CHECK_THROWS_AS(split(ds, 0.5, 0.2, 0.2, 1), std::invalid_argument);  // doesn't sum to 1
  LabeledDataset tiny;
  tiny.num_classes = 2;
  tiny.features = Mat(2, 1);
  tiny.labels = {0, 1};
  CHECK_THROWS_AS(split(tiny, 0.8, 0.1, 0.1, 1), std::invalid_argument);  // empty val/test
}
