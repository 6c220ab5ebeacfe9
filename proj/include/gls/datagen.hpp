#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gls/core.hpp"

namespace gls {

// Two concentric-region binary datasets: class 0 uniform in a disk, class 1
// uniform in an annulus. type2 additionally re-labels a random half of the
// samples whose radius falls inside a boundary band.
struct SyntheticSpec {
  enum class Kind { type1, type2 };
  enum class BandMode {
    flip_to_other,   // selected samples get the opposite label
    uniform_random,  // selected samples get a fair-coin label
  };

  Kind kind = Kind::type1;
  int n_per_class = 500;
  std::uint64_t seed = 0;
  double disk_radius = 0.25;
  double annulus_inner = 0.28;
  double annulus_outer = 0.45;
  double band_inner = 0.22;
  double band_outer = 0.31;
  double band_select_prob = 0.5;
  BandMode band_mode = BandMode::flip_to_other;
};

LabeledDataset gen_synthetic(const SyntheticSpec& spec);

// CSV with a header row; numeric feature columns; label column re-indexed
// densely to [0, K). Standardization is a separate step (train-split stats).
LabeledDataset load_csv(const std::string& path, const std::string& label_column = "label", char delimiter = ',');
void save_csv(const LabeledDataset& ds, const std::string& path, char delimiter = ',');

struct SplitResult {
  LabeledDataset train, val, test;
};

// Class-stratified; seeded permutation then contiguous split. Fractions must
// be positive (val_frac may be 0) and sum to 1.
SplitResult split(const LabeledDataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed);

// Per-feature mean-0/std-1 using statistics of `train` only; applied to train
// and every dataset in `others`. Constant columns map to zero (std floor 1e-12).
void standardize_features(LabeledDataset& train, const std::vector<LabeledDataset*>& others);

}  // namespace gls
