#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gls/core.hpp"
#include "gls/trainer.hpp"

namespace gls {

// Binary: p_y - p_{1-y}. K-class: p_y - mean of the other classes'
// probabilities; reduces to the binary form at K = 2.
double model_confidence(const ProbVector& p, int y);

// log(p_y / p_{1-y}); binary only. Same sign as model_confidence.
double loss_confidence(const ProbVector& p, int y);

struct ConfidenceReport {
  std::vector<double> mc;          // per sample
  double expected_mc = 0.0;
  double mc_correct_mean = 0.0;    // mean over the mc > 0 sub-population (0 if empty)
  double mc_wrong_mean = 0.0;      // mean over the mc <= 0 sub-population (0 if empty)
  int d_plus_count = 0;
  int d_minus_count = 0;
};
ConfidenceReport confidence_report(const MlpModel& m, const LabeledDataset& ds);

// d_plus = {i : mc_i > 0}, d_minus = {i : mc_i <= 0}
std::pair<std::vector<int>, std::vector<int>> partition_by_confidence(const MlpModel& m, const LabeledDataset& ds);

struct BiasVarianceReport {
  double bias = 0.0;
  double variance = 0.0;
  int num_replicates = 0;
};

// Averaged prediction is the per-sample normalized geometric mean across
// replicates (log-space, floored at kProbFloor). bias = mean -log fbar_y;
// variance = mean over replicates of KL(fbar || replicate).
BiasVarianceReport bias_variance_from_predictions(const std::vector<std::vector<ProbVector>>& replicate_preds,
                                                  std::span<const int> labels, int num_classes);

BiasVarianceReport bias_variance(std::span<const MlpModel> replicates, const LabeledDataset& eval_ds);

}  // namespace gls
