#include "gls/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "gls/losses.hpp"

namespace gls {

double model_confidence(const ProbVector& p, int y) {
  const int k = p.num_classes();
  if (y < 0 || y >= k) throw std::invalid_argument("label out of range");
  if (k == 2) return p[y] - p[1 - y];
  double others = 0.0;
  for (int i = 0; i < k; ++i)
    if (i != y) others += p[i];
  return p[y] - others / (k - 1);
}

double loss_confidence(const ProbVector& p, int y) {
  if (p.num_classes() != 2) throw std::invalid_argument("loss confidence is binary only");
  if (y < 0 || y >= 2) throw std::invalid_argument("label out of range");
  return std::log(p[y] / p[1 - y]);
}

ConfidenceReport confidence_report(const MlpModel& m, const LabeledDataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("empty dataset");
  ConfidenceReport rep;
  rep.mc.reserve(static_cast<std::size_t>(ds.size()));
  double total = 0.0, plus_sum = 0.0, minus_sum = 0.0;
  for (int i = 0; i < ds.size(); ++i) {
    const double mc = model_confidence(forward(m, ds.sample(i)), ds.labels[static_cast<std::size_t>(i)]);
    rep.mc.push_back(mc);
    total += mc;
    if (mc > 0.0) {
      ++rep.d_plus_count;
      plus_sum += mc;
    } else {
      ++rep.d_minus_count;
      minus_sum += mc;
    }
  }
  rep.expected_mc = total / ds.size();
  rep.mc_correct_mean = rep.d_plus_count > 0 ? plus_sum / rep.d_plus_count : 0.0;
  rep.mc_wrong_mean = rep.d_minus_count > 0 ? minus_sum / rep.d_minus_count : 0.0;
  return rep;
}

std::pair<std::vector<int>, std::vector<int>> partition_by_confidence(const MlpModel& m, const LabeledDataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("empty dataset");
  std::vector<int> d_plus, d_minus;
  for (int i = 0; i < ds.size(); ++i) {
    const double mc = model_confidence(forward(m, ds.sample(i)), ds.labels[static_cast<std::size_t>(i)]);
    (mc > 0.0 ? d_plus : d_minus).push_back(i);
  }
  return {std::move(d_plus), std::move(d_minus)};
}

BiasVarianceReport bias_variance_from_predictions(const std::vector<std::vector<ProbVector>>& replicate_preds,
                                                  std::span<const int> labels, int num_classes) {
  const int reps = static_cast<int>(replicate_preds.size());
  if (reps < 2) throw std::invalid_argument("bias/variance needs at least 2 replicates");
  const std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("empty evaluation set");
  for (const auto& preds : replicate_preds)
    if (preds.size() != n) throw std::invalid_argument("replicate prediction count mismatch");

  // fbar = exp(mean log f) / Z per sample, accumulated in log space; the
  // geometric mean of identical replicates is taken verbatim so their KL
  // contributions are exact zeros
  std::vector<Vec> fbar(n, Vec(static_cast<std::size_t>(num_classes), 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    bool identical = true;
    for (int rep = 1; rep < reps && identical; ++rep)
      identical = replicate_preds[static_cast<std::size_t>(rep)][i].probs ==
                  replicate_preds[0][i].probs;
    if (identical) {
      fbar[i] = replicate_preds[0][i].probs;
      continue;
    }
    Vec log_mean(static_cast<std::size_t>(num_classes), 0.0);
    for (int rep = 0; rep < reps; ++rep) {
      const ProbVector& p = replicate_preds[static_cast<std::size_t>(rep)][i];
      for (int kk = 0; kk < num_classes; ++kk)
        log_mean[static_cast<std::size_t>(kk)] += std::log(std::max(p[kk], kProbFloor));
    }
    double z = 0.0;
    for (int kk = 0; kk < num_classes; ++kk) {
      fbar[i][static_cast<std::size_t>(kk)] = std::exp(log_mean[static_cast<std::size_t>(kk)] / reps);
      z += fbar[i][static_cast<std::size_t>(kk)];
    }
    for (double& v : fbar[i]) v /= z;
  }

  BiasVarianceReport rep;
  rep.num_replicates = reps;
  double bias_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    bias_sum += -std::log(std::max(fbar[i][static_cast<std::size_t>(labels[i])], kProbFloor));
  rep.bias = bias_sum / static_cast<double>(n);

  double var_sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const ProbVector& p = replicate_preds[static_cast<std::size_t>(r)][i];
      for (int kk = 0; kk < num_classes; ++kk) {
        const double fb = fbar[i][static_cast<std::size_t>(kk)];
        if (fb <= 0.0) continue;
        var_sum += fb * std::log(fb / std::max(p[kk], kProbFloor));
      }
    }
  }
  rep.variance = var_sum / (static_cast<double>(reps) * static_cast<double>(n));
  return rep;
}

BiasVarianceReport bias_variance(std::span<const MlpModel> replicates, const LabeledDataset& eval_ds) {
  if (replicates.size() < 2) throw std::invalid_argument("bias/variance needs at least 2 replicates");
  if (eval_ds.size() == 0) throw std::invalid_argument("empty evaluation set");
  std::vector<std::vector<ProbVector>> preds(replicates.size());
  for (std::size_t r = 0; r < replicates.size(); ++r) {
    preds[r].reserve(static_cast<std::size_t>(eval_ds.size()));
    for (int i = 0; i < eval_ds.size(); ++i) preds[r].push_back(forward(replicates[r], eval_ds.sample(i)));
  }
  return bias_variance_from_predictions(preds, eval_ds.labels, eval_ds.num_classes);
}

}  // namespace gls
