#include "gls/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gls/rng.hpp"

namespace gls {

namespace {

double log_floored(double p) { return std::log(p < kProbFloor ? kProbFloor : p); }

void check_class(int y, int k) {
  if (y < 0 || y >= k) throw std::invalid_argument("class index out of range");
}

}  // namespace

double ce(const ProbVector& p, int y) {
  check_class(y, p.num_classes());
  return -log_floored(p[y]);
}

double ce_soft(const ProbVector& p, const Vec& target) {
  if (static_cast<int>(target.size()) != p.num_classes())
    throw std::invalid_argument("target length does not match prediction");
  double loss = 0.0;
  for (int k = 0; k < p.num_classes(); ++k) loss -= target[static_cast<std::size_t>(k)] * log_floored(p[k]);
  return loss;
}

double ce_soft(const ProbVector& p, const SoftLabel& target) { return ce_soft(p, target.weights); }

double gls_loss(const ProbVector& p, int y, double rate) {
  if (!(rate <= 1.0)) throw std::invalid_argument("smooth rate must be <= 1");
  if (!std::isfinite(rate)) throw std::invalid_argument("smooth rate must be finite");
  check_class(y, p.num_classes());
  const int k = p.num_classes();
  double sum_all = 0.0;
  for (int j = 0; j < k; ++j) sum_all += -log_floored(p[j]);
  return (1.0 - rate) * ce(p, y) + rate / k * sum_all;
}

double backward_loss(const ProbVector& p, int noisy_y, const TransitionMatrix& t) {
  if (t.num_classes() != p.num_classes()) throw std::invalid_argument("transition size does not match prediction");
  return backward_loss_with_inverse(p, noisy_y, t.inverse());
}

double backward_loss_with_inverse(const ProbVector& p, int noisy_y, const Mat& t_inverse) {
  check_class(noisy_y, p.num_classes());
  double loss = 0.0;
  for (int j = 0; j < p.num_classes(); ++j) loss += t_inverse(noisy_y, j) * (-log_floored(p[j]));
  return loss;
}

double forward_loss(const ProbVector& p, int noisy_y, const TransitionMatrix& t) {
  if (t.num_classes() != p.num_classes()) throw std::invalid_argument("transition size does not match prediction");
  check_class(noisy_y, p.num_classes());
  double mixed = 0.0;
  for (int i = 0; i < p.num_classes(); ++i) mixed += p[i] * t(i, noisy_y);
  if (!(mixed > 0.0)) throw std::domain_error("forward-corrected probability is not positive");
  return -std::log(mixed);
}

double complementary_loss(const ProbVector& p, int noisy_y) {
  if (p.num_classes() != 2) throw std::invalid_argument("complementary loss is binary only");
  check_class(noisy_y, 2);
  return ce(p, noisy_y) - ce(p, 1 - noisy_y);
}

double peer_loss_expected(const ProbVector& p, int noisy_y, const Vec& noisy_prior) {
  if (static_cast<int>(noisy_prior.size()) != p.num_classes())
    throw std::invalid_argument("prior length does not match prediction");
  double prior_sum = 0.0;
  for (double q : noisy_prior) prior_sum += q;
  if (std::abs(prior_sum - 1.0) > 1e-9) throw std::invalid_argument("noisy prior must sum to 1 within 1e-9");
  double peer_term = 0.0;
  for (int k = 0; k < p.num_classes(); ++k) peer_term += noisy_prior[static_cast<std::size_t>(k)] * ce(p, k);
  return ce(p, noisy_y) - peer_term;
}

double peer_loss_sampled(std::span<const ProbVector> preds, std::span<const int> noisy_labels, std::uint64_t seed) {
  const int n = static_cast<int>(preds.size());
  if (n < 2) throw std::invalid_argument("peer loss needs a batch of at least 2 samples");
  if (noisy_labels.size() != preds.size()) throw std::invalid_argument("batch size mismatch");
  Rng rng(seed);
  const std::vector<int> pi1 = rng.permutation(n);
  const std::vector<int> pi2 = rng.permutation(n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    loss += ce(preds[ui], noisy_labels[ui]);
    loss -= ce(preds[static_cast<std::size_t>(pi1[ui])], noisy_labels[static_cast<std::size_t>(pi2[ui])]);
  }
  return loss / n;
}

double gls_c_penalty(std::span<const ProbVector> clean_preds, std::span<const int> clean_labels, double rate,
                     double e0_hat, double e1_hat) {
  if (clean_preds.size() != clean_labels.size()) throw std::invalid_argument("clean subset size mismatch");
  double margin_sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < clean_preds.size(); ++i) {
    if (clean_labels[i] != 1) continue;
    margin_sum += ce(clean_preds[i], 1) - ce(clean_preds[i], 0);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("gls_c penalty needs at least one clean sample with label 1");
  return (e1_hat - e0_hat) * (1.0 - rate) * (margin_sum / count);
}

LossSpec LossSpec::smoothed(double rate) {
  if (!(rate <= 1.0)) throw std::invalid_argument("smooth rate must be <= 1");
  LossSpec s;
  s.kind = Kind::gls;
  s.rate = rate;
  return s;
}

LossSpec LossSpec::extreme_smoothed() {
  LossSpec s;
  s.kind = Kind::gls;
  s.rate = -std::numeric_limits<double>::infinity();
  return s;
}

LossSpec LossSpec::backward_corrected(TransitionMatrix t) {
  if (std::abs(t.determinant()) <= kSingularDetThreshold)
    throw std::invalid_argument("backward correction needs an invertible transition matrix");
  LossSpec s;
  s.kind = Kind::backward;
  s.transition = std::move(t);
  return s;
}

LossSpec LossSpec::forward_corrected(TransitionMatrix t) {
  LossSpec s;
  s.kind = Kind::forward;
  s.transition = std::move(t);
  return s;
}

LossSpec LossSpec::complementary() {
  LossSpec s;
  s.kind = Kind::complementary;
  return s;
}

LossSpec LossSpec::peer(Vec noisy_prior) {
  LossSpec s;
  s.kind = Kind::peer_expected;
  s.peer_prior = std::move(noisy_prior);
  return s;
}

LossSpec LossSpec::peer_with_pairing(std::uint64_t pairing_seed) {
  LossSpec s;
  s.kind = Kind::peer_sampled;
  s.pairing_seed = pairing_seed;
  return s;
}

LossSpec LossSpec::confidence_corrected(double rate, double e0_hat, double e1_hat,
                                        std::shared_ptr<const LabeledDataset> clean_subset) {
  if (!(rate <= 1.0)) throw std::invalid_argument("smooth rate must be <= 1");
  if (!clean_subset || clean_subset->size() == 0)
    throw std::invalid_argument("gls_c needs a nonempty clean subset");
  LossSpec s;
  s.kind = Kind::gls_c;
  s.rate = rate;
  s.e0_hat = e0_hat;
  s.e1_hat = e1_hat;
  s.clean_subset = std::move(clean_subset);
  return s;
}

bool LossSpec::is_extreme_rate() const {
  return kind == Kind::gls && std::isinf(rate) && rate < 0.0;
}

std::string LossSpec::name() const {
  switch (kind) {
    case Kind::gls:
      return is_extreme_rate() ? "gls(neg-inf)" : "gls(" + std::to_string(rate) + ")";
    case Kind::backward:
      return "backward";
    case Kind::forward:
      return "forward";
    case Kind::complementary:
      return "complementary";
    case Kind::peer_expected:
      return "peer-expected";
    case Kind::peer_sampled:
      return "peer-sampled";
    case Kind::gls_c:
      return "gls-c(" + std::to_string(rate) + ")";
  }
  return "unknown";
}

}  // namespace gls
