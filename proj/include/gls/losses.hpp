#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "gls/core.hpp"

namespace gls {

// Probabilities are floored at this value before any log; smoothed-label
// objectives with r < 0 are unbounded below otherwise.
inline constexpr double kProbFloor = 1e-7;

// -log(max(p_y, floor))
double ce(const ProbVector& p, int y);

// -sum_k target_k * log(max(p_k, floor)); target may have negative entries
// and need not sum to 1.
double ce_soft(const ProbVector& p, const Vec& target);
double ce_soft(const ProbVector& p, const SoftLabel& target);

// (1-r)*ce(p,y) + (r/K)*sum_j ce(p,j)
double gls_loss(const ProbVector& p, int y, double rate);

// sum_j inv(T)[noisy_y][j] * ce(p, j)
double backward_loss(const ProbVector& p, int noisy_y, const TransitionMatrix& t);
// same, with a precomputed inverse (training loop path)
double backward_loss_with_inverse(const ProbVector& p, int noisy_y, const Mat& t_inverse);

// -log(sum_i p_i * T[i][noisy_y])
double forward_loss(const ProbVector& p, int noisy_y, const TransitionMatrix& t);

// ce(p, noisy_y) - ce(p, 1-noisy_y); binary only
double complementary_loss(const ProbVector& p, int noisy_y);

// ce(p, noisy_y) - sum_k prior_k * ce(p, k)
double peer_loss_expected(const ProbVector& p, int noisy_y, const Vec& noisy_prior);

// mean_i [ ce(p_i, y_i) - ce(p_{pi1(i)}, y_{pi2(i)}) ] with pi1, pi2
// independent uniform permutations drawn from seed
double peer_loss_sampled(std::span<const ProbVector> preds, std::span<const int> noisy_labels, std::uint64_t seed);

// (e1_hat - e0_hat) * (1-r) * mean over clean-label-1 samples of [ce(p,1) - ce(p,0)]
double gls_c_penalty(std::span<const ProbVector> clean_preds, std::span<const int> clean_labels, double rate,
                     double e0_hat, double e1_hat);

struct LossSpec {
  enum class Kind { gls, backward, forward, complementary, peer_expected, peer_sampled, gls_c };

  Kind kind = Kind::gls;
  // gls / gls_c smooth rate; -infinity selects the normalized extreme-label
  // objective (the r -> -inf limit of gls/(1-r))
  double rate = 0.0;
  TransitionMatrix transition;  // backward / forward
  Vec peer_prior;               // peer_expected
  std::uint64_t pairing_seed = 0;
  double e0_hat = 0.0, e1_hat = 0.0;                    // gls_c
  std::shared_ptr<const LabeledDataset> clean_subset;   // gls_c

  static LossSpec smoothed(double rate);
  static LossSpec extreme_smoothed();  // rate = -inf sentinel
  static LossSpec backward_corrected(TransitionMatrix t);
  static LossSpec forward_corrected(TransitionMatrix t);
  static LossSpec complementary();
  static LossSpec peer(Vec noisy_prior);
  static LossSpec peer_with_pairing(std::uint64_t pairing_seed);
  static LossSpec confidence_corrected(double rate, double e0_hat, double e1_hat,
                                       std::shared_ptr<const LabeledDataset> clean_subset);

  bool is_extreme_rate() const;
  std::string name() const;
};

}  // namespace gls
