#pragma once

#include <cstdint>

#include "gls/core.hpp"

namespace gls {

// Resamples each label from row T[y]; originals land in clean_labels.
// Deterministic given seed (one uniform draw per sample, inverse CDF).
LabeledDataset inject_noise(const LabeledDataset& ds, const TransitionMatrix& t, std::uint64_t seed);

// (r* - 2e) / (1 - 2e); requires e in [0, 1/2)
double r_opt_binary(double r_star, double e);

// ((K-1) r* - K eps) / ((K-1) - K eps); requires eps < (K-1)/K
double r_opt_multiclass(double r_star, double epsilon, int num_classes);

// r_lc = 2 e1 / (2 e1 - 1); the bias weight is e_delta * lambda_factor with
// lambda_factor = 1 / (1 - 2 e1)
struct CorrectionRate {
  double r_lc = 0.0;
  double lambda_factor = 1.0;
};
CorrectionRate correction_rate_r_lc(double e1);

// r_pl = 2 P(noisy=1), lambda_pl = 1 - r_pl
struct PeerRate {
  double r_pl = 0.0;
  double lambda_pl = 1.0;
};
PeerRate peer_rate_r_pl(double noisy_prior_1);

// eps' = K eps / (K-1); c3 = (1-r)(1-eps'); c4 = ((1-r) eps' + r) / K
struct SymmetricNoiseConstants {
  double eps_prime = 0.0;
  double c3 = 1.0;
  double c4 = 0.0;
};
SymmetricNoiseConstants symmetric_noise_constants(double epsilon, double rate, int num_classes);

// Coefficients of the noisy-risk decomposition
//   E_noisy[gls(r)] = true_risk_scale * E_clean[ce vs r*-smoothed label]
//                     + lambda1 * E[ce(1-Y) - ce(Y)]           (binary)
//                     + lambda2 * E_{Y=1}[ce(0) - ce(1)]       (binary)
//   E_noisy[gls(r)] = true_risk_scale * E_clean[...] + minc1_scale * E_X[sum_j ce(j)]  (multi-class)
//
// Two algebraic conventions for the binary lambda1 are in circulation,
// one written with e1 and one with e0. Exactly one closes the identity
// for asymmetric rates; the verification suite certifies which.
struct DecompositionCoeffs {
  double lambda1_statement = 0.0;  // (e1 - r*/2) + (1 - 2 e1) r/2
  double lambda1_proof = 0.0;      // (e0 - r*/2) + (1 - 2 e0) r/2
  double lambda2 = 0.0;            // e_delta * (1 - r)
  double true_risk_scale = 1.0;    // 1 binary; c3/(1-r*) multi-class
  double minc1_scale = 0.0;        // multi-class: c4 - c3 r* / ((1-r*) K)
};

DecompositionCoeffs decomposition_coeffs_binary(double e0, double e1, double rate, double r_star);
DecompositionCoeffs decomposition_coeffs_multiclass(double epsilon, double rate, double r_star, int num_classes);

}  // namespace gls
