#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gls/core.hpp"

namespace gls {

struct IdentityReport {
  std::string name;
  double max_abs_residual = 0.0;
  long trials = 0;
  bool pass = false;
  double tolerance = 0.0;
  std::string detail;  // e.g. which coefficient candidate closed the identity
};

// Finite evaluation set with fixed predictions per sample. Expectations over
// the noise model are computed analytically against the transition matrix
// (no sampling), so identity tolerances are pure floating-point bounds.
// E_{X,Y=i}[g] follows the sub-population convention: (1/N) * sum over
// {i : y_i = cls} of g.
struct AnalyticRiskContext {
  std::vector<ProbVector> predictions;
  std::vector<int> clean_labels;
  int num_classes = 2;

  int size() const { return static_cast<int>(clean_labels.size()); }
};

// Random simplex predictions with every entry >= min_prob (identities are
// exercised away from the clamp floor); labels uniform.
AnalyticRiskContext make_random_context(int n, int num_classes, std::uint64_t seed, double min_prob = 1e-3);

// Same, but with exactly round(n * prior_1) labels equal to 1 (binary).
AnalyticRiskContext make_context_with_prior(int n, double prior_1, std::uint64_t seed, double min_prob = 1e-3);

// gls(p, y, -r) == 2*ce(p, y) - gls(p, y, r) for r in [0, 1], pointwise
IdentityReport check_theorem1(long trials, std::uint64_t seed);

// three routes to the smoothed loss agree: ce_soft on the smoothed label,
// the (1-r, r/K) linear form, and the binary (1-r/2, r/2) form
IdentityReport check_lemma1(long trials, std::uint64_t seed);

// backward correction vs gls(r_lc): pointwise when e0 == e1; at the risk
// level with the bias term otherwise. Also certifies both equal the clean
// CE risk, and which bias sub-population closes the identity.
IdentityReport check_loss_correction(double e0, double e1, const AnalyticRiskContext& ctx);

// gls(p, y, r)/(1 - r/2) -> complementary loss as r -> -inf, with residual
// bounded by 4*logRange/|r| and monotonically decreasing along r_sequence
IdentityReport check_complementary_limit(const std::vector<ProbVector>& p_samples,
                                         const std::vector<double>& r_sequence);
// per-step residuals of the same sweep (index-aligned with r_sequence)
std::vector<double> complementary_limit_residuals(const std::vector<ProbVector>& p_samples,
                                                  const std::vector<double>& r_sequence);

// peer risk == E[ce - gls(r_pl)] + lambda_pl * Bias-PL; at prior 1/2 also
// peer risk == E[complementary]/2
IdentityReport check_peer(const AnalyticRiskContext& ctx, double noisy_prior_1);

// noisy gls risk == TrueRisk(r*) + lambda1 * M-Inc1 + lambda2 * M-Inc2;
// certifies exactly one lambda1 candidate closes the identity when e0 != e1,
// and that lambda1 vanishes at r_opt under symmetric rates
IdentityReport check_decomposition_binary(const AnalyticRiskContext& ctx, double e0, double e1, double rate,
                                          double r_star);

// noisy gls risk == (c3/(1-r*)) * E[ce vs Y*] + (c4 - c3 r*/((1-r*)K)) * E[sum_j ce(j)]
IdentityReport check_decomposition_multiclass(const AnalyticRiskContext& ctx, double epsilon, double rate,
                                              double r_star);

// E_clean[gls(r)] == E_clean[ce] + (r/2) E_clean[ce(1-Y) - ce(Y)]  (binary)
IdentityReport check_eq4_clean_decomposition(const AnalyticRiskContext& ctx, double rate);

// The full identity suite (one report per certified statement).
std::vector<IdentityReport> run_identity_suite(std::uint64_t seed);

}  // namespace gls
