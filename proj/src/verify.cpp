#include "gls/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "gls/losses.hpp"
#include "gls/noise_math.hpp"
#include "gls/rng.hpp"

namespace gls {

namespace {

constexpr double kIdentityTol = 1e-10;

// (1/N) sum_i g(p_i, y_i)
double mean_full(const AnalyticRiskContext& ctx, const std::function<double(const ProbVector&, int)>& g) {
  double acc = 0.0;
  for (int i = 0; i < ctx.size(); ++i)
    acc += g(ctx.predictions[static_cast<std::size_t>(i)], ctx.clean_labels[static_cast<std::size_t>(i)]);
  return acc / ctx.size();
}

// sub-population: (1/N) sum over {i : y_i == cls} of g(p_i)
double mean_sub(const AnalyticRiskContext& ctx, int cls, const std::function<double(const ProbVector&)>& g) {
  double acc = 0.0;
  for (int i = 0; i < ctx.size(); ++i)
    if (ctx.clean_labels[static_cast<std::size_t>(i)] == cls) acc += g(ctx.predictions[static_cast<std::size_t>(i)]);
  return acc / ctx.size();
}

// analytic expectation over noisy draws: (1/N) sum_i sum_j T[y_i][j] g(p_i, j)
double noisy_mean(const AnalyticRiskContext& ctx, const TransitionMatrix& t,
                  const std::function<double(const ProbVector&, int)>& g) {
  double acc = 0.0;
  for (int i = 0; i < ctx.size(); ++i) {
    const int y = ctx.clean_labels[static_cast<std::size_t>(i)];
    for (int j = 0; j < ctx.num_classes; ++j)
      acc += t(y, j) * g(ctx.predictions[static_cast<std::size_t>(i)], j);
  }
  return acc / ctx.size();
}

// the (1-r)/ (r/K) smoothed target without the r <= 1 validation; the peer
// identity needs rates above 1
Vec raw_smoothed_target(int y, double rate, int k) {
  Vec w(static_cast<std::size_t>(k), rate / k);
  w[static_cast<std::size_t>(y)] = 1.0 - rate * (k - 1) / k;
  return w;
}

ProbVector random_simplex(Rng& rng, int k, double min_prob) {
  Vec p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (double& v : p) {
    v = -std::log(std::max(1.0 - rng.uniform(), 1e-300));
    total += v;
  }
  for (double& v : p) v = v / total * (1.0 - k * min_prob) + min_prob;
  return ProbVector{std::move(p)};
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

}  // namespace

AnalyticRiskContext make_random_context(int n, int num_classes, std::uint64_t seed, double min_prob) {
  if (n < 1 || num_classes < 2) throw std::invalid_argument("context needs n >= 1, K >= 2");
  if (!(min_prob > 0.0 && min_prob * num_classes < 1.0)) throw std::invalid_argument("invalid min_prob");
  AnalyticRiskContext ctx;
  ctx.num_classes = num_classes;
  Rng rng(mix_seed(seed, 0xC7C7));
  for (int i = 0; i < n; ++i) {
    ctx.predictions.push_back(random_simplex(rng, num_classes, min_prob));
    ctx.clean_labels.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_classes))));
  }
  return ctx;
}

AnalyticRiskContext make_context_with_prior(int n, double prior_1, std::uint64_t seed, double min_prob) {
  AnalyticRiskContext ctx = make_random_context(n, 2, seed, min_prob);
  const int ones = static_cast<int>(std::llround(prior_1 * n));
  if (std::abs(static_cast<double>(ones) / n - prior_1) > 1e-12)
    throw std::invalid_argument("prior_1 is not representable with n samples");
  for (int i = 0; i < n; ++i) ctx.clean_labels[static_cast<std::size_t>(i)] = i < ones ? 1 : 0;
  return ctx;
}

IdentityReport check_theorem1(long trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  IdentityReport rep;
  rep.name = "T1.mirror";
  rep.tolerance = kIdentityTol;
  rep.trials = trials;
  Rng rng(mix_seed(seed, 0x71));
  const int ks[] = {2, 3, 5, 10};
  for (long t = 0; t < trials; ++t) {
    const int k = ks[t % 4];
    const ProbVector p = random_simplex(rng, k, 1e-3);
    const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    const double r = rng.uniform();
    const double lhs = gls_loss(p, y, -r);
    const double rhs = 2.0 * ce(p, y) - gls_loss(p, y, r);
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(lhs - rhs));
  }
  rep.pass = rep.max_abs_residual <= rep.tolerance;
  return rep;
}

IdentityReport check_lemma1(long trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  IdentityReport rep;
  rep.name = "L1.linearity";
  rep.tolerance = kIdentityTol;
  rep.trials = trials;
  Rng rng(mix_seed(seed, 0x11));
  const int ks[] = {2, 3, 5, 10};
  for (long t = 0; t < trials; ++t) {
    const int k = ks[t % 4];
    const ProbVector p = random_simplex(rng, k, 1e-3);
    const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    const double r = rng.uniform(-8.0, 1.0);
    const double direct = ce_soft(p, make_gls_label(y, r, k));
    double sum_all = 0.0;
    for (int j = 0; j < k; ++j) sum_all += ce(p, j);
    const double linear = (1.0 - r) * ce(p, y) + r / k * sum_all;
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(direct - linear));
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(direct - gls_loss(p, y, r)));
    if (k == 2) {
      const double binary_form = (1.0 - r / 2.0) * ce(p, y) + r / 2.0 * ce(p, 1 - y);
      rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(direct - binary_form));
    }
  }
  rep.pass = rep.max_abs_residual <= rep.tolerance;
  return rep;
}

IdentityReport check_loss_correction(double e0, double e1, const AnalyticRiskContext& ctx) {
  if (ctx.num_classes != 2) throw std::invalid_argument("loss-correction check is binary");
  const TransitionMatrix t = TransitionMatrix::binary_asym(e0, e1);
  const CorrectionRate cr = correction_rate_r_lc(e1);
  const double lambda_lc = (e1 - e0) * cr.lambda_factor;
  const Mat inv = t.inverse();

  IdentityReport rep;
  rep.name = "P1.correction-bias";
  rep.tolerance = kIdentityTol;
  rep.trials = ctx.size();

  // pointwise: with symmetric rates the backward loss IS the smoothed loss
  if (e0 == e1) {
    rep.name = "T2.backward-equals-nls";
    for (const ProbVector& p : ctx.predictions)
      for (int yt = 0; yt < 2; ++yt) {
        const double res = std::abs(backward_loss_with_inverse(p, yt, inv) - gls_loss(p, yt, cr.r_lc));
        rep.max_abs_residual = std::max(rep.max_abs_residual, res);
      }
  }

  auto ce_fn = [](const ProbVector& p, int j) { return ce(p, j); };
  const double lhs = noisy_mean(ctx, t, [&inv](const ProbVector& p, int j) {
    return backward_loss_with_inverse(p, j, inv);
  });
  const double clean_ce = mean_full(ctx, ce_fn);
  const double gls_term =
      noisy_mean(ctx, t, [&cr](const ProbVector& p, int j) { return gls_loss(p, j, cr.r_lc); });
  const double bias_on_y0 = mean_sub(ctx, 0, [](const ProbVector& p) { return ce(p, 1) - ce(p, 0); });
  const double bias_on_y1 = mean_sub(ctx, 1, [](const ProbVector& p) { return ce(p, 1) - ce(p, 0); });

  const double res_y0 = std::abs(lhs - (gls_term + lambda_lc * bias_on_y0));
  const double res_y1 = std::abs(lhs - (gls_term + lambda_lc * bias_on_y1));
  const double res_unbiased = std::abs(lhs - clean_ce);

  rep.max_abs_residual = std::max(rep.max_abs_residual, res_unbiased);
  if (e1 == e0) {
    // lambda_lc = 0: both candidates coincide
    rep.max_abs_residual = std::max(rep.max_abs_residual, res_y0);
    rep.pass = rep.max_abs_residual <= rep.tolerance;
    rep.detail = "symmetric rates; bias term vanishes";
  } else {
    const bool y0_ok = res_y0 <= rep.tolerance;
    const bool y1_ok = res_y1 <= rep.tolerance;
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::min(res_y0, res_y1));
    rep.pass = (y0_ok != y1_ok) && res_unbiased <= rep.tolerance;
    rep.detail = y0_ok ? "bias sub-population Y=0 closes (residuals: Y=0 " + fmt(res_y0) + ", Y=1 " + fmt(res_y1) + ")"
                       : "bias sub-population Y=1 closes (residuals: Y=0 " + fmt(res_y0) + ", Y=1 " + fmt(res_y1) + ")";
  }
  return rep;
}

std::vector<double> complementary_limit_residuals(const std::vector<ProbVector>& p_samples,
                                                  const std::vector<double>& r_sequence) {
  std::vector<double> residuals;
  residuals.reserve(r_sequence.size());
  for (double r : r_sequence) {
    double worst = 0.0;
    for (const ProbVector& p : p_samples)
      for (int yt = 0; yt < 2; ++yt) {
        const double normalized = gls_loss(p, yt, r) / (1.0 - r / 2.0);
        worst = std::max(worst, std::abs(normalized - complementary_loss(p, yt)));
      }
    residuals.push_back(worst);
  }
  return residuals;
}

IdentityReport check_complementary_limit(const std::vector<ProbVector>& p_samples,
                                         const std::vector<double>& r_sequence) {
  if (p_samples.empty() || r_sequence.empty()) throw std::invalid_argument("empty inputs");
  for (std::size_t i = 0; i < r_sequence.size(); ++i) {
    if (!(r_sequence[i] <= -10.0)) throw std::invalid_argument("rates must be <= -10");
    if (i > 0 && !(r_sequence[i] < r_sequence[i - 1]))
      throw std::invalid_argument("rate sequence must be strictly decreasing");
  }
  for (const ProbVector& p : p_samples)
    if (p.num_classes() != 2) throw std::invalid_argument("complementary limit check is binary");

  double log_range = 0.0;
  for (const ProbVector& p : p_samples)
    for (int yt = 0; yt < 2; ++yt) log_range = std::max(log_range, ce(p, yt));

  const std::vector<double> residuals = complementary_limit_residuals(p_samples, r_sequence);

  IdentityReport rep;
  rep.name = "T3.complementary-limit";
  rep.trials = static_cast<long>(p_samples.size() * r_sequence.size());
  rep.tolerance = 4.0 * log_range / std::abs(r_sequence.back());
  rep.max_abs_residual = residuals.back();
  bool ok = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double bound = 4.0 * log_range / std::abs(r_sequence[i]);
    if (residuals[i] > bound) ok = false;
    if (i > 0 && residuals[i] > residuals[i - 1]) ok = false;
    detail << (i > 0 ? "; " : "") << "r=" << fmt(r_sequence[i]) << " residual=" << fmt(residuals[i]);
  }
  rep.pass = ok;
  rep.detail = detail.str();
  return rep;
}

IdentityReport check_peer(const AnalyticRiskContext& ctx, double noisy_prior_1) {
  if (ctx.num_classes != 2) throw std::invalid_argument("peer check is binary");
  if (!(noisy_prior_1 >= 0.0 && noisy_prior_1 <= 1.0)) throw std::invalid_argument("prior out of [0, 1]");
  int ones = 0;
  for (int y : ctx.clean_labels) ones += y;
  if (std::abs(static_cast<double>(ones) / ctx.size() - noisy_prior_1) > 1e-12)
    throw std::invalid_argument("context labels do not realize the requested prior");

  const PeerRate pr = peer_rate_r_pl(noisy_prior_1);
  const Vec prior{1.0 - noisy_prior_1, noisy_prior_1};

  const double lhs =
      mean_full(ctx, [&prior](const ProbVector& p, int y) { return peer_loss_expected(p, y, prior); });
  // r_pl may exceed 1, so the smoothed term goes through the raw target path
  const double gls_pl_term = mean_full(ctx, [&pr](const ProbVector& p, int y) {
    return ce_soft(p, raw_smoothed_target(y, pr.r_pl, 2));
  });
  const double plain_ce = mean_full(ctx, [](const ProbVector& p, int y) { return ce(p, y); });
  const double bias_pl = mean_sub(ctx, 1, [](const ProbVector& p) { return ce(p, 1) - ce(p, 0); });
  const double rhs = plain_ce - gls_pl_term + pr.lambda_pl * bias_pl;

  IdentityReport rep;
  rep.name = "P2.peer-bias";
  rep.tolerance = kIdentityTol;
  rep.trials = ctx.size();
  rep.max_abs_residual = std::abs(lhs - rhs);
  rep.detail = "r_pl=" + fmt(pr.r_pl) + " lambda_pl=" + fmt(pr.lambda_pl);
  if (noisy_prior_1 == 0.5) {
    rep.name = "T5.peer-equal-prior";
    const double half_cl =
        mean_full(ctx, [](const ProbVector& p, int y) { return 0.5 * complementary_loss(p, y); });
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(lhs - half_cl));
    rep.detail += "; peer risk equals half the complementary risk";
  }
  rep.pass = rep.max_abs_residual <= rep.tolerance;
  return rep;
}

IdentityReport check_decomposition_binary(const AnalyticRiskContext& ctx, double e0, double e1, double rate,
                                          double r_star) {
  if (ctx.num_classes != 2) throw std::invalid_argument("binary decomposition check needs K = 2");
  const TransitionMatrix t = TransitionMatrix::binary_asym(e0, e1);
  const DecompositionCoeffs co = decomposition_coeffs_binary(e0, e1, rate, r_star);

  const double lhs = noisy_mean(ctx, t, [rate](const ProbVector& p, int j) { return gls_loss(p, j, rate); });
  const double true_risk = mean_full(ctx, [r_star](const ProbVector& p, int y) { return gls_loss(p, y, r_star); });
  const double minc1 = mean_full(ctx, [](const ProbVector& p, int y) { return ce(p, 1 - y) - ce(p, y); });
  const double minc2 = mean_sub(ctx, 1, [](const ProbVector& p) { return ce(p, 0) - ce(p, 1); });

  const double res_statement = std::abs(lhs - (true_risk + co.lambda1_statement * minc1 + co.lambda2 * minc2));
  const double res_proof = std::abs(lhs - (true_risk + co.lambda1_proof * minc1 + co.lambda2 * minc2));

  IdentityReport rep;
  rep.name = "T7.noisy-decomposition";
  rep.tolerance = kIdentityTol;
  rep.trials = ctx.size();
  if (e0 == e1) {
    rep.max_abs_residual = std::max(res_statement, res_proof);
    rep.pass = rep.max_abs_residual <= rep.tolerance;
    rep.detail = "symmetric rates; both lambda1 forms coincide";
    if (e0 < 0.5 && std::abs(rate - r_opt_binary(r_star, e0)) <= 1e-12) {
      const bool lambda1_zero = std::abs(co.lambda1_proof) <= 1e-12;
      const bool recovers = std::abs(lhs - true_risk) <= rep.tolerance;
      rep.pass = rep.pass && lambda1_zero && recovers;
      rep.detail += "; at r_opt: lambda1=" + fmt(co.lambda1_proof) + ", noisy risk equals true risk";
    }
  } else {
    const bool statement_ok = res_statement <= rep.tolerance;
    const bool proof_ok = res_proof <= rep.tolerance;
    rep.max_abs_residual = std::min(res_statement, res_proof);
    rep.pass = statement_ok != proof_ok;
    rep.detail = std::string("valid lambda1 form: ") + (proof_ok ? "e0-based" : "e1-based") +
                 " (residuals: e0-form " + fmt(res_proof) + ", e1-form " + fmt(res_statement) + ")";
  }
  return rep;
}

IdentityReport check_decomposition_multiclass(const AnalyticRiskContext& ctx, double epsilon, double rate,
                                              double r_star) {
  const int k = ctx.num_classes;
  const TransitionMatrix t = TransitionMatrix::symmetric(epsilon, k);
  const DecompositionCoeffs co = decomposition_coeffs_multiclass(epsilon, rate, r_star, k);

  const double lhs = noisy_mean(ctx, t, [rate](const ProbVector& p, int j) { return gls_loss(p, j, rate); });
  const double true_term = mean_full(ctx, [r_star](const ProbVector& p, int y) { return gls_loss(p, y, r_star); });
  const double sum_term = mean_full(ctx, [k](const ProbVector& p, int) {
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += ce(p, j);
    return acc;
  });
  const double rhs = co.true_risk_scale * true_term + co.minc1_scale * sum_term;

  IdentityReport rep;
  rep.name = "T8.multiclass-decomposition";
  rep.tolerance = kIdentityTol;
  rep.trials = ctx.size();
  rep.max_abs_residual = std::abs(lhs - rhs);
  rep.pass = rep.max_abs_residual <= rep.tolerance;
  rep.detail = "K=" + std::to_string(k) + " eps=" + fmt(epsilon);

  const double k_real = k;
  if (epsilon < (k_real - 1.0) / k_real && std::abs(rate - r_opt_multiclass(r_star, epsilon, k)) <= 1e-12) {
    const bool cancels = std::abs(co.minc1_scale) <= 1e-12;
    const double ratio = lhs / true_term;
    const bool scales = std::abs(ratio - co.true_risk_scale) <= rep.tolerance;
    rep.pass = rep.pass && cancels && scales;
    rep.detail += "; at r_opt: sum-term weight=" + fmt(co.minc1_scale) + ", risk ratio=" + fmt(ratio);
  }
  return rep;
}

IdentityReport check_eq4_clean_decomposition(const AnalyticRiskContext& ctx, double rate) {
  if (ctx.num_classes != 2) throw std::invalid_argument("clean decomposition check needs K = 2");
  const double lhs = mean_full(ctx, [rate](const ProbVector& p, int y) { return gls_loss(p, y, rate); });
  const double plain_ce = mean_full(ctx, [](const ProbVector& p, int y) { return ce(p, y); });
  const double mc_term = mean_full(ctx, [](const ProbVector& p, int y) { return ce(p, 1 - y) - ce(p, y); });
  IdentityReport rep;
  rep.name = "E4.clean-split";
  rep.tolerance = kIdentityTol;
  rep.trials = ctx.size();
  rep.max_abs_residual = std::abs(lhs - (plain_ce + rate / 2.0 * mc_term));
  rep.pass = rep.max_abs_residual <= rep.tolerance;
  rep.detail = "r=" + fmt(rate);
  return rep;
}

std::vector<IdentityReport> run_identity_suite(std::uint64_t seed) {
  std::vector<IdentityReport> out;
  out.push_back(check_theorem1(10000, mix_seed(seed, 1)));
  out.push_back(check_lemma1(10000, mix_seed(seed, 2)));

  int tag = 0;
  for (double e : {0.1, 0.25, 0.4}) {
    auto rep = check_loss_correction(e, e, make_random_context(64, 2, mix_seed(seed, 3, tag++)));
    rep.name += "/e=" + fmt(e);
    out.push_back(std::move(rep));
  }
  for (auto [e0, e1] : {std::pair{0.1, 0.3}, std::pair{0.0, 0.4}}) {
    auto rep = check_loss_correction(e0, e1, make_random_context(64, 2, mix_seed(seed, 4, tag++)));
    rep.name += "/e0=" + fmt(e0) + ",e1=" + fmt(e1);
    out.push_back(std::move(rep));
  }

  out.push_back(check_peer(make_context_with_prior(32, 0.5, mix_seed(seed, 5)), 0.5));
  out.push_back(check_peer(make_context_with_prior(40, 0.7, mix_seed(seed, 6)), 0.7));

  for (double r : {-2.0, 0.4}) {
    auto rep = check_eq4_clean_decomposition(make_random_context(48, 2, mix_seed(seed, 7, tag++)), r);
    rep.name += "/r=" + fmt(r);
    out.push_back(std::move(rep));
  }

  {
    auto rep = check_decomposition_binary(make_random_context(64, 2, mix_seed(seed, 8)), 0.1, 0.3, 0.0, 0.0);
    rep.name += "/e0=0.1,e1=0.3,r=0";
    out.push_back(std::move(rep));
    rep = check_decomposition_binary(make_random_context(64, 2, mix_seed(seed, 9)), 0.1, 0.3, -0.6, 0.2);
    rep.name += "/e0=0.1,e1=0.3,r=-0.6";
    out.push_back(std::move(rep));
    rep = check_decomposition_binary(make_random_context(64, 2, mix_seed(seed, 10)), 0.2, 0.2,
                                     r_opt_binary(0.2, 0.2), 0.2);
    rep.name += "/symmetric-at-r_opt";
    out.push_back(std::move(rep));
  }

  {
    auto rep = check_decomposition_multiclass(make_random_context(48, 2, mix_seed(seed, 11)), 0.2,
                                              r_opt_multiclass(0.2, 0.2, 2), 0.2);
    rep.name += "/at-r_opt";
    out.push_back(std::move(rep));
    rep = check_decomposition_multiclass(make_random_context(48, 3, mix_seed(seed, 12)), 0.3, -0.5, 0.1);
    out.push_back(std::move(rep));
    rep = check_decomposition_multiclass(make_random_context(48, 10, mix_seed(seed, 13)), 0.4,
                                         r_opt_multiclass(0.0, 0.4, 10), 0.0);
    rep.name += "/at-r_opt";
    out.push_back(std::move(rep));
  }

  {
    // narrow prediction range: this check certifies the 1/|r| convergence
    // rate, so the target thresholds assume ce terms of order one
    Rng rng(mix_seed(seed, 14));
    std::vector<ProbVector> samples;
    for (int i = 0; i < 32; ++i) {
      const double p0 = rng.uniform(0.37, 0.63);
      samples.push_back(ProbVector{{p0, 1.0 - p0}});
    }
    const std::vector<double> rates{-1e2, -1e3, -1e4, -1e6};
    out.push_back(check_complementary_limit(samples, rates));
    const std::vector<double> residuals = complementary_limit_residuals(samples, rates);

    IdentityReport at_1e3;
    at_1e3.name = "T3.residual-at-r=-1e3";
    at_1e3.tolerance = 2e-3;
    at_1e3.trials = static_cast<long>(samples.size());
    at_1e3.max_abs_residual = residuals[1];
    at_1e3.pass = at_1e3.max_abs_residual <= at_1e3.tolerance;
    out.push_back(std::move(at_1e3));

    IdentityReport at_1e6;
    at_1e6.name = "T3.residual-at-r=-1e6";
    at_1e6.tolerance = 2e-6;
    at_1e6.trials = static_cast<long>(samples.size());
    at_1e6.max_abs_residual = residuals[3];
    at_1e6.pass = at_1e6.max_abs_residual <= at_1e6.tolerance;
    out.push_back(std::move(at_1e6));
  }

  return out;
}

}  // namespace gls
