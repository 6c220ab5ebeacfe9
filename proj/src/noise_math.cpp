#include "gls/noise_math.hpp"

#include <cmath>
#include <stdexcept>

#include "gls/rng.hpp"

namespace gls {

LabeledDataset inject_noise(const LabeledDataset& ds, const TransitionMatrix& t, std::uint64_t seed) {
  validate(ds);
  if (ds.has_clean_labels()) throw std::invalid_argument("noise already injected (clean_labels present)");
  if (t.num_classes() != ds.num_classes) throw std::invalid_argument("transition size does not match dataset");

  LabeledDataset out = ds;
  out.clean_labels = ds.labels;
  Rng rng(seed);
  for (int i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[static_cast<std::size_t>(i)];
    const double u = rng.uniform();
    double cdf = 0.0;
    int drawn = ds.num_classes - 1;
    for (int j = 0; j < ds.num_classes; ++j) {
      cdf += t(y, j);
      if (u < cdf) {
        drawn = j;
        break;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = drawn;
  }
  return out;
}

double r_opt_binary(double r_star, double e) {
  if (!(r_star <= 1.0)) throw std::invalid_argument("r_star must be <= 1");
  if (!(e >= 0.0 && e < 0.5)) throw std::domain_error("binary symmetric rate must lie in [0, 1/2)");
  return (r_star - 2.0 * e) / (1.0 - 2.0 * e);
}

double r_opt_multiclass(double r_star, double epsilon, int num_classes) {
  if (!(r_star <= 1.0)) throw std::invalid_argument("r_star must be <= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  const double k = num_classes;
  if (!(epsilon >= 0.0 && epsilon < (k - 1.0) / k))
    throw std::domain_error("symmetric rate must lie in [0, (K-1)/K)");
  return ((k - 1.0) * r_star - k * epsilon) / ((k - 1.0) - k * epsilon);
}

CorrectionRate correction_rate_r_lc(double e1) {
  if (!(e1 >= 0.0 && e1 < 0.5)) throw std::domain_error("e1 must lie in [0, 1/2)");
  CorrectionRate out;
  out.r_lc = e1 == 0.0 ? 0.0 : 2.0 * e1 / (2.0 * e1 - 1.0);
  out.lambda_factor = 1.0 / (1.0 - 2.0 * e1);
  return out;
}

PeerRate peer_rate_r_pl(double noisy_prior_1) {
  if (!(noisy_prior_1 >= 0.0 && noisy_prior_1 <= 1.0))
    throw std::invalid_argument("noisy prior must lie in [0, 1]");
  PeerRate out;
  out.r_pl = 2.0 * noisy_prior_1;
  out.lambda_pl = 1.0 - out.r_pl;
  return out;
}

SymmetricNoiseConstants symmetric_noise_constants(double epsilon, double rate, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  const double k = num_classes;
  SymmetricNoiseConstants out;
  out.eps_prime = k * epsilon / (k - 1.0);
  out.c3 = (1.0 - rate) * (1.0 - out.eps_prime);
  out.c4 = ((1.0 - rate) * out.eps_prime + rate) / k;
  return out;
}

DecompositionCoeffs decomposition_coeffs_binary(double e0, double e1, double rate, double r_star) {
  if (!(e0 >= 0.0 && e0 <= 1.0 && e1 >= 0.0 && e1 <= 1.0))
    throw std::invalid_argument("flip rates must lie in [0, 1]");
  if (!(rate <= 1.0 && r_star <= 1.0)) throw std::invalid_argument("smooth rates must be <= 1");
  DecompositionCoeffs out;
  out.lambda1_statement = (e1 - r_star / 2.0) + (1.0 - 2.0 * e1) * rate / 2.0;
  out.lambda1_proof = (e0 - r_star / 2.0) + (1.0 - 2.0 * e0) * rate / 2.0;
  out.lambda2 = (e1 - e0) * (1.0 - rate);
  out.true_risk_scale = 1.0;
  out.minc1_scale = 0.0;
  return out;
}

DecompositionCoeffs decomposition_coeffs_multiclass(double epsilon, double rate, double r_star, int num_classes) {
  if (!(rate <= 1.0)) throw std::invalid_argument("smooth rate must be <= 1");
  if (!(r_star < 1.0)) throw std::invalid_argument("r_star must be < 1 for the multi-class scaling");
  const auto c = symmetric_noise_constants(epsilon, rate, num_classes);
  DecompositionCoeffs out;
  out.true_risk_scale = c.c3 / (1.0 - r_star);
  out.minc1_scale = c.c4 - c.c3 * r_star / ((1.0 - r_star) * num_classes);
  // lambda1/lambda2 are the binary-only bias weights; zeroed here
  out.lambda1_statement = out.lambda1_proof = out.lambda2 = 0.0;
  return out;
}

}  // namespace gls
