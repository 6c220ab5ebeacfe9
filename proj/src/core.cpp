#include "gls/core.hpp"

#include <cmath>
#include <cstdlib>

namespace gls {

namespace {

void check_label(int y, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (y < 0 || y >= num_classes)
    throw std::invalid_argument("label " + std::to_string(y) + " out of range [0, " + std::to_string(num_classes) +
                                ")");
}

void check_rate_in_unit(double e, const char* name) {
  if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

ProbVector make_prob_vector(Vec probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("probability entry out of (0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("probabilities must sum to 1 within 1e-9");
  return ProbVector{std::move(probs)};
}

SoftLabel make_onehot(int y, int num_classes) {
  check_label(y, num_classes);
  SoftLabel out;
  out.weights.assign(static_cast<std::size_t>(num_classes), 0.0);
  out.weights[static_cast<std::size_t>(y)] = 1.0;
  out.rate = 0.0;
  out.source_class = y;
  return out;
}

SoftLabel make_gls_label(int y, double rate, int num_classes) {
  check_label(y, num_classes);
  if (!(rate <= 1.0)) throw std::invalid_argument("smooth rate must be <= 1");
  if (!std::isfinite(rate)) throw std::invalid_argument("smooth rate must be finite");
  SoftLabel out;
  const double off = rate / num_classes;
  out.weights.assign(static_cast<std::size_t>(num_classes), off);
  out.weights[static_cast<std::size_t>(y)] = 1.0 - rate * (num_classes - 1) / num_classes;
  out.rate = rate;
  out.source_class = y;
  return out;
}

Vec normalized_extreme_label(int y, int num_classes) {
  check_label(y, num_classes);
  Vec out(static_cast<std::size_t>(num_classes), -1.0 / num_classes);
  out[static_cast<std::size_t>(y)] += 1.0;
  return out;
}

TransitionMatrix TransitionMatrix::binary_asym(double e0, double e1) {
  check_rate_in_unit(e0, "e0");
  check_rate_in_unit(e1, "e1");
  if (e1 < e0) throw std::invalid_argument("binary_asym expects e1 >= e0");
  TransitionMatrix t;
  t.kind_ = Kind::binary_asym;
  t.e0_ = e0;
  t.e1_ = e1;
  t.entries_ = Mat(2, 2);
  t.entries_(0, 0) = 1.0 - e0;
  t.entries_(0, 1) = e0;
  t.entries_(1, 0) = e1;
  t.entries_(1, 1) = 1.0 - e1;
  return t;
}

TransitionMatrix TransitionMatrix::symmetric(double epsilon, int num_classes) {
  check_rate_in_unit(epsilon, "epsilon");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  TransitionMatrix t;
  t.kind_ = Kind::symmetric;
  t.epsilon_ = epsilon;
  t.e0_ = t.e1_ = epsilon;
  const double off = epsilon / (num_classes - 1);
  t.entries_ = Mat(num_classes, num_classes, off);
  for (int i = 0; i < num_classes; ++i) t.entries_(i, i) = 1.0 - epsilon;
  return t;
}

TransitionMatrix TransitionMatrix::sparse_pairs(const std::vector<std::pair<int, int>>& pairs, double e0, double e1,
                                                int num_classes) {
  check_rate_in_unit(e0, "e0");
  check_rate_in_unit(e1, "e1");
  if (num_classes < 2 || num_classes % 2 != 0)
    throw std::invalid_argument("sparse_pairs requires an even number of classes");
  std::vector<bool> used(static_cast<std::size_t>(num_classes), false);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || j < 0 || i >= num_classes || j >= num_classes || i >= j)
      throw std::invalid_argument("sparse pair indices must satisfy 0 <= i < j < K");
    if (used[static_cast<std::size_t>(i)] || used[static_cast<std::size_t>(j)])
      throw std::invalid_argument("sparse pairs must be disjoint");
    used[static_cast<std::size_t>(i)] = used[static_cast<std::size_t>(j)] = true;
  }
  TransitionMatrix t;
  t.kind_ = Kind::sparse_pairs;
  t.e0_ = e0;
  t.e1_ = e1;
  t.entries_ = Mat(num_classes, num_classes);
  for (int i = 0; i < num_classes; ++i) t.entries_(i, i) = 1.0;
  // Row stochasticity pins the diagonals: row i carries e0 off-diagonal mass,
  // row j carries e1.
  for (const auto& [i, j] : pairs) {
    t.entries_(i, j) = e0;
    t.entries_(i, i) = 1.0 - e0;
    t.entries_(j, i) = e1;
    t.entries_(j, j) = 1.0 - e1;
  }
  return t;
}

TransitionMatrix TransitionMatrix::custom(Mat entries) {
  if (entries.rows() != entries.cols() || entries.rows() < 2)
    throw std::invalid_argument("transition matrix must be square, K >= 2");
  for (int i = 0; i < entries.rows(); ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < entries.cols(); ++j) {
      const double v = entries(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("transition entries must lie in [0, 1]");
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > 1e-12) throw std::invalid_argument("transition rows must sum to 1");
  }
  TransitionMatrix t;
  t.kind_ = Kind::custom;
  t.entries_ = std::move(entries);
  return t;
}

double TransitionMatrix::determinant() const {
  const int k = num_classes();
  if (k == 2) return entries_(0, 0) * entries_(1, 1) - entries_(0, 1) * entries_(1, 0);
  // LU with partial pivoting
  Mat lu = entries_;
  double det = 1.0;
  for (int col = 0; col < k; ++col) {
    int pivot = col;
    for (int r = col + 1; r < k; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    if (pivot != col) {
      for (int c = 0; c < k; ++c) std::swap(lu(pivot, c), lu(col, c));
      det = -det;
    }
    const double d = lu(col, col);
    det *= d;
    if (d == 0.0) return 0.0;
    for (int r = col + 1; r < k; ++r) {
      const double f = lu(r, col) / d;
      for (int c = col; c < k; ++c) lu(r, c) -= f * lu(col, c);
    }
  }
  return det;
}

Mat TransitionMatrix::inverse() const {
  const int k = num_classes();
  if (std::abs(determinant()) <= kSingularDetThreshold)
    throw std::domain_error("transition matrix is singular (|det| <= 1e-9)");
  if (k == 2) {
    const double det = determinant();
    Mat inv(2, 2);
    inv(0, 0) = entries_(1, 1) / det;
    inv(0, 1) = -entries_(0, 1) / det;
    inv(1, 0) = -entries_(1, 0) / det;
    inv(1, 1) = entries_(0, 0) / det;
    return inv;
  }
  // Gauss-Jordan with partial pivoting on [T | I]
  Mat a = entries_;
  Mat inv(k, k);
  for (int i = 0; i < k; ++i) inv(i, i) = 1.0;
  for (int col = 0; col < k; ++col) {
    int pivot = col;
    for (int r = col + 1; r < k; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (pivot != col) {
      for (int c = 0; c < k; ++c) {
        std::swap(a(pivot, c), a(col, c));
        std::swap(inv(pivot, c), inv(col, c));
      }
    }
    const double d = a(col, col);
    for (int c = 0; c < k; ++c) {
      a(col, c) /= d;
      inv(col, c) /= d;
    }
    for (int r = 0; r < k; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (int c = 0; c < k; ++c) {
        a(r, c) -= f * a(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  return inv;
}

void validate(const LabeledDataset& ds) {
  if (ds.num_classes < 2) throw std::invalid_argument("dataset needs num_classes >= 2");
  if (ds.features.rows() != ds.size()) throw std::invalid_argument("feature/label count mismatch");
  for (int y : ds.labels) check_label(y, ds.num_classes);
  if (ds.has_clean_labels()) {
    if (ds.clean_labels.size() != ds.labels.size())
      throw std::invalid_argument("clean_labels length must match labels");
    for (int y : ds.clean_labels) check_label(y, ds.num_classes);
  }
}

}  // namespace gls
