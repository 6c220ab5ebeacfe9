#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gls {

using Vec = std::vector<double>;

// Dense row-major matrix; sized for KxK transition matrices and small MLP layers.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Mat: negative dimensions");
  }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<double> row(int r) {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  Vec data_;
};

// Model prediction f(x): a probability vector over the K classes.
struct ProbVector {
  Vec probs;

  int num_classes() const { return static_cast<int>(probs.size()); }
  double operator[](int k) const { return probs[static_cast<std::size_t>(k)]; }
};

// Validates entries are positive and sum to 1 within 1e-9.
ProbVector make_prob_vector(Vec probs);

// A smoothed label: (1-r)*onehot(y) + (r/K)*ones. Entries may be negative when r < 0.
struct SoftLabel {
  Vec weights;
  double rate = 0.0;
  int source_class = 0;

  int num_classes() const { return static_cast<int>(weights.size()); }
};

SoftLabel make_onehot(int y, int num_classes);
SoftLabel make_gls_label(int y, double rate, int num_classes);

// Limit object of gls_label(y, r)/(1-r) as r -> -inf: onehot(y) - ones/K.
Vec normalized_extreme_label(int y, int num_classes);

// Row-stochastic class-conditional flip matrix T, T[i][j] = P(noisy=j | clean=i).
class TransitionMatrix {
 public:
  enum class Kind { binary_asym, symmetric, sparse_pairs, custom };

  TransitionMatrix() = default;

  // [[1-e0, e0], [e1, 1-e1]] with e1 >= e0
  static TransitionMatrix binary_asym(double e0, double e1);
  // diagonal 1-epsilon, off-diagonal epsilon/(K-1)
  static TransitionMatrix symmetric(double epsilon, int num_classes);
  // disjoint class pairs (i,j), i<j: T[i][j]=e0, T[j][i]=e1, rest diagonal
  static TransitionMatrix sparse_pairs(const std::vector<std::pair<int, int>>& pairs, double e0, double e1,
                                       int num_classes);
  static TransitionMatrix custom(Mat entries);

  Kind kind() const { return kind_; }
  int num_classes() const { return entries_.rows(); }
  double operator()(int i, int j) const { return entries_(i, j); }
  const Mat& entries() const { return entries_; }

  // flip-rate accessors; meaningful for the structured kinds
  double e0() const { return e0_; }
  double e1() const { return e1_; }
  double e_delta() const { return e1_ - e0_; }
  double epsilon() const { return epsilon_; }

  double determinant() const;
  // Throws when |det| <= 1e-9 (binary: e0 + e1 = 1).
  Mat inverse() const;

 private:
  Kind kind_ = Kind::custom;
  Mat entries_;
  double e0_ = 0.0, e1_ = 0.0, epsilon_ = 0.0;
};

inline constexpr double kSingularDetThreshold = 1e-9;

struct LabeledDataset {
  Mat features;                   // N x d
  std::vector<int> labels;        // observed labels (noisy after injection)
  std::vector<int> clean_labels;  // empty unless noise was injected
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return features.cols(); }
  bool has_clean_labels() const { return !clean_labels.empty(); }
  std::span<const double> sample(int i) const { return features.row(i); }
};

// Throws on label out of range or feature/label length mismatch.
void validate(const LabeledDataset& ds);

}  // namespace gls
