#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gls/core.hpp"
#include "gls/losses.hpp"

namespace gls {

struct MlpModel {
  std::vector<int> layer_dims;  // input d, hidden widths, output K
  std::vector<Mat> weights;     // weights[l]: layer_dims[l+1] x layer_dims[l]
  std::vector<Vec> biases;
  double epsilon_clamp = 1e-7;
  std::uint64_t init_seed = 0;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
};

// He-uniform init (limit sqrt(6/fan_in)), biases zero.
MlpModel make_mlp(std::vector<int> layer_dims, std::uint64_t seed, double epsilon_clamp = 1e-7);

// Softmax of the final pre-activations, floored at epsilon_clamp and renormalized.
ProbVector forward(const MlpModel& m, std::span<const double> x);

struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;
};
Gradients zero_gradients(const MlpModel& m);

// Batch-mean loss and its exact analytic gradient (clamping treated as a
// stop-gradient region).
std::pair<double, Gradients> loss_and_grad(const MlpModel& m, const LabeledDataset& ds,
                                           std::span<const int> batch_indices, const LossSpec& spec);

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  // sgd
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  // adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct LrSchedule {
  double initial = 0.1;
  double decay_factor = 0.1;
  int decay_every_epochs = 40;  // 0 disables decay

  double at(int epoch) const;
};

struct TrainConfig {
  LossSpec loss;
  int epochs = 200;
  int batch_size = 128;
  OptimizerConfig optimizer;
  LrSchedule lr;
  std::uint64_t seed = 0;
  std::vector<int> hidden_dims = {16, 16};
  double epsilon_clamp = 1e-7;
  std::string warmup_checkpoint;  // optional pre-trained model to load
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> test_accuracy;
  std::vector<double> expected_mc;  // on the test set
  MlpModel final_model;
};

struct TrainingDiverged : std::runtime_error {
  int epoch;
  explicit TrainingDiverged(int at_epoch)
      : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(at_epoch)),
        epoch(at_epoch) {}
};

// Deterministic given cfg.seed: fixed init, fixed per-epoch shuffles.
// Negative losses are expected with r < 0; only NaN/Inf aborts.
TrainReport train(const LabeledDataset& train_ds, const LabeledDataset& test_ds, const TrainConfig& cfg);

struct Predictions {
  std::vector<int> labels;
  double accuracy = 0.0;
};
// Argmax with ties broken toward the smallest class index; accuracy against
// observed labels, or clean_labels when use_clean_labels is set.
Predictions predict_and_accuracy(const MlpModel& m, const LabeledDataset& ds, bool use_clean_labels = false);

// Text checkpoint (hex floats; bit-exact round trip).
void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace gls
