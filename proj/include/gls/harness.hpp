#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gls/core.hpp"
#include "gls/datagen.hpp"
#include "gls/trainer.hpp"

namespace gls {

struct NoiseSpecCfg {
  enum class Kind { none, binary_asym, symmetric, sparse };
  Kind kind = Kind::none;
  double e0 = 0.0, e1 = 0.0, epsilon = 0.0;
  std::vector<std::pair<int, int>> pairs;

  bool is_none() const { return kind == Kind::none; }
  std::string id() const;
  TransitionMatrix to_transition(int num_classes) const;
};

struct DatasetConfig {
  bool use_csv = false;
  SyntheticSpec synthetic;
  std::string csv_path;
  std::string label_column = "label";
  char delimiter = ',';
  double train_frac = 0.8, val_frac = 0.0, test_frac = 0.2;
  std::uint64_t split_seed = 0;
  bool standardize = false;  // train-split statistics applied everywhere
};

struct SweepConfig {
  int version = 1;
  DatasetConfig dataset;
  std::vector<NoiseSpecCfg> noise_grid;
  std::vector<double> r_grid;  // -infinity selects the normalized extreme-label objective
  std::vector<std::uint64_t> seeds;
  std::vector<double> lr_grid;  // empty: single lr from the template
  TrainConfig train_template;
  std::optional<double> r_star;  // enables the predicted r_opt column in reports
  std::string out_dir;
};

SweepConfig load_sweep_config(const std::string& path);
void save_sweep_config(const SweepConfig& cfg, const std::string& path);

// Loads/generates the base dataset, splits it, applies standardization.
SplitResult prepare_dataset(const DatasetConfig& dc);

struct CellRecord {
  std::string noise_id;
  double r = 0.0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  bool failed = false;
  std::string error;
  double test_accuracy = 0.0;
  double expected_mc = 0.0;
  double train_loss_final = 0.0;
  double train_accuracy_final = 0.0;
};

struct SweepResult {
  std::vector<CellRecord> records;
};

// "neg-inf" for -infinity, "%.12g" otherwise; the record key format
std::string r_to_string(double r);
double r_from_string(const std::string& text);

// Builds the base split once, then runs every (noise, r, seed, lr) cell in a
// bounded worker pool, appending one JSON record per cell to
// out_dir/records.jsonl (plus confidence histograms to
// out_dir/confidence_hist.jsonl). Cells already present in records.jsonl are
// skipped. Diverged cells are recorded as failed; the sweep continues.
SweepResult run_sweep(const SweepConfig& cfg, int threads);

// mean/std accuracy per (noise, r) after best-lr selection
struct CellAggregate {
  std::string noise_id;
  double r = 0.0;
  double lr = 0.0;  // selected lr
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  int seed_count = 0;
};

std::vector<CellAggregate> aggregate_records(const std::vector<CellRecord>& records);

// argmax of mean accuracy over r; ties resolved toward the r closest to 0,
// then toward the larger r
struct EmpiricalOpt {
  std::string noise_id;
  double r_opt = 0.0;
  double mean_accuracy = 0.0;
};
std::vector<EmpiricalOpt> empirical_r_opt(const std::vector<CellAggregate>& aggregates);

// Writes accuracy_table.csv, accuracy_std.csv, r_opt.csv,
// confidence_hist.csv, bias_variance.csv (when replicate records exist) and
// report_notes.txt into out_dir, from the records written by run_sweep.
void write_reports(const std::string& out_dir);

// Closed-form r_opt for the supported noise kinds; none maps to r_star,
// sparse/binary require symmetric pair rates.
double predict_r_opt(double r_star, const NoiseSpecCfg& noise, int num_classes);

// One cell (noise_grid[0], r_grid[0], seeds[0], template lr): trains, writes
// report.json and model.txt into cfg.out_dir, returns the record.
CellRecord run_single(const SweepConfig& cfg);

// Trains bootstrap replicates per (noise, r) cell and appends
// {noise, r, bias, variance} records to out_dir/bias_variance.jsonl.
void run_bias_variance(const SweepConfig& cfg, int replicates, int threads);

std::vector<CellRecord> load_records(const std::string& path);

}  // namespace gls
