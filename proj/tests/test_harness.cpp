#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gls/harness.hpp"
#include "gls/losses.hpp"

using namespace gls;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("gls_harness_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SweepConfig tiny_sweep_config(const std::string& out_dir) {
  SweepConfig cfg;
  cfg.dataset.synthetic.kind = SyntheticSpec::Kind::type1;
  cfg.dataset.synthetic.n_per_class = 30;
  cfg.dataset.synthetic.seed = 5;
  cfg.dataset.split_seed = 6;
  NoiseSpecCfg none;
  NoiseSpecCfg sym;
  sym.kind = NoiseSpecCfg::Kind::symmetric;
  sym.epsilon = 0.2;
  cfg.noise_grid = {none, sym};
  cfg.r_grid = {0.2, -0.2};
  cfg.seeds = {1, 2};
  cfg.train_template.loss = LossSpec::smoothed(0.0);
  cfg.train_template.epochs = 2;
  cfg.train_template.batch_size = 16;
  cfg.train_template.hidden_dims = {4};
  cfg.train_template.lr = {0.05, 0.1, 0};
  cfg.out_dir = out_dir;
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

long count_lines(const fs::path& path) {
  std::ifstream in(path);
  long lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  return lines;
}

}  // namespace

TEST_CASE("smooth-rate strings round-trip, including the extreme sentinel") {
  CHECK(r_to_string(-std::numeric_limits<double>::infinity()) == "neg-inf");
  CHECK(std::isinf(r_from_string("neg-inf")));
  for (double r : {0.4, 0.0, -2.0, -8.0, 1.0}) CHECK(r_from_string(r_to_string(r)) == r);
  CHECK_THROWS_AS(r_from_string("abc"), std::invalid_argument);
}

TEST_CASE("noise spec ids and transitions") {
  NoiseSpecCfg none;
  CHECK(none.id() == "none");
  CHECK(none.to_transition(3)(0, 0) == 1.0);

  NoiseSpecCfg sym;
  sym.kind = NoiseSpecCfg::Kind::symmetric;
  sym.epsilon = 0.2;
  CHECK(sym.id() == "symmetric(0.2)");
  CHECK(sym.to_transition(10)(0, 1) == doctest::Approx(0.2 / 9));

  NoiseSpecCfg asym;
  asym.kind = NoiseSpecCfg::Kind::binary_asym;
  asym.e0 = 0.1;
  asym.e1 = 0.3;
  CHECK(asym.id() == "binary_asym(0.1,0.3)");
  CHECK_THROWS_AS(asym.to_transition(3), std::invalid_argument);

  NoiseSpecCfg sparse;
  sparse.kind = NoiseSpecCfg::Kind::sparse;
  sparse.e0 = sparse.e1 = 0.2;
  sparse.pairs = {{0, 1}, {2, 3}};
  CHECK(sparse.to_transition(4)(2, 3) == 0.2);
}

TEST_CASE("closed-form r_opt dispatch") {
  NoiseSpecCfg none;
  CHECK(predict_r_opt(0.2, none, 2) == 0.2);

  NoiseSpecCfg sym;
  sym.kind = NoiseSpecCfg::Kind::symmetric;
  sym.epsilon = 0.3;
  CHECK(predict_r_opt(0.2, sym, 2) == doctest::Approx(-1.0).epsilon(1e-12));
  sym.epsilon = 0.4;
  CHECK(predict_r_opt(0.0, sym, 10) == doctest::Approx(-0.8).epsilon(1e-12));

  NoiseSpecCfg sparse;
  sparse.kind = NoiseSpecCfg::Kind::sparse;
  sparse.e0 = sparse.e1 = 0.3;
  sparse.pairs = {{0, 1}, {2, 3}};
  CHECK(predict_r_opt(0.2, sparse, 4) == doctest::Approx(-1.0).epsilon(1e-12));

  sparse.e1 = 0.4;
  CHECK_THROWS_AS(predict_r_opt(0.2, sparse, 4), std::invalid_argument);

  NoiseSpecCfg asym;
  asym.kind = NoiseSpecCfg::Kind::binary_asym;
  asym.e0 = 0.1;
  asym.e1 = 0.3;
  CHECK_THROWS_AS(predict_r_opt(0.2, asym, 2), std::invalid_argument);
}

TEST_CASE("config files round-trip") {
  TempDir dir;
  SweepConfig cfg = tiny_sweep_config((dir.path / "out").string());
  cfg.r_grid.push_back(-std::numeric_limits<double>::infinity());
  cfg.r_star = 0.2;
  cfg.lr_grid = {0.05, 0.01};

  const std::string path = (dir.path / "cfg.json").string();
  save_sweep_config(cfg, path);
  const SweepConfig back = load_sweep_config(path);
  CHECK(back.noise_grid.size() == 2);
  CHECK(back.noise_grid[1].id() == "symmetric(0.2)");
  CHECK(back.r_grid.size() == 3);
  CHECK(std::isinf(back.r_grid[2]));
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.lr_grid == cfg.lr_grid);
  CHECK(back.train_template.epochs == 2);
  CHECK(back.train_template.hidden_dims == std::vector<int>{4});
  CHECK(back.r_star.has_value());
  CHECK(*back.r_star == 0.2);

  CHECK_THROWS_AS(load_sweep_config((dir.path / "missing.json").string()), std::runtime_error);
}

TEST_CASE("record aggregation matches an independent recomputation") {
  std::vector<CellRecord> records;
  const double accs[4] = {0.8, 0.9, 0.7, 0.6};
  for (int s = 0; s < 4; ++s) {
    CellRecord rec;
    rec.noise_id = "none";
    rec.r = 0.2;
    rec.seed = static_cast<std::uint64_t>(s);
    rec.lr = 0.1;
    rec.test_accuracy = accs[s];
    records.push_back(rec);
  }
  CellRecord failed;
  failed.noise_id = "none";
  failed.r = 0.2;
  failed.seed = 9;
  failed.lr = 0.1;
  failed.failed = true;
  records.push_back(failed);

  const auto aggregates = aggregate_records(records);
  REQUIRE(aggregates.size() == 1);
  double mean = (0.8 + 0.9 + 0.7 + 0.6) / 4.0;
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  var /= 4.0;
  CHECK(aggregates[0].mean_accuracy == doctest::Approx(mean).epsilon(1e-12));
  CHECK(aggregates[0].std_accuracy == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(aggregates[0].seed_count == 4);
}

TEST_CASE("lr selection keeps the best mean accuracy per cell") {
  std::vector<CellRecord> records;
  for (int s = 0; s < 3; ++s)
    for (double lr : {0.1, 0.01}) {
      CellRecord rec;
      rec.noise_id = "none";
      rec.r = 0.0;
      rec.seed = static_cast<std::uint64_t>(s);
      rec.lr = lr;
      rec.test_accuracy = lr == 0.01 ? 0.9 : 0.7;
      records.push_back(rec);
    }
  const auto aggregates = aggregate_records(records);
  REQUIRE(aggregates.size() == 1);
  CHECK(aggregates[0].lr == 0.01);
  CHECK(aggregates[0].mean_accuracy == doctest::Approx(0.9));
}

TEST_CASE("empirical r_opt tie-breaks toward zero, then the positive rate") {
  std::vector<CellAggregate> aggs;
  for (double r : {0.4, -0.4, 0.2, -0.2}) {
    CellAggregate a;
    a.noise_id = "none";
    a.r = r;
    a.mean_accuracy = 0.9;
    aggs.push_back(a);
  }
  const auto opts = empirical_r_opt(aggs);
  REQUIRE(opts.size() == 1);
  CHECK(opts[0].r_opt == 0.2);

  aggs[0].mean_accuracy = 0.95;  // a strict winner beats the tie rule
  CHECK(empirical_r_opt(aggs)[0].r_opt == 0.4);
}

TEST_CASE("sweep runs, resumes, and reports") {
  TempDir dir;
  const std::string out = (dir.path / "sweep").string();
  SweepConfig cfg = tiny_sweep_config(out);
  cfg.r_star = 0.2;

  const SweepResult result = run_sweep(cfg, 2);
  CHECK(result.records.size() == 8);  // 2 noise x 2 r x 2 seeds
  CHECK(count_lines(out + "/records.jsonl") == 8);

  // resume executes nothing new
  const SweepResult again = run_sweep(cfg, 1);
  CHECK(again.records.size() == 8);
  CHECK(count_lines(out + "/records.jsonl") == 8);

  // drop half the records; only the missing cells rerun
  {
    std::vector<std::string> lines;
    std::ifstream in(out + "/records.jsonl");
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    std::ofstream trimmed(out + "/records.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < 4; ++i) trimmed << lines[i] << '\n';
  }
  const SweepResult resumed = run_sweep(cfg, 1);
  CHECK(resumed.records.size() == 8);
  CHECK(count_lines(out + "/records.jsonl") == 8);

  // records are deterministic across thread counts and reruns
  const std::string copy = (dir.path / "sweep2").string();
  SweepConfig cfg2 = tiny_sweep_config(copy);
  cfg2.r_star = 0.2;
  const SweepResult serial = run_sweep(cfg2, 1);
  REQUIRE(serial.records.size() == 8);
  for (const CellRecord& rec : serial.records) {
    bool matched = false;
    for (const CellRecord& other : result.records) {
      if (other.noise_id == rec.noise_id && other.r == rec.r && other.seed == rec.seed && other.lr == rec.lr) {
        CHECK(other.test_accuracy == rec.test_accuracy);
        CHECK(other.train_loss_final == rec.train_loss_final);
        matched = true;
      }
    }
    CHECK(matched);
  }

  write_reports(out);
  CHECK(fs::exists(out + "/accuracy_table.csv"));
  CHECK(fs::exists(out + "/accuracy_std.csv"));
  CHECK(fs::exists(out + "/r_opt.csv"));
  CHECK(fs::exists(out + "/confidence_hist.csv"));
  CHECK(fs::exists(out + "/report_notes.txt"));

  // table shape: header + one row per rate; one column per noise id
  {
    std::ifstream table(out + "/accuracy_table.csv");
    std::string header;
    std::getline(table, header);
    CHECK(header == "r,none,symmetric(0.2)");
    long rows = 0;
    std::string line;
    while (std::getline(table, line)) ++rows;
    CHECK(rows == 2);
  }

  // r_opt table carries the predicted column
  {
    const std::string ropt = read_file(out + "/r_opt.csv");
    CHECK(ropt.find("noise,empirical_r_opt,mean_accuracy,predicted_r_opt") != std::string::npos);
    CHECK(ropt.find("none,") != std::string::npos);
    CHECK(ropt.find("symmetric(0.2),") != std::string::npos);
  }

  // byte-identical reports on rewrite
  const std::string table_before = read_file(out + "/accuracy_table.csv");
  const std::string ropt_before = read_file(out + "/r_opt.csv");
  write_reports(out);
  CHECK(read_file(out + "/accuracy_table.csv") == table_before);
  CHECK(read_file(out + "/r_opt.csv") == ropt_before);

  CHECK_THROWS_AS(write_reports((dir.path / "empty").string()), std::runtime_error);
}

TEST_CASE("single runs write a report and checkpoint") {
  TempDir dir;
  SweepConfig cfg = tiny_sweep_config((dir.path / "single").string());
  const CellRecord rec = run_single(cfg);
  CHECK_FALSE(rec.failed);
  CHECK(fs::exists(dir.path / "single" / "report.json"));
  CHECK(fs::exists(dir.path / "single" / "model.txt"));
  const std::string report = read_file(dir.path / "single" / "report.json");
  CHECK(report.find("\"series\"") != std::string::npos);
  CHECK(report.find("\"test_accuracy\"") != std::string::npos);
}

TEST_CASE("a diverged cell is recorded as failed and the sweep continues") {
  TempDir dir;
  const std::string out = (dir.path / "diverge").string();
  SweepConfig cfg = tiny_sweep_config(out);
  cfg.noise_grid = {cfg.noise_grid[0]};
  cfg.r_grid = {0.0};
  cfg.seeds = {1, 2};
  cfg.train_template.optimizer.kind = OptimizerKind::sgd;
  cfg.train_template.optimizer.momentum = 0.0;
  cfg.train_template.optimizer.weight_decay = 0.0;
  cfg.train_template.epochs = 3;
  cfg.train_template.lr = {1e300, 1.0, 0};

  const SweepResult result = run_sweep(cfg, 1);
  CHECK(result.records.size() == 2);
  for (const CellRecord& rec : result.records) {
    CHECK(rec.failed);
    CHECK(rec.error.find("diverged") != std::string::npos);
  }

  // failed cells are excluded from aggregation, and reporting says so
  CHECK(aggregate_records(result.records).empty());
  write_reports(out);
  const std::string notes = read_file(out + "/report_notes.txt");
  CHECK(notes.find("failed cells excluded from aggregation: 2") != std::string::npos);
}

TEST_CASE("sweeps require a smoothing-loss template") {
  TempDir dir;
  SweepConfig cfg = tiny_sweep_config((dir.path / "bad").string());
  cfg.train_template.loss = LossSpec::complementary();
  CHECK_THROWS_AS(run_sweep(cfg, 1), std::invalid_argument);
}

TEST_CASE("bias-variance records per cell") {
  TempDir dir;
  const std::string out = (dir.path / "bv").string();
  SweepConfig cfg = tiny_sweep_config(out);
  cfg.noise_grid = {cfg.noise_grid[0]};  // none only
  cfg.r_grid = {0.0};
  run_bias_variance(cfg, 3, 2);
  CHECK(count_lines(out + "/bias_variance.jsonl") == 1);
  const std::string line = read_file(out + "/bias_variance.jsonl");
  CHECK(line.find("\"bias\"") != std::string::npos);
  CHECK(line.find("\"variance\"") != std::string::npos);
  CHECK(line.find("\"replicates\":3") != std::string::npos);
}
