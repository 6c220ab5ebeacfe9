// gls_lab: generate data, inject label noise, train, sweep smooth rates,
// verify the loss identities, and export report tables.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "gls/datagen.hpp"
#include "gls/harness.hpp"
#include "gls/noise_math.hpp"
#include "gls/verify.hpp"

namespace {

int resolve_threads(int flag_value) {
  if (const char* env = std::getenv("GLS_LAB_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return flag_value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generalized label smoothing lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  bool resume = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    cmd->add_option("--seed", seed, "seed override")->each([&seed_set](const std::string&) { seed_set = true; });
    cmd->add_option("--threads", threads, "worker threads (env GLS_LAB_THREADS overrides)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a dataset CSV from the config's dataset section");
  add_common(gen, true);

  auto* inject = app.add_subcommand("inject-noise", "flip labels of a CSV per the config's first noise spec");
  add_common(inject, true);
  std::string in_csv;
  inject->add_option("--in", in_csv, "input CSV")->required();

  auto* train_cmd = app.add_subcommand("train", "single training run (first noise/r/seed of the config)");
  add_common(train_cmd, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "train every (noise, r, seed, lr) cell of the grid");
  add_common(sweep_cmd, true);
  sweep_cmd->add_flag("--resume", resume, "continue an interrupted sweep, skipping finished cells");

  auto* report_cmd = app.add_subcommand("report", "write CSV tables from sweep records");
  add_common(report_cmd, false);

  auto* verify_cmd = app.add_subcommand("verify", "run the identity suite; exit nonzero on any failure");
  add_common(verify_cmd, false);

  auto* bv_cmd = app.add_subcommand("bias-variance", "bias/variance over bootstrap replicates per (noise, r)");
  add_common(bv_cmd, true);
  int replicates = 10;
  bv_cmd->add_option("--replicates", replicates, "bootstrap replicates per cell");

  CLI11_PARSE(app, argc, argv);
  threads = resolve_threads(threads);

  try {
    if (gen->parsed()) {
      gls::SweepConfig cfg = gls::load_sweep_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (cfg.out_dir.empty()) throw std::invalid_argument("gen-data needs --out or out_dir in the config");
      if (cfg.dataset.use_csv) throw std::invalid_argument("gen-data needs a synthetic dataset config");
      if (seed_set) cfg.dataset.synthetic.seed = seed;
      std::filesystem::create_directories(cfg.out_dir);
      const gls::LabeledDataset ds = gls::gen_synthetic(cfg.dataset.synthetic);
      const std::string path = cfg.out_dir + "/data.csv";
      gls::save_csv(ds, path);
      std::printf("wrote %d samples to %s\n", ds.size(), path.c_str());
    } else if (inject->parsed()) {
      gls::SweepConfig cfg = gls::load_sweep_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (cfg.out_dir.empty()) throw std::invalid_argument("inject-noise needs --out or out_dir in the config");
      const gls::NoiseSpecCfg& noise = cfg.noise_grid.front();
      if (noise.is_none()) throw std::invalid_argument("config's first noise spec is 'none'");
      gls::LabeledDataset ds = gls::load_csv(in_csv, cfg.dataset.label_column, cfg.dataset.delimiter);
      const gls::LabeledDataset noisy =
          gls::inject_noise(ds, noise.to_transition(ds.num_classes), seed_set ? seed : cfg.seeds.front());
      std::filesystem::create_directories(cfg.out_dir);
      const std::string path = cfg.out_dir + "/noisy.csv";
      gls::save_csv(noisy, path);
      int flipped = 0;
      for (int i = 0; i < noisy.size(); ++i)
        flipped += noisy.labels[static_cast<std::size_t>(i)] != noisy.clean_labels[static_cast<std::size_t>(i)];
      std::printf("wrote %s (%d of %d labels flipped)\n", path.c_str(), flipped, noisy.size());
    } else if (train_cmd->parsed()) {
      gls::SweepConfig cfg = gls::load_sweep_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (seed_set) cfg.seeds = {seed};
      const gls::CellRecord rec = gls::run_single(cfg);
      std::printf("noise=%s r=%s seed=%llu: test_accuracy=%.4f expected_mc=%.4f train_loss=%.6f\n",
                  rec.noise_id.c_str(), gls::r_to_string(rec.r).c_str(),
                  static_cast<unsigned long long>(rec.seed), rec.test_accuracy, rec.expected_mc,
                  rec.train_loss_final);
    } else if (sweep_cmd->parsed()) {
      gls::SweepConfig cfg = gls::load_sweep_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (cfg.out_dir.empty()) throw std::invalid_argument("sweep needs --out or out_dir in the config");
      const std::string records = cfg.out_dir + "/records.jsonl";
      if (!resume && std::filesystem::exists(records) && std::filesystem::file_size(records) > 0)
        throw std::runtime_error(records + " already has records; pass --resume or use a fresh --out");
      const gls::SweepResult result = gls::run_sweep(cfg, threads);
      long failed = 0;
      for (const auto& rec : result.records) failed += rec.failed ? 1 : 0;
      std::printf("sweep finished: %zu cells (%ld failed); records in %s\n", result.records.size(), failed,
                  records.c_str());
    } else if (report_cmd->parsed()) {
      std::string dir = out_dir;
      if (dir.empty() && !config_path.empty()) dir = gls::load_sweep_config(config_path).out_dir;
      if (dir.empty()) throw std::invalid_argument("report needs --out (the sweep output directory)");
      gls::write_reports(dir);
      std::printf("reports written to %s\n", dir.c_str());
    } else if (verify_cmd->parsed()) {
      const auto reports = gls::run_identity_suite(seed_set ? seed : 20240517ULL);
      bool all_pass = true;
      for (const auto& rep : reports) {
        std::printf("%-44s residual=%-12.3g tol=%-8.1g %s\n", rep.name.c_str(), rep.max_abs_residual,
                    rep.tolerance, rep.pass ? "PASS" : "FAIL");
        if (!rep.detail.empty()) std::printf("    %s\n", rep.detail.c_str());
        all_pass = all_pass && rep.pass;
      }
      if (!all_pass) {
        std::fprintf(stderr, "identity suite FAILED\n");
        return 1;
      }
      std::printf("identity suite passed (%zu checks)\n", reports.size());
    } else if (bv_cmd->parsed()) {
      gls::SweepConfig cfg = gls::load_sweep_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (cfg.out_dir.empty()) throw std::invalid_argument("bias-variance needs --out or out_dir in the config");
      if (seed_set) cfg.seeds = {seed};
      gls::run_bias_variance(cfg, replicates, threads);
      std::printf("bias/variance records in %s/bias_variance.jsonl\n", cfg.out_dir.c_str());
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return 0;
}
