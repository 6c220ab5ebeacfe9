#include "gls/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "gls/losses.hpp"
#include "gls/metrics.hpp"
#include "gls/noise_math.hpp"
#include "gls/rng.hpp"

namespace gls {

namespace {

using nlohmann::json;

constexpr int kHistogramBins = 40;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string format_double(double v, const char* spec = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void run_tasks(std::vector<std::function<void()>> tasks, int threads) {
  threads = std::max(1, threads);
  if (threads == 1) {
    for (auto& task : tasks) task();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&tasks, &next] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        tasks[i]();
      }
    });
  }
  for (auto& worker : pool) worker.join();
}

}  // namespace

std::string NoiseSpecCfg::id() const {
  switch (kind) {
    case Kind::none:
      return "none";
    case Kind::binary_asym:
      return "binary_asym(" + format_double(e0, "%g") + "," + format_double(e1, "%g") + ")";
    case Kind::symmetric:
      return "symmetric(" + format_double(epsilon, "%g") + ")";
    case Kind::sparse:
      return "sparse(" + format_double(e0, "%g") + "," + format_double(e1, "%g") + ")";
  }
  return "unknown";
}

TransitionMatrix NoiseSpecCfg::to_transition(int num_classes) const {
  switch (kind) {
    case Kind::none:
      return TransitionMatrix::symmetric(0.0, num_classes);
    case Kind::binary_asym:
      if (num_classes != 2) throw std::invalid_argument("binary_asym noise needs K = 2");
      return TransitionMatrix::binary_asym(e0, e1);
    case Kind::symmetric:
      return TransitionMatrix::symmetric(epsilon, num_classes);
    case Kind::sparse:
      return TransitionMatrix::sparse_pairs(pairs, e0, e1, num_classes);
  }
  throw std::logic_error("unhandled noise kind");
}

std::string r_to_string(double r) {
  if (std::isinf(r) && r < 0.0) return "neg-inf";
  return format_double(r);
}

double r_from_string(const std::string& text) {
  if (text == "neg-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw std::invalid_argument("bad smooth rate: '" + text + "'");
  return value;
}

namespace {

NoiseSpecCfg parse_noise(const json& j) {
  NoiseSpecCfg n;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none") {
    n.kind = NoiseSpecCfg::Kind::none;
  } else if (kind == "binary_asym") {
    n.kind = NoiseSpecCfg::Kind::binary_asym;
    n.e0 = j.at("e0").get<double>();
    n.e1 = j.at("e1").get<double>();
  } else if (kind == "symmetric") {
    n.kind = NoiseSpecCfg::Kind::symmetric;
    n.epsilon = j.at("epsilon").get<double>();
  } else if (kind == "sparse") {
    n.kind = NoiseSpecCfg::Kind::sparse;
    n.e0 = j.at("e0").get<double>();
    n.e1 = j.at("e1").get<double>();
    for (const auto& pair : j.at("pairs")) n.pairs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
  } else {
    throw std::invalid_argument("unknown noise kind: " + kind);
  }
  return n;
}

json noise_to_json(const NoiseSpecCfg& n) {
  json j;
  switch (n.kind) {
    case NoiseSpecCfg::Kind::none:
      j["kind"] = "none";
      break;
    case NoiseSpecCfg::Kind::binary_asym:
      j["kind"] = "binary_asym";
      j["e0"] = n.e0;
      j["e1"] = n.e1;
      break;
    case NoiseSpecCfg::Kind::symmetric:
      j["kind"] = "symmetric";
      j["epsilon"] = n.epsilon;
      break;
    case NoiseSpecCfg::Kind::sparse:
      j["kind"] = "sparse";
      j["e0"] = n.e0;
      j["e1"] = n.e1;
      j["pairs"] = json::array();
      for (const auto& [a, b] : n.pairs) j["pairs"].push_back({a, b});
      break;
  }
  return j;
}

SyntheticSpec parse_synthetic(const json& j) {
  SyntheticSpec s;
  const std::string type = j.value("type", "type1");
  if (type == "type1")
    s.kind = SyntheticSpec::Kind::type1;
  else if (type == "type2")
    s.kind = SyntheticSpec::Kind::type2;
  else
    throw std::invalid_argument("unknown synthetic type: " + type);
  s.n_per_class = j.value("n_per_class", 500);
  s.seed = j.value("seed", std::uint64_t{0});
  s.disk_radius = j.value("disk_radius", 0.25);
  s.annulus_inner = j.value("annulus_inner", 0.28);
  s.annulus_outer = j.value("annulus_outer", 0.45);
  s.band_inner = j.value("band_inner", 0.22);
  s.band_outer = j.value("band_outer", 0.31);
  s.band_select_prob = j.value("band_select_prob", 0.5);
  const std::string mode = j.value("band_mode", "flip");
  if (mode == "flip")
    s.band_mode = SyntheticSpec::BandMode::flip_to_other;
  else if (mode == "uniform")
    s.band_mode = SyntheticSpec::BandMode::uniform_random;
  else
    throw std::invalid_argument("unknown band_mode: " + mode);
  return s;
}

json synthetic_to_json(const SyntheticSpec& s) {
  json j;
  j["type"] = s.kind == SyntheticSpec::Kind::type1 ? "type1" : "type2";
  j["n_per_class"] = s.n_per_class;
  j["seed"] = s.seed;
  j["disk_radius"] = s.disk_radius;
  j["annulus_inner"] = s.annulus_inner;
  j["annulus_outer"] = s.annulus_outer;
  j["band_inner"] = s.band_inner;
  j["band_outer"] = s.band_outer;
  j["band_select_prob"] = s.band_select_prob;
  j["band_mode"] = s.band_mode == SyntheticSpec::BandMode::flip_to_other ? "flip" : "uniform";
  return j;
}

TrainConfig parse_train(const json& j) {
  TrainConfig t;
  if (j.contains("loss")) {
    const json& loss = j.at("loss");
    const std::string kind = loss.value("kind", "gls");
    if (kind == "gls") {
      const json rate = loss.value("rate", json(0.0));
      t.loss = rate.is_string() && rate.get<std::string>() == "neg-inf"
                   ? LossSpec::extreme_smoothed()
                   : LossSpec::smoothed(rate.get<double>());
    } else if (kind == "backward" || kind == "forward" || kind == "complementary" || kind == "peer_expected" ||
               kind == "peer_sampled" || kind == "gls_c") {
      // resolved against the cell's noise model at run time
      t.loss.kind = kind == "backward"        ? LossSpec::Kind::backward
                    : kind == "forward"       ? LossSpec::Kind::forward
                    : kind == "complementary" ? LossSpec::Kind::complementary
                    : kind == "peer_expected" ? LossSpec::Kind::peer_expected
                    : kind == "peer_sampled"  ? LossSpec::Kind::peer_sampled
                                              : LossSpec::Kind::gls_c;
      if (t.loss.kind == LossSpec::Kind::gls_c) t.loss.rate = loss.value("rate", 0.0);
    } else {
      throw std::invalid_argument("unknown loss kind: " + kind);
    }
  }
  t.epochs = j.value("epochs", 200);
  t.batch_size = j.value("batch_size", 128);
  if (j.contains("optimizer")) {
    const json& opt = j.at("optimizer");
    const std::string kind = opt.value("kind", "adam");
    if (kind == "adam")
      t.optimizer.kind = OptimizerKind::adam;
    else if (kind == "sgd")
      t.optimizer.kind = OptimizerKind::sgd;
    else
      throw std::invalid_argument("unknown optimizer: " + kind);
    t.optimizer.momentum = opt.value("momentum", 0.9);
    t.optimizer.nesterov = opt.value("nesterov", true);
    t.optimizer.weight_decay = opt.value("weight_decay", 1e-4);
    t.optimizer.beta1 = opt.value("beta1", 0.9);
    t.optimizer.beta2 = opt.value("beta2", 0.999);
    t.optimizer.adam_eps = opt.value("eps", 1e-8);
  }
  if (j.contains("lr")) {
    const json& lr = j.at("lr");
    t.lr.initial = lr.value("initial", 0.1);
    t.lr.decay_factor = lr.value("decay_factor", 0.1);
    t.lr.decay_every_epochs = lr.value("decay_every_epochs", 40);
  }
  t.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("hidden_dims")) t.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  t.epsilon_clamp = j.value("epsilon_clamp", 1e-7);
  t.warmup_checkpoint = j.value("warmup_checkpoint", std::string{});
  return t;
}

json train_to_json(const TrainConfig& t) {
  json j;
  json loss;
  switch (t.loss.kind) {
    case LossSpec::Kind::gls:
      loss["kind"] = "gls";
      if (t.loss.is_extreme_rate())
        loss["rate"] = "neg-inf";
      else
        loss["rate"] = t.loss.rate;
      break;
    case LossSpec::Kind::backward:
      loss["kind"] = "backward";
      break;
    case LossSpec::Kind::forward:
      loss["kind"] = "forward";
      break;
    case LossSpec::Kind::complementary:
      loss["kind"] = "complementary";
      break;
    case LossSpec::Kind::peer_expected:
      loss["kind"] = "peer_expected";
      break;
    case LossSpec::Kind::peer_sampled:
      loss["kind"] = "peer_sampled";
      break;
    case LossSpec::Kind::gls_c:
      loss["kind"] = "gls_c";
      loss["rate"] = t.loss.rate;
      break;
  }
  j["loss"] = loss;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["optimizer"] = {{"kind", t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
                    {"momentum", t.optimizer.momentum},
                    {"nesterov", t.optimizer.nesterov},
                    {"weight_decay", t.optimizer.weight_decay},
                    {"beta1", t.optimizer.beta1},
                    {"beta2", t.optimizer.beta2},
                    {"eps", t.optimizer.adam_eps}};
  j["lr"] = {{"initial", t.lr.initial},
             {"decay_factor", t.lr.decay_factor},
             {"decay_every_epochs", t.lr.decay_every_epochs}};
  j["seed"] = t.seed;
  j["hidden_dims"] = t.hidden_dims;
  j["epsilon_clamp"] = t.epsilon_clamp;
  j["warmup_checkpoint"] = t.warmup_checkpoint;
  return j;
}

}  // namespace

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("cannot open config: " + path);
  json j;
  file >> j;

  SweepConfig cfg;
  cfg.version = j.value("version", 1);
  if (cfg.version != 1) throw std::invalid_argument("unsupported config version");

  const json& ds = j.at("dataset");
  const std::string kind = ds.value("kind", "synthetic");
  if (kind == "synthetic") {
    cfg.dataset.use_csv = false;
    if (ds.contains("synthetic")) cfg.dataset.synthetic = parse_synthetic(ds.at("synthetic"));
  } else if (kind == "csv") {
    cfg.dataset.use_csv = true;
    const json& csv = ds.at("csv");
    cfg.dataset.csv_path = csv.at("path").get<std::string>();
    cfg.dataset.label_column = csv.value("label_column", "label");
    const std::string delim = csv.value("delimiter", ",");
    if (delim.size() != 1) throw std::invalid_argument("delimiter must be one character");
    cfg.dataset.delimiter = delim[0];
  } else {
    throw std::invalid_argument("unknown dataset kind: " + kind);
  }
  if (ds.contains("split")) {
    const json& split = ds.at("split");
    cfg.dataset.train_frac = split.value("train", 0.8);
    cfg.dataset.val_frac = split.value("val", 0.0);
    cfg.dataset.test_frac = split.value("test", 0.2);
    cfg.dataset.split_seed = split.value("seed", std::uint64_t{0});
  }
  cfg.dataset.standardize = ds.value("standardize", false);

  if (j.contains("noise"))
    for (const json& n : j.at("noise")) cfg.noise_grid.push_back(parse_noise(n));
  if (cfg.noise_grid.empty()) cfg.noise_grid.push_back(NoiseSpecCfg{});

  if (j.contains("r_grid")) {
    for (const json& r : j.at("r_grid")) {
      const double value = r.is_string() ? r_from_string(r.get<std::string>()) : r.get<double>();
      if (value > 1.0) throw std::invalid_argument("r grid values must be <= 1");
      cfg.r_grid.push_back(value);
    }
  }
  if (cfg.r_grid.empty()) cfg.r_grid.push_back(0.0);

  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (cfg.seeds.empty()) cfg.seeds.push_back(1);
  if (j.contains("lr_grid")) cfg.lr_grid = j.at("lr_grid").get<std::vector<double>>();
  if (j.contains("train")) cfg.train_template = parse_train(j.at("train"));
  if (j.contains("r_star")) cfg.r_star = j.at("r_star").get<double>();
  cfg.out_dir = j.value("out_dir", std::string{});
  return cfg;
}

void save_sweep_config(const SweepConfig& cfg, const std::string& path) {
  json j;
  j["version"] = cfg.version;
  json ds;
  ds["kind"] = cfg.dataset.use_csv ? "csv" : "synthetic";
  if (cfg.dataset.use_csv) {
    ds["csv"] = {{"path", cfg.dataset.csv_path},
                 {"label_column", cfg.dataset.label_column},
                 {"delimiter", std::string(1, cfg.dataset.delimiter)}};
  } else {
    ds["synthetic"] = synthetic_to_json(cfg.dataset.synthetic);
  }
  ds["split"] = {{"train", cfg.dataset.train_frac},
                 {"val", cfg.dataset.val_frac},
                 {"test", cfg.dataset.test_frac},
                 {"seed", cfg.dataset.split_seed}};
  ds["standardize"] = cfg.dataset.standardize;
  j["dataset"] = ds;
  j["noise"] = json::array();
  for (const NoiseSpecCfg& n : cfg.noise_grid) j["noise"].push_back(noise_to_json(n));
  j["r_grid"] = json::array();
  for (double r : cfg.r_grid) {
    if (std::isinf(r))
      j["r_grid"].push_back("neg-inf");
    else
      j["r_grid"].push_back(r);
  }
  j["seeds"] = cfg.seeds;
  j["lr_grid"] = cfg.lr_grid;
  j["train"] = train_to_json(cfg.train_template);
  if (cfg.r_star) j["r_star"] = *cfg.r_star;
  j["out_dir"] = cfg.out_dir;

  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot write config: " + path);
  file << j.dump(2) << '\n';
}

SplitResult prepare_dataset(const DatasetConfig& dc) {
  LabeledDataset base = dc.use_csv ? load_csv(dc.csv_path, dc.label_column, dc.delimiter)
                                   : gen_synthetic(dc.synthetic);
  SplitResult parts = split(base, dc.train_frac, dc.val_frac, dc.test_frac, dc.split_seed);
  if (dc.standardize) {
    std::vector<LabeledDataset*> others{&parts.test};
    if (parts.val.size() > 0) others.push_back(&parts.val);
    standardize_features(parts.train, others);
  }
  return parts;
}

namespace {

// Same training-set noise realization for a given seed across every r and lr.
std::uint64_t injection_seed(std::uint64_t seed, const std::string& noise_id) {
  return mix_seed(seed, 0x4015E, fnv1a(noise_id));
}

LossSpec resolve_loss(const LossSpec& tmpl, double r, const NoiseSpecCfg& noise,
                      const LabeledDataset& noisy_train, const SplitResult& parts) {
  switch (tmpl.kind) {
    case LossSpec::Kind::gls:
      return std::isinf(r) ? LossSpec::extreme_smoothed() : LossSpec::smoothed(r);
    case LossSpec::Kind::backward:
      return LossSpec::backward_corrected(noise.to_transition(noisy_train.num_classes));
    case LossSpec::Kind::forward:
      return LossSpec::forward_corrected(noise.to_transition(noisy_train.num_classes));
    case LossSpec::Kind::complementary:
      return LossSpec::complementary();
    case LossSpec::Kind::peer_expected: {
      Vec prior(static_cast<std::size_t>(noisy_train.num_classes), 0.0);
      for (int y : noisy_train.labels) prior[static_cast<std::size_t>(y)] += 1.0;
      for (double& v : prior) v /= noisy_train.size();
      return LossSpec::peer(std::move(prior));
    }
    case LossSpec::Kind::peer_sampled:
      return LossSpec::peer_with_pairing(tmpl.pairing_seed);
    case LossSpec::Kind::gls_c: {
      if (parts.val.size() == 0)
        throw std::invalid_argument("gls_c needs a nonempty val split as its clean subset");
      if (noise.kind != NoiseSpecCfg::Kind::binary_asym && noise.kind != NoiseSpecCfg::Kind::symmetric)
        throw std::invalid_argument("gls_c needs binary flip rates from the noise spec");
      return LossSpec::confidence_corrected(std::isinf(r) ? tmpl.rate : r, noise.e0, noise.e1,
                                            std::make_shared<LabeledDataset>(parts.val));
    }
  }
  throw std::logic_error("unhandled loss kind");
}

json histogram_json(const MlpModel& model, const LabeledDataset& test) {
  std::vector<long> correct(kHistogramBins, 0), wrong(kHistogramBins, 0);
  for (int i = 0; i < test.size(); ++i) {
    const ProbVector p = forward(model, test.sample(i));
    const int y = test.labels[static_cast<std::size_t>(i)];
    int best = 0;
    for (int k = 1; k < p.num_classes(); ++k)
      if (p[k] > p[best]) best = k;
    const double mc = model_confidence(p, y);
    int bin = static_cast<int>((mc + 1.0) / 2.0 * kHistogramBins);
    bin = std::clamp(bin, 0, kHistogramBins - 1);
    (best == y ? correct : wrong)[static_cast<std::size_t>(bin)] += 1;
  }
  json j;
  j["bins"] = kHistogramBins;
  j["lo"] = -1.0;
  j["hi"] = 1.0;
  j["correct"] = correct;
  j["wrong"] = wrong;
  return j;
}

std::string record_key(const std::string& noise_id, double r, std::uint64_t seed, double lr) {
  return noise_id + "|" + r_to_string(r) + "|" + std::to_string(seed) + "|" + format_double(lr);
}

}  // namespace

std::vector<CellRecord> load_records(const std::string& path) {
  std::vector<CellRecord> records;
  std::ifstream file(path);
  if (!file) return records;
  std::string line;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    CellRecord rec;
    rec.noise_id = j.at("noise").get<std::string>();
    rec.r = r_from_string(j.at("r").get<std::string>());
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.lr = j.at("lr").get<double>();
    rec.failed = j.value("failed", false);
    rec.error = j.value("error", std::string{});
    rec.test_accuracy = j.value("test_accuracy", 0.0);
    rec.expected_mc = j.value("expected_mc", 0.0);
    rec.train_loss_final = j.value("train_loss_final", 0.0);
    rec.train_accuracy_final = j.value("train_accuracy_final", 0.0);
    records.push_back(std::move(rec));
  }
  return records;
}

SweepResult run_sweep(const SweepConfig& cfg, int threads) {
  if (cfg.out_dir.empty()) throw std::invalid_argument("sweep needs an output directory");
  if (cfg.train_template.loss.kind != LossSpec::Kind::gls)
    throw std::invalid_argument("sweeps scan smooth rates; use the train subcommand for other losses");
  std::filesystem::create_directories(cfg.out_dir);
  save_sweep_config(cfg, cfg.out_dir + "/config.json");

  const SplitResult parts = prepare_dataset(cfg.dataset);

  const std::string records_path = cfg.out_dir + "/records.jsonl";
  std::set<std::string> done;
  for (const CellRecord& rec : load_records(records_path)) done.insert(record_key(rec.noise_id, rec.r, rec.seed, rec.lr));

  std::vector<double> lr_values = cfg.lr_grid;
  if (lr_values.empty()) lr_values.push_back(cfg.train_template.lr.initial);

  std::ofstream records_file(records_path, std::ios::app);
  std::ofstream hist_file(cfg.out_dir + "/confidence_hist.jsonl", std::ios::app);
  if (!records_file || !hist_file) throw std::runtime_error("cannot open sweep outputs in " + cfg.out_dir);
  std::mutex io_mutex;

  SweepResult result;
  std::mutex result_mutex;

  std::vector<std::function<void()>> tasks;
  for (const NoiseSpecCfg& noise : cfg.noise_grid)
    for (const double r : cfg.r_grid)
      for (const std::uint64_t seed : cfg.seeds)
        for (const double lr : lr_values) {
          if (done.contains(record_key(noise.id(), r, seed, lr))) continue;
          tasks.push_back([&, noise, r, seed, lr] {
            CellRecord rec;
            rec.noise_id = noise.id();
            rec.r = r;
            rec.seed = seed;
            rec.lr = lr;
            json hist;
            try {
              LabeledDataset noisy_train =
                  noise.is_none() ? parts.train
                                  : inject_noise(parts.train, noise.to_transition(parts.train.num_classes),
                                                 injection_seed(seed, noise.id()));
              TrainConfig tc = cfg.train_template;
              tc.loss = resolve_loss(cfg.train_template.loss, r, noise, noisy_train, parts);
              tc.seed = seed;
              tc.lr.initial = lr;
              const TrainReport report = train(noisy_train, parts.test, tc);
              rec.test_accuracy = report.test_accuracy.back();
              rec.expected_mc = report.expected_mc.back();
              rec.train_loss_final = report.train_loss.back();
              rec.train_accuracy_final = report.train_accuracy.back();
              hist = histogram_json(report.final_model, parts.test);
            } catch (const std::exception& err) {
              rec.failed = true;
              rec.error = err.what();
            }

            json j;
            j["noise"] = rec.noise_id;
            j["r"] = r_to_string(rec.r);
            j["seed"] = rec.seed;
            j["lr"] = rec.lr;
            if (rec.failed) {
              j["failed"] = true;
              j["error"] = rec.error;
            } else {
              j["test_accuracy"] = rec.test_accuracy;
              j["expected_mc"] = rec.expected_mc;
              j["train_loss_final"] = rec.train_loss_final;
              j["train_accuracy_final"] = rec.train_accuracy_final;
            }
            {
              std::lock_guard<std::mutex> lock(io_mutex);
              records_file << j.dump() << '\n';
              records_file.flush();
              if (!rec.failed) {
                hist["noise"] = rec.noise_id;
                hist["r"] = r_to_string(rec.r);
                hist["seed"] = rec.seed;
                hist["lr"] = rec.lr;
                hist_file << hist.dump() << '\n';
                hist_file.flush();
              }
            }
            {
              std::lock_guard<std::mutex> lock(result_mutex);
              result.records.push_back(std::move(rec));
            }
          });
        }

  run_tasks(std::move(tasks), threads);

  // include previously completed cells so callers see the full sweep
  for (const CellRecord& rec : load_records(records_path)) {
    const bool fresh = std::none_of(result.records.begin(), result.records.end(), [&rec](const CellRecord& have) {
      return record_key(have.noise_id, have.r, have.seed, have.lr) == record_key(rec.noise_id, rec.r, rec.seed, rec.lr);
    });
    if (fresh) result.records.push_back(rec);
  }
  return result;
}

std::vector<CellAggregate> aggregate_records(const std::vector<CellRecord>& records) {
  struct GroupKey {
    std::string noise_id;
    double r;
    double lr;
    bool operator<(const GroupKey& other) const {
      if (noise_id != other.noise_id) return noise_id < other.noise_id;
      if (r != other.r) return r > other.r;  // descending rate
      return lr < other.lr;
    }
  };
  std::map<GroupKey, std::vector<double>> groups;
  for (const CellRecord& rec : records) {
    if (rec.failed) continue;
    groups[GroupKey{rec.noise_id, rec.r, rec.lr}].push_back(rec.test_accuracy);
  }

  // best lr per (noise, r) by mean accuracy; ties toward the smaller lr
  std::map<std::pair<std::string, double>, CellAggregate> best;
  for (const auto& [key, accs] : groups) {
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    var /= static_cast<double>(accs.size());

    CellAggregate agg;
    agg.noise_id = key.noise_id;
    agg.r = key.r;
    agg.lr = key.lr;
    agg.mean_accuracy = mean;
    agg.std_accuracy = std::sqrt(var);
    agg.seed_count = static_cast<int>(accs.size());

    const auto map_key = std::make_pair(key.noise_id, key.r);
    auto it = best.find(map_key);
    if (it == best.end() || agg.mean_accuracy > it->second.mean_accuracy)
      best[map_key] = agg;
  }

  std::vector<CellAggregate> out;
  out.reserve(best.size());
  for (auto& [key, agg] : best) out.push_back(agg);
  std::sort(out.begin(), out.end(), [](const CellAggregate& a, const CellAggregate& b) {
    if (a.noise_id != b.noise_id) return a.noise_id < b.noise_id;
    return a.r > b.r;
  });
  return out;
}

std::vector<EmpiricalOpt> empirical_r_opt(const std::vector<CellAggregate>& aggregates) {
  std::map<std::string, EmpiricalOpt> best;
  for (const CellAggregate& agg : aggregates) {
    auto it = best.find(agg.noise_id);
    if (it == best.end()) {
      best[agg.noise_id] = EmpiricalOpt{agg.noise_id, agg.r, agg.mean_accuracy};
      continue;
    }
    EmpiricalOpt& cur = it->second;
    const bool better = agg.mean_accuracy > cur.mean_accuracy;
    const bool tied = agg.mean_accuracy == cur.mean_accuracy;
    // ties: closest to 0, then the larger rate
    const bool tie_wins =
        tied && (std::abs(agg.r) < std::abs(cur.r_opt) || (std::abs(agg.r) == std::abs(cur.r_opt) && agg.r > cur.r_opt));
    if (better || tie_wins) {
      cur.r_opt = agg.r;
      cur.mean_accuracy = agg.mean_accuracy;
    }
  }
  std::vector<EmpiricalOpt> out;
  for (auto& [id, opt] : best) out.push_back(opt);
  return out;
}

double predict_r_opt(double r_star, const NoiseSpecCfg& noise, int num_classes) {
  switch (noise.kind) {
    case NoiseSpecCfg::Kind::none:
      return r_star;
    case NoiseSpecCfg::Kind::symmetric:
      return r_opt_multiclass(r_star, noise.epsilon, num_classes);
    case NoiseSpecCfg::Kind::binary_asym:
      if (noise.e0 != noise.e1)
        throw std::invalid_argument("closed-form r_opt needs symmetric flip rates");
      return r_opt_binary(r_star, noise.e0);
    case NoiseSpecCfg::Kind::sparse:
      // disjoint pairs reduce to independent binary tasks
      if (noise.e0 != noise.e1)
        throw std::invalid_argument("closed-form r_opt needs symmetric pair rates");
      return r_opt_binary(r_star, noise.e0);
  }
  throw std::logic_error("unhandled noise kind");
}

void write_reports(const std::string& out_dir) {
  const std::vector<CellRecord> records = load_records(out_dir + "/records.jsonl");
  if (records.empty()) throw std::runtime_error("no sweep records in " + out_dir);

  const std::vector<CellAggregate> aggregates = aggregate_records(records);

  std::set<std::string> noise_ids;
  std::set<double, std::greater<double>> rates;
  for (const CellRecord& rec : records) {
    noise_ids.insert(rec.noise_id);
    rates.insert(rec.r);
  }
  // neg-inf sorts last under greater<>, matching the table layout

  std::map<std::pair<std::string, double>, const CellAggregate*> by_cell;
  for (const CellAggregate& agg : aggregates) by_cell[{agg.noise_id, agg.r}] = &agg;

  auto write_table = [&](const std::string& path, auto value_of) {
    std::ofstream file(path);
    if (!file) throw std::runtime_error("cannot write " + path);
    file << "r";
    for (const std::string& id : noise_ids) file << ',' << id;
    file << '\n';
    for (double r : rates) {
      file << r_to_string(r);
      for (const std::string& id : noise_ids) {
        file << ',';
        const auto it = by_cell.find({id, r});
        if (it != by_cell.end()) file << format_double(value_of(*it->second), "%.6f");
      }
      file << '\n';
    }
  };
  write_table(out_dir + "/accuracy_table.csv", [](const CellAggregate& a) { return a.mean_accuracy; });
  write_table(out_dir + "/accuracy_std.csv", [](const CellAggregate& a) { return a.std_accuracy; });

  // predicted r_opt column when the config pins r_star
  std::optional<SweepConfig> cfg;
  if (std::filesystem::exists(out_dir + "/config.json")) cfg = load_sweep_config(out_dir + "/config.json");

  {
    std::ofstream file(out_dir + "/r_opt.csv");
    if (!file) throw std::runtime_error("cannot write r_opt.csv");
    file << "noise,empirical_r_opt,mean_accuracy,predicted_r_opt\n";
    for (const EmpiricalOpt& opt : empirical_r_opt(aggregates)) {
      file << opt.noise_id << ',' << r_to_string(opt.r_opt) << ',' << format_double(opt.mean_accuracy, "%.6f") << ',';
      if (cfg && cfg->r_star) {
        for (const NoiseSpecCfg& noise : cfg->noise_grid) {
          if (noise.id() != opt.noise_id) continue;
          try {
            file << format_double(predict_r_opt(*cfg->r_star, noise, 2), "%.6g");
          } catch (const std::exception&) {
            // unsupported kind: leave blank
          }
          break;
        }
      }
      file << '\n';
    }
  }

  // confidence histograms, flattened
  {
    std::ifstream in(out_dir + "/confidence_hist.jsonl");
    std::vector<json> rows;
    std::string line;
    while (in && std::getline(in, line)) {
      if (!line.empty()) rows.push_back(json::parse(line));
    }
    std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
      const auto key = [](const json& j) {
        return std::make_tuple(j.at("noise").get<std::string>(), j.at("r").get<std::string>(),
                               j.at("seed").get<std::uint64_t>(), j.at("lr").get<double>());
      };
      return key(a) < key(b);
    });
    std::ofstream file(out_dir + "/confidence_hist.csv");
    if (!file) throw std::runtime_error("cannot write confidence_hist.csv");
    file << "noise,r,seed,lr,bin_lo,bin_hi,correct,wrong\n";
    for (const json& row : rows) {
      const int bins = row.at("bins").get<int>();
      const double lo = row.at("lo").get<double>();
      const double hi = row.at("hi").get<double>();
      const auto& correct = row.at("correct");
      const auto& wrong = row.at("wrong");
      for (int b = 0; b < bins; ++b) {
        const double bin_lo = lo + (hi - lo) * b / bins;
        const double bin_hi = lo + (hi - lo) * (b + 1) / bins;
        file << row.at("noise").get<std::string>() << ',' << row.at("r").get<std::string>() << ','
             << row.at("seed").get<std::uint64_t>() << ',' << format_double(row.at("lr").get<double>(), "%g") << ','
             << format_double(bin_lo, "%.4f") << ',' << format_double(bin_hi, "%.4f") << ','
             << correct.at(static_cast<std::size_t>(b)).get<long>() << ','
             << wrong.at(static_cast<std::size_t>(b)).get<long>() << '\n';
      }
    }
  }

  // bias/variance table when replicate records exist
  if (std::filesystem::exists(out_dir + "/bias_variance.jsonl")) {
    std::ifstream in(out_dir + "/bias_variance.jsonl");
    std::vector<json> rows;
    std::string line;
    while (in && std::getline(in, line))
      if (!line.empty()) rows.push_back(json::parse(line));
    std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
      const auto key = [](const json& j) {
        return std::make_pair(j.at("noise").get<std::string>(), j.at("r").get<std::string>());
      };
      return key(a) < key(b);
    });
    std::ofstream file(out_dir + "/bias_variance.csv");
    file << "noise,r,bias,variance,replicates\n";
    for (const json& row : rows) {
      if (row.value("failed", false)) continue;
      file << row.at("noise").get<std::string>() << ',' << row.at("r").get<std::string>() << ','
           << format_double(row.at("bias").get<double>(), "%.8f") << ','
           << format_double(row.at("variance").get<double>(), "%.8f") << ',' << row.at("replicates").get<int>()
           << '\n';
    }
  }

  {
    long failed = 0;
    for (const CellRecord& rec : records) failed += rec.failed ? 1 : 0;
    std::ofstream file(out_dir + "/report_notes.txt");
    file << "empirical r_opt: argmax over the r grid of mean test accuracy;\n"
         << "ties resolve toward the rate closest to 0, then toward the larger rate.\n"
         << "lr selection: per (noise, r), the lr with the best mean accuracy.\n"
         << "failed cells excluded from aggregation: " << failed << "\n";
  }
}

CellRecord run_single(const SweepConfig& cfg) {
  if (cfg.out_dir.empty()) throw std::invalid_argument("train needs an output directory");
  std::filesystem::create_directories(cfg.out_dir);

  const SplitResult parts = prepare_dataset(cfg.dataset);
  const NoiseSpecCfg& noise = cfg.noise_grid.front();
  const double r = cfg.r_grid.front();
  const std::uint64_t seed = cfg.seeds.front();

  CellRecord rec;
  rec.noise_id = noise.id();
  rec.r = r;
  rec.seed = seed;
  rec.lr = cfg.train_template.lr.initial;

  LabeledDataset noisy_train =
      noise.is_none() ? parts.train
                      : inject_noise(parts.train, noise.to_transition(parts.train.num_classes),
                                     injection_seed(seed, noise.id()));
  TrainConfig tc = cfg.train_template;
  tc.loss = resolve_loss(cfg.train_template.loss, r, noise, noisy_train, parts);
  tc.seed = seed;
  const TrainReport report = train(noisy_train, parts.test, tc);

  rec.test_accuracy = report.test_accuracy.back();
  rec.expected_mc = report.expected_mc.back();
  rec.train_loss_final = report.train_loss.back();
  rec.train_accuracy_final = report.train_accuracy.back();

  save_model(report.final_model, cfg.out_dir + "/model.txt");
  json j;
  j["noise"] = rec.noise_id;
  j["r"] = r_to_string(rec.r);
  j["seed"] = rec.seed;
  j["lr"] = rec.lr;
  j["loss"] = tc.loss.name();
  j["final"] = {{"test_accuracy", rec.test_accuracy},
                {"expected_mc", rec.expected_mc},
                {"train_loss", rec.train_loss_final},
                {"train_accuracy", rec.train_accuracy_final}};
  j["series"] = {{"train_loss", report.train_loss},
                 {"train_accuracy", report.train_accuracy},
                 {"test_accuracy", report.test_accuracy},
                 {"expected_mc", report.expected_mc}};
  std::ofstream file(cfg.out_dir + "/report.json");
  if (!file) throw std::runtime_error("cannot write report.json");
  file << j.dump(2) << '\n';
  return rec;
}

void run_bias_variance(const SweepConfig& cfg, int replicates, int threads) {
  if (cfg.out_dir.empty()) throw std::invalid_argument("bias-variance needs an output directory");
  if (replicates < 2) throw std::invalid_argument("need at least 2 replicates");
  std::filesystem::create_directories(cfg.out_dir);

  const SplitResult parts = prepare_dataset(cfg.dataset);
  const std::uint64_t base_seed = cfg.seeds.front();

  std::ofstream out(cfg.out_dir + "/bias_variance.jsonl", std::ios::app);
  if (!out) throw std::runtime_error("cannot open bias_variance.jsonl");
  std::mutex io_mutex;

  std::vector<std::function<void()>> tasks;
  for (const NoiseSpecCfg& noise : cfg.noise_grid)
    for (const double r : cfg.r_grid)
      tasks.push_back([&, noise, r] {
        json j;
        j["noise"] = noise.id();
        j["r"] = r_to_string(r);
        try {
          const LabeledDataset noisy_train =
              noise.is_none() ? parts.train
                              : inject_noise(parts.train, noise.to_transition(parts.train.num_classes),
                                             injection_seed(base_seed, noise.id()));
          std::vector<MlpModel> models;
          for (int rep = 0; rep < replicates; ++rep) {
            // bootstrap resample of the noisy training set
            Rng rng(mix_seed(base_seed, 0xB007, static_cast<std::uint64_t>(rep)));
            LabeledDataset resampled;
            resampled.num_classes = noisy_train.num_classes;
            resampled.features = Mat(noisy_train.size(), noisy_train.dim());
            resampled.labels.resize(static_cast<std::size_t>(noisy_train.size()));
            for (int i = 0; i < noisy_train.size(); ++i) {
              const int src = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(noisy_train.size())));
              for (int d = 0; d < noisy_train.dim(); ++d) resampled.features(i, d) = noisy_train.features(src, d);
              resampled.labels[static_cast<std::size_t>(i)] = noisy_train.labels[static_cast<std::size_t>(src)];
            }
            TrainConfig tc = cfg.train_template;
            tc.loss = resolve_loss(cfg.train_template.loss, r, noise, resampled, parts);
            tc.seed = mix_seed(base_seed, 0x5EED, static_cast<std::uint64_t>(rep));
            models.push_back(train(resampled, parts.test, tc).final_model);
          }
          const BiasVarianceReport bv = bias_variance(models, parts.test);
          j["bias"] = bv.bias;
          j["variance"] = bv.variance;
          j["replicates"] = bv.num_replicates;
        } catch (const std::exception& err) {
          j["failed"] = true;
          j["error"] = err.what();
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        out << j.dump() << '\n';
        out.flush();
      });

  run_tasks(std::move(tasks), threads);
}

}  // namespace gls
