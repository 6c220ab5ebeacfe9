#include "gls/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "gls/rng.hpp"

namespace gls {

namespace {

// uniform point in the annulus [r_inner, r_outer] via radius-CDF inversion
void sample_annulus(Rng& rng, double r_inner, double r_outer, double& x, double& y) {
  const double u = rng.uniform();
  const double r = std::sqrt(u * (r_outer * r_outer - r_inner * r_inner) + r_inner * r_inner);
  const double theta = rng.uniform() * 2.0 * std::numbers::pi;
  x = r * std::cos(theta);
  y = r * std::sin(theta);
}

}  // namespace

LabeledDataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  if (!(spec.disk_radius > 0.0 && spec.disk_radius < spec.annulus_inner &&
        spec.annulus_inner < spec.annulus_outer))
    throw std::invalid_argument("radii must satisfy 0 < disk < annulus_inner < annulus_outer");
  if (spec.kind == SyntheticSpec::Kind::type2 && !(spec.band_inner < spec.band_outer))
    throw std::invalid_argument("band radii must satisfy inner < outer");

  const int n = 2 * spec.n_per_class;
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.features = Mat(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));

  Rng rng(mix_seed(spec.seed, 0xDA7A));
  for (int i = 0; i < spec.n_per_class; ++i) {
    double x, y;
    sample_annulus(rng, 0.0, spec.disk_radius, x, y);
    ds.features(i, 0) = x;
    ds.features(i, 1) = y;
    ds.labels[static_cast<std::size_t>(i)] = 0;
  }
  for (int i = 0; i < spec.n_per_class; ++i) {
    double x, y;
    sample_annulus(rng, spec.annulus_inner, spec.annulus_outer, x, y);
    const int row = spec.n_per_class + i;
    ds.features(row, 0) = x;
    ds.features(row, 1) = y;
    ds.labels[static_cast<std::size_t>(row)] = 1;
  }

  if (spec.kind == SyntheticSpec::Kind::type2) {
    Rng band_rng(mix_seed(spec.seed, 0xBA2D));
    for (int i = 0; i < n; ++i) {
      const double r = std::hypot(ds.features(i, 0), ds.features(i, 1));
      if (r < spec.band_inner || r > spec.band_outer) continue;
      if (band_rng.uniform() >= spec.band_select_prob) continue;
      int& label = ds.labels[static_cast<std::size_t>(i)];
      if (spec.band_mode == SyntheticSpec::BandMode::flip_to_other)
        label = 1 - label;
      else
        label = band_rng.uniform() < 0.5 ? 0 : 1;
    }
  }
  return ds;
}

LabeledDataset load_csv(const std::string& path, const std::string& label_column, char delimiter) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("cannot open CSV: " + path);

  auto split_line = [delimiter](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, delimiter)) cells.push_back(cell);
    return cells;
  };

  std::string line;
  if (!std::getline(file, line)) throw std::runtime_error("empty CSV: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  int label_idx = -1, clean_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_idx = static_cast<int>(i);
    if (header[i] == "clean_label") clean_idx = static_cast<int>(i);
  }
  if (label_idx < 0) throw std::runtime_error("label column '" + label_column + "' not found in " + path);

  std::vector<std::vector<double>> feature_rows;
  std::vector<long> raw_labels, raw_clean;
  while (std::getline(file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("CSV row has " + std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    std::vector<double> feats;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const char* text = cells[i].c_str();
      char* end = nullptr;
      if (static_cast<int>(i) == label_idx || static_cast<int>(i) == clean_idx) {
        const long value = std::strtol(text, &end, 10);
        if (end == text || *end != '\0') throw std::runtime_error("non-integer label cell: '" + cells[i] + "'");
        (static_cast<int>(i) == label_idx ? raw_labels : raw_clean).push_back(value);
      } else {
        const double value = std::strtod(text, &end);
        if (end == text || *end != '\0') throw std::runtime_error("non-numeric feature cell: '" + cells[i] + "'");
        feats.push_back(value);
      }
    }
    feature_rows.push_back(std::move(feats));
  }
  if (feature_rows.empty()) throw std::runtime_error("CSV has no data rows: " + path);

  // dense re-index over the union of observed and clean labels
  std::map<long, int> index;
  for (long v : raw_labels) index.emplace(v, 0);
  for (long v : raw_clean) index.emplace(v, 0);
  int next = 0;
  for (auto& [value, idx] : index) idx = next++;
  if (index.size() < 2) throw std::runtime_error("CSV contains a single label class");

  LabeledDataset ds;
  ds.num_classes = static_cast<int>(index.size());
  const int n = static_cast<int>(feature_rows.size());
  const int d = static_cast<int>(feature_rows.front().size());
  if (d == 0) throw std::runtime_error("CSV has no feature columns");
  ds.features = Mat(n, d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(feature_rows[static_cast<std::size_t>(i)].size()) != d)
      throw std::runtime_error("inconsistent feature arity in CSV");
    for (int j = 0; j < d; ++j) ds.features(i, j) = feature_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  ds.labels.reserve(static_cast<std::size_t>(n));
  for (long v : raw_labels) ds.labels.push_back(index.at(v));
  if (!raw_clean.empty()) {
    if (raw_clean.size() != raw_labels.size()) throw std::runtime_error("clean_label column is partially filled");
    for (long v : raw_clean) ds.clean_labels.push_back(index.at(v));
  }
  validate(ds);
  return ds;
}

void save_csv(const LabeledDataset& ds, const std::string& path, char delimiter) {
  validate(ds);
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot open CSV for writing: " + path);
  for (int j = 0; j < ds.dim(); ++j) file << 'f' << j << delimiter;
  file << "label";
  if (ds.has_clean_labels()) file << delimiter << "clean_label";
  file << '\n';
  char buf[40];
  for (int i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      file << buf << delimiter;
    }
    file << ds.labels[static_cast<std::size_t>(i)];
    if (ds.has_clean_labels()) file << delimiter << ds.clean_labels[static_cast<std::size_t>(i)];
    file << '\n';
  }
  if (!file) throw std::runtime_error("failed writing CSV: " + path);
}

SplitResult split(const LabeledDataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed) {
  validate(ds);
  if (!(train_frac > 0.0) || val_frac < 0.0 || !(test_frac > 0.0))
    throw std::invalid_argument("train/test fractions must be positive, val >= 0");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (int i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<int> train_idx, val_idx, test_idx;
  Rng rng(mix_seed(seed, 0x5117));
  for (auto& members : by_class) {
    rng.shuffle(members);
    const int m = static_cast<int>(members.size());
    const int n_train = static_cast<int>(std::llround(train_frac * m));
    const int n_val = static_cast<int>(std::llround(val_frac * m));
    for (int i = 0; i < m; ++i) {
      if (i < n_train)
        train_idx.push_back(members[static_cast<std::size_t>(i)]);
      else if (i < n_train + n_val)
        val_idx.push_back(members[static_cast<std::size_t>(i)]);
      else
        test_idx.push_back(members[static_cast<std::size_t>(i)]);
    }
  }
  if (train_idx.empty() || test_idx.empty() || (val_frac > 0.0 && val_idx.empty()))
    throw std::invalid_argument("a requested split is empty");

  auto take = [&ds](const std::vector<int>& idx) {
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.features = Mat(static_cast<int>(idx.size()), ds.dim());
    out.labels.reserve(idx.size());
    if (ds.has_clean_labels()) out.clean_labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int j = 0; j < ds.dim(); ++j) out.features(static_cast<int>(i), j) = ds.features(idx[i], j);
      out.labels.push_back(ds.labels[static_cast<std::size_t>(idx[i])]);
      if (ds.has_clean_labels()) out.clean_labels.push_back(ds.clean_labels[static_cast<std::size_t>(idx[i])]);
    }
    return out;
  };
  return SplitResult{take(train_idx), take(val_idx), take(test_idx)};
}

void standardize_features(LabeledDataset& train, const std::vector<LabeledDataset*>& others) {
  validate(train);
  const int d = train.dim();
  const int n = train.size();
  Vec mean(static_cast<std::size_t>(d), 0.0), stddev(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += train.features(i, j);
  for (double& v : mean) v /= n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double delta = train.features(i, j) - mean[static_cast<std::size_t>(j)];
      stddev[static_cast<std::size_t>(j)] += delta * delta;
    }
  for (double& v : stddev) v = std::max(std::sqrt(v / n), 1e-12);

  auto apply = [&](LabeledDataset& ds) {
    if (ds.dim() != d) throw std::invalid_argument("standardize: dimension mismatch");
    for (int i = 0; i < ds.size(); ++i)
      for (int j = 0; j < d; ++j)
        ds.features(i, j) = (ds.features(i, j) - mean[static_cast<std::size_t>(j)]) / stddev[static_cast<std::size_t>(j)];
  };
  apply(train);
  for (LabeledDataset* ds : others)
    if (ds != nullptr && ds->size() > 0) apply(*ds);
}

}  // namespace gls
