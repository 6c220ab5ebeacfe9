#include "gls/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "gls/metrics.hpp"
#include "gls/rng.hpp"

namespace gls {

namespace {

constexpr std::uint64_t kInitTag = 0xA11CE;
constexpr std::uint64_t kShuffleTag = 0x5FF1E;

struct ForwardCache {
  std::vector<Vec> acts;  // acts[l] is the input to layer l; acts[0] = x
  std::vector<Vec> pres;  // pres[l] is the pre-activation of layer l
  ProbVector probs;
};

void forward_cached(const MlpModel& m, std::span<const double> x, ForwardCache& c) {
  const int layers = m.num_layers();
  c.acts.resize(static_cast<std::size_t>(layers));
  c.pres.resize(static_cast<std::size_t>(layers));
  c.acts[0].assign(x.begin(), x.end());
  for (int l = 0; l < layers; ++l) {
    const Mat& w = m.weights[static_cast<std::size_t>(l)];
    const Vec& b = m.biases[static_cast<std::size_t>(l)];
    const Vec& in = c.acts[static_cast<std::size_t>(l)];
    Vec& pre = c.pres[static_cast<std::size_t>(l)];
    pre.assign(static_cast<std::size_t>(w.rows()), 0.0);
    for (int r = 0; r < w.rows(); ++r) {
      double acc = b[static_cast<std::size_t>(r)];
      const auto row = w.row(r);
      for (int i = 0; i < w.cols(); ++i) acc += row[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(i)];
      pre[static_cast<std::size_t>(r)] = acc;
    }
    if (l + 1 < layers) {
      Vec& out = c.acts[static_cast<std::size_t>(l + 1)];
      out.resize(pre.size());
      for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    }
  }
  // softmax, floored and renormalized
  const Vec& logits = c.pres.back();
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  Vec p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - max_logit);
    total += p[i];
  }
  double clamped_total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] /= total;
    if (p[i] < m.epsilon_clamp) p[i] = m.epsilon_clamp;
    clamped_total += p[i];
  }
  for (double& v : p) v /= clamped_total;
  c.probs.probs = std::move(p);
}

// accumulates grads += scale * dLoss/dtheta for one sample, given
// delta = dLoss/d(final pre-activation)
void backprop_sample(const MlpModel& m, const ForwardCache& c, Vec delta, double scale, Gradients& grads) {
  const int layers = m.num_layers();
  for (int l = layers - 1; l >= 0; --l) {
    Mat& gw = grads.weights[static_cast<std::size_t>(l)];
    Vec& gb = grads.biases[static_cast<std::size_t>(l)];
    const Vec& in = c.acts[static_cast<std::size_t>(l)];
    for (int r = 0; r < gw.rows(); ++r) {
      const double d = scale * delta[static_cast<std::size_t>(r)];
      gb[static_cast<std::size_t>(r)] += d;
      auto row = gw.row(r);
      for (int i = 0; i < gw.cols(); ++i) row[static_cast<std::size_t>(i)] += d * in[static_cast<std::size_t>(i)];
    }
    if (l == 0) break;
    const Mat& w = m.weights[static_cast<std::size_t>(l)];
    const Vec& pre_below = c.pres[static_cast<std::size_t>(l - 1)];
    Vec next(static_cast<std::size_t>(w.cols()), 0.0);
    for (int r = 0; r < w.rows(); ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      const auto row = w.row(r);
      for (int i = 0; i < w.cols(); ++i) next[static_cast<std::size_t>(i)] += row[static_cast<std::size_t>(i)] * d;
    }
    for (std::size_t i = 0; i < next.size(); ++i)
      if (pre_below[i] <= 0.0) next[i] = 0.0;
    delta = std::move(next);
  }
}

// delta for losses of the form sum_k q_k * (-log p_k): S*p - q
Vec linear_loss_delta(const ProbVector& p, const Vec& q) {
  double s = 0.0;
  for (double v : q) s += v;
  Vec delta(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) delta[k] = s * p.probs[k] - q[k];
  return delta;
}

struct OptimizerState {
  std::vector<Mat> momentum_w, adam_m_w, adam_v_w;
  std::vector<Vec> momentum_b, adam_m_b, adam_v_b;
  long step = 0;
};

OptimizerState make_state(const MlpModel& m) {
  OptimizerState s;
  for (const Mat& w : m.weights) {
    s.momentum_w.emplace_back(w.rows(), w.cols());
    s.adam_m_w.emplace_back(w.rows(), w.cols());
    s.adam_v_w.emplace_back(w.rows(), w.cols());
  }
  for (const Vec& b : m.biases) {
    s.momentum_b.emplace_back(b.size(), 0.0);
    s.adam_m_b.emplace_back(b.size(), 0.0);
    s.adam_v_b.emplace_back(b.size(), 0.0);
  }
  return s;
}

void apply_update(Vec& theta, const Vec& grad, Vec& momentum, Vec& adam_m, Vec& adam_v, double lr,
                  const OptimizerConfig& oc, long step) {
  if (oc.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double g = grad[i] + oc.weight_decay * theta[i];
      if (oc.momentum != 0.0) {
        momentum[i] = oc.momentum * momentum[i] + g;
        g = oc.nesterov ? g + oc.momentum * momentum[i] : momentum[i];
      }
      theta[i] -= lr * g;
    }
  } else {
    const double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      adam_m[i] = oc.beta1 * adam_m[i] + (1.0 - oc.beta1) * g;
      adam_v[i] = oc.beta2 * adam_v[i] + (1.0 - oc.beta2) * g * g;
      const double mhat = adam_m[i] / bc1;
      const double vhat = adam_v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + oc.adam_eps);
    }
  }
}

void optimizer_step(MlpModel& m, const Gradients& grads, OptimizerState& state, double lr,
                    const OptimizerConfig& oc) {
  ++state.step;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    apply_update(m.weights[l].data(), grads.weights[l].data(), state.momentum_w[l].data(), state.adam_m_w[l].data(),
                 state.adam_v_w[l].data(), lr, oc, state.step);
    apply_update(m.biases[l], grads.biases[l], state.momentum_b[l], state.adam_m_b[l], state.adam_v_b[l], lr, oc,
                 state.step);
  }
}

}  // namespace

MlpModel make_mlp(std::vector<int> layer_dims, std::uint64_t seed, double epsilon_clamp) {
  if (layer_dims.size() < 2) throw std::invalid_argument("MLP needs at least input and output dims");
  for (int d : layer_dims)
    if (d < 1) throw std::invalid_argument("layer dims must be positive");
  MlpModel m;
  m.layer_dims = std::move(layer_dims);
  m.epsilon_clamp = epsilon_clamp;
  m.init_seed = seed;
  Rng rng(mix_seed(seed, kInitTag));
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    const int fan_in = m.layer_dims[l];
    const int fan_out = m.layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / fan_in);
    Mat w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-limit, limit);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
  }
  return m;
}

ProbVector forward(const MlpModel& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.input_dim()) throw std::invalid_argument("input dimension mismatch");
  ForwardCache c;
  forward_cached(m, x, c);
  return std::move(c.probs);
}

Gradients zero_gradients(const MlpModel& m) {
  Gradients g;
  for (const Mat& w : m.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const Vec& b : m.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

std::pair<double, Gradients> loss_and_grad(const MlpModel& m, const LabeledDataset& ds,
                                           std::span<const int> batch_indices, const LossSpec& spec) {
  if (batch_indices.empty()) throw std::invalid_argument("empty batch");
  if (ds.dim() != m.input_dim() || ds.num_classes != m.num_classes())
    throw std::invalid_argument("dataset does not match model dimensions");
  const int k = m.num_classes();
  const std::size_t n = batch_indices.size();
  const double w_batch = 1.0 / static_cast<double>(n);

  std::vector<ForwardCache> caches(n);
  for (std::size_t i = 0; i < n; ++i) forward_cached(m, ds.sample(batch_indices[i]), caches[i]);

  Gradients grads = zero_gradients(m);
  double loss = 0.0;

  if (spec.kind == LossSpec::Kind::forward) {
    const TransitionMatrix& t = spec.transition;
    if (t.num_classes() != k) throw std::invalid_argument("transition size does not match model");
    for (std::size_t i = 0; i < n; ++i) {
      const int yt = ds.labels[static_cast<std::size_t>(batch_indices[i])];
      const ProbVector& p = caches[i].probs;
      double mixed = 0.0;
      for (int j = 0; j < k; ++j) mixed += p[j] * t(j, yt);
      if (!(mixed > 0.0)) throw std::domain_error("forward-corrected probability is not positive");
      loss += w_batch * -std::log(mixed);
      Vec delta(static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j) delta[static_cast<std::size_t>(j)] = p[j] - t(j, yt) * p[j] / mixed;
      backprop_sample(m, caches[i], std::move(delta), w_batch, grads);
    }
    return {loss, std::move(grads)};
  }

  // every other kind is linear in the per-class CE terms: per-sample target
  // coefficients q with loss_i = ce_soft(p_i, q_i)
  std::vector<Vec> q(n, Vec(static_cast<std::size_t>(k), 0.0));
  switch (spec.kind) {
    case LossSpec::Kind::gls: {
      for (std::size_t i = 0; i < n; ++i) {
        const int y = ds.labels[static_cast<std::size_t>(batch_indices[i])];
        q[i] = spec.is_extreme_rate() ? normalized_extreme_label(y, k) : make_gls_label(y, spec.rate, k).weights;
      }
      break;
    }
    case LossSpec::Kind::backward: {
      const Mat inv = spec.transition.inverse();
      if (spec.transition.num_classes() != k) throw std::invalid_argument("transition size does not match model");
      for (std::size_t i = 0; i < n; ++i) {
        const int yt = ds.labels[static_cast<std::size_t>(batch_indices[i])];
        for (int j = 0; j < k; ++j) q[i][static_cast<std::size_t>(j)] = inv(yt, j);
      }
      break;
    }
    case LossSpec::Kind::complementary: {
      if (k != 2) throw std::invalid_argument("complementary loss is binary only");
      for (std::size_t i = 0; i < n; ++i) {
        const int yt = ds.labels[static_cast<std::size_t>(batch_indices[i])];
        q[i][static_cast<std::size_t>(yt)] = 1.0;
        q[i][static_cast<std::size_t>(1 - yt)] = -1.0;
      }
      break;
    }
    case LossSpec::Kind::peer_expected: {
      if (static_cast<int>(spec.peer_prior.size()) != k) throw std::invalid_argument("peer prior size mismatch");
      for (std::size_t i = 0; i < n; ++i) {
        const int yt = ds.labels[static_cast<std::size_t>(batch_indices[i])];
        for (int j = 0; j < k; ++j) q[i][static_cast<std::size_t>(j)] = -spec.peer_prior[static_cast<std::size_t>(j)];
        q[i][static_cast<std::size_t>(yt)] += 1.0;
      }
      break;
    }
    case LossSpec::Kind::peer_sampled: {
      if (n < 2) throw std::invalid_argument("peer loss needs a batch of at least 2 samples");
      Rng rng(spec.pairing_seed);
      const std::vector<int> pi1 = rng.permutation(static_cast<int>(n));
      const std::vector<int> pi2 = rng.permutation(static_cast<int>(n));
      for (std::size_t i = 0; i < n; ++i) {
        q[i][static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(batch_indices[i])])] += 1.0;
        const std::size_t peer = static_cast<std::size_t>(pi1[i]);
        const int peer_label = ds.labels[static_cast<std::size_t>(batch_indices[static_cast<std::size_t>(pi2[i])])];
        q[peer][static_cast<std::size_t>(peer_label)] -= 1.0;
      }
      break;
    }
    case LossSpec::Kind::gls_c: {
      for (std::size_t i = 0; i < n; ++i) {
        const int y = ds.labels[static_cast<std::size_t>(batch_indices[i])];
        q[i] = make_gls_label(y, spec.rate, k).weights;
      }
      break;
    }
    default:
      throw std::logic_error("unhandled loss kind");
  }

  for (std::size_t i = 0; i < n; ++i) {
    loss += w_batch * ce_soft(caches[i].probs, q[i]);
    backprop_sample(m, caches[i], linear_loss_delta(caches[i].probs, q[i]), w_batch, grads);
  }

  if (spec.kind == LossSpec::Kind::gls_c) {
    const LabeledDataset& clean = *spec.clean_subset;
    if (clean.dim() != m.input_dim() || clean.num_classes != k)
      throw std::invalid_argument("clean subset does not match model dimensions");
    int count = 0;
    for (int y : clean.labels) count += y == 1 ? 1 : 0;
    if (count == 0) throw std::invalid_argument("gls_c penalty needs at least one clean sample with label 1");
    const double scale = (spec.e1_hat - spec.e0_hat) * (1.0 - spec.rate) / count;
    ForwardCache cache;
    Vec q_pen(static_cast<std::size_t>(k), 0.0);
    q_pen[1] = scale;
    q_pen[0] = -scale;
    for (int i = 0; i < clean.size(); ++i) {
      if (clean.labels[static_cast<std::size_t>(i)] != 1) continue;
      forward_cached(m, clean.sample(i), cache);
      loss += ce_soft(cache.probs, q_pen);
      backprop_sample(m, cache, linear_loss_delta(cache.probs, q_pen), 1.0, grads);
    }
  }

  return {loss, std::move(grads)};
}

double LrSchedule::at(int epoch) const {
  if (decay_every_epochs <= 0) return initial;
  return initial * std::pow(decay_factor, static_cast<double>(epoch / decay_every_epochs));
}

TrainReport train(const LabeledDataset& train_ds, const LabeledDataset& test_ds, const TrainConfig& cfg) {
  validate(train_ds);
  validate(test_ds);
  if (train_ds.dim() != test_ds.dim() || train_ds.num_classes != test_ds.num_classes)
    throw std::invalid_argument("train/test datasets disagree on d or K");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  if (!(cfg.lr.initial > 0.0)) throw std::invalid_argument("learning rate must be positive");

  std::vector<int> dims;
  dims.push_back(train_ds.dim());
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(train_ds.num_classes);

  MlpModel model;
  if (cfg.warmup_checkpoint.empty()) {
    model = make_mlp(dims, cfg.seed, cfg.epsilon_clamp);
  } else {
    model = load_model(cfg.warmup_checkpoint);
    if (model.input_dim() != train_ds.dim() || model.num_classes() != train_ds.num_classes)
      throw std::invalid_argument("warmup checkpoint does not match dataset dimensions");
    model.epsilon_clamp = cfg.epsilon_clamp;
  }

  OptimizerState state = make_state(model);
  TrainReport report;
  const int n = train_ds.size();
  const bool needs_pairs = cfg.loss.kind == LossSpec::Kind::peer_sampled;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr.at(epoch);
    Rng shuffle_rng(mix_seed(cfg.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
    std::vector<int> order = shuffle_rng.permutation(n);

    double loss_sum = 0.0;
    int batch_index = 0;
    std::size_t begin = 0;
    while (begin < order.size()) {
      std::size_t end = std::min(begin + static_cast<std::size_t>(cfg.batch_size), order.size());
      // peer pairing needs >= 2 samples; fold a trailing singleton into this batch
      if (needs_pairs && order.size() - end == 1) end = order.size();
      std::span<const int> batch(order.data() + begin, end - begin);

      LossSpec spec = cfg.loss;
      if (needs_pairs)
        spec.pairing_seed = mix_seed(cfg.loss.pairing_seed, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(batch_index));
      auto [batch_loss, grads] = loss_and_grad(model, train_ds, batch, spec);
      if (!std::isfinite(batch_loss)) throw TrainingDiverged(epoch);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      optimizer_step(model, grads, state, lr, cfg.optimizer);

      begin = end;
      ++batch_index;
    }

    const double epoch_loss = loss_sum / n;
    if (!std::isfinite(epoch_loss)) throw TrainingDiverged(epoch);
    report.train_loss.push_back(epoch_loss);
    report.train_accuracy.push_back(predict_and_accuracy(model, train_ds).accuracy);
    report.test_accuracy.push_back(predict_and_accuracy(model, test_ds).accuracy);

    double mc_sum = 0.0;
    for (int i = 0; i < test_ds.size(); ++i)
      mc_sum += model_confidence(forward(model, test_ds.sample(i)), test_ds.labels[static_cast<std::size_t>(i)]);
    report.expected_mc.push_back(test_ds.size() > 0 ? mc_sum / test_ds.size() : 0.0);
  }

  report.final_model = std::move(model);
  return report;
}

Predictions predict_and_accuracy(const MlpModel& m, const LabeledDataset& ds, bool use_clean_labels) {
  if (ds.size() == 0) throw std::invalid_argument("empty dataset");
  if (use_clean_labels && !ds.has_clean_labels())
    throw std::invalid_argument("dataset carries no clean labels");
  Predictions out;
  out.labels.reserve(static_cast<std::size_t>(ds.size()));
  const std::vector<int>& truth = use_clean_labels ? ds.clean_labels : ds.labels;
  int correct = 0;
  for (int i = 0; i < ds.size(); ++i) {
    const ProbVector p = forward(m, ds.sample(i));
    int best = 0;
    for (int kk = 1; kk < p.num_classes(); ++kk)
      if (p[kk] > p[best]) best = kk;
    out.labels.push_back(best);
    correct += best == truth[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  out.accuracy = static_cast<double>(correct) / ds.size();
  return out;
}

void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  file << "gls-mlp-checkpoint v1\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", m.epsilon_clamp);
  file << "epsilon_clamp " << buf << "\n";
  file << "init_seed " << m.init_seed << "\n";
  file << "dims";
  for (int d : m.layer_dims) file << ' ' << d;
  file << "\n";
  for (int l = 0; l < m.num_layers(); ++l) {
    const Mat& w = m.weights[static_cast<std::size_t>(l)];
    file << "layer " << l << "\n";
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%a", w(r, c));
        file << buf << (c + 1 == w.cols() ? "" : " ");
      }
      file << "\n";
    }
    const Vec& b = m.biases[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < b.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%a", b[i]);
      file << buf << (i + 1 == b.size() ? "" : " ");
    }
    file << "\n";
  }
  if (!file) throw std::runtime_error("failed writing checkpoint: " + path);
}

MlpModel load_model(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, version;
  file >> magic >> version;
  if (magic != "gls-mlp-checkpoint" || version != "v1")
    throw std::runtime_error("unrecognized checkpoint format: " + path);
  MlpModel m;
  std::string key, value;
  file >> key >> value;
  if (key != "epsilon_clamp") throw std::runtime_error("malformed checkpoint (epsilon_clamp)");
  m.epsilon_clamp = std::strtod(value.c_str(), nullptr);
  file >> key >> m.init_seed;
  if (key != "init_seed") throw std::runtime_error("malformed checkpoint (init_seed)");
  file >> key;
  if (key != "dims") throw std::runtime_error("malformed checkpoint (dims)");
  {
    std::string line;
    std::getline(file, line);
    std::istringstream dims_in(line);
    int d;
    while (dims_in >> d) m.layer_dims.push_back(d);
  }
  if (m.layer_dims.size() < 2) throw std::runtime_error("malformed checkpoint (needs >= 2 dims)");
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    int idx;
    file >> key >> idx;
    if (key != "layer" || idx != static_cast<int>(l)) throw std::runtime_error("malformed checkpoint (layer)");
    const int rows = m.layer_dims[l + 1];
    const int cols = m.layer_dims[l];
    Mat w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        file >> value;
        w(r, c) = std::strtod(value.c_str(), nullptr);
      }
    Vec b(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      file >> value;
      b[static_cast<std::size_t>(r)] = std::strtod(value.c_str(), nullptr);
    }
    if (!file) throw std::runtime_error("truncated checkpoint: " + path);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

}  // namespace gls
