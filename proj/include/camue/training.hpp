#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "camue/model.hpp"
#include "camue/numerics/adam.hpp"

namespace camue {

inline constexpr int kUnlabeled = -1;

// ---------------------------------------------------------------------------
// Splits

struct LabeledSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

namespace detail {

// Hamilton apportionment of `total` seats across groups by `weights`.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double weight_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> seats(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t given = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = weight_sum > 0.0 ? static_cast<double>(total) * weights[k] / weight_sum : 0.0;
    seats[k] = static_cast<std::size_t>(std::floor(exact));
    given += seats[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total && k < remainders.size(); ++k, ++given) ++seats[remainders[k].second];
  return seats;
}

}  // namespace detail

/// Stratified shuffle-and-partition of the labeled nodes. Partition sizes are
/// round(ratio × labeled) overall and are apportioned to classes by size.
inline LabeledSplit make_split(std::span<const int> labels, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kUnlabeled) by_class[labels[i]].push_back(i);
  for (const auto& [cls, ids] : by_class) {
    if (ids.size() < 3) {
      throw ConfigError("class " + std::to_string(cls) + " has only " + std::to_string(ids.size()) +
                        " labeled nodes; at least 3 are needed to split");
    }
  }
  std::size_t labeled = 0;
  std::vector<double> sizes;
  for (const auto& [cls, ids] : by_class) {
    labeled += ids.size();
    sizes.push_back(static_cast<double>(ids.size()));
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(labeled)));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(labeled)));
  const auto train_quota = detail::apportion(n_train, sizes);
  const auto val_quota = detail::apportion(n_val, sizes);

  Rng rng(seed);
  LabeledSplit split;
  std::size_t k = 0;
  for (auto& [cls, ids] : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t t = std::min(train_quota[k], ids.size());
    const std::size_t v = std::min(val_quota[k], ids.size() - t);
    split.train.insert(split.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(t));
    split.validation.insert(split.validation.end(), ids.begin() + static_cast<std::ptrdiff_t>(t),
                            ids.begin() + static_cast<std::ptrdiff_t>(t + v));
    split.test.insert(split.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(t + v), ids.end());
    ++k;
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double binary_f1 = 0.0;  // F1 of class 1; only meaningful for two classes
  std::size_t support = 0;
};

inline Metrics compute_metrics(std::span<const int> predicted, std::span<const int> labels,
                               std::span<const std::size_t> nodes, std::size_t num_classes) {
  if (nodes.empty()) throw ConfigError("cannot evaluate on an empty node set");
  std::vector<double> tp(num_classes), fp(num_classes), fn(num_classes);
  std::size_t correct = 0;
  for (std::size_t i : nodes) {
    const int y = labels[i];
    const int p = predicted[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ConfigError("node " + std::to_string(i) + " has no valid label");
    }
    if (p == y) {
      ++correct;
      tp[static_cast<std::size_t>(y)] += 1;
    } else {
      fn[static_cast<std::size_t>(y)] += 1;
      if (p >= 0 && static_cast<std::size_t>(p) < num_classes) fp[static_cast<std::size_t>(p)] += 1;
    }
  }
  auto f1 = [&](std::size_t c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    return denom > 0 ? 2 * tp[c] / denom : 0.0;
  };
  Metrics m;
  m.support = nodes.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(nodes.size());
  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) total += f1(c);
  m.macro_f1 = total / static_cast<double>(num_classes);
  m.binary_f1 = num_classes >= 2 ? f1(1) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingData {
  NormalizedGraph graph;
  DenseMatrix text;  // n×D_text, may be empty for link-only runs
  std::vector<int> labels;
  std::size_t num_classes = 2;

  ModelInputs inputs() const { return ModelInputs{&graph, text.empty() ? nullptr : &text}; }
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t hidden = 100;
  double dropout = 0.1;
  int epochs = 300;
  int patience = 50;
  std::uint64_t seed = 0;
  FusionMode mode = FusionMode::kCamue;
  GraphEncoderKind graph_encoder = GraphEncoderKind::kRgcn;
  TextEncoderKind text_encoder = TextEncoderKind::kPooled;
  double lambda = 0.1;
  GateDims gate;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (hidden == 0) throw ConfigError("hidden units must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (patience <= 0) throw ConfigError("patience must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative, got " + std::to_string(lambda));
  }
};

inline ModelConfig model_config_for(const TrainingData& data, const TrainConfig& cfg) {
  ModelConfig m;
  m.mode = cfg.mode;
  m.graph_encoder = cfg.graph_encoder;
  m.text_encoder = cfg.text_encoder;
  m.num_nodes = data.graph.n;
  m.num_relations = data.graph.relations.size();
  m.text_dim = data.text.cols();
  m.num_classes = data.num_classes;
  m.hidden = cfg.hidden;
  m.gate = cfg.gate;
  m.dropout = cfg.dropout;
  m.lambda = cfg.lambda;
  return m;
}

struct TrainResult {
  Model model;
  std::optional<GateOutput> gate;  // camue mode only, from the restored parameters
  Metrics validation;
  int epochs_ran = 0;
  int best_epoch = 0;
  std::vector<double> train_loss;           // training-mode loss per epoch
  std::vector<double> validation_accuracy;  // per epoch, index 0 = initial parameters
};

namespace detail {

inline double masked_loss(const DenseMatrix& logits, std::span<const int> labels, std::span<const std::size_t> nodes) {
  Tape tape;
  Var z = tape.constant(logits);
  return tape.value(tape.cross_entropy(z, labels, nodes))(0, 0);
}

}  // namespace detail

/// Full-batch training on the train mask with Adam. The returned model is the
/// epoch with the best validation accuracy (ties go to lower validation loss);
/// training stops after `patience` epochs without improvement.
inline TrainResult train(const TrainingData& data, const LabeledSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("no supervised nodes");
  if (split.validation.empty()) throw ConfigError("validation split is empty");
  if (data.labels.size() != data.graph.n) {
    throw ShapeError("train: " + std::to_string(data.labels.size()) + " labels for " + std::to_string(data.graph.n) +
                     " nodes");
  }
  Rng rng(cfg.seed);
  TrainResult result{make_model(model_config_for(data, cfg), rng), std::nullopt, {}, 0, 0, {}, {}};
  Model& model = result.model;
  const ModelInputs inputs = data.inputs();
  std::vector<Parameter*> params = model.parameters();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;

  auto score = [&](const Model& m) {
    Prediction p = predict(m, inputs);
    return std::pair{compute_metrics(p.predicted, data.labels, split.validation, data.num_classes),
                     detail::masked_loss(p.logits, data.labels, split.validation)};
  };

  auto [best_metrics, best_loss] = score(model);
  Model best = model;
  result.validation_accuracy.push_back(best_metrics.accuracy);
  int since_best = 0;
  const ForwardMode train_mode{true, cfg.dropout, &rng};
  std::vector<DenseMatrix> grads(params.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Tape tape;
    ForwardVars fv = forward(tape, model, inputs, train_mode);
    Var loss = tape.cross_entropy(fv.logits, data.labels, split.train);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + " (learning rate " +
                         std::to_string(cfg.learning_rate) + ")");
    }
    tape.backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) grads[k] = tape.grad_of(*params[k]);
    adam_step(params, grads, adam);
    result.train_loss.push_back(loss_value);
    result.epochs_ran = epoch;

    auto [metrics, val_loss] = score(model);
    result.validation_accuracy.push_back(metrics.accuracy);
    if (metrics.accuracy > best_metrics.accuracy ||
        (metrics.accuracy == best_metrics.accuracy && val_loss < best_loss)) {
      best_metrics = metrics;
      best_loss = val_loss;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  model = std::move(best);
  result.validation = best_metrics;
  if (model.config.mode == FusionMode::kCamue) result.gate = predict(model, inputs).gate;
  return result;
}

inline Metrics evaluate(const Model& model, const TrainingData& data, std::span<const std::size_t> nodes) {
  if (nodes.empty()) throw ConfigError("test set is empty");
  Prediction p = predict(model, data.inputs());
  return compute_metrics(p.predicted, data.labels, nodes, data.num_classes);
}

// ---------------------------------------------------------------------------
// Experiment grid

struct GateSummary {
  double mean_alpha = 0.0;
  double mean_beta = 0.0;
  double fraction_alpha_gt_beta = 0.0;
  double fraction_beta_gt_alpha = 0.0;
};

inline GateSummary summarize_gate(const GateOutput& gate) {
  GateSummary s;
  if (gate.size() == 0) return s;
  for (std::size_t i = 0; i < gate.size(); ++i) {
    s.mean_alpha += gate.alpha[i];
    s.mean_beta += gate.beta[i];
    if (gate.alpha[i] > gate.beta[i]) s.fraction_alpha_gt_beta += 1;
    if (gate.beta[i] > gate.alpha[i]) s.fraction_beta_gt_alpha += 1;
  }
  const double n = static_cast<double>(gate.size());
  s.mean_alpha /= n;
  s.mean_beta /= n;
  s.fraction_alpha_gt_beta /= n;
  s.fraction_beta_gt_alpha /= n;
  return s;
}

struct RunRecord {
  FusionMode mode = FusionMode::kCamue;
  GraphEncoderKind graph_encoder = GraphEncoderKind::kRgcn;
  TextEncoderKind text_encoder = TextEncoderKind::kPooled;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  Metrics test;
  Metrics validation;
  int epochs_ran = 0;
  int best_epoch = 0;
  std::optional<GateSummary> gate;
};

struct AggregateRow {
  FusionMode mode = FusionMode::kCamue;
  std::size_t runs = 0;
  double mean_accuracy = 0.0, std_accuracy = 0.0, max_accuracy = 0.0;
  double mean_f1 = 0.0, std_f1 = 0.0, max_f1 = 0.0;
};

/// Mean, population standard deviation and maximum of one metric.
inline std::array<double, 3> mean_std_max(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var), *std::max_element(xs.begin(), xs.end())};
}

inline AggregateRow aggregate(FusionMode mode, std::span<const RunRecord> runs) {
  std::vector<double> acc, f1;
  for (const auto& r : runs) {
    if (r.mode != mode) continue;
    acc.push_back(r.test.accuracy);
    f1.push_back(r.test.macro_f1);
  }
  AggregateRow row;
  row.mode = mode;
  row.runs = acc.size();
  auto [am, as, ax] = mean_std_max(acc);
  auto [fm, fs, fx] = mean_std_max(f1);
  row.mean_accuracy = am, row.std_accuracy = as, row.max_accuracy = ax;
  row.mean_f1 = fm, row.std_f1 = fs, row.max_f1 = fx;
  return row;
}

struct GridSpec {
  std::vector<FusionMode> modes;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;
  // When non-empty, camue and fixed-params runs pick λ from this list by validation accuracy.
  std::vector<double> lambda_candidates;
  std::size_t threads = 1;
};

struct GridResult {
  std::vector<RunRecord> runs;  // mode-major, then seed, in spec order
  std::vector<AggregateRow> rows;
};

/// Trains with cfg.seed on the split drawn from the same seed and scores the test set.
inline RunRecord run_single(const TrainingData& data, const TrainConfig& cfg,
                            std::span<const double> lambda_candidates = {}) {
  const LabeledSplit split = make_split(data.labels, SplitRatios{}, cfg.seed);
  const bool sweep = !lambda_candidates.empty() &&
                     (cfg.mode == FusionMode::kCamue || cfg.mode == FusionMode::kFixedParams);
  std::optional<TrainResult> chosen;
  double chosen_lambda = cfg.lambda;
  if (sweep) {
    for (double lambda : lambda_candidates) {
      TrainConfig c = cfg;
      c.lambda = lambda;
      TrainResult r = train(data, split, c);
      if (!chosen || r.validation.accuracy > chosen->validation.accuracy) {
        chosen = std::move(r);
        chosen_lambda = lambda;
      }
    }
  } else {
    chosen = train(data, split, cfg);
  }
  RunRecord rec;
  rec.mode = cfg.mode;
  rec.graph_encoder = cfg.graph_encoder;
  rec.text_encoder = cfg.text_encoder;
  rec.seed = cfg.seed;
  rec.lambda = (cfg.mode == FusionMode::kCamue || cfg.mode == FusionMode::kFixedParams) ? chosen_lambda : 0.0;
  rec.test = evaluate(chosen->model, data, split.test);
  rec.validation = chosen->validation;
  rec.epochs_ran = chosen->epochs_ran;
  rec.best_epoch = chosen->best_epoch;
  if (chosen->gate) rec.gate = summarize_gate(*chosen->gate);
  return rec;
}

inline GridResult run_grid(const TrainingData& data, const GridSpec& spec) {
  struct Job {
    FusionMode mode;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (FusionMode m : spec.modes)
    for (std::uint64_t s : spec.seeds) jobs.push_back({m, s});

  GridResult result;
  result.runs.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        TrainConfig cfg = spec.base;
        cfg.mode = jobs[k].mode;
        cfg.seed = jobs[k].seed;
        result.runs[k] = run_single(data, cfg, spec.lambda_candidates);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(spec.threads, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      throw ConfigError("run mode=" + std::string(to_string(jobs[k].mode)) + " seed=" + std::to_string(jobs[k].seed) +
                        " failed: " + std::string(e.kind()) + ": " + e.what());
    }
  }
  for (FusionMode m : spec.modes) result.rows.push_back(aggregate(m, result.runs));
  return result;
}

}  // namespace camue
