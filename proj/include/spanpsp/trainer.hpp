#ifndef SPANPSP_TRAINER_HPP
#define SPANPSP_TRAINER_HPP

// Max-margin training.
//
// For a gold tree T*, the loss is max(0, max_T [s(T) + hamming(T, T*)] - s(T*)),
// where the inner max comes from loss-augmented decoding. Its subgradient
// backpropagates +1 through the chart entries of the predicted derivation
// and -1 through the gold entries; dummy entries are pinned and carry none.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spanpsp/config.hpp"
#include "spanpsp/decoder.hpp"
#include "spanpsp/metrics.hpp"
#include "spanpsp/model.hpp"
#include "spanpsp/prosody.hpp"
#include "spanpsp/scorer.hpp"
#include "spanpsp/tensor.hpp"

namespace spanpsp {

enum class OptimizerKind { Adam, SgdMomentum };
enum class StopMetric { PwF1, PphF1, IphF1, MeanF1, ExactMatch };

inline OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "adam" || text == "adam-style") return OptimizerKind::Adam;
  if (text == "sgd-momentum") return OptimizerKind::SgdMomentum;
  throw Error("optimizer must be 'adam' or 'sgd-momentum', got '" + text + "'");
}

inline StopMetric parse_stop_metric(const std::string& text) {
  if (text == "pw_f1") return StopMetric::PwF1;
  if (text == "pph_f1") return StopMetric::PphF1;
  if (text == "iph_f1") return StopMetric::IphF1;
  if (text == "mean_f1") return StopMetric::MeanF1;
  if (text == "exact_match") return StopMetric::ExactMatch;
  throw Error("unknown early_stop_metric '" + text + "'");
}

inline std::string to_string(StopMetric metric) {
  switch (metric) {
    case StopMetric::PwF1: return "pw_f1";
    case StopMetric::PphF1: return "pph_f1";
    case StopMetric::IphF1: return "iph_f1";
    case StopMetric::MeanF1: return "mean_f1";
    case StopMetric::ExactMatch: return "exact_match";
  }
  return "?";
}

inline double metric_value(const EvalReport& report, StopMetric metric) {
  switch (metric) {
    case StopMetric::PwF1: return report.at(Level::PW).f1();
    case StopMetric::PphF1: return report.at(Level::PPH).f1();
    case StopMetric::IphF1: return report.at(Level::IPH).f1();
    case StopMetric::MeanF1:
      return (report.at(Level::PW).f1() + report.at(Level::PPH).f1() + report.at(Level::IPH).f1()) / 3.0;
    case StopMetric::ExactMatch: return report.exact_match();
  }
  return 0.0;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  double grad_clip_norm = 5.0;  // 0 disables clipping
  StopMetric early_stop_metric = StopMetric::PphF1;
  std::size_t threads = 1;
  double target_metric = 0.0;  // stop once the dev metric reaches this; 0 disables

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"learning_rate", "optimizer", "momentum", "beta1", "beta2",
                                         "adam_eps", "batch_size", "max_epochs", "patience", "seed",
                                         "grad_clip_norm", "early_stop_metric", "threads", "target_metric"};
    return k;
  }

  static TrainConfig from(const KeyValueConfig& kv) {
    TrainConfig c;
    c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
    c.optimizer = parse_optimizer(kv.get_string("optimizer", "adam"));
    c.momentum = kv.get_double("momentum", c.momentum);
    c.beta1 = kv.get_double("beta1", c.beta1);
    c.beta2 = kv.get_double("beta2", c.beta2);
    c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.max_epochs = kv.get_uint("max_epochs", c.max_epochs);
    c.patience = kv.get_uint("patience", c.patience);
    c.seed = kv.get_uint("seed", c.seed);
    c.grad_clip_norm = kv.get_double("grad_clip_norm", c.grad_clip_norm);
    c.early_stop_metric = parse_stop_metric(kv.get_string("early_stop_metric", "pph_f1"));
    c.threads = kv.get_uint("threads", c.threads);
    c.target_metric = kv.get_double("target_metric", c.target_metric);
    c.check();
    return c;
  }

  void check() const {
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (batch_size == 0) throw Error("batch_size must be positive");
    if (patience == 0) throw Error("patience must be at least 1");
    if (threads == 0) throw Error("threads must be at least 1");
    if (grad_clip_norm < 0.0) throw Error("grad_clip_norm must be non-negative");
  }
};

/// Sorted distinct characters of a corpus.
inline CharVocabulary corpus_vocabulary(const std::vector<BoundarySequence>& sentences) {
  std::set<char32_t> seen;
  for (const auto& s : sentences) seen.insert(s.chars.begin(), s.chars.end());
  return CharVocabulary(std::u32string(seen.begin(), seen.end()));
}

/// A gold sentence prepared for training.
struct Example {
  std::u32string chars;
  std::vector<std::size_t> tokens;
  ProsodicTree tree;
  std::vector<IndexedSpan> gold_spans;
  GoldAssignment gold;
};

inline Example make_example(const Model& model, const BoundarySequence& seq) {
  ProsodicTree tree = sequence_to_tree(seq);
  auto spans = GoldAssignment::index_spans(tree, model.labels());
  GoldAssignment gold(seq.size(), model.labels().dummy_index(), spans);
  return Example{seq.chars, model.tokens(seq.chars), std::move(tree), std::move(spans), std::move(gold)};
}

struct HingeResult {
  double loss = 0.0;
  double augmented_score = 0.0;  // s(T^) + hamming(T^, T*)
  double gold_score = 0.0;       // s(T*)
  std::size_t delta = 0;
  Derivation predicted;
  std::vector<IndexedSpan> gold_spans;
};

inline HingeResult hinge_loss(const ScoreChart& chart, const GoldAssignment& gold,
                              std::span<const IndexedSpan> gold_spans) {
  HingeResult out;
  const DecodeResult decoded = decode_augmented(chart, gold);
  out.predicted = decoded.derivation;
  out.augmented_score = decoded.score;
  out.delta = hamming_delta(decoded.derivation, gold);
  for (const auto& span : gold_spans) out.gold_score += chart.at(span.begin, span.end, span.label);
  out.gold_spans.assign(gold_spans.begin(), gold_spans.end());
  // delta 0 means the prediction is the gold tree; skip the rounding residue
  out.loss = out.delta == 0 ? 0.0 : std::max(0.0, out.augmented_score - out.gold_score);
  return out;
}

inline HingeResult hinge_loss(const ScoreChart& chart, const ProsodicTree& gold, const LabelVocabulary& vocab) {
  const auto spans = GoldAssignment::index_spans(gold, vocab);
  return hinge_loss(chart, GoldAssignment(gold.size(), vocab.dummy_index(), spans), spans);
}

/// Coefficients on scorer output entries (row-major spans x non-dummy labels):
/// +1 per predicted non-dummy span, -1 per gold span; shared entries cancel.
inline std::vector<ad::WeightedEntry> loss_coefficients(const HingeResult& hinge, const LabelVocabulary& vocab) {
  const std::size_t n = hinge.predicted.n;
  const std::size_t dummy = vocab.dummy_index();
  const std::size_t outputs = vocab.size() - 1;
  auto column = [dummy](std::size_t label) { return label < dummy ? label : label - 1; };
  std::map<std::size_t, double> coef;
  for (const auto& span : hinge.predicted.spans) {
    if (span.label == dummy) continue;
    coef[span_row(n, span.begin, span.end) * outputs + column(span.label)] += 1.0;
  }
  for (const auto& span : hinge.gold_spans) {
    if (span.label == dummy) continue;
    coef[span_row(n, span.begin, span.end) * outputs + column(span.label)] -= 1.0;
  }
  std::vector<ad::WeightedEntry> out;
  for (const auto& [index, c] : coef) {
    if (c != 0.0) out.push_back({index, c});
  }
  return out;
}

/// The hinge loss as a differentiable function of parameter leaves (aligned
/// with model.params()). Loss-augmented decoding runs on the current values.
inline ad::Var hinge_on_tape(const Model& model, const Example& example, ad::Tape& tape,
                             std::span<const ad::Var> leaves, HingeResult* result = nullptr,
                             std::mt19937_64* dropout_rng = nullptr) {
  const ad::Var scores = model.scores_on_tape(tape, leaves, example.tokens, dropout_rng);
  const ScoreChart chart = chart_from_rows(scores.value(), example.chars.size(), model.labels());
  HingeResult hinge = hinge_loss(chart, example.gold, example.gold_spans);
  ad::Var loss;
  if (hinge.loss > 0.0) {
    const auto coefs = loss_coefficients(hinge, model.labels());
    loss = ad::add_constant(ad::gather_sum(scores, coefs), static_cast<double>(hinge.delta));
  } else {
    loss = tape.constant(ad::Tensor({1}, 0.0));
  }
  if (result) *result = std::move(hinge);
  return loss;
}

/// Objective for grad_check over every parameter tensor of the model.
inline ad::ScalarFn hinge_objective(const Model& model, const Example& example) {
  return [&model, &example](ad::Tape& tape, std::span<const ad::Var> leaves) {
    return hinge_on_tape(model, example, tape, leaves);
  };
}

inline std::vector<ad::Tensor> param_values(const Model& model) {
  std::vector<ad::Tensor> out;
  out.reserve(model.params().size());
  for (const auto& p : model.params()) out.push_back(p.value);
  return out;
}

struct ExampleGradient {
  HingeResult hinge;
  std::vector<ad::Tensor> grads;  // aligned with params; empty for frozen tensors or zero loss
};

/// Loss and subgradient for one example. A zero loss yields no gradient.
inline ExampleGradient loss_gradient(const Model& model, const Example& example,
                                     std::mt19937_64* dropout_rng = nullptr) {
  ExampleGradient out;
  ad::Tape tape;
  const auto leaves = model.bind(tape, true);
  const ad::Var loss = hinge_on_tape(model, example, tape, leaves, &out.hinge, dropout_rng);
  out.grads.resize(leaves.size());
  if (out.hinge.loss <= 0.0) return out;
  tape.backward(loss);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (model.params()[i].trainable) out.grads[i] = tape.grad(leaves[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const std::vector<NamedTensor>& params) : config_(config) {
    for (const auto& p : params) {
      first_.emplace_back(p.value.shape());
      second_.emplace_back(p.trainable && config.optimizer == OptimizerKind::Adam ? ad::Tensor(p.value.shape())
                                                                                  : ad::Tensor());
    }
  }

  void step(std::vector<NamedTensor>& params, const std::vector<ad::Tensor>& grads) {
    ++t_;
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].trainable || grads[i].empty()) continue;
      auto value = params[i].value.data();
      const auto g = grads[i].data();
      auto m = first_[i].data();
      if (config_.optimizer == OptimizerKind::Adam) {
        auto v = second_[i].data();
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < value.size(); ++k) {
          m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
          v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
          value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
        }
      } else {
        for (std::size_t k = 0; k < value.size(); ++k) {
          m[k] = config_.momentum * m[k] + g[k];
          value[k] -= lr * m[k];
        }
      }
    }
  }

 private:
  TrainConfig config_;
  std::vector<ad::Tensor> first_;
  std::vector<ad::Tensor> second_;
  std::size_t t_ = 0;
};

inline double global_norm(const std::vector<ad::Tensor>& grads) {
  double total = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) total += v * v;
  return std::sqrt(total);
}

// ---------------------------------------------------------------------------
// Evaluation and the training loop

inline std::vector<BoundarySequence> predict_all(const Model& model, const std::vector<BoundarySequence>& gold) {
  std::vector<BoundarySequence> out;
  out.reserve(gold.size());
  for (const auto& s : gold) out.push_back(model.predict(s.chars));
  return out;
}

inline EvalReport evaluate_model(const Model& model, const std::vector<BoundarySequence>& gold,
                                 CountingMode mode = CountingMode::Cumulative) {
  const auto pred = predict_all(model, gold);
  return evaluate(pred, gold, mode);
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double pw_f1 = 0.0;
  double pph_f1 = 0.0;
  double iph_f1 = 0.0;
  double exact_match = 0.0;
  double seconds = 0.0;
  std::size_t skipped_steps = 0;  // steps dropped for non-finite gradients
};

inline std::string log_header() { return "epoch, mean_loss, dev_PW_F1, dev_PPH_F1, dev_IPH_F1, seconds"; }

inline std::string format_log_line(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu, %.6f, %.4f, %.4f, %.4f, %.2f", e.epoch, e.mean_loss, e.pw_f1, e.pph_f1,
                e.iph_f1, e.seconds);
  return buf;
}

struct TrainResult {
  Model model;  // parameters of the best dev epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

inline TrainResult train(Model model, const std::vector<BoundarySequence>& train_set,
                         const std::vector<BoundarySequence>& dev_set, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
  config.check();
  if (train_set.empty()) throw Error("training corpus is empty");
  std::vector<Example> examples;
  examples.reserve(train_set.size());
  for (const auto& s : train_set) examples.push_back(make_example(model, s));

  std::mt19937_64 rng(config.seed);
  Optimizer optimizer(config, model.params());
  TrainResult result{model, {}, 0, -1.0, false};
  std::size_t since_best = 0;
  std::size_t global_step = 0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const bool use_dropout = model.config().encoder.dropout > 0.0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog entry;
    entry.epoch = epoch;
    double loss_total = 0.0;

    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      ++global_step;
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      std::vector<ExampleGradient> parts(count);
      auto work = [&](std::size_t k) {
        std::mt19937_64 drop_rng(config.seed ^ (0x9E3779B97F4A7C15ULL * (global_step * 131 + k + 1)));
        parts[k] = loss_gradient(model, examples[order[first + k]], use_dropout ? &drop_rng : nullptr);
      };
      const std::size_t workers = std::min(config.threads, count);
      if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) work(k);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            for (std::size_t k = w; k < count; k += workers) work(k);
          });
        }
        for (auto& t : pool) t.join();
      }

      std::vector<ad::Tensor> grads(model.params().size());
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (model.params()[i].trainable) grads[i] = ad::Tensor(model.params()[i].value.shape());
      }
      for (std::size_t k = 0; k < count; ++k) {
        const double loss = parts[k].hinge.loss;
        if (!std::isfinite(loss)) {
          throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                      std::to_string(global_step));
        }
        loss_total += loss;
        for (std::size_t i = 0; i < grads.size(); ++i) {
          if (parts[k].grads[i].empty()) continue;
          auto dst = grads[i].data();
          const auto src = parts[k].grads[i].data();
          for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
        }
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& g : grads)
        for (double& v : g.data()) v *= inv;
      const double norm = global_norm(grads);
      if (!std::isfinite(norm)) {
        ++entry.skipped_steps;
        continue;
      }
      if (config.grad_clip_norm > 0.0 && norm > config.grad_clip_norm) {
        const double factor = config.grad_clip_norm / norm;
        for (auto& g : grads)
          for (double& v : g.data()) v *= factor;
      }
      optimizer.step(model.mutable_params(), grads);
      for (const auto& p : model.params()) {
        for (double v : p.value.data()) {
          if (!std::isfinite(v)) {
            throw Error("training diverged: parameter '" + p.name + "' became non-finite at epoch " +
                        std::to_string(epoch) + ", step " + std::to_string(global_step));
          }
        }
      }
    }
    entry.mean_loss = loss_total / static_cast<double>(examples.size());

    double metric = 0.0;
    if (!dev_set.empty()) {
      const EvalReport report = evaluate_model(model, dev_set);
      entry.pw_f1 = report.at(Level::PW).f1();
      entry.pph_f1 = report.at(Level::PPH).f1();
      entry.iph_f1 = report.at(Level::IPH).f1();
      entry.exact_match = report.exact_match();
      metric = metric_value(report, config.early_stop_metric);
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (dev_set.empty() || metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
      if (config.target_metric > 0.0 && !dev_set.empty() && metric >= config.target_metric) break;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace spanpsp

#endif  // SPANPSP_TRAINER_HPP
