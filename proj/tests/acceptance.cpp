// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

#include "test_support.hpp"

using namespace spanpsp;
using namespace spanpsp::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> check;
};

std::string fmt(const char* format, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::string f1_triple(const EvalReport& r) {
  return fmt("PW %.4f PPH %.4f IPH %.4f", r.at(Level::PW).f1(), r.at(Level::PPH).f1(), r.at(Level::IPH).f1());
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

ModelConfig desk_model() { return ModelConfig::from(KeyValueConfig::load(SPANPSP_SOURCE_DIR "/configs/desk.conf")); }

TrainConfig desk_train() {
  TrainConfig c = TrainConfig::from(KeyValueConfig::load(SPANPSP_SOURCE_DIR "/configs/desk.conf"));
  c.threads = worker_count();
  return c;
}

Outcome a1_decode_oracle() {
  std::mt19937_64 rng(101);
  std::size_t charts = 0;
  double worst = 0.0;
  for (std::size_t labels : {4u, 7u}) {
    for (int trial = 0; trial < 105; ++trial) {
      const std::size_t n = 1 + trial % 7;
      const ScoreChart chart = random_chart(n, labels, rng);
      const auto fast = decode(chart);
      const auto oracle = brute_force_decode(chart);
      worst = std::max(worst, std::abs(fast.score - oracle.score));
      worst = std::max(worst, std::abs(derivation_score(chart, fast.derivation) - oracle.score));
      if (fast.derivation.spans.size() != 2 * n - 1) worst = std::numeric_limits<double>::infinity();
      ++charts;
    }
  }
  return {worst <= 1e-9, fmt("%.0f charts, max |decode - brute force| = %.2e", static_cast<double>(charts), worst)};
}

Outcome a2_augmented_oracle() {
  const auto vocab = LabelVocabulary::standard();
  std::mt19937_64 rng(102);
  std::size_t pairs = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 210; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const auto gold_tree = sequence_to_tree(random_sequence(n, rng));
    const GoldAssignment gold(gold_tree, vocab);
    const ScoreChart chart = random_chart(n, vocab.size(), rng, vocab.dummy_index());
    const auto fast = decode_augmented(chart, gold);
    const auto oracle = brute_force_decode(chart, &gold);
    const double attained = derivation_score(chart, fast.derivation) + static_cast<double>(hamming_delta(fast.derivation, gold));
    worst = std::max({worst, std::abs(fast.score - oracle.score), std::abs(attained - oracle.score)});
    ++pairs;
  }
  return {worst <= 1e-9, fmt("%.0f pairs, max |augmented - brute force| = %.2e", static_cast<double>(pairs), worst)};
}

Outcome a3_round_trip() {
  std::mt19937_64 rng(103);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const BoundarySequence s = random_sequence(n, rng);
    const std::string line = format_sequence_line(s);
    const ProsodicTree t = sequence_to_tree(s);
    const std::string tree_line = format_tree_line(s.chars, t);
    const BoundarySequence back = tree_to_sequence(t, s.chars);
    const TreeLine reparsed = parse_tree_line(tree_line);
    const bool ok = format_sequence_line(back) == line &&
                    format_tree_line(s.chars, sequence_to_tree(back)) == tree_line &&
                    format_sequence_line(tree_to_sequence(reparsed.tree, reparsed.chars)) == line;
    if (!ok) ++failures;
  }
  return {failures == 0, fmt("1000 sequences, %.0f mismatches", static_cast<double>(failures))};
}

Outcome a4_grad_check() {
  SynthConfig sc;
  sc.n_sentences = 200;
  const auto corpus = generate(sc);
  const Model base = Model::initialize(desk_model(), corpus_vocabulary(corpus), 1);
  const Example ex = make_example(base, parse_sequence_line("aW#1b#3").sequence);
  std::mt19937_64 rng(104);
  std::normal_distribution<double> jitter(0.0, 1e-3);
  auto values = param_values(base);
  std::size_t tries = 0;
  ad::GradCheckResult result;
  for (; tries < 3; ++tries) {
    if (tries > 0) {
      for (std::size_t p = 0; p < values.size(); ++p) {
        if (!base.params()[p].trainable) continue;
        for (double& v : values[p].data()) v += jitter(rng);
      }
    }
    Model probe = base;
    for (std::size_t p = 0; p < values.size(); ++p) probe.mutable_params()[p].value = values[p];
    result = ad::grad_check(hinge_objective(probe, ex), values, 1e-6, 1e-3);
    if (result.passed) break;
  }
  return {result.passed, fmt("%.0f tensors, max rel err %.2e after %.0f attempt(s)",
                             static_cast<double>(result.per_param.size()), result.max_rel_error,
                             static_cast<double>(std::min<std::size_t>(tries + 1, 3)))};
}

struct OverfitRun {
  double exact = 0.0;
  std::size_t epochs = 0;
};

OverfitRun overfit(std::size_t n_blocks) {
  SynthConfig sc;
  sc.n_sentences = 50;
  sc.seed = 7;
  sc.cue_strength = 1.0;
  const auto corpus = generate(sc);
  ModelConfig mc = desk_model();
  mc.encoder.n_blocks = n_blocks;
  TrainConfig tc = desk_train();
  tc.max_epochs = 500;
  tc.patience = 500;
  tc.early_stop_metric = StopMetric::ExactMatch;
  tc.target_metric = 1.0;
  const auto r = train(Model::initialize(mc, corpus_vocabulary(corpus), tc.seed), corpus, corpus, tc);
  return {evaluate_model(r.model, corpus).exact_match(), r.log.size()};
}

Outcome a5_overfit() {
  const auto r = overfit(2);
  return {r.exact == 1.0, fmt("exact match %.4f on training set after %.0f epochs", r.exact, static_cast<double>(r.epochs))};
}

struct Split {
  std::vector<BoundarySequence> train, dev, test;
};

Split synthetic_split(double cue_strength, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_sentences = 10000;
  sc.seed = seed;
  sc.cue_strength = cue_strength;
  auto all = generate(sc);
  Split s;
  s.train.assign(all.begin(), all.begin() + 8000);
  s.dev.assign(all.begin() + 8000, all.begin() + 9000);
  s.test.assign(all.begin() + 9000, all.end());
  return s;
}

struct HeldOutRun {
  EvalReport dev;
  EvalReport test;
  std::size_t epochs = 0;
};

HeldOutRun held_out(const Split& split, std::size_t n_blocks, std::size_t max_epochs, double target) {
  ModelConfig mc = desk_model();
  mc.encoder.n_blocks = n_blocks;
  TrainConfig tc = desk_train();
  tc.max_epochs = max_epochs;
  tc.early_stop_metric = StopMetric::MeanF1;
  tc.target_metric = target;
  const auto r = train(Model::initialize(mc, corpus_vocabulary(split.train), tc.seed), split.train, split.dev, tc,
                       [&](const EpochLog& e) { std::cerr << "  [n_blocks=" << n_blocks << "] " << format_log_line(e) << "\n"; });
  return {evaluate_model(r.model, split.dev), evaluate_model(r.model, split.test), r.log.size()};
}

// Shared between A6 and A9: the cue 0.8 run with the desk encoder.
std::optional<Split> weak_split;
std::optional<HeldOutRun> weak_run;

Outcome a6_generalization() {
  const Split strong = synthetic_split(1.0, 11);
  const auto s = held_out(strong, 2, 6, 0.999);
  weak_split = synthetic_split(0.8, 12);
  weak_run = held_out(*weak_split, 2, 8, 0.0);
  const auto& w = weak_run->test;
  const bool strong_ok = s.test.at(Level::PW).f1() >= 0.99 && s.test.at(Level::PPH).f1() >= 0.95 &&
                         s.test.at(Level::IPH).f1() >= 0.95;
  const bool weak_ok = w.at(Level::PW).f1() >= 0.80 && w.at(Level::PPH).f1() >= 0.80 && w.at(Level::IPH).f1() >= 0.80;
  return {strong_ok && weak_ok, "cue 1.0 test " + f1_triple(s.test) + fmt(" (%.0f epochs)", static_cast<double>(s.epochs)) +
                                    "; cue 0.8 test " + f1_triple(w) + fmt(" (%.0f epochs)", static_cast<double>(weak_run->epochs))};
}

Outcome a7_complexity() {
  const auto rows = bench_decode({40, 80}, 30, 107);
  const double ratio = rows[1].median_seconds / rows[0].median_seconds;
  return {ratio >= 4.0 && ratio <= 16.0, fmt("30 trials, median n=40 %.4f ms, n=80 %.4f ms, ratio %.2f",
                                             rows[0].median_seconds * 1e3, rows[1].median_seconds * 1e3, ratio)};
}

Outcome a8_well_formed() {
  SynthConfig sc;
  sc.n_sentences = 1000;
  sc.seed = 108;
  const auto corpus = generate(sc);
  const Model model = Model::initialize(desk_model(), corpus_vocabulary(corpus), 108);
  std::size_t bad = 0;
  std::string text;
  std::vector<BoundarySequence> predicted;
  for (const auto& s : corpus) {
    const BoundarySequence p = model.predict(s.chars);
    if (!validate_tree(sequence_to_tree(p)).ok()) ++bad;
    text += format_sequence_line(p) + "\n";
    predicted.push_back(p);
  }
  const LoadReport reloaded = load_corpus_text(text);
  const bool reload_ok = reloaded.errors.empty() && reloaded.normalized == 0 && reloaded.sequences() == predicted;
  return {bad == 0 && reload_ok, fmt("1000 predictions, %.0f invalid, reload errors %.0f, normalized %.0f",
                                     static_cast<double>(bad), static_cast<double>(reloaded.errors.size()),
                                     static_cast<double>(reloaded.normalized))};
}

Outcome a9_ablation() {
  if (!weak_run) return {false, "needs the cue 0.8 run from A6"};
  const auto ablated = held_out(*weak_split, 0, 8, 0.0);
  const auto& full = weak_run->dev;
  bool ok = true;
  for (Level l : kLevels) ok = ok && full.at(l).f1() >= ablated.dev.at(l).f1();
  const auto small = overfit(0);
  return {ok, "cue 0.8 dev n_blocks=2 " + f1_triple(full) + "; n_blocks=0 " + f1_triple(ablated.dev) +
                  fmt("; n_blocks=0 overfit exact match %.4f after %.0f epochs (not asserted)", small.exact,
                      static_cast<double>(small.epochs))};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"A1", "decode matches brute force", 60, a1_decode_oracle},
      {"A2", "augmented decode matches brute force", 120, a2_augmented_oracle},
      {"A3", "sequence/tree round trip", 10, a3_round_trip},
      {"A4", "hinge loss gradient check", 60, a4_grad_check},
      {"A5", "overfit 50 sentences", 300, a5_overfit},
      {"A6", "held-out generalization", 1800, a6_generalization},
      {"A7", "decoder complexity", 120, a7_complexity},
      {"A8", "untrained predictions well-formed", 60, a8_well_formed},
      {"A9", "encoder ablation direction", 1800, a9_ablation},
  };
  bool all = true;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.budget_seconds;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::cout << c.id << " " << (pass ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail
              << fmt(" [%.1f s, budget %.0f s]", seconds, c.budget_seconds) << (in_time ? "" : " over budget")
              << std::endl;
  }
  std::cout << (all ? "ALL PASS" : "SOME FAILED") << std::endl;
  return all ? 0 : 1;
}
