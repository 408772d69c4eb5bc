#ifndef SPANPSP_METRICS_HPP
#define SPANPSP_METRICS_HPP

// Boundary precision / recall / F1 per prosodic level.
//
// By default counting is cumulative: at a fencepost, level l is positive
// when the mark is at least l's mark (#3 counts for PW, PPH and IPH). The
// exact-mark mode counts level l only where the mark equals l's mark.
// The sentence-final boundary is forced and never counted.

#include <array>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>

#include "spanpsp/prosody.hpp"

namespace spanpsp {

struct LevelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  LevelCounts& operator+=(const LevelCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    return *this;
  }
  friend bool operator==(const LevelCounts&, const LevelCounts&) = default;
};

enum class CountingMode { Cumulative, ExactMark };

struct EvalReport {
  std::array<LevelCounts, 3> levels{};
  std::size_t sentences = 0;
  std::size_t exact = 0;

  const LevelCounts& at(Level level) const { return levels[static_cast<std::size_t>(level)]; }
  double exact_match() const { return sentences == 0 ? 0.0 : static_cast<double>(exact) / static_cast<double>(sentences); }

  EvalReport& operator+=(const EvalReport& other) {
    for (std::size_t k = 0; k < levels.size(); ++k) levels[k] += other.levels[k];
    sentences += other.sentences;
    exact += other.exact;
    return *this;
  }
};

inline bool is_positive(Mark mark, Level level, CountingMode mode) {
  return mode == CountingMode::Cumulative ? mark_reaches(mark, level) : mark == mark_for(level);
}

inline EvalReport evaluate(std::span<const BoundarySequence> pred, std::span<const BoundarySequence> gold,
                           CountingMode mode = CountingMode::Cumulative) {
  if (pred.size() != gold.size()) {
    throw Error("prediction has " + std::to_string(pred.size()) + " sentences, gold has " +
                std::to_string(gold.size()));
  }
  EvalReport report;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const auto& p = pred[s].marks;
    const auto& g = gold[s].marks;
    if (p.size() != g.size()) {
      throw Error("sentence " + std::to_string(s + 1) + ": predicted length " + std::to_string(p.size()) +
                  " differs from gold length " + std::to_string(g.size()));
    }
    ++report.sentences;
    if (p == g) ++report.exact;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
      for (Level level : kLevels) {
        const bool pp = is_positive(p[k], level, mode);
        const bool gp = is_positive(g[k], level, mode);
        auto& counts = report.levels[static_cast<std::size_t>(level)];
        if (pp && gp) ++counts.tp;
        else if (pp) ++counts.fp;
        else if (gp) ++counts.fn;
      }
    }
  }
  return report;
}

/// Table laid out as Pre / Rec / F1 per level, followed by exact match.
inline std::string render_table(const EvalReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-6s %9s %9s %9s %9s %9s %9s\n", "level", "Pre", "Rec", "F1", "tp", "fp", "fn");
  out += buf;
  for (Level level : kLevels) {
    const auto& c = report.at(level);
    std::snprintf(buf, sizeof buf, "%-6s %8.2f%% %8.2f%% %8.2f%% %9zu %9zu %9zu\n", std::string(level_name(level)).c_str(),
                  100.0 * c.precision(), 100.0 * c.recall(), 100.0 * c.f1(), c.tp, c.fp, c.fn);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "exact match: %.2f%% (%zu/%zu sentences)\n", 100.0 * report.exact_match(),
                report.exact, report.sentences);
  out += buf;
  return out;
}

/// Machine-readable `key = value` lines.
inline std::string render_key_values(const EvalReport& report) {
  char buf[128];
  std::string out;
  for (Level level : kLevels) {
    const auto& c = report.at(level);
    const std::string name(level_name(level));
    std::snprintf(buf, sizeof buf, "%s_precision = %.6f\n%s_recall = %.6f\n%s_f1 = %.6f\n", name.c_str(),
                  c.precision(), name.c_str(), c.recall(), name.c_str(), c.f1());
    out += buf;
    std::snprintf(buf, sizeof buf, "%s_tp = %zu\n%s_fp = %zu\n%s_fn = %zu\n", name.c_str(), c.tp, name.c_str(), c.fp,
                  name.c_str(), c.fn);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "exact_match = %.6f\nsentences = %zu\n", report.exact_match(), report.sentences);
  out += buf;
  return out;
}

}  // namespace spanpsp

#endif  // SPANPSP_METRICS_HPP
