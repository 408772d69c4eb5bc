#ifndef SPANPSP_CHART_HPP
#define SPANPSP_CHART_HPP

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spanpsp/prosody.hpp"
#include "spanpsp/utf8.hpp"

namespace spanpsp {

/// Number of spans (i,j) with 0 <= i < j <= n.
inline constexpr std::size_t span_count(std::size_t n) { return n * (n + 1) / 2; }

/// Dense row of span (i,j): spans are ordered by start, then end.
inline constexpr std::size_t span_row(std::size_t n, std::size_t i, std::size_t j) {
  return i * (n + 1) - i * (i + 1) / 2 + (j - i - 1);
}

/// All spans of a sentence in row order, as (start, end) fenceposts.
inline std::vector<std::pair<std::size_t, std::size_t>> span_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(span_count(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) out.emplace_back(i, j);
  return out;
}

/// Scores s(i,j,l) for every span and label column.
class ScoreChart {
 public:
  ScoreChart() = default;

  ScoreChart(std::size_t n, std::size_t labels, std::size_t dummy_index = 0)
      : n_(n), labels_(labels), dummy_(dummy_index), scores_(span_count(n) * labels, 0.0) {
    if (labels == 0 || dummy_index >= labels) throw Error("chart needs a dummy column among its labels");
  }

  std::size_t size() const { return n_; }
  std::size_t labels() const { return labels_; }
  std::size_t dummy_index() const { return dummy_; }
  bool empty() const { return n_ == 0; }

  double& at(std::size_t i, std::size_t j, std::size_t label) { return scores_[offset(i, j) + label]; }
  double at(std::size_t i, std::size_t j, std::size_t label) const { return scores_[offset(i, j) + label]; }

  std::span<const double> scores(std::size_t i, std::size_t j) const { return {&scores_[offset(i, j)], labels_}; }
  std::span<double> scores(std::size_t i, std::size_t j) { return {&scores_[offset(i, j)], labels_}; }

  const std::vector<double>& raw() const { return scores_; }

  void check_span(std::size_t i, std::size_t j) const {
    if (!(i < j && j <= n_)) {
      throw Error("span (" + std::to_string(i) + "," + std::to_string(j) + ") outside chart over " +
                  std::to_string(n_) + " characters");
    }
  }

 private:
  std::size_t offset(std::size_t i, std::size_t j) const { return span_row(n_, i, j) * labels_; }

  std::size_t n_ = 0;
  std::size_t labels_ = 0;
  std::size_t dummy_ = 0;
  std::vector<double> scores_;
};

/// Sum of chart entries over a derivation, in derivation order.
inline double derivation_score(const ScoreChart& chart, const Derivation& derivation) {
  double total = 0.0;
  for (const auto& span : derivation.spans) {
    chart.check_span(span.begin, span.end);
    total += chart.at(span.begin, span.end, span.label);
  }
  return total;
}

}  // namespace spanpsp

#endif  // SPANPSP_CHART_HPP
