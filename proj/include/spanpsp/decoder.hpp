#ifndef SPANPSP_DECODER_HPP
#define SPANPSP_DECODER_HPP

// Exact CKY-style search over labeled binary derivations.
//
//   best(i,i+1) = max_l s(i,i+1,l)
//   best(i,j)   = max_l s(i,j,l) + max_{i<k<j} [best(i,k) + best(k,j)]
//
// Label and split are maximized independently since the score is additive.
// Ties go to the lowest label index, then the smallest split point.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spanpsp/chart.hpp"
#include "spanpsp/prosody.hpp"

namespace spanpsp {

class DPTable {
 public:
  explicit DPTable(std::size_t n) : n_(n), best_(cells(n), 0.0), label_(cells(n), 0), split_(cells(n), 0) {}

  std::size_t size() const { return n_; }
  double best(std::size_t i, std::size_t j) const { return best_[i * (n_ + 1) + j]; }
  std::size_t back_label(std::size_t i, std::size_t j) const { return label_[i * (n_ + 1) + j]; }
  /// Split point of a span; none for single characters.
  std::optional<std::size_t> back_split(std::size_t i, std::size_t j) const {
    if (j == i + 1) return std::nullopt;
    return split_[i * (n_ + 1) + j];
  }

 private:
  friend DPTable fill_table(const ScoreChart& chart);
  static std::size_t cells(std::size_t n) { return (n + 1) * (n + 1); }

  std::size_t n_;
  std::vector<double> best_;
  std::vector<std::size_t> label_;
  std::vector<std::size_t> split_;
};

inline DPTable fill_table(const ScoreChart& chart) {
  const std::size_t n = chart.size();
  if (n == 0) throw Error("cannot decode an empty chart");
  const std::size_t labels = chart.labels();
  const std::size_t stride = n + 1;
  DPTable table(n);
  for (std::size_t len = 1; len <= n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      const std::size_t j = i + len;
      const auto scores = chart.scores(i, j);
      std::size_t best_label = 0;
      for (std::size_t l = 1; l < labels; ++l) {
        if (scores[l] > scores[best_label]) best_label = l;
      }
      double value = scores[best_label];
      if (len > 1) {
        std::size_t best_split = i + 1;
        double split_value = table.best_[i * stride + i + 1] + table.best_[(i + 1) * stride + j];
        for (std::size_t k = i + 2; k < j; ++k) {
          const double candidate = table.best_[i * stride + k] + table.best_[k * stride + j];
          if (candidate > split_value) {
            split_value = candidate;
            best_split = k;
          }
        }
        value += split_value;
        table.split_[i * stride + j] = best_split;
      }
      table.best_[i * stride + j] = value;
      table.label_[i * stride + j] = best_label;
    }
  }
  return table;
}

/// Full binarized derivation of (0,n) following the backpointers, preorder.
inline Derivation derivation_spans(const DPTable& table) {
  const std::size_t n = table.size();
  Derivation out{n, {}};
  out.spans.reserve(2 * n - 1);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, n}};
  while (!stack.empty()) {
    const auto [i, j] = stack.back();
    stack.pop_back();
    out.spans.push_back({i, j, table.back_label(i, j)});
    if (const auto k = table.back_split(i, j)) {
      stack.emplace_back(*k, j);
      stack.emplace_back(i, *k);
    }
  }
  return out;
}

struct DecodeResult {
  Derivation derivation;  // 2n-1 spans, dummy nodes included
  double score = 0.0;     // best(0,n) of the chart that was searched
};

inline DecodeResult decode(const ScoreChart& chart) {
  const DPTable table = fill_table(chart);
  return {derivation_spans(table), table.best(0, chart.size())};
}

/// s'(i,j,l) = s(i,j,l) + [l != gold(i,j)], for every label including the dummy.
inline ScoreChart augment(const ScoreChart& chart, const GoldAssignment& gold) {
  if (gold.size() != chart.size()) {
    throw Error("gold over " + std::to_string(gold.size()) + " characters, chart over " +
                std::to_string(chart.size()));
  }
  ScoreChart out = chart;
  const std::size_t n = chart.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      const std::size_t gold_label = gold.label(i, j);
      auto cell = out.scores(i, j);
      for (std::size_t l = 0; l < cell.size(); ++l) {
        if (l != gold_label) cell[l] += 1.0;
      }
    }
  }
  return out;
}

/// Most violating derivation; score is s(T) + hamming(T, gold) for the returned T.
inline DecodeResult decode_augmented(const ScoreChart& chart, const GoldAssignment& gold) {
  return decode(augment(chart, gold));
}

inline DecodeResult decode_augmented(const ScoreChart& chart, const ProsodicTree& gold, const LabelVocabulary& vocab) {
  return decode_augmented(chart, GoldAssignment(gold, vocab));
}

// ---------------------------------------------------------------------------
// Exhaustive oracle

inline constexpr std::size_t kBruteForceMaxLength = 8;

struct BruteForceResult {
  Derivation derivation;
  double score = -std::numeric_limits<double>::infinity();
  std::size_t shapes = 0;     // binary bracketings visited
  std::size_t labelings = 0;  // complete labeled derivations scored one by one
};

namespace detail {

inline std::vector<std::vector<std::pair<std::size_t, std::size_t>>> bracketings(std::size_t i, std::size_t j) {
  if (j == i + 1) return {{{i, j}}};
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out;
  for (std::size_t k = i + 1; k < j; ++k) {
    const auto left = bracketings(i, k);
    const auto right = bracketings(k, j);
    for (const auto& l : left) {
      for (const auto& r : right) {
        std::vector<std::pair<std::size_t, std::size_t>> shape{{i, j}};
        shape.insert(shape.end(), l.begin(), l.end());
        shape.insert(shape.end(), r.begin(), r.end());
        out.push_back(std::move(shape));
      }
    }
  }
  return out;
}

}  // namespace detail

/// Enumerates every binary bracketing of (0,n). When the number of complete
/// labelings is small (at most `max_labelings` per bracketing) each one is
/// scored; otherwise labels are chosen per span, which is exact because the
/// objective separates over the spans of a fixed bracketing.
inline BruteForceResult brute_force_decode(const ScoreChart& chart, const GoldAssignment* gold = nullptr,
                                           std::size_t max_labelings = 4096) {
  const std::size_t n = chart.size();
  if (n == 0) throw Error("cannot decode an empty chart");
  if (n > kBruteForceMaxLength) {
    throw Error("brute force limited to " + std::to_string(kBruteForceMaxLength) + " characters, got " +
                std::to_string(n));
  }
  if (gold && gold->size() != n) throw Error("gold and chart lengths differ");
  const std::size_t labels = chart.labels();
  auto entry = [&](std::size_t i, std::size_t j, std::size_t l) {
    double s = chart.at(i, j, l);
    if (gold && gold->label(i, j) != l) s += 1.0;
    return s;
  };

  const std::size_t spans = 2 * n - 1;
  std::size_t per_shape = 1;
  bool exhaustive_labels = true;
  for (std::size_t s = 0; s < spans; ++s) {
    if (per_shape > max_labelings / labels) {
      exhaustive_labels = false;
      break;
    }
    per_shape *= labels;
  }

  BruteForceResult result;
  for (const auto& shape : detail::bracketings(0, n)) {
    ++result.shapes;
    if (exhaustive_labels) {
      std::vector<std::size_t> assignment(shape.size(), 0);
      while (true) {
        ++result.labelings;
        double total = 0.0;
        for (std::size_t s = 0; s < shape.size(); ++s) total += entry(shape[s].first, shape[s].second, assignment[s]);
        if (total > result.score) {
          result.score = total;
          result.derivation = {n, {}};
          for (std::size_t s = 0; s < shape.size(); ++s)
            result.derivation.spans.push_back({shape[s].first, shape[s].second, assignment[s]});
        }
        std::size_t pos = 0;
        while (pos < assignment.size() && ++assignment[pos] == labels) assignment[pos++] = 0;
        if (pos == assignment.size()) break;
      }
    } else {
      Derivation candidate{n, {}};
      double total = 0.0;
      for (const auto& [i, j] : shape) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < labels; ++l) {
          if (entry(i, j, l) > entry(i, j, best)) best = l;
        }
        candidate.spans.push_back({i, j, best});
        total += entry(i, j, best);
      }
      if (total > result.score) {
        result.score = total;
        result.derivation = std::move(candidate);
      }
    }
  }
  return result;
}

}  // namespace spanpsp

#endif  // SPANPSP_DECODER_HPP
