#ifndef SPANPSP_SCORER_HPP
#define SPANPSP_SCORER_HPP

// Span label scoring: s(i,j,.) = W2 relu(W1 (v_j - v_i) + z1) + z2 over the
// non-dummy labels, with the dummy column pinned to exactly zero.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spanpsp/chart.hpp"
#include "spanpsp/prosody.hpp"
#include "spanpsp/tensor.hpp"

namespace spanpsp {

struct ScorerParams {
  ad::Tensor w1;  // d_hidden x d_model
  ad::Tensor z1;  // d_hidden
  ad::Tensor w2;  // (L-1) x d_hidden
  ad::Tensor z2;  // L-1

  std::size_t d_model() const { return w1.cols(); }
  std::size_t d_hidden() const { return w1.rows(); }
  std::size_t outputs() const { return w2.rows(); }

  void check(std::size_t d_model_expected, const LabelVocabulary& vocab) const {
    const bool ok = w1.rank() == 2 && w1.cols() == d_model_expected && z1.rank() == 1 &&
                    z1.size() == w1.rows() && w2.rank() == 2 && w2.cols() == w1.rows() && z2.rank() == 1 &&
                    z2.size() == w2.rows() && w2.rows() + 1 == vocab.size();
    if (!ok) {
      throw Error("scorer dimensions " + ad::shape_string(w1.shape()) + " " + ad::shape_string(z1.shape()) + " " +
                  ad::shape_string(w2.shape()) + " " + ad::shape_string(z2.shape()) + " do not fit d_model=" +
                  std::to_string(d_model_expected) + " and " + std::to_string(vocab.size()) + " labels");
    }
  }
};

/// Chart column of each scorer output (every label except the dummy).
inline std::vector<std::size_t> output_columns(const LabelVocabulary& vocab) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < vocab.size(); ++l) {
    if (l != vocab.dummy_index()) out.push_back(l);
  }
  return out;
}

/// v_j - v_i for fencepost rows of an (n+1) x d matrix.
inline std::vector<double> span_rep(const ad::Tensor& fenceposts, std::size_t i, std::size_t j) {
  if (!(i < j && j < fenceposts.rows())) {
    throw Error("span (" + std::to_string(i) + "," + std::to_string(j) + ") outside sentence of " +
                std::to_string(fenceposts.rows() == 0 ? 0 : fenceposts.rows() - 1) + " characters");
  }
  const auto vi = fenceposts.row(i);
  const auto vj = fenceposts.row(j);
  std::vector<double> out(vi.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = vj[k] - vi[k];
  return out;
}

/// Places scorer outputs (one row per span, one column per non-dummy label)
/// into a chart; the dummy column stays exactly zero.
inline ScoreChart chart_from_rows(const ad::Tensor& rows, std::size_t n, const LabelVocabulary& vocab) {
  const auto columns = output_columns(vocab);
  if (rows.rows() != span_count(n) || rows.cols() != columns.size()) {
    throw Error("score rows " + ad::shape_string(rows.shape()) + " do not match " + std::to_string(span_count(n)) +
                " spans x " + std::to_string(columns.size()) + " labels");
  }
  ScoreChart chart(n, vocab.size(), vocab.dummy_index());
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j, ++r) {
      auto cell = chart.scores(i, j);
      for (std::size_t c = 0; c < columns.size(); ++c) cell[columns[c]] = rows.at(r, c);
    }
  }
  return chart;
}

/// Batched scorer on a tape. W1 distributes over the fencepost difference,
/// so it is applied once per fencepost instead of once per span.
/// Returns a (spans x (L-1)) matrix in span_row order.
inline ad::Var score_rows(ad::Var fenceposts, ad::Var w1, ad::Var z1, ad::Var w2, ad::Var z2) {
  const std::size_t n = fenceposts.value().rows() - 1;
  const auto pairs = span_pairs(n);
  const ad::Var projected = ad::matmul_nt(fenceposts, w1);
  const ad::Var hidden = ad::relu(ad::add_row(ad::row_difference(projected, pairs), z1));
  return ad::add_row(ad::matmul_nt(hidden, w2), z2);
}

inline ScoreChart score_chart(const ad::Tensor& fenceposts, const ScorerParams& params, const LabelVocabulary& vocab) {
  if (fenceposts.rank() != 2 || fenceposts.rows() < 2) throw Error("score_chart needs at least two fenceposts");
  params.check(fenceposts.cols(), vocab);
  ad::Tape tape;
  const ad::Var rows = score_rows(tape.constant(fenceposts), tape.constant(params.w1), tape.constant(params.z1),
                                  tape.constant(params.w2), tape.constant(params.z2));
  return chart_from_rows(rows.value(), fenceposts.rows() - 1, vocab);
}

/// Reference path: forms every span representation and runs the FFN on it.
inline ScoreChart score_chart_per_span(const ad::Tensor& fenceposts, const ScorerParams& params,
                                       const LabelVocabulary& vocab) {
  if (fenceposts.rank() != 2 || fenceposts.rows() < 2) throw Error("score_chart needs at least two fenceposts");
  params.check(fenceposts.cols(), vocab);
  const std::size_t n = fenceposts.rows() - 1;
  const std::size_t hidden = params.d_hidden();
  const auto columns = output_columns(vocab);
  ScoreChart chart(n, vocab.size(), vocab.dummy_index());
  std::vector<double> act(hidden);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      const auto rep = span_rep(fenceposts, i, j);
      for (std::size_t h = 0; h < hidden; ++h) {
        double acc = params.z1[h];
        for (std::size_t k = 0; k < rep.size(); ++k) acc += params.w1.at(h, k) * rep[k];
        act[h] = acc > 0.0 ? acc : 0.0;
      }
      for (std::size_t c = 0; c < columns.size(); ++c) {
        double acc = params.z2[c];
        for (std::size_t h = 0; h < hidden; ++h) acc += params.w2.at(c, h) * act[h];
        chart.at(i, j, columns[c]) = acc;
      }
    }
  }
  return chart;
}

/// s(T): sum of chart entries over the tree's labeled spans.
inline double tree_score(const ScoreChart& chart, const ProsodicTree& tree, const LabelVocabulary& vocab) {
  if (tree.size() != chart.size()) {
    throw Error("tree over " + std::to_string(tree.size()) + " characters, chart over " +
                std::to_string(chart.size()));
  }
  double total = 0.0;
  for (const auto& span : tree.spans()) {
    chart.check_span(span.begin, span.end);
    const auto index = vocab.index_of(span.label);
    if (!index) throw Error("label " + span.label.to_string() + " is not in the vocabulary");
    total += chart.at(span.begin, span.end, *index);
  }
  return total;
}

}  // namespace spanpsp

#endif  // SPANPSP_SCORER_HPP
