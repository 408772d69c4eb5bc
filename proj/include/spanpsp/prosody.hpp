#ifndef SPANPSP_PROSODY_HPP
#define SPANPSP_PROSODY_HPP

// Prosodic structure domain types: levels, generalized labels, labeled
// spans over character fenceposts, trees, and boundary-mark sequences,
// together with the conversions between the tree and sequence views.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spanpsp/utf8.hpp"

namespace spanpsp {

enum class Level : std::uint8_t { PW = 0, PPH = 1, IPH = 2 };

inline constexpr std::array<Level, 3> kLevels{Level::PW, Level::PPH, Level::IPH};

inline constexpr std::string_view level_name(Level level) {
  switch (level) {
    case Level::PW: return "PW";
    case Level::PPH: return "PPH";
    case Level::IPH: return "IPH";
  }
  return "?";
}

/// A set of coextensive prosodic levels carried by one span. The empty set
/// is the dummy label used for binarization nodes.
class Label {
 public:
  constexpr Label() = default;

  static constexpr Label dummy() { return Label(); }

  static constexpr Label of(std::initializer_list<Level> levels) {
    Label label;
    for (Level level : levels) label = label.with(level);
    return label;
  }

  static constexpr Label from_bits(std::uint8_t bits) {
    Label label;
    label.bits_ = static_cast<std::uint8_t>(bits & 0x7);
    return label;
  }

  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool is_dummy() const { return bits_ == 0; }
  constexpr bool has(Level level) const { return (bits_ >> static_cast<int>(level)) & 1; }

  constexpr Label with(Level level) const {
    return from_bits(static_cast<std::uint8_t>(bits_ | (1u << static_cast<int>(level))));
  }

  constexpr Label merged(Label other) const {
    return from_bits(static_cast<std::uint8_t>(bits_ | other.bits_));
  }

  // Precondition: !is_dummy().
  constexpr Level highest() const {
    if (has(Level::IPH)) return Level::IPH;
    if (has(Level::PPH)) return Level::PPH;
    return Level::PW;
  }

  /// Text form, greatest level first: `#3-#2-#1`. The dummy label prints as `0`.
  std::string to_string() const {
    if (is_dummy()) return "0";
    std::string out;
    for (int lv = 2; lv >= 0; --lv) {
      if (!has(static_cast<Level>(lv))) continue;
      if (!out.empty()) out.push_back('-');
      out.push_back('#');
      out.push_back(static_cast<char>('1' + lv));
    }
    return out;
  }

  static Label parse(std::string_view text) {
    if (text == "0") return dummy();
    Label label;
    std::size_t pos = 0;
    while (pos < text.size()) {
      if (pos + 2 > text.size() || text[pos] != '#' || text[pos + 1] < '1' || text[pos + 1] > '3') {
        throw Error("malformed label '" + std::string(text) + "'");
      }
      label = label.with(static_cast<Level>(text[pos + 1] - '1'));
      pos += 2;
      if (pos < text.size()) {
        if (text[pos] != '-') throw Error("malformed label '" + std::string(text) + "'");
        ++pos;
        if (pos == text.size()) throw Error("malformed label '" + std::string(text) + "'");
      }
    }
    if (label.is_dummy()) throw Error("empty label");
    return label;
  }

  friend constexpr bool operator==(Label a, Label b) = default;
  friend constexpr auto operator<=>(Label a, Label b) = default;

 private:
  std::uint8_t bits_ = 0;
};

/// Boundary mark written after a character. A higher mark implies every lower boundary.
enum class Mark : std::uint8_t { None = 0, PW = 1, PPH = 2, IPH = 3 };

inline constexpr Mark mark_for(Level level) {
  return static_cast<Mark>(static_cast<int>(level) + 1);
}

inline constexpr bool mark_reaches(Mark mark, Level level) {
  return static_cast<int>(mark) >= static_cast<int>(mark_for(level));
}

/// Constituent covering characters begin+1..end (1-based), i.e. fenceposts [begin, end).
struct LabeledSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  Label label;

  std::size_t length() const { return end - begin; }
  bool contains(const LabeledSpan& other) const { return begin <= other.begin && other.end <= end; }
  bool same_extent(const LabeledSpan& other) const { return begin == other.begin && end == other.end; }

  std::string to_string() const {
    return "(" + std::to_string(begin) + "," + std::to_string(end) + "," + label.to_string() + ")";
  }

  friend bool operator==(const LabeledSpan&, const LabeledSpan&) = default;
};

/// Preorder: outer spans before the spans they contain.
inline bool preorder_less(const LabeledSpan& a, const LabeledSpan& b) {
  if (a.begin != b.begin) return a.begin < b.begin;
  if (a.end != b.end) return a.end > b.end;
  return a.label.bits() < b.label.bits();
}

inline bool crosses(const LabeledSpan& a, const LabeledSpan& b) {
  return (a.begin < b.begin && b.begin < a.end && a.end < b.end) ||
         (b.begin < a.begin && a.begin < b.end && b.end < a.end);
}

/// A set of labeled spans over a sentence of `size()` characters. The root
/// extent (0,n) is implicit and carries a label only if one of the spans
/// covers it. Construction canonicalizes order but does not validate.
class ProsodicTree {
 public:
  ProsodicTree() = default;

  ProsodicTree(std::size_t sentence_len, std::vector<LabeledSpan> spans)
      : n_(sentence_len), spans_(std::move(spans)) {
    std::sort(spans_.begin(), spans_.end(), preorder_less);
  }

  std::size_t size() const { return n_; }
  const std::vector<LabeledSpan>& spans() const { return spans_; }

  std::optional<Label> label_at(std::size_t begin, std::size_t end) const {
    for (const auto& span : spans_) {
      if (span.begin == begin && span.end == end) return span.label;
    }
    return std::nullopt;
  }

  std::size_t count(Level level) const {
    return static_cast<std::size_t>(std::count_if(
        spans_.begin(), spans_.end(), [level](const LabeledSpan& s) { return s.label.has(level); }));
  }

  std::string to_string() const {
    std::string out;
    for (const auto& span : spans_) {
      if (!out.empty()) out.push_back(' ');
      out += span.to_string();
    }
    return out;
  }

  friend bool operator==(const ProsodicTree&, const ProsodicTree&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<LabeledSpan> spans_;
};

/// A sentence with the boundary mark following each character.
struct BoundarySequence {
  std::u32string chars;
  std::vector<Mark> marks;

  std::size_t size() const { return chars.size(); }
  friend bool operator==(const BoundarySequence&, const BoundarySequence&) = default;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
  EmptySentence,
  OutOfRange,
  DummyLabel,
  DuplicateExtent,
  Crossing,
  PartitionGap,
  PartitionOverlap,
  Containment,
};

inline std::string_view violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::EmptySentence: return "empty-sentence";
    case ViolationKind::OutOfRange: return "out-of-range";
    case ViolationKind::DummyLabel: return "dummy-label";
    case ViolationKind::DuplicateExtent: return "duplicate-extent";
    case ViolationKind::Crossing: return "crossing";
    case ViolationKind::PartitionGap: return "partition-gap";
    case ViolationKind::PartitionOverlap: return "partition-overlap";
    case ViolationKind::Containment: return "containment";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::vector<LabeledSpan> spans;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  bool has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const Violation& v) { return v.kind == kind; });
  }

  std::string summary() const {
    if (ok()) return "ok";
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += std::string(violation_name(v.kind)) + ": " + v.message;
    }
    return out;
  }
};

/// Checks nesting, per-level partition of (0,n) and PW-in-PPH-in-IPH
/// containment. Never throws; every violation found is reported.
inline ValidationReport validate_tree(const ProsodicTree& tree) {
  ValidationReport report;
  const std::size_t n = tree.size();
  const auto& spans = tree.spans();
  auto add = [&report](ViolationKind kind, std::vector<LabeledSpan> offending, std::string message) {
    report.violations.push_back({kind, std::move(offending), std::move(message)});
  };

  if (n == 0) {
    add(ViolationKind::EmptySentence, {}, "sentence has no characters");
    return report;
  }

  std::vector<LabeledSpan> usable;
  for (const auto& span : spans) {
    if (span.begin >= span.end || span.end > n) {
      add(ViolationKind::OutOfRange, {span}, span.to_string() + " outside (0," + std::to_string(n) + ")");
      continue;
    }
    if (span.label.is_dummy()) {
      add(ViolationKind::DummyLabel, {span}, span.to_string() + " carries the dummy label");
      continue;
    }
    usable.push_back(span);
  }

  for (std::size_t a = 0; a < usable.size(); ++a) {
    for (std::size_t b = a + 1; b < usable.size(); ++b) {
      if (usable[a].same_extent(usable[b])) {
        add(ViolationKind::DuplicateExtent, {usable[a], usable[b]},
            usable[a].to_string() + " and " + usable[b].to_string() +
                " share an extent; coextensive levels must be merged into one label");
      } else if (crosses(usable[a], usable[b])) {
        add(ViolationKind::Crossing, {usable[a], usable[b]},
            usable[a].to_string() + " overlaps " + usable[b].to_string());
      }
    }
  }

  for (Level level : kLevels) {
    std::vector<LabeledSpan> at_level;
    for (const auto& span : usable) {
      if (span.label.has(level)) at_level.push_back(span);
    }
    std::sort(at_level.begin(), at_level.end(), preorder_less);
    std::size_t cursor = 0;
    const std::string name(level_name(level));
    for (const auto& span : at_level) {
      if (span.begin > cursor) {
        add(ViolationKind::PartitionGap, {span},
            name + " constituents leave (" + std::to_string(cursor) + "," + std::to_string(span.begin) +
                ") uncovered");
      } else if (span.begin < cursor) {
        add(ViolationKind::PartitionOverlap, {span},
            name + " constituent " + span.to_string() + " overlaps the previous one");
      }
      cursor = std::max(cursor, span.end);
    }
    if (cursor < n) {
      add(ViolationKind::PartitionGap, {},
          name + " constituents leave (" + std::to_string(cursor) + "," + std::to_string(n) + ") uncovered");
    }
  }

  auto check_containment = [&](Level inner, Level outer) {
    for (const auto& span : usable) {
      if (!span.label.has(inner)) continue;
      const bool inside = std::any_of(usable.begin(), usable.end(), [&](const LabeledSpan& other) {
        return other.label.has(outer) && other.contains(span);
      });
      if (!inside) {
        add(ViolationKind::Containment, {span},
            std::string(level_name(inner)) + " " + span.to_string() + " lies in no " +
                std::string(level_name(outer)));
      }
    }
  };
  check_containment(Level::PW, Level::PPH);
  check_containment(Level::PPH, Level::IPH);
  return report;
}

// ---------------------------------------------------------------------------
// Tree <-> sequence conversion

/// Builds the tree whose level-l constituents are the maximal runs between
/// boundaries of mark >= l. Coextensive constituents merge into one span.
/// Requires marks.back() == Mark::IPH.
inline ProsodicTree tree_from_marks(std::span<const Mark> marks) {
  const std::size_t n = marks.size();
  if (n == 0) throw Error("empty sentence");
  if (marks.back() != Mark::IPH) throw Error("sentence must end with an IPH boundary (#3)");
  std::map<std::pair<std::size_t, std::size_t>, Label> merged;
  for (Level level : kLevels) {
    std::size_t start = 0;
    for (std::size_t k = 1; k <= n; ++k) {
      if (mark_reaches(marks[k - 1], level)) {
        auto& label = merged[{start, k}];
        label = label.with(level);
        start = k;
      }
    }
  }
  std::vector<LabeledSpan> spans;
  spans.reserve(merged.size());
  for (const auto& [extent, label] : merged) spans.push_back({extent.first, extent.second, label});
  return ProsodicTree(n, std::move(spans));
}

inline ProsodicTree sequence_to_tree(const BoundarySequence& seq) {
  if (seq.chars.empty()) throw Error("empty sentence");
  if (seq.marks.size() != seq.chars.size()) {
    throw Error("marks list has length " + std::to_string(seq.marks.size()) + " for " +
                std::to_string(seq.chars.size()) + " characters");
  }
  return tree_from_marks(seq.marks);
}

/// Highest level among constituents ending at each fencepost 1..n.
inline std::vector<Mark> tree_to_marks(const ProsodicTree& tree) {
  const auto report = validate_tree(tree);
  if (!report.ok()) throw Error("invalid prosodic tree: " + report.summary());
  std::vector<Mark> marks(tree.size(), Mark::None);
  for (const auto& span : tree.spans()) {
    auto& mark = marks[span.end - 1];
    mark = std::max(mark, mark_for(span.label.highest()));
  }
  return marks;
}

inline BoundarySequence tree_to_sequence(const ProsodicTree& tree, std::u32string chars) {
  if (chars.size() != tree.size()) {
    throw Error("tree covers " + std::to_string(tree.size()) + " characters but " +
                std::to_string(chars.size()) + " were given");
  }
  return BoundarySequence{std::move(chars), tree_to_marks(tree)};
}

/// Coerces any set of decoder spans into a valid tree. Every non-dummy span
/// projects its highest level onto the fenceposts where it starts and ends;
/// the sentence end is an IPH boundary; the tree is rebuilt from the
/// resulting marks. Valid trees are returned unchanged.
inline ProsodicTree repair_tree(std::size_t n, std::span<const LabeledSpan> raw) {
  if (n == 0) return ProsodicTree();
  std::vector<Mark> marks(n, Mark::None);
  for (const auto& span : raw) {
    if (span.label.is_dummy() || span.begin >= span.end || span.end > n) continue;
    const Mark mark = mark_for(span.label.highest());
    marks[span.end - 1] = std::max(marks[span.end - 1], mark);
    if (span.begin > 0) marks[span.begin - 1] = std::max(marks[span.begin - 1], mark);
  }
  marks[n - 1] = Mark::IPH;
  return tree_from_marks(marks);
}

inline ProsodicTree repair_tree(const ProsodicTree& tree) {
  return repair_tree(tree.size(), tree.spans());
}

// ---------------------------------------------------------------------------
// Label vocabulary and chart-level assignments

class LabelVocabulary {
 public:
  explicit LabelVocabulary(std::vector<Label> labels) : labels_(std::move(labels)) {
    std::size_t dummies = 0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].is_dummy()) {
        ++dummies;
        dummy_ = i;
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (labels_[k] == labels_[i]) throw Error("duplicate label " + labels_[i].to_string());
      }
    }
    if (dummies != 1) throw Error("label vocabulary must contain the dummy label exactly once");
  }

  /// {0, PW, PPH, IPH, PW+PPH, PW+PPH+IPH, PPH+IPH}; dummy first.
  static LabelVocabulary standard() {
    return LabelVocabulary({
        Label::dummy(),
        Label::of({Level::PW}),
        Label::of({Level::PPH}),
        Label::of({Level::IPH}),
        Label::of({Level::PW, Level::PPH}),
        Label::of({Level::PW, Level::PPH, Level::IPH}),
        Label::of({Level::PPH, Level::IPH}),
    });
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dummy_index() const { return dummy_; }
  const Label& at(std::size_t index) const { return labels_.at(index); }
  const std::vector<Label>& labels() const { return labels_; }

  std::optional<std::size_t> index_of(Label label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == label) return i;
    }
    return std::nullopt;
  }

 private:
  std::vector<Label> labels_;
  std::size_t dummy_ = 0;
};

/// A span carrying a label index into some vocabulary (or chart column).
struct IndexedSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t label = 0;
  friend bool operator==(const IndexedSpan&, const IndexedSpan&) = default;
};

/// A full binarized derivation: 2n-1 spans, dummy-labeled nodes included.
struct Derivation {
  std::size_t n = 0;
  std::vector<IndexedSpan> spans;
};

/// Gold label index for every span (i,j); dummy where the gold tree has no span.
class GoldAssignment {
 public:
  GoldAssignment(std::size_t n, std::size_t dummy_index, std::span<const IndexedSpan> labeled)
      : n_(n), dummy_(dummy_index), labels_((n + 1) * (n + 1), dummy_index) {
    for (const auto& span : labeled) {
      if (span.begin >= span.end || span.end > n) throw Error("gold span outside sentence");
      labels_[span.begin * (n_ + 1) + span.end] = span.label;
    }
  }

  GoldAssignment(const ProsodicTree& tree, const LabelVocabulary& vocab)
      : GoldAssignment(tree.size(), vocab.dummy_index(), index_spans(tree, vocab)) {}

  std::size_t size() const { return n_; }
  std::size_t dummy_index() const { return dummy_; }
  std::size_t label(std::size_t begin, std::size_t end) const { return labels_[begin * (n_ + 1) + end]; }

  static std::vector<IndexedSpan> index_spans(const ProsodicTree& tree, const LabelVocabulary& vocab) {
    std::vector<IndexedSpan> out;
    out.reserve(tree.spans().size());
    for (const auto& span : tree.spans()) {
      const auto index = vocab.index_of(span.label);
      if (!index) throw Error("label " + span.label.to_string() + " is not in the vocabulary");
      out.push_back({span.begin, span.end, *index});
    }
    return out;
  }

 private:
  std::size_t n_;
  std::size_t dummy_;
  std::vector<std::size_t> labels_;
};

/// Number of derivation spans whose label differs from the gold label of that span.
inline std::size_t hamming_delta(const Derivation& derivation, const GoldAssignment& gold) {
  if (derivation.n != gold.size()) {
    throw Error("derivation over " + std::to_string(derivation.n) + " characters, gold over " +
                std::to_string(gold.size()));
  }
  std::size_t delta = 0;
  for (const auto& span : derivation.spans) {
    if (span.label != gold.label(span.begin, span.end)) ++delta;
  }
  return delta;
}

inline std::size_t hamming_delta(const Derivation& derivation, const ProsodicTree& gold,
                                 const LabelVocabulary& vocab) {
  return hamming_delta(derivation, GoldAssignment(gold, vocab));
}

/// Non-dummy spans of a derivation, as a (possibly ill-formed) tree.
inline ProsodicTree derivation_tree(const Derivation& derivation, const LabelVocabulary& vocab) {
  std::vector<LabeledSpan> spans;
  for (const auto& span : derivation.spans) {
    if (span.label == vocab.dummy_index()) continue;
    spans.push_back({span.begin, span.end, vocab.at(span.label)});
  }
  return ProsodicTree(derivation.n, std::move(spans));
}

/// Right-branching binarization of a nested tree. Children of every node
/// are its maximal inner spans plus single characters filling any gaps;
/// consecutive children are joined by dummy-labeled nodes.
inline Derivation binarize(const ProsodicTree& tree, const LabelVocabulary& vocab) {
  const std::size_t n = tree.size();
  const std::size_t dummy = vocab.dummy_index();
  const auto labeled = GoldAssignment::index_spans(tree, vocab);
  GoldAssignment lookup(n, dummy, labeled);
  Derivation out{n, {}};
  out.spans.reserve(2 * n);

  struct Piece {
    std::size_t begin, end;
  };
  auto children = [&](std::size_t begin, std::size_t end) {
    std::vector<Piece> pieces;
    std::size_t cursor = begin;
    for (const auto& span : tree.spans()) {  // preorder: first span at a start is the widest
      if (span.begin < cursor || span.end > end || (span.begin == begin && span.end == end)) continue;
      for (; cursor < span.begin; ++cursor) pieces.push_back({cursor, cursor + 1});
      pieces.push_back({span.begin, span.end});
      cursor = span.end;
    }
    for (; cursor < end; ++cursor) pieces.push_back({cursor, cursor + 1});
    return pieces;
  };

  std::vector<Piece> stack{{0, n}};
  while (!stack.empty()) {
    const Piece node = stack.back();
    stack.pop_back();
    out.spans.push_back({node.begin, node.end, lookup.label(node.begin, node.end)});
    if (node.end - node.begin == 1) continue;
    const auto pieces = children(node.begin, node.end);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      stack.push_back(pieces[k]);
      if (k + 2 < pieces.size()) out.spans.push_back({pieces[k + 1].begin, node.end, dummy});
    }
  }
  return out;
}

}  // namespace spanpsp

#endif  // SPANPSP_PROSODY_HPP
