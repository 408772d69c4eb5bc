#ifndef SPANPSP_TEXT_FORMAT_HPP
#define SPANPSP_TEXT_FORMAT_HPP

// Line-oriented text formats.
//
//   sequence line:  characters interleaved with `#1` `#2` `#3`, e.g. `ab#1cd#3`.
//                   Whitespace is ignored.
//   tree line:      characters, a tab, then space-separated `begin,end,label`
//                   triples, e.g. `abcd\t0,2,#1 2,4,#1 0,4,#3-#2`.

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "spanpsp/prosody.hpp"
#include "spanpsp/utf8.hpp"

namespace spanpsp {

struct ParsedLine {
  BoundarySequence sequence;
  bool normalized = false;  // the sentence-final #3 was added or upgraded
};

inline ParsedLine parse_sequence_line(std::string_view line) {
  const std::u32string text = utf8::decode(line);
  ParsedLine out;
  auto& chars = out.sequence.chars;
  auto& marks = out.sequence.marks;
  bool marked = false;  // the current last character already received a mark
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    const char32_t c = text[pos];
    if (utf8::is_space(c)) continue;
    if (c == U'#') {
      std::size_t next = pos + 1;
      while (next < text.size() && utf8::is_space(text[next])) ++next;
      if (next >= text.size() || text[next] < U'1' || text[next] > U'3') {
        throw Error("malformed boundary token at character " + std::to_string(pos));
      }
      if (chars.empty()) throw Error("boundary token before any character");
      if (marked) throw Error("two boundary tokens after one character at " + std::to_string(pos));
      marks.back() = static_cast<Mark>(text[next] - U'0');
      marked = true;
      pos = next;
      continue;
    }
    chars.push_back(c);
    marks.push_back(Mark::None);
    marked = false;
  }
  if (chars.empty()) throw Error("empty sentence");
  if (marks.back() != Mark::IPH) {
    marks.back() = Mark::IPH;
    out.normalized = true;
  }
  return out;
}

/// Characters of a line with any boundary tokens and whitespace removed.
inline std::u32string strip_marks(std::string_view line) {
  const std::u32string text = utf8::decode(line);
  std::u32string chars;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    if (utf8::is_space(text[pos])) continue;
    if (text[pos] == U'#' && pos + 1 < text.size() && text[pos + 1] >= U'1' && text[pos + 1] <= U'3') {
      ++pos;
      continue;
    }
    chars.push_back(text[pos]);
  }
  return chars;
}

inline std::string format_sequence_line(const BoundarySequence& seq) {
  if (seq.marks.size() != seq.chars.size()) throw Error("marks/characters length mismatch");
  std::string out;
  for (std::size_t k = 0; k < seq.chars.size(); ++k) {
    utf8::append(out, seq.chars[k]);
    if (seq.marks[k] != Mark::None) {
      out.push_back('#');
      out.push_back(static_cast<char>('0' + static_cast<int>(seq.marks[k])));
    }
  }
  return out;
}

struct TreeLine {
  std::u32string chars;
  ProsodicTree tree;
};

inline std::string format_tree_line(std::u32string_view chars, const ProsodicTree& tree) {
  std::string out = utf8::encode(chars);
  out.push_back('\t');
  bool first = true;
  for (const auto& span : tree.spans()) {
    if (!first) out.push_back(' ');
    first = false;
    out += std::to_string(span.begin) + "," + std::to_string(span.end) + "," + span.label.to_string();
  }
  return out;
}

inline TreeLine parse_tree_line(std::string_view line) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw Error("tree line lacks a tab separator");
  TreeLine out;
  for (char32_t c : utf8::decode(line.substr(0, tab))) {
    if (!utf8::is_space(c)) out.chars.push_back(c);
  }
  if (out.chars.empty()) throw Error("empty sentence");

  auto parse_index = [](std::string_view field) {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      throw Error("malformed span index '" + std::string(field) + "'");
    }
    return value;
  };

  std::vector<LabeledSpan> spans;
  std::string_view rest = line.substr(tab + 1);
  while (!rest.empty()) {
    const auto space = rest.find_first_of(" \t\r\n");
    const std::string_view token = rest.substr(0, space);
    rest = space == std::string_view::npos ? std::string_view() : rest.substr(space + 1);
    if (token.empty()) continue;
    const auto c1 = token.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : token.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw Error("malformed span '" + std::string(token) + "'");
    spans.push_back({parse_index(token.substr(0, c1)), parse_index(token.substr(c1 + 1, c2 - c1 - 1)),
                     Label::parse(token.substr(c2 + 1))});
  }
  out.tree = ProsodicTree(out.chars.size(), std::move(spans));
  return out;
}

}  // namespace spanpsp

#endif  // SPANPSP_TEXT_FORMAT_HPP
