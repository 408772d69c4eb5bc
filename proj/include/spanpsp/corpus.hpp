#ifndef SPANPSP_CORPUS_HPP
#define SPANPSP_CORPUS_HPP

// Corpus loading and the seeded synthetic corpus generator.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spanpsp/config.hpp"
#include "spanpsp/prosody.hpp"
#include "spanpsp/text_format.hpp"
#include "spanpsp/utf8.hpp"

namespace spanpsp {

struct CorpusEntry {
  std::size_t line = 0;  // 1-based line in the source
  BoundarySequence sequence;
  ProsodicTree tree;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct LoadReport {
  std::vector<CorpusEntry> entries;
  std::vector<LineError> errors;
  std::size_t normalized = 0;  // lines whose final #3 was added or upgraded

  std::vector<BoundarySequence> sequences() const {
    std::vector<BoundarySequence> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.sequence);
    return out;
  }

  std::string summary() const {
    std::string out = "loaded " + std::to_string(entries.size()) + " sentences, " + std::to_string(errors.size()) +
                      " rejected, " + std::to_string(normalized) + " normalized\n";
    for (const auto& e : errors) out += "  line " + std::to_string(e.line) + ": " + e.message + "\n";
    return out;
  }
};

/// Parses one sentence per line. Blank lines are skipped; a bad line is
/// recorded in the report and loading continues.
inline LoadReport load_corpus(std::istream& in) {
  LoadReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      bool blank = true;
      for (char32_t c : utf8::decode(line)) blank = blank && utf8::is_space(c);
      if (blank) continue;
      ParsedLine parsed = parse_sequence_line(line);
      ProsodicTree tree = sequence_to_tree(parsed.sequence);
      const auto check = validate_tree(tree);
      if (!check.ok()) throw Error(check.summary());
      if (parsed.normalized) ++report.normalized;
      report.entries.push_back({line_no, std::move(parsed.sequence), std::move(tree)});
    } catch (const Error& e) {
      report.errors.push_back({line_no, e.what()});
    }
  }
  return report;
}

inline LoadReport load_corpus_text(const std::string& text) {
  std::istringstream in(text);
  return load_corpus(in);
}

inline LoadReport load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path);
  return load_corpus(in);
}

inline void write_corpus(const std::string& path, const std::vector<BoundarySequence>& sentences) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& s : sentences) out << format_sequence_line(s) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct IntRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_sentences = 1000;
  std::u32string filler = U"abcdefghijklmnopqrst";
  std::u32string cues_pw = U"W";   // placed at the end of a PW that ends no PPH
  std::u32string cues_pph = U"P";  // at the end of a PPH that ends no IPH
  std::u32string cues_iph = U"I";  // at the end of an IPH
  IntRange iph_per_sentence{1, 4};
  IntRange pph_per_iph{1, 3};
  IntRange pw_per_pph{1, 3};
  IntRange chars_per_pw{1, 4};
  double cue_strength = 1.0;
  // When positive, PW fillers are drawn from a fixed lexicon of this many
  // filler words, so word identity carries boundary information in context.
  std::size_t lexicon_size = 200;

  std::size_t max_sentence_length() const {
    return iph_per_sentence.max * pph_per_iph.max * pw_per_pph.max * chars_per_pw.max;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{
        "seed", "n_sentences", "filler", "cues_pw", "cues_pph", "cues_iph",
        "iph_per_sentence_min", "iph_per_sentence_max", "pph_per_iph_min", "pph_per_iph_max",
        "pw_per_pph_min", "pw_per_pph_max", "chars_per_pw_min", "chars_per_pw_max",
        "cue_strength", "lexicon_size"};
    return k;
  }

  static SynthConfig from(const KeyValueConfig& kv) {
    kv.require_known(keys());
    SynthConfig c;
    c.seed = kv.get_uint("seed", c.seed);
    c.n_sentences = kv.get_uint("n_sentences", c.n_sentences);
    if (kv.has("filler")) c.filler = utf8::decode(kv.get_string("filler", ""));
    if (kv.has("cues_pw")) c.cues_pw = utf8::decode(kv.get_string("cues_pw", ""));
    if (kv.has("cues_pph")) c.cues_pph = utf8::decode(kv.get_string("cues_pph", ""));
    if (kv.has("cues_iph")) c.cues_iph = utf8::decode(kv.get_string("cues_iph", ""));
    auto range = [&kv](const std::string& name, IntRange fallback) {
      return IntRange{kv.get_uint(name + "_min", fallback.min), kv.get_uint(name + "_max", fallback.max)};
    };
    c.iph_per_sentence = range("iph_per_sentence", c.iph_per_sentence);
    c.pph_per_iph = range("pph_per_iph", c.pph_per_iph);
    c.pw_per_pph = range("pw_per_pph", c.pw_per_pph);
    c.chars_per_pw = range("chars_per_pw", c.chars_per_pw);
    c.cue_strength = kv.get_double("cue_strength", c.cue_strength);
    c.lexicon_size = kv.get_uint("lexicon_size", c.lexicon_size);
    return c;
  }

  void check() const {
    if (filler.empty()) throw Error("synthetic corpus needs at least one filler character");
    if (cues_pw.empty() || cues_pph.empty() || cues_iph.empty()) throw Error("every level needs a cue character");
    for (const IntRange& r : {iph_per_sentence, pph_per_iph, pw_per_pph, chars_per_pw}) {
      if (r.min == 0 || r.min > r.max) throw Error("branching ranges must satisfy 1 <= min <= max");
    }
    if (cue_strength < 0.0 || cue_strength > 1.0) throw Error("cue_strength must be in [0, 1]");
    std::u32string all = filler + cues_pw + cues_pph + cues_iph;
    for (char32_t c : all) {
      if (utf8::is_space(c) || c == U'#') throw Error("whitespace and '#' cannot be corpus characters");
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
      throw Error("filler and cue characters must all be distinct");
    }
  }
};

/// Samples sentences top-down: IPHs, PPHs per IPH, PWs per PPH, characters
/// per PW, each count uniform in its range. With probability cue_strength the
/// last character of a PW is replaced by a cue for the highest level that
/// ends there.
inline std::vector<BoundarySequence> generate(const SynthConfig& config) {
  config.check();
  std::mt19937_64 rng(config.seed);
  auto draw = [&rng](IntRange r) { return std::uniform_int_distribution<std::size_t>(r.min, r.max)(rng); };
  auto pick = [&rng](const std::u32string& pool) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };

  // lexicon[len] holds filler words of that length
  std::vector<std::vector<std::u32string>> lexicon(config.chars_per_pw.max + 1);
  if (config.lexicon_size > 0) {
    const std::size_t lengths = config.chars_per_pw.max - config.chars_per_pw.min + 1;
    for (std::size_t len = config.chars_per_pw.min; len <= config.chars_per_pw.max; ++len) {
      const std::size_t words = std::max<std::size_t>(1, config.lexicon_size / lengths);
      for (std::size_t w = 0; w < words; ++w) {
        std::u32string word;
        for (std::size_t c = 0; c < len; ++c) word.push_back(pick(config.filler));
        lexicon[len].push_back(std::move(word));
      }
    }
  }

  std::bernoulli_distribution cue(config.cue_strength);
  std::vector<BoundarySequence> out;
  out.reserve(config.n_sentences);
  for (std::size_t s = 0; s < config.n_sentences; ++s) {
    BoundarySequence seq;
    const std::size_t iphs = draw(config.iph_per_sentence);
    for (std::size_t a = 0; a < iphs; ++a) {
      const std::size_t pphs = draw(config.pph_per_iph);
      for (std::size_t b = 0; b < pphs; ++b) {
        const std::size_t pws = draw(config.pw_per_pph);
        for (std::size_t c = 0; c < pws; ++c) {
          const std::size_t len = draw(config.chars_per_pw);
          std::u32string word;
          if (config.lexicon_size > 0) {
            const auto& pool = lexicon[len];
            word = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
          } else {
            for (std::size_t k = 0; k < len; ++k) word.push_back(pick(config.filler));
          }
          Mark mark = Mark::PW;
          if (c + 1 == pws) mark = Mark::PPH;
          if (c + 1 == pws && b + 1 == pphs) mark = Mark::IPH;
          if (cue(rng)) {
            const auto& pool = mark == Mark::IPH ? config.cues_iph : mark == Mark::PPH ? config.cues_pph : config.cues_pw;
            word.back() = pick(pool);
          }
          for (std::size_t k = 0; k < word.size(); ++k) {
            seq.chars.push_back(word[k]);
            seq.marks.push_back(k + 1 == word.size() ? mark : Mark::None);
          }
        }
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

/// Sentence count, maximum and mean length, and constituent counts per level.
struct CorpusStats {
  std::size_t sentences = 0;
  std::size_t max_length = 0;
  double mean_length = 0.0;
  std::size_t pw = 0;
  std::size_t pph = 0;
  std::size_t iph = 0;

  std::string to_string() const {
    std::ostringstream out;
    out << "S_num = " << sentences << "\nS_max = " << max_length << "\nS_ave = " << mean_length
        << "\nPW_num = " << pw << "\nPPH_num = " << pph << "\nIPH_num = " << iph << "\n";
    return out.str();
  }
};

inline CorpusStats corpus_stats(const std::vector<BoundarySequence>& sentences) {
  CorpusStats stats;
  std::size_t total = 0;
  for (const auto& s : sentences) {
    ++stats.sentences;
    stats.max_length = std::max(stats.max_length, s.size());
    total += s.size();
    for (Mark m : s.marks) {
      if (mark_reaches(m, Level::PW)) ++stats.pw;
      if (mark_reaches(m, Level::PPH)) ++stats.pph;
      if (mark_reaches(m, Level::IPH)) ++stats.iph;
    }
  }
  stats.mean_length = stats.sentences == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(stats.sentences);
  return stats;
}

}  // namespace spanpsp

#endif  // SPANPSP_CORPUS_HPP
