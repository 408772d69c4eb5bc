#ifndef SPANPSP_ENCODER_HPP
#define SPANPSP_ENCODER_HPP

// Character encoder: [BOS, c_1..c_n, EOS] is embedded, offset by sinusoidal
// positions and passed through post-norm Transformer blocks
// (self-attention -> add & norm -> feed-forward -> add & norm). Row k of the
// result for k = 0..n is the fencepost vector v_k; BOS supplies v_0.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spanpsp/checkpoint.hpp"
#include "spanpsp/tensor.hpp"
#include "spanpsp/utf8.hpp"

namespace spanpsp {

enum class EmbeddingSource { Learned, ExternalFile };

inline std::string to_string(EmbeddingSource source) {
  return source == EmbeddingSource::Learned ? "learned" : "external-file";
}

inline EmbeddingSource parse_embedding_source(const std::string& text) {
  if (text == "learned") return EmbeddingSource::Learned;
  if (text == "external-file") return EmbeddingSource::ExternalFile;
  throw Error("embedding source must be 'learned' or 'external-file', got '" + text + "'");
}

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t max_len = 160;  // tokens, BOS and EOS included
  EmbeddingSource embedding_source = EmbeddingSource::Learned;
  double dropout = 0.0;

  void check() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw Error("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                  std::to_string(n_heads) + ")");
    }
    if (d_ff == 0) throw Error("d_ff must be positive");
    if (max_len < 3) throw Error("max_len must allow at least one character");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0, 1)");
  }
};

/// Character to token id. Ids 0, 1, 2 are BOS, EOS and UNK.
class CharVocabulary {
 public:
  static constexpr std::size_t kBos = 0;
  static constexpr std::size_t kEos = 1;
  static constexpr std::size_t kUnk = 2;
  static constexpr std::size_t kSpecials = 3;

  CharVocabulary() = default;

  /// Distinct characters in first-seen order are assigned ids from 3 on.
  explicit CharVocabulary(std::u32string_view chars) {
    for (char32_t c : chars) {
      if (!ids_.count(c)) {
        ids_[c] = kSpecials + chars_.size();
        chars_.push_back(c);
      }
    }
  }

  std::size_t size() const { return kSpecials + chars_.size(); }
  const std::u32string& chars() const { return chars_; }

  std::optional<std::size_t> find(char32_t c) const {
    const auto it = ids_.find(c);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t id(char32_t c) const { return find(c).value_or(kUnk); }

  /// [BOS, ids..., EOS]; counts characters mapped to UNK.
  std::vector<std::size_t> tokens(std::u32string_view sentence, std::size_t* unknown = nullptr) const {
    std::vector<std::size_t> out;
    out.reserve(sentence.size() + 2);
    out.push_back(kBos);
    for (char32_t c : sentence) {
      const auto found = find(c);
      if (!found && unknown) ++*unknown;
      out.push_back(found.value_or(kUnk));
    }
    out.push_back(kEos);
    return out;
  }

 private:
  std::u32string chars_;
  std::map<char32_t, std::size_t> ids_;
};

/// Embedding table read from a text file: a `dim=<d>` header, then one line
/// per entry holding a character and d floats. Entries named `<bos>`,
/// `<eos>` and `<unk>` fill the special rows; missing specials stay zero.
struct ExternalEmbeddings {
  CharVocabulary vocab;
  ad::Tensor table;  // vocab.size() x dim
};

inline ExternalEmbeddings parse_external_embeddings(std::istream& in, const std::string& origin = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto start = line.find_first_not_of(" \t");
    if (line.compare(start, 4, "dim=") != 0) throw Error(origin + ":" + std::to_string(line_no) + ": expected 'dim=<d>' header");
    try {
      dim = std::stoul(line.substr(start + 4));
    } catch (const std::exception&) {
      throw Error(origin + ":" + std::to_string(line_no) + ": malformed dimension");
    }
    break;
  }
  if (dim == 0) throw Error(origin + ": missing or zero embedding dimension");

  std::u32string chars;
  std::vector<std::vector<double>> rows;
  std::vector<std::optional<std::vector<double>>> specials(CharVocabulary::kSpecials);
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    std::vector<double> values;
    std::string number;
    while (fields >> number) {
      try {
        values.push_back(std::stod(number));
      } catch (const std::exception&) {
        throw Error(origin + ":" + std::to_string(line_no) + ": malformed number '" + number + "'");
      }
    }
    if (values.size() != dim) {
      throw Error(origin + ":" + std::to_string(line_no) + ": row has " + std::to_string(values.size()) +
                  " values, expected " + std::to_string(dim));
    }
    if (key == "<bos>") specials[CharVocabulary::kBos] = std::move(values);
    else if (key == "<eos>") specials[CharVocabulary::kEos] = std::move(values);
    else if (key == "<unk>") specials[CharVocabulary::kUnk] = std::move(values);
    else {
      const auto decoded = utf8::decode(key);
      if (decoded.size() != 1) throw Error(origin + ":" + std::to_string(line_no) + ": entry '" + key + "' is not one character");
      if (chars.find(decoded[0]) != std::u32string::npos) {
        throw Error(origin + ":" + std::to_string(line_no) + ": duplicate entry '" + key + "'");
      }
      chars.push_back(decoded[0]);
      rows.push_back(std::move(values));
    }
  }
  ExternalEmbeddings out{CharVocabulary(chars), ad::Tensor({CharVocabulary::kSpecials + rows.size(), dim})};
  for (std::size_t s = 0; s < specials.size(); ++s) {
    if (specials[s]) std::copy(specials[s]->begin(), specials[s]->end(), out.table.row(s).begin());
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), out.table.row(CharVocabulary::kSpecials + r).begin());
  }
  return out;
}

inline ExternalEmbeddings load_external_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path);
  return parse_external_embeddings(in, path);
}

/// PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(p / 10000^(2i/d)).
inline ad::Tensor sinusoidal_positions(std::size_t max_len, std::size_t d_model) {
  ad::Tensor pe({max_len, d_model});
  for (std::size_t p = 0; p < max_len; ++p) {
    for (std::size_t k = 0; k < d_model; ++k) {
      const double rate = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(d_model));
      pe.at(p, k) = k % 2 == 0 ? std::sin(static_cast<double>(p) * rate) : std::cos(static_cast<double>(p) * rate);
    }
  }
  return pe;
}

struct BlockSlots {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln1_gain, ln1_bias;
  std::size_t ff_w1, ff_b1, ff_w2, ff_b2;
  std::size_t ln2_gain, ln2_bias;
};

/// Position of every encoder tensor within the model's parameter list.
struct EncoderSlots {
  std::size_t embedding = 0;
  std::vector<BlockSlots> blocks;
};

inline std::string block_prefix(std::size_t b) { return "encoder.block" + std::to_string(b) + "."; }

/// Appends freshly initialized encoder tensors to `params`. Matrices are
/// uniform in +-1/sqrt(fan_in), biases zero, norm gains one, and a learned
/// embedding table normal(0, 0.02). An external table is stored frozen.
template <typename Rng>
void init_encoder_params(const EncoderConfig& config, std::size_t vocab_size, const ad::Tensor* external_table,
                         Rng& rng, std::vector<NamedTensor>& params) {
  config.check();
  const std::size_t d = config.d_model;
  auto matrix = [&rng](std::size_t rows, std::size_t cols) {
    ad::Tensor t({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  if (external_table) {
    if (external_table->rows() != vocab_size || external_table->cols() != d) {
      throw Error("external embedding table " + ad::shape_string(external_table->shape()) + " does not match " +
                  std::to_string(vocab_size) + " tokens x d_model " + std::to_string(d));
    }
    params.push_back({"encoder.embedding", *external_table, false});
  } else {
    ad::Tensor table({vocab_size, d});
    std::normal_distribution<double> dist(0.0, 0.02);
    for (double& v : table.data()) v = dist(rng);
    params.push_back({"encoder.embedding", std::move(table), true});
  }
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    const std::string p = block_prefix(b);
    params.push_back({p + "attn.wq", matrix(d, d), true});
    params.push_back({p + "attn.bq", ad::Tensor({d}), true});
    params.push_back({p + "attn.wk", matrix(d, d), true});
    params.push_back({p + "attn.bk", ad::Tensor({d}), true});
    params.push_back({p + "attn.wv", matrix(d, d), true});
    params.push_back({p + "attn.bv", ad::Tensor({d}), true});
    params.push_back({p + "attn.wo", matrix(d, d), true});
    params.push_back({p + "attn.bo", ad::Tensor({d}), true});
    params.push_back({p + "ln1.gain", ad::Tensor({d}, 1.0), true});
    params.push_back({p + "ln1.bias", ad::Tensor({d}), true});
    params.push_back({p + "ffn.w1", matrix(config.d_ff, d), true});
    params.push_back({p + "ffn.b1", ad::Tensor({config.d_ff}), true});
    params.push_back({p + "ffn.w2", matrix(d, config.d_ff), true});
    params.push_back({p + "ffn.b2", ad::Tensor({d}), true});
    params.push_back({p + "ln2.gain", ad::Tensor({d}, 1.0), true});
    params.push_back({p + "ln2.bias", ad::Tensor({d}), true});
  }
}

inline std::size_t find_param(const std::vector<NamedTensor>& params, const std::string& name) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return i;
  }
  throw Error("model has no parameter '" + name + "'");
}

inline EncoderSlots locate_encoder(const EncoderConfig& config, const std::vector<NamedTensor>& params) {
  EncoderSlots slots;
  slots.embedding = find_param(params, "encoder.embedding");
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    const std::string p = block_prefix(b);
    auto at = [&](const char* name) { return find_param(params, p + name); };
    slots.blocks.push_back({at("attn.wq"), at("attn.bq"), at("attn.wk"), at("attn.bk"), at("attn.wv"),
                            at("attn.bv"), at("attn.wo"), at("attn.bo"), at("ln1.gain"), at("ln1.bias"),
                            at("ffn.w1"), at("ffn.b1"), at("ffn.w2"), at("ffn.b2"), at("ln2.gain"),
                            at("ln2.bias")});
  }
  return slots;
}

/// Fencepost vectors ((n+1) x d_model) for a token sequence [BOS, c.., EOS].
/// `dropout_rng` enables dropout when the config rate is positive.
inline ad::Var encode_on_tape(ad::Tape& tape, std::span<const ad::Var> p, const EncoderSlots& slots,
                              const EncoderConfig& config, std::span<const std::size_t> tokens,
                              const ad::Tensor& positions, std::mt19937_64* dropout_rng = nullptr) {
  if (tokens.size() < 3) throw Error("encoder needs at least one character");
  if (tokens.size() > config.max_len || tokens.size() > positions.rows()) {
    throw Error("sentence of " + std::to_string(tokens.size() - 2) + " characters exceeds max_len " +
                std::to_string(config.max_len) + " (BOS and EOS included)");
  }
  const std::size_t len = tokens.size();
  const std::size_t d = config.d_model;
  ad::Tensor pe({len, d});
  std::copy_n(positions.data().begin(), len * d, pe.data().begin());
  ad::Var x = ad::add(ad::embed_lookup(p[slots.embedding], tokens), tape.constant(std::move(pe)));

  auto maybe_dropout = [&](ad::Var v) {
    return dropout_rng && config.dropout > 0.0 ? ad::dropout(v, config.dropout, *dropout_rng) : v;
  };

  const std::size_t dk = d / config.n_heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (const auto& b : slots.blocks) {
    const ad::Var q = ad::add_row(ad::matmul_nt(x, p[b.wq]), p[b.bq]);
    const ad::Var k = ad::add_row(ad::matmul_nt(x, p[b.wk]), p[b.bk]);
    const ad::Var v = ad::add_row(ad::matmul_nt(x, p[b.wv]), p[b.bv]);
    std::vector<ad::Var> heads;
    heads.reserve(config.n_heads);
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      const ad::Var qh = ad::slice_cols(q, h * dk, dk);
      const ad::Var kh = ad::slice_cols(k, h * dk, dk);
      const ad::Var vh = ad::slice_cols(v, h * dk, dk);
      const ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dk));
      heads.push_back(ad::matmul(weights, vh));
    }
    const ad::Var attended = ad::add_row(ad::matmul_nt(ad::concat_cols(heads), p[b.wo]), p[b.bo]);
    x = ad::layer_norm(ad::add(x, maybe_dropout(attended)), p[b.ln1_gain], p[b.ln1_bias]);
    const ad::Var inner = ad::relu(ad::add_row(ad::matmul_nt(x, p[b.ff_w1]), p[b.ff_b1]));
    const ad::Var ff = ad::add_row(ad::matmul_nt(inner, p[b.ff_w2]), p[b.ff_b2]);
    x = ad::layer_norm(ad::add(x, maybe_dropout(ff)), p[b.ln2_gain], p[b.ln2_bias]);
  }
  return ad::slice_rows(x, 0, len - 1);
}

}  // namespace spanpsp

#endif  // SPANPSP_ENCODER_HPP
