#ifndef SPANPSP_MODEL_HPP
#define SPANPSP_MODEL_HPP

// Full prosodic structure model: encoder, span scorer and the decoding
// pipeline encode -> score -> decode -> repair -> boundary marks.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spanpsp/checkpoint.hpp"
#include "spanpsp/config.hpp"
#include "spanpsp/decoder.hpp"
#include "spanpsp/encoder.hpp"
#include "spanpsp/prosody.hpp"
#include "spanpsp/scorer.hpp"
#include "spanpsp/tensor.hpp"

namespace spanpsp {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t d_hidden = 128;
  std::string embedding_file;  // used when encoder.embedding_source is ExternalFile

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"d_model", "n_blocks", "n_heads", "d_ff", "d_hidden",
                                         "max_len", "embedding_source", "embedding_file", "dropout"};
    return k;
  }

  static ModelConfig from(const KeyValueConfig& kv) {
    ModelConfig c;
    c.encoder.d_model = kv.get_uint("d_model", c.encoder.d_model);
    c.encoder.n_blocks = kv.get_uint("n_blocks", c.encoder.n_blocks);
    c.encoder.n_heads = kv.get_uint("n_heads", c.encoder.n_heads);
    c.encoder.d_ff = kv.get_uint("d_ff", c.encoder.d_ff);
    c.encoder.max_len = kv.get_uint("max_len", c.encoder.max_len);
    c.encoder.embedding_source = parse_embedding_source(kv.get_string("embedding_source", "learned"));
    c.encoder.dropout = kv.get_double("dropout", c.encoder.dropout);
    c.d_hidden = kv.get_uint("d_hidden", c.d_hidden);
    c.embedding_file = kv.get_string("embedding_file", "");
    c.check();
    return c;
  }

  void write(KeyValueConfig& kv) const {
    kv.set("d_model", std::to_string(encoder.d_model));
    kv.set("n_blocks", std::to_string(encoder.n_blocks));
    kv.set("n_heads", std::to_string(encoder.n_heads));
    kv.set("d_ff", std::to_string(encoder.d_ff));
    kv.set("d_hidden", std::to_string(d_hidden));
    kv.set("max_len", std::to_string(encoder.max_len));
    kv.set("embedding_source", to_string(encoder.embedding_source));
    std::ostringstream dropout;
    dropout.precision(17);
    dropout << encoder.dropout;
    kv.set("dropout", dropout.str());
  }

  void check() const {
    encoder.check();
    if (d_hidden == 0) throw Error("d_hidden must be positive");
    if (encoder.embedding_source == EmbeddingSource::ExternalFile && embedding_file.empty()) {
      throw Error("embedding_source = external-file requires embedding_file");
    }
  }
};

struct EncodedSentence {
  ad::Tensor fenceposts;  // (n+1) x d_model

  std::size_t size() const { return fenceposts.rows() - 1; }
};

class Model {
 public:
  Model(ModelConfig config, CharVocabulary chars, LabelVocabulary labels, std::vector<NamedTensor> params)
      : config_(std::move(config)), chars_(std::move(chars)), labels_(std::move(labels)), params_(std::move(params)) {
    config_.encoder.check();
    encoder_slots_ = locate_encoder(config_.encoder, params_);
    w1_ = find_param(params_, "scorer.w1");
    z1_ = find_param(params_, "scorer.z1");
    w2_ = find_param(params_, "scorer.w2");
    z2_ = find_param(params_, "scorer.z2");
    scorer().check(config_.encoder.d_model, labels_);
    const auto& table = params_[encoder_slots_.embedding].value;
    if (table.rows() != chars_.size() || table.cols() != config_.encoder.d_model) {
      throw Error("embedding table " + ad::shape_string(table.shape()) + " does not match " +
                  std::to_string(chars_.size()) + " tokens x d_model " + std::to_string(config_.encoder.d_model));
    }
    positions_ = sinusoidal_positions(config_.encoder.max_len, config_.encoder.d_model);
  }

  /// Fresh parameters. With an external table, the character vocabulary and
  /// embeddings come from it and the table stays frozen.
  static Model initialize(const ModelConfig& config, CharVocabulary chars, std::uint64_t seed,
                          const ExternalEmbeddings* external = nullptr) {
    config.encoder.check();
    std::mt19937_64 rng(seed);
    const LabelVocabulary labels = LabelVocabulary::standard();
    std::vector<NamedTensor> params;
    if (external) chars = external->vocab;
    init_encoder_params(config.encoder, chars.size(), external ? &external->table : nullptr, rng, params);
    const std::size_t d = config.encoder.d_model, h = config.d_hidden, outputs = labels.size() - 1;
    auto matrix = [&rng](std::size_t rows, std::size_t cols) {
      ad::Tensor t({rows, cols});
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.data()) v = dist(rng);
      return t;
    };
    params.push_back({"scorer.w1", matrix(h, d), true});
    params.push_back({"scorer.z1", ad::Tensor({h}), true});
    params.push_back({"scorer.w2", matrix(outputs, h), true});
    params.push_back({"scorer.z2", ad::Tensor({outputs}), true});
    return Model(config, std::move(chars), labels, std::move(params));
  }

  const ModelConfig& config() const { return config_; }
  const CharVocabulary& chars() const { return chars_; }
  const LabelVocabulary& labels() const { return labels_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  std::vector<NamedTensor>& mutable_params() { return params_; }

  ScorerParams scorer() const {
    return {params_[w1_].value, params_[z1_].value, params_[w2_].value, params_[z2_].value};
  }

  /// One leaf per parameter; trainable tensors become gradient-carrying variables.
  std::vector<ad::Var> bind(ad::Tape& tape, bool with_gradients) const {
    std::vector<ad::Var> leaves;
    leaves.reserve(params_.size());
    for (const auto& p : params_) {
      leaves.push_back(with_gradients && p.trainable ? tape.variable(p.value) : tape.constant(p.value));
    }
    return leaves;
  }

  /// Same as bind() but with caller-supplied values, aligned with params().
  static std::vector<ad::Var> bind_values(ad::Tape& tape, std::span<const ad::Tensor> values, bool with_gradients) {
    std::vector<ad::Var> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) leaves.push_back(with_gradients ? tape.variable(v) : tape.constant(v));
    return leaves;
  }

  ad::Var fenceposts_on_tape(ad::Tape& tape, std::span<const ad::Var> leaves, std::span<const std::size_t> tokens,
                             std::mt19937_64* dropout_rng = nullptr) const {
    return encode_on_tape(tape, leaves, encoder_slots_, config_.encoder, tokens, positions_, dropout_rng);
  }

  /// Scorer output rows (spans x non-dummy labels) for a token sequence.
  ad::Var scores_on_tape(ad::Tape& tape, std::span<const ad::Var> leaves, std::span<const std::size_t> tokens,
                         std::mt19937_64* dropout_rng = nullptr) const {
    const ad::Var fence = fenceposts_on_tape(tape, leaves, tokens, dropout_rng);
    return score_rows(fence, leaves[w1_], leaves[z1_], leaves[w2_], leaves[z2_]);
  }

  std::vector<std::size_t> tokens(std::u32string_view sentence, std::size_t* unknown = nullptr) const {
    if (sentence.empty()) throw Error("empty sentence");
    if (sentence.size() + 2 > config_.encoder.max_len) {
      throw Error("sentence of " + std::to_string(sentence.size()) + " characters exceeds max_len " +
                  std::to_string(config_.encoder.max_len) + " (BOS and EOS included)");
    }
    return chars_.tokens(sentence, unknown);
  }

  EncodedSentence encode(std::u32string_view sentence) const {
    ad::Tape tape;
    const auto leaves = bind(tape, false);
    const auto toks = tokens(sentence);
    return {fenceposts_on_tape(tape, leaves, toks).value()};
  }

  ScoreChart chart(std::u32string_view sentence, std::size_t* unknown = nullptr) const {
    ad::Tape tape;
    const auto leaves = bind(tape, false);
    const auto toks = tokens(sentence, unknown);
    return chart_from_rows(scores_on_tape(tape, leaves, toks).value(), sentence.size(), labels_);
  }

  /// Decoded and repaired tree; always well-formed.
  ProsodicTree predict_tree(std::u32string_view sentence, std::size_t* unknown = nullptr) const {
    const ScoreChart c = chart(sentence, unknown);
    const DecodeResult decoded = decode(c);
    const ProsodicTree raw = derivation_tree(decoded.derivation, labels_);
    return repair_tree(raw);
  }

  BoundarySequence predict(std::u32string_view sentence, std::size_t* unknown = nullptr) const {
    return tree_to_sequence(predict_tree(sentence, unknown), std::u32string(sentence));
  }

  Checkpoint to_checkpoint() const {
    KeyValueConfig manifest;
    manifest.set("format", "spanpsp-model");
    config_.write(manifest);
    std::string label_text;
    for (const auto& l : labels_.labels()) {
      if (!label_text.empty()) label_text += ' ';
      label_text += l.to_string();
    }
    manifest.set("labels", label_text);
    manifest.set("chars", utf8::encode(chars_.chars()));
    return {manifest.to_text(), params_};
  }

  static Model from_checkpoint(const Checkpoint& ckpt) {
    const auto manifest = KeyValueConfig::parse(ckpt.manifest);
    if (manifest.get_string("format", "") != "spanpsp-model") throw Error("checkpoint manifest is not a model");
    KeyValueConfig model_keys;
    for (const auto& key : ModelConfig::keys()) {
      if (manifest.has(key)) model_keys.set(key, manifest.get_string(key, ""));
    }
    ModelConfig config;
    config.encoder.d_model = model_keys.get_uint("d_model", 0);
    config.encoder.n_blocks = model_keys.get_uint("n_blocks", 0);
    config.encoder.n_heads = model_keys.get_uint("n_heads", 0);
    config.encoder.d_ff = model_keys.get_uint("d_ff", 0);
    config.encoder.max_len = model_keys.get_uint("max_len", 0);
    config.encoder.embedding_source = parse_embedding_source(model_keys.get_string("embedding_source", "learned"));
    config.encoder.dropout = model_keys.get_double("dropout", 0.0);
    config.d_hidden = model_keys.get_uint("d_hidden", 0);

    std::vector<Label> labels;
    std::istringstream label_stream(manifest.get_string("labels", ""));
    std::string token;
    while (label_stream >> token) labels.push_back(Label::parse(token));
    return Model(config, CharVocabulary(utf8::decode(manifest.get_string("chars", ""))),
                 LabelVocabulary(std::move(labels)), ckpt.tensors);
  }

 private:
  ModelConfig config_;
  CharVocabulary chars_;
  LabelVocabulary labels_;
  std::vector<NamedTensor> params_;
  EncoderSlots encoder_slots_;
  std::size_t w1_ = 0, z1_ = 0, w2_ = 0, z2_ = 0;
  ad::Tensor positions_;
};

}  // namespace spanpsp

#endif  // SPANPSP_MODEL_HPP
