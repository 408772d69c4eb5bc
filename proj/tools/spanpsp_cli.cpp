// spanpsp command-line tool: train, predict, eval, convert, gen, bench.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spanpsp/spanpsp.hpp"

namespace fs = std::filesystem;
using namespace spanpsp;

namespace {

constexpr const char* kOutDirEnv = "SPANPSP_OUT_DIR";

// Relative output paths land under $SPANPSP_OUT_DIR when it is set.
std::string output_path(const std::string& path) {
  fs::path p(path);
  if (const char* dir = std::getenv(kOutDirEnv); dir && *dir && p.is_relative()) p = fs::path(dir) / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p.string();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

LoadReport load_checked(const std::string& path, const std::string& role) {
  LoadReport report = load_corpus(path);
  for (const auto& e : report.errors) std::cerr << path << ":" << e.line << ": " << e.message << "\n";
  if (report.entries.empty()) throw Error(role + " corpus " + path + " has no valid sentences");
  return report;
}

struct Options {
  std::uint64_t seed = 1;
  bool seed_given = false;

  std::string config, train, dev, out;
  std::string model, in, pred, gold, mode;
  bool exact_marks = false;
  std::string lengths = "40,80";
  std::size_t trials = 20;
};

int run_train(const Options& opt) {
  const KeyValueConfig kv = KeyValueConfig::load(opt.config);
  std::set<std::string> allowed = ModelConfig::keys();
  allowed.insert(TrainConfig::keys().begin(), TrainConfig::keys().end());
  kv.require_known(allowed);
  const ModelConfig model_config = ModelConfig::from(kv);
  TrainConfig train_config = TrainConfig::from(kv);
  if (opt.seed_given) train_config.seed = opt.seed;

  const LoadReport train_set = load_checked(opt.train, "training");
  const LoadReport dev_set = load_checked(opt.dev, "dev");
  std::cerr << "train: " << train_set.summary() << "dev: " << dev_set.summary();

  const auto train_seqs = train_set.sequences();
  const auto dev_seqs = dev_set.sequences();
  std::optional<ExternalEmbeddings> external;
  if (model_config.encoder.embedding_source == EmbeddingSource::ExternalFile) {
    external = load_external_embeddings(model_config.embedding_file);
  }
  const Model initial = Model::initialize(model_config, corpus_vocabulary(train_seqs), train_config.seed,
                                          external ? &*external : nullptr);

  const std::string dir = output_path(opt.out);
  fs::create_directories(dir);
  std::ofstream log = open_output((fs::path(dir) / "train.log").string());
  log << log_header() << "\n";
  std::cout << log_header() << std::endl;
  const TrainResult result = train(initial, train_seqs, dev_seqs, train_config, [&](const EpochLog& e) {
    const std::string line = format_log_line(e);
    log << line << std::endl;
    std::cout << line << std::endl;
    if (e.skipped_steps) std::cerr << "epoch " << e.epoch << ": skipped " << e.skipped_steps << " non-finite steps\n";
  });

  save_checkpoint((fs::path(dir) / "model.ckpt").string(), result.model.to_checkpoint());
  KeyValueConfig effective;
  model_config.write(effective);
  effective.set("seed", std::to_string(train_config.seed));
  std::ofstream(fs::path(dir) / "config.txt") << effective.to_text();

  const EvalReport report = evaluate_model(result.model, dev_seqs);
  std::ofstream(fs::path(dir) / "dev_eval.txt") << render_table(report) << render_key_values(report);
  std::cout << "best epoch " << result.best_epoch << (result.stopped_early ? " (early stop)" : "") << "\n"
            << render_table(report);
  return 0;
}

int run_predict(const Options& opt) {
  const Model model = Model::from_checkpoint(load_checkpoint(opt.model));
  std::ifstream in = open_input(opt.in);
  std::ofstream out = open_output(output_path(opt.out));
  std::string line;
  std::size_t line_no = 0, unknown = 0, rejected = 0, sentences = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::u32string chars;
    for (char32_t c : strip_marks(line)) {
      if (!utf8::is_space(c)) chars.push_back(c);
    }
    if (chars.empty()) {
      out << "\n";
      continue;
    }
    try {
      out << format_sequence_line(model.predict(chars, &unknown)) << "\n";
      ++sentences;
    } catch (const Error& e) {
      ++rejected;
      std::cerr << opt.in << ":" << line_no << ": rejected: " << e.what() << "\n";
      out << "\n";
    }
  }
  if (unknown) std::cerr << "warning: " << unknown << " unknown characters mapped to <unk>\n";
  std::cerr << "predicted " << sentences << " sentences, " << rejected << " rejected\n";
  return 0;
}

int run_eval(const Options& opt) {
  const LoadReport pred = load_corpus(opt.pred);
  const LoadReport gold = load_corpus(opt.gold);
  if (!pred.errors.empty()) throw Error(opt.pred + ":" + std::to_string(pred.errors.front().line) + ": " + pred.errors.front().message);
  if (!gold.errors.empty()) throw Error(opt.gold + ":" + std::to_string(gold.errors.front().line) + ": " + gold.errors.front().message);
  const EvalReport report = evaluate(pred.sequences(), gold.sequences(),
                                     opt.exact_marks ? CountingMode::ExactMark : CountingMode::Cumulative);
  std::cout << render_table(report) << render_key_values(report);
  return 0;
}

int run_convert(const Options& opt) {
  if (opt.mode != "tree-to-seq" && opt.mode != "seq-to-tree") {
    throw Error("--mode must be tree-to-seq or seq-to-tree, got '" + opt.mode + "'");
  }
  std::ifstream in = open_input(opt.in);
  std::ofstream out = open_output(output_path(opt.out));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      if (opt.mode == "seq-to-tree") {
        const ParsedLine parsed = parse_sequence_line(line);
        out << format_tree_line(parsed.sequence.chars, sequence_to_tree(parsed.sequence)) << "\n";
      } else {
        const TreeLine parsed = parse_tree_line(line);
        out << format_sequence_line(tree_to_sequence(parsed.tree, parsed.chars)) << "\n";
      }
    } catch (const Error& e) {
      throw Error(opt.in + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return 0;
}

int run_gen(const Options& opt) {
  SynthConfig config = SynthConfig::from(KeyValueConfig::load(opt.config));
  if (opt.seed_given) config.seed = opt.seed;
  const auto sentences = generate(config);
  const std::string path = output_path(opt.out);
  write_corpus(path, sentences);
  std::ofstream trees = open_output(path + ".trees");
  for (const auto& s : sentences) trees << format_tree_line(s.chars, sequence_to_tree(s)) << "\n";
  std::cout << corpus_stats(sentences).to_string();
  return 0;
}

int run_bench(const Options& opt) {
  std::vector<std::size_t> lengths;
  std::stringstream csv(opt.lengths);
  std::string item;
  while (std::getline(csv, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long value = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      lengths.push_back(value);
    } catch (const std::exception&) {
      throw Error("--lengths must be comma-separated integers, got '" + opt.lengths + "'");
    }
  }
  if (lengths.empty()) throw Error("--lengths is empty");
  const auto rows = bench_decode(lengths, opt.trials, opt.seed);
  std::cout << "n\ttrials\tmedian_ms\tmin_ms\n" << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    std::cout << r.n << "\t" << r.trials << "\t" << r.median_seconds * 1e3 << "\t" << r.min_seconds * 1e3 << "\n";
  }
  for (std::size_t k = 1; k < rows.size(); ++k) {
    std::cout << "ratio " << rows[k].n << "/" << rows[k - 1].n << " = " << std::setprecision(2)
              << rows[k].median_seconds / rows[k - 1].median_seconds << std::setprecision(4) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Span-based prosodic structure prediction"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--seed", opt.seed, "Seed for every random choice")
      ->each([&opt](const std::string&) { opt.seed_given = true; });
  app.footer(std::string("Relative output paths are placed under $") + kOutDirEnv + " when it is set.");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", opt.config, "key = value config file")->required();
  train->add_option("--train", opt.train, "Training corpus")->required();
  train->add_option("--dev", opt.dev, "Dev corpus")->required();
  train->add_option("--out", opt.out, "Output directory")->required();

  auto* predict = app.add_subcommand("predict", "Predict boundary marks for raw sentences");
  predict->add_option("--model", opt.model, "Checkpoint")->required();
  predict->add_option("--in", opt.in, "One raw sentence per line")->required();
  predict->add_option("--out", opt.out, "Output file")->required();

  auto* eval = app.add_subcommand("eval", "Score predictions against gold");
  eval->add_option("--pred", opt.pred, "Predicted corpus")->required();
  eval->add_option("--gold", opt.gold, "Gold corpus")->required();
  eval->add_flag("--exact-marks", opt.exact_marks, "Count each level only at its own mark");

  auto* convert = app.add_subcommand("convert", "Convert between boundary lines and tree lines");
  convert->add_option("--mode", opt.mode, "tree-to-seq or seq-to-tree")->required();
  convert->add_option("--in", opt.in, "Input file")->required();
  convert->add_option("--out", opt.out, "Output file")->required();

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen->add_option("--config", opt.config, "Synthetic corpus config")->required();
  gen->add_option("--out", opt.out, "Output corpus (tree lines go to <out>.trees)")->required();

  auto* bench = app.add_subcommand("bench", "Time the decoder on random charts");
  bench->add_option("--lengths", opt.lengths, "Comma-separated sentence lengths");
  bench->add_option("--trials", opt.trials, "Charts per length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return run_train(opt);
    if (*predict) return run_predict(opt);
    if (*eval) return run_eval(opt);
    if (*convert) return run_convert(opt);
    if (*gen) return run_gen(opt);
    if (*bench) return run_bench(opt);
  } catch (const std::exception& e) {
    std::cerr << "spanpsp: error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
