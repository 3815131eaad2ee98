// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "lcgen/checkpoint.hpp"
#include "lcgen/error.hpp"
#include "lcgen/heuristics.hpp"
#include "lcgen/metrics.hpp"
#include "lcgen/model.hpp"
#include "lcgen/training.hpp"

namespace lcgen::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw IoError(what + " not found: " + path.string());
}

fs::path prepare_output_file(const fs::path& path) {
  const fs::path resolved = resolve_output(path);
  if (resolved.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(resolved.parent_path(), ec);
    if (ec) throw IoError("cannot create " + resolved.parent_path().string() + ": " + ec.message());
  }
  return resolved;
}

fs::path prepare_output_dir(const fs::path& path) {
  const fs::path resolved = resolve_output(path);
  std::error_code ec;
  fs::create_directories(resolved, ec);
  if (ec) throw IoError("cannot create " + resolved.string() + ": " + ec.message());
  return resolved;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T result{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, result);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": cannot parse '" + value + "'");
  return result;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

struct TrainSetup {
  TrainConfig train;
  ModelConfig model;
  std::size_t vocab_size = 2000;
  fs::path corpus;
  fs::path out_dir;
};

TrainSetup apply_train_settings(const std::map<std::string, std::string>& kv) {
  TrainSetup s;
  for (const auto& [key, value] : kv) {
    if (key == "strategy") {
      try {
        s.train.strategy = parse_strategy(value);
      } catch (const Error& e) {
        throw ConfigError("strategy: " + std::string(e.what()));
      }
    } else if (key == "corpus") {
      s.corpus = value;
    } else if (key == "out_dir") {
      s.out_dir = value;
    } else if (key == "lambda_g") {
      s.train.lambda_g = parse_number<double>(key, value);
    } else if (key == "p0") {
      s.train.p0 = parse_number<double>(key, value);
    } else if (key == "k") {
      s.train.k = parse_number<double>(key, value);
    } else if (key == "epoch_origin") {
      s.train.epoch_origin = parse_number<int>(key, value);
    } else if (key == "epochs") {
      s.train.epochs = parse_number<std::size_t>(key, value);
    } else if (key == "batch_size") {
      s.train.batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "lr") {
      s.train.lr = parse_number<double>(key, value);
    } else if (key == "clip_norm") {
      s.train.clip_norm = parse_number<double>(key, value);
    } else if (key == "seed") {
      s.train.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "heuristic_kind") {
      try {
        s.train.heuristic_kind = parse_estimator_kind(value);
      } catch (const Error& e) {
        throw ConfigError("heuristic_kind: " + std::string(e.what()));
      }
    } else if (key == "generation_loss") {
      s.train.generation_loss = parse_bool(key, value);
    } else if (key == "vocab_size") {
      s.vocab_size = parse_number<std::size_t>(key, value);
    } else if (key == "d_model") {
      s.model.d_model = parse_number<std::size_t>(key, value);
    } else if (key == "n_layers") {
      s.model.n_layers = parse_number<std::size_t>(key, value);
    } else if (key == "n_heads") {
      s.model.n_heads = parse_number<std::size_t>(key, value);
    } else if (key == "ffn_dim") {
      s.model.ffn_dim = parse_number<std::size_t>(key, value);
    } else if (key == "max_src_len") {
      s.model.max_src_len = parse_number<std::size_t>(key, value);
    } else if (key == "max_tgt_len") {
      s.model.max_tgt_len = parse_number<std::size_t>(key, value);
    } else if (key == "dropout") {
      s.model.dropout = parse_number<double>(key, value);
    } else if (key == "length_hidden") {
      s.model.length_hidden = parse_number<std::size_t>(key, value);
    } else {
      throw ConfigError(key + ": unknown setting");
    }
  }
  if (s.corpus.empty()) throw ConfigError("corpus: required");
  if (s.out_dir.empty()) throw ConfigError("out_dir: required");
  if (s.vocab_size < Vocab::kNumReserved)
    throw ConfigError("vocab_size: must be >= " + std::to_string(Vocab::kNumReserved));
  s.train.validate();
  return s;
}

std::string format_stats(const LengthStats& stats) {
  std::ostringstream line;
  line << std::setprecision(6) << "n=" << stats.n << " mean=" << stats.mean << " stddev=" << stats.stddev
       << " bins=" << stats.histogram.size();
  return line.str();
}

// --- verbs ------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::string out;
  std::string test_out;
  double test_fraction = 0.2;
  long bin_width = 5;
  SynthProfile profile;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Corpus corpus = synth_corpus(a.n, a.seed, a.profile);
  if (a.test_out.empty()) {
    save_corpus(prepare_output_file(a.out), corpus);
    out << format_stats(length_stats(corpus, a.bin_width)) << '\n';
    return kOk;
  }
  const auto [train, test] = split_corpus(corpus, a.test_fraction, a.seed);
  save_corpus(prepare_output_file(a.out), train);
  save_corpus(prepare_output_file(a.test_out), test);
  out << "train " << format_stats(length_stats(train, a.bin_width)) << '\n';
  out << "test " << format_stats(length_stats(test, a.bin_width)) << '\n';
  return kOk;
}

struct FitArgs {
  std::string corpus;
  std::string kind;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  require_file(a.corpus, "corpus");
  const Corpus corpus = load_corpus(a.corpus, Split::train);
  if (corpus.examples.empty()) throw Error("corpus " + a.corpus + " is empty");
  const LengthEstimator est = LengthEstimator::fit(parse_estimator_kind(a.kind), corpus, a.seed);
  est.save(prepare_output_file(a.out));
  out << "kind=" << to_string(est.kind()) << " global_mean=" << std::setprecision(10) << est.global_mean() << '\n';
  return kOk;
}

struct TrainFlags {
  std::string config;
  std::map<std::string, std::optional<std::string>> overrides;
};

int cmd_train(const TrainFlags& a, std::ostream& out) {
  std::map<std::string, std::string> kv;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    std::ifstream in(a.config);
    kv = parse_key_values(in);
  }
  for (const auto& [key, value] : a.overrides)
    if (value) kv[key] = *value;
  const TrainSetup s = apply_train_settings(kv);

  require_file(s.corpus, "corpus");
  const Corpus corpus = load_corpus(s.corpus, Split::train);
  if (corpus.examples.empty()) throw Error("corpus " + s.corpus.string() + " is empty");
  const Vocab vocab = build_vocab(corpus, s.vocab_size);
  ModelConfig model = s.model;
  model.vocab_size = vocab.size();
  model.validate();

  const fs::path dir = prepare_output_dir(s.out_dir);
  vocab.save(dir / "vocab.txt");
  const std::string strategy(to_string(s.train.strategy));
  const fs::path ckpt_path = dir / "checkpoint.bin";
  auto on_epoch = [&](std::size_t epoch, const ModelParams& params, const TrainLog&) {
    save_checkpoint(ckpt_path, Checkpoint{params, vocab, strategy});
    out << "epoch " << epoch + 1 << "/" << s.train.epochs << " checkpoint written\n";
  };
  const TrainResult result = train(s.train, corpus, vocab, model, on_epoch);
  save_checkpoint(ckpt_path, Checkpoint{result.params, vocab, strategy});
  {
    std::ofstream log(dir / "trainlog.csv", std::ios::binary);
    if (!log) throw IoError("cannot write " + (dir / "trainlog.csv").string());
    result.log.write_csv(log);
  }
  if (result.estimator) result.estimator->save(dir / "estimator.json");
  out << "strategy=" << strategy << " steps=" << result.log.records.size() << " out=" << dir.string() << '\n';
  return kOk;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string corpus;
  std::string length_source = "predicted";
  std::string estimator;
  int fixed = 0;
  std::string out;
  std::size_t max_steps = 0;
  std::size_t beam = 1;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.corpus, "corpus");
  std::optional<LengthEstimator> estimator;
  if (a.length_source == "estimator") {
    if (a.estimator.empty()) throw ConfigError("estimator: --estimator is required for length-source estimator");
    require_file(a.estimator, "estimator");
    estimator = LengthEstimator::load(a.estimator);
  }
  if (a.length_source == "fixed" && a.fixed < 1) throw ConfigError("fixed: --fixed must be >= 1");

  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Corpus corpus = load_corpus(a.corpus, Split::test);
  const ModelConfig& cfg = ckpt.params.config;
  const std::size_t limit = cfg.max_tgt_len - 1;
  const std::size_t max_steps = a.max_steps == 0 ? limit : std::min(a.max_steps, limit);
  const DecodeMode mode = a.beam > 1 ? DecodeMode::beam(a.beam) : DecodeMode::greedy();

  std::vector<GenerationResult> results;
  results.reserve(corpus.size());
  for (const auto& ex : corpus.examples) {
    const TokenSequence input = build_model_input(ex, ckpt.vocab, cfg.max_src_len).tokens;
    GenerationResult r;
    if (a.length_source == "predicted") {
      r = predict_and_generate(ckpt.params, ckpt.vocab, input, max_steps, mode);
    } else {
      int desired = a.fixed;
      if (a.length_source == "oracle") desired = static_cast<int>(target_length(ex));
      if (estimator) desired = estimator->estimate(ex);
      r = generate(ckpt.params, ckpt.vocab, input, desired, max_steps, mode);
    }
    r.example_id = ex.example_id;
    results.push_back(std::move(r));
  }
  const fs::path path = prepare_output_file(a.out);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  write_results(file, results);
  if (!file) throw IoError("write failed for " + path.string());

  double mean_len = 0.0;
  for (const auto& r : results) mean_len += static_cast<double>(r.generated_len);
  if (!results.empty()) mean_len /= static_cast<double>(results.size());
  out << "n=" << results.size() << " mean_generated_len=" << std::setprecision(6) << mean_len << '\n';
  return kOk;
}

struct EvaluateArgs {
  std::string results;
  std::string references;
  std::string out_dir;
  long bin_width = 5;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  require_file(a.results, "results");
  require_file(a.references, "references");
  std::ifstream in(a.results);
  const auto results = read_results(in);
  const Corpus refs = load_corpus(a.references, Split::test);
  const MetricsReport report = evaluate_run(results, refs, a.bin_width);
  const fs::path dir = prepare_output_dir(a.out_dir);
  write_text(dir / "metrics.json", report.to_json() + "\n");
  std::ostringstream csv;
  report.write_histogram_csv(csv);
  write_text(dir / "histogram.csv", csv.str());
  out << std::setprecision(6) << "n=" << report.n << " rouge1_f=" << report.rouge1_f
      << " rouge2_f=" << report.rouge2_f << " rougeL_f=" << report.rougeL_f
      << " control_variance=" << report.control_variance;
  if (report.mae) out << " mae=" << *report.mae;
  out << '\n';
  return kOk;
}

struct PlotArgs {
  std::string histogram;
  std::string out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  require_file(a.histogram, "histogram");
  std::ifstream in(a.histogram);
  const auto bins = read_histogram_csv(in);
  std::size_t total = 0;
  for (const auto& b : bins) total += b.count;
  if (a.out.empty()) {
    out << render_histogram_text(bins);
    return kOk;
  }
  const fs::path path = prepare_output_file(a.out);
  write_text(path, path.extension() == ".svg" ? render_histogram_svg(bins) : render_histogram_text(bins));
  out << "bins=" << bins.size() << " total=" << total << " out=" << path.string() << '\n';
  return kOk;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return kv;
}

fs::path resolve_output(const fs::path& path) {
  if (path.is_absolute()) return path;
  const char* root = std::getenv(kOutputRootEnv);
  if (root == nullptr || *root == '\0') return path;
  return fs::path(root) / path;
}

std::string render_histogram_text(const std::vector<HistogramBin>& bins) {
  std::size_t total = 0, peak = 0;
  for (const auto& b : bins) {
    total += b.count;
    peak = std::max(peak, b.count);
  }
  constexpr std::size_t kWidth = 50;
  std::ostringstream s;
  for (const auto& b : bins) {
    const std::size_t bar = peak == 0 ? 0 : (b.count * kWidth + peak - 1) / peak;
    char label[64];
    std::snprintf(label, sizeof(label), "[%5ld, %5ld) %8zu ", b.lower, b.upper, b.count);
    s << label << std::string(bar, '#') << '\n';
  }
  s << "bins=" << bins.size() << " total=" << total << '\n';
  return s.str();
}

std::string render_histogram_svg(const std::vector<HistogramBin>& bins) {
  std::size_t total = 0, peak = 0;
  for (const auto& b : bins) {
    total += b.count;
    peak = std::max(peak, b.count);
  }
  constexpr int kBar = 24, kHeight = 200, kMargin = 30;
  const int width = 2 * kMargin + kBar * static_cast<int>(bins.size());
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << kHeight + 2 * kMargin
    << "\" data-bins=\"" << bins.size() << "\" data-total=\"" << total << "\">\n";
  s << "<text x=\"" << kMargin << "\" y=\"18\" font-size=\"12\">Length difference in tokens</text>\n";
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& b = bins[i];
    const int h = peak == 0 ? 0 : static_cast<int>(static_cast<double>(b.count) * kHeight / static_cast<double>(peak));
    const int x = kMargin + kBar * static_cast<int>(i);
    s << "<rect x=\"" << x << "\" y=\"" << kMargin + kHeight - h << "\" width=\"" << kBar - 2 << "\" height=\"" << h
      << "\" fill=\"steelblue\" data-lower=\"" << b.lower << "\" data-upper=\"" << b.upper << "\" data-count=\""
      << b.count << "\"/>\n";
    s << "<text x=\"" << x << "\" y=\"" << kMargin + kHeight + 14 << "\" font-size=\"9\">" << b.lower << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Length-controlled citation text generation", "lcgen"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic citation corpus");
  s->add_option("--n", synth.n, "Number of examples");
  s->add_option("--seed", synth.seed, "Root seed");
  s->add_option("--out", synth.out, "Output JSONL (the train part when --test-out is given)")->required();
  s->add_option("--test-out", synth.test_out, "Also split off a test JSONL here");
  s->add_option("--test-fraction", synth.test_fraction, "Test share for --test-out")->check(CLI::Range(0.0, 1.0));
  s->add_option("--bin-width", synth.bin_width, "Histogram bin width for the stats line")->check(CLI::PositiveNumber);
  s->add_option("--citations-per-paper", synth.profile.citations_per_paper);
  s->add_option("--paper-mean-min", synth.profile.paper_mean_min);
  s->add_option("--paper-mean-max", synth.profile.paper_mean_max);
  s->add_option("--within-paper-sd", synth.profile.within_paper_sd);
  s->add_option("--min-length", synth.profile.min_length);
  s->add_option("--max-length", synth.profile.max_length);

  FitArgs fit;
  auto* f = app.add_subcommand("fit-heuristics", "Fit a statistical length estimator");
  f->add_option("--corpus", fit.corpus, "Training corpus JSONL")->required();
  f->add_option("--kind", fit.kind, "average | citation_marks | citing_paper | random")
      ->required()
      ->check(CLI::IsMember({"average", "citation_marks", "citing_paper", "random"}));
  f->add_option("--seed", fit.seed, "Seed for the random estimator");
  f->add_option("--out", fit.out, "Estimator JSON")->required();

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "key = value config file");
  for (const char* key : {"strategy", "corpus", "out_dir", "lambda_g", "p0", "k", "epoch_origin", "epochs",
                          "batch_size", "lr", "clip_norm", "seed", "heuristic_kind", "generation_loss", "vocab_size",
                          "d_model", "n_layers", "n_heads", "ffn_dim", "max_src_len", "max_tgt_len", "dropout",
                          "length_hidden"}) {
    std::string flag(key);
    std::replace(flag.begin(), flag.end(), '_', '-');
    t->add_option("--" + flag, tr.overrides[key], "Overrides `" + std::string(key) + "` from the config");
  }

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate citation text for a corpus");
  g->add_option("--checkpoint", gen.checkpoint)->required();
  g->add_option("--corpus", gen.corpus)->required();
  g->add_option("--length-source", gen.length_source, "oracle | predicted | estimator | fixed")
      ->check(CLI::IsMember({"oracle", "predicted", "estimator", "fixed"}));
  g->add_option("--estimator", gen.estimator, "Estimator JSON (implies --length-source estimator)");
  g->add_option("--fixed", gen.fixed, "Fixed desired length (implies --length-source fixed)");
  g->add_option("--out", gen.out, "Results JSONL")->required();
  g->add_option("--max-steps", gen.max_steps, "Decoding step cap (0: decoder capacity)");
  g->add_option("--beam", gen.beam, "Beam size; 1 is greedy")->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score generation results");
  e->add_option("--results", ev.results)->required();
  e->add_option("--references", ev.references)->required();
  e->add_option("--out-dir", ev.out_dir)->required();
  e->add_option("--bin-width", ev.bin_width)->check(CLI::PositiveNumber);

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render a length-difference histogram");
  p->add_option("--histogram", pl.histogram, "histogram.csv from evaluate")->required();
  p->add_option("--out", pl.out, ".svg for an image, anything else for text; stdout when omitted");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    std::ostringstream help, error;
    const int code = app.exit(ex, help, error);
    out << help.str();
    err << error.str();
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (f->parsed()) return cmd_fit(fit, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (g->parsed()) {
      if (g->count("--estimator") > 0 && g->count("--length-source") == 0) gen.length_source = "estimator";
      if (g->count("--fixed") > 0 && g->count("--length-source") == 0) gen.length_source = "fixed";
      return cmd_generate(gen, out);
    }
    if (e->parsed()) return cmd_evaluate(ev, out);
    if (p->parsed()) return cmd_plot(pl, out);
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kDomainError;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kDomainError;
  }
  return kUsageError;
}

}  // namespace lcgen::cli
