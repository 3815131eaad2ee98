// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lcgen/cli.hpp"
#include "lcgen/heuristics.hpp"
#include "lcgen/metrics.hpp"
#include "test_util.hpp"

using namespace lcgen;
using lcgen::testing::slurp;
using lcgen::testing::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::vector<GenerationResult> load_results(const std::filesystem::path& p) {
  std::ifstream in(p);
  return read_results(in);
}

// Small model settings for fast end-to-end runs.
std::vector<std::string> small_model_flags() {
  return {"--d-model", "16", "--n-heads", "2", "--ffn-dim", "32", "--length-hidden", "16", "--batch-size", "8"};
}

}  // namespace

TEST_CASE("synth writes n lines deterministically") {
  TempDir dir("synth");
  const Run a = invoke({"synth", "--n", "100", "--seed", "7", "--out", (dir / "a.jsonl").string()});
  REQUIRE(a.code == cli::kOk);
  const Run b = invoke({"synth", "--n", "100", "--seed", "7", "--out", (dir / "b.jsonl").string()});
  REQUIRE(b.code == cli::kOk);
  const std::string text = slurp(dir / "a.jsonl");
  CHECK(count_lines(text) == 100);
  CHECK(text == slurp(dir / "b.jsonl"));
  CHECK(a.out == b.out);

  // The printed mean matches a recomputation from the written file.
  const Corpus corpus = load_corpus(dir / "a.jsonl", Split::train);
  const LengthStats stats = length_stats(corpus);
  const auto pos = a.out.find("mean=");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(a.out.substr(pos + 5)) == doctest::Approx(stats.mean).epsilon(1e-5));

  const Run split = invoke({"synth", "--n", "50", "--out", (dir / "tr.jsonl").string(), "--test-out",
                         (dir / "te.jsonl").string(), "--test-fraction", "0.2"});
  CHECK(split.code == cli::kOk);
  CHECK(count_lines(slurp(dir / "tr.jsonl")) == 40);
  CHECK(count_lines(slurp(dir / "te.jsonl")) == 10);

  CHECK(invoke({"synth", "--n", "5", "--out", "/proc/definitely/not/writable.jsonl"}).code != cli::kOk);
}

TEST_CASE("output root environment variable") {
  TempDir dir("root");
  ::setenv(cli::kOutputRootEnv, dir.path().c_str(), 1);
  const Run r = invoke({"synth", "--n", "3", "--out", "nested/c.jsonl"});
  ::unsetenv(cli::kOutputRootEnv);
  CHECK(r.code == cli::kOk);
  CHECK(std::filesystem::exists(dir / "nested/c.jsonl"));
  CHECK(cli::resolve_output("/abs/x") == std::filesystem::path("/abs/x"));
}

TEST_CASE("fit-heuristics") {
  TempDir dir("fit");
  {
    Corpus c;
    for (int i = 0; i < 3; ++i) c.examples.push_back(lcgen::testing::make_example("e" + std::to_string(i), "p", 10 + 10 * i));
    save_corpus(dir / "fx.jsonl", c);
  }
  const Run r = invoke({"fit-heuristics", "--corpus", (dir / "fx.jsonl").string(), "--kind", "average", "--out",
                     (dir / "avg.json").string()});
  REQUIRE(r.code == cli::kOk);
  const auto j = nlohmann::json::parse(slurp(dir / "avg.json"));
  CHECK(j.at("global_mean").get<double>() == 20.0);
  CHECK(LengthEstimator::load(dir / "avg.json").estimate(lcgen::testing::make_example("z", "q", 1)) == 20);

  CHECK(invoke({"fit-heuristics", "--corpus", (dir / "fx.jsonl").string(), "--kind", "bogus", "--out",
             (dir / "x.json").string()})
            .code == cli::kUsageError);

  invoke({"fit-heuristics", "--corpus", (dir / "fx.jsonl").string(), "--kind", "random", "--seed", "3", "--out",
       (dir / "r1.json").string()});
  invoke({"fit-heuristics", "--corpus", (dir / "fx.jsonl").string(), "--kind", "random", "--seed", "3", "--out",
       (dir / "r2.json").string()});
  CHECK(slurp(dir / "r1.json") == slurp(dir / "r2.json"));

  { std::ofstream empty(dir / "empty.jsonl"); }
  CHECK(invoke({"fit-heuristics", "--corpus", (dir / "empty.jsonl").string(), "--kind", "average", "--out",
             (dir / "e.json").string()})
            .code == cli::kDomainError);
  CHECK(invoke({"fit-heuristics", "--corpus", (dir / "missing.jsonl").string(), "--kind", "average", "--out",
             (dir / "e.json").string()})
            .code == cli::kUsageError);
}

TEST_CASE("key-value config parsing") {
  std::istringstream in("# comment\nstrategy = oracle_control\n\n epochs=3  # trailing\nlr = 0.01\n");
  const auto kv = cli::parse_key_values(in);
  CHECK(kv.size() == 3);
  CHECK(kv.at("strategy") == "oracle_control");
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("lr") == "0.01");
  std::istringstream bad("just words\n");
  CHECK_THROWS(cli::parse_key_values(bad));
}

TEST_CASE("train, generate, evaluate and plot end to end") {
  TempDir dir("e2e");
  REQUIRE(invoke({"synth", "--n", "60", "--seed", "2", "--out", (dir / "train.jsonl").string(), "--test-out",
               (dir / "test.jsonl").string()})
              .code == cli::kOk);
  {
    std::ofstream cfg(dir / "oracle.cfg");
    cfg << "strategy = oracle_control\ncorpus = " << (dir / "train.jsonl").string() << "\nout_dir = "
        << (dir / "oracle").string() << "\nepochs = 5\nseed = 4\n";
  }
  std::vector<std::string> args = {"train", "--config", (dir / "oracle.cfg").string(), "--epochs", "2"};
  for (const auto& f : small_model_flags()) args.push_back(f);
  const Run t = invoke(args);
  REQUIRE_MESSAGE(t.code == cli::kOk, t.err);
  CHECK(std::filesystem::exists(dir / "oracle/checkpoint.bin"));
  CHECK(std::filesystem::exists(dir / "oracle/vocab.txt"));
  // Flags win over the config file: two epochs, not five.
  const std::string log = slurp(dir / "oracle/trainlog.csv");
  CHECK(count_lines(log) == 1 + 2 * 6);
  {
    std::istringstream in(log);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      // epoch,step,L_gen,L_len,L_all,p: L_len is absent for oracle control.
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string c;
      while (std::getline(ss, c, ',')) cols.push_back(c);
      cols.resize(6);
      CHECK_FALSE(cols[2].empty());
      CHECK(cols[3].empty());
    }
  }

  const std::string ckpt = (dir / "oracle/checkpoint.bin").string();
  const std::string test = (dir / "test.jsonl").string();
  REQUIRE(invoke({"generate", "--checkpoint", ckpt, "--corpus", test, "--length-source", "oracle", "--out",
               (dir / "oracle.jsonl").string()})
              .code == cli::kOk);
  const Corpus refs = load_corpus(dir / "test.jsonl", Split::test);
  const auto oracle = load_results(dir / "oracle.jsonl");
  REQUIRE(oracle.size() == refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    CHECK(oracle[i].example_id == refs.examples[i].example_id);
    CHECK(oracle[i].desired_len == static_cast<int>(target_length(refs.examples[i])));
    CHECK_FALSE(oracle[i].predicted_len.has_value());
  }

  REQUIRE(invoke({"generate", "--checkpoint", ckpt, "--corpus", test, "--length-source", "predicted", "--out",
               (dir / "pred.jsonl").string()})
              .code == cli::kOk);
  for (const auto& r : load_results(dir / "pred.jsonl")) CHECK(r.predicted_len.has_value());

  REQUIRE(invoke({"fit-heuristics", "--corpus", (dir / "train.jsonl").string(), "--kind", "citing_paper", "--out",
               (dir / "cp.json").string()})
              .code == cli::kOk);
  REQUIRE(invoke({"generate", "--checkpoint", ckpt, "--corpus", test, "--estimator", (dir / "cp.json").string(), "--out",
               (dir / "cp.jsonl").string()})
              .code == cli::kOk);
  const auto est = LengthEstimator::load(dir / "cp.json");
  const auto cp = load_results(dir / "cp.jsonl");
  for (std::size_t i = 0; i < refs.size(); ++i) CHECK(cp[i].desired_len == est.estimate(refs.examples[i]));
  CHECK(invoke({"generate", "--checkpoint", ckpt, "--corpus", test, "--estimator", (dir / "none.json").string(), "--out",
             (dir / "x.jsonl").string()})
            .code == cli::kUsageError);

  for (const char* n : {"3", "9"})
    REQUIRE(invoke({"generate", "--checkpoint", ckpt, "--corpus", test, "--fixed", n, "--out",
                 (dir / (std::string("f") + n + ".jsonl")).string()})
                .code == cli::kOk);
  for (const auto& r : load_results(dir / "f3.jsonl")) CHECK(r.desired_len == 3);
  CHECK(invoke({"generate", "--checkpoint", ckpt, "--corpus", test, "--fixed", "0", "--out", (dir / "x.jsonl").string()})
            .code == cli::kDomainError);

  const Run ev = invoke({"evaluate", "--results", (dir / "oracle.jsonl").string(), "--references", test, "--out-dir",
                      (dir / "eval").string()});
  REQUIRE(ev.code == cli::kOk);
  const auto metrics = nlohmann::json::parse(slurp(dir / "eval/metrics.json"));
  CHECK(metrics.at("n").get<std::size_t>() == refs.size());
  CHECK(metrics.at("mae").is_null());
  std::ifstream hist_in(dir / "eval/histogram.csv");
  std::size_t total = 0;
  for (const auto& b : read_histogram_csv(hist_in)) total += b.count;
  CHECK(total == refs.size());

  const Run pl = invoke({"plot", "--histogram", (dir / "eval/histogram.csv").string(), "--out", (dir / "h.svg").string()});
  CHECK(pl.code == cli::kOk);
  CHECK(slurp(dir / "h.svg").find("<svg") == 0);
  CHECK(pl.out.find("total=" + std::to_string(refs.size())) != std::string::npos);
}

TEST_CASE("evaluate echo and errors") {
  TempDir dir("eval");
  const Corpus refs = synth_corpus(8, 5);
  Corpus test = refs;
  test.split = Split::test;
  save_corpus(dir / "refs.jsonl", test);
  {
    std::ofstream out(dir / "echo.jsonl");
    for (const auto& ex : refs.examples) {
      GenerationResult r;
      r.example_id = ex.example_id;
      r.text = ex.target_span;
      r.desired_len = static_cast<int>(target_length(ex));
      r.generated_len = target_length(ex);
      out << result_to_json(r) << '\n';
    }
    std::ofstream partial(dir / "partial.jsonl");
    GenerationResult r;
    r.example_id = "stranger";
    r.text = "x";
    r.desired_len = 1;
    r.generated_len = 1;
    partial << result_to_json(r) << '\n';
  }
  const Run ok = invoke({"evaluate", "--results", (dir / "echo.jsonl").string(), "--references",
                      (dir / "refs.jsonl").string(), "--out-dir", (dir / "out").string()});
  REQUIRE(ok.code == cli::kOk);
  const auto m = nlohmann::json::parse(slurp(dir / "out/metrics.json"));
  CHECK(m.at("rouge1_f").get<double>() == 1.0);
  CHECK(m.at("rouge2_f").get<double>() == 1.0);
  CHECK(m.at("rougeL_f").get<double>() == 1.0);
  CHECK(m.at("control_variance").get<double>() == 0.0);
  CHECK(slurp(dir / "out/histogram.csv") == "bin_lower,bin_upper,count\n0,5,8\n");

  CHECK(invoke({"evaluate", "--results", (dir / "missing.jsonl").string(), "--references", (dir / "refs.jsonl").string(),
             "--out-dir", (dir / "out").string()})
            .code == cli::kUsageError);
  CHECK(invoke({"evaluate", "--results", (dir / "partial.jsonl").string(), "--references", (dir / "refs.jsonl").string(),
             "--out-dir", (dir / "out").string()})
            .code == cli::kDomainError);
}

TEST_CASE("train config errors") {
  TempDir dir("cfg");
  invoke({"synth", "--n", "20", "--out", (dir / "c.jsonl").string()});
  const Run bad = invoke({"train", "--strategy", "vanilla_multitask", "--corpus", (dir / "c.jsonl").string(), "--out-dir",
                       (dir / "m").string(), "--lambda-g", "1.5"});
  CHECK(bad.code == cli::kDomainError);
  CHECK(bad.err.find("lambda_g") != std::string::npos);

  const Run heur = invoke({"train", "--strategy", "heuristic_control", "--corpus", (dir / "c.jsonl").string(),
                        "--out-dir", (dir / "m").string()});
  CHECK(heur.code == cli::kDomainError);
  CHECK(heur.err.find("heuristic_kind") != std::string::npos);

  {
    std::ofstream cfg(dir / "typo.cfg");
    cfg << "epochz = 3\n";
  }
  const Run typo = invoke({"train", "--config", (dir / "typo.cfg").string()});
  CHECK(typo.code == cli::kDomainError);
  CHECK(typo.err.find("epochz") != std::string::npos);

  const Run num = invoke({"train", "--corpus", (dir / "c.jsonl").string(), "--out-dir", (dir / "m").string(), "--epochs",
                       "three"});
  CHECK(num.code == cli::kDomainError);
  CHECK(num.err.find("epochs") != std::string::npos);

  CHECK(invoke({"train", "--config", (dir / "absent.cfg").string()}).code == cli::kUsageError);
  CHECK(invoke({"frobnicate"}).code == cli::kUsageError);
  CHECK(invoke({}).code == cli::kUsageError);
}

TEST_CASE("plot rendering") {
  TempDir dir("plot");
  {
    std::ofstream one(dir / "one.csv");
    one << "bin_lower,bin_upper,count\n0,5,4\n";
    std::ofstream bad(dir / "bad.csv");
    bad << "bin_lower,bin_upper,count\n0;5;4\n";
  }
  const Run r = invoke({"plot", "--histogram", (dir / "one.csv").string()});
  CHECK(r.code == cli::kOk);
  CHECK(count_lines(r.out) == 2);
  CHECK(r.out.find("bins=1 total=4") != std::string::npos);
  CHECK(invoke({"plot", "--histogram", (dir / "bad.csv").string()}).code == cli::kDomainError);

  const std::vector<HistogramBin> bins = {{-10, -5, 3}, {-5, 0, 0}, {0, 5, 9}};
  const std::string text = cli::render_histogram_text(bins);
  CHECK(text.find("bins=3 total=12") != std::string::npos);
  CHECK(cli::render_histogram_svg(bins).find("data-total=\"12\"") != std::string::npos);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = LCGEN_CLI_PATH;
  CHECK(std::system((bin + " evaluate --results /nonexistent --references /nonexistent --out-dir /tmp >/dev/null 2>&1").c_str()) != 0);
  const int status = std::system((bin + " --help >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(status) == 0);
  const int usage = std::system((bin + " fit-heuristics --kind nope >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(usage) == cli::kUsageError);
}
