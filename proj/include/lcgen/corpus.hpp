// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lcgen {

inline constexpr std::string_view kMaskToken = "[CITE_MASK]";

enum class CitationType { dominant, reference };

std::string_view to_string(CitationType type);
CitationType parse_citation_type(std::string_view text);

// One generation instance: the citing-paper context, the cited paper and the
// human-written citation span that the model should reproduce.
struct CitationExample {
  std::string example_id;
  std::string citing_paper_id;
  std::string intro_text;
  std::string context_paragraph;  // holds exactly one kMaskToken
  std::vector<std::string> citation_marks;
  std::string cited_title;
  std::string cited_abstract;
  CitationType citation_type = CitationType::dominant;
  std::string target_span;

  bool operator==(const CitationExample&) const = default;
};

enum class Split { train, dev, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Corpus {
  std::vector<CitationExample> examples;
  Split split = Split::train;

  bool empty() const { return examples.empty(); }
  std::size_t size() const { return examples.size(); }
};

using TokenId = std::int32_t;

struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t length() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

// Whitespace split with every ASCII punctuation character detached as its own
// token. Bracketed reserved spellings such as "[CITE_MASK]" stay whole.
std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(const std::vector<std::string>& tokens);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kCls = 4;
  static constexpr TokenId kMask = 5;
  static constexpr TokenId kSep = 6;
  static constexpr std::size_t kNumReserved = 7;

  static const std::vector<std::string>& reserved_tokens();

  // Reserved tokens only.
  Vocab();
  // `tokens` must start with the reserved tokens in id order and be unique.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(std::string_view token) const;
  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  bool valid(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  TokenSequence encode(std::string_view text) const;
  std::string decode(const TokenSequence& seq, bool skip_reserved = true) const;

  // Stable FNV-1a digest of the token list, used to pair checkpoints and vocabs.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Reserved tokens, then the max_size - 7 most frequent corpus tokens (ties
// lexicographic). Throws when max_size < 7.
Vocab build_vocab(const Corpus& corpus, std::size_t max_size);

// Parses one JSONL line. Throws SchemaError naming the example and field.
CitationExample parse_example(std::string_view json_line);
std::string serialize_example(const CitationExample& ex);
void validate_example(const CitationExample& ex);

Corpus load_corpus(const std::filesystem::path& path, Split split);
Corpus read_corpus(std::istream& in, Split split);
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

struct ModelInput {
  TokenSequence tokens;
  std::size_t truncated = 0;  // number of tokens dropped to fit max_len

  bool was_truncated() const { return truncated > 0; }
};

// [CLS] intro [SEP] context [SEP] mark_1 [SEP] ... mark_m [SEP] title [SEP]
// abstract. Over-long inputs lose intro tokens first, then abstract, then
// the context tail, then title; marks, separators and CLS go last.
ModelInput build_model_input(const CitationExample& ex, const Vocab& vocab,
                             std::size_t max_len);

// Token count of the target span under tokenize(), excluding BOS/EOS.
std::size_t target_length(const CitationExample& ex);
std::size_t target_length(const CitationExample& ex, const Vocab& vocab);

struct HistogramBin {
  long lower = 0;  // inclusive
  long upper = 0;  // exclusive
  std::size_t count = 0;

  bool operator==(const HistogramBin&) const = default;
};

// Contiguous bins of width `bin_width` from the lowest to the highest occupied
// bin; bin lower edges are multiples of bin_width.
std::vector<HistogramBin> histogram(const std::vector<long>& values, long bin_width);

struct LengthStats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<HistogramBin> histogram;
};

LengthStats length_stats(const Corpus& corpus, const Vocab& vocab, long bin_width = 5);
LengthStats length_stats(const Corpus& corpus, long bin_width = 5);

// Knobs of the synthetic citation world. Target lengths are drawn per paper
// from N(paper_mean, within_paper_sd) with paper_mean ~ U[mean_min, mean_max].
struct SynthProfile {
  std::size_t citations_per_paper = 8;
  double paper_mean_min = 14.0;
  double paper_mean_max = 52.0;
  double within_paper_sd = 2.5;
  int min_length = 10;
  int max_length = 60;
  std::size_t chain_vocab = 80;
  std::size_t filler_vocab = 60;
  std::size_t surname_vocab = 40;
  std::size_t intro_tokens = 8;
  std::size_t context_tokens = 8;
  std::size_t title_tokens = 4;
  std::size_t abstract_tokens = 8;
  std::size_t key_phrase = 3;
};

Corpus synth_corpus(std::size_t n, std::uint64_t seed, const SynthProfile& profile = {});

// Deterministic shuffle-and-cut into (train, test).
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction,
                                       std::uint64_t seed);

}  // namespace lcgen
