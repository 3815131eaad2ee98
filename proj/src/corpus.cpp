// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lcgen/error.hpp"
#include "lcgen/rng.hpp"

namespace lcgen {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(CitationType type) {
  return type == CitationType::dominant ? "dominant" : "reference";
}

CitationType parse_citation_type(std::string_view text) {
  if (text == "dominant") return CitationType::dominant;
  if (text == "reference") return CitationType::reference;
  throw SchemaError("unknown citation_type '" + std::string(text) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "dev") return Split::dev;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Tokenizer

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
      ++i;
      continue;
    }
    if (c == '[') {
      // Reserved spellings: "[" upper-case/underscore run "]".
      std::size_t j = i + 1;
      while (j < text.size() && (std::isupper(static_cast<unsigned char>(text[j])) || text[j] == '_'))
        ++j;
      if (j < text.size() && text[j] == ']' && j > i + 1) {
        flush();
        out.emplace_back(text.substr(i, j - i + 1));
        i = j + 1;
        continue;
      }
    }
    if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    word.push_back(static_cast<char>(c));
    ++i;
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

const std::vector<std::string>& Vocab::reserved_tokens() {
  static const std::vector<std::string> kReserved = {
      "[PAD]", "[UNK]", "[BOS]", "[EOS]", "[CLS]", std::string(kMaskToken), "[SEP]"};
  return kReserved;
}

Vocab::Vocab() : Vocab(reserved_tokens()) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& reserved = reserved_tokens();
  if (tokens_.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens_.begin()))
    throw Error("vocab must begin with the reserved tokens in id order");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw Error("duplicate vocab token '" + tokens_[i] + "'");
  }
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (!valid(id)) throw Error("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocab::encode(std::string_view text) const {
  TokenSequence seq;
  for (const auto& tok : tokenize(text)) seq.ids.push_back(id(tok));
  return seq;
}

std::string Vocab::decode(const TokenSequence& seq, bool skip_reserved) const {
  std::vector<std::string> words;
  for (TokenId id : seq.ids) {
    if (skip_reserved && id >= 0 && static_cast<std::size_t>(id) < kNumReserved && id != kUnk &&
        id != kMask)
      continue;
    words.push_back(token(id));
  }
  return detokenize(words);
}

std::uint64_t Vocab::hash() const {
  std::string joined;
  for (const auto& t : tokens_) {
    joined += t;
    joined.push_back('\n');
  }
  return fnv1a64(joined);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocab " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocab " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocab(std::move(tokens));
}

namespace {

template <typename F>
void for_each_text(const CitationExample& ex, F&& f) {
  f(ex.intro_text);
  f(ex.context_paragraph);
  for (const auto& m : ex.citation_marks) f(m);
  f(ex.cited_title);
  f(ex.cited_abstract);
  f(ex.target_span);
}

}  // namespace

Vocab build_vocab(const Corpus& corpus, std::size_t max_size) {
  if (max_size < Vocab::kNumReserved)
    throw Error("vocab max_size must be at least " + std::to_string(Vocab::kNumReserved));
  if (corpus.empty()) throw Error("cannot build a vocab from an empty corpus");

  const auto& reserved = Vocab::reserved_tokens();
  const std::set<std::string> reserved_set(reserved.begin(), reserved.end());
  std::map<std::string, std::size_t> freq;
  for (const auto& ex : corpus.examples)
    for_each_text(ex, [&](const std::string& text) {
      for (auto& tok : tokenize(text))
        if (!reserved_set.count(tok)) ++freq[std::move(tok)];
    });

  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens = reserved;
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocab(std::move(tokens));
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

const std::vector<std::string>& schema_keys() {
  static const std::vector<std::string> kKeys = {
      "example_id",     "citing_paper_id", "intro_text",     "context_paragraph", "citation_marks",
      "cited_title",    "cited_abstract",  "citation_type",  "target_span"};
  return kKeys;
}

std::size_t count_mask(std::string_view text) {
  std::size_t n = 0;
  for (const auto& tok : tokenize(text))
    if (tok == kMaskToken) ++n;
  return n;
}

std::string schema_message(const std::string& id, const std::string& field, const std::string& what) {
  return "example '" + id + "': field '" + field + "' " + what;
}

}  // namespace

void validate_example(const CitationExample& ex) {
  const std::size_t masks = count_mask(ex.context_paragraph);
  if (masks != 1)
    throw SchemaError(schema_message(ex.example_id, "context_paragraph",
                                     "must contain exactly one " + std::string(kMaskToken) +
                                         " (found " + std::to_string(masks) + ")"));
  if (ex.citation_marks.empty())
    throw SchemaError(schema_message(ex.example_id, "citation_marks", "must be non-empty"));
  if (tokenize(ex.target_span).empty())
    throw SchemaError(schema_message(ex.example_id, "target_span", "must be non-empty"));
}

CitationExample parse_example(std::string_view json_line) {
  const json obj = json::parse(json_line);  // parse_error propagates to caller
  if (!obj.is_object()) throw SchemaError("line is not a JSON object");

  std::string id = "<unknown>";
  if (auto it = obj.find("example_id"); it != obj.end() && it->is_string()) id = it->get<std::string>();

  for (const auto& key : schema_keys())
    if (!obj.contains(key)) throw SchemaError(schema_message(id, key, "is missing"));
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(schema_keys().begin(), schema_keys().end(), it.key()) == schema_keys().end())
      throw SchemaError(schema_message(id, it.key(), "is not part of the schema"));

  auto get_string = [&](const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw SchemaError(schema_message(id, key, "must be a string"));
    return v.get<std::string>();
  };

  CitationExample ex;
  ex.example_id = get_string("example_id");
  ex.citing_paper_id = get_string("citing_paper_id");
  ex.intro_text = get_string("intro_text");
  ex.context_paragraph = get_string("context_paragraph");
  const auto& marks = obj.at("citation_marks");
  if (!marks.is_array()) throw SchemaError(schema_message(id, "citation_marks", "must be an array"));
  for (const auto& m : marks) {
    if (!m.is_string())
      throw SchemaError(schema_message(id, "citation_marks", "must contain only strings"));
    ex.citation_marks.push_back(m.get<std::string>());
  }
  ex.cited_title = get_string("cited_title");
  ex.cited_abstract = get_string("cited_abstract");
  try {
    ex.citation_type = parse_citation_type(get_string("citation_type"));
  } catch (const SchemaError& e) {
    throw SchemaError(schema_message(id, "citation_type", e.what()));
  }
  ex.target_span = get_string("target_span");
  validate_example(ex);
  return ex;
}

std::string serialize_example(const CitationExample& ex) {
  ordered_json obj;
  obj["example_id"] = ex.example_id;
  obj["citing_paper_id"] = ex.citing_paper_id;
  obj["intro_text"] = ex.intro_text;
  obj["context_paragraph"] = ex.context_paragraph;
  obj["citation_marks"] = ex.citation_marks;
  obj["cited_title"] = ex.cited_title;
  obj["cited_abstract"] = ex.cited_abstract;
  obj["citation_type"] = std::string(to_string(ex.citation_type));
  obj["target_span"] = ex.target_span;
  return obj.dump();
}

Corpus read_corpus(std::istream& in, Split split) {
  Corpus corpus;
  corpus.split = split;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    CitationExample ex;
    try {
      ex = parse_example(line);
    } catch (const json::exception& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(ex.example_id).second)
      throw SchemaError("line " + std::to_string(line_no) + ": duplicate example_id '" +
                        ex.example_id + "'");
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  return read_corpus(in, split);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& ex : corpus.examples) out << serialize_example(ex) << '\n';
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus " + path.string());
  write_corpus(out, corpus);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Model input

ModelInput build_model_input(const CitationExample& ex, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 8) throw Error("max_len must be at least 8");

  auto ids = [&](std::string_view text) { return vocab.encode(text).ids; };
  std::vector<TokenId> intro = ids(ex.intro_text);
  std::vector<TokenId> context = ids(ex.context_paragraph);
  std::vector<TokenId> title = ids(ex.cited_title);
  std::vector<TokenId> abstract = ids(ex.cited_abstract);
  std::vector<TokenId> marks;
  for (std::size_t i = 0; i < ex.citation_marks.size(); ++i) {
    if (i) marks.push_back(Vocab::kSep);
    auto m = ids(ex.citation_marks[i]);
    marks.insert(marks.end(), m.begin(), m.end());
  }

  const std::size_t fixed = 1 + 4;  // CLS + segment separators
  std::size_t total = fixed + intro.size() + context.size() + marks.size() + title.size() + abstract.size();
  std::size_t truncated = 0;
  auto shrink = [&](std::vector<TokenId>& seg) {
    if (total <= max_len) return;
    const std::size_t drop = std::min(seg.size(), total - max_len);
    seg.resize(seg.size() - drop);
    total -= drop;
    truncated += drop;
  };
  shrink(intro);
  shrink(abstract);
  shrink(context);
  shrink(title);

  std::vector<TokenId> out;
  out.reserve(total);
  out.push_back(Vocab::kCls);
  auto append = [&](const std::vector<TokenId>& seg) { out.insert(out.end(), seg.begin(), seg.end()); };
  append(intro);
  out.push_back(Vocab::kSep);
  append(context);
  out.push_back(Vocab::kSep);
  append(marks);
  out.push_back(Vocab::kSep);
  append(title);
  out.push_back(Vocab::kSep);
  append(abstract);
  if (out.size() > max_len) {
    truncated += out.size() - max_len;
    out.resize(max_len);
  }
  return ModelInput{TokenSequence{std::move(out)}, truncated};
}

std::size_t target_length(const CitationExample& ex) {
  const std::size_t n = tokenize(ex.target_span).size();
  if (n == 0) throw Error("example '" + ex.example_id + "' has an empty target_span");
  return n;
}

std::size_t target_length(const CitationExample& ex, const Vocab&) { return target_length(ex); }

// ---------------------------------------------------------------------------
// Statistics

std::vector<HistogramBin> histogram(const std::vector<long>& values, long bin_width) {
  if (bin_width < 1) throw Error("histogram bin width must be >= 1");
  if (values.empty()) return {};
  auto bin_of = [&](long v) {
    long q = v / bin_width;
    if (v % bin_width != 0 && v < 0) --q;  // floor division
    return q;
  };
  long lo = bin_of(values.front()), hi = lo;
  for (long v : values) {
    lo = std::min(lo, bin_of(v));
    hi = std::max(hi, bin_of(v));
  }
  std::vector<HistogramBin> bins;
  for (long b = lo; b <= hi; ++b) bins.push_back({b * bin_width, (b + 1) * bin_width, 0});
  for (long v : values) ++bins[static_cast<std::size_t>(bin_of(v) - lo)].count;
  return bins;
}

LengthStats length_stats(const Corpus& corpus, long bin_width) {
  if (corpus.empty()) throw Error("length_stats on an empty corpus");
  std::vector<long> lengths;
  lengths.reserve(corpus.size());
  for (const auto& ex : corpus.examples) lengths.push_back(static_cast<long>(target_length(ex)));
  LengthStats s;
  s.n = lengths.size();
  const double sum = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (long l : lengths) ss += (static_cast<double>(l) - s.mean) * (static_cast<double>(l) - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(s.n));
  s.histogram = histogram(lengths, bin_width);
  return s;
}

LengthStats length_stats(const Corpus& corpus, const Vocab&, long bin_width) {
  return length_stats(corpus, bin_width);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct SynthWorld {
  std::vector<std::string> chain;  // chain words, successor = next index (cyclic)
  std::vector<std::string> filler;
  std::vector<std::string> surnames;
};

SynthWorld make_world(const SynthProfile& p, std::mt19937_64& gen) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u"};
  std::set<std::string> used;
  auto fresh_word = [&](std::size_t syllables) {
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[bounded(gen(), std::size(kOnsets))];
        w += kVowels[bounded(gen(), std::size(kVowels))];
      }
      if (used.insert(w).second) return w;
    }
  };
  SynthWorld world;
  for (std::size_t i = 0; i < p.chain_vocab; ++i) world.chain.push_back(fresh_word(3));
  for (std::size_t i = 0; i < p.filler_vocab; ++i) world.filler.push_back(fresh_word(2));
  for (std::size_t i = 0; i < p.surname_vocab; ++i) {
    std::string w = fresh_word(3);
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    world.surnames.push_back(w);
  }
  return world;
}

}  // namespace

Corpus synth_corpus(std::size_t n, std::uint64_t seed, const SynthProfile& p) {
  if (n == 0) throw Error("synth_corpus needs n >= 1");
  if (p.chain_vocab < 2 || p.filler_vocab < 1 || p.surname_vocab < 3 || p.citations_per_paper < 1 ||
      p.min_length < 1 || p.max_length < p.min_length || p.paper_mean_max < p.paper_mean_min ||
      p.within_paper_sd < 0.0)
    throw ConfigError("invalid synthetic profile");

  auto world_gen = make_stream(seed, "synth.world");
  const SynthWorld world = make_world(p, world_gen);
  auto gen = make_stream(seed, "synth.data");

  const std::size_t papers = (n + p.citations_per_paper - 1) / p.citations_per_paper;
  struct Paper {
    std::string id;
    double mean;
    std::string intro;
  };
  std::vector<Paper> paper_table;
  auto filler_words = [&](std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(world.filler[bounded(gen(), world.filler.size())]);
    return out;
  };
  std::uniform_real_distribution<double> mean_dist(p.paper_mean_min, p.paper_mean_max);
  for (std::size_t i = 0; i < papers; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "paper-%04zu", i);
    const double mean = mean_dist(gen);
    paper_table.push_back({buf, mean, detokenize(filler_words(p.intro_tokens)) + " ."});
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  Corpus corpus;
  corpus.split = Split::train;
  for (std::size_t i = 0; i < n; ++i) {
    const Paper& paper = paper_table[i % papers];
    CitationExample ex;
    char buf[32];
    std::snprintf(buf, sizeof buf, "ex-%06zu", i);
    ex.example_id = buf;
    ex.citing_paper_id = paper.id;
    ex.intro_text = paper.intro;

    const double raw = paper.mean + p.within_paper_sd * noise(gen);
    const int length = std::clamp(static_cast<int>(std::lround(raw)), p.min_length, p.max_length);

    // Longer spans tend to cite more papers.
    const double u = p.max_length > p.min_length
                         ? static_cast<double>(length - p.min_length) / (p.max_length - p.min_length)
                         : 0.0;
    std::size_t mark_count = 1;
    for (int t = 0; t < 2; ++t)
      if (unit_uniform(gen) < u) ++mark_count;
    std::vector<std::size_t> surname_ids;
    while (surname_ids.size() < mark_count) {
      const std::size_t s = bounded(gen(), world.surnames.size());
      if (std::find(surname_ids.begin(), surname_ids.end(), s) == surname_ids.end()) surname_ids.push_back(s);
    }
    std::vector<std::string> years;
    for (std::size_t s : surname_ids) {
      years.push_back(std::to_string(1995 + bounded(gen(), 29)));
      ex.citation_marks.push_back(world.surnames[s] + " et al. (" + years.back() + ")");
    }

    auto context = filler_words(p.context_tokens);
    context.insert(context.begin() + static_cast<long>(bounded(gen(), context.size() + 1)),
                   std::string(kMaskToken));
    ex.context_paragraph = detokenize(context) + " .";
    ex.cited_title = detokenize(filler_words(p.title_tokens));

    const std::size_t start = bounded(gen(), world.chain.size());
    auto abstract = filler_words(p.abstract_tokens);
    std::vector<std::string> phrase;
    for (std::size_t k = 0; k < p.key_phrase; ++k) phrase.push_back(world.chain[(start + k) % world.chain.size()]);
    abstract.insert(abstract.begin() + static_cast<long>(bounded(gen(), abstract.size() + 1)), phrase.begin(),
                    phrase.end());
    ex.cited_abstract = detokenize(abstract) + " .";

    std::vector<std::string> target = {world.surnames[surname_ids[0]], "et", "al", ".", "(", years[0], ")", "propose"};
    for (std::size_t k = 0; target.size() < static_cast<std::size_t>(length); ++k)
      target.push_back(world.chain[(start + k) % world.chain.size()]);
    target.resize(static_cast<std::size_t>(length));
    ex.target_span = detokenize(target);
    ex.citation_type = length > 25 ? CitationType::dominant : CitationType::reference;
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0) throw Error("test_fraction must lie in [0, 1]");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  auto gen = make_stream(seed, "split");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(gen(), i)]);
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(corpus.size())));
  Corpus train, test;
  train.split = Split::train;
  test.split = Split::test;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_test ? test : train).examples.push_back(corpus.examples[order[i]]);
  return {std::move(train), std::move(test)};
}

}  // namespace lcgen
