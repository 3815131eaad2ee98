// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lcgen/error.hpp"

namespace lcgen {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'C', 'G', 'E', 'N', 'C', 'K', '1'};

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["ffn_dim"] = c.ffn_dim;
  j["vocab_size"] = c.vocab_size;
  j["max_src_len"] = c.max_src_len;
  j["max_tgt_len"] = c.max_tgt_len;
  j["dropout"] = c.dropout;
  j["length_hidden"] = c.length_hidden;
  j["length_head"] = "linear-tanh-linear";
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_src_len = j.at("max_src_len").get<std::size_t>();
  c.max_tgt_len = j.at("max_tgt_len").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.length_hidden = j.at("length_hidden").get<std::size_t>();
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  ModelParams params = ckpt.params;  // parameters() needs mutable access
  const auto list = params.parameters();

  nlohmann::ordered_json header;
  header["format"] = 1;
  header["strategy"] = ckpt.strategy;
  header["config"] = config_json(params.config);
  header["separate_length_encoder"] = params.length_encoder.has_value();
  header["vocab_hash"] = ckpt.vocab.hash();
  header["vocab"] = ckpt.vocab.tokens();
  nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
  for (const Param* p : list) shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  header["params"] = shapes;

  const std::string text = header.dump();
  const std::uint64_t size = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Param* p : list)
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(double)));
  if (!out) throw IoError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error("not a checkpoint file (bad magic)");
  std::uint64_t size = 0;
  if (!in.read(reinterpret_cast<char*>(&size), sizeof size) || size > (1u << 30))
    throw Error("corrupt checkpoint header");
  std::string text(size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(size))) throw Error("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.strategy = header.at("strategy").get<std::string>();
    ckpt.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
    if (ckpt.vocab.hash() != header.at("vocab_hash").get<std::uint64_t>())
      throw Error("checkpoint vocab does not match its recorded hash");
    const ModelConfig config = config_from_json(header.at("config"));
    ckpt.params = ModelParams::init(config, 0, header.at("separate_length_encoder").get<bool>());
    const auto list = ckpt.params.parameters();
    const auto& shapes = header.at("params");
    if (shapes.size() != list.size()) throw Error("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Param* p = list[i];
      if (shapes[i].at("name").get<std::string>() != p->name ||
          shapes[i].at("rows").get<Eigen::Index>() != p->value.rows() ||
          shapes[i].at("cols").get<Eigen::Index>() != p->value.cols())
        throw Error("checkpoint parameter '" + p->name + "' has an unexpected name or shape");
      if (!in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(double))))
        throw Error("truncated checkpoint weights");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid checkpoint header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace lcgen
