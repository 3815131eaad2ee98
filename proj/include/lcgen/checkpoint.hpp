// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "lcgen/corpus.hpp"
#include "lcgen/model.hpp"

namespace lcgen {

// A trained model plus everything needed to run it. On disk: the 8-byte magic
// "LCGENCK1", a little-endian u64 header size, a JSON header (config, strategy,
// vocab and its hash, parameter names and shapes) and then the raw IEEE-754
// doubles of every parameter in header order.
struct Checkpoint {
  ModelParams params;
  Vocab vocab;
  std::string strategy;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lcgen
