// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lcgen/corpus.hpp"

namespace lcgen::cli {

// Exit codes shared by every verb.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;

// Relative output paths resolve under this directory when it is set.
inline constexpr const char* kOutputRootEnv = "LCGEN_OUTPUT_ROOT";

// Verbs: synth, fit-heuristics, train, generate, evaluate, plot.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// `key = value` lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(std::istream& in);

std::filesystem::path resolve_output(const std::filesystem::path& path);

// One bar per bin, plus a trailer line "bins=<k> total=<sum of counts>".
std::string render_histogram_text(const std::vector<HistogramBin>& bins);
std::string render_histogram_svg(const std::vector<HistogramBin>& bins);

}  // namespace lcgen::cli
