#pragma once

// Self-describing JSON documents for models and benchmark specs, plus the
// plain-text token line formats used by transcripts and references.

#include "ugsd/bench.hpp"
#include "ugsd/models.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ugsd {

nlohmann::ordered_json vocab_to_json(const Vocabulary& v);
Vocabulary vocab_from_json(const nlohmann::json& j);

// Model kinds: "ngram", "perturbed", "prompted", "table". Throws BadSnapshot
// on anything it cannot rebuild exactly.
nlohmann::ordered_json model_to_json(const LanguageModel& m);
ModelPtr model_from_json(const nlohmann::json& j);

void save_model(const LanguageModel& m, const std::filesystem::path& file);
ModelPtr load_model(const std::filesystem::path& file);

nlohmann::ordered_json spec_to_json(const BenchmarkSpec& s);
// Missing keys keep their defaults; unknown keys are rejected.
BenchmarkSpec spec_from_json(const nlohmann::json& j);

// "3 14 15 0": whitespace-separated token ids.
std::string format_tokens(std::span<const TokenId> ts);
// Throws Parse naming `lineno` on junk or an empty line.
TokenSeq parse_tokens(std::string_view line, std::size_t lineno);

// One line per candidate.
std::vector<TokenSeq> read_token_lines(const std::filesystem::path& file);
// One line per item; alternative references separated by '|'.
std::vector<std::vector<TokenSeq>> read_reference_lines(const std::filesystem::path& file);

std::string read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, std::string_view contents);

}  // namespace ugsd
