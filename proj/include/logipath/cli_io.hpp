#pragma once

// Dataset files and the command-line surface.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "logipath/logic.hpp"

namespace logipath {

/// Effective configuration, echoed at the top of every artifact.
using ConfigEcho = std::map<std::string, std::string>;

/// ReClor-shaped records: {id_string, context, question, answers[4], label}.
/// Accepts a JSON array or JSON lines. A leading {"config": ...} header
/// record is skipped. `label` may be absent or null.
std::vector<Sample> parse_dataset(std::string_view text, const std::string& origin = "<input>");
std::vector<Sample> read_dataset(const std::filesystem::path& path);

nlohmann::ordered_json sample_to_json(const Sample& s);

/// `.jsonl` paths get JSON lines, anything else a JSON array. With a
/// non-empty `config`, a {"config": ...} record comes first.
void write_records(const std::filesystem::path& path, std::span<const nlohmann::ordered_json> records,
                   const ConfigEcho& config = {});
void write_dataset(const std::filesystem::path& path, std::span<const Sample> samples, const ConfigEcho& config = {});

/// Runs one subcommand. Exit codes: 0 success, 1 usage or validation error,
/// 2 anything else.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace logipath
