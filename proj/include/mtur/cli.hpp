#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mtur::cli {

/// Parses a configuration file body: either a JSON object or `key = value`
/// lines (blank lines and `#` comments ignored). Values of the text form stay
/// strings; each subcommand converts them to the type of its key.
nlohmann::json parse_config_text(std::string_view text);
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Runs one command line (args exclude the program name). Normal output goes
/// to `out`; diagnostics, the echoed configuration and errors to `err`.
/// Exit codes: 0 ok, 1 usage/config/dimension, 2 I/O, 3 numerical.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mtur::cli
