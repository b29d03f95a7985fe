#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace CLI {
class App;
}

namespace lesionkit::cli {

// Bad command line or config file; maps to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigEntry {
    std::string key;
    std::string value;
    int line = 0;
};

// `key = value` lines; `#` starts a comment; values may be double-quoted.
std::vector<ConfigEntry> parse_config(std::string_view text);

// Rewrites the arguments that follow the subcommand name so that entries
// from `--config FILE` come first and explicit flags win. Keys must name a
// long option of `sub`.
std::vector<std::string> expand_config(const CLI::App& sub, const std::vector<std::string>& args);

// Every option of `sub` with its final value, in the config file format.
std::string resolved_config(const CLI::App& sub);

}  // namespace lesionkit::cli
