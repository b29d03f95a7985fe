#include "run_config.hpp"

#include "lesionkit/csv.hpp"

#include "CLI11.hpp"

#include <set>
#include <sstream>

namespace lesionkit::cli {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool needs_quotes(const std::string& v) {
    return v.empty() || v.find_first_of("#\" \t") != std::string::npos;
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::string_view text) {
    std::vector<ConfigEntry> out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;

        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key(trim(line.substr(0, eq)));
        std::string_view rest = trim(line.substr(eq + 1));
        std::string value;
        if (!rest.empty() && rest.front() == '"') {
            const auto close = rest.find('"', 1);
            if (close == std::string_view::npos) {
                throw UsageError("config line " + std::to_string(line_no) + ": unterminated quote");
            }
            value = std::string(rest.substr(1, close - 1));
            auto tail = trim(rest.substr(close + 1));
            if (!tail.empty() && tail.front() != '#') {
                throw UsageError("config line " + std::to_string(line_no) + ": text after closing quote");
            }
        } else {
            value = std::string(trim(rest.substr(0, rest.find('#'))));
        }
        if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
        out.push_back({std::move(key), std::move(value), line_no});
    }
    return out;
}

std::vector<std::string> expand_config(const CLI::App& sub, const std::vector<std::string>& args) {
    std::string config_path;
    std::vector<std::string> rest;
    std::set<std::string> given;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file");
            config_path = args[++i];
            continue;
        }
        if (a.rfind("--config=", 0) == 0) {
            config_path = a.substr(9);
            continue;
        }
        if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') - 2));
        rest.push_back(a);
    }
    if (config_path.empty()) return rest;

    std::string text;
    try {
        text = csv::read_file(config_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    std::vector<std::string> out;
    for (const auto& entry : parse_config(text)) {
        if (entry.key == "config" || entry.key == "help" || !sub.get_option_no_throw("--" + entry.key)) {
            throw UsageError("config line " + std::to_string(entry.line) + ": unknown key '" + entry.key + "' for " +
                             sub.get_name());
        }
        if (given.count(entry.key)) continue;
        out.push_back("--" + entry.key);
        out.push_back(entry.value);
    }
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

std::string resolved_config(const CLI::App& sub) {
    std::ostringstream out;
    out << "# lesionkit " << sub.get_name() << "\n";
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
        if (values.empty()) {
            if (opt->get_default_str().empty()) continue;
            values.push_back(opt->get_default_str());
        }
        for (const auto& v : values) out << name << " = " << (needs_quotes(v) ? "\"" + v + "\"" : v) << "\n";
    }
    return out.str();
}

}  // namespace lesionkit::cli
