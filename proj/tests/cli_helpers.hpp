#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace ipa::testing {

inline std::filesystem::path temp_file(const std::string& stem) {
    static int counter = 0;
    return std::filesystem::temp_directory_path() /
           (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
}

struct CliResult {
    int exit_code = -1;
    nlohmann::json result;
    std::string stderr_text;
};

/// Run the built binary with the given arguments; JSON is captured through
/// --out, stderr through a redirect file.
inline CliResult run_cli(const std::string& args, bool parse_json = true) {
    CliResult r;
    const auto out = temp_file("ipa_out");
    const auto err = temp_file("ipa_err");
    std::ostringstream cmd;
    cmd << IPA_CLI_PATH << " " << args;
    if (parse_json) cmd << " --out " << out.string();
    cmd << " 2> " << err.string();
    const int status = std::system(cmd.str().c_str());
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (parse_json && std::filesystem::exists(out)) {
        std::ifstream f(out);
        try {
            r.result = nlohmann::json::parse(f);
        } catch (...) {
        }
        std::filesystem::remove(out);
    }
    if (std::filesystem::exists(err)) {
        std::ifstream f(err);
        std::stringstream ss;
        ss << f.rdbuf();
        r.stderr_text = ss.str();
        std::filesystem::remove(err);
    }
    return r;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace ipa::testing
