#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace surge::cli {

/// Runs one command line (argv[0] excluded). Returns the process exit code:
/// 0 success, 1 validation or runtime failure, 2 usage error.
int run(const std::vector<std::string>& args);

/// Written before any output of a command; makes a run directory self-describing.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> args;
    std::string config;  // key = value lines, may be empty
    std::string seed;
    std::string git_describe;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
    std::vector<std::string> outputs;

    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);
};

}  // namespace surge::cli
