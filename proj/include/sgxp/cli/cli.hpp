#pragma once

#include <chrono>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sgxp {

/// Output directory of one command. finish() writes config.json, report.json,
/// timestamps.json and files.manifest (every file below the root, sorted, one per line).
class RunDir {
public:
    explicit RunDir(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    /// Creates the parent directories.
    std::filesystem::path path(const std::string& relative) const;

    void write(const std::string& relative, std::string_view bytes) const;
    void write_json(const std::string& relative, const nlohmann::json& doc) const;
    void finish(const nlohmann::json& config, const nlohmann::json& report) const;

private:
    std::filesystem::path root_;
    std::chrono::system_clock::time_point started_;
};

/// Canonical JSON text of every artifact: two-space indent and a trailing newline.
std::string json_text(const nlohmann::json& doc);

/// Runs one subcommand. Exit codes: 0 success, 1 validation error, 2 runtime error.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sgxp
