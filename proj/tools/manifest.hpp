#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace postdae::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// One record per CLI invocation: resolved configuration, seeds, checksums
/// of every file read and written, and the wall-clock duration.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    void set_config(nlohmann::json config) { config_ = std::move(config); }
    void add_seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
    void add_input(const std::filesystem::path& path) { inputs_.push_back(path); }
    void add_output(const std::filesystem::path& path) { outputs_.push_back(path); }

    nlohmann::json to_json() const;
    /// Checksums are taken at write time.
    void write(const std::filesystem::path& path) const;

private:
    std::string command_;
    nlohmann::json config_ = nlohmann::json::object();
    nlohmann::json seeds_ = nlohmann::json::object();
    std::vector<std::filesystem::path> inputs_;
    std::vector<std::filesystem::path> outputs_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace postdae::cli
