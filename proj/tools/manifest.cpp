#include "manifest.hpp"

#include "postdae/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

namespace postdae::cli {

namespace {
constexpr const char* kArtifactVersion = "0.1.0";
}

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for checksumming");
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw IoError("SHA-256 initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

RunManifest::RunManifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

nlohmann::json RunManifest::to_json() const
{
    auto files = [](const std::vector<std::filesystem::path>& paths) {
        auto arr = nlohmann::json::array();
        for (const auto& p : paths) {
            arr.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
        }
        return arr;
    };
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return {{"command", command_},  {"artifact_version", kArtifactVersion}, {"config", config_},
            {"seeds", seeds_},      {"inputs", files(inputs_)},           {"outputs", files(outputs_)},
            {"duration_seconds", seconds}};
}

void RunManifest::write(const std::filesystem::path& path) const
{
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << to_json().dump(2) << '\n';
}

} // namespace postdae::cli
