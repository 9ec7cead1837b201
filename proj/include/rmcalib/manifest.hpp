#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmcalib/error.hpp"
#include "rmcalib/version.hpp"

namespace rmcalib {

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
inline std::string fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::ingest, "cannot open '" + path.string() + "' for digest");
    std::uint64_t hash = 0xcbf29ce484222325ull;
    char buffer[1 << 14];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 0x100000001b3ull;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

/// Provenance of one tool invocation; embedded in (or referenced by) every
/// emitted artifact. Deliberately carries no wall-clock timestamp so that
/// reruns with identical inputs produce byte-identical outputs.
struct RunManifest {
    std::string subcommand;
    std::map<std::string, std::string> parameters;
    std::vector<std::pair<std::string, std::string>> inputs; // (path, digest)
    std::string tool_version = std::string(kToolVersion);
    std::optional<std::uint64_t> seed;

    void add_input(const std::filesystem::path& path) {
        inputs.emplace_back(path.string(), fnv1a64_file(path));
    }

    nlohmann::json to_json() const {
        nlohmann::json obj;
        obj["type"] = "manifest";
        obj["tool"] = kToolName;
        obj["tool_version"] = tool_version;
        obj["subcommand"] = subcommand;
        obj["parameters"] = parameters;
        obj["inputs"] = nlohmann::json::array();
        for (const auto& [path, digest] : inputs)
            obj["inputs"].push_back({{"path", path}, {"fnv1a64", digest}});
        if (seed) obj["seed"] = *seed;
        return obj;
    }
};

} // namespace rmcalib
