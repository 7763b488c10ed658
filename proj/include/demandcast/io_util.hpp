#pragma once

// Small IO helpers shared by the artifact writers: content hashing for
// manifests, lossless double formatting, line splitting.

#include <chrono>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace demandcast {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline uint64_t fnv1a64(const char* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    for (size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}
inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
    return buf;
}

// Shortest text form that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, delim)) parts.push_back(cur);
    return parts;
}

inline void ensure_parent_dir(const std::string& path) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

inline std::ofstream open_out(const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}
inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

// Every stage artifact gets a sidecar manifest recording its inputs' content
// hashes, the seed and the tool version, so any run can be re-derived.
inline void write_manifest(const std::string& artifact_path, const std::vector<std::string>& input_paths,
                           uint64_t seed, const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    std::ofstream out = open_out(artifact_path + ".manifest");
    out << "artifact = " << std::filesystem::path(artifact_path).filename().string() << "\n";
    out << "version = demandcast-1\n";
    out << "seed = " << seed << "\n";
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    out << "timestamp_unix = " << std::chrono::duration_cast<std::chrono::seconds>(now).count() << "\n";
    for (const std::string& in_path : input_paths)
        out << "input " << std::filesystem::path(in_path).filename().string() << " = " << hex64(hash_file(in_path))
            << "\n";
    for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
}

}  // namespace demandcast
