#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Shared plumbing: deterministic number formatting, file IO, content digests.

namespace motionid {

// Shortest representation that round-trips exactly. Used for every double we
// write, so identical values always produce identical bytes.
inline void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

inline std::string format_double(double v) {
    std::string s;
    append_double(s, v);
    return s;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// FNV-1a over raw bytes, for cache keys and forest/feature digests.
inline uint64_t fnv1a(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex_u64(uint64_t v);

// Expands a shell-style glob into a sorted list of paths.
std::vector<std::string> glob_paths(const std::string& pattern);

void ensure_dir(const std::string& path);

}  // namespace motionid
