#include "motionid/util.hpp"

#include <glob.h>
#include <sys/stat.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>

#include "motionid/errors.hpp"

namespace motionid {

std::string read_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError(path + ": " + std::strerror(errno));
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::string out;
    out.resize(size < 0 ? 0 : static_cast<size_t>(size));
    size_t got = out.empty() ? 0 : std::fread(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (got != out.size()) throw DataError(path + ": short read");
    return out;
}

void write_file(const std::string& path, std::string_view content) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError(path + ": " + std::strerror(errno));
    size_t put = content.empty() ? 0 : std::fwrite(content.data(), 1, content.size(), f);
    std::fclose(f);
    if (put != content.size()) throw DataError(path + ": short write");
}

std::string hex_u64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<std::string> glob_paths(const std::string& pattern) {
    glob_t g{};
    int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> out;
    if (rc == 0) {
        out.assign(g.gl_pathv, g.gl_pathv + g.gl_pathc);
    } else if (rc != GLOB_NOMATCH) {
        globfree(&g);
        throw DataError("glob failed for pattern: " + pattern);
    }
    globfree(&g);
    std::sort(out.begin(), out.end());
    return out;
}

void ensure_dir(const std::string& path) {
    std::string partial;
    for (size_t i = 0; i <= path.size(); ++i) {
        if (i == path.size() || path[i] == '/') {
            if (!partial.empty() && ::mkdir(partial.c_str(), 0755) != 0 && errno != EEXIST)
                throw DataError(partial + ": " + std::strerror(errno));
        }
        if (i < path.size()) partial += path[i];
    }
}

}  // namespace motionid
