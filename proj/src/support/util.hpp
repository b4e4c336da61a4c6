#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qkd {

// Workbench release version, embedded in every report so results can be
// traced back to the code that produced them.
inline constexpr const char* tool_version = "1.0.0";

// Error taxonomy for the whole workbench.  The C API and the CLI map these
// one-to-one onto status/exit codes, so keep the list append-only.
enum class errc {
    generic = 1,
    config_invalid = 2,
    missing_spectral_data = 3,
    abort_block = 4,
    unknown_metric = 5,
    duplicate_id = 6,
    io = 7,
    not_blinded = 8,
    intensity_order = 9,
};

class error : public std::runtime_error {
public:
    error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw error(code, msg); }

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io, "cannot open file for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) fail(errc::io, "read error on file: " + path);
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::io, "cannot open file for writing: " + path);
    out << content;
    if (!out.good()) fail(errc::io, "write error on file: " + path);
}

// FNV-1a 64-bit; used to stamp reports with a hash of the resolved config so
// that two reports generated from the same inputs can be compared cheaply.
inline uint64_t fnv1a64(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

} // namespace qkd
