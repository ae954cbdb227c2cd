#pragma once
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace adshot {

// Filesystem-level failures (unreadable path, short write).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input: bad magic, bad version, truncation, config-file syntax.
// `offset` is the byte offset at which parsing failed, when known.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg, std::size_t offset = 0)
        : std::runtime_error(msg), offset(offset) {}
    std::size_t offset = 0;
};

// Cache file was built for a different model (config/weight hash differs).
struct FingerprintMismatch : std::runtime_error {
    FingerprintMismatch(std::uint64_t expected, std::uint64_t found)
        : std::runtime_error("fingerprint mismatch: cache was built for a different model"),
          expected(expected), found(found) {}
    std::uint64_t expected = 0;
    std::uint64_t found = 0;
};

} // namespace adshot
