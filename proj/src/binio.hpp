#pragma once
#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "adshot/errors.hpp"

namespace adshot::detail {

// Little-endian binary writer/reader; the reader tracks its byte offset so
// truncation errors can name where parsing stopped.

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void f32_array(const std::vector<float>& src) {
        buf_.resize(src.size() * 4);
        for (std::size_t i = 0; i < src.size(); ++i) {
            const auto v = std::bit_cast<std::uint32_t>(src[i]);
            buf_[4 * i] = static_cast<unsigned char>(v);
            buf_[4 * i + 1] = static_cast<unsigned char>(v >> 8);
            buf_[4 * i + 2] = static_cast<unsigned char>(v >> 16);
            buf_[4 * i + 3] = static_cast<unsigned char>(v >> 24);
        }
        bytes(buf_.data(), buf_.size());
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
    std::vector<unsigned char> buf_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    std::size_t offset() const { return offset_; }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError("unexpected end of file at offset " + std::to_string(offset_),
                              offset_);
        }
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

    void f32_array(std::vector<float>& dst, std::size_t count) {
        buf_.resize(count * 4);
        bytes(buf_.data(), buf_.size());
        dst.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t v = static_cast<std::uint32_t>(buf_[4 * i]) |
                                    (static_cast<std::uint32_t>(buf_[4 * i + 1]) << 8) |
                                    (static_cast<std::uint32_t>(buf_[4 * i + 2]) << 16) |
                                    (static_cast<std::uint32_t>(buf_[4 * i + 3]) << 24);
            dst[i] = std::bit_cast<float>(v);
        }
    }

    bool at_eof() {
        return in_.peek() == std::ifstream::traits_type::eof();
    }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
    std::vector<unsigned char> buf_;
};

} // namespace adshot::detail
