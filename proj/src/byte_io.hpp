#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "eretinex/error.hpp"

// Little-endian encode/decode helpers shared by the binary formats.
namespace eretinex::detail {

class ByteWriter {
  public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void i8(std::int8_t v) { buf_.push_back(static_cast<std::uint8_t>(v)); }
    void u16(std::uint16_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

    const std::vector<std::uint8_t>& data() const noexcept { return buf_; }
    std::vector<std::uint8_t>& data() noexcept { return buf_; }

  private:
    template <class U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
  public:
    ByteReader(const std::uint8_t* data, std::size_t size, std::string what)
        : data_(data), size_(size), what_(std::move(what)) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return size_ - pos_; }
    bool at_end() const noexcept { return pos_ == size_; }

    void expect_magic(std::string_view magic) {
        need(magic.size(), "magic");
        if (std::memcmp(data_ + pos_, magic.data(), magic.size()) != 0) {
            throw ParseError(ErrorCode::BadMagic, pos_,
                             what_ + ": expected magic \"" + std::string(magic) + "\"");
        }
        pos_ += magic.size();
    }
    std::string bytes(std::size_t n, const char* field) {
        need(n, field);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(const char* field) { return static_cast<std::uint8_t>(le<std::uint8_t>(field)); }
    std::int8_t i8(const char* field) { return static_cast<std::int8_t>(le<std::uint8_t>(field)); }
    std::uint16_t u16(const char* field) { return le<std::uint16_t>(field); }
    std::uint32_t u32(const char* field) { return le<std::uint32_t>(field); }
    float f32(const char* field) { return std::bit_cast<float>(le<std::uint32_t>(field)); }
    double f64(const char* field) { return std::bit_cast<double>(le<std::uint64_t>(field)); }

    void need(std::size_t n, const char* field) const {
        if (remaining() < n) {
            throw ParseError(ErrorCode::Truncated, pos_,
                             what_ + ": truncated while reading " + field);
        }
    }

  private:
    template <class U>
    U le(const char* field) {
        need(sizeof(U), field);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace eretinex::detail
