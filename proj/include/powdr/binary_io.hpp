#pragma once

// Little-endian byte encoding helpers shared by the PVOL and checkpoint codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "powdr/volume.hpp"

namespace powdr::bin {

static_assert(std::endian::native == std::endian::little, "byte codecs assume a little-endian host");

class Writer {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        const auto at = buf_.size();
        buf_.resize(at + sizeof(T));
        std::memcpy(buf_.data() + at, &value, sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_span(std::span<const T> values) {
        const auto at = buf_.size();
        buf_.resize(at + values.size_bytes());
        if (!values.empty()) std::memcpy(buf_.data() + at, values.data(), values.size_bytes());
    }

    void put_bytes(const void *p, std::size_t n) {
        const auto at = buf_.size();
        buf_.resize(at + n);
        std::memcpy(buf_.data() + at, p, n);
    }

    std::vector<std::uint8_t> take() { return std::move(buf_); }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(const char *field) {
        require(sizeof(T), field);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void get_span(std::span<T> out, const char *field) {
        require(out.size_bytes(), field);
        if (!out.empty()) std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }

    void get_bytes(void *out, std::size_t n, const char *field) {
        require(n, field);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    [[noreturn]] void fail(const std::string &what) const { throw FormatError(what, pos_); }
    [[noreturn]] void fail_at(const std::string &what, std::size_t offset) const { throw FormatError(what, offset); }

private:
    void require(std::size_t n, const char *field) const {
        if (remaining() < n) throw FormatError(std::string("truncated ") + field, pos_);
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace powdr::bin
