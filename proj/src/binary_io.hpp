#pragma once

// Little-endian primitives shared by the basis and checkpoint formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kgcnn::detail {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename UInt>
void write_le(std::ostream& out, UInt value) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt read_le(std::istream& in) {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) {
        throw FormatError("unexpected end of file");
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        value |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return value;
}

inline void write_f64(std::ostream& out, double v) {
    write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& in) {
    return std::bit_cast<double>(read_le<std::uint64_t>(in));
}

inline void write_f64s(std::ostream& out, std::span<const double> values) {
    for (double v : values) {
        write_f64(out, v);
    }
}

inline std::vector<double> read_f64s(std::istream& in, std::size_t count) {
    std::vector<double> values(count);
    for (double& v : values) {
        v = read_f64(in);
    }
    return values;
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in || got != magic) {
        throw FormatError("bad magic, expected " + std::string(magic));
    }
}

inline void write_string(std::ostream& out, std::string_view s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const auto n = read_le<std::uint32_t>(in);
    if (n > (1u << 20)) {
        throw FormatError("string field too long");
    }
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) {
        throw FormatError("unexpected end of file");
    }
    return s;
}

}  // namespace kgcnn::detail
