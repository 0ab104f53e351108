#include "prilora/binary_io.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>

#include "prilora/errors.hpp"

namespace prilora::io {

namespace {

template <std::size_t N>
void write_le(std::ostream& out, std::uint64_t v) {
    std::array<char, N> bytes{};
    for (std::size_t i = 0; i < N; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    }
    out.write(bytes.data(), N);
}

template <std::size_t N>
std::uint64_t read_le(std::istream& in) {
    std::array<unsigned char, N> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), N);
    if (!in) throw FormatError("unexpected end of binary stream");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < N; ++i) {
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le<4>(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le<8>(out, v); }
void write_f64(std::ostream& out, double v) { write_le<8>(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(read_le<4>(in)); }
std::uint64_t read_u64(std::istream& in) { return read_le<8>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<8>(in)); }

std::string read_string(std::istream& in) {
    const auto n = read_u32(in);
    if (n > (1u << 20)) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw FormatError("unexpected end of binary stream");
    return s;
}

}  // namespace prilora::io
