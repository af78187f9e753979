#pragma once

// Field serialization.
//
// CSV: one row per node (or element centroid): coordinates then value, all
// printed with 17 significant digits.
//
// Binary ("HMGF"), little-endian:
//   bytes  0..3   magic "HMGF"
//   bytes  4..5   uint16 version (1)
//   byte   6      uint8  dim
//   byte   7      uint8  flags (bit0: element-centered, bit1: periodic grid)
//   bytes  8..11  uint32 cells per axis
//   bytes 12..15  uint32 value count
// followed by one float64 domain length and the float64 values.

#include "errors.hpp"
#include "mesh.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace homoglab {

static_assert(std::endian::native == std::endian::little, "binary field dumps assume a little-endian host");

inline constexpr char kFieldMagic[4] = {'H', 'M', 'G', 'F'};
inline constexpr std::uint16_t kFieldVersion = 1;

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string field_to_csv(const Field& f)
{
    std::ostringstream os;
    os << (f.grid.dim == 1 ? "x,value\n" : "x,y,value\n");
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point p = f.centering == Centering::node ? f.grid.node_position(i) : f.grid.centroid(i);
        os << format_double(p[0]) << ',';
        if (f.grid.dim == 2)
            os << format_double(p[1]) << ',';
        os << format_double(f[i]) << '\n';
    }
    return os.str();
}

namespace detail {

template <class T>
void put(std::vector<char>& out, T v)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get(const std::vector<char>& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw ValidationError("binary dump: truncated input");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

inline void write_bytes(const std::string& path, const std::vector<char>& bytes)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw ConfigError("cannot open " + path + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<char> read_bytes(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ConfigError("cannot open " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace detail

inline std::vector<char> encode_field(const Field& f)
{
    std::vector<char> out(kFieldMagic, kFieldMagic + 4);
    detail::put<std::uint16_t>(out, kFieldVersion);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(f.grid.dim));
    const std::uint8_t flags = (f.centering == Centering::element ? 1u : 0u) | (f.grid.periodic ? 2u : 0u);
    detail::put<std::uint8_t>(out, flags);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.n));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.size()));
    detail::put<double>(out, f.grid.length);
    for (double v : f.values)
        detail::put<double>(out, v);
    return out;
}

inline Field decode_field(const std::vector<char>& in)
{
    if (in.size() < 16 || std::memcmp(in.data(), kFieldMagic, 4) != 0)
        throw ValidationError("binary dump: bad magic");
    std::size_t pos = 4;
    const auto version = detail::get<std::uint16_t>(in, pos);
    if (version != kFieldVersion)
        throw ValidationError("binary dump: unsupported version " + std::to_string(version));
    SpatialGrid g;
    g.dim = detail::get<std::uint8_t>(in, pos);
    const auto flags = detail::get<std::uint8_t>(in, pos);
    g.n = static_cast<int>(detail::get<std::uint32_t>(in, pos));
    const auto count = detail::get<std::uint32_t>(in, pos);
    g.length = detail::get<double>(in, pos);
    g.periodic = (flags & 2u) != 0;
    g.validate();
    std::vector<double> values(count);
    for (auto& v : values)
        v = detail::get<double>(in, pos);
    return Field(g, (flags & 1u) ? Centering::element : Centering::node, std::move(values));
}

inline void write_field(const std::string& path, const Field& f) { detail::write_bytes(path, encode_field(f)); }
inline Field read_field(const std::string& path) { return decode_field(detail::read_bytes(path)); }

} // namespace homoglab
