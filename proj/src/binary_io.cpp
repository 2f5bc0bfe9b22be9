#include "graphtok3d/binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "graphtok3d/error.hpp"

namespace graphtok3d::io {
namespace {

std::string where(std::istream& in, std::string_view source) {
    in.clear();
    auto pos = in.tellg();
    std::string s(source);
    if (pos >= 0) s += " at byte " + std::to_string(static_cast<long long>(pos));
    return s;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    return out;
}

void expect_end(std::istream& in, std::string_view source) {
    if (in.peek() != std::char_traits<char>::eof())
        throw Error(ErrorKind::ParseError, "trailing bytes in " + where(in, source));
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(b.data(), b.size());
}

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t read_u32(std::istream& in, std::string_view source) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), b.size());
    if (in.gcount() != 4) throw Error(ErrorKind::ParseError, "truncated data in " + where(in, source));
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
}

float read_f32(std::istream& in, std::string_view source) {
    return std::bit_cast<float>(read_u32(in, source));
}

void expect_magic(std::istream& in, std::string_view magic, std::string_view source) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
        throw Error(ErrorKind::ParseError,
                    "bad magic (expected " + std::string(magic) + ") in " + where(in, source));
}

std::vector<Point> read_points(std::istream& in, std::string_view source) {
    expect_magic(in, "3DGP", source);
    const std::uint32_t m = read_u32(in, source);
    std::vector<Point> pts;
    pts.reserve(std::min<std::uint32_t>(m, 1u << 20));
    for (std::uint32_t i = 0; i < m; ++i) {
        Point p;
        p.x = read_f32(in, source);
        p.y = read_f32(in, source);
        p.z = read_f32(in, source);
        p.r = read_f32(in, source);
        p.g = read_f32(in, source);
        p.b = read_f32(in, source);
        pts.push_back(p);
    }
    expect_end(in, source);
    return pts;
}

void write_points(std::ostream& out, std::span<const Point> points) {
    out.write("3DGP", 4);
    write_u32(out, static_cast<std::uint32_t>(points.size()));
    for (const Point& p : points) {
        for (float v : {p.x, p.y, p.z, p.r, p.g, p.b}) write_f32(out, v);
    }
}

std::vector<Point> read_points_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_points(in, path.string());
}

void write_points_file(const std::filesystem::path& path, std::span<const Point> points) {
    auto out = open_out(path);
    write_points(out, points);
}

Matrix read_matrix(std::istream& in, std::string_view source) {
    expect_magic(in, "3DGF", source);
    const std::uint32_t rows = read_u32(in, source);
    const std::uint32_t dim = read_u32(in, source);
    Matrix m(rows, dim);
    for (double& v : m.values()) v = read_f32(in, source);
    return m;
}

void write_matrix(std::ostream& out, const Matrix& m) {
    out.write("3DGF", 4);
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) write_f32(out, static_cast<float>(v));
}

Matrix read_matrix_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    Matrix m = read_matrix(in, path.string());
    expect_end(in, path.string());
    return m;
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
    auto out = open_out(path);
    write_matrix(out, m);
}

EdgeFeatureTable read_edge_features(std::istream& in, std::string_view source) {
    expect_magic(in, "3DGF", source);
    const std::uint32_t rows = read_u32(in, source);
    EdgeFeatureTable table;
    table.dim = read_u32(in, source);
    for (std::uint32_t r = 0; r < rows; ++r) {
        const auto src = static_cast<ObjectId>(read_u32(in, source));
        const auto dst = static_cast<ObjectId>(read_u32(in, source));
        std::vector<double> values(table.dim);
        for (double& v : values) v = read_f32(in, source);
        if (!table.rows.emplace(EdgeKey{src, dst}, std::move(values)).second)
            throw Error(ErrorKind::ParseError, "duplicate edge (" + std::to_string(src) + "," +
                                                   std::to_string(dst) + ") in " + where(in, source));
    }
    return table;
}

void write_edge_features(std::ostream& out, const EdgeFeatureTable& table) {
    out.write("3DGF", 4);
    write_u32(out, static_cast<std::uint32_t>(table.rows.size()));
    write_u32(out, static_cast<std::uint32_t>(table.dim));
    for (const auto& [key, values] : table.rows) {
        if (values.size() != table.dim)
            throw Error(ErrorKind::ShapeError, "edge feature row width differs from table dim");
        write_u32(out, static_cast<std::uint32_t>(key.first));
        write_u32(out, static_cast<std::uint32_t>(key.second));
        for (double v : values) write_f32(out, static_cast<float>(v));
    }
}

EdgeFeatureTable read_edge_features_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    EdgeFeatureTable t = read_edge_features(in, path.string());
    expect_end(in, path.string());
    return t;
}

void write_edge_features_file(const std::filesystem::path& path, const EdgeFeatureTable& table) {
    auto out = open_out(path);
    write_edge_features(out, table);
}

}  // namespace graphtok3d::io
