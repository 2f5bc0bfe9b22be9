#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "graphtok3d/matrix.hpp"
#include "graphtok3d/scene.hpp"

// Little-endian binary containers shared by the pipeline.
//
//   points file   "3DGP" u32 m, then m x 6 f32 (x y z r g b) row-major
//   feature file  "3DGF" u32 rows, u32 dim, then rows x dim f32
//   edge features "3DGF" u32 rows, u32 dim, then per row u32 src, u32 dst,
//                 dim f32
//
// Values are narrowed to f32 on write.
namespace graphtok3d::io {

std::vector<Point> read_points(std::istream& in, std::string_view source);
void write_points(std::ostream& out, std::span<const Point> points);
std::vector<Point> read_points_file(const std::filesystem::path& path);
void write_points_file(const std::filesystem::path& path, std::span<const Point> points);

Matrix read_matrix(std::istream& in, std::string_view source);
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);

struct EdgeFeatureTable {
    std::size_t dim = 0;
    std::map<EdgeKey, std::vector<double>> rows;
};

EdgeFeatureTable read_edge_features(std::istream& in, std::string_view source);
void write_edge_features(std::ostream& out, const EdgeFeatureTable& table);
EdgeFeatureTable read_edge_features_file(const std::filesystem::path& path);
void write_edge_features_file(const std::filesystem::path& path, const EdgeFeatureTable& table);

// Low-level helpers, also used by the checkpoint format.
void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
std::uint32_t read_u32(std::istream& in, std::string_view source);
float read_f32(std::istream& in, std::string_view source);
void expect_magic(std::istream& in, std::string_view magic, std::string_view source);

}  // namespace graphtok3d::io
