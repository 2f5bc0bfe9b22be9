#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphtok3d/matrix.hpp"

namespace graphtok3d {

using ObjectId = int;
using Vec3 = std::array<double, 3>;
using EdgeKey = std::pair<ObjectId, ObjectId>;

// Identifier tokens come from a fixed table of this many rows.
inline constexpr std::size_t kMaxObjects = 200;

// One point of an object cloud: xyz in meters, rgb in [0, 1]. Stored at the
// precision of the on-disk point format.
struct Point {
    float x = 0, y = 0, z = 0;
    float r = 0, g = 0, b = 0;

    bool operator==(const Point&) const = default;
};

struct AxisAlignedBox {
    Vec3 min{};
    Vec3 max{};

    double volume() const;
    Vec3 extent() const;
    Vec3 center() const;
    bool contains(const Vec3& p) const;

    bool operator==(const AxisAlignedBox&) const = default;
};

Vec3 compute_centroid(std::span<const Point> points);
AxisAlignedBox compute_aabb(std::span<const Point> points);

// A segmented object. Construction validates the cloud and derives centroid
// and box; the value is immutable afterwards.
class ObjectProposal {
public:
    ObjectProposal(ObjectId id, std::vector<Point> points);

    ObjectId id() const noexcept { return id_; }
    const std::vector<Point>& points() const noexcept { return points_; }
    std::size_t point_count() const noexcept { return points_.size(); }
    const Vec3& centroid() const noexcept { return centroid_; }
    const AxisAlignedBox& aabb() const noexcept { return aabb_; }

    bool operator==(const ObjectProposal&) const = default;

private:
    ObjectId id_;
    std::vector<Point> points_;
    Vec3 centroid_;
    AxisAlignedBox aabb_;
};

class Scene {
public:
    // Sorts proposals by id and checks the scene-level invariants: at least
    // one object, at most kMaxObjects, ids unique and dense in [0, n).
    Scene(std::string scene_id, std::vector<ObjectProposal> proposals);

    const std::string& scene_id() const noexcept { return scene_id_; }
    const std::vector<ObjectProposal>& proposals() const noexcept { return proposals_; }
    std::size_t size() const noexcept { return proposals_.size(); }
    const ObjectProposal& object(ObjectId id) const { return proposals_.at(static_cast<std::size_t>(id)); }

    bool operator==(const Scene&) const = default;

private:
    std::string scene_id_;
    std::vector<ObjectProposal> proposals_;
};

// Per-object and per-edge encoder outputs. Rows of z2d / zv are indexed by
// object id; ze holds one vector per retained directed edge.
struct RawFeatures {
    Matrix z2d;
    Matrix zv;
    std::map<EdgeKey, std::vector<double>> ze;
};

// Parses a scene manifest. Relative `points_file` entries resolve against
// base_dir.
Scene parse_scene(std::string_view manifest_text, const std::filesystem::path& base_dir);
Scene load_scene(const std::filesystem::path& manifest_path);

enum class PointStorage { Inline, BinaryFiles };

// Writes a manifest; with BinaryFiles each cloud goes to
// points/obj_<id>.bin next to the manifest.
void save_scene(const Scene& scene, const std::filesystem::path& manifest_path,
                PointStorage storage = PointStorage::BinaryFiles);

}  // namespace graphtok3d
