#include "graphtok3d/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "graphtok3d/binary_io.hpp"
#include "graphtok3d/error.hpp"

namespace graphtok3d {

using nlohmann::json;

double AxisAlignedBox::volume() const {
    const Vec3 e = extent();
    return e[0] * e[1] * e[2];
}

Vec3 AxisAlignedBox::extent() const {
    return {max[0] - min[0], max[1] - min[1], max[2] - min[2]};
}

Vec3 AxisAlignedBox::center() const {
    return {0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1]), 0.5 * (min[2] + max[2])};
}

bool AxisAlignedBox::contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a)
        if (p[a] < min[a] || p[a] > max[a]) return false;
    return true;
}

Vec3 compute_centroid(std::span<const Point> points) {
    if (points.empty()) throw Error(ErrorKind::InvalidProposal, "empty point array");
    double sx = 0, sy = 0, sz = 0;
    for (const Point& p : points) {
        sx += p.x;
        sy += p.y;
        sz += p.z;
    }
    const auto m = static_cast<double>(points.size());
    return {sx / m, sy / m, sz / m};
}

AxisAlignedBox compute_aabb(std::span<const Point> points) {
    if (points.empty()) throw Error(ErrorKind::InvalidProposal, "empty point array");
    AxisAlignedBox box{{points[0].x, points[0].y, points[0].z}, {points[0].x, points[0].y, points[0].z}};
    for (const Point& p : points) {
        const Vec3 v{p.x, p.y, p.z};
        for (int a = 0; a < 3; ++a) {
            box.min[a] = std::min(box.min[a], v[a]);
            box.max[a] = std::max(box.max[a], v[a]);
        }
    }
    return box;
}

namespace {

void validate_points(ObjectId id, const std::vector<Point>& points) {
    if (points.empty())
        throw Error(ErrorKind::InvalidProposal, "object " + std::to_string(id) + " has no points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point& p = points[i];
        const bool finite = std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
        const bool colors_ok = p.r >= 0 && p.r <= 1 && p.g >= 0 && p.g <= 1 && p.b >= 0 && p.b <= 1;
        if (!finite || !colors_ok)
            throw Error(ErrorKind::InvalidProposal, "object " + std::to_string(id) + " point " +
                                                        std::to_string(i) +
                                                        (finite ? " color outside [0,1]" : " not finite"));
    }
}

}  // namespace

ObjectProposal::ObjectProposal(ObjectId id, std::vector<Point> points)
    : id_(id), points_(std::move(points)) {
    if (id < 0 || static_cast<std::size_t>(id) >= kMaxObjects)
        throw Error(ErrorKind::InvalidObjectId, "id " + std::to_string(id) + " outside [0, 200)");
    validate_points(id_, points_);
    centroid_ = compute_centroid(points_);
    aabb_ = compute_aabb(points_);
}

Scene::Scene(std::string scene_id, std::vector<ObjectProposal> proposals)
    : scene_id_(std::move(scene_id)), proposals_(std::move(proposals)) {
    if (proposals_.empty()) throw Error(ErrorKind::EmptyScene, "scene '" + scene_id_ + "' has no objects");
    if (proposals_.size() > kMaxObjects)
        throw Error(ErrorKind::TooManyObjects,
                    std::to_string(proposals_.size()) + " objects exceed the limit of 200");
    std::sort(proposals_.begin(), proposals_.end(),
              [](const ObjectProposal& a, const ObjectProposal& b) { return a.id() < b.id(); });
    for (std::size_t i = 1; i < proposals_.size(); ++i)
        if (proposals_[i].id() == proposals_[i - 1].id())
            throw Error(ErrorKind::DuplicateObjectId, "id " + std::to_string(proposals_[i].id()));
    for (std::size_t i = 0; i < proposals_.size(); ++i)
        if (proposals_[i].id() != static_cast<ObjectId>(i))
            throw Error(ErrorKind::InvalidObjectId,
                        "ids must be dense in [0, " + std::to_string(proposals_.size()) + "), got " +
                            std::to_string(proposals_[i].id()));
}

namespace {

std::string line_col(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "byte " + std::to_string(byte) + " (line " + std::to_string(line) + ", column " +
           std::to_string(col) + ")";
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw Error(ErrorKind::ParseError, "at " + path + ": " + what);
}

float color_value(const json& v, double scale, const std::string& path) {
    if (!v.is_number()) schema_error(path, "expected number");
    return static_cast<float>(v.get<double>() / scale);
}

std::vector<Point> inline_points(const json& arr, double scale, const std::string& path) {
    if (!arr.is_array()) schema_error(path, "expected array of points");
    std::vector<Point> pts;
    pts.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        const json& row = arr[i];
        if (!row.is_array() || row.size() != 6) schema_error(p, "expected [x,y,z,r,g,b]");
        for (std::size_t c = 0; c < 3; ++c)
            if (!row[c].is_number()) schema_error(p, "expected number");
        pts.push_back(Point{static_cast<float>(row[0].get<double>()), static_cast<float>(row[1].get<double>()),
                            static_cast<float>(row[2].get<double>()), color_value(row[3], scale, p),
                            color_value(row[4], scale, p), color_value(row[5], scale, p)});
    }
    return pts;
}

}  // namespace

Scene parse_scene(std::string_view manifest_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(manifest_text.begin(), manifest_text.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, "malformed JSON at " + line_col(manifest_text, e.byte > 0 ? e.byte - 1 : 0));
    }
    if (!doc.is_object()) schema_error("$", "expected object");
    if (!doc.contains("scene_id") || !doc["scene_id"].is_string()) schema_error("$.scene_id", "expected string");
    if (!doc.contains("objects") || !doc["objects"].is_array()) schema_error("$.objects", "expected array");

    double scale = 1.0;
    if (doc.contains("color_scale")) {
        if (!doc["color_scale"].is_number() || doc["color_scale"].get<double>() <= 0)
            schema_error("$.color_scale", "expected positive number");
        scale = doc["color_scale"].get<double>();
    }

    const json& objects = doc["objects"];
    if (objects.empty()) throw Error(ErrorKind::EmptyScene, "scene has no objects");
    if (objects.size() > kMaxObjects)
        throw Error(ErrorKind::TooManyObjects, std::to_string(objects.size()) + " objects exceed the limit of 200");

    std::set<ObjectId> seen;
    std::vector<ObjectProposal> proposals;
    proposals.reserve(objects.size());
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const std::string path = "$.objects[" + std::to_string(i) + "]";
        const json& o = objects[i];
        if (!o.is_object()) schema_error(path, "expected object");
        if (!o.contains("id") || !o["id"].is_number_integer()) schema_error(path + ".id", "expected integer");
        const auto id = o["id"].get<long long>();
        if (id < 0 || id >= static_cast<long long>(objects.size()))
            throw Error(ErrorKind::InvalidObjectId,
                        path + ": id " + std::to_string(id) + " outside [0, " + std::to_string(objects.size()) + ")");
        if (!seen.insert(static_cast<ObjectId>(id)).second)
            throw Error(ErrorKind::DuplicateObjectId, path + ": id " + std::to_string(id));

        std::vector<Point> pts;
        if (o.contains("points")) {
            pts = inline_points(o["points"], scale, path + ".points");
        } else if (o.contains("points_file") && o["points_file"].is_string()) {
            pts = io::read_points_file(base_dir / o["points_file"].get<std::string>());
            if (scale != 1.0)
                for (Point& p : pts) {
                    p.r = static_cast<float>(p.r / scale);
                    p.g = static_cast<float>(p.g / scale);
                    p.b = static_cast<float>(p.b / scale);
                }
        } else {
            schema_error(path, "expected 'points' or 'points_file'");
        }
        proposals.emplace_back(static_cast<ObjectId>(id), std::move(pts));
    }
    return Scene(doc["scene_id"].get<std::string>(), std::move(proposals));
}

Scene load_scene(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + manifest_path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scene(buf.str(), manifest_path.parent_path());
}

void save_scene(const Scene& scene, const std::filesystem::path& manifest_path, PointStorage storage) {
    const auto dir = manifest_path.parent_path();
    json objects = json::array();
    for (const ObjectProposal& obj : scene.proposals()) {
        json o;
        o["id"] = obj.id();
        if (storage == PointStorage::Inline) {
            json pts = json::array();
            for (const Point& p : obj.points())
                pts.push_back({double(p.x), double(p.y), double(p.z), double(p.r), double(p.g), double(p.b)});
            o["points"] = std::move(pts);
        } else {
            std::ostringstream name;
            name << "points/obj_" << std::setw(3) << std::setfill('0') << obj.id() << ".bin";
            io::write_points_file(dir / name.str(), obj.points());
            o["points_file"] = name.str();
        }
        objects.push_back(std::move(o));
    }
    json doc;
    doc["scene_id"] = scene.scene_id();
    doc["objects"] = std::move(objects);
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + manifest_path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace graphtok3d
