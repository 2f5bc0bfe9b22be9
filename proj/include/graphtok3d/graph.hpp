#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graphtok3d/binary_io.hpp"
#include "graphtok3d/scene.hpp"

namespace graphtok3d {

enum class RelationSource { GeometricStandin, ExternalFile };

// Defaults are the reference operating point: two neighbors, duplicate
// suppression at IoU 0.99, and a 1 cm minimum neighbor distance.
struct GraphConfig {
    std::size_t k = 2;
    std::optional<double> nms_iou_threshold = 0.99;  // nullopt disables NMS
    double min_neighbor_distance = 0.01;              // meters
    RelationSource relation_source = RelationSource::GeometricStandin;
    std::size_t edge_feature_dim = 512;               // stand-in descriptor width
};

struct RelationEdge {
    ObjectId src = 0;
    ObjectId dst = 0;
    std::vector<double> ze;
};

// Survivor ids (ascending) and, aligned with them, each survivor's neighbors
// ordered by ascending centroid distance.
struct GraphTopology {
    std::vector<ObjectId> survivors;
    std::vector<std::vector<ObjectId>> neighbors;

    const std::vector<ObjectId>& neighbors_of(ObjectId id) const;
    std::size_t edge_count() const;

    bool operator==(const GraphTopology&) const = default;
};

struct SceneGraphOut {
    Scene scene;
    GraphTopology topology;
    std::vector<RelationEdge> edges;  // sorted by (src, dst)
};

double aabb_iou(const AxisAlignedBox& a, const AxisAlignedBox& b);

// Greedy suppression in descending point count (ties: ascending id). Returns
// survivors sorted by id. A disabled threshold keeps every candidate.
std::vector<ObjectId> nms_dedup(const Scene& scene, std::optional<double> threshold);
std::vector<ObjectId> nms_dedup(const Scene& scene, std::span<const ObjectId> candidates,
                                std::optional<double> threshold);

GraphTopology select_knn_neighbors(const Scene& scene, std::span<const ObjectId> survivors,
                                   const GraphConfig& cfg);

// Number of base values in the geometric relation descriptor.
inline constexpr std::size_t kRelationBaseDim = 12;

// Deterministic stand-in for a learned relation latent between a (source) and
// b (target). Base layout:
//   [0..2]  centroid offset b - a
//   [3]     centroid distance
//   [4..6]  log((extent_b + eps) / (extent_a + eps)), eps = 1e-6 m
//   [7]     box IoU
//   [8]     vertical overlap / vertical union span (1 when both spans are empty
//           at the same height)
//   [9..11] unit direction a -> b (zero when centroids coincide)
// The base is tiled to `dim` and tile t is scaled by 1 / (t + 1).
std::vector<double> geometric_relation_feature(const ObjectProposal& a, const ObjectProposal& b,
                                               std::size_t dim);
std::vector<double> relation_base_descriptor(const ObjectProposal& a, const ObjectProposal& b);

// NMS, then k-NN over survivors with the minimum-distance filter, then edge
// feature attachment. External features are required when
// cfg.relation_source is ExternalFile.
SceneGraphOut build_scene_graph(const Scene& scene, const GraphConfig& cfg,
                                const io::EdgeFeatureTable* external = nullptr);

io::EdgeFeatureTable edge_feature_table(const SceneGraphOut& graph);

// graph.json: scene id, config, survivors, per-object neighbor lists and the
// edge index (row r of the edge feature file is edges[r]).
std::string graph_to_json(const SceneGraphOut& graph, const GraphConfig& cfg);
GraphTopology parse_graph_json(std::string_view text);

}  // namespace graphtok3d
