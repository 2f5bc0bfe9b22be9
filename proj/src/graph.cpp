#include "graphtok3d/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "graphtok3d/error.hpp"
#include "graphtok3d/parallel.hpp"

namespace graphtok3d {

using nlohmann::json;

const std::vector<ObjectId>& GraphTopology::neighbors_of(ObjectId id) const {
    auto it = std::lower_bound(survivors.begin(), survivors.end(), id);
    if (it == survivors.end() || *it != id)
        throw Error(ErrorKind::IndexError, "object " + std::to_string(id) + " is not a survivor");
    return neighbors[static_cast<std::size_t>(it - survivors.begin())];
}

std::size_t GraphTopology::edge_count() const {
    std::size_t n = 0;
    for (const auto& list : neighbors) n += list.size();
    return n;
}

double aabb_iou(const AxisAlignedBox& a, const AxisAlignedBox& b) {
    double inter = 1.0;
    for (int ax = 0; ax < 3; ++ax) {
        const double lo = std::max(a.min[ax], b.min[ax]);
        const double hi = std::min(a.max[ax], b.max[ax]);
        inter *= std::max(0.0, hi - lo);
    }
    const double uni = a.volume() + b.volume() - inter;
    if (!(uni > 0.0)) return a == b ? 1.0 : 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<ObjectId> nms_dedup(const Scene& scene, std::span<const ObjectId> candidates,
                                std::optional<double> threshold) {
    std::vector<ObjectId> order(candidates.begin(), candidates.end());
    if (!threshold) {
        std::sort(order.begin(), order.end());
        return order;
    }
    std::sort(order.begin(), order.end(), [&](ObjectId a, ObjectId b) {
        const auto ca = scene.object(a).point_count();
        const auto cb = scene.object(b).point_count();
        return ca != cb ? ca > cb : a < b;
    });
    std::vector<ObjectId> kept;
    for (ObjectId id : order) {
        const auto& box = scene.object(id).aabb();
        const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](ObjectId k) {
            return aabb_iou(box, scene.object(k).aabb()) >= *threshold;
        });
        if (!duplicate) kept.push_back(id);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::vector<ObjectId> nms_dedup(const Scene& scene, std::optional<double> threshold) {
    std::vector<ObjectId> all(scene.size());
    std::iota(all.begin(), all.end(), 0);
    return nms_dedup(scene, all, threshold);
}

namespace {

double centroid_distance(const ObjectProposal& a, const ObjectProposal& b) {
    const Vec3& p = a.centroid();
    const Vec3& q = b.centroid();
    return std::hypot(q[0] - p[0], q[1] - p[1], q[2] - p[2]);
}

}  // namespace

GraphTopology select_knn_neighbors(const Scene& scene, std::span<const ObjectId> survivors,
                                   const GraphConfig& cfg) {
    GraphTopology topo;
    topo.survivors.assign(survivors.begin(), survivors.end());
    std::sort(topo.survivors.begin(), topo.survivors.end());
    topo.neighbors.resize(topo.survivors.size());

    parallel_for(topo.survivors.size(), [&](std::size_t idx) {
        const ObjectId i = topo.survivors[idx];
        const ObjectProposal& self = scene.object(i);
        std::vector<std::pair<double, ObjectId>> cand;
        cand.reserve(topo.survivors.size());
        for (ObjectId j : topo.survivors) {
            if (j == i) continue;
            const double d = centroid_distance(self, scene.object(j));
            if (d < cfg.min_neighbor_distance) continue;
            cand.emplace_back(d, j);
        }
        const std::size_t take = std::min(cfg.k, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
        auto& out = topo.neighbors[idx];
        out.reserve(take);
        for (std::size_t t = 0; t < take; ++t) out.push_back(cand[t].second);
    });
    return topo;
}

std::vector<double> relation_base_descriptor(const ObjectProposal& a, const ObjectProposal& b) {
    constexpr double eps = 1e-6;
    std::vector<double> base(kRelationBaseDim, 0.0);
    const Vec3& ca = a.centroid();
    const Vec3& cb = b.centroid();
    const Vec3 off{cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2]};
    const double dist = std::hypot(off[0], off[1], off[2]);
    const Vec3 ea = a.aabb().extent();
    const Vec3 eb = b.aabb().extent();
    for (int ax = 0; ax < 3; ++ax) {
        base[ax] = off[ax];
        base[4 + ax] = std::log((eb[ax] + eps) / (ea[ax] + eps));
        base[9 + ax] = dist > 0 ? off[ax] / dist : 0.0;
    }
    base[3] = dist;
    base[7] = aabb_iou(a.aabb(), b.aabb());

    const double lo = std::max(a.aabb().min[2], b.aabb().min[2]);
    const double hi = std::min(a.aabb().max[2], b.aabb().max[2]);
    const double span = std::max(a.aabb().max[2], b.aabb().max[2]) - std::min(a.aabb().min[2], b.aabb().min[2]);
    base[8] = span > 0 ? std::max(0.0, hi - lo) / span : 1.0;
    return base;
}

std::vector<double> geometric_relation_feature(const ObjectProposal& a, const ObjectProposal& b,
                                               std::size_t dim) {
    const auto base = relation_base_descriptor(a, b);
    std::vector<double> v(dim);
    for (std::size_t t = 0; t < dim; ++t) {
        const auto tile = static_cast<double>(t / kRelationBaseDim);
        v[t] = base[t % kRelationBaseDim] / (tile + 1.0);
    }
    return v;
}

SceneGraphOut build_scene_graph(const Scene& scene, const GraphConfig& cfg, const io::EdgeFeatureTable* external) {
    const bool use_external = cfg.relation_source == RelationSource::ExternalFile;
    if (use_external && external == nullptr)
        throw Error(ErrorKind::MissingEdgeFeature, "external relation source selected but no feature file given");

    SceneGraphOut out{scene, {}, {}};
    const auto survivors = nms_dedup(scene, cfg.nms_iou_threshold);
    out.topology = select_knn_neighbors(scene, survivors, cfg);

    for (std::size_t idx = 0; idx < out.topology.survivors.size(); ++idx) {
        const ObjectId src = out.topology.survivors[idx];
        for (ObjectId dst : out.topology.neighbors[idx]) out.edges.push_back({src, dst, {}});
    }
    std::sort(out.edges.begin(), out.edges.end(),
              [](const RelationEdge& a, const RelationEdge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });

    if (use_external) {
        for (auto& e : out.edges) {
            auto it = external->rows.find({e.src, e.dst});
            if (it == external->rows.end())
                throw Error(ErrorKind::MissingEdgeFeature,
                            "no feature row for edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")");
            e.ze = it->second;
        }
    } else {
        parallel_for(out.edges.size(), [&](std::size_t i) {
            auto& e = out.edges[i];
            e.ze = geometric_relation_feature(scene.object(e.src), scene.object(e.dst), cfg.edge_feature_dim);
        });
    }
    return out;
}

io::EdgeFeatureTable edge_feature_table(const SceneGraphOut& graph) {
    io::EdgeFeatureTable t;
    t.dim = graph.edges.empty() ? 0 : graph.edges.front().ze.size();
    for (const auto& e : graph.edges) t.rows.emplace(EdgeKey{e.src, e.dst}, e.ze);
    return t;
}

std::string graph_to_json(const SceneGraphOut& graph, const GraphConfig& cfg) {
    json doc;
    doc["scene_id"] = graph.scene.scene_id();
    doc["object_count"] = graph.scene.size();
    json c;
    c["k"] = cfg.k;
    c["nms_iou_threshold"] = cfg.nms_iou_threshold ? json(*cfg.nms_iou_threshold) : json(nullptr);
    c["min_neighbor_distance"] = cfg.min_neighbor_distance;
    c["relation_source"] = cfg.relation_source == RelationSource::ExternalFile ? "external_file" : "geometric_standin";
    doc["config"] = c;
    doc["survivors"] = graph.topology.survivors;
    json lists = json::array();
    for (std::size_t i = 0; i < graph.topology.survivors.size(); ++i)
        lists.push_back({{"id", graph.topology.survivors[i]}, {"neighbors", graph.topology.neighbors[i]}});
    doc["neighbor_lists"] = std::move(lists);
    json edges = json::array();
    for (const auto& e : graph.edges) edges.push_back({e.src, e.dst});
    doc["edges"] = std::move(edges);
    doc["edge_feature_dim"] = graph.edges.empty() ? 0 : graph.edges.front().ze.size();
    return doc.dump(2) + "\n";
}

GraphTopology parse_graph_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, std::string("graph.json: ") + e.what());
    }
    GraphTopology topo;
    try {
        topo.survivors = doc.at("survivors").get<std::vector<ObjectId>>();
        for (const auto& entry : doc.at("neighbor_lists")) {
            const auto id = entry.at("id").get<ObjectId>();
            if (topo.neighbors.size() >= topo.survivors.size() || topo.survivors[topo.neighbors.size()] != id)
                throw Error(ErrorKind::ParseError, "graph.json: neighbor_lists out of survivor order at id " +
                                                       std::to_string(id));
            topo.neighbors.push_back(entry.at("neighbors").get<std::vector<ObjectId>>());
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("graph.json: ") + e.what());
    }
    if (topo.neighbors.size() != topo.survivors.size())
        throw Error(ErrorKind::ParseError, "graph.json: neighbor_lists do not cover all survivors");
    if (!std::is_sorted(topo.survivors.begin(), topo.survivors.end()))
        throw Error(ErrorKind::ParseError, "graph.json: survivors not ascending");
    const std::set<ObjectId> alive(topo.survivors.begin(), topo.survivors.end());
    for (std::size_t i = 0; i < topo.survivors.size(); ++i)
        for (ObjectId j : topo.neighbors[i])
            if (j == topo.survivors[i] || !alive.count(j))
                throw Error(ErrorKind::ParseError, "graph.json: invalid neighbor " + std::to_string(j) + " of " +
                                                       std::to_string(topo.survivors[i]));
    return topo;
}

}  // namespace graphtok3d
