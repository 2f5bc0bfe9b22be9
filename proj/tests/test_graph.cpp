#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "graphtok3d/error.hpp"
#include "graphtok3d/graph.hpp"
#include "support.hpp"

using namespace graphtok3d;

namespace {

AxisAlignedBox box(Vec3 lo, Vec3 hi) { return {lo, hi}; }

ObjectProposal cube_object(ObjectId id, Vec3 lo, double side, std::size_t extra_points = 0) {
    std::vector<Point> pts;
    for (int i = 0; i < 8; ++i)
        pts.push_back({float(lo[0] + side * (i & 1)), float(lo[1] + side * ((i >> 1) & 1)),
                       float(lo[2] + side * ((i >> 2) & 1)), 0.5f, 0.5f, 0.5f});
    for (std::size_t e = 0; e < extra_points; ++e)
        pts.push_back({float(lo[0] + side / 2), float(lo[1] + side / 2), float(lo[2] + side / 2), 0, 0, 0});
    return ObjectProposal(id, pts);
}

}  // namespace

TEST(AabbIou, IdenticalAndDisjoint) {
    EXPECT_EQ(aabb_iou(box({0, 0, 0}, {1, 1, 1}), box({0, 0, 0}, {1, 1, 1})), 1.0);
    EXPECT_EQ(aabb_iou(box({0, 0, 0}, {1, 1, 1}), box({2, 2, 2}, {3, 3, 3})), 0.0);
    EXPECT_EQ(aabb_iou(box({0, 0, 0}, {1, 1, 1}), box({1, 0, 0}, {2, 1, 1})), 0.0);  // touching faces
}

TEST(AabbIou, ShiftedCubeMatchesVoxelOracle) {
    const auto a = box({0, 0, 0}, {1, 1, 1});
    const auto b = box({0.5, 0, 0}, {1.5, 1, 1});
    const double oracle = gt3test::voxel_iou(a, b, 1e-3);
    EXPECT_NEAR(aabb_iou(a, b), oracle, 1e-3);
    EXPECT_NEAR(aabb_iou(a, b), 1.0 / 3.0, 1e-12);
}

TEST(AabbIou, DegenerateBoxes) {
    const auto p = box({1, 1, 1}, {1, 1, 1});
    EXPECT_EQ(aabb_iou(p, p), 1.0);
    EXPECT_EQ(aabb_iou(p, box({0, 0, 0}, {2, 2, 2})), 0.0);
    const auto flat = box({0, 0, 0}, {1, 1, 0});
    EXPECT_EQ(aabb_iou(flat, flat), 1.0);
    EXPECT_EQ(aabb_iou(flat, box({0, 0, 0}, {0.5, 1, 0})), 0.0);
}

TEST(AabbIou, RandomPairsAgainstVoxelOracle) {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
        const auto a = gt3test::random_box(rng, 1.5, 0.3, 1.5);
        const auto b = gt3test::random_box(rng, 1.5, 0.3, 1.5);
        const double v = aabb_iou(a, b);
        EXPECT_NEAR(v, gt3test::voxel_iou(a, b, 1e-4), 1e-3);
        EXPECT_DOUBLE_EQ(v, aabb_iou(b, a));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Nms, ExactDuplicateKeepsLowerId) {
    Scene s("d", {cube_object(0, {0, 0, 0}, 1), cube_object(1, {0, 0, 0}, 1), cube_object(2, {5, 0, 0}, 1)});
    EXPECT_EQ(nms_dedup(s, 0.99), (std::vector<ObjectId>{0, 2}));
}

TEST(Nms, VisitsLargerCloudsFirst) {
    // object 1 has more points, so it survives over the identical-box object 0
    Scene s("d", {cube_object(0, {0, 0, 0}, 1), cube_object(1, {0, 0, 0}, 1, 5)});
    EXPECT_EQ(nms_dedup(s, 0.99), (std::vector<ObjectId>{1}));
}

TEST(Nms, DisabledKeepsEverything) {
    Scene s("d", {cube_object(0, {0, 0, 0}, 1), cube_object(1, {0, 0, 0}, 1)});
    EXPECT_EQ(nms_dedup(s, std::nullopt), (std::vector<ObjectId>{0, 1}));
}

TEST(Nms, ThresholdBoundaryIsInclusive) {
    // IoU exactly 0.5 with a threshold of 0.5 suppresses
    Scene s("d", {cube_object(0, {0, 0, 0}, 1, 1), ObjectProposal(1, {{0, 0, 0, 0, 0, 0}, {1, 1, 0.5f, 0, 0, 0}})});
    ASSERT_DOUBLE_EQ(aabb_iou(s.object(0).aabb(), s.object(1).aabb()), 0.5);
    EXPECT_EQ(nms_dedup(s, 0.5), (std::vector<ObjectId>{0}));
    EXPECT_EQ(nms_dedup(s, 0.51), (std::vector<ObjectId>{0, 1}));
}

TEST(Nms, IdempotentOnPlantedDuplicates) {
    Rng rng(22);
    for (int t = 0; t < 30; ++t) {
        const auto s = gt3test::random_scene(rng, 20 + rng.index(20), 3.0, 1 + rng.index(8));
        for (double thr : {0.99, 0.5, 0.1}) {
            const auto once = nms_dedup(s, thr);
            EXPECT_EQ(nms_dedup(s, once, thr), once);
            for (std::size_t i = 0; i < once.size(); ++i)
                for (std::size_t j = i + 1; j < once.size(); ++j)
                    EXPECT_LT(aabb_iou(s.object(once[i]).aabb(), s.object(once[j]).aabb()), thr);
        }
    }
}

TEST(Knn, MatchesExhaustiveSortOracle) {
    Rng rng(23);
    for (int t = 0; t < 40; ++t) {
        const auto s = gt3test::random_scene(rng, 1 + rng.index(60), 4.0, rng.index(3));
        GraphConfig cfg;
        cfg.k = rng.index(6);
        cfg.min_neighbor_distance = rng.uniform(0, 0.5);
        const auto survivors = nms_dedup(s, 0.99);
        const auto topo = select_knn_neighbors(s, survivors, cfg);
        EXPECT_EQ(topo.survivors, survivors);
        EXPECT_EQ(topo.neighbors, gt3test::knn_oracle(s, survivors, cfg.k, cfg.min_neighbor_distance));
    }
}

TEST(Knn, MinDistanceMonotonicity) {
    Rng rng(24);
    for (int t = 0; t < 20; ++t) {
        // clustered objects so distances near the 1 cm scale occur
        const auto s = gt3test::random_scene(rng, 30, 0.1, 4);
        const auto survivors = nms_dedup(s, std::nullopt);
        std::vector<std::size_t> previous(survivors.size(), SIZE_MAX);
        for (int step = 0; step <= 50; ++step) {
            GraphConfig cfg;
            cfg.min_neighbor_distance = 0.001 * step;
            const auto topo = select_knn_neighbors(s, survivors, cfg);
            for (std::size_t i = 0; i < survivors.size(); ++i) {
                EXPECT_LE(topo.neighbors[i].size(), previous[i]);
                previous[i] = topo.neighbors[i].size();
            }
        }
    }
}

TEST(Knn, ExactDuplicatesAreNotNeighbors) {
    Rng rng(25);
    const auto s = gt3test::random_scene(rng, 30, 2.0, 10);
    const auto survivors = nms_dedup(s, std::nullopt);
    GraphConfig cfg;
    cfg.k = 29;
    const auto topo = select_knn_neighbors(s, survivors, cfg);
    for (std::size_t i = 0; i < survivors.size(); ++i)
        for (ObjectId j : topo.neighbors[i]) {
            EXPECT_NE(j, survivors[i]);
            EXPECT_NE(s.object(j).centroid(), s.object(survivors[i]).centroid());
        }
}

TEST(Knn, TiesBrokenByAscendingId) {
    // objects 1..4 all at distance 1 from object 0
    Scene s("t", {ObjectProposal(0, {{0, 0, 0, 0, 0, 0}}), ObjectProposal(1, {{0, 1, 0, 0, 0, 0}}),
                  ObjectProposal(2, {{1, 0, 0, 0, 0, 0}}), ObjectProposal(3, {{0, -1, 0, 0, 0, 0}}),
                  ObjectProposal(4, {{-1, 0, 0, 0, 0, 0}})});
    const std::vector<ObjectId> all{0, 1, 2, 3, 4};
    GraphConfig cfg;
    EXPECT_EQ(select_knn_neighbors(s, all, cfg).neighbors_of(0), (std::vector<ObjectId>{1, 2}));
}

TEST(RelationFeature, StandInDescriptor) {
    const ObjectProposal a(0, {{0, 0, 0, 0, 0, 0}, {1, 1, 1, 0, 0, 0}});
    const ObjectProposal b(1, {{3, 0, 0, 0, 0, 0}, {4, 1, 1, 0, 0, 0}});
    const auto base = relation_base_descriptor(a, b);
    ASSERT_EQ(base.size(), kRelationBaseDim);
    EXPECT_DOUBLE_EQ(base[0], 3.0);
    EXPECT_DOUBLE_EQ(base[3], 3.0);
    EXPECT_NEAR(base[4], 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(base[7], 0.0);
    EXPECT_DOUBLE_EQ(base[8], 1.0);
    EXPECT_DOUBLE_EQ(base[9], 1.0);
    const auto f = geometric_relation_feature(a, b, 30);
    ASSERT_EQ(f.size(), 30u);
    EXPECT_DOUBLE_EQ(f[12], base[0] / 2);
    EXPECT_DOUBLE_EQ(f[24 + 3], base[3] / 3);
}

TEST(BuildGraph, TwoObjectsGiveTwoEdges) {
    Scene s("two", {cube_object(0, {0, 0, 0}, 0.5), cube_object(1, {2, 0, 0}, 0.5)});
    const auto g = build_scene_graph(s, GraphConfig{});
    ASSERT_EQ(g.edges.size(), 2u);
    EXPECT_EQ(g.edges[0].src, 0);
    EXPECT_EQ(g.edges[0].dst, 1);
    EXPECT_EQ(g.edges[0].ze.size(), 512u);

    GraphConfig k0;
    k0.k = 0;
    const auto g0 = build_scene_graph(s, k0);
    EXPECT_TRUE(g0.edges.empty());
    EXPECT_EQ(g0.topology.survivors.size(), 2u);
}

TEST(BuildGraph, ExternalFeatures) {
    Scene s("two", {cube_object(0, {0, 0, 0}, 0.5), cube_object(1, {2, 0, 0}, 0.5)});
    GraphConfig cfg;
    cfg.relation_source = RelationSource::ExternalFile;
    io::EdgeFeatureTable table;
    table.dim = 3;
    table.rows[{0, 1}] = {1, 2, 3};
    try {
        build_scene_graph(s, cfg, &table);
        FAIL() << "missing row accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingEdgeFeature);
    }
    table.rows[{1, 0}] = {4, 5, 6};
    const auto g = build_scene_graph(s, cfg, &table);
    EXPECT_EQ(g.edges[1].ze, (std::vector<double>{4, 5, 6}));
}

TEST(BuildGraph, EndToEndAgainstStagedOracle) {
    Rng rng(26);
    const auto s = gt3test::random_scene(rng, 100, 6.0, 12);
    const GraphConfig cfg;
    const auto g = build_scene_graph(s, cfg);

    // staged oracle: brute-force suppression, then exhaustive neighbor sort
    std::vector<ObjectId> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](ObjectId a, ObjectId b) { return s.object(a).point_count() > s.object(b).point_count(); });
    std::vector<ObjectId> kept;
    for (ObjectId c : order) {
        bool suppressed = false;
        for (ObjectId k : kept) suppressed |= aabb_iou(s.object(c).aabb(), s.object(k).aabb()) >= 0.99;
        if (!suppressed) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end());
    const auto neighbors = gt3test::knn_oracle(s, kept, 2, 0.01);
    std::size_t edges = 0;
    for (const auto& n : neighbors) edges += n.size();

    EXPECT_EQ(g.topology.survivors, kept);
    EXPECT_EQ(g.edges.size(), edges);
    std::set<ObjectId> kept_set(kept.begin(), kept.end());
    for (const auto& e : g.edges) {
        EXPECT_TRUE(kept_set.count(e.src) && kept_set.count(e.dst));
        EXPECT_NE(e.src, e.dst);
    }
}

TEST(GraphJson, RoundTrip) {
    Rng rng(27);
    const auto s = gt3test::random_scene(rng, 15);
    const GraphConfig cfg;
    const auto g = build_scene_graph(s, cfg);
    const auto text = graph_to_json(g, cfg);
    EXPECT_EQ(parse_graph_json(text), g.topology);
    EXPECT_EQ(graph_to_json(build_scene_graph(s, cfg), cfg), text);
}

TEST(GraphJson, RejectsMalformed) {
    EXPECT_THROW(parse_graph_json("{"), Error);
    EXPECT_THROW(parse_graph_json(R"({"survivors": [0], "neighbor_lists": [{"id": 0, "neighbors": [0]}]})"), Error);
}
