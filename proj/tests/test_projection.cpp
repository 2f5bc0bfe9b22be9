#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "graphtok3d/error.hpp"
#include "graphtok3d/projection.hpp"
#include "support.hpp"

using namespace graphtok3d;

TEST(Gelu, ReferenceValues) {
    EXPECT_EQ(gelu(0.0), 0.0);
    // 0.5 * (1 + tanh(sqrt(2/pi) * 1.044715))
    EXPECT_NEAR(gelu(1.0), 0.8411919906082768, 1e-15);
    EXPECT_NEAR(gelu(-1.0), -0.15880800939172324, 1e-15);
    EXPECT_NEAR(gelu(10.0), 10.0, 1e-12);
    for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
        const double h = 1e-6;
        EXPECT_NEAR(gelu_derivative(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
    }
}

TEST(Mlp, ForwardMatchesEigen) {
    Rng rng(41);
    for (int t = 0; t < 50; ++t) {
        const std::size_t in = 1 + rng.index(20), hidden = 1 + rng.index(20), out = 1 + rng.index(20);
        const auto p = gt3test::random_mlp(rng, in, hidden, out, 0.5);
        std::vector<double> x(in);
        for (double& v : x) v = rng.normal(0, 1);
        const auto mine = mlp_forward(p, x);
        const auto ref = gt3test::eigen_mlp_forward(p, x);
        ASSERT_EQ(mine.size(), ref.size());
        for (std::size_t i = 0; i < mine.size(); ++i) EXPECT_NEAR(mine[i], ref[i], 1e-12);
        EXPECT_EQ(mlp_forward_cached(p, x).output, mine);
    }
}

TEST(Mlp, ShapeMismatch) {
    const auto p = MLPParams::zeros(3, 4, 2);
    const std::vector<double> x(5, 0.0);
    try {
        mlp_forward(p, x);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeError);
    }
}

TEST(Mlp, GradientsMatchCentralDifferences) {
    Rng rng(42);
    // shapes of f2d, fv and fe at reduced width
    for (auto [in, hidden, out] : {std::array<std::size_t, 3>{8, 6, 5}, {7, 6, 5}, {12, 6, 5}}) {
        const auto r = gt3test::mlp_gradient_check(rng, in, hidden, out, 100);
        EXPECT_TRUE(r.ok) << "max relative error " << r.max_error;
        EXPECT_EQ(r.instances, 100u);
    }
}

TEST(Mlp, AccumulateAddsUp) {
    Rng rng(43);
    const auto p = gt3test::random_mlp(rng, 4, 3, 2, 0.5);
    const std::vector<double> x{0.1, -0.3, 0.8, 1.2}, g{0.7, -1.1};
    const auto once = mlp_backward(p, x, g);
    auto acc = p.zeros_like();
    const auto cache = mlp_forward_cached(p, x);
    mlp_backward_accumulate(p, cache, g, acc);
    mlp_backward_accumulate(p, cache, g, acc);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < acc.layers[l].weight.values().size(); ++i)
            EXPECT_NEAR(acc.layers[l].weight.values()[i], 2 * once.params.layers[l].weight.values()[i], 1e-14);
}

TEST(InitParams, ShapesAndDeterminism) {
    const ProjectionDims dims{10, 12, 6, 8, 0};
    const auto a = init_params(5, dims);
    EXPECT_EQ(a, init_params(5, dims));
    EXPECT_FALSE(a == init_params(6, dims));
    EXPECT_EQ(a.dims(), (ProjectionDims{10, 12, 6, 8, 8}));
    EXPECT_EQ(a.id_table.rows(), kMaxObjects);
    EXPECT_EQ(a.f2d.in_dim(), 10u);
    EXPECT_EQ(a.fv.in_dim(), 12u);
    EXPECT_EQ(a.fe.in_dim(), 6u);
    const double bound = std::sqrt(6.0 / (10 + 8));
    for (double w : a.f2d.layers[0].weight.values()) EXPECT_LE(std::abs(w), bound);
    for (double b : a.f2d.layers[0].bias) EXPECT_EQ(b, 0.0);
    // identifier rows ~ N(0, 0.02)
    double ss = 0;
    for (double v : a.id_table.values()) ss += v * v;
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(a.id_table.values().size())), 0.02, 0.002);
}

namespace {

struct Fixture {
    GraphTopology topo{{0, 1, 2}, {{1, 2}, {0, 2}, {1, 0}}};
    RawFeatures raw;
    ProjectionSet ps;

    Fixture() {
        Rng rng(44);
        ps = init_params(7, {5, 4, 3, 6, 0});
        raw.z2d = Matrix(3, 5);
        raw.zv = Matrix(3, 4);
        for (double& v : raw.z2d.values()) v = rng.normal(0, 1);
        for (double& v : raw.zv.values()) v = rng.normal(0, 1);
        for (std::size_t i = 0; i < 3; ++i)
            for (ObjectId j : topo.neighbors[i]) raw.ze[{static_cast<ObjectId>(i), j}] = {rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
    }
};

}  // namespace

TEST(ProjectSequence, RowsComeFromTheRightProjection) {
    Fixture f;
    const auto seq = project_sequence(flatten_triplet(f.topo), f.raw, f.ps);
    ASSERT_EQ(seq.embeddings.rows(), seq.size());
    ASSERT_EQ(seq.embeddings.cols(), 6u);
    for (std::size_t r = 0; r < seq.size(); ++r) {
        const auto& s = seq.slots[r];
        std::vector<double> want;
        switch (s.kind) {
            case SlotKind::Identifier: {
                const auto row = f.ps.id_table.row(static_cast<std::size_t>(s.object));
                want.assign(row.begin(), row.end());
                break;
            }
            case SlotKind::Feature2d: want = mlp_forward(f.ps.f2d, f.raw.z2d.row(static_cast<std::size_t>(s.object))); break;
            case SlotKind::Node: want = mlp_forward(f.ps.fv, f.raw.zv.row(static_cast<std::size_t>(s.object))); break;
            case SlotKind::Edge: want = mlp_forward(f.ps.fe, f.raw.ze.at({s.object, s.target})); break;
        }
        const auto got = seq.embeddings.row(r);
        EXPECT_EQ(std::vector<double>(got.begin(), got.end()), want) << "slot " << r;
    }
}

TEST(ProjectSequence, CommutesWithSlotPermutation) {
    Fixture f;
    auto seq = flatten_triplet(f.topo);
    const auto base = project_sequence(seq, f.raw, f.ps);
    Rng rng(45);
    std::vector<std::size_t> perm(seq.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    FlatSequence shuffled = seq;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.slots[i] = seq.slots[perm[i]];
    const auto out = project_sequence(shuffled, f.raw, f.ps);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto a = out.embeddings.row(i);
        const auto b = base.embeddings.row(perm[i]);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST(ProjectSequence, MissingFeatures) {
    Fixture f;
    f.raw.ze.erase({0, 1});
    try {
        project_sequence(flatten_triplet(f.topo), f.raw, f.ps);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingFeature);
    }
    Fixture g;
    g.raw.zv = Matrix(2, 4);
    EXPECT_THROW(project_sequence(flatten_triplet(g.topo), g.raw, g.ps), Error);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
    const auto ps = init_params(9, {5, 4, 3, 6, 7});
    const auto path = std::filesystem::temp_directory_path() / "graphtok3d_test_ckpt.3dgc";
    save_checkpoint(path, ps);
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back.dims(), ps.dims());
    const auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            if (static_cast<float>(a[i]) != b[i]) return false;
        return a.size() == b.size();
    };
    for (int m = 0; m < 3; ++m) {
        const MLPParams& x = m == 0 ? ps.f2d : m == 1 ? ps.fv : ps.fe;
        const MLPParams& y = m == 0 ? back.f2d : m == 1 ? back.fv : back.fe;
        for (std::size_t l = 0; l < 3; ++l) {
            EXPECT_TRUE(close(x.layers[l].weight.values(), y.layers[l].weight.values()));
            EXPECT_TRUE(close(x.layers[l].bias, y.layers[l].bias));
        }
    }
    EXPECT_TRUE(close(ps.id_table.values(), back.id_table.values()));
    // saving the loaded copy reproduces the file
    const auto path2 = std::filesystem::temp_directory_path() / "graphtok3d_test_ckpt2.3dgc";
    save_checkpoint(path2, back);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const auto path = std::filesystem::temp_directory_path() / "graphtok3d_test_bad.3dgc";
    {
        std::ofstream out(path, std::ios::binary);
        out << "3DGCxx";
    }
    EXPECT_THROW(load_checkpoint(path), Error);
}
