#include "graphtok3d/projection.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "graphtok3d/binary_io.hpp"
#include "graphtok3d/error.hpp"
#include "graphtok3d/parallel.hpp"
#include "graphtok3d/rng.hpp"

namespace graphtok3d {
namespace {

const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

void check_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw Error(ErrorKind::ShapeError,
                    std::string(what) + ": expected " + std::to_string(want) + ", got " + std::to_string(got));
}

// y = W x + b
std::vector<double> affine(const AffineLayer& l, std::span<const double> x) {
    const Matrix& w = l.weight;
    std::vector<double> y(l.bias);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const auto row = w.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
    return y;
}

// grads += dy x^T, db += dy; returns W^T dy when want_input.
void affine_backward(const AffineLayer& l, std::span<const double> x, std::span<const double> dy,
                     AffineLayer& g, std::vector<double>* dx) {
    const Matrix& w = l.weight;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double d = dy[r];
        g.bias[r] += d;
        if (d == 0.0) continue;
        auto grow = g.weight.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) grow[c] += d * x[c];
    }
    if (dx) {
        dx->assign(w.cols(), 0.0);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double d = dy[r];
            if (d == 0.0) continue;
            const auto row = w.row(r);
            for (std::size_t c = 0; c < w.cols(); ++c) (*dx)[c] += row[c] * d;
        }
    }
}

void check_params(const MLPParams& p) {
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& l = p.layers[i];
        check_dim(l.bias.size(), l.weight.rows(), "bias length");
        if (i > 0) check_dim(l.weight.cols(), p.layers[i - 1].weight.rows(), "layer input width");
    }
}

}  // namespace

double gelu(double x) {
    const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
    const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
}

std::size_t MLPParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.values().size() + l.bias.size();
    return n;
}

MLPParams MLPParams::zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    MLPParams p;
    p.layers[0] = {Matrix(hidden, in), std::vector<double>(hidden, 0.0)};
    p.layers[1] = {Matrix(hidden, hidden), std::vector<double>(hidden, 0.0)};
    p.layers[2] = {Matrix(out, hidden), std::vector<double>(out, 0.0)};
    return p;
}

MLPForwardCache mlp_forward_cached(const MLPParams& p, std::span<const double> x) {
    check_params(p);
    check_dim(x.size(), p.in_dim(), "mlp input");
    MLPForwardCache c;
    c.input.assign(x.begin(), x.end());
    c.pre1 = affine(p.layers[0], x);
    c.hidden1.resize(c.pre1.size());
    for (std::size_t i = 0; i < c.pre1.size(); ++i) c.hidden1[i] = gelu(c.pre1[i]);
    c.pre2 = affine(p.layers[1], c.hidden1);
    c.hidden2.resize(c.pre2.size());
    for (std::size_t i = 0; i < c.pre2.size(); ++i) c.hidden2[i] = gelu(c.pre2[i]);
    c.output = affine(p.layers[2], c.hidden2);
    return c;
}

std::vector<double> mlp_forward(const MLPParams& p, std::span<const double> x) {
    return mlp_forward_cached(p, x).output;
}

void mlp_backward_accumulate(const MLPParams& p, const MLPForwardCache& cache, std::span<const double> grad_out,
                             MLPParams& grads, std::span<double> grad_in) {
    check_dim(grad_out.size(), p.out_dim(), "mlp grad_out");
    std::vector<double> dh2, dh1, dx;
    affine_backward(p.layers[2], cache.hidden2, grad_out, grads.layers[2], &dh2);
    for (std::size_t i = 0; i < dh2.size(); ++i) dh2[i] *= gelu_derivative(cache.pre2[i]);
    affine_backward(p.layers[1], cache.hidden1, dh2, grads.layers[1], &dh1);
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] *= gelu_derivative(cache.pre1[i]);
    affine_backward(p.layers[0], cache.input, dh1, grads.layers[0], grad_in.empty() ? nullptr : &dx);
    if (!grad_in.empty()) {
        check_dim(grad_in.size(), dx.size(), "mlp grad_in");
        std::copy(dx.begin(), dx.end(), grad_in.begin());
    }
}

MLPGradients mlp_backward(const MLPParams& p, std::span<const double> x, std::span<const double> grad_out) {
    const auto cache = mlp_forward_cached(p, x);
    MLPGradients g{p.zeros_like(), std::vector<double>(p.in_dim(), 0.0)};
    mlp_backward_accumulate(p, cache, grad_out, g.params, g.input);
    return g;
}

ProjectionDims ProjectionSet::dims() const {
    return {f2d.in_dim(), fv.in_dim(), fe.in_dim(), id_table.cols(), f2d.hidden_dim()};
}

namespace {

MLPParams init_mlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
    MLPParams p = MLPParams::zeros(in, hidden, out);
    for (auto& l : p.layers) {
        const double a = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
        for (double& w : l.weight.values()) w = rng.uniform(-a, a);
    }
    return p;
}

}  // namespace

ProjectionSet init_params(std::uint64_t seed, const ProjectionDims& dims) {
    for (std::size_t d : {dims.d_2d, dims.d_v, dims.d_e, dims.d_model})
        if (d == 0) throw Error(ErrorKind::ShapeError, "projection dims must be positive");
    const std::size_t h = dims.hidden_width();
    ProjectionSet ps;
    Rng r2d(derive_seed(seed, "f2d")), rv(derive_seed(seed, "fv")), re(derive_seed(seed, "fe")),
        rid(derive_seed(seed, "id_table"));
    ps.f2d = init_mlp(r2d, dims.d_2d, h, dims.d_model);
    ps.fv = init_mlp(rv, dims.d_v, h, dims.d_model);
    ps.fe = init_mlp(re, dims.d_e, h, dims.d_model);
    ps.id_table = Matrix(kMaxObjects, dims.d_model);
    for (double& v : ps.id_table.values()) v = rid.normal(0.0, 0.02);
    return ps;
}

FlatSequence project_sequence(FlatSequence seq, const RawFeatures& raw, const ProjectionSet& ps) {
    const std::size_t d_model = ps.id_table.cols();

    // Unique inputs first; recurring nodes share one evaluation.
    std::map<ObjectId, std::vector<double>> f2d_out, fv_out;
    std::map<EdgeKey, std::vector<double>> fe_out;
    for (const auto& s : seq.slots) {
        if (s.object < 0 || static_cast<std::size_t>(s.object) >= kMaxObjects)
            throw Error(ErrorKind::IndexError, "slot references object " + std::to_string(s.object));
        switch (s.kind) {
            case SlotKind::Identifier: break;
            case SlotKind::Feature2d:
                if (static_cast<std::size_t>(s.object) >= raw.z2d.rows())
                    throw Error(ErrorKind::MissingFeature, "z2d for object " + std::to_string(s.object));
                f2d_out[s.object];
                break;
            case SlotKind::Node:
                if (static_cast<std::size_t>(s.object) >= raw.zv.rows())
                    throw Error(ErrorKind::MissingFeature, "zv for object " + std::to_string(s.object));
                fv_out[s.object];
                break;
            case SlotKind::Edge:
                if (!raw.ze.count({s.object, s.target}))
                    throw Error(ErrorKind::MissingFeature,
                                "ze for edge (" + std::to_string(s.object) + "," + std::to_string(s.target) + ")");
                fe_out[{s.object, s.target}];
                break;
        }
    }

    struct Job {
        const MLPParams* mlp;
        std::span<const double> input;
        std::vector<double>* output;
    };
    std::vector<Job> jobs;
    for (auto& [id, out] : f2d_out) jobs.push_back({&ps.f2d, raw.z2d.row(static_cast<std::size_t>(id)), &out});
    for (auto& [id, out] : fv_out) jobs.push_back({&ps.fv, raw.zv.row(static_cast<std::size_t>(id)), &out});
    for (auto& [key, out] : fe_out) jobs.push_back({&ps.fe, raw.ze.at(key), &out});
    for (const auto& j : jobs) check_dim(j.input.size(), j.mlp->in_dim(), "raw feature width");
    parallel_for(jobs.size(), [&](std::size_t i) { *jobs[i].output = mlp_forward(*jobs[i].mlp, jobs[i].input); });

    seq.embeddings = Matrix(seq.slots.size(), d_model);
    for (std::size_t r = 0; r < seq.slots.size(); ++r) {
        const auto& s = seq.slots[r];
        std::span<const double> src;
        switch (s.kind) {
            case SlotKind::Identifier: src = ps.id_table.row(static_cast<std::size_t>(s.object)); break;
            case SlotKind::Feature2d: src = f2d_out.at(s.object); break;
            case SlotKind::Node: src = fv_out.at(s.object); break;
            case SlotKind::Edge: src = fe_out.at({s.object, s.target}); break;
        }
        std::copy(src.begin(), src.end(), seq.embeddings.row(r).begin());
    }
    return seq;
}

namespace {

void write_bias(std::ostream& out, const std::vector<double>& b) {
    Matrix m(1, b.size());
    std::copy(b.begin(), b.end(), m.values().begin());
    io::write_matrix(out, m);
}

void read_layer(std::istream& in, const std::string& src, AffineLayer& l) {
    Matrix w = io::read_matrix(in, src);
    Matrix b = io::read_matrix(in, src);
    if (w.rows() != l.weight.rows() || w.cols() != l.weight.cols() || b.rows() != 1 || b.cols() != l.bias.size())
        throw Error(ErrorKind::ParseError, "checkpoint tensor shape disagrees with header in " + src);
    l.weight = std::move(w);
    l.bias = std::move(b.values());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ProjectionSet& ps) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    const auto d = ps.dims();
    out.write("3DGC", 4);
    io::write_u32(out, kCheckpointVersion);
    for (std::size_t v : {d.d_2d, d.d_v, d.d_e, d.d_model, d.hidden_width(), ps.id_table.rows()})
        io::write_u32(out, static_cast<std::uint32_t>(v));
    for (const MLPParams* m : {&ps.f2d, &ps.fv, &ps.fe})
        for (const auto& l : m->layers) {
            io::write_matrix(out, l.weight);
            write_bias(out, l.bias);
        }
    io::write_matrix(out, ps.id_table);
}

ProjectionSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    const std::string src = path.string();
    io::expect_magic(in, "3DGC", src);
    const auto version = io::read_u32(in, src);
    if (version != kCheckpointVersion)
        throw Error(ErrorKind::ParseError, "unsupported checkpoint version " + std::to_string(version));
    std::array<std::size_t, 6> h{};
    for (auto& v : h) v = io::read_u32(in, src);
    ProjectionSet ps;
    ps.f2d = MLPParams::zeros(h[0], h[4], h[3]);
    ps.fv = MLPParams::zeros(h[1], h[4], h[3]);
    ps.fe = MLPParams::zeros(h[2], h[4], h[3]);
    for (MLPParams* m : {&ps.f2d, &ps.fv, &ps.fe})
        for (auto& l : m->layers) read_layer(in, src, l);
    ps.id_table = io::read_matrix(in, src);
    if (ps.id_table.rows() != h[5] || ps.id_table.cols() != h[3])
        throw Error(ErrorKind::ParseError, "checkpoint id_table shape disagrees with header");
    return ps;
}

}  // namespace graphtok3d
