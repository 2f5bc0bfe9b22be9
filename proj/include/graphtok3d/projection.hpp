#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "graphtok3d/flatten.hpp"
#include "graphtok3d/matrix.hpp"
#include "graphtok3d/scene.hpp"

namespace graphtok3d {

// GELU, tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
inline constexpr double kGeluCubic = 0.044715;
double gelu(double x);
double gelu_derivative(double x);

struct AffineLayer {
    Matrix weight;  // out x in
    std::vector<double> bias;

    bool operator==(const AffineLayer&) const = default;
};

// in -> hidden -> hidden -> out, GELU after the first two layers.
// The same shape doubles as a gradient accumulator.
struct MLPParams {
    std::array<AffineLayer, 3> layers;

    std::size_t in_dim() const { return layers[0].weight.cols(); }
    std::size_t hidden_dim() const { return layers[0].weight.rows(); }
    std::size_t out_dim() const { return layers[2].weight.rows(); }
    std::size_t parameter_count() const;

    static MLPParams zeros(std::size_t in, std::size_t hidden, std::size_t out);
    MLPParams zeros_like() const { return zeros(in_dim(), hidden_dim(), out_dim()); }

    bool operator==(const MLPParams&) const = default;
};

// Pre- and post-activation values kept for the backward pass.
struct MLPForwardCache {
    std::vector<double> input;
    std::vector<double> pre1, hidden1, pre2, hidden2;
    std::vector<double> output;
};

std::vector<double> mlp_forward(const MLPParams& p, std::span<const double> x);
MLPForwardCache mlp_forward_cached(const MLPParams& p, std::span<const double> x);

struct MLPGradients {
    MLPParams params;
    std::vector<double> input;
};

MLPGradients mlp_backward(const MLPParams& p, std::span<const double> x, std::span<const double> grad_out);

// Adds d(loss)/d(params) into `grads`; writes d(loss)/d(x) into grad_in when
// it is non-empty.
void mlp_backward_accumulate(const MLPParams& p, const MLPForwardCache& cache, std::span<const double> grad_out,
                             MLPParams& grads, std::span<double> grad_in = {});

struct ProjectionDims {
    std::size_t d_2d = 1024;
    std::size_t d_v = 1024;
    std::size_t d_e = 512;
    std::size_t d_model = 64;
    std::size_t hidden = 0;  // 0 means d_model

    std::size_t hidden_width() const { return hidden == 0 ? d_model : hidden; }
    bool operator==(const ProjectionDims&) const = default;
};

struct ProjectionSet {
    MLPParams f2d;
    MLPParams fv;
    MLPParams fe;
    Matrix id_table;  // kMaxObjects x d_model

    ProjectionDims dims() const;
    bool operator==(const ProjectionSet&) const = default;
};

// Weights ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases 0;
// identifier rows ~ N(0, 0.02).
ProjectionSet init_params(std::uint64_t seed, const ProjectionDims& dims);

// Fills seq.embeddings: identifier rows from id_table, 2D slots from f2d,
// node slots from fv and edge slots from fe.
FlatSequence project_sequence(FlatSequence seq, const RawFeatures& raw, const ProjectionSet& ps);

// "3DGC", u32 version, u32 d_2d d_v d_e d_model hidden id_rows, then 3DGF
// blocks: for f2d, fv, fe in turn W1 b1 W2 b2 W3 b3, then id_table.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const ProjectionSet& ps);
ProjectionSet load_checkpoint(const std::filesystem::path& path);

}  // namespace graphtok3d
