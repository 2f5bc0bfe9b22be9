#pragma once

// Random input builders and independent reference implementations used by
// the unit tests and the acceptance runner.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "graphtok3d/graph.hpp"
#include "graphtok3d/projection.hpp"
#include "graphtok3d/rng.hpp"
#include "graphtok3d/scene.hpp"
#include "graphtok3d/trainer.hpp"

namespace gt3test {

using namespace graphtok3d;

std::vector<Point> random_cloud(Rng& rng, const Vec3& center, double half_extent, std::size_t count);

// n objects with random centers in [0, room]^3. The last `duplicates` objects
// are exact copies of randomly chosen earlier ones.
Scene random_scene(Rng& rng, std::size_t n, double room = 5.0, std::size_t duplicates = 0);

AxisAlignedBox random_box(Rng& rng, double span, double min_size, double max_size);

// Counts grid cells of side `res` whose centers fall inside each box. Box
// membership factorizes over axes, so per-axis counts multiply to the 3D count.
double voxel_iou(const AxisAlignedBox& a, const AxisAlignedBox& b, double res);

// Exhaustive search over injective assignments of the smaller list into the
// larger: maximal number of pairs with IoU > threshold.
std::size_t brute_force_match_count(std::span<const AxisAlignedBox> pred, std::span<const AxisAlignedBox> gt,
                                    double threshold);

// Full sort of every candidate by (distance, id).
std::vector<std::vector<ObjectId>> knn_oracle(const Scene& scene, std::span<const ObjectId> survivors,
                                              std::size_t k, double min_dist);

// -log softmax(logits)[answer] in long double.
long double nll_oracle(std::span<const double> logits, std::size_t answer);

// Forward pass written against Eigen.
std::vector<double> eigen_mlp_forward(const MLPParams& p, std::span<const double> x);

// Sentence BLEU-4 from explicit n-gram lists.
double bleu4_oracle(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& refs,
                    bool smoothing);

// Answer normalization via regular expressions.
std::string normalize_oracle(const std::string& text);

// Re-derives every object satisfying a grounding query from centroids.
std::vector<ObjectId> grounding_oracle(const Scene& scene, const std::vector<std::size_t>& classes,
                                       const toy::GroundingQuery& query);

// Random MLP with weights of a given scale.
MLPParams random_mlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out, double scale);

struct GradCheckResult {
    std::size_t instances = 0;
    std::size_t values_checked = 0;
    double max_error = 0;      // relative error over values above the absolute floor
    double max_abs_error = 0;
    bool ok = true;
};

// Compares analytic parameter and input gradients of L = w . mlp(x) with
// central differences of step h. A value passes when the absolute error is at
// most 1e-2 * h or the relative error at most rel_tol.
GradCheckResult mlp_gradient_check(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out,
                                   std::size_t instances, double h = 1e-4, double rel_tol = 1e-4);

}  // namespace gt3test
