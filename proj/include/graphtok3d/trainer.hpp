#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graphtok3d/flatten.hpp"
#include "graphtok3d/graph.hpp"
#include "graphtok3d/projection.hpp"
#include "graphtok3d/scene.hpp"

// Desk-scale grounding experiment. A language model answering with a single
// identifier token reduces next-token NLL to cross-entropy over the scene's
// objects, so a dot-product head over pooled object tokens stands in for it.
namespace graphtok3d::toy {

enum class Relation { None, LeftOf, RightOf, Above, Below, NearestTo };
inline constexpr std::size_t kRelationCount = 6;

std::string_view to_string(Relation r);

struct GroundingQuery {
    std::size_t target_class = 0;
    Relation relation = Relation::None;
    std::size_t anchor_class = 0;  // unused for Relation::None

    bool operator==(const GroundingQuery&) const = default;
};

struct GroundingExample {
    GroundingQuery query;
    ObjectId answer = 0;
};

// Relation predicates on object centroids. Directional relations need the
// anchor within kNearRadius and the offset dominated by the named axis;
// nearest_to needs the target's closest anchor to beat every other
// target-class object's by kNearestMargin.
inline constexpr double kNearRadius = 1.5;
inline constexpr double kNearestMargin = 0.1;

bool satisfies(const Scene& scene, std::span<const std::size_t> classes, ObjectId candidate,
               const GroundingQuery& query);
std::vector<ObjectId> matching_objects(const Scene& scene, std::span<const std::size_t> classes,
                                       const GroundingQuery& query);

struct GeneratorConfig {
    std::size_t n_objects = 8;
    std::size_t class_vocab = 8;
    std::size_t d_2d = 32;
    std::size_t d_v = 32;
    double room_size = 10.0;
    double feature_noise = 0.05;
    double relational_fraction = 1.0;  // remaining queries name a unique class
    std::optional<Relation> relation;  // force the query relation
    bool noisy_duplicates = false;     // add exact duplicate proposals
    double duplicate_rate = 0.3;
    std::size_t max_retries = 200;
};

struct SyntheticScene {
    Scene scene;
    RawFeatures raw;                   // z2d / zv only; ze comes from the graph
    std::vector<std::size_t> classes;  // per object id
    std::vector<GroundingExample> examples;
};

// Objects are small boxes of points in a square room. Relational queries
// always have at least two objects of the target class, each paired with a
// nearby anchor-class object, and exactly one pair realizes the relation.
SyntheticScene generate_synthetic_scene(std::uint64_t seed, const GeneratorConfig& cfg);
SyntheticScene generate_synthetic_scene(std::uint64_t seed, std::size_t n_objects, std::size_t class_vocab);

// -log softmax(logits)[answer], evaluated stably.
double nll_loss(std::span<const double> logits, std::size_t answer);

struct ToyModel {
    ProjectionSet projection;
    Matrix target_table;    // class_vocab x d_model
    Matrix relation_table;  // kRelationCount x d_model
    Matrix anchor_table;    // class_vocab x d_model

    // Every trainable array in a fixed order.
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;
    ToyModel zeros_like() const;

    bool operator==(const ToyModel&) const = default;
};

ToyModel init_toy_model(std::uint64_t seed, const ProjectionDims& dims, std::size_t class_vocab);

// A query bound to its flattened scene. Candidates are the graph survivors in
// ascending id order.
struct Episode {
    FlatSequence sequence;
    RawFeatures raw;
    GroundingQuery query;
    std::vector<ObjectId> candidates;
    std::size_t answer_index = 0;
};

std::vector<Episode> make_episodes(std::span<const SyntheticScene> scenes, const GraphConfig& graph_cfg,
                                   Layout layout = Layout::Triplet);

struct ForwardOptions {
    bool zero_edges = false;  // force edge token embeddings to zero
};

std::vector<double> score_candidates(const ToyModel& model, const Episode& ep, const ForwardOptions& opt = {});

// Mean loss over the episodes; when grads is given it receives the mean
// gradient (shape of zeros_like()).
double loss_and_gradient(const ToyModel& model, std::span<const Episode> episodes, ToyModel* grads,
                         const ForwardOptions& opt = {});

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
    double lr = 1e-3;
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainResult {
    ToyModel model;
    std::vector<double> epoch_losses;  // mean training loss per epoch
};

// Single-threaded and deterministic given cfg.seed. Throws TrainingDiverged
// with the step index when the loss becomes non-finite.
TrainResult train(ToyModel model, std::span<const Episode> data, const TrainConfig& cfg);

double evaluate_grounding(const ToyModel& model, std::span<const Episode> episodes, const ForwardOptions& opt = {});

struct AblationConfig {
    GeneratorConfig generator;
    std::size_t train_examples = 1000;
    std::size_t eval_examples = 500;
    std::uint64_t seed = 1;
    std::size_t seeds = 5;
    std::size_t k = 2;
    GraphConfig graph;  // k is overridden per arm
    Layout layout = Layout::Triplet;
    ProjectionDims dims{32, 32, 24, 32, 32};
    TrainConfig train{3e-3, 30, 16, 0, Optimizer::Adam, 0.9, 0.999, 1e-8};
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    double accuracy_k = 0;
    double accuracy_0 = 0;
    double accuracy_k_zeroed = 0;
    std::vector<double> losses_k;
    std::vector<double> losses_0;
};

struct AblationResult {
    std::size_t k = 0;
    std::vector<SeedOutcome> per_seed;
    double mean_k = 0, std_k = 0;
    double mean_0 = 0, std_0 = 0;
    double mean_zeroed = 0, std_zeroed = 0;
    double mean_difference = 0;
    double t_statistic = 0;
    double p_value = 1;           // one-sided paired t-test, k beats 0
    double baseline_sigma = 0;    // binomial std of the k=0 accuracy on the eval set
    bool zeroed_within_3_sigma = false;
};

// Paired experiment: the same scenes and initialization seed train a k-edge
// model and a k = 0 model per seed; the k model is also scored with its edge
// tokens zeroed.
AblationResult run_ablation(const AblationConfig& cfg);

struct PairedTTest {
    double mean_difference = 0;
    double t_statistic = 0;
    double p_value = 1;
};
PairedTTest paired_t_test(std::span<const double> treatment, std::span<const double> control);

std::string ablation_to_json(const AblationResult& result);

// Builds train/eval scene sets for one seed.
std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t count, const GeneratorConfig& cfg);

}  // namespace graphtok3d::toy
