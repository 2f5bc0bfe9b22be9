// graphtok3d: scene graph construction, tokenization, toy training and
// evaluation from the command line.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphtok3d/binary_io.hpp"
#include "graphtok3d/error.hpp"
#include "graphtok3d/flatten.hpp"
#include "graphtok3d/graph.hpp"
#include "graphtok3d/metrics.hpp"
#include "graphtok3d/projection.hpp"
#include "graphtok3d/report.hpp"
#include "graphtok3d/rng.hpp"
#include "graphtok3d/scene.hpp"
#include "graphtok3d/trainer.hpp"

namespace fs = std::filesystem;
using namespace graphtok3d;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
    return dir;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// "d_2d,d_v,d_e,d_model[,hidden]"
ProjectionDims parse_dims(const std::string& text) {
    std::vector<std::size_t> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long long x = 0;
        try {
            x = std::stoull(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || item.empty() || x == 0)
            throw Error(ErrorKind::ParseError, "--dims: '" + item + "' is not a positive integer");
        v.push_back(static_cast<std::size_t>(x));
    }
    if (v.size() != 4 && v.size() != 5)
        throw Error(ErrorKind::ParseError, "--dims expects d_2d,d_v,d_e,d_model[,hidden]");
    return {v[0], v[1], v[2], v[3], v.size() == 5 ? v[4] : 0};
}

std::optional<double> parse_nms(const std::string& text) {
    if (text == "off" || text == "none") return std::nullopt;
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || !(v >= 0.0 && v <= 1.0))
        throw Error(ErrorKind::ParseError, "--nms-iou expects a value in [0,1] or 'off'");
    return v;
}

toy::Optimizer parse_optimizer(const std::string& name) {
    if (name == "adam") return toy::Optimizer::Adam;
    if (name == "sgd") return toy::Optimizer::Sgd;
    throw Error(ErrorKind::ParseError, "--optimizer expects adam or sgd");
}

std::optional<toy::Relation> parse_relation(const std::string& name) {
    if (name.empty() || name == "any") return std::nullopt;
    for (std::size_t r = 0; r < toy::kRelationCount; ++r)
        if (toy::to_string(static_cast<toy::Relation>(r)) == name) return static_cast<toy::Relation>(r);
    throw Error(ErrorKind::ParseError, "unknown relation '" + name + "'");
}

// Flat key=value experiment config. Each line becomes --key=value placed
// before the command-line flags, so explicit flags win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string file;
        std::size_t span = 0;
        if (args[i] == "--config" && i + 1 < args.size()) {
            file = args[i + 1];
            span = 2;
        } else if (args[i].rfind("--config=", 0) == 0) {
            file = args[i].substr(9);
            span = 1;
        } else {
            continue;
        }
        std::vector<std::string> expanded;
        std::istringstream in(read_text(file));
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorKind::ParseError, file + ":" + std::to_string(line_no) + ": expected key=value");
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw Error(ErrorKind::ParseError, file + ":" + std::to_string(line_no) + ": empty key");
            if (value == "true")
                expanded.push_back("--" + key);
            else if (value != "false")
                expanded.push_back("--" + key + "=" + value);
        }
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + span));
        // insert right after the subcommand name
        std::size_t at = 0;
        while (at < args.size() && args[at].rfind("-", 0) == 0) ++at;
        at = std::min(at + 1, args.size());
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), expanded.begin(), expanded.end());
        return args;
    }
    return args;
}

constexpr const char* kDefaultsNote = "(reference operating point)";

// ---------------------------------------------------------------------------

struct GraphArgs {
    std::size_t k = 2;
    std::string nms = "0.99";
    double min_dist = 0.01;

    void add(CLI::App* cmd) {
        cmd->add_option("--k", k, std::string("Nearest neighbors per object; default 2 ") + kDefaultsNote)
            ->capture_default_str();
        cmd->add_option("--nms-iou", nms,
                        std::string("NMS IoU threshold in [0,1] or 'off'; default 0.99 ") + kDefaultsNote)
            ->capture_default_str();
        cmd->add_option("--min-dist", min_dist,
                        std::string("Minimum neighbor centroid distance in meters; default 0.01 ") + kDefaultsNote)
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str();
    }

    GraphConfig config() const {
        GraphConfig cfg;
        cfg.k = k;
        cfg.nms_iou_threshold = parse_nms(nms);
        cfg.min_neighbor_distance = min_dist;
        return cfg;
    }
};

struct BuildGraphArgs {
    std::string scene, out, edge_features, dims;
    GraphArgs graph;
};

int cmd_build_graph(const BuildGraphArgs& a) {
    const Scene scene = load_scene(a.scene);
    GraphConfig cfg = a.graph.config();
    std::optional<io::EdgeFeatureTable> external;
    if (!a.edge_features.empty()) {
        external = io::read_edge_features_file(a.edge_features);
        cfg.relation_source = RelationSource::ExternalFile;
        cfg.edge_feature_dim = external->dim;
    } else if (!a.dims.empty()) {
        cfg.edge_feature_dim = parse_dims(a.dims).d_e;
    }
    const auto graph = build_scene_graph(scene, cfg, external ? &*external : nullptr);
    const fs::path out = prepare_out(a.out);
    write_text(out / "graph.json", graph_to_json(graph, cfg));
    io::write_edge_features_file(out / "edge_features.3dgf", edge_feature_table(graph));
    std::cout << "objects " << scene.size() << ", survivors " << graph.topology.survivors.size() << ", edges "
              << graph.edges.size() << "\n";
    return 0;
}

struct BudgetArgs {
    std::uint64_t n = 0, k = 2;
    bool as_json = false;
};

int cmd_budget(const BudgetArgs& a) {
    const std::uint64_t knn = token_budget(a.n, a.k);
    const std::uint64_t full = token_budget_full(a.n);
    std::string ratio = "n/a";
    if (knn > 0) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", static_cast<double>(full) / static_cast<double>(knn));
        ratio = buf;
    }
    if (a.as_json) {
        json j{{"n", a.n}, {"k", a.k}, {"knn_tokens", knn}, {"complete_tokens", full}};
        j["reduction_ratio"] = knn > 0 ? json(static_cast<double>(full) / static_cast<double>(knn)) : json(nullptr);
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::printf("%-8s %-4s %-12s %-16s %s\n", "n", "k", "knn_tokens", "complete_tokens", "ratio");
    std::printf("%-8llu %-4llu %-12llu %-16llu %s\n", static_cast<unsigned long long>(a.n),
                static_cast<unsigned long long>(a.k), static_cast<unsigned long long>(knn),
                static_cast<unsigned long long>(full), ratio.c_str());
    return 0;
}

struct TokenizeArgs {
    std::string graph, out, layout = "triplet", z2d, zv, edge_features, checkpoint, dims, query, target;
    std::uint64_t seed = 0;
};

int cmd_tokenize(const TokenizeArgs& a) {
    const GraphTopology topo = parse_graph_json(read_text(a.graph));
    FlatSequence seq = flatten(topo, parse_layout(a.layout));
    const fs::path out = prepare_out(a.out);

    if (a.z2d.empty() != a.zv.empty()) throw Error(ErrorKind::MissingFeature, "--z2d and --zv must be given together");
    if (!a.z2d.empty()) {
        RawFeatures raw;
        raw.z2d = io::read_matrix_file(a.z2d);
        raw.zv = io::read_matrix_file(a.zv);
        std::size_t d_e = 512;
        if (!a.edge_features.empty()) {
            auto table = io::read_edge_features_file(a.edge_features);
            d_e = table.dim;
            raw.ze = std::move(table.rows);
        }
        ProjectionSet ps;
        if (!a.checkpoint.empty()) {
            ps = load_checkpoint(a.checkpoint);
        } else {
            ProjectionDims dims{raw.z2d.cols(), raw.zv.cols(), d_e, 64, 0};
            if (!a.dims.empty()) dims = parse_dims(a.dims);
            ps = init_params(derive_seed(a.seed, "projection"), dims);
        }
        seq = project_sequence(std::move(seq), raw, ps);
        io::write_matrix_file(out / "embeddings.3dgf", seq.embeddings);
    }

    write_text(out / "sequence.json", sequence_to_json(seq));
    std::optional<std::string_view> target;
    if (!a.target.empty()) target = a.target;
    write_text(out / "prompt.json", prompt_to_json(assemble_prompt(seq, a.query, target)));
    std::cout << "slots " << seq.slots.size() << "\n";
    return 0;
}

struct GenerateArgs {
    std::string out, relation, dims;
    std::uint64_t seed = 0;
    std::size_t n_objects = 8, classes = 8;
    bool noisy = false;
};

int cmd_generate(const GenerateArgs& a) {
    toy::GeneratorConfig cfg;
    cfg.n_objects = a.n_objects;
    cfg.class_vocab = a.classes;
    cfg.noisy_duplicates = a.noisy;
    cfg.relation = parse_relation(a.relation);
    if (!a.dims.empty()) {
        const auto d = parse_dims(a.dims);
        cfg.d_2d = d.d_2d;
        cfg.d_v = d.d_v;
    }
    const auto s = toy::generate_synthetic_scene(a.seed, cfg);
    const fs::path out = prepare_out(a.out);
    save_scene(s.scene, out / "scene.json", PointStorage::BinaryFiles);
    io::write_matrix_file(out / "z2d.3dgf", s.raw.z2d);
    io::write_matrix_file(out / "zv.3dgf", s.raw.zv);
    json examples = json::array();
    for (const auto& ex : s.examples)
        examples.push_back({{"target_class", ex.query.target_class},
                            {"relation", std::string(toy::to_string(ex.query.relation))},
                            {"anchor_class", ex.query.anchor_class},
                            {"answer", ex.answer},
                            {"answer_token", identifier_token(ex.answer)}});
    json doc{{"scene_id", s.scene.scene_id()}, {"classes", s.classes}, {"examples", examples}};
    write_text(out / "queries.json", doc.dump(2) + "\n");
    std::cout << "objects " << s.scene.size() << "\n";
    return 0;
}

struct ToyArgs {
    std::string out, layout = "triplet", dims = "32,32,24,32", optimizer = "adam", relation, report;
    GraphArgs graph;
    std::uint64_t seed = 0;
    std::size_t seeds = 1, epochs = 20, batch_size = 16, train_examples = 1000, eval_examples = 500;
    std::size_t n_objects = 8, classes = 8;
    double lr = 1e-3, relational_fraction = 1.0;
    bool noisy = false;

    void add(CLI::App* cmd) {
        cmd->add_option("--out", out, "Output directory")->required();
        cmd->add_option("--seed", seed, "Base seed; seed i of the run is seed + i")->capture_default_str();
        cmd->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber)->capture_default_str();
        graph.add(cmd);
        cmd->add_option("--layout", layout, "triplet or edge_only")->capture_default_str();
        cmd->add_option("--dims", dims, "d_2d,d_v,d_e,d_model[,hidden] (desk-scale widths)")->capture_default_str();
        cmd->add_option("--lr", lr, "Learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
        cmd->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        cmd->add_option("--batch-size", batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--optimizer", optimizer, "adam (beta 0.9/0.999, eps 1e-8) or sgd")->capture_default_str();
        cmd->add_option("--train-examples", train_examples, "Training scenes per seed")->capture_default_str();
        cmd->add_option("--eval-examples", eval_examples, "Evaluation scenes per seed")->capture_default_str();
        cmd->add_option("--n-objects", n_objects, "Objects per synthetic scene")->capture_default_str();
        cmd->add_option("--classes", classes, "Class vocabulary size")->capture_default_str();
        cmd->add_option("--relational-fraction", relational_fraction,
                        "Fraction of relational queries; the rest name a unique class")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        cmd->add_option("--relation", relation, "Force one relation (left_of, right_of, above, below, nearest_to, none)");
        cmd->add_flag("--noisy", noisy, "Add exact duplicate proposals (filtered by NMS)");
        cmd->add_option("--report", report, "'plot' writes report.svg");
    }

    toy::AblationConfig ablation() const {
        toy::AblationConfig c;
        c.generator.n_objects = n_objects;
        c.generator.class_vocab = classes;
        c.generator.relational_fraction = relational_fraction;
        c.generator.relation = parse_relation(relation);
        c.generator.noisy_duplicates = noisy;
        c.train_examples = train_examples;
        c.eval_examples = eval_examples;
        c.seed = seed;
        c.seeds = seeds;
        c.graph = graph.config();
        c.k = c.graph.k;
        c.layout = parse_layout(layout);
        c.dims = parse_dims(dims);
        c.train.lr = lr;
        c.train.epochs = epochs;
        c.train.batch_size = batch_size;
        c.train.optimizer = parse_optimizer(optimizer);
        if (!report.empty() && report != "plot") throw Error(ErrorKind::ParseError, "--report expects 'plot'");
        return c;
    }
};

json config_json(const toy::AblationConfig& c) {
    return {{"seed", c.seed},
            {"seeds", c.seeds},
            {"k", c.k},
            {"nms_iou", c.graph.nms_iou_threshold ? json(*c.graph.nms_iou_threshold) : json("off")},
            {"min_dist", c.graph.min_neighbor_distance},
            {"layout", std::string(to_string(c.layout))},
            {"dims", {c.dims.d_2d, c.dims.d_v, c.dims.d_e, c.dims.d_model, c.dims.hidden_width()}},
            {"lr", c.train.lr},
            {"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"optimizer", c.train.optimizer == toy::Optimizer::Adam ? "adam" : "sgd"},
            {"train_examples", c.train_examples},
            {"eval_examples", c.eval_examples},
            {"n_objects", c.generator.n_objects},
            {"classes", c.generator.class_vocab},
            {"relational_fraction", c.generator.relational_fraction},
            {"noisy", c.generator.noisy_duplicates}};
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

int cmd_train_toy(const ToyArgs& a) {
    const toy::AblationConfig c = a.ablation();
    toy::GeneratorConfig gen = c.generator;
    gen.d_2d = c.dims.d_2d;
    gen.d_v = c.dims.d_v;
    GraphConfig g = c.graph;
    g.edge_feature_dim = c.dims.d_e;
    const fs::path out = prepare_out(a.out);

    std::string csv = "seed,epoch,mean_loss\n";
    json per_seed = json::array();
    std::vector<double> accs;
    std::vector<LossCurve> curves;
    std::vector<AccuracyBar> bars;
    for (std::size_t i = 0; i < c.seeds; ++i) {
        const std::uint64_t seed = c.seed + i;
        const auto train_scenes = toy::generate_scenes(derive_seed(seed, "train"), c.train_examples, gen);
        const auto eval_scenes = toy::generate_scenes(derive_seed(seed, "eval"), c.eval_examples, gen);
        const auto train_eps = toy::make_episodes(train_scenes, g, c.layout);
        const auto eval_eps = toy::make_episodes(eval_scenes, g, c.layout);
        toy::TrainConfig tc = c.train;
        tc.seed = derive_seed(seed, "train_order");
        const auto init = toy::init_toy_model(derive_seed(seed, "model"), c.dims, gen.class_vocab);
        const auto result = toy::train(init, train_eps, tc);
        const double acc = toy::evaluate_grounding(result.model, eval_eps);
        for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
            csv += std::to_string(seed) + "," + std::to_string(e + 1) + "," + format_double(result.epoch_losses[e]) + "\n";
        save_checkpoint(out / ("checkpoint_seed" + std::to_string(seed) + ".3dgc"), result.model.projection);
        per_seed.push_back({{"seed", seed},
                            {"accuracy", acc},
                            {"final_loss", result.epoch_losses.empty() ? json(nullptr) : json(result.epoch_losses.back())}});
        accs.push_back(acc);
        curves.push_back({"seed " + std::to_string(seed), result.epoch_losses});
        bars.push_back({"seed " + std::to_string(seed), acc});
        std::cout << "seed " << seed << " accuracy " << acc << "\n";
    }
    const auto [mean, sd] = mean_std(accs);
    json doc{{"config", config_json(c)}, {"per_seed", per_seed}, {"accuracy", {{"mean", mean}, {"std", sd}}}};
    write_text(out / "losses.csv", csv);
    write_text(out / "results.json", doc.dump(2) + "\n");
    if (a.report == "plot") write_text(out / "report.svg", training_report_svg(curves, bars));
    return 0;
}

int cmd_ablation(const ToyArgs& a) {
    const toy::AblationConfig c = a.ablation();
    if (c.k == 0) throw Error(ErrorKind::ParseError, "ablation compares k against k = 0; --k must be positive");
    const auto r = toy::run_ablation(c);
    const fs::path out = prepare_out(a.out);

    std::string csv = "seed,k,epoch,mean_loss\n";
    std::vector<LossCurve> curves;
    for (const auto& o : r.per_seed) {
        for (const auto& [k, losses] : {std::pair{c.k, &o.losses_k}, std::pair{std::size_t{0}, &o.losses_0}}) {
            for (std::size_t e = 0; e < losses->size(); ++e)
                csv += std::to_string(o.seed) + "," + std::to_string(k) + "," + std::to_string(e + 1) + "," +
                       format_double((*losses)[e]) + "\n";
            curves.push_back({"seed " + std::to_string(o.seed) + " k=" + std::to_string(k), *losses});
        }
    }
    auto doc = json::parse(toy::ablation_to_json(r));
    doc["config"] = config_json(c);
    write_text(out / "losses.csv", csv);
    write_text(out / "ablation.json", doc.dump(2) + "\n");
    if (a.report == "plot")
        write_text(out / "report.svg",
                   training_report_svg(curves, {{"k=" + std::to_string(c.k), r.mean_k},
                                                {"k=0", r.mean_0},
                                                {"k=" + std::to_string(c.k) + " zeroed", r.mean_zeroed}}));
    std::printf("accuracy k=%zu %.4f +- %.4f | k=0 %.4f +- %.4f | zeroed %.4f\n", c.k, r.mean_k, r.std_k, r.mean_0,
                r.std_0, r.mean_zeroed);
    std::printf("paired one-sided p = %.3g, zeroed within 3 sigma of k=0: %s\n", r.p_value,
                r.zeroed_within_3_sigma ? "yes" : "no");
    return 0;
}

struct EvalArgs {
    std::string input, out;
    std::vector<double> thresholds{0.25, 0.5};
    bool smoothing = false;
};

int cmd_eval(const EvalArgs& a) {
    metrics::EvalOptions opt;
    opt.thresholds = a.thresholds;
    opt.bleu_smoothing = a.smoothing;
    const std::string text = metrics::evaluate_jsonl(read_text(a.input), opt);
    const fs::path out = prepare_out(a.out);
    write_text(out / "metrics.json", text);
    const auto doc = json::parse(text);
    for (const auto& [name, value] : doc["metrics"].items())
        std::printf("%-10s %s\n", name.c_str(), value.is_null() ? "n/a" : value.dump().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scene graph to token sequence pipeline: build k-NN scene graphs from segmented point clouds, "
                 "flatten them into token sequences, train the toy grounding head and compute grounding and "
                 "captioning metrics.\nExit codes: 0 ok, 2 parse/io, 3 validation, 4 missing feature, 5 training "
                 "divergence."};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    BuildGraphArgs bg;
    auto* build = app.add_subcommand("build-graph", "Build the filtered k-NN scene graph and its edge features");
    build->add_option("--scene", bg.scene, "Scene manifest (JSON)")->required();
    build->add_option("--out", bg.out, "Output directory for graph.json and edge_features.3dgf")->required();
    bg.graph.add(build);
    build->add_option("--edge-features", bg.edge_features,
                      "External edge feature file; replaces the geometric stand-in");
    build->add_option("--dims", bg.dims,
                      std::string("d_2d,d_v,d_e,d_model; d_e sets the stand-in edge width; default 1024,1024,512,64 ") +
                          kDefaultsNote);

    BudgetArgs bu;
    auto* budget = app.add_subcommand("budget", "Token counts for the k-NN and complete-graph sequences");
    budget->add_option("--n", bu.n, "Object count")->required();
    budget->add_option("--k", bu.k, std::string("Neighbors per object; default 2 ") + kDefaultsNote)->capture_default_str();
    budget->add_flag("--json", bu.as_json, "Print JSON instead of a table");

    TokenizeArgs tk;
    auto* tokenize = app.add_subcommand("tokenize", "Flatten a graph into token slots, embeddings and a prompt");
    tokenize->add_option("--graph", tk.graph, "graph.json from build-graph")->required();
    tokenize->add_option("--out", tk.out, "Output directory")->required();
    tokenize->add_option("--layout", tk.layout, "triplet (default) or edge_only")->capture_default_str();
    tokenize->add_option("--z2d", tk.z2d, "Per-object 2D features (3DGF, row = object id)");
    tokenize->add_option("--zv", tk.zv, "Per-object point cloud features (3DGF, row = object id)");
    tokenize->add_option("--edge-features", tk.edge_features, "Edge features from build-graph or an external encoder");
    tokenize->add_option("--checkpoint", tk.checkpoint, "Projection checkpoint (3DGC); otherwise initialized from --seed");
    tokenize->add_option("--dims", tk.dims,
                         std::string("d_2d,d_v,d_e,d_model[,hidden]; default from the feature files with d_model 64 ") +
                             kDefaultsNote);
    tokenize->add_option("--seed", tk.seed, "Seed for projection initialization")->capture_default_str();
    tokenize->add_option("--query", tk.query, "User query placed in the prompt");
    tokenize->add_option("--target", tk.target, "Assistant answer, e.g. <OBJ001>");

    GenerateArgs ge;
    auto* generate = app.add_subcommand("generate", "Write a synthetic relational scene with features and a query");
    generate->add_option("--out", ge.out, "Output directory")->required();
    generate->add_option("--seed", ge.seed, "Scene seed")->capture_default_str();
    generate->add_option("--n-objects", ge.n_objects, "Objects in the scene")->capture_default_str();
    generate->add_option("--classes", ge.classes, "Class vocabulary size")->capture_default_str();
    generate->add_option("--relation", ge.relation, "Force the query relation");
    generate->add_option("--dims", ge.dims, "d_2d,d_v,d_e,d_model; only d_2d and d_v are used (default 32,32)");
    generate->add_flag("--noisy", ge.noisy, "Add exact duplicate proposals");

    ToyArgs tt;
    auto* train_toy = app.add_subcommand("train-toy", "Train the grounding head on synthetic scenes");
    tt.add(train_toy);

    ToyArgs ab;
    ab.seed = 1;
    ab.seeds = 5;
    ab.epochs = 30;
    ab.lr = 3e-3;
    auto* ablation = app.add_subcommand("ablation", "Paired k-edges versus k = 0 experiment with a zeroed-edge control");
    ab.add(ablation);

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Grounding and captioning metrics over a JSONL file");
    eval->add_option("--input", ev.input, "JSONL predictions")->required();
    eval->add_option("--out", ev.out, "Output directory for metrics.json")->required();
    eval->add_option("--thresholds", ev.thresholds, "IoU thresholds")->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->capture_default_str();
    eval->add_flag("--bleu-smoothing", ev.smoothing, "Add-one smoothing for n >= 2 (default off)");

    // consumed by expand_config before parsing; registered for --help
    for (auto* cmd : {build, budget, tokenize, generate, train_toy, ablation, eval})
        cmd->add_option("--config", "Flat key=value file; explicit flags override it");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    }

    try {
        if (*build) return cmd_build_graph(bg);
        if (*budget) return cmd_budget(bu);
        if (*tokenize) return cmd_tokenize(tk);
        if (*generate) return cmd_generate(ge);
        if (*train_toy) return cmd_train_toy(tt);
        if (*ablation) return cmd_ablation(ab);
        if (*eval) return cmd_eval(ev);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: IoError: " << e.what() << "\n";
        return exit_code(ErrorKind::IoError);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
