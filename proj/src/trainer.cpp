#include "graphtok3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "graphtok3d/error.hpp"
#include "graphtok3d/parallel.hpp"
#include "graphtok3d/rng.hpp"

namespace graphtok3d::toy {

std::string_view to_string(Relation r) {
    switch (r) {
        case Relation::None: return "none";
        case Relation::LeftOf: return "left_of";
        case Relation::RightOf: return "right_of";
        case Relation::Above: return "above";
        case Relation::Below: return "below";
        case Relation::NearestTo: return "nearest_to";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Relation predicates

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double norm(const Vec3& v) { return std::hypot(v[0], v[1], v[2]); }

// offset = target centroid - anchor centroid
bool directional(Relation r, const Vec3& offset) {
    const double ax = std::abs(offset[0]), ay = std::abs(offset[1]), az = std::abs(offset[2]);
    if (norm(offset) > kNearRadius) return false;
    switch (r) {
        case Relation::LeftOf: return offset[0] < 0 && ax > ay && ax > az;
        case Relation::RightOf: return offset[0] > 0 && ax > ay && ax > az;
        case Relation::Above: return offset[2] > 0 && az > ax && az > ay;
        case Relation::Below: return offset[2] < 0 && az > ax && az > ay;
        default: return false;
    }
}

double nearest_anchor_distance(const Scene& scene, std::span<const std::size_t> classes, ObjectId o,
                               std::size_t anchor_class) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : scene.proposals())
        if (a.id() != o && classes[static_cast<std::size_t>(a.id())] == anchor_class)
            best = std::min(best, norm(sub(scene.object(o).centroid(), a.centroid())));
    return best;
}

}  // namespace

bool satisfies(const Scene& scene, std::span<const std::size_t> classes, ObjectId candidate,
               const GroundingQuery& query) {
    if (classes[static_cast<std::size_t>(candidate)] != query.target_class) return false;
    switch (query.relation) {
        case Relation::None:
            return std::count(classes.begin(), classes.end(), query.target_class) == 1;
        case Relation::NearestTo: {
            const double mine = nearest_anchor_distance(scene, classes, candidate, query.anchor_class);
            if (!std::isfinite(mine)) return false;
            for (const auto& o : scene.proposals()) {
                if (o.id() == candidate || classes[static_cast<std::size_t>(o.id())] != query.target_class) continue;
                if (!(mine + kNearestMargin < nearest_anchor_distance(scene, classes, o.id(), query.anchor_class)))
                    return false;
            }
            return true;
        }
        default:
            for (const auto& a : scene.proposals()) {
                if (a.id() == candidate || classes[static_cast<std::size_t>(a.id())] != query.anchor_class) continue;
                if (directional(query.relation, sub(scene.object(candidate).centroid(), a.centroid()))) return true;
            }
            return false;
    }
}

std::vector<ObjectId> matching_objects(const Scene& scene, std::span<const std::size_t> classes,
                                       const GroundingQuery& query) {
    std::vector<ObjectId> out;
    for (const auto& o : scene.proposals())
        if (satisfies(scene, classes, o.id(), query)) out.push_back(o.id());
    return out;
}

// ---------------------------------------------------------------------------
// Scene generator

namespace {

struct Placement {
    Vec3 center;
    std::size_t cls;
};

const std::array<Vec3, 6> kAxes{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

std::size_t axis_for(Relation r) {
    switch (r) {
        case Relation::RightOf: return 0;
        case Relation::LeftOf: return 1;
        case Relation::Above: return 4;
        case Relation::Below: return 5;
        default: return 0;
    }
}

std::vector<Point> box_cloud(Rng& rng, const Vec3& center, std::size_t cls, std::size_t vocab) {
    const Vec3 half{rng.uniform(0.06, 0.18), rng.uniform(0.06, 0.18), rng.uniform(0.06, 0.18)};
    const std::size_t count = 24 + rng.index(25);
    // one hue band per class
    const double hue = static_cast<double>(cls) / static_cast<double>(std::max<std::size_t>(vocab, 1));
    const Vec3 base{0.5 + 0.5 * std::cos(6.283185307179586 * hue), 0.5 + 0.5 * std::cos(6.283185307179586 * (hue + 0.333)),
                    0.5 + 0.5 * std::cos(6.283185307179586 * (hue + 0.667))};
    std::vector<Point> pts(count);
    for (auto& p : pts) {
        p.x = static_cast<float>(center[0] + rng.uniform(-half[0], half[0]));
        p.y = static_cast<float>(center[1] + rng.uniform(-half[1], half[1]));
        p.z = static_cast<float>(center[2] + rng.uniform(-half[2], half[2]));
        p.r = static_cast<float>(std::clamp(base[0] + rng.uniform(-0.03, 0.03), 0.0, 1.0));
        p.g = static_cast<float>(std::clamp(base[1] + rng.uniform(-0.03, 0.03), 0.0, 1.0));
        p.b = static_cast<float>(std::clamp(base[2] + rng.uniform(-0.03, 0.03), 0.0, 1.0));
    }
    return pts;
}

void fill_class_feature(Rng& rng, std::span<double> row, std::size_t cls, std::size_t vocab, double noise) {
    const std::size_t block = row.size() / vocab;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const bool on = i >= cls * block && i < (cls + 1) * block;
        row[i] = (on ? 1.0 : 0.0) + rng.normal(0.0, noise);
    }
}

std::size_t other_class(Rng& rng, std::size_t vocab, std::initializer_list<std::size_t> excluded) {
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < vocab; ++c)
        if (std::find(excluded.begin(), excluded.end(), c) == excluded.end()) pool.push_back(c);
    if (pool.empty()) throw Error(ErrorKind::GenerationError, "class vocabulary too small");
    return pool[rng.index(pool.size())];
}

bool far_enough(const Vec3& p, const std::vector<Placement>& others, std::size_t begin, std::size_t end, double min_dist) {
    for (std::size_t i = begin; i < end; ++i)
        if (norm(sub(p, others[i].center)) < min_dist) return false;
    return true;
}

// Returns placements plus the query; placement 0 is the intended answer.
std::optional<std::pair<std::vector<Placement>, GroundingQuery>> layout_scene(Rng& rng, const GeneratorConfig& cfg) {
    const std::size_t n = cfg.n_objects;
    const std::size_t vocab = cfg.class_vocab;
    const double room = cfg.room_size;
    std::vector<Placement> objs;

    bool relational = n >= 2 && rng.uniform() < cfg.relational_fraction;
    if (cfg.relation) relational = *cfg.relation != Relation::None;

    if (!relational) {
        const std::size_t c = rng.index(vocab);
        for (std::size_t i = 0; i < n; ++i) {
            bool placed = false;
            for (int tries = 0; tries < 200 && !placed; ++tries) {
                const Vec3 p{rng.uniform(0.3, room - 0.3), rng.uniform(0.3, room - 0.3), rng.uniform(0.5, 1.8)};
                if (far_enough(p, objs, 0, objs.size(), 0.5)) {
                    objs.push_back({p, i == 0 ? c : other_class(rng, vocab, {c})});
                    placed = true;
                }
            }
            if (!placed) return std::nullopt;
        }
        return std::make_pair(std::move(objs), GroundingQuery{c, Relation::None, 0});
    }

    const bool same_class = n < 4;
    Relation r;
    if (cfg.relation) {
        r = *cfg.relation;
        if (same_class && r == Relation::NearestTo)
            throw Error(ErrorKind::GenerationError, "nearest_to needs at least four objects");
    } else {
        const std::array<Relation, 5> all{Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below,
                                          Relation::NearestTo};
        r = all[rng.index(same_class ? 4 : 5)];
    }
    const std::size_t c_t = rng.index(vocab);
    const std::size_t c_a = same_class ? c_t : other_class(rng, vocab, {c_t});
    const std::size_t m = same_class ? 1 : 2 + rng.index(std::min<std::size_t>(3, n / 2) - 1);

    std::vector<Vec3> centers;
    for (std::size_t p = 0; p < m; ++p) {
        bool placed = false;
        for (int tries = 0; tries < 200 && !placed; ++tries) {
            const Vec3 c{rng.uniform(1.5, room - 1.5), rng.uniform(1.5, room - 1.5), 1.0 + rng.uniform(-0.1, 0.1)};
            if (std::all_of(centers.begin(), centers.end(), [&](const Vec3& o) { return norm(sub(c, o)) >= 3.5; })) {
                centers.push_back(c);
                placed = true;
            }
        }
        if (!placed) return std::nullopt;
    }

    std::vector<Placement> pairs;
    for (std::size_t p = 0; p < m; ++p) {
        std::size_t axis;
        double dist;
        if (r == Relation::NearestTo) {
            axis = rng.index(4);
            dist = p == 0 ? rng.uniform(0.4, 0.7) : rng.uniform(1.0, 1.4);
        } else {
            const std::size_t wanted = axis_for(r);
            axis = wanted;
            if (p != 0) {
                axis = rng.index(5);
                if (axis >= wanted) ++axis;
            }
            dist = rng.uniform(0.4, 0.7);
        }
        Vec3 offset{};
        for (int a = 0; a < 3; ++a)
            offset[a] = kAxes[axis][a] != 0 ? kAxes[axis][a] * dist : rng.uniform(-0.05, 0.05);
        const Vec3& anchor = centers[p];
        pairs.push_back({{anchor[0] + offset[0], anchor[1] + offset[1], anchor[2] + offset[2]}, c_t});
        pairs.push_back({anchor, c_a});
    }

    objs = pairs;
    const std::size_t fillers = n - 2 * m;
    for (std::size_t f = 0; f < fillers; ++f) {
        bool placed = false;
        for (int tries = 0; tries < 400 && !placed; ++tries) {
            const Vec3 p{rng.uniform(0.3, room - 0.3), rng.uniform(0.3, room - 0.3), rng.uniform(0.5, 1.8)};
            if (far_enough(p, objs, 0, pairs.size(), 1.6) && far_enough(p, objs, pairs.size(), objs.size(), 0.5)) {
                objs.push_back({p, other_class(rng, vocab, {c_t, c_a})});
                placed = true;
            }
        }
        if (!placed) return std::nullopt;
    }
    return std::make_pair(std::move(objs), GroundingQuery{c_t, r, c_a});
}

}  // namespace

SyntheticScene generate_synthetic_scene(std::uint64_t seed, const GeneratorConfig& cfg) {
    if (cfg.n_objects == 0 || cfg.n_objects > kMaxObjects)
        throw Error(ErrorKind::GenerationError, "n_objects must be in [1, 200]");
    if (cfg.class_vocab < 2) throw Error(ErrorKind::GenerationError, "class vocabulary needs at least two classes");
    if (cfg.d_2d < cfg.class_vocab || cfg.d_v < cfg.class_vocab)
        throw Error(ErrorKind::GenerationError, "feature width smaller than the class vocabulary");

    Rng rng(derive_seed(seed, "synthetic_scene"));
    for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
        auto layout = layout_scene(rng, cfg);
        if (!layout) continue;
        auto& [objs, query] = *layout;

        std::vector<std::vector<Point>> clouds;
        for (const auto& o : objs) clouds.push_back(box_cloud(rng, o.center, o.cls, cfg.class_vocab));

        // duplicates are appended after the originals and share their class
        std::vector<std::size_t> source(objs.size());
        std::iota(source.begin(), source.end(), 0);
        if (cfg.noisy_duplicates) {
            const std::size_t originals = objs.size();
            for (std::size_t i = 0; i < originals && source.size() < kMaxObjects; ++i)
                if (rng.uniform() < cfg.duplicate_rate) source.push_back(i);
        }

        std::vector<ObjectId> new_id(source.size());
        std::iota(new_id.begin(), new_id.end(), 0);
        rng.shuffle(new_id.begin(), new_id.end());

        // verify on the duplicate-free scene
        std::vector<ObjectProposal> base;
        std::vector<std::size_t> base_classes(objs.size());
        std::vector<ObjectId> base_id(objs.size());
        {
            std::vector<std::size_t> order(objs.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return new_id[a] < new_id[b]; });
            for (std::size_t rank = 0; rank < order.size(); ++rank) base_id[order[rank]] = static_cast<ObjectId>(rank);
            for (std::size_t i = 0; i < objs.size(); ++i) {
                base.emplace_back(base_id[i], clouds[i]);
                base_classes[static_cast<std::size_t>(base_id[i])] = objs[i].cls;
            }
        }
        const Scene check("check", std::move(base));
        const auto answers = matching_objects(check, base_classes, query);
        if (answers.size() != 1 || answers.front() != base_id[0]) continue;
        if (query.relation != Relation::None &&
            std::count(base_classes.begin(), base_classes.end(), query.target_class) < 2)
            continue;

        std::vector<ObjectProposal> proposals;
        std::vector<std::size_t> classes(source.size());
        for (std::size_t i = 0; i < source.size(); ++i) {
            proposals.emplace_back(new_id[i], clouds[source[i]]);
            classes[static_cast<std::size_t>(new_id[i])] = objs[source[i]].cls;
        }
        ObjectId answer = new_id[0];
        for (std::size_t i = objs.size(); i < source.size(); ++i)
            if (source[i] == 0) answer = std::min(answer, new_id[i]);

        SyntheticScene out{Scene("synthetic_" + std::to_string(seed), std::move(proposals)), {}, classes, {}};
        out.raw.z2d = Matrix(source.size(), cfg.d_2d);
        out.raw.zv = Matrix(source.size(), cfg.d_v);
        for (std::size_t id = 0; id < source.size(); ++id) {
            fill_class_feature(rng, out.raw.z2d.row(id), classes[id], cfg.class_vocab, cfg.feature_noise);
            fill_class_feature(rng, out.raw.zv.row(id), classes[id], cfg.class_vocab, cfg.feature_noise);
        }
        out.examples.push_back({query, answer});
        return out;
    }
    throw Error(ErrorKind::GenerationError,
                "no valid layout after " + std::to_string(cfg.max_retries) + " attempts for " +
                    std::to_string(cfg.n_objects) + " objects");
}

SyntheticScene generate_synthetic_scene(std::uint64_t seed, std::size_t n_objects, std::size_t class_vocab) {
    GeneratorConfig cfg;
    cfg.n_objects = n_objects;
    cfg.class_vocab = class_vocab;
    cfg.d_2d = std::max(cfg.d_2d, class_vocab);
    cfg.d_v = std::max(cfg.d_v, class_vocab);
    return generate_synthetic_scene(seed, cfg);
}

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t count, const GeneratorConfig& cfg) {
    std::vector<SyntheticScene> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) scenes.push_back(generate_synthetic_scene(derive_seed(seed, i), cfg));
    return scenes;
}

// ---------------------------------------------------------------------------
// Model

double nll_loss(std::span<const double> logits, std::size_t answer) {
    if (answer >= logits.size())
        throw Error(ErrorKind::IndexError,
                    "answer " + std::to_string(answer) + " outside " + std::to_string(logits.size()) + " logits");
    const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const double m = logits[top];
    double rest = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (i != top) rest += std::exp(logits[i] - m);
    const double log_norm = rest < 1e-3 ? std::log1p(rest) : std::log(1.0 + rest);
    return (m - logits[answer]) + log_norm;
}

std::vector<std::span<double>> ToyModel::parameters() {
    std::vector<std::span<double>> out;
    for (MLPParams* mlp : {&projection.f2d, &projection.fv, &projection.fe})
        for (auto& l : mlp->layers) {
            out.emplace_back(l.weight.values());
            out.emplace_back(l.bias);
        }
    for (Matrix* m : {&projection.id_table, &target_table, &relation_table, &anchor_table}) out.emplace_back(m->values());
    return out;
}

std::vector<std::span<const double>> ToyModel::parameters() const {
    auto mutable_views = const_cast<ToyModel*>(this)->parameters();
    return {mutable_views.begin(), mutable_views.end()};
}

ToyModel ToyModel::zeros_like() const {
    ToyModel z;
    z.projection.f2d = projection.f2d.zeros_like();
    z.projection.fv = projection.fv.zeros_like();
    z.projection.fe = projection.fe.zeros_like();
    z.projection.id_table = Matrix(projection.id_table.rows(), projection.id_table.cols());
    z.target_table = Matrix(target_table.rows(), target_table.cols());
    z.relation_table = Matrix(relation_table.rows(), relation_table.cols());
    z.anchor_table = Matrix(anchor_table.rows(), anchor_table.cols());
    return z;
}

ToyModel init_toy_model(std::uint64_t seed, const ProjectionDims& dims, std::size_t class_vocab) {
    ToyModel m;
    m.projection = init_params(derive_seed(seed, "projection"), dims);
    Rng rng(derive_seed(seed, "query_tables"));
    m.target_table = Matrix(class_vocab, dims.d_model);
    m.relation_table = Matrix(kRelationCount, dims.d_model);
    m.anchor_table = Matrix(class_vocab, dims.d_model);
    for (Matrix* t : {&m.target_table, &m.relation_table, &m.anchor_table})
        for (double& v : t->values()) v = rng.normal(0.0, 0.02);
    return m;
}

std::vector<Episode> make_episodes(std::span<const SyntheticScene> scenes, const GraphConfig& graph_cfg, Layout layout) {
    std::vector<Episode> out;
    for (const auto& s : scenes) {
        const auto graph = build_scene_graph(s.scene, graph_cfg);
        RawFeatures raw = s.raw;
        for (const auto& e : graph.edges) raw.ze.emplace(EdgeKey{e.src, e.dst}, e.ze);
        const auto seq = flatten(graph.topology, layout);
        for (const auto& ex : s.examples) {
            const auto& cands = graph.topology.survivors;
            auto it = std::lower_bound(cands.begin(), cands.end(), ex.answer);
            if (it == cands.end() || *it != ex.answer)
                throw Error(ErrorKind::GenerationError, "answer object was suppressed by the graph filters");
            out.push_back({seq, raw, ex.query, cands, static_cast<std::size_t>(it - cands.begin())});
        }
    }
    return out;
}

namespace {

std::vector<double> query_vector(const ToyModel& model, const GroundingQuery& q) {
    const std::size_t d = model.target_table.cols();
    std::vector<double> v(d);
    const auto t = model.target_table.row(q.target_class);
    const auto r = model.relation_table.row(static_cast<std::size_t>(q.relation));
    for (std::size_t i = 0; i < d; ++i) v[i] = t[i] + r[i];
    if (q.relation != Relation::None) {
        const auto a = model.anchor_table.row(q.anchor_class);
        for (std::size_t i = 0; i < d; ++i) v[i] += a[i];
    }
    return v;
}

struct EpisodePass {
    std::vector<double> query;
    std::map<ObjectId, MLPForwardCache> f2d, fv;
    std::map<EdgeKey, MLPForwardCache> fe;
    std::vector<std::size_t> slot_block;  // candidate index per slot
    std::vector<std::size_t> block_size;
    std::vector<std::vector<double>> pooled;
    std::vector<double> scores;
};

std::size_t candidate_index(const Episode& ep, ObjectId id) {
    auto it = std::lower_bound(ep.candidates.begin(), ep.candidates.end(), id);
    if (it == ep.candidates.end() || *it != id)
        throw Error(ErrorKind::IndexError, "slot object " + std::to_string(id) + " is not a candidate");
    return static_cast<std::size_t>(it - ep.candidates.begin());
}

EpisodePass forward(const ToyModel& model, const Episode& ep, const ForwardOptions& opt) {
    const auto& ps = model.projection;
    const std::size_t d = ps.id_table.cols();
    EpisodePass pass;
    pass.query = query_vector(model, ep.query);
    pass.block_size.assign(ep.candidates.size(), 0);
    pass.pooled.assign(ep.candidates.size(), std::vector<double>(d, 0.0));
    pass.slot_block.resize(ep.sequence.slots.size());

    std::size_t block = 0;
    for (std::size_t r = 0; r < ep.sequence.slots.size(); ++r) {
        const auto& s = ep.sequence.slots[r];
        if (s.kind == SlotKind::Identifier) block = candidate_index(ep, s.object);
        pass.slot_block[r] = block;
        ++pass.block_size[block];
        std::span<const double> row;
        switch (s.kind) {
            case SlotKind::Identifier: row = ps.id_table.row(static_cast<std::size_t>(s.object)); break;
            case SlotKind::Feature2d: {
                auto it = pass.f2d.find(s.object);
                if (it == pass.f2d.end())
                    it = pass.f2d.emplace(s.object, mlp_forward_cached(ps.f2d, ep.raw.z2d.row(static_cast<std::size_t>(s.object)))).first;
                row = it->second.output;
                break;
            }
            case SlotKind::Node: {
                auto it = pass.fv.find(s.object);
                if (it == pass.fv.end())
                    it = pass.fv.emplace(s.object, mlp_forward_cached(ps.fv, ep.raw.zv.row(static_cast<std::size_t>(s.object)))).first;
                row = it->second.output;
                break;
            }
            case SlotKind::Edge: {
                if (opt.zero_edges) break;
                const EdgeKey key{s.object, s.target};
                auto it = pass.fe.find(key);
                if (it == pass.fe.end()) {
                    auto ze = ep.raw.ze.find(key);
                    if (ze == ep.raw.ze.end())
                        throw Error(ErrorKind::MissingFeature,
                                    "ze for edge (" + std::to_string(key.first) + "," + std::to_string(key.second) + ")");
                    it = pass.fe.emplace(key, mlp_forward_cached(ps.fe, ze->second)).first;
                }
                row = it->second.output;
                break;
            }
        }
        auto& pool = pass.pooled[block];
        for (std::size_t i = 0; i < row.size(); ++i) pool[i] += row[i];
    }

    pass.scores.resize(ep.candidates.size());
    for (std::size_t c = 0; c < ep.candidates.size(); ++c) {
        const double inv = pass.block_size[c] ? 1.0 / static_cast<double>(pass.block_size[c]) : 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            pass.pooled[c][i] *= inv;
            s += pass.pooled[c][i] * pass.query[i];
        }
        pass.scores[c] = s;
    }
    return pass;
}

void add_into(std::span<double> dst, std::span<const double> src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

// Returns the episode loss; adds scale * gradient into grads.
double accumulate_episode(const ToyModel& model, const Episode& ep, double scale, ToyModel& grads,
                          const ForwardOptions& opt) {
    const auto pass = forward(model, ep, opt);
    const double loss = nll_loss(pass.scores, ep.answer_index);
    if (!std::isfinite(loss)) return loss;

    const std::size_t d = pass.query.size();
    const double m = *std::max_element(pass.scores.begin(), pass.scores.end());
    std::vector<double> dscore(pass.scores.size());
    double z = 0.0;
    for (std::size_t c = 0; c < dscore.size(); ++c) z += (dscore[c] = std::exp(pass.scores[c] - m));
    for (std::size_t c = 0; c < dscore.size(); ++c) dscore[c] = scale * (dscore[c] / z - (c == ep.answer_index ? 1.0 : 0.0));

    std::vector<double> dquery(d, 0.0);
    for (std::size_t c = 0; c < dscore.size(); ++c) add_into(dquery, pass.pooled[c], dscore[c]);

    std::map<ObjectId, std::vector<double>> d2d, dv;
    std::map<EdgeKey, std::vector<double>> de;
    for (std::size_t r = 0; r < ep.sequence.slots.size(); ++r) {
        const auto& s = ep.sequence.slots[r];
        const std::size_t c = pass.slot_block[r];
        const double w = dscore[c] / static_cast<double>(pass.block_size[c]);
        if (w == 0.0) continue;
        std::span<double> target;
        switch (s.kind) {
            case SlotKind::Identifier: target = grads.projection.id_table.row(static_cast<std::size_t>(s.object)); break;
            case SlotKind::Feature2d: target = d2d.try_emplace(s.object, d, 0.0).first->second; break;
            case SlotKind::Node: target = dv.try_emplace(s.object, d, 0.0).first->second; break;
            case SlotKind::Edge:
                if (opt.zero_edges) continue;
                target = de.try_emplace(EdgeKey{s.object, s.target}, d, 0.0).first->second;
                break;
        }
        add_into(target, pass.query, w);
    }

    const auto& ps = model.projection;
    for (const auto& [id, g] : d2d) mlp_backward_accumulate(ps.f2d, pass.f2d.at(id), g, grads.projection.f2d);
    for (const auto& [id, g] : dv) mlp_backward_accumulate(ps.fv, pass.fv.at(id), g, grads.projection.fv);
    for (const auto& [key, g] : de) mlp_backward_accumulate(ps.fe, pass.fe.at(key), g, grads.projection.fe);

    add_into(grads.target_table.row(ep.query.target_class), dquery, 1.0);
    add_into(grads.relation_table.row(static_cast<std::size_t>(ep.query.relation)), dquery, 1.0);
    if (ep.query.relation != Relation::None) add_into(grads.anchor_table.row(ep.query.anchor_class), dquery, 1.0);
    return loss;
}

}  // namespace

std::vector<double> score_candidates(const ToyModel& model, const Episode& ep, const ForwardOptions& opt) {
    return forward(model, ep, opt).scores;
}

double loss_and_gradient(const ToyModel& model, std::span<const Episode> episodes, ToyModel* grads,
                         const ForwardOptions& opt) {
    if (episodes.empty()) throw Error(ErrorKind::IndexError, "no episodes");
    const double scale = 1.0 / static_cast<double>(episodes.size());
    ToyModel scratch;
    if (!grads) scratch = model.zeros_like();
    ToyModel& g = grads ? *grads : scratch;
    if (grads) g = model.zeros_like();
    double total = 0.0;
    for (const auto& ep : episodes) total += accumulate_episode(model, ep, scale, g, opt);
    return total * scale;
}

TrainResult train(ToyModel model, std::span<const Episode> data, const TrainConfig& cfg) {
    if (data.empty()) throw Error(ErrorKind::IndexError, "training data is empty");
    if (cfg.batch_size == 0) throw Error(ErrorKind::IndexError, "batch size must be positive");
    TrainResult result;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "shuffle"));

    ToyModel first = model.zeros_like(), second = model.zeros_like(), grads = model.zeros_like();
    auto params = model.parameters();
    auto m1 = first.parameters();
    auto m2 = second.parameters();
    auto gv = grads.parameters();
    std::size_t step = 0;
    std::vector<double> losses(data.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto g : gv) std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t b = start; b < end; ++b) {
                const double loss = accumulate_episode(model, data[order[b]], scale, grads, {});
                if (!std::isfinite(loss))
                    throw Error(ErrorKind::TrainingDiverged, "non-finite loss at step " + std::to_string(step));
                losses[order[b]] = loss;
            }
            ++step;
            if (cfg.optimizer == Optimizer::Sgd) {
                for (std::size_t p = 0; p < params.size(); ++p)
                    for (std::size_t i = 0; i < params[p].size(); ++i) params[p][i] -= cfg.lr * gv[p][i];
            } else {
                const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
                for (std::size_t p = 0; p < params.size(); ++p)
                    for (std::size_t i = 0; i < params[p].size(); ++i) {
                        const double g = gv[p][i];
                        m1[p][i] = cfg.beta1 * m1[p][i] + (1.0 - cfg.beta1) * g;
                        m2[p][i] = cfg.beta2 * m2[p][i] + (1.0 - cfg.beta2) * g * g;
                        params[p][i] -= cfg.lr * (m1[p][i] / c1) / (std::sqrt(m2[p][i] / c2) + cfg.eps);
                    }
            }
            for (auto p : params)
                for (double v : p)
                    if (!std::isfinite(v))
                        throw Error(ErrorKind::TrainingDiverged, "non-finite parameter after step " + std::to_string(step));
        }
        double total = 0.0;
        for (double l : losses) total += l;
        result.epoch_losses.push_back(total / static_cast<double>(losses.size()));
    }
    result.model = std::move(model);
    return result;
}

double evaluate_grounding(const ToyModel& model, std::span<const Episode> episodes, const ForwardOptions& opt) {
    if (episodes.empty()) return 0.0;
    std::vector<char> hit(episodes.size(), 0);
    parallel_for(episodes.size(), [&](std::size_t i) {
        const auto scores = score_candidates(model, episodes[i], opt);
        const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        hit[i] = best == episodes[i].answer_index;
    });
    const auto hits = static_cast<double>(std::count(hit.begin(), hit.end(), 1));
    return hits / static_cast<double>(episodes.size());
}

// ---------------------------------------------------------------------------
// Paired ablation

PairedTTest paired_t_test(std::span<const double> treatment, std::span<const double> control) {
    PairedTTest t;
    const std::size_t n = std::min(treatment.size(), control.size());
    if (n == 0) return t;
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = treatment[i] - control[i];
    t.mean_difference = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
    if (n < 2) return t;
    double ss = 0.0;
    for (double d : diff) ss += (d - t.mean_difference) * (d - t.mean_difference);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        t.t_statistic = t.mean_difference > 0   ? std::numeric_limits<double>::infinity()
                        : t.mean_difference < 0 ? -std::numeric_limits<double>::infinity()
                                                : 0.0;
        t.p_value = t.mean_difference > 0 ? 0.0 : (t.mean_difference < 0 ? 1.0 : 0.5);
        return t;
    }
    t.t_statistic = t.mean_difference / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    t.p_value = boost::math::cdf(boost::math::complement(dist, t.t_statistic));
    return t;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

AblationResult run_ablation(const AblationConfig& cfg) {
    AblationResult out;
    out.k = cfg.k;
    GeneratorConfig gen = cfg.generator;
    gen.d_2d = cfg.dims.d_2d;
    gen.d_v = cfg.dims.d_v;
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        const std::uint64_t seed = cfg.seed + s;
        const auto train_scenes = generate_scenes(derive_seed(seed, "train"), cfg.train_examples, gen);
        const auto eval_scenes = generate_scenes(derive_seed(seed, "eval"), cfg.eval_examples, gen);

        SeedOutcome o;
        o.seed = seed;
        const ToyModel init = init_toy_model(derive_seed(seed, "model"), cfg.dims, gen.class_vocab);
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(seed, "train_order");

        for (const std::size_t k : {cfg.k, std::size_t{0}}) {
            GraphConfig g = cfg.graph;
            g.k = k;
            g.edge_feature_dim = cfg.dims.d_e;
            const auto train_eps = make_episodes(train_scenes, g, cfg.layout);
            const auto eval_eps = make_episodes(eval_scenes, g, cfg.layout);
            const auto trained = train(init, train_eps, tc);
            const double acc = evaluate_grounding(trained.model, eval_eps);
            if (k == cfg.k && cfg.k != 0) {
                o.accuracy_k = acc;
                o.losses_k = trained.epoch_losses;
                o.accuracy_k_zeroed = evaluate_grounding(trained.model, eval_eps, {true});
            } else {
                o.accuracy_0 = acc;
                o.losses_0 = trained.epoch_losses;
                if (cfg.k == 0) {
                    o.accuracy_k = acc;
                    o.losses_k = trained.epoch_losses;
                    o.accuracy_k_zeroed = acc;
                }
            }
            if (cfg.k == 0) break;
        }
        out.per_seed.push_back(std::move(o));
    }

    std::vector<double> ak, a0, az;
    for (const auto& o : out.per_seed) {
        ak.push_back(o.accuracy_k);
        a0.push_back(o.accuracy_0);
        az.push_back(o.accuracy_k_zeroed);
    }
    std::tie(out.mean_k, out.std_k) = mean_std(ak);
    std::tie(out.mean_0, out.std_0) = mean_std(a0);
    std::tie(out.mean_zeroed, out.std_zeroed) = mean_std(az);
    const auto t = paired_t_test(ak, a0);
    out.mean_difference = t.mean_difference;
    out.t_statistic = t.t_statistic;
    out.p_value = t.p_value;
    out.baseline_sigma = cfg.eval_examples
                             ? std::sqrt(out.mean_0 * (1.0 - out.mean_0) / static_cast<double>(cfg.eval_examples))
                             : 0.0;
    out.zeroed_within_3_sigma = std::abs(out.mean_zeroed - out.mean_0) <= 3.0 * out.baseline_sigma;
    return out;
}

std::string ablation_to_json(const AblationResult& r) {
    using nlohmann::json;
    json seeds = json::array();
    for (const auto& o : r.per_seed)
        seeds.push_back({{"seed", o.seed},
                         {"accuracy_k", o.accuracy_k},
                         {"accuracy_0", o.accuracy_0},
                         {"accuracy_k_edges_zeroed", o.accuracy_k_zeroed}});
    json doc;
    doc["k"] = r.k;
    doc["per_seed"] = std::move(seeds);
    doc["accuracy_k"] = {{"mean", r.mean_k}, {"std", r.std_k}};
    doc["accuracy_0"] = {{"mean", r.mean_0}, {"std", r.std_0}};
    doc["accuracy_k_edges_zeroed"] = {{"mean", r.mean_zeroed}, {"std", r.std_zeroed}};
    const auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    doc["paired_t_test"] = {{"mean_difference", r.mean_difference},
                            {"t_statistic", finite_or_null(r.t_statistic)},
                            {"p_value_one_sided", r.p_value}};
    doc["zeroed_edge_control"] = {{"baseline_sigma", r.baseline_sigma},
                                  {"within_3_sigma_of_k0", r.zeroed_within_3_sigma}};
    return doc.dump(2) + "\n";
}

}  // namespace graphtok3d::toy
