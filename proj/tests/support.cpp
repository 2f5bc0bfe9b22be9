#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <regex>

#include <Eigen/Dense>

namespace gt3test {

std::vector<Point> random_cloud(Rng& rng, const Vec3& center, double half_extent, std::size_t count) {
    std::vector<Point> pts(count);
    for (auto& p : pts) {
        p.x = static_cast<float>(center[0] + rng.uniform(-half_extent, half_extent));
        p.y = static_cast<float>(center[1] + rng.uniform(-half_extent, half_extent));
        p.z = static_cast<float>(center[2] + rng.uniform(-half_extent, half_extent));
        p.r = static_cast<float>(rng.uniform());
        p.g = static_cast<float>(rng.uniform());
        p.b = static_cast<float>(rng.uniform());
    }
    return pts;
}

Scene random_scene(Rng& rng, std::size_t n, double room, std::size_t duplicates) {
    std::vector<std::vector<Point>> clouds;
    for (std::size_t i = 0; i + duplicates < n; ++i) {
        const Vec3 c{rng.uniform(0, room), rng.uniform(0, room), rng.uniform(0, room)};
        clouds.push_back(random_cloud(rng, c, rng.uniform(0.05, 0.4), 3 + rng.index(30)));
    }
    const std::size_t originals = clouds.size();
    for (std::size_t d = 0; d < duplicates && originals > 0; ++d) clouds.push_back(clouds[rng.index(originals)]);
    std::vector<ObjectProposal> props;
    for (std::size_t i = 0; i < clouds.size(); ++i) props.emplace_back(static_cast<ObjectId>(i), clouds[i]);
    return Scene("random", std::move(props));
}

AxisAlignedBox random_box(Rng& rng, double span, double min_size, double max_size) {
    AxisAlignedBox b;
    for (int a = 0; a < 3; ++a) {
        b.min[a] = rng.uniform(0, span);
        b.max[a] = b.min[a] + rng.uniform(min_size, max_size);
    }
    return b;
}

namespace {

// number of cell centers (i + 0.5) * res inside [lo, hi]
long long cells_inside(double lo, double hi, double origin, double res) {
    long long count = 0;
    const auto first = static_cast<long long>(std::floor((lo - origin) / res)) - 1;
    const auto last = static_cast<long long>(std::ceil((hi - origin) / res)) + 1;
    for (long long i = first; i <= last; ++i) {
        const double c = origin + (static_cast<double>(i) + 0.5) * res;
        if (c >= lo && c <= hi) ++count;
    }
    return count;
}

}  // namespace

double voxel_iou(const AxisAlignedBox& a, const AxisAlignedBox& b, double res) {
    double na = 1, nb = 1, ni = 1;
    for (int axis = 0; axis < 3; ++axis) {
        const double origin = std::min(a.min[axis], b.min[axis]);
        na *= static_cast<double>(cells_inside(a.min[axis], a.max[axis], origin, res));
        nb *= static_cast<double>(cells_inside(b.min[axis], b.max[axis], origin, res));
        const double lo = std::max(a.min[axis], b.min[axis]);
        const double hi = std::min(a.max[axis], b.max[axis]);
        ni *= hi >= lo ? static_cast<double>(cells_inside(lo, hi, origin, res)) : 0.0;
    }
    const double uni = na + nb - ni;
    return uni > 0 ? ni / uni : 0.0;
}

std::size_t brute_force_match_count(std::span<const AxisAlignedBox> pred, std::span<const AxisAlignedBox> gt,
                                    double threshold) {
    if (pred.size() > gt.size()) return brute_force_match_count(gt, pred, threshold);
    std::vector<std::size_t> perm(gt.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    // every injective map is a prefix of some permutation
    do {
        std::size_t count = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (aabb_iou(pred[i], gt[perm[i]]) > threshold) ++count;
        best = std::max(best, count);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::vector<std::vector<ObjectId>> knn_oracle(const Scene& scene, std::span<const ObjectId> survivors,
                                              std::size_t k, double min_dist) {
    std::vector<std::vector<ObjectId>> out;
    for (ObjectId i : survivors) {
        std::vector<std::pair<double, ObjectId>> all;
        const auto& ci = scene.object(i).centroid();
        for (ObjectId j : survivors) {
            if (j == i) continue;
            const auto& cj = scene.object(j).centroid();
            const double d = std::hypot(ci[0] - cj[0], ci[1] - cj[1], ci[2] - cj[2]);
            if (d >= min_dist) all.emplace_back(d, j);
        }
        std::sort(all.begin(), all.end());
        std::vector<ObjectId> ids;
        for (std::size_t r = 0; r < std::min(k, all.size()); ++r) ids.push_back(all[r].second);
        out.push_back(std::move(ids));
    }
    return out;
}

long double nll_oracle(std::span<const double> logits, std::size_t answer) {
    long double m = logits[0];
    for (double v : logits) m = std::max(m, static_cast<long double>(v));
    long double s = 0;
    for (double v : logits) s += std::exp(static_cast<long double>(v) - m);
    return m + std::log(s) - static_cast<long double>(logits[answer]);
}

std::vector<double> eigen_mlp_forward(const MLPParams& p, std::span<const double> x) {
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const double c = std::sqrt(2.0 / 3.141592653589793238);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& layer = p.layers[l];
        const Eigen::Map<const Mat> w(layer.weight.values().data(), static_cast<Eigen::Index>(layer.weight.rows()),
                                      static_cast<Eigen::Index>(layer.weight.cols()));
        const Eigen::Map<const Eigen::VectorXd> b(layer.bias.data(), static_cast<Eigen::Index>(layer.bias.size()));
        h = w * h + b;
        if (l < 2) h = h.unaryExpr([c](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v))); });
    }
    return {h.data(), h.data() + h.size()};
}

double bleu4_oracle(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& refs,
                    bool smoothing) {
    using Gram = std::vector<std::string>;
    auto grams = [](const std::vector<std::string>& t, std::size_t n) {
        std::vector<Gram> out;
        for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n));
        return out;
    };
    if (candidate.empty()) return 0.0;
    double log_p = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = grams(candidate, n);
        double matched = 0;
        std::vector<Gram> seen;
        for (const auto& g : cand) {
            if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
            seen.push_back(g);
            const auto in_cand = std::count(cand.begin(), cand.end(), g);
            long best_ref = 0;
            for (const auto& r : refs) {
                const auto rg = grams(r, n);
                best_ref = std::max<long>(best_ref, std::count(rg.begin(), rg.end(), g));
            }
            matched += static_cast<double>(std::min<long>(in_cand, best_ref));
        }
        double total = static_cast<double>(cand.size());
        if (smoothing && n >= 2) {
            matched += 1;
            total += 1;
        }
        if (matched == 0 || total == 0) return 0.0;
        log_p += std::log(matched / total) / 4.0;
    }
    const double c = static_cast<double>(candidate.size());
    double r = 0, best_gap = std::numeric_limits<double>::infinity();
    for (const auto& ref : refs) {
        const double len = static_cast<double>(ref.size());
        const double gap = std::abs(len - c);
        if (gap < best_gap || (gap == best_gap && len < r)) {
            best_gap = gap;
            r = len;
        }
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_p);
}

std::string normalize_oracle(const std::string& text) {
    std::string s = text;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    s = std::regex_replace(s, std::regex("[ \t\n\r\f\v]+"), " ");
    s = std::regex_replace(s, std::regex("^ | $"), "");
    s = std::regex_replace(s, std::regex("\\. ?$"), "");
    s = std::regex_replace(s, std::regex(" $"), "");
    return s;
}

std::vector<ObjectId> grounding_oracle(const Scene& scene, const std::vector<std::size_t>& classes,
                                       const toy::GroundingQuery& query) {
    using toy::Relation;
    const std::size_t n = scene.size();
    auto dist = [&](std::size_t a, std::size_t b) {
        const auto& p = scene.proposals()[a].centroid();
        const auto& q = scene.proposals()[b].centroid();
        return std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]));
    };
    std::vector<ObjectId> out;
    const auto same_class = static_cast<std::size_t>(std::count(classes.begin(), classes.end(), query.target_class));
    std::vector<double> nearest_anchor(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < n; ++a)
            if (a != i && classes[a] == query.anchor_class) nearest_anchor[i] = std::min(nearest_anchor[i], dist(i, a));

    for (std::size_t i = 0; i < n; ++i) {
        if (classes[i] != query.target_class) continue;
        bool ok = false;
        if (query.relation == Relation::None) {
            ok = same_class == 1;
        } else if (query.relation == Relation::NearestTo) {
            ok = std::isfinite(nearest_anchor[i]);
            for (std::size_t j = 0; j < n && ok; ++j)
                if (j != i && classes[j] == query.target_class && !(nearest_anchor[i] + 0.1 < nearest_anchor[j])) ok = false;
        } else {
            // axis index and required sign of the target-minus-anchor offset
            int axis = 0;
            double sign = 1;
            switch (query.relation) {
                case Relation::LeftOf: axis = 0; sign = -1; break;
                case Relation::RightOf: axis = 0; sign = 1; break;
                case Relation::Above: axis = 2; sign = 1; break;
                default: axis = 2; sign = -1; break;
            }
            const auto& ci = scene.proposals()[i].centroid();
            for (std::size_t a = 0; a < n && !ok; ++a) {
                if (a == i || classes[a] != query.anchor_class || dist(i, a) > 1.5) continue;
                const auto& ca = scene.proposals()[a].centroid();
                const double along = sign * (ci[static_cast<std::size_t>(axis)] - ca[static_cast<std::size_t>(axis)]);
                bool dominant = along > 0;
                for (int other = 0; other < 3; ++other)
                    if (other != axis && !(along > std::abs(ci[static_cast<std::size_t>(other)] - ca[static_cast<std::size_t>(other)])))
                        dominant = false;
                ok = dominant;
            }
        }
        if (ok) out.push_back(static_cast<ObjectId>(i));
    }
    return out;
}

MLPParams random_mlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out, double scale) {
    MLPParams p = MLPParams::zeros(in, hidden, out);
    for (auto& l : p.layers) {
        for (double& w : l.weight.values()) w = rng.normal(0, scale);
        for (double& b : l.bias) b = rng.normal(0, scale);
    }
    return p;
}

GradCheckResult mlp_gradient_check(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out,
                                   std::size_t instances, double h, double rel_tol) {
    GradCheckResult res;
    const double floor = 1e-2 * h;
    auto check = [&](double analytic, double numeric) {
        const double abs_err = std::abs(analytic - numeric);
        ++res.values_checked;
        res.max_abs_error = std::max(res.max_abs_error, abs_err);
        if (abs_err <= floor) return;
        const double rel = abs_err / std::max(std::abs(analytic), std::abs(numeric));
        res.max_error = std::max(res.max_error, rel);
        if (rel > rel_tol) res.ok = false;
    };
    for (std::size_t inst = 0; inst < instances; ++inst) {
        MLPParams p = random_mlp(rng, in, hidden, out, 0.6);
        std::vector<double> x(in), w(out);
        for (double& v : x) v = rng.normal(0, 1);
        for (double& v : w) v = rng.normal(0, 1);
        auto loss = [&](const MLPParams& q, std::span<const double> xx) {
            const auto y = mlp_forward(q, xx);
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
            return s;
        };
        const auto g = mlp_backward(p, x, w);
        for (std::size_t l = 0; l < 3; ++l) {
            auto& W = p.layers[l].weight.values();
            for (std::size_t i = 0; i < W.size(); ++i) {
                const double keep = W[i];
                W[i] = keep + h;
                const double up = loss(p, x);
                W[i] = keep - h;
                const double down = loss(p, x);
                W[i] = keep;
                check(g.params.layers[l].weight.values()[i], (up - down) / (2 * h));
            }
            auto& b = p.layers[l].bias;
            for (std::size_t i = 0; i < b.size(); ++i) {
                const double keep = b[i];
                b[i] = keep + h;
                const double up = loss(p, x);
                b[i] = keep - h;
                const double down = loss(p, x);
                b[i] = keep;
                check(g.params.layers[l].bias[i], (up - down) / (2 * h));
            }
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double keep = x[i];
            x[i] = keep + h;
            const double up = loss(p, x);
            x[i] = keep - h;
            const double down = loss(p, x);
            x[i] = keep;
            check(g.input[i], (up - down) / (2 * h));
        }
        ++res.instances;
    }
    return res;
}

}  // namespace gt3test
