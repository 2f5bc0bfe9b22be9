#include "graphtok3d/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "graphtok3d/error.hpp"
#include "graphtok3d/graph.hpp"

namespace graphtok3d::metrics {

using nlohmann::json;

double acc_at_iou(std::span<const BoxPair> queries, double threshold) {
    if (queries.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& q : queries)
        if (aabb_iou(q.pred, q.gt) > threshold) ++hits;
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

std::vector<int> max_weight_assignment(std::span<const double> weights, std::size_t rows, std::size_t cols) {
    // Hungarian algorithm (shortest augmenting path with potentials) on the
    // square matrix cost = max_w - w, padded with zero weights.
    const std::size_t n = std::max(rows, cols);
    std::vector<int> assignment(rows, -1);
    if (n == 0) return assignment;
    double max_w = 0.0;
    for (double w : weights) max_w = std::max(max_w, w);
    auto cost = [&](std::size_t i, std::size_t j) {
        const double w = (i < rows && j < cols) ? weights[i * cols + j] : 0.0;
        return max_w - w;
    };
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0 && p[j] - 1 < rows && j - 1 < cols) assignment[p[j] - 1] = static_cast<int>(j - 1);
    return assignment;
}

F1Result f1_at_iou(std::span<const AxisAlignedBox> pred, std::span<const AxisAlignedBox> gt, double threshold) {
    F1Result r;
    if (pred.empty() && gt.empty()) {
        r.precision = r.recall = r.f1 = 1.0;
        return r;
    }
    if (pred.empty() || gt.empty()) return r;

    // A matched pair outweighs any possible sum of IoUs, so the assignment
    // maximizes the match count first and summed IoU second.
    const double pair_bonus = static_cast<double>(std::min(pred.size(), gt.size())) + 1.0;
    std::vector<double> w(pred.size() * gt.size(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t j = 0; j < gt.size(); ++j) {
            const double iou = aabb_iou(pred[i], gt[j]);
            if (iou > threshold) w[i * gt.size() + j] = pair_bonus + iou;
        }
    const auto assign = max_weight_assignment(w, pred.size(), gt.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int j = assign[i];
        if (j >= 0 && w[i * gt.size() + static_cast<std::size_t>(j)] > 0.0)
            r.matches.emplace_back(i, static_cast<std::size_t>(j));
    }
    r.true_positives = r.matches.size();
    r.precision = static_cast<double>(r.true_positives) / static_cast<double>(pred.size());
    r.recall = static_cast<double>(r.true_positives) / static_cast<double>(gt.size());
    r.f1 = r.true_positives == 0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

Tokens tokenize_caption(std::string_view text) {
    Tokens out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const Tokens& t, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + i, t.begin() + i + n)];
    return counts;
}

}  // namespace

double bleu4(const CaptionPair& pair, bool smoothing) {
    const std::size_t c = pair.candidate.size();
    if (c == 0 || pair.references.empty()) return 0.0;

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = ngram_counts(pair.candidate, n);
        NgramCounts max_ref;
        for (const auto& ref : pair.references)
            for (const auto& [g, cnt] : ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], cnt);
        std::size_t clipped = 0;
        for (const auto& [g, cnt] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) clipped += std::min(cnt, it->second);
        }
        double num = static_cast<double>(clipped);
        double den = c >= n ? static_cast<double>(c - n + 1) : 0.0;
        if (smoothing && n >= 2) {
            num += 1.0;
            den += 1.0;
        }
        if (num == 0.0 || den == 0.0) return 0.0;
        log_sum += std::log(num / den);
    }

    std::size_t r = pair.references.front().size();
    for (const auto& ref : pair.references) {
        const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
        if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
    }
    const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(r) / static_cast<double>(c)));
    return bp * std::exp(log_sum / 4.0);
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    if (!out.empty() && out.back() == '.') {
        out.pop_back();
        while (!out.empty() && out.back() == ' ') out.pop_back();
    }
    return out;
}

int exact_match(std::string_view candidate, std::span<const std::string> references) {
    const auto cand = normalize_answer(candidate);
    for (const auto& ref : references)
        if (normalize_answer(ref) == cand) return 1;
    return 0;
}

namespace {

double round12(double x) { return std::round(x * 1e12) / 1e12; }

std::string threshold_key(const char* prefix, double t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s@%g", prefix, t);
    return buf;
}

AxisAlignedBox parse_box(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 6)
        throw Error(ErrorKind::ParseError, where + ": box must be [minx,miny,minz,maxx,maxy,maxz]");
    AxisAlignedBox b;
    for (int a = 0; a < 3; ++a) {
        b.min[a] = j.at(a).get<double>();
        b.max[a] = j.at(a + 3).get<double>();
        if (!std::isfinite(b.min[a]) || !std::isfinite(b.max[a]) || b.min[a] > b.max[a])
            throw Error(ErrorKind::InvalidProposal, where + ": box is not finite with min <= max");
    }
    return b;
}

std::vector<AxisAlignedBox> parse_boxes(const json& j, const std::string& where) {
    if (!j.is_array()) throw Error(ErrorKind::ParseError, where + ": expected array of boxes");
    std::vector<AxisAlignedBox> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_box(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace

std::string evaluate_jsonl(std::string_view jsonl, const EvalOptions& options) {
    std::vector<BoxPair> single;
    std::vector<std::vector<double>> f1_per_threshold(options.thresholds.size());
    std::vector<double> bleu_scores, em_scores;
    json per_query = json::array();

    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= jsonl.size()) {
        std::size_t end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        const std::string_view line = jsonl.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (end == jsonl.size()) break;
            continue;
        }
        const std::string where = "line " + std::to_string(line_no);
        json rec;
        try {
            rec = json::parse(line.begin(), line.end());
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id")) throw Error(ErrorKind::ParseError, where + ": record needs an id");
        json diag;
        diag["id"] = rec["id"];
        try {
            if (rec.contains("pred_boxes") || rec.contains("gt_boxes")) {
                const auto pred = parse_boxes(rec.at("pred_boxes"), where + " pred_boxes");
                const auto gt = parse_boxes(rec.at("gt_boxes"), where + " gt_boxes");
                diag["type"] = "grounding";
                if (pred.size() == 1 && gt.size() == 1) {
                    single.push_back({pred[0], gt[0]});
                    diag["iou"] = round12(aabb_iou(pred[0], gt[0]));
                }
                for (std::size_t t = 0; t < options.thresholds.size(); ++t) {
                    const auto f = f1_at_iou(pred, gt, options.thresholds[t]);
                    f1_per_threshold[t].push_back(f.f1);
                    diag[threshold_key("f1", options.thresholds[t])] = round12(f.f1);
                    diag[threshold_key("matched", options.thresholds[t])] = f.true_positives;
                }
            } else if (rec.contains("candidate")) {
                const auto candidate = rec.at("candidate").get<std::string>();
                const auto refs = rec.at("references").get<std::vector<std::string>>();
                CaptionPair pair{tokenize_caption(candidate), {}};
                for (const auto& r : refs) pair.references.push_back(tokenize_caption(r));
                const double b = bleu4(pair, options.bleu_smoothing);
                const int em = exact_match(candidate, refs);
                bleu_scores.push_back(b);
                em_scores.push_back(em);
                diag["type"] = "caption";
                diag["bleu4"] = round12(b);
                diag["em"] = em;
            } else {
                throw Error(ErrorKind::ParseError, where + ": record is neither grounding nor caption");
            }
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
        per_query.push_back(std::move(diag));
    }

    auto mean = [](const std::vector<double>& v) -> json {
        if (v.empty()) return nullptr;
        double s = 0.0;
        for (double x : v) s += x;
        return round12(s / static_cast<double>(v.size()));
    };

    json m;
    for (std::size_t t = 0; t < options.thresholds.size(); ++t) {
        m[threshold_key("acc", options.thresholds[t])] =
            single.empty() ? json(nullptr) : json(round12(acc_at_iou(single, options.thresholds[t])));
        m[threshold_key("f1", options.thresholds[t])] = mean(f1_per_threshold[t]);
    }
    m["bleu4"] = mean(bleu_scores);
    m["em"] = mean(em_scores);

    json doc;
    doc["metrics"] = std::move(m);
    doc["counts"] = {{"single_box", single.size()},
                     {"grounding", f1_per_threshold.empty() ? 0 : f1_per_threshold[0].size()},
                     {"caption", bleu_scores.size()}};
    doc["bleu_smoothing"] = options.bleu_smoothing;
    doc["per_query"] = std::move(per_query);
    return doc.dump(2) + "\n";
}

}  // namespace graphtok3d::metrics
