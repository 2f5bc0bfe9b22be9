#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphtok3d/scene.hpp"

namespace graphtok3d::metrics {

// A prediction counts as a hit when IoU strictly exceeds the threshold.
struct BoxPair {
    AxisAlignedBox pred;
    AxisAlignedBox gt;
};

double acc_at_iou(std::span<const BoxPair> queries, double threshold);

struct F1Result {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t true_positives = 0;
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // (pred, gt)
};

// One-to-one matching that maximizes the number of pairs with IoU above the
// threshold, then their summed IoU. Both lists empty scores (1, 1, 1); exactly
// one empty scores (0, 0, 0).
F1Result f1_at_iou(std::span<const AxisAlignedBox> pred, std::span<const AxisAlignedBox> gt, double threshold);

// Maximum-weight assignment on a rows x cols weight matrix (row-major,
// nonnegative weights). Returns the column assigned to each row, or -1.
std::vector<int> max_weight_assignment(std::span<const double> weights, std::size_t rows, std::size_t cols);

using Tokens = std::vector<std::string>;

// Lower-cases and splits on whitespace.
Tokens tokenize_caption(std::string_view text);

struct CaptionPair {
    Tokens candidate;
    std::vector<Tokens> references;
};

// Sentence BLEU-4: geometric mean of clipped 1..4-gram precisions times the
// brevity penalty exp(min(0, 1 - r/c)), r the closest reference length (ties
// to the shorter). Without smoothing any zero precision gives 0; smoothing
// adds one to numerator and denominator for n >= 2.
double bleu4(const CaptionPair& pair, bool smoothing = false);

// Lower-case, trim, collapse internal whitespace, drop one terminal period.
std::string normalize_answer(std::string_view text);
int exact_match(std::string_view candidate, std::span<const std::string> references);

// Evaluation over a JSONL file: grounding records
// {"id", "pred_boxes", "gt_boxes"} and caption records
// {"id", "candidate", "references"}. Returns metrics.json text; values are
// rounded to 12 decimals.
struct EvalOptions {
    std::vector<double> thresholds{0.25, 0.5};
    bool bleu_smoothing = false;
};

std::string evaluate_jsonl(std::string_view jsonl, const EvalOptions& options = {});

}  // namespace graphtok3d::metrics
