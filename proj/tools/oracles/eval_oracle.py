#!/usr/bin/env python3
"""Reference implementation of the evaluation metrics.

Written independently of the C++ code and used to produce the committed
expected metrics for the fixture under tests/fixtures. F1 matching is an
exhaustive search over injective assignments, so inputs are limited to a few
boxes per side.

    python3 tools/oracles/eval_oracle.py tests/fixtures/eval_fixture.jsonl \
        > tests/fixtures/eval_fixture_metrics.json
"""

import argparse
import itertools
import json
import math
import re
from collections import Counter


def rounded(x):
    return math.floor(x * 1e12 + 0.5) / 1e12


def box_volume(b):
    return max(0.0, b[3] - b[0]) * max(0.0, b[4] - b[1]) * max(0.0, b[5] - b[2])


def iou(a, b):
    inter = 1.0
    for axis in range(3):
        lo = max(a[axis], b[axis])
        hi = min(a[axis + 3], b[axis + 3])
        inter *= max(0.0, hi - lo)
    union = box_volume(a) + box_volume(b) - inter
    if union <= 0.0:
        return 1.0 if list(a) == list(b) else 0.0
    return min(1.0, max(0.0, inter / union))


def best_matching(pred, gt, threshold):
    """Largest number of pairs above threshold, ties by summed IoU."""
    if len(pred) > len(gt):
        count, _ = best_matching(gt, pred, threshold)
        return count, None
    best = (0, 0.0)
    for chosen in itertools.permutations(range(len(gt)), len(pred)):
        count, total = 0, 0.0
        for p, g in enumerate(chosen):
            v = iou(pred[p], gt[g])
            if v > threshold:
                count += 1
                total += v
        if (count, total) > best:
            best = (count, total)
    return best[0], None


def f1(pred, gt, threshold):
    if not pred and not gt:
        return 1.0, 0
    if not pred or not gt:
        return 0.0, 0
    tp, _ = best_matching(pred, gt, threshold)
    if tp == 0:
        return 0.0, 0
    p = tp / len(pred)
    r = tp / len(gt)
    return 2 * p * r / (p + r), tp


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate, references, smoothing):
    cand = candidate.lower().split()
    refs = [r.lower().split() for r in references]
    if not cand or not refs:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        counts = ngrams(cand, n)
        max_ref = Counter()
        for r in refs:
            for g, c in ngrams(r, n).items():
                max_ref[g] = max(max_ref[g], c)
        clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
        total = max(0, len(cand) - n + 1)
        if smoothing and n >= 2:
            clipped += 1
            total += 1
        if clipped == 0 or total == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = math.exp(min(0.0, 1.0 - r / c))
    return bp * math.exp(log_sum / 4)


def normalize(text):
    text = re.sub(r"\s+", " ", text.lower()).strip()
    if text.endswith("."):
        text = text[:-1].rstrip()
    return text


def threshold_key(name, t):
    return f"{name}@{t:g}"


def evaluate(lines, thresholds, smoothing):
    single_hits = {t: 0 for t in thresholds}
    single = 0
    f1_scores = {t: [] for t in thresholds}
    bleus, ems = [], []
    per_query = []
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        diag = {"id": rec["id"]}
        if "pred_boxes" in rec or "gt_boxes" in rec:
            pred, gt = rec["pred_boxes"], rec["gt_boxes"]
            diag["type"] = "grounding"
            if len(pred) == 1 and len(gt) == 1:
                v = iou(pred[0], gt[0])
                single += 1
                for t in thresholds:
                    single_hits[t] += v > t
                diag["iou"] = rounded(v)
            for t in thresholds:
                score, tp = f1(pred, gt, t)
                f1_scores[t].append(score)
                diag[threshold_key("f1", t)] = rounded(score)
                diag[threshold_key("matched", t)] = tp
        else:
            b = bleu(rec["candidate"], rec["references"], smoothing)
            em = int(normalize(rec["candidate"]) in {normalize(r) for r in rec["references"]})
            bleus.append(b)
            ems.append(em)
            diag.update({"type": "caption", "bleu4": rounded(b), "em": em})
        per_query.append(diag)

    def mean(values):
        return rounded(sum(values) / len(values)) if values else None

    metrics = {}
    for t in thresholds:
        metrics[threshold_key("acc", t)] = rounded(single_hits[t] / single) if single else None
        metrics[threshold_key("f1", t)] = mean(f1_scores[t])
    metrics["bleu4"] = mean(bleus)
    metrics["em"] = mean(ems)
    return {
        "bleu_smoothing": smoothing,
        "counts": {"single_box": single, "grounding": len(f1_scores[thresholds[0]]), "caption": len(bleus)},
        "metrics": metrics,
        "per_query": per_query,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("jsonl")
    parser.add_argument("--thresholds", default="0.25,0.5")
    parser.add_argument("--bleu-smoothing", action="store_true")
    args = parser.parse_args()
    thresholds = [float(t) for t in args.thresholds.split(",")]
    with open(args.jsonl, encoding="utf-8") as f:
        doc = evaluate(f.read().split("\n"), thresholds, args.bleu_smoothing)
    print(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False))


if __name__ == "__main__":
    main()
