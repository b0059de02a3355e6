"""Freeze reference classification metrics and Cohen's kappa (scikit-learn)
for hand-derived contingency tables."""
import json

import sklearn
from sklearn.metrics import accuracy_score, cohen_kappa_score, f1_score, precision_score, recall_score

TABLES = [
    ("t-3-1-2-4", 3, 1, 2, 4),
    ("t-20-5-5-20", 20, 5, 5, 20),
    ("t-45-15-25-15", 45, 15, 25, 15),
    ("no-positive-predictions", 0, 0, 5, 5),
    ("constant-rater", 6, 4, 0, 0),
    ("perfect", 7, 0, 0, 3),
    ("all-wrong", 0, 4, 6, 0),
]


def labels(tp, fp, fn, tn):
    pred = [1] * tp + [1] * fp + [0] * fn + [0] * tn
    gold = [1] * tp + [0] * fp + [1] * fn + [0] * tn
    return pred, gold


def main():
    cases = []
    for name, tp, fp, fn, tn in TABLES:
        p, g = labels(tp, fp, fn, tn)
        cases.append({
            "name": name,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn,
            "accuracy": accuracy_score(g, p),
            "precision": precision_score(g, p, zero_division=0.0),
            "recall": recall_score(g, p, zero_division=0.0),
            "f1": f1_score(g, p, zero_division=0.0),
            "kappa": 0.0 if len(set(p)) == 1 and len(set(g)) == 1 and p != g else float(cohen_kappa_score(p, g)),
            "precision_undefined": tp + fp == 0,
        })
    out = {"oracle": f"scikit-learn {sklearn.__version__}", "cases": cases}
    with open("metrics_oracle.json", "w") as f:
        json.dump(out, f, indent=1)


if __name__ == "__main__":
    main()
