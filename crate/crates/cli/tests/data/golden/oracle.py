"""Independent reference values for the golden pipeline (numpy brute force).

Covers the deterministic outputs: phenotype counts, Ripley's K for
Tumor -> T cell, and the observed radius-30 neighbor counts used by
enrichment.
"""
import csv
import json

import numpy as np

with open("cells.csv") as f:
    rows = list(csv.DictReader(f))
markers = ["CD3", "CD20", "CD68", "PanCK"]
thresholds = json.load(open("thresholds.json"))
rules = json.load(open("rules.json"))

xy = np.array([[float(r["X_centroid"]), float(r["Y_centroid"])] for r in rows])
raw = np.array([[float(r[m]) for m in markers] for r in rows]).astype(np.float32)
arc = np.arcsinh(raw.astype(np.float64) / 5.0).astype(np.float32)
pos = {m: arc[:, j].astype(np.float64) > thresholds[m] for j, m in enumerate(markers)}
margin = min(np.abs(arc[:, j].astype(np.float64) - thresholds[m]).min() for j, m in enumerate(markers))
assert margin > 1e-4, margin


def matches(pattern, i):
    terms, k = [], 0
    while k < len(pattern):
        for m in sorted(markers, key=len, reverse=True):
            if pattern.startswith(m, k):
                terms.append((m, pattern[len(m) + k] == "+"))
                k += len(m) + 1
                break
        else:
            raise ValueError(pattern)
    return all(pos[m][i] == s for m, s in terms)


labels = [r["name"] for r in rules] + ["no_label"]
codes = np.array(
    [next((j for j, r in enumerate(rules) if matches(r["pattern"], i)), len(rules)) for i in range(len(rows))]
)

xmin, ymin = xy.min(axis=0)
xmax, ymax = xy.max(axis=0)
area = (xmax - xmin) * (ymax - ymin)
centers = xy[codes == labels.index("Tumor")]
neighbors = xy[codes == labels.index("T cell")]
border = np.minimum.reduce([centers[:, 0] - xmin, xmax - centers[:, 0], centers[:, 1] - ymin, ymax - centers[:, 1]])
d2 = ((centers[:, None, :] - neighbors[None, :, :]) ** 2).sum(-1)
radii = [10.0 * k for k in range(1, 11)]
k_values = []
for r in radii:
    valid = border >= r
    pairs = ((d2[valid] > 0) & (d2[valid] <= r * r)).sum()
    k_values.append(area * pairs / (valid.sum() * len(neighbors)))

all_d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
ii, jj = np.nonzero(np.triu(all_d2 <= 30.0**2, k=1))
observed = np.zeros((len(labels), len(labels)), dtype=np.int64)
for a, b in zip(codes[ii], codes[jj]):
    observed[a, b] += 1
    if a != b:
        observed[b, a] += 1

json.dump(
    {
        "labels": labels,
        "phenotype_counts": np.bincount(codes, minlength=len(labels)).tolist(),
        "ripley_radii": radii,
        "ripley_k": k_values,
        "enrich_n_edges": int(len(ii)),
        "enrich_observed": observed.tolist(),
    },
    open("oracle.json", "w"),
    indent=2,
)
