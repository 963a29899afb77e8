"""Writes the synthetic 1000-cell slide used by the golden pipeline test."""
import csv

import numpy as np

rng = np.random.default_rng(20240101)
SIDE = 600.0
MARKERS = ["CD3", "CD20", "CD68", "PanCK"]


def disc(n, cx, cy, r):
    a = rng.uniform(0, 2 * np.pi, n)
    d = r * np.sqrt(rng.uniform(0, 1, n))
    return np.c_[cx + d * np.cos(a), cy + d * np.sin(a)]


def ring(n, cx, cy, r0, r1):
    a = rng.uniform(0, 2 * np.pi, n)
    d = np.sqrt(rng.uniform(r0**2, r1**2, n))
    return np.c_[cx + d * np.cos(a), cy + d * np.sin(a)]


groups = [
    ("tumor", disc(250, 400, 400, 120), {"PanCK"}),
    ("b", disc(120, 150, 450, 60), {"CD20"}),
    ("t", np.r_[rng.uniform(0, SIDE, (150, 2)), ring(100, 400, 400, 110, 150)], {"CD3"}),
    ("mac", ring(130, 400, 400, 100, 180), {"CD68"}),
    ("stroma", rng.uniform(0, SIDE, (250, 2)), set()),
]

rows = []
for _, xy, high in groups:
    xy = np.clip(xy, 0, SIDE)
    for x, y in xy:
        vals = [rng.lognormal(np.log(40 if m in high else 2), 0.5) for m in MARKERS]
        rows.append((x, y, vals))

order = rng.permutation(len(rows))
with open("cells.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["CellID", "X_centroid", "Y_centroid", *MARKERS, "Region"])
    for i, k in enumerate(order):
        x, y, vals = rows[k]
        region = "left" if x < SIDE / 2 else "right"
        w.writerow([f"c{i:04d}", f"{x:.2f}", f"{y:.2f}", *(f"{v:.3f}" for v in vals), region])
