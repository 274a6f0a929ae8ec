#!/usr/bin/env python3
"""Writes data/case39.json from the MATPOWER/PYPOWER New England 39-bus case.

Generator inertia M = 2H / (2 pi 60) with H on the 100 MVA base (Athay et al.).
Load buses carry a small inertia so the explicit Euler training rollout stays
stable at dt = 0.01. Damping D_i = 0.03 * sum_j B_ij for the same reason.
Setpoints are (Pg - Pd) / 100, shifted to sum to zero (lossless model).

Usage: PYTHONPATH=<dir containing pypower> python3 tools/make_case39.py
"""
import json
import math
import sys

from pypower.case39 import case39

H = {30: 42.0, 31: 30.3, 32: 35.8, 33: 28.6, 34: 26.0,
     35: 34.8, 36: 26.4, 37: 24.3, 38: 34.5, 39: 500.0}
LOAD_INERTIA = 0.2
DAMPING_RATIO = 0.03

c = case39()
n = c["bus"].shape[0]
p = [0.0] * n
for row in c["bus"]:
    p[int(row[0]) - 1] -= row[2] / c["baseMVA"]
for row in c["gen"]:
    p[int(row[0]) - 1] += row[1] / c["baseMVA"]
mean = sum(p) / n
p = [v - mean for v in p]

lines = {}
for row in c["branch"]:
    a, b = sorted((int(row[0]), int(row[1])))
    lines[(a, b)] = lines.get((a, b), 0.0) + 1.0 / row[3]
degree = [0.0] * n
for (a, b), s in lines.items():
    degree[a - 1] += s
    degree[b - 1] += s

ws = 2 * math.pi * 60
buses = []
for i in range(n):
    bid = i + 1
    m = 2 * H[bid] / ws if bid in H else LOAD_INERTIA
    buses.append({"id": bid, "M": round(m, 6), "D": round(DAMPING_RATIO * degree[i], 6),
                  "p_star": p[i]})
# rounding noise: push the residual onto the slack generator
residual = sum(b["p_star"] for b in buses)
buses[38]["p_star"] -= residual
doc = {"version": 1, "name": "ieee39",
       "buses": buses,
       "lines": [{"from": a, "to": b, "B": round(s, 6)} for (a, b), s in sorted(lines.items())]}
out = sys.argv[1] if len(sys.argv) > 1 else "data/case39.json"
with open(out, "w") as f:
    json.dump(doc, f, indent=1)
    f.write("\n")
