"""Shared fixtures data and independent brute-force oracles.

Oracles here are written in plain Python (loops, math, Counter) on purpose:
they must stay independent of the numpy-based engine paths they check.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np


# ----------------------------------------------------------------- datasets


def gaussian_blobs(rng, centers, counts, sigma=1.0, trunc=None):
    """Isotropic Gaussian blobs, optionally truncated at a radius."""
    centers = np.asarray(centers, dtype=np.float64)
    pts, labels = [], []
    for ci, center in enumerate(centers):
        got = 0
        while got < counts[ci]:
            v = rng.normal(0.0, sigma, centers.shape[1])
            if trunc is not None and np.linalg.norm(v) > trunc:
                continue
            pts.append(center + v)
            labels.append(ci)
            got += 1
    return np.asarray(pts, dtype=np.float32), np.asarray(labels)


def spread_centers(rng, k, dim, distance):
    """k random unit directions scaled to pairwise-separated centers."""
    centers = rng.normal(0, 1, (k, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return centers * distance


# ------------------------------------------------------------------ oracles


def brute_knn(data, query, k):
    """(index, distance) pairs sorted by distance then index, plain loops."""
    scored = []
    for i, row in enumerate(np.asarray(data, dtype=np.float64)):
        d = math.dist(row.tolist(), list(map(float, query)))
        scored.append((d, i))
    scored.sort()
    return [(i, d) for d, i in scored[:k]]


def ap_oracle(relevance, total_relevant):
    hits = 0
    acc = 0.0
    for rank, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            acc += hits / rank
    return acc / total_relevant


def rr_oracle(relevance):
    for rank, rel in enumerate(relevance, start=1):
        if rel:
            return 1.0 / rank
    return 0.0


def retrieval_oracle(train_x, train_y, test_x, test_y, k_eval):
    """Frequency-adjusted MAP/MRR computed with plain-Python ranking."""
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    counts = Counter(train_y)
    ap_by_class: dict = {}
    rr_by_class: dict = {}
    for q in range(test_x.shape[0]):
        y = test_y[q]
        if y not in counts:
            continue
        ranked = brute_knn(train_x, test_x[q], min(k_eval, train_x.shape[0]))
        relevance = [1 if train_y[i] == y else 0 for i, _ in ranked]
        total_relevant = min(counts[y], k_eval)
        ap_by_class.setdefault(y, []).append(ap_oracle(relevance, total_relevant))
        rr_by_class.setdefault(y, []).append(rr_oracle(relevance))
    per_ap = {y: sum(v) / len(v) for y, v in ap_by_class.items()}
    per_rr = {y: sum(v) / len(v) for y, v in rr_by_class.items()}
    map_adj = sum(per_ap.values()) / len(per_ap) if per_ap else 0.0
    mrr_adj = sum(per_rr.values()) / len(per_rr) if per_rr else 0.0
    return per_ap, per_rr, map_adj, mrr_adj


def micro_map_oracle(train_x, train_y, test_x, test_y, k_eval):
    """Plain per-query mean AP (no class adjustment)."""
    counts = Counter(train_y)
    aps = []
    for q in range(np.asarray(test_x).shape[0]):
        y = test_y[q]
        ranked = brute_knn(train_x, np.asarray(test_x)[q], min(k_eval, len(train_y)))
        relevance = [1 if train_y[i] == y else 0 for i, _ in ranked]
        aps.append(ap_oracle(relevance, min(counts[y], k_eval)))
    return sum(aps) / len(aps)


def nmi_oracle(a, b):
    """Contingency-table NMI, natural log, geometric normalization."""
    n = len(a)
    ca, cb = Counter(a), Counter(b)
    joint = Counter(zip(a, b))
    ha = -sum((c / n) * math.log(c / n) for c in ca.values())
    hb = -sum((c / n) * math.log(c / n) for c in cb.values())
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    info = 0.0
    for (va, vb), c in joint.items():
        pij = c / n
        info += pij * math.log(pij / ((ca[va] / n) * (cb[vb] / n)))
    return info / math.sqrt(ha * hb)


def one_nn_oracle(points):
    """1-NN indices and undirected component labels via plain loops."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    nn = []
    for i in range(n):
        best = None
        for j in range(n):
            if j == i:
                continue
            d = math.dist(pts[i].tolist(), pts[j].tolist())
            if best is None or (d, j) < best:
                best = (d, j)
        nn.append(best[1])
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in enumerate(nn):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    labels = {}
    comp = []
    for i in range(n):
        r = find(i)
        if r not in labels:
            labels[r] = len(labels)
        comp.append(labels[r])
    return nn, comp


def pick_oracle(coords, origin, direction, angular_radius, record_ids):
    """Cone pick by the documented rule, plain loops."""
    best = None
    tan = math.tan(angular_radius)
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    for i, p in enumerate(np.asarray(coords, dtype=np.float64)):
        rel = p - o
        depth = float(rel @ d)
        perp = float(np.linalg.norm(rel - depth * d))
        if perp <= tan * depth:
            key = (depth, perp, record_ids[i])
            if best is None or key < best[0]:
                best = (key, record_ids[i])
    return None if best is None else best[1]


def fnv_trigram_oracle(text, dim):
    """Independent rewrite of the builtin text hashing scheme."""
    padded = "^" + text.strip().lower() + "$"
    acc = [0.0] * dim
    for i in range(len(padded) - 2):
        tri = padded[i : i + 3].encode("utf-8")
        h = 0xCBF29CE484222325
        for byte in tri:
            h ^= byte
            h = (h * 0x100000001B3) % (1 << 64)
        sign = -1.0 if h >> 63 else 1.0
        acc[h % dim] += sign
    norm = math.sqrt(sum(v * v for v in acc))
    return [v / norm for v in acc]
