"""Independent brute-force references for the tree module.

Nothing here calls the split-scan kernels or the node-statistics helpers;
gains are recomputed from their definitions on explicit index subsets.
"""
import heapq
import math

import numpy as np

from treedistill.tree.grow import MIN_GAIN, PRIORITY_DECIMALS, TIE_ATOL, TIE_RTOL


def _entropy_of(c):
    w = sum(c)
    return -sum((v / w) * math.log(v / w) for v in c if v > 0)


def gain(criterion, X, labels, costs, targets, members, left_mask, k):
    L = members[left_mask]
    R = members[~left_mask]
    P = members
    if criterion == "error_reduction":
        def err(idx):
            counts = np.bincount(labels[idx], minlength=k)
            return 1.0 - counts.max() / len(idx)
        return err(P) - len(L) / len(P) * err(L) - len(R) / len(P) * err(R)
    if criterion == "variance_reduction":
        def var(idx):
            return float(np.var(targets[idx], axis=0).sum())
        return var(P) - len(L) / len(P) * var(L) - len(R) / len(P) * var(R)
    cp = [sum(costs[i, a] for i in P) for a in range(k)]
    cl = [sum(costs[i, a] for i in L) for a in range(k)]
    cr = [sum(costs[i, a] for i in R) for a in range(k)]
    w, wl, wr = sum(cp), sum(cl), sum(cr)
    if w <= 0:
        return 0.0
    if criterion == "cost_reduction":
        rate = lambda c: min(c) / sum(c) if sum(c) > 0 else 0.0
        return rate(cp) - wl / w * rate(cl) - wr / w * rate(cr)
    assert criterion == "cost_info_gain"
    h = lambda c: _entropy_of(c) if sum(c) > 0 else 0.0
    return h(cp) - wl / w * h(cl) - wr / w * h(cr)


def best_split(criterion, X, labels, costs=None, targets=None, members=None, k=None):
    """Every (feature, midpoint) pair, scored independently; same tie rule."""
    n, d = X.shape
    members = np.arange(n) if members is None else np.asarray(members)
    k = k or (costs.shape[1] if costs is not None else targets.shape[1])
    cands = []
    for f in range(d):
        values = sorted(set(X[members, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            mask = X[members, f] <= thr
            cands.append((f, thr, gain(criterion, X, labels, costs, targets, members, mask, k)))
    if not cands:
        return None
    best = max(g for _, _, g in cands)
    if not best > MIN_GAIN:
        return None
    floor = best - (TIE_ATOL + TIE_RTOL * abs(best))
    for f, thr, g in cands:
        if g >= floor:
            return f, thr, g


def grow_reference(criterion, X, labels, costs=None, targets=None, max_nodes=7, k=None):
    """Best-first growth spelled out node by node; returns a list of node dicts."""
    k = k or (costs.shape[1] if costs is not None else targets.shape[1])
    nodes = []

    def weight(idx):
        if criterion in ("error_reduction", "variance_reduction"):
            return float(len(idx))
        return float(costs[idx].sum())

    def label(idx):
        if criterion == "variance_reduction":
            return int(np.argmax(targets[idx].mean(axis=0)))
        counts = np.bincount(labels[idx], minlength=k)
        majority = int(np.argmax(counts))
        if criterion == "error_reduction":
            return majority
        c = costs[idx].sum(axis=0)
        return int(np.argmin(c)) if c.sum() > 0 else majority

    root_w = weight(np.arange(len(X)))
    heap = []

    def add(idx):
        nid = len(nodes)
        nodes.append({"members": idx, "feature": -1, "threshold": None, "left": -1,
                      "right": -1, "action": label(idx)})
        if len(idx) >= 2:
            cand = best_split(criterion, X, labels, costs, targets, idx, k)
            if cand is not None:
                share = weight(idx) / root_w if root_w > 0 else 0.0
                heapq.heappush(heap, (-round(share * cand[2], PRIORITY_DECIMALS), nid, cand))

    add(np.arange(len(X)))
    expanded = 0
    while heap and expanded < max_nodes:
        _, nid, (f, thr, _) = heapq.heappop(heap)
        node = nodes[nid]
        idx = node["members"]
        mask = X[idx, f] <= thr
        node.update(feature=f, threshold=thr)
        expanded += 1
        node["left"] = len(nodes)
        add(idx[mask])
        node["right"] = len(nodes)
        add(idx[~mask])
    return nodes


def random_dataset(rng, n=None, d=None, k=None):
    n = n or int(rng.integers(2, 65))
    d = d or int(rng.integers(1, 5))
    k = k or int(rng.integers(2, 4))
    # coarse grid values force duplicate feature values
    X = rng.integers(0, 8, size=(n, d)) / 4.0 - 1.0
    costs = rng.random((n, k)) * rng.integers(1, 4)
    costs[rng.random((n, k)) < 0.15] = 0.0
    labels = rng.integers(0, k, size=n)
    targets = rng.normal(size=(n, k))
    return X, labels, costs, targets, k
