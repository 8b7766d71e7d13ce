"""Pure numpy split-gain scan; the fallback when the compiled kernel is absent.

``split_gains(xs, rows, code)`` takes one feature's values sorted ascending and
the per-sample statistic rows in the same order, and returns the gain of
cutting between positions i and i+1 for every i (``-inf`` where the two values
are equal).  Left statistics are running sums, right = total - left.
"""
import numpy as np
from scipy.special import xlogy

ERROR, COST_RED, COST_IG, VARIANCE = 0, 1, 2, 3


def split_gains(xs, rows, code):
    n = xs.shape[0]
    if n < 2:
        return np.empty(0)
    csum = np.cumsum(rows, axis=0)
    total = csum[-1]
    left = csum[:-1]
    right = total - left
    if code == ERROR:
        gains = (left.max(axis=1) + right.max(axis=1) - total.max()) / n
    elif code == COST_RED:
        wp = total.sum()
        if wp > 0:
            gains = (total.min() - left.min(axis=1) - np.maximum(right, 0.0).min(axis=1)) / wp
        else:
            gains = np.zeros(n - 1)
    elif code == COST_IG:
        right = np.maximum(right, 0.0)
        wp = total.sum()
        if wp > 0:
            wl = left.sum(axis=1)
            wr = right.sum(axis=1)
            hp = xlogy(wp, wp) - xlogy(total, total).sum()
            hl = xlogy(wl, wl) - xlogy(left, left).sum(axis=1)
            hr = xlogy(wr, wr) - xlogy(right, right).sum(axis=1)
            gains = (hp - hl - hr) / wp
        else:
            gains = np.zeros(n - 1)
    elif code == VARIANCE:
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        gains = ((left * left).sum(axis=1) / nl + (right * right).sum(axis=1) / nr
                 - (total * total).sum() / n) / n
    else:
        raise ValueError(f"unknown criterion code {code}")
    gains = np.asarray(gains, dtype=np.float64)
    gains[xs[:-1] == xs[1:]] = -np.inf
    return gains
