"""NumPy fallback for the hot kernels.

Used when the compiled extension is unavailable or when STGRID_PURE=1.
Must stay numerically identical to the Cython implementation (same
operation order per output element, 64-bit accumulation).
"""

import numpy as np

NAME = "pure"


def cross_correlate(x, weights, bias):
    """Channel-coupled 2D cross-correlation with zero padding.

    out[m, i, j] = bias[m] + sum_n sum_{u,v} weights[n, m, u, v] * x[n, i+u-ch, j+v-cw]

    x: (C, H, W) float64, weights: (C, C, kh, kw) float64, bias: (C,) float64.
    """
    c, h, w = x.shape
    kh, kw = weights.shape[2], weights.shape[3]
    ph, pw = kh // 2, kw // 2
    padded = np.zeros((c, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    padded[:, ph:ph + h, pw:pw + w] = x
    out = np.empty((c, h, w), dtype=np.float64)
    for m in range(c):
        acc = np.full((h, w), bias[m], dtype=np.float64)
        for n in range(c):
            for u in range(kh):
                for v in range(kw):
                    wt = weights[n, m, u, v]
                    if wt != 0.0:
                        acc += wt * padded[n, u:u + h, v:v + w]
        out[m] = acc
    return out


def normalize_channels(phi):
    """Divide each (i, j) column by its channel sum. phi: (C, H, W) float64."""
    return phi / phi.sum(axis=0, keepdims=True)


def rollout_costs(cost_map, vels, start_row, start_col):
    """Mean per-step cost of N clamped single-integrator rollouts.

    cost_map: (H, W) float64; vels: (N, T, 2) int64 row/col deltas;
    returns (N,) float64 with the mean of cost_map over the T+1 positions.
    """
    h, w = cost_map.shape
    n, t, _ = vels.shape
    rows = np.full(n, start_row, dtype=np.int64)
    cols = np.full(n, start_col, dtype=np.int64)
    total = np.full(n, cost_map[start_row, start_col], dtype=np.float64)
    for step in range(t):
        np.clip(rows + vels[:, step, 0], 0, h - 1, out=rows)
        np.clip(cols + vels[:, step, 1], 0, w - 1, out=cols)
        total += cost_map[rows, cols]
    return total / float(t + 1)
