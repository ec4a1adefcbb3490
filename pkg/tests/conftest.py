import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_simplex_grid(rng, n_states, height, width, floor=1e-3):
    """Strictly positive belief columns."""
    g = rng.random((n_states, height, width)) + floor
    return g / g.sum(axis=0, keepdims=True)


def xcorr_oracle(x, weights, bias):
    """Naive quadruple-loop cross-correlation with zero padding."""
    c, h, w = x.shape
    kh, kw = weights.shape[2:]
    ch, cw = kh // 2, kw // 2
    out = np.zeros((c, h, w))
    for m in range(c):
        for i in range(h):
            for j in range(w):
                acc = bias[m]
                for n in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            ii, jj = i + u - ch, j + v - cw
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += weights[n, m, u, v] * x[n, ii, jj]
                out[m, i, j] = acc
    return out
