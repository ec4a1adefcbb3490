"""Dense grid primitives: channel-coupled cross-correlation, per-cell
normalization, and Shannon entropy.

Grids are float64 arrays of shape (C, H, W): channel c, row i, column j.
All exported operations are pure functions.
"""

from dataclasses import dataclass

import numpy as np

from stgrid import kernels
from stgrid.errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class Kernel4:
    """Cross-correlation kernel coupling input channel n to output channel m.

    weights[n, m, u, v] with odd (u, v) extents so the window is centered
    on the output cell; bias[m] is added to every cell of output channel m.
    """

    weights: np.ndarray  # (C, C, kh, kw)
    bias: np.ndarray     # (C,)

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
        if w.ndim != 4 or w.shape[0] != w.shape[1]:
            raise ConfigurationError(f"kernel weights must be (C, C, kh, kw), got {w.shape}")
        if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
            raise ConfigurationError(f"kernel window must be odd-sized, got {w.shape[2:]}")
        if b.shape != (w.shape[0],):
            raise ConfigurationError(f"bias must have length {w.shape[0]}, got {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ConfigurationError("kernel weights and bias must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0]

    def require_positive(self):
        """Simulator preset constraint: nonnegative weights, strictly positive bias."""
        if (self.weights < 0).any() or (self.bias <= 0).any():
            raise ConfigurationError(
                "simulator kernel needs nonnegative weights and positive bias"
            )


def as_grid3(data, n_channels=None) -> np.ndarray:
    """Coerce to a contiguous float64 (C, H, W) grid, checking finiteness."""
    g = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if g.ndim != 3:
        raise ConfigurationError(f"grid must be 3-dimensional (C, H, W), got shape {g.shape}")
    if n_channels is not None and g.shape[0] != n_channels:
        raise ConfigurationError(f"grid has {g.shape[0]} channels, expected {n_channels}")
    if not np.isfinite(g).all():
        raise DomainError("grid contains NaN or Inf")
    return g


def cross_correlate(grid, kernel: Kernel4) -> np.ndarray:
    """Apply the kernel to every cell with zero padding outside the grid.

    out[m, i, j] = bias[m] + sum_n sum_window weights[n, m, ., .] * grid[n, ., .]
    """
    x = as_grid3(grid, kernel.n_channels)
    out = kernels.cross_correlate(x, kernel.weights, kernel.bias)
    if __debug__ and not np.isfinite(out).all():
        raise DomainError("cross_correlate produced non-finite values")
    return out


def normalize_channels(phi) -> np.ndarray:
    """Divide each cell's channel column by its sum, yielding a simplex per cell."""
    x = as_grid3(phi)
    if (x <= 0).any():
        raise DomainError("normalize_channels requires strictly positive entries")
    return kernels.normalize_channels(x)


def shannon_entropy(belief_column) -> float:
    """Entropy -sum p ln p of one probability column, with 0 ln 0 = 0."""
    p = np.asarray(belief_column, dtype=np.float64)
    if p.ndim != 1 or (p < 0).any() or (p > 1).any():
        raise DomainError("belief column must be a vector with entries in [0, 1]")
    if abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"belief column sums to {p.sum()}, not 1")
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())
