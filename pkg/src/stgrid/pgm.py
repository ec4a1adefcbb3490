"""Binary PGM (P5, maxval 255) frame export for visual inspection."""

from pathlib import Path

import numpy as np

from stgrid.errors import ConfigurationError


def write_pgm(array: np.ndarray, path):
    """Write a 2D array as 8-bit grayscale.

    Float arrays are interpreted as values in [0, 1]; integer arrays as
    category ids spread over the gray range.
    """
    a = np.asarray(array)
    if a.ndim != 2:
        raise ConfigurationError("PGM export needs a 2D array")
    if np.issubdtype(a.dtype, np.integer):
        top = max(int(a.max()), 1)
        gray = (np.clip(a, 0, top).astype(np.float64) / top * 255.0).round()
    else:
        gray = (np.clip(a, 0.0, 1.0) * 255.0).round()
    gray = gray.astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(gray.tobytes())


def frame_path(out_dir, quantity: str, k: int) -> Path:
    return Path(out_dir) / f"{quantity}_{k}.pgm"
