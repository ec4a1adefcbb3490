"""Parameter checkpoints and full run-state snapshots.

Parameter checkpoint: one little-endian binary file
    magic "STGC" | u32 version | u32 height | u32 width | u32 n_states |
    u32 n_obs | u32 latent_dim | u32 n_arrays
followed by the flat float32 arrays back to back, in the order listed in
the sidecar manifest `<file>.manifest.txt` (one line per array:
"section.name shape offset count").

Run-state snapshots (for bit-exact resume) additionally carry optimizer
moments, replay buffers, and RNG states; they use torch serialization
and are not part of the interchange format.
"""

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from stgrid.errors import ConfigurationError

MAGIC = b"STGC"
VERSION = 1


def save_params(path, dims: tuple, sections: "OrderedDict[str, OrderedDict[str, np.ndarray]]"):
    """dims = (height, width, n_states, n_obs, latent_dim)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = []
    manifest = []
    offset = 0
    for section, arrays in sections.items():
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            flat.append(a)
            manifest.append((f"{section}.{name}", a.shape, offset, a.size))
            offset += a.size
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<7I", VERSION, *dims, len(manifest)))
        for a in flat:
            fh.write(a.tobytes())
    with open(path.with_suffix(path.suffix + ".manifest.txt"), "w") as fh:
        fh.write(f"version {VERSION}\ndims {' '.join(str(d) for d in dims)}\n")
        for name, shape, off, count in manifest:
            fh.write(f"{name} {','.join(str(s) for s in shape)} {off} {count}\n")


def load_params(path):
    """Returns (dims, sections) mirroring save_params."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ConfigurationError(f"{path} is not a parameter checkpoint")
        version, h, w, ns, no, latent, n_arrays = struct.unpack("<7I", fh.read(28))
        if version != VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f4")
    sections: "OrderedDict[str, OrderedDict[str, np.ndarray]]" = OrderedDict()
    manifest_path = path.with_suffix(path.suffix + ".manifest.txt")
    with open(manifest_path) as fh:
        lines = [ln.split() for ln in fh.read().splitlines()[2:] if ln.strip()]
    if len(lines) != n_arrays:
        raise ConfigurationError("manifest and checkpoint array counts differ")
    for name, shape_s, off_s, count_s in lines:
        section, key = name.split(".", 1)
        shape = tuple(int(s) for s in shape_s.split(",") if s)
        off, count = int(off_s), int(count_s)
        arr = payload[off:off + count].reshape(shape).copy()
        sections.setdefault(section, OrderedDict())[key] = arr
    return (h, w, ns, no, latent), sections


def module_arrays(module: torch.nn.Module) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, v.detach().cpu().numpy())
                       for k, v in module.state_dict().items())


def load_module_arrays(module: torch.nn.Module, arrays):
    state = module.state_dict()
    for k, v in arrays.items():
        state[k] = torch.as_tensor(v, dtype=state[k].dtype).reshape(state[k].shape)
    module.load_state_dict(state)


def save_run_state(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_run_state(path) -> dict:
    return torch.load(path, weights_only=False)
