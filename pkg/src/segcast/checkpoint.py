"""Plain-text checkpoint format.

One record per parameter: a header line with name and shape, then the
row-major values printed with 17 significant digits, which round-trips
float64 exactly.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameters

_MAGIC = "segcast-params v1"


def save_params(params: Parameters, path) -> None:
    with open(path, "w") as f:
        f.write(f"{_MAGIC} {len(params)}\n")
        for name, t in params.items():
            dims = " ".join(str(d) for d in t.shape)
            f.write(f"param {name} {t.data.ndim} {dims}\n".rstrip() + "\n")
            f.write(" ".join(f"{v:.17g}" for v in t.data.reshape(-1)) + "\n")


def load_params(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().split()
        if " ".join(header[:-1]) != _MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        count = int(header[-1])
        state: dict[str, np.ndarray] = {}
        for _ in range(count):
            parts = f.readline().split()
            if not parts or parts[0] != "param":
                raise ValueError(f"malformed checkpoint record in {path}")
            name = parts[1]
            ndim = int(parts[2])
            shape = tuple(int(d) for d in parts[3:3 + ndim])
            raw = f.readline().split()
            values = np.fromiter(map(float, raw), dtype=np.float64, count=len(raw))
            expected = int(np.prod(shape)) if shape else 1
            if values.size != expected:
                raise ValueError(f"value count mismatch for {name}: {values.size} != {expected}")
            state[name] = values.reshape(shape)
    return state
