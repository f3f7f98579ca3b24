"""Sampled càdlàg paths and their CSV / binary encodings.

A path is a right-continuous step function: ``values[i]`` holds on
``[times[i], times[i+1])`` and ``values[-1]`` is the observation at
``times[-1] == horizon``. Simulated paths live on a uniform grid; paths
produced by time changes keep the exact transformed knots.

After ``lifetime`` the path sits in the cemetery. Consumers must test the
lifetime marker, never the sentinel stored in the arrays (0 for ssMp values,
NaN for MAP coordinates).
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CadlagPath",
    "SsmpPath",
    "MapPath",
    "BeyondHorizon",
    "regrid",
    "sup_distance",
    "to_csv",
    "from_csv",
    "to_binary",
    "from_binary",
]


class BeyondHorizon(ValueError):
    """Evaluation requested past the observed window of a path."""


@dataclass
class CadlagPath:
    times: np.ndarray
    values: np.ndarray
    lifetime: float | None = None

    sentinel: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        self.values = vals
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("times must be a non-empty 1-d array")
        if self.times[0] != 0.0:
            raise ValueError("paths start at time 0")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be nondecreasing")
        if vals.shape[0] != self.times.size:
            raise ValueError("values and times must have the same length")
        if self.lifetime is not None:
            self.lifetime = float(self.lifetime)
            if self.lifetime < 0 or self.lifetime > self.horizon:
                raise ValueError("lifetime must lie in [0, horizon]")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def step(self) -> float:
        """Nominal step: the smallest positive knot spacing."""
        d = np.diff(self.times)
        d = d[d > 0]
        return float(d.min()) if d.size else 0.0

    def alive(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.lifetime is None:
            return np.ones(t.shape, dtype=bool)
        return t < self.lifetime

    def index_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(idx, 0, self.times.size - 1)

    def value_at(self, t) -> np.ndarray:
        """Step-interpolated values; cemetery sentinel after the lifetime."""
        t = np.asarray(t, dtype=float)
        alive = self.alive(t)
        if np.any(alive & (t > self.horizon)):
            raise BeyondHorizon(f"time {float(np.max(t))} beyond horizon {self.horizon}")
        out = self.values[self.index_at(t)].copy()
        out[~alive] = self.sentinel
        return out

    def alive_segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices and lengths of the segments ``[t_i, t_{i+1})`` before the lifetime."""
        ends = self.times[1:]
        starts = self.times[:-1]
        if self.lifetime is not None:
            keep = starts < self.lifetime
            ends = np.minimum(ends, self.lifetime)
        else:
            keep = np.ones(starts.shape, dtype=bool)
        idx = np.nonzero(keep)[0]
        return idx, ends[idx] - starts[idx]


@dataclass
class SsmpPath(CadlagPath):
    """Path of a self-similar Markov process; the cemetery is the origin."""

    alpha: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lifetime is not None:
            self.values[self.times >= self.lifetime] = 0.0

    @property
    def absorption(self) -> float | None:
        return self.lifetime

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)


@dataclass
class MapPath(CadlagPath):
    """Path of a Markov additive process ``(theta, xi)``.

    ``values`` stores theta as unit vectors (columns ``0..d-1``) followed by
    xi in the last column. For finite state spaces ``theta_index`` keeps the
    state index per knot (``-1`` in the cemetery).
    """

    theta_index: np.ndarray | None = None
    jump_times: np.ndarray | None = None

    def __post_init__(self):
        self.sentinel = math.nan
        super().__post_init__()
        if self.theta_index is not None:
            self.theta_index = np.asarray(self.theta_index, dtype=int)
        if self.lifetime is not None:
            dead = self.times >= self.lifetime
            self.values[dead] = math.nan
            if self.theta_index is not None:
                self.theta_index[dead] = -1

    @classmethod
    def from_parts(cls, times, theta, xi, lifetime=None, theta_index=None, jump_times=None) -> "MapPath":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 1:
            theta = theta[:, None]
        vals = np.column_stack([theta, np.asarray(xi, dtype=float)])
        return cls(times, vals, lifetime, theta_index=theta_index, jump_times=jump_times)

    @property
    def theta(self) -> np.ndarray:
        return self.values[:, :-1]

    @property
    def xi(self) -> np.ndarray:
        return self.values[:, -1]

    @property
    def sphere_dim(self) -> int:
        return self.values.shape[1] - 1


def regrid(path: CadlagPath, step: float, horizon: float | None = None) -> CadlagPath:
    """Resample onto a uniform grid by step interpolation."""
    if step <= 0:
        raise ValueError("step must be positive")
    horizon = path.horizon if horizon is None else float(horizon)
    n = int(math.floor(horizon / step + 1e-9))
    grid = np.arange(n + 1) * step
    vals = path.value_at(grid)
    kwargs = {}
    if isinstance(path, SsmpPath):
        kwargs["alpha"] = path.alpha
    lifetime = path.lifetime if path.lifetime is not None and path.lifetime <= grid[-1] else None
    if isinstance(path, MapPath) and path.theta_index is not None:
        kwargs["theta_index"] = path.theta_index[path.index_at(grid)]
        kwargs["theta_index"][~path.alive(grid)] = -1
    out = type(path)(grid, vals, lifetime, **kwargs)
    return out


def sup_distance(p: CadlagPath, q: CadlagPath, t_max: float, columns=None) -> float:
    """Sup-distance between two step paths over ``[0, t_max]``.

    Both paths are evaluated at the midpoints of the segments of ``p`` cut at
    ``t_max``, which makes the comparison insensitive to round-off in knot
    positions.
    """
    t = p.times[p.times <= t_max]
    if t[-1] < t_max:
        t = np.append(t, t_max)
    mids = (t[:-1] + t[1:]) / 2 if t.size > 1 else np.array([t_max])
    a = p.value_at(mids)
    b = q.value_at(mids)
    if columns is not None:
        a, b = a[:, columns], b[:, columns]
    both_dead = ~p.alive(mids) & ~q.alive(mids)
    diff = np.abs(a - b)
    diff[both_dead] = 0.0
    if np.any(np.isnan(diff)):
        return math.inf
    return float(diff.max()) if diff.size else 0.0


# ---------------------------------------------------------------------------
# serialization

_KIND = {SsmpPath: 1, MapPath: 2, CadlagPath: 0}
_MAGIC = b"SSMP"
_VERSION = 1


def _meta(path: CadlagPath) -> dict:
    meta = {
        "kind": type(path).__name__,
        "lifetime": "none" if path.lifetime is None else repr(path.lifetime),
    }
    if isinstance(path, SsmpPath):
        meta["alpha"] = repr(float(path.alpha))
    return meta


def to_csv(path: CadlagPath, provenance: str | None = None) -> str:
    """CSV text, one row per knot: ``t, value columns..., alive``.

    Floats use ``repr`` so the encoding round-trips exactly.
    """
    buf = io.StringIO()
    if provenance:
        for line in provenance.splitlines():
            buf.write(f"# {line}\n")
    meta = _meta(path)
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    if isinstance(path, MapPath):
        cols = [f"theta{i + 1}" for i in range(path.sphere_dim)] + ["xi"]
        if path.theta_index is not None:
            cols.append("state")
    else:
        cols = [f"x{i + 1}" for i in range(path.dim)]
    buf.write(",".join(["t", *cols, "alive"]) + "\n")
    alive = path.alive(path.times)
    for i, t in enumerate(path.times):
        row = [repr(float(t))] + [repr(float(v)) for v in path.values[i]]
        if isinstance(path, MapPath) and path.theta_index is not None:
            row.append(str(int(path.theta_index[i])))
        row.append("1" if alive[i] else "0")
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def from_csv(text: str) -> CadlagPath:
    meta: dict[str, str] = {}
    rows = []
    header = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            if not line[1:].lstrip().startswith("kind="):
                continue
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    if k in ("kind", "lifetime", "alpha"):
                        meta[k] = v
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(line.split(","))
    if header is None:
        raise ValueError("CSV has no header row")
    kind = meta.get("kind", "CadlagPath")
    lifetime = None if meta.get("lifetime", "none") == "none" else float(meta["lifetime"])
    has_state = "state" in header
    nval = len(header) - 2 - int(has_state)
    times = np.array([float(r[0]) for r in rows])
    vals = np.array([[float(v) for v in r[1 : 1 + nval]] for r in rows]).reshape(len(rows), nval)
    if kind == "SsmpPath":
        return SsmpPath(times, vals, lifetime, alpha=float(meta.get("alpha", 0.0)))
    if kind == "MapPath":
        idx = np.array([int(r[1 + nval]) for r in rows]) if has_state else None
        return MapPath(times, vals, lifetime, theta_index=idx)
    return CadlagPath(times, vals, lifetime)


def to_binary(path: CadlagPath) -> bytes:
    """``b"SSMP"``, a version byte, then little-endian float64 words.

    Word layout: kind, rows, value columns, has-state flag, alpha, lifetime
    (NaN if none), then per row ``t, values..., [state]``.
    """
    kind = _KIND[type(path)]
    has_state = isinstance(path, MapPath) and path.theta_index is not None
    alpha = path.alpha if isinstance(path, SsmpPath) else 0.0
    head = [kind, path.times.size, path.values.shape[1], float(has_state), alpha,
            math.nan if path.lifetime is None else path.lifetime]
    body = np.column_stack([path.times, path.values] + ([path.theta_index.astype(float)] if has_state else []))
    words = np.concatenate([np.array(head, dtype="<f8"), body.astype("<f8").ravel()])
    return _MAGIC + struct.pack("<B", _VERSION) + words.tobytes()


def from_binary(data: bytes) -> CadlagPath:
    if data[:4] != _MAGIC:
        raise ValueError("not an SSMP binary path (bad magic)")
    (version,) = struct.unpack("<B", data[4:5])
    if version != _VERSION:
        raise ValueError(f"unsupported SSMP version {version}")
    words = np.frombuffer(data[5:], dtype="<f8")
    kind, rows, cols, has_state, alpha, lifetime = words[:6]
    rows, cols, has_state = int(rows), int(cols), bool(has_state)
    width = 1 + cols + int(has_state)
    body = words[6:].reshape(rows, width)
    lt = None if math.isnan(lifetime) else float(lifetime)
    times, vals = body[:, 0].copy(), body[:, 1 : 1 + cols].copy()
    if int(kind) == 1:
        return SsmpPath(times, vals, lt, alpha=float(alpha))
    if int(kind) == 2:
        idx = body[:, -1].astype(int) if has_state else None
        return MapPath(times, vals, lt, theta_index=idx)
    return CadlagPath(times, vals, lt)
