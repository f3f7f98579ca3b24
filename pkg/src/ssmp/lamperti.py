"""Time changes between MAPs and self-similar Markov processes.

Every transform here integrates a positive weight along a step path with the
left-endpoint rule (exact for the step interpolation), then relabels the
knots of the source path by the accumulated functional. The output keeps
those exact knots unless a uniform ``out_step`` is requested, so that the
forward/inverse Lamperti maps and the spatial inversion compose to the
identity up to floating-point round-off.

Near absorption the weights can blow up. A segment whose weight ``w`` and
length ``l`` satisfy ``w * l**2 > divergence_threshold`` (``w > 1/h**2`` on a
uniform grid of step ``h``) is declared divergent: the functional is taken to
be infinite from the start of that segment on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .paths import CadlagPath, MapPath, SsmpPath, regrid

__all__ = [
    "TimeChangeTable",
    "BeyondLifetime",
    "WEIGHTS",
    "additive_functional",
    "invert_table",
    "lamperti_forward",
    "lamperti_inverse",
    "invert_path",
    "embed_unabsorbed",
]

WEIGHTS = ("exp_alpha_xi", "norm_neg_alpha", "norm_neg_2alpha", "embedding")


class BeyondLifetime(ValueError):
    """The requested level is not reached by the functional."""


@dataclass
class TimeChangeTable:
    """Cumulative functional ``F`` at the knots of the source path.

    ``F`` stops accumulating at the lifetime and is ``+inf`` at knots past a
    divergence point. ``total`` is ``sup F`` over the observed window, ``end``
    the source time at which it is attained and ``end_kind`` one of
    ``"horizon"``, ``"lifetime"`` or ``"divergent"``.
    """

    times: np.ndarray
    values: np.ndarray
    total: float
    end: float
    end_kind: str
    cut: int

    def __call__(self, t) -> np.ndarray:
        """``F`` at arbitrary source times (piecewise linear between knots)."""
        t = np.asarray(t, dtype=float)
        fin = np.isfinite(self.values)
        out = np.interp(t, self.times[fin], self.values[fin])
        if self.end_kind == "divergent":
            out = np.where(t > self.end, math.inf, out)
        elif self.end_kind == "lifetime":
            out = np.where(t >= self.end, self.total, out)
        return out


def _weights(path: CadlagPath, weight: str, alpha: float) -> np.ndarray:
    if weight not in WEIGHTS:
        raise ValueError(f"unknown weight {weight!r}; expected one of {WEIGHTS}")
    if weight == "exp_alpha_xi":
        if not isinstance(path, MapPath):
            raise TypeError("exp_alpha_xi integrates a MapPath")
        with np.errstate(invalid="ignore"):
            return np.exp(alpha * path.xi)
    vals = path.values
    r = np.linalg.norm(vals, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if weight == "norm_neg_alpha":
            return r ** (-alpha)
        if weight == "norm_neg_2alpha":
            return r ** (-2 * alpha)
        return (r**2 + path.times ** (2 / alpha)) ** (-alpha / 2)


def additive_functional(path: CadlagPath, weight: str, alpha: float,
                        divergence_threshold: float | None = 1.0) -> TimeChangeTable:
    """``F(t_k) = sum_{m<k} w(t_m) (t_{m+1} - t_m)`` along the step path.

    ``weight`` is one of ``exp_alpha_xi`` (MAP paths), ``norm_neg_alpha``,
    ``norm_neg_2alpha`` or ``embedding`` (``(|X_s|^2 + s^(2/alpha))^(-alpha/2)``).
    """
    if weight == "embedding" and alpha <= 0:
        raise ValueError("the embedding weight needs alpha > 0")
    w = _weights(path, weight, alpha)
    idx, lengths = path.alive_segments()
    wa = w[idx]
    if not np.all(np.isfinite(wa)) or np.any(wa < 0):
        bad = idx[~np.isfinite(wa)]
        raise ValueError(f"weight undefined on the path before its lifetime (knot {bad[:1].tolist()})")
    n = path.times.size
    cut = n - 1
    kind = "horizon"
    if divergence_threshold is not None:
        blow = np.nonzero(wa * lengths**2 > divergence_threshold)[0]
        if blow.size:
            cut = int(idx[blow[0]])
            kind = "divergent"
    k = idx.size if kind != "divergent" else cut
    incr = wa[:k] * lengths[:k]
    acc = np.concatenate([[0.0], np.cumsum(incr)])
    values = np.empty(n)
    if kind == "divergent":
        values[: cut + 1] = acc[: cut + 1]
        values[cut + 1 :] = math.inf
        return TimeChangeTable(path.times, values, math.inf, float(path.times[cut]), kind, cut)
    total = float(acc[-1])
    if path.lifetime is not None:
        last = idx[-1] if idx.size else -1
        values[: last + 1] = acc[: last + 1]
        values[last + 1 :] = total
        return TimeChangeTable(path.times, values, total, path.lifetime, "lifetime", last)
    values[:] = acc
    return TimeChangeTable(path.times, values, total, path.horizon, kind, cut)


def invert_table(table: TimeChangeTable, s: float) -> float:
    """Smallest knot time ``t`` with ``F(t) > s``."""
    if s < 0:
        raise ValueError("s must be >= 0")
    if not s < table.values[-1]:
        raise BeyondLifetime(f"level {s} is beyond the total {table.total} of the functional")
    k = int(np.searchsorted(table.values, s, side="right"))
    return float(table.times[k])


def _relabel(path: CadlagPath, table: TimeChangeTable, new_values: np.ndarray, build):
    """Assemble the transformed path on the knots ``F(t_i)``."""
    if table.end_kind == "divergent":
        k = table.cut
        return build(table.values[: k + 1], new_values[: k + 1], None)
    if table.end_kind == "lifetime":
        k = table.cut
        knots = np.append(table.values[: k + 1], table.total)
        vals = np.vstack([new_values[: k + 1], np.zeros((1, new_values.shape[1]))])
        return build(knots, vals, table.total)
    return build(table.values, new_values, None)


def _maybe_regrid(path, out_step, out_horizon):
    if out_step is None:
        return path
    return regrid(path, out_step, out_horizon)


def lamperti_forward(mpath: MapPath, alpha: float, out_horizon: float | None = None,
                     out_step: float | None = None, divergence_threshold: float | None = 1.0) -> SsmpPath:
    """``X_t = theta_{tau_t} exp(xi_{tau_t})`` with ``tau`` the inverse of ``int exp(alpha xi)``."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    table = additive_functional(mpath, "exp_alpha_xi", alpha, divergence_threshold)
    with np.errstate(invalid="ignore"):
        vals = mpath.theta * np.exp(mpath.xi)[:, None]
    out = _relabel(mpath, table, vals, lambda t, v, lt: SsmpPath(t, v, lt, alpha=alpha))
    return _maybe_regrid(out, out_step, out_horizon)


def _check_nonzero(xpath: SsmpPath) -> np.ndarray:
    r = xpath.norms()
    alive = xpath.alive(xpath.times)
    if np.any(r[alive] == 0):
        raise ValueError("path hits 0 before its declared absorption (corrupt input)")
    return r


def lamperti_inverse(xpath: SsmpPath, out_step: float | None = None,
                     divergence_threshold: float | None = 1.0) -> MapPath:
    """MAP ``(theta, xi) = (X/|X|, log|X|)`` read in the clock ``int |X|^-alpha``."""
    r = _check_nonzero(xpath)
    table = additive_functional(xpath, "norm_neg_alpha", xpath.alpha, divergence_threshold)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = xpath.values / r[:, None]
        xi = np.log(r)
    vals = np.column_stack([theta, xi])
    out = _relabel(xpath, table, vals, lambda t, v, lt: MapPath(t, v, lt))
    return _maybe_regrid(out, out_step, None)


def invert_path(xpath: SsmpPath, out_step: float | None = None, out_horizon: float | None = None,
                divergence_threshold: float | None = 1.0) -> SsmpPath:
    """``X_{gamma_t} / |X_{gamma_t}|^2`` with ``gamma`` the inverse of ``int |X|^(-2 alpha)``."""
    if xpath.alpha <= 0:
        raise ValueError("inversion needs alpha > 0")
    r = _check_nonzero(xpath)
    table = additive_functional(xpath, "norm_neg_2alpha", xpath.alpha, divergence_threshold)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = xpath.values / (r**2)[:, None]
    out = _relabel(xpath, table, vals, lambda t, v, lt: SsmpPath(t, v, lt, alpha=xpath.alpha))
    return _maybe_regrid(out, out_step, out_horizon)


def embed_unabsorbed(xpath: SsmpPath, alpha: float | None = None, out_step: float | None = None) -> MapPath:
    """Sphere-valued MAP in ``S_d`` built from an ssMp that never dies.

    ``theta_t = (X_{A_t}, A_t^(1/alpha)) / N_t`` and ``xi_t = log N_t`` with
    ``N_t = (|X_{A_t}|^2 + A_t^(2/alpha))^(1/2)``. The divergence of the
    associated forward functional is verified on the output.
    """
    alpha = xpath.alpha if alpha is None else float(alpha)
    if alpha <= 0:
        raise ValueError("embedding needs alpha > 0")
    if xpath.lifetime is not None:
        raise ValueError("embed_unabsorbed expects a path without absorption")
    _check_nonzero(xpath)
    table = additive_functional(xpath, "embedding", alpha, divergence_threshold=None)
    aug = np.column_stack([xpath.values, xpath.times ** (1 / alpha)])
    norm = np.linalg.norm(aug, axis=1)
    vals = np.column_stack([aug / norm[:, None], np.log(norm)])
    out = _relabel(xpath, table, vals, lambda t, v, lt: MapPath(t, v, lt))
    # exp(alpha xi) >= A at every knot, hence dA/du >= A and A grows at least
    # exponentially in the MAP clock: the forward functional diverges.
    a_vals = xpath.times[: out.times.size]
    if np.any(norm[: out.times.size] ** alpha < a_vals * (1 - 1e-12)):
        raise RuntimeError("embedding check failed: exp(alpha xi) < A_t")
    back = additive_functional(out, "exp_alpha_xi", alpha, divergence_threshold=None)
    if not math.isclose(back.total, xpath.horizon, rel_tol=1e-9, abs_tol=1e-12):
        raise RuntimeError("embedding check failed: forward functional does not recover A")
    return _maybe_regrid(out, out_step, None)
