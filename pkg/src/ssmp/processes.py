"""Catalog of self-similar Markov processes with exact one-step transitions.

Each process exposes ``transition(x, dt, gen)``: a draw of the state after
``dt`` from every row of ``x`` (shape ``(n, d)``), exact in law for the
absorbed process, together with a survival flag. Paths on a uniform grid are
built by chaining transitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .kernel import positive_stable, sample_stable, stable_beta, StablePart
from .paths import MapPath, SsmpPath
from .rng import RngStream, as_generator

__all__ = [
    "Process",
    "BrownianAbs1D",
    "Bessel",
    "Stable1D",
    "IsotropicStable",
    "FreeBessel",
    "Bes3",
    "simulate",
    "simulate_batch",
    "simulate_marginal",
    "simulate_clock_grid",
    "bes3_density",
    "besq_absorbed_survival",
    "free_bessel_map_sde",
    "free_bessel_sde_terminal",
    "PowerNorm",
    "PowerCoord",
    "AngularWeighted",
    "HarmonicSpec",
    "evaluate_h",
    "estimate_sign_measure",
]


def _besq_step(v: np.ndarray, dt, delta: float, gen: np.random.Generator):
    """Squared Bessel of dimension ``delta`` absorbed at 0, exact over ``dt``.

    For ``delta >= 2`` ``dt`` times a noncentral chi-square. For
    ``delta < 2`` with ``a = 1 - delta/2``: draw ``V ~ Gamma(a)``; the path
    is absorbed iff ``V >= v/(2dt)``, otherwise ``K ~ Poisson(v/(2dt) - V)``
    and the new value is ``2 dt Gamma(K + 1)``. Integrating out ``V`` gives the
    killed kernel ``(v/y)^a p^{4-delta}_dt(v, y)``.
    """
    if delta >= 2:
        return dt * gen.noncentral_chisquare(delta, v / dt), np.ones(np.shape(v), dtype=bool)
    lam = v / (2 * dt)
    a = 1 - delta / 2
    g = gen.gamma(a, size=v.shape)
    alive = g < lam
    out = np.zeros(v.shape)
    if np.any(alive):
        dtv = dt[alive] if np.ndim(dt) else dt
        k = gen.poisson(lam[alive] - g[alive])
        out[alive] = 2 * dtv * gen.gamma(k + 1.0)
    return out, alive


def besq_absorbed_survival(v: float, t: float, delta: float) -> float:
    """``P(T_0 > t)`` for a squared Bessel process of dimension ``delta < 2`` started at ``v``."""
    if delta >= 2:
        return 1.0
    return float(gammainc(1 - delta / 2, v / (2 * t)))


@dataclass(frozen=True)
class Process:
    horizon: float = 1.0
    step: float = 1e-3

    alpha: float = field(init=False, default=2.0)

    def _check_grid(self):
        if self.horizon <= 0 or self.step <= 0 or self.step > self.horizon:
            raise ValueError("need 0 < step <= horizon")

    @property
    def dim(self) -> int:
        return self.start.size

    @property
    def start(self) -> np.ndarray:
        raise NotImplementedError

    # exact transition of the absorbed process over any dt
    exact_marginal = True

    def transition(self, x: np.ndarray, dt, gen: np.random.Generator):
        raise NotImplementedError

    def with_start(self, x0) -> "Process":
        raise NotImplementedError

    def in_state_space(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x, axis=1) > 0


@dataclass(frozen=True)
class BrownianAbs1D(Process):
    """Standard Brownian motion absorbed at 0, started at ``x0 > 0``."""

    x0: float = 1.0

    def __post_init__(self):
        self._check_grid()
        if not self.x0 > 0:
            raise ValueError("BrownianAbs1D needs x0 > 0")

    @property
    def start(self):
        return np.array([float(self.x0)])

    def with_start(self, x0):
        return BrownianAbs1D(self.horizon, self.step, float(np.ravel(x0)[0]))

    def in_state_space(self, x):
        return x[:, 0] > 0

    def transition(self, x, dt, gen):
        x0 = x[:, 0]
        sd = np.sqrt(dt)
        y = x0 + sd * gen.standard_normal(x0.shape)
        u = gen.random(x0.shape)
        with np.errstate(over="ignore"):
            crossed = u < np.exp(-2 * x0 * np.maximum(y, 0) / dt)
        alive = (y > 0) & ~crossed
        return np.where(alive, y, 0.0)[:, None], alive


@dataclass(frozen=True)
class Bessel(Process):
    """Bessel process of dimension ``delta`` (absorbed at 0 when ``delta < 2``)."""

    delta: float = 3.0
    x0: float = 1.0

    def __post_init__(self):
        self._check_grid()
        if not self.delta > 0:
            raise ValueError("Bessel needs delta > 0")
        if self.x0 < 0 or (self.x0 == 0 and self.delta < 2):
            raise ValueError("Bessel needs x0 > 0 (x0 = 0 only allowed for delta >= 2)")

    @property
    def start(self):
        return np.array([float(self.x0)])

    def with_start(self, x0):
        return type(self)(self.horizon, self.step, self.delta, float(np.ravel(x0)[0]))

    def in_state_space(self, x):
        return x[:, 0] > 0

    def transition(self, x, dt, gen):
        v, alive = _besq_step(x[:, 0] ** 2, dt, self.delta, gen)
        return np.sqrt(v)[:, None], alive


@dataclass(frozen=True)
class Bes3(Process):
    """Three-dimensional Bessel process (never hits 0)."""

    x0: float = 1.0

    def __post_init__(self):
        self._check_grid()
        if not self.x0 > 0:
            raise ValueError("Bes3 needs x0 > 0")

    @property
    def start(self):
        return np.array([float(self.x0)])

    def with_start(self, x0):
        return Bes3(self.horizon, self.step, float(np.ravel(x0)[0]))

    def in_state_space(self, x):
        return x[:, 0] > 0

    def transition(self, x, dt, gen):
        v, alive = _besq_step(x[:, 0] ** 2, dt, 3.0, gen)
        return np.sqrt(v)[:, None], alive


@dataclass(frozen=True)
class Stable1D(Process):
    """Real strictly stable Lévy process, optionally absorbed near 0.

    Absorption is detected at grid times by entry into ``(-eps, eps)``; the
    resulting bias is of order ``eps^(alpha - 1)``.
    """

    stable_alpha: float = 1.5
    rho: float = 0.5
    x0: float = 1.0
    absorb_at_zero: bool = False
    eps: float = 1e-4

    def __post_init__(self):
        self._check_grid()
        if not 0 < self.stable_alpha < 2:
            raise ValueError("Stable1D needs alpha in (0, 2)")
        StablePart(self.stable_alpha, self.rho)
        if self.x0 == 0:
            raise ValueError("Stable1D needs x0 != 0")
        if self.absorb_at_zero and self.stable_alpha <= 1:
            raise ValueError("absorb_at_zero is only meaningful for alpha > 1")
        object.__setattr__(self, "alpha", float(self.stable_alpha))

    @property
    def exact_marginal(self):
        return not self.absorb_at_zero

    @property
    def start(self):
        return np.array([float(self.x0)])

    def with_start(self, x0):
        return Stable1D(self.horizon, self.step, self.stable_alpha, self.rho, float(np.ravel(x0)[0]),
                        self.absorb_at_zero, self.eps)

    def transition(self, x, dt, gen):
        a = self.stable_alpha
        beta = stable_beta(a, self.rho)
        y = x[:, 0] + np.asarray(dt) ** (1 / a) * sample_stable(a, beta, gen, x.shape[0])
        if self.absorb_at_zero:
            alive = np.abs(y) >= self.eps
        else:
            alive = y != 0
        return np.where(alive, y, 0.0)[:, None], alive


@dataclass(frozen=True)
class IsotropicStable(Process):
    """Isotropic ``alpha``-stable Lévy process in ``R^d``, ``E e^{i<l, X_t>} = e^{-t |l|^alpha}``.

    Sampled as Brownian motion (variance ``2s`` per coordinate) at an
    independent ``alpha/2``-stable subordinator time.
    """

    d: int = 2
    stable_alpha: float = 1.0
    x0: tuple = (1.0, 0.0)

    def __post_init__(self):
        self._check_grid()
        if self.d < 2:
            raise ValueError("IsotropicStable needs d >= 2")
        if not 0 < self.stable_alpha < 2:
            raise ValueError("IsotropicStable needs alpha in (0, 2)")
        x0 = tuple(float(c) for c in np.ravel(self.x0))
        if len(x0) != self.d or not any(x0):
            raise ValueError("x0 must be a nonzero point of R^d")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "alpha", float(self.stable_alpha))

    @property
    def start(self):
        return np.array(self.x0)

    def with_start(self, x0):
        return IsotropicStable(self.horizon, self.step, self.d, self.stable_alpha, tuple(np.ravel(x0)))

    def transition(self, x, dt, gen):
        n = x.shape[0]
        a = self.stable_alpha
        s = np.asarray(dt) ** (2 / a) * positive_stable(a / 2, gen, n)
        y = x + np.sqrt(2 * s)[:, None] * gen.standard_normal((n, self.d))
        return y, np.ones(n, dtype=bool)


@dataclass(frozen=True)
class FreeBessel(Process):
    """``d`` independent Bessel(``delta``) coordinates on ``(0, inf)^d``."""

    d: int = 2
    delta: float = 3.0
    x0: tuple = (1.0, 1.0)

    def __post_init__(self):
        self._check_grid()
        if self.d < 1 or not self.delta > 0:
            raise ValueError("FreeBessel needs d >= 1 and delta > 0")
        x0 = tuple(float(c) for c in np.ravel(self.x0))
        if len(x0) != self.d or any(c <= 0 for c in x0):
            raise ValueError("x0 must lie in (0, inf)^d")
        object.__setattr__(self, "x0", x0)

    @property
    def start(self):
        return np.array(self.x0)

    def with_start(self, x0):
        return FreeBessel(self.horizon, self.step, self.d, self.delta, tuple(np.ravel(x0)))

    def in_state_space(self, x):
        return np.all(x > 0, axis=1)

    def transition(self, x, dt, gen):
        n = x.shape[0]
        dtc = np.repeat(np.broadcast_to(np.asarray(dt, dtype=float), (n,))[:, None], self.d, axis=1)
        v, alive = _besq_step(x.ravel() ** 2, dtc.ravel(), self.delta, gen)
        alive = alive.reshape(n, self.d).all(axis=1)
        y = np.sqrt(v).reshape(n, self.d)
        y[~alive] = 0.0
        return y, alive


# ---------------------------------------------------------------------------
# simulation


def _grid(spec: Process) -> np.ndarray:
    n = int(round(spec.horizon / spec.step))
    if not math.isclose(n * spec.step, spec.horizon, rel_tol=1e-9):
        n = int(math.floor(spec.horizon / spec.step))
    return np.arange(n + 1) * spec.step


def simulate_batch(spec: Process, n: int, rng: RngStream | np.random.Generator, x0=None):
    """``n`` independent grid paths: ``(times, values (n, N+1, d), absorption (n,))``.

    Absorption is recorded at the first grid time at which a path is dead
    (NaN when it survives the horizon).
    """
    gen = as_generator(rng)
    times = _grid(spec)
    start = spec.start if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    vals = np.zeros((n, times.size, start.size))
    vals[:, 0] = start
    absorption = np.full(n, math.nan)
    alive = np.ones(n, dtype=bool)
    x = np.repeat(start[None, :], n, axis=0)
    for k in range(1, times.size):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        y, ok = spec.transition(x[idx], times[k] - times[k - 1], gen)
        x[idx] = y
        dead = idx[~ok]
        alive[dead] = False
        absorption[dead] = times[k]
        x[dead] = 0.0
        vals[:, k] = x
    return times, vals, absorption


def simulate(spec: Process, rng: RngStream | np.random.Generator) -> SsmpPath:
    """One path on the uniform grid of ``spec``."""
    times, vals, absorption = simulate_batch(spec, 1, rng)
    lt = None if math.isnan(absorption[0]) else float(absorption[0])
    return SsmpPath(times, vals[0], lt, alpha=spec.alpha)


def paths_from_batch(spec: Process, times, vals, absorption) -> list[SsmpPath]:
    return [
        SsmpPath(times, vals[i], None if math.isnan(absorption[i]) else float(absorption[i]), alpha=spec.alpha)
        for i in range(vals.shape[0])
    ]


def simulate_clock_grid(spec: Process, n: int, clock: float, map_horizon: float,
                        rng: RngStream | np.random.Generator, x0=None) -> list[SsmpPath]:
    """``n`` paths whose knots are uniform in the Lamperti clock ``int |X|^-alpha``.

    From knot ``X_k`` the next knot is the exact transition over
    ``dt_k = clock * |X_k|^alpha``, so the left-endpoint clock advances by
    exactly ``clock`` per step and ``lamperti_inverse`` of each path is a MAP
    path on the grid ``k * clock`` up to ``map_horizon``. Useful when the
    real-time horizon needed to reach a given MAP time is random and large.
    """
    if clock <= 0 or map_horizon <= 0:
        raise ValueError("clock and map_horizon must be positive")
    gen = as_generator(rng)
    a = spec.alpha
    steps = int(math.ceil(map_horizon / clock - 1e-9))
    start = spec.start if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    x = np.repeat(start[None, :], n, axis=0)
    vals = np.zeros((n, steps + 1, start.size))
    times = np.zeros((n, steps + 1))
    vals[:, 0] = x
    absorption = np.full(n, math.nan)
    alive = spec.in_state_space(x)
    for k in range(1, steps + 1):
        idx = np.nonzero(alive)[0]
        dt = np.zeros(n)
        if idx.size:
            dt[idx] = clock * np.linalg.norm(x[idx], axis=1) ** a
            y, ok = spec.transition(x[idx], dt[idx], gen)
            x[idx] = y
            dead = idx[~ok]
            alive[dead] = False
            absorption[dead] = times[dead, k - 1] + dt[dead]
            x[dead] = 0.0
        # dead paths keep a unit spacing so knots stay strictly increasing
        times[:, k] = times[:, k - 1] + np.where(dt > 0, dt, 1.0)
        vals[:, k] = x
    return [SsmpPath(times[i], vals[i], None if math.isnan(absorption[i]) else float(absorption[i]),
                     alpha=a) for i in range(n)]


def simulate_marginal(spec: Process, x0s, t: float, rng: RngStream | np.random.Generator):
    """State at time ``t`` from each start in ``x0s`` (shape ``(n, d)``) and survival flags.

    One exact transition when the process allows it, otherwise the grid of
    ``spec.step``.
    """
    gen = as_generator(rng)
    x = np.array(x0s, dtype=float, copy=True)
    if x.ndim == 1:
        x = x[:, None] if spec.dim == 1 else x[None, :]
    alive = spec.in_state_space(x)
    x[~alive] = 0.0
    if t == 0:
        return x, alive
    nsteps = 1 if spec.exact_marginal else max(1, int(math.ceil(t / spec.step - 1e-9)))
    dt = t / nsteps
    for _ in range(nsteps):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        y, ok = spec.transition(x[idx], dt, gen)
        x[idx] = y
        alive[idx[~ok]] = False
        x[idx[~ok]] = 0.0
    return x, alive


# ---------------------------------------------------------------------------
# oracles


def bes3_density(x, y, t):
    """BES(3) transition density ``(y/x) (phi_t(y - x) - phi_t(y + x))``."""
    x, y, t = (np.asarray(v, dtype=float) for v in (x, y, t))
    if np.any(x <= 0) or np.any(y <= 0) or np.any(t <= 0):
        raise ValueError("bes3_density needs x, y, t > 0")
    c = 1 / np.sqrt(2 * np.pi * t)
    # phi(y-x) - phi(y+x) = phi(y-x) (1 - exp(-2xy/t))
    out = (y / x) * c * np.exp(-((y - x) ** 2) / (2 * t)) * (-np.expm1(-2 * x * y / t))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# free Bessel MAP via its SDE


def _free_bessel_sde(d, delta, theta0, xi0, horizon, step, n, gen, keep_path):
    if delta <= 2:
        raise ValueError("the MAP SDE representation needs delta > 2")
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    if theta0.size != d or np.any(theta0 <= 0) or abs(np.linalg.norm(theta0) - 1) > 1e-12:
        raise ValueError("theta0 must be a unit vector with positive coordinates")
    if step <= 0 or step > horizon:
        raise ValueError("need 0 < step <= horizon")
    nsteps = int(round(horizon / step))
    if not math.isclose(nsteps * step, horizon, rel_tol=1e-9):
        nsteps = int(math.floor(horizon / step))
    times = np.arange(nsteps + 1) * step
    theta = np.repeat(theta0[None, :], n, axis=0)
    xi = np.full(n, float(xi0))
    drift_xi = d * delta / 2 - 1
    sq = math.sqrt(step)
    if keep_path:
        th_hist = np.empty((nsteps + 1, n, d))
        xi_hist = np.empty((nsteps + 1, n))
        th_hist[0], xi_hist[0] = theta, xi
    for k in range(1, nsteps + 1):
        dw = sq * gen.standard_normal((n, d))
        proj = np.einsum("ij,ij->i", theta, dw)
        xi = xi + proj + drift_xi * step
        drift = (delta - 1) / (2 * theta) - (d * delta - 1) / 2 * theta
        theta = theta + dw - theta * proj[:, None] + drift * step
        theta = np.abs(theta)
        theta /= np.linalg.norm(theta, axis=1)[:, None]
        if keep_path:
            th_hist[k], xi_hist[k] = theta, xi
    if keep_path:
        return times, th_hist, xi_hist
    return times, theta, xi


def free_bessel_map_sde(d: int, delta: float, theta0, xi0: float, horizon: float, step: float,
                        rng: RngStream | np.random.Generator) -> MapPath:
    """Euler-Maruyama path of the free Bessel MAP (sphere-valued ``theta``).

    ``theta`` is renormalized onto the unit sphere after every step.
    """
    gen = as_generator(rng)
    times, th, xi = _free_bessel_sde(d, delta, theta0, xi0, horizon, step, 1, gen, keep_path=True)
    return MapPath.from_parts(times, th[:, 0, :], xi[:, 0])


def free_bessel_sde_terminal(d, delta, theta0, xi0, horizon, step, n, rng):
    """Terminal ``(theta, xi)`` of ``n`` independent SDE runs."""
    gen = as_generator(rng)
    _, theta, xi = _free_bessel_sde(d, delta, theta0, xi0, horizon, step, n, gen, keep_path=False)
    return theta, xi


# ---------------------------------------------------------------------------
# excessive functions


@dataclass(frozen=True)
class PowerNorm:
    """``x -> |x|^exponent`` on ``R^d \\ {0}``."""

    exponent: float

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=1)
        if np.any(r == 0):
            raise ValueError("PowerNorm is undefined at 0")
        return r**self.exponent


@dataclass(frozen=True)
class PowerCoord:
    """``x -> x^exponent`` on ``(0, inf)``."""

    exponent: float

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != 1 or np.any(x[:, 0] <= 0):
            raise ValueError("PowerCoord needs one-dimensional x > 0")
        return x[:, 0] ** self.exponent


@dataclass(frozen=True)
class AngularWeighted:
    """``x -> pi(sign x) |x|^exponent`` on ``R \\ {0}``."""

    pi_minus: float
    pi_plus: float
    exponent: float

    def __post_init__(self):
        if not (self.pi_minus > 0 and self.pi_plus > 0):
            raise ValueError("angular weights must be positive")

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != 1 or np.any(x[:, 0] == 0):
            raise ValueError("AngularWeighted needs one-dimensional x != 0")
        w = np.where(x[:, 0] > 0, self.pi_plus, self.pi_minus)
        return w * np.abs(x[:, 0]) ** self.exponent


HarmonicSpec = PowerNorm | PowerCoord | AngularWeighted


def evaluate_h(h: HarmonicSpec, x) -> float | np.ndarray:
    """Value of ``h`` at a point (float) or at the rows of an ``(n, d)`` array."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    if single:
        arr = arr.reshape(1, -1)
    out = h(arr)
    return float(out[0]) if single else out


def estimate_sign_measure(spec: Stable1D, n_paths: int, rng: RngStream | np.random.Generator,
                          map_horizon: float = 30.0, burn_in: float = 10.0, clock: float = 0.01):
    """Long-run occupation fractions ``(pi(-1), pi(+1))`` of the sign chain.

    Paths are generated on a uniform Lamperti-clock grid (see
    ``simulate_clock_grid``) so the inverse transform observes every path up
    to MAP time ``map_horizon``. MAP time spent with ``theta = +1`` after
    ``burn_in`` is pooled over all paths alive there.
    """
    from .lamperti import lamperti_inverse

    if not 0 <= burn_in < map_horizon:
        raise ValueError("need 0 <= burn_in < map_horizon")
    plus = total = 0.0
    for p in simulate_clock_grid(spec, n_paths, clock, map_horizon, rng):
        m = lamperti_inverse(p)
        idx, lengths = m.alive_segments()
        starts = m.times[idx]
        lengths = np.clip(np.minimum(starts + lengths, map_horizon) - np.maximum(starts, burn_in), 0, None)
        pos = m.theta[idx, 0] > 0
        plus += float(lengths[pos].sum())
        total += float(lengths.sum())
    if total == 0:
        raise RuntimeError("no path survived the burn-in; lower burn_in or raise n_paths")
    return (1 - plus / total, plus / total)
