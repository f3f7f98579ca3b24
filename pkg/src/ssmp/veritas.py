"""Monte Carlo verification of semigroup identities.

Path samplers return the state at a fixed time from a batch of starting
points. Checks compare two independent Monte Carlo estimates and pass when
they agree within a multiple of their combined standard error; distributional
checks use two-sample Kolmogorov-Smirnov statistics against the asymptotic
1% critical value.

Replicas are split into fixed-size chunks, each driven by its own derived
random stream, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.special import gamma as gamma_fn

from . import kernel
from .kernel import LevySpec
from .maps import MapSpec, map_characteristic, sample_map_marginal
from .processes import HarmonicSpec, Process, simulate_marginal
from .rng import RngStream

__all__ = [
    "VerificationReport",
    "GaussianBump",
    "IndicatorAnnulus",
    "CoordinatePower",
    "TestFunctionSpec",
    "MeasureSpec",
    "UniformAngular",
    "SignWeights",
    "CoordinateProduct",
    "ProcessSampler",
    "LevySampler",
    "InversionSampler",
    "ks_two_sample",
    "ks_one_sample",
    "ks_critical",
    "check_duality",
    "check_self_duality",
    "check_h_transform",
    "check_moment_identity",
    "check_isotropy",
    "check_scaling",
    "weighted_ecdf_comparison",
    "rotation_2d",
]

CHUNK = 1 << 14
THREADS_ENV = "SSMP_THREADS"


# ---------------------------------------------------------------------------
# reports


@dataclass
class VerificationReport:
    name: str
    lhs_estimate: float | complex
    rhs_estimate: float | complex
    se_lhs: float
    se_rhs: float
    statistic: float
    threshold: float
    passed: bool
    n_samples: int
    seed: int | None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.statistic <= self.threshold)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, complex):
                return {"re": v.real, "im": v.imag}
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "name": self.name,
            "lhs_estimate": enc(self.lhs_estimate),
            "rhs_estimate": enc(self.rhs_estimate),
            "se_lhs": float(self.se_lhs),
            "se_rhs": float(self.se_rhs),
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "pass": self.passed,
            "n_samples": int(self.n_samples),
            "seed": self.seed,
            "details": _jsonable(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: lhs={_fmt(self.lhs_estimate)} rhs={_fmt(self.rhs_estimate)} "
                f"stat={self.statistic:.4g} thr={self.threshold:.4g} n={self.n_samples}")


def _fmt(v) -> str:
    if isinstance(v, complex):
        return f"{v.real:.5g}{v.imag:+.5g}j"
    return f"{v:.5g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def ks_critical(n: int, m: int, level: float) -> float:
    c = math.sqrt(-math.log(level / 2) / 2)
    return c * math.sqrt((n + m) / (n * m))


def ks_two_sample(a, b) -> tuple[float, float, float]:
    """Sup-distance of the empirical CDFs and the 5% / 1% asymptotic critical values."""
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(b, dtype=float)))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    stat = float(np.max(np.abs(fa - fb)))
    return stat, ks_critical(a.size, b.size, 0.05), ks_critical(a.size, b.size, 0.01)


def ks_one_sample(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    x = np.sort(np.ravel(np.asarray(sample, dtype=float)))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class GaussianBump:
    center: tuple
    width: float

    def __call__(self, x):
        c = np.asarray(self.center, dtype=float).reshape(1, -1)
        return np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * self.width**2))


@dataclass(frozen=True)
class IndicatorAnnulus:
    r_lo: float
    r_hi: float

    def __call__(self, x):
        r = np.linalg.norm(x, axis=1)
        return ((r >= self.r_lo) & (r <= self.r_hi)).astype(float)


@dataclass(frozen=True)
class CoordinatePower:
    """``min(|x_coord|^exponent, cap)``."""

    exponent: float
    cap: float
    coord: int = 0

    def __call__(self, x):
        with np.errstate(divide="ignore"):
            v = np.abs(x[:, self.coord]) ** self.exponent
        return np.minimum(v, self.cap)


TestFunctionSpec = GaussianBump | IndicatorAnnulus | CoordinatePower


# ---------------------------------------------------------------------------
# reference measures


@dataclass(frozen=True)
class UniformAngular:
    def __call__(self, y):
        return np.ones(y.shape[0])


@dataclass(frozen=True)
class SignWeights:
    pi_minus: float
    pi_plus: float

    def __call__(self, y):
        return np.where(y[:, 0] > 0, self.pi_plus, self.pi_minus)


@dataclass(frozen=True)
class CoordinateProduct:
    """``prod_i y_i^exponent`` on the positive orthant."""

    exponent: float

    def __call__(self, y):
        return np.prod(np.abs(y) ** self.exponent, axis=1)


@dataclass(frozen=True)
class MeasureSpec:
    """Density ``angular(x/|x|) |x|^radial_exponent`` on ``{r_lo <= |x| <= r_hi}`` within a cone.

    ``cone`` is ``"full"`` (all of ``R^d \\ {0}``) or ``"positive"`` (the
    positive orthant).
    """

    d: int
    radial_exponent: float
    r_lo: float
    r_hi: float
    angular: UniformAngular | SignWeights | CoordinateProduct = UniformAngular()
    cone: str = "full"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (0 < self.r_lo < self.r_hi < math.inf):
            raise ValueError("the region needs 0 < r_lo < r_hi < inf")
        if self.cone not in ("full", "positive"):
            raise ValueError("cone must be 'full' or 'positive'")

    @classmethod
    def power_norm(cls, d, p, r_lo, r_hi, cone="full"):
        return cls(d, p, r_lo, r_hi, UniformAngular(), cone)

    @property
    def sphere_area(self) -> float:
        area = 2 * math.pi ** (self.d / 2) / gamma_fn(self.d / 2)
        return area / 2**self.d if self.cone == "positive" else area

    def density(self, x) -> np.ndarray:
        r = np.linalg.norm(x, axis=1)
        return self.angular(x / r[:, None]) * r**self.radial_exponent

    def in_region(self, x) -> np.ndarray:
        r = np.linalg.norm(x, axis=1)
        ok = (r >= self.r_lo) & (r <= self.r_hi)
        if self.cone == "positive":
            ok &= np.all(x > 0, axis=1)
        return ok

    def sample(self, n: int, gen: np.random.Generator):
        """Points uniform in ``(log r, direction)`` and their importance weights."""
        z = gen.standard_normal((n, self.d))
        if self.cone == "positive":
            z = np.abs(z)
        dirs = z / np.linalg.norm(z, axis=1)[:, None]
        logr = gen.uniform(math.log(self.r_lo), math.log(self.r_hi), n)
        r = np.exp(logr)
        x = dirs * r[:, None]
        w = self.density(x) * r**self.d * math.log(self.r_hi / self.r_lo) * self.sphere_area
        return x, w


# ---------------------------------------------------------------------------
# samplers


class Sampler(Protocol):
    dim: int

    def sample(self, x0s: np.ndarray, t: float, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass
class ProcessSampler:
    """Marginal of a catalog process (exact when the process allows it)."""

    process: Process

    @property
    def dim(self):
        return self.process.dim

    def sample(self, x0s, t, gen):
        return simulate_marginal(self.process, x0s, t, gen)


@dataclass
class LevySampler:
    """A real Lévy process started anywhere on R (no absorption at 0)."""

    levy: LevySpec
    dim: int = 1

    def sample(self, x0s, t, gen):
        x = np.asarray(x0s, dtype=float).reshape(-1, 1)
        if t == 0:
            return x.copy(), np.ones(x.shape[0], dtype=bool)
        inc, killed = kernel.sample_increment(self.levy, t, gen, size=x.shape[0])
        alive = ~np.asarray(killed)
        y = x[:, 0] + inc
        return np.where(alive, y, 0.0)[:, None], alive


@dataclass
class InversionSampler:
    """``X_{gamma_t} / |X_{gamma_t}|^2`` started from ``x`` (so ``X`` starts at ``x/|x|^2``).

    ``X`` is advanced with exact transitions over steps ``clock * |X|^alpha``,
    i.e. uniform steps of the Lamperti clock, and ``int |X|^(-2 alpha)`` is
    accumulated with the left-endpoint rule. A path is declared dead when
    ``X`` is absorbed before the functional reaches ``t``, or when ``|X|``
    exceeds ``r_stop`` times its starting norm (the inverted path is then
    within ``1/r_stop`` of the origin and about to die).
    """

    process: Process
    clock: float = 1e-3
    r_stop: float = 1e4
    max_steps: int = 200_000
    unresolved: int = 0

    @property
    def dim(self):
        return self.process.dim

    def sample(self, x0s, t, gen):
        xh = np.array(x0s, dtype=float).reshape(-1, self.dim)
        n = xh.shape[0]
        out = np.zeros((n, self.dim))
        alive = np.zeros(n, dtype=bool)
        r0 = np.linalg.norm(xh, axis=1)
        ok = self.process.in_state_space(xh) & (r0 > 0)
        if t == 0:
            out[ok] = xh[ok]
            return out, ok
        a = self.process.alpha
        x = np.zeros_like(xh)
        x[ok] = xh[ok] / (r0[ok] ** 2)[:, None]
        limit = np.where(ok, self.r_stop / np.where(r0 > 0, r0, 1.0), 0.0)
        acc = np.zeros(n)
        active = np.nonzero(ok)[0]
        for _ in range(self.max_steps):
            if active.size == 0:
                break
            xa = x[active]
            r = np.linalg.norm(xa, axis=1)
            contrib = self.clock * r ** (-a)
            hit = acc[active] + contrib > t
            done = active[hit]
            out[done] = xa[hit] / (r[hit] ** 2)[:, None]
            alive[done] = True
            go = active[~hit]
            acc[go] += contrib[~hit]
            y, surv = self.process.transition(x[go], self.clock * r[~hit] ** a, gen)
            x[go] = y
            far = np.linalg.norm(y, axis=1) > limit[go]
            active = go[surv & ~far]
        if active.size:
            self.unresolved += int(active.size)
            logging.getLogger("ssmp").warning("%d inverted paths unresolved after %d steps; counted as dead",
                                              active.size, self.max_steps)
        return out, alive


# ---------------------------------------------------------------------------
# chunked replica driver


def _threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("checks need an RngStream or an integer seed")


def _run_chunks(n: int, stream: RngStream, fn: Callable[[int, np.random.Generator], np.ndarray],
                threads: int | None = None) -> np.ndarray:
    """Evaluate ``fn(size, gen)`` on fixed chunks and concatenate in chunk order."""
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    jobs = [(s, stream.derive(i).gen) for i, s in enumerate(sizes)]
    nt = _threads(threads)
    if nt > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(nt) as ex:
            parts = list(ex.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.concatenate(parts) if parts else np.zeros(0)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    n = v.size
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.inf


# ---------------------------------------------------------------------------
# checks


def check_duality(proc_a: Sampler, proc_b: Sampler, m: MeasureSpec, t: float, f: TestFunctionSpec,
                  g: TestFunctionSpec, n: int, rng, n_se: float = 3.0, threads: int | None = None,
                  name: str = "duality") -> VerificationReport:
    """``int g P_t f dm`` against ``int f Phat_t g dm`` from independent samples.

    Test functions are restricted to the sampling region (both as outer
    integrands and at the path endpoints), which keeps the identity exact.
    """
    stream = _as_stream(rng)
    if proc_a.dim != m.d or proc_b.dim != m.d:
        raise ValueError("sampler and measure dimensions differ")

    def restrict(fn):
        return lambda x: fn(x) * m.in_region(x)

    fr, gr = restrict(f), restrict(g)

    def side(sampler, outer, inner):
        def fn(size, gen):
            x, w = m.sample(size, gen)
            y, alive = sampler.sample(x, t, gen)
            val = np.zeros(size)
            val[alive] = inner(y[alive])
            return w * outer(x) * val

        return fn

    lhs_s = _run_chunks(n, stream.derive(0), side(proc_a, gr, fr), threads)
    rhs_s = _run_chunks(n, stream.derive(1), side(proc_b, fr, gr), threads)
    if not np.any(lhs_s) and not np.any(rhs_s):
        raise ValueError("zero effective sample size: every sample contributed 0")
    lhs, se_l = _mean_se(lhs_s)
    rhs, se_r = _mean_se(rhs_s)
    se = math.hypot(se_l, se_r)
    return VerificationReport(name, lhs, rhs, se_l, se_r, abs(lhs - rhs), n_se * se, False, n, stream.seed,
                              {"t": t, "n_se": n_se})


def check_self_duality(proc: Sampler, m: MeasureSpec, t, f, g, n, rng, n_se: float = 3.0,
                       threads: int | None = None) -> VerificationReport:
    return check_duality(proc, proc, m, t, f, g, n, rng, n_se, threads, name="self_duality")


def check_h_transform(base: Sampler, candidate: Sampler, h: HarmonicSpec, x, t: float, g: TestFunctionSpec,
                      n: int, rng, n_se: float = 3.0, threads: int | None = None) -> VerificationReport:
    """``E_x g(Xhat_t)`` against ``E_x[h(X_t) g(X_t); t < zeta] / h(x)``."""
    stream = _as_stream(rng)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    hx = float(h(x)[0])
    if not hx > 0 or not math.isfinite(hx):
        raise ValueError("h(x) must be positive and finite")

    def cand(size, gen):
        y, alive = candidate.sample(np.repeat(x, size, axis=0), t, gen)
        v = np.zeros(size)
        v[alive] = g(y[alive])
        return v

    def weighted(size, gen):
        y, alive = base.sample(np.repeat(x, size, axis=0), t, gen)
        v = np.zeros(size)
        v[alive] = h(y[alive]) * g(y[alive]) / hx
        return v

    lhs, se_l = _mean_se(_run_chunks(n, stream.derive(0), cand, threads))
    rhs, se_r = _mean_se(_run_chunks(n, stream.derive(1), weighted, threads))
    se = math.hypot(se_l, se_r)
    return VerificationReport("h_transform", lhs, rhs, se_l, se_r, abs(lhs - rhs), n_se * se, False, n,
                              stream.seed, {"t": t, "x": x.ravel().tolist(), "h_x": hx, "n_se": n_se})


def check_moment_identity(spec: MapSpec, lam: float, t: float, n: int, rng, n_se: float = 3.0,
                          threads: int | None = None) -> VerificationReport:
    """Monte Carlo ``E_{i,0}[exp(i lam xi_t); theta_t = j]`` against ``exp(A(i lam) t)``.

    ``n`` paths per starting state; real and imaginary parts are tested
    separately. The statistic is the largest deviation in standard errors.
    """
    stream = _as_stream(rng)
    exact = map_characteristic(spec, 1j * lam, t)
    k = spec.n
    est = np.zeros((k, k), dtype=complex)
    se = np.zeros((k, k), dtype=complex)
    for i in range(k):
        def fn(size, gen, i=i):
            theta, xi, alive, _ = sample_map_marginal(spec, i, 0.0, t, size, gen)
            out = np.zeros((size, k), dtype=complex)
            ph = np.exp(1j * lam * np.where(alive, xi, 0.0))
            for j in range(k):
                out[:, j] = np.where(theta == j, ph, 0.0)
            return out

        samples = _run_chunks(n, stream.derive(i), fn, threads)
        est[i] = samples.mean(axis=0)
        se[i] = (samples.real.std(axis=0, ddof=1) + 1j * samples.imag.std(axis=0, ddof=1)) / math.sqrt(n)
    dev = np.concatenate([np.abs((est - exact).real).ravel(), np.abs((est - exact).imag).ravel()])
    sev = np.concatenate([se.real.ravel(), se.imag.ravel()])
    z = np.where(dev <= 1e-12, 0.0, dev / np.maximum(sev, 1e-300))
    worst = int(np.argmax(z))
    flat = worst % (k * k)
    wi, wj = divmod(flat, k)
    return VerificationReport(
        "moment_identity", complex(est[wi, wj]), complex(exact[wi, wj]), float(abs(se[wi, wj])), 0.0,
        float(z.max()), n_se, False, n, stream.seed,
        {"lambda": lam, "t": t, "estimate": est, "exact": exact, "se": se, "worst_entry": [wi, wj]},
    )


def rotation_2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def check_isotropy(sampler: Sampler, x0, t: float, rotations, n: int, rng, level: float = 0.01,
                   threads: int | None = None) -> VerificationReport:
    """Coordinatewise KS between ``X_t`` from ``x0`` and ``T X_t`` from ``T^-1 x0``."""
    stream = _as_stream(rng)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size < 2:
        raise ValueError("isotropy needs d >= 2")
    mats = [np.asarray(r, dtype=float) for r in rotations]
    for r in mats:
        if r.shape != (x0.size, x0.size) or np.max(np.abs(r @ r.T - np.eye(x0.size))) > 1e-12:
            raise ValueError("rotation matrices must be orthogonal within 1e-12")

    def run(start):
        def fn(size, gen):
            y, alive = sampler.sample(np.repeat(start[None, :], size, axis=0), t, gen)
            y[~alive] = 0.0
            return y

        return fn

    ref = _run_chunks(n, stream.derive(0), run(x0), threads)
    stats, crit = [], ks_critical(n, n, level)
    for k, r in enumerate(mats):
        rotated = _run_chunks(n, stream.derive(k + 1), run(r.T @ x0), threads) @ r.T
        stats.append([ks_two_sample(ref[:, c], rotated[:, c])[0] for c in range(x0.size)])
    stat = float(np.max(stats))
    return VerificationReport("isotropy", stat, crit, 0.0, 0.0, stat, crit, False, n, stream.seed,
                              {"t": t, "ks_per_rotation": stats, "level": level})


def check_scaling(process: Process, a: float, t: float, n: int, rng, level: float = 0.01,
                  threads: int | None = None) -> VerificationReport:
    """``a X_{a^-alpha t}`` from ``x/a`` against ``X_t`` from ``x`` (coordinatewise KS)."""
    from dataclasses import replace

    stream = _as_stream(rng)
    x0 = process.start
    scaled = replace(process.with_start(x0 / a), step=process.step * a ** (-process.alpha),
                     horizon=max(process.horizon * a ** (-process.alpha), process.step * a ** (-process.alpha)))

    def run(proc, tt, factor):
        def fn(size, gen):
            y, _ = simulate_marginal(proc, np.repeat(proc.start[None, :], size, axis=0), tt, gen)
            return factor * y

        return fn

    ref = _run_chunks(n, stream.derive(0), run(process, t, 1.0), threads)
    sc = _run_chunks(n, stream.derive(1), run(scaled, t * a ** (-process.alpha), a), threads)
    stats = [ks_two_sample(ref[:, c], sc[:, c])[0] for c in range(ref.shape[1])]
    crit = ks_critical(n, n, level)
    stat = float(max(stats))
    return VerificationReport("scaling", stat, crit, 0.0, 0.0, stat, crit, False, n, stream.seed,
                              {"a": a, "t": t, "ks": stats, "process": type(process).__name__})


def weighted_ecdf_comparison(direct, weighted, weights, gen: np.random.Generator, n_boot: int = 200,
                             n_se: float = 3.0) -> VerificationReport:
    """Direct empirical CDF against a weighted one (``sum w 1{X <= y} / n``).

    The statistic is the sup-difference over the pooled sample points; the
    threshold is ``n_se`` bootstrap standard errors of the difference at the
    point where the sup is attained.
    """
    direct = np.asarray(direct, dtype=float)
    weighted = np.asarray(weighted, dtype=float)
    weights = np.asarray(weights, dtype=float)
    grid = np.quantile(np.concatenate([direct, weighted[weights > 0]]), np.linspace(0.01, 0.99, 99))

    def diff(d, wv, ww):
        fd = (d[:, None] <= grid[None, :]).mean(axis=0)
        fw = ((wv[:, None] <= grid[None, :]) * ww[:, None]).sum(axis=0) / wv.size
        return fd - fw

    base = diff(direct, weighted, weights)
    k = int(np.argmax(np.abs(base)))
    boots = np.empty(n_boot)
    for b in range(n_boot):
        i = gen.integers(0, direct.size, direct.size)
        j = gen.integers(0, weighted.size, weighted.size)
        fd = (direct[i] <= grid[k]).mean()
        fw = ((weighted[j] <= grid[k]) * weights[j]).sum() / weighted.size
        boots[b] = fd - fw
    se = float(boots.std(ddof=1))
    stat = float(abs(base[k]))
    return VerificationReport("weighted_ecdf", float(base[k]), 0.0, se, 0.0, stat, n_se * se, False,
                              direct.size, None, {"at": float(grid[k])})
