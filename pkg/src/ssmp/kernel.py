"""One-dimensional Lévy building blocks.

A :class:`LevySpec` is a (possibly killed) real Lévy process made of a drift,
a Brownian part, an optional strictly stable part and an optional compound
Poisson part. Increments are sampled exactly in law and the characteristic
exponent is available in closed form on the imaginary axis.

Stable convention: ``(alpha, rho)`` with ``rho = P(X_1 > 0)``. Internally the
skewness ``beta`` solves ``rho = 1/2 + arctan(beta tan(pi alpha/2))/(pi alpha)``
and the exponent is ``-|lam|^alpha (1 - i beta sgn(lam) tan(pi alpha/2))`` at
``u = i lam``, so the symmetric case reads ``-|lam|^alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .rng import RngStream, as_generator

__all__ = [
    "Dirac",
    "Gaussian",
    "TwoPoint",
    "Uniform",
    "JumpLaw",
    "StablePart",
    "CompoundPoisson",
    "LevySpec",
    "stable_beta",
    "sample_stable",
    "characteristic_exponent",
    "sample_increment",
    "sample_jump",
    "jump_mgf",
]


def _finite(*vals: float) -> None:
    for v in vals:
        if not math.isfinite(v):
            raise ValueError(f"parameter must be finite, got {v}")


# ---------------------------------------------------------------------------
# jump laws


@dataclass(frozen=True)
class Dirac:
    value: float = 0.0

    def __post_init__(self):
        _finite(self.value)

    def sample(self, gen: np.random.Generator, size=None):
        return np.full(size, float(self.value)) if size is not None else float(self.value)

    def mgf(self, u: complex) -> complex:
        return np.exp(u * self.value)

    def negated(self) -> "Dirac":
        return Dirac(-self.value)

    @property
    def bounded(self) -> bool:
        return True


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        _finite(self.mean, self.sd)
        if self.sd < 0:
            raise ValueError("Gaussian sd must be >= 0")

    def sample(self, gen, size=None):
        return gen.normal(self.mean, self.sd, size)

    def mgf(self, u):
        return np.exp(u * self.mean + 0.5 * u * u * self.sd**2)

    def negated(self):
        return Gaussian(-self.mean, self.sd)

    @property
    def bounded(self):
        return self.sd == 0


@dataclass(frozen=True)
class TwoPoint:
    """``a`` with probability ``p``, ``b`` with probability ``1 - p``.

    Stored with ``a <= b`` so that equal laws compare equal.
    """

    a: float
    b: float
    p: float = 0.5
    # 1 - p, carried so that negation is an exact involution
    q: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _finite(self.a, self.b, self.p)
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("TwoPoint probability p must lie in [0, 1]")
        if self.q is None:
            object.__setattr__(self, "q", 1.0 - self.p)
        if self.a > self.b:
            a, b, p, q = self.b, self.a, self.q, self.p
            for k, v in zip("abpq", (a, b, p, q)):
                object.__setattr__(self, k, v)

    def sample(self, gen, size=None):
        u = gen.random(size)
        return np.where(u < self.p, self.a, self.b) if size is not None else (self.a if u < self.p else self.b)

    def mgf(self, u):
        return self.p * np.exp(u * self.a) + (1 - self.p) * np.exp(u * self.b)

    def negated(self):
        return TwoPoint(-self.b, -self.a, self.q, self.p)

    @property
    def bounded(self):
        return True


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        _finite(self.lo, self.hi)
        if self.hi < self.lo:
            raise ValueError("Uniform requires lo <= hi")

    def sample(self, gen, size=None):
        return gen.uniform(self.lo, self.hi, size)

    def mgf(self, u):
        w = self.hi - self.lo
        if w == 0 or u == 0:
            return np.exp(u * self.lo)
        return (np.exp(u * self.hi) - np.exp(u * self.lo)) / (u * w)

    def negated(self):
        return Uniform(-self.hi, -self.lo)

    @property
    def bounded(self):
        return True


JumpLaw = Union[Dirac, Gaussian, TwoPoint, Uniform]


def canonical_law(law: JumpLaw) -> JumpLaw:
    """Collapse degenerate parametrizations so equal laws compare equal."""
    if isinstance(law, Gaussian) and law.sd == 0:
        return Dirac(law.mean)
    if isinstance(law, Uniform) and law.lo == law.hi:
        return Dirac(law.lo)
    if isinstance(law, TwoPoint):
        if law.a == law.b or law.p == 1.0:
            return Dirac(law.a)
        if law.p == 0.0:
            return Dirac(law.b)
    return law


def jump_mgf(law: JumpLaw, u: complex) -> complex:
    return complex(law.mgf(u))


def sample_jump(law: JumpLaw, rng: RngStream | np.random.Generator, size=None):
    return law.sample(as_generator(rng), size)


# ---------------------------------------------------------------------------
# Lévy specification


def stable_beta(alpha: float, rho: float) -> float:
    """Skewness parameter matching positivity ``rho`` (standard CMS form)."""
    if alpha == 1.0:
        return 0.0
    t = math.tan(math.pi * alpha / 2)
    return math.tan(math.pi * alpha * (rho - 0.5)) / t


@dataclass(frozen=True)
class StablePart:
    alpha: float
    rho: float = 0.5
    # 1 - rho, carried so that negation is an exact involution
    rho_neg: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.rho_neg is None:
            object.__setattr__(self, "rho_neg", 1.0 - self.rho)
        a, r = self.alpha, self.rho
        _finite(a, r)
        if not 0 < a <= 2:
            raise ValueError(f"stable alpha must lie in (0, 2], got {a}")
        if not 0 < r < 1:
            raise ValueError(f"stable rho must lie in (0, 1), got {r}")
        if a == 1 and r != 0.5:
            raise ValueError("alpha = 1 is only supported with rho = 1/2 (symmetric Cauchy)")
        if a == 2 and r != 0.5:
            raise ValueError("alpha = 2 requires rho = 1/2")
        if a > 1 and not (1 - 1 / a <= r <= 1 / a):
            raise ValueError(f"for alpha > 1, rho must lie in [1 - 1/alpha, 1/alpha], got {r}")

    @property
    def beta(self) -> float:
        return stable_beta(self.alpha, self.rho)


@dataclass(frozen=True)
class CompoundPoisson:
    rate: float
    jump_law: JumpLaw

    def __post_init__(self):
        _finite(self.rate)
        if self.rate < 0:
            raise ValueError("compound Poisson rate must be >= 0")


@dataclass(frozen=True)
class LevySpec:
    drift: float = 0.0
    sigma: float = 0.0
    stable: StablePart | None = None
    cpois: CompoundPoisson | None = None
    kill_rate: float = 0.0

    def __post_init__(self):
        _finite(self.drift, self.sigma, self.kill_rate)
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kill_rate < 0:
            raise ValueError("kill_rate must be >= 0")

    def negated(self) -> "LevySpec":
        stable = None if self.stable is None else StablePart(self.stable.alpha, self.stable.rho_neg, self.stable.rho)
        cp = None if self.cpois is None else CompoundPoisson(self.cpois.rate, self.cpois.jump_law.negated())
        return replace(self, drift=-self.drift, stable=stable, cpois=cp)

    @property
    def has_exponential_moments(self) -> bool:
        if self.stable is not None:
            return False
        return self.cpois is None or self.cpois.jump_law.bounded


def _exponent(spec: LevySpec, u: complex) -> complex:
    u = complex(u)
    psi = spec.drift * u + 0.5 * spec.sigma**2 * u * u
    if spec.stable is not None:
        lam = u.imag
        a = spec.stable.alpha
        if a == 1.0:
            psi += -abs(lam)
        else:
            skew = spec.stable.beta * math.tan(math.pi * a / 2)
            psi += -(abs(lam) ** a) * complex(1.0, -skew * np.sign(lam))
    if spec.cpois is not None:
        psi += spec.cpois.rate * (jump_mgf(spec.cpois.jump_law, u) - 1.0)
    return psi - spec.kill_rate


def characteristic_exponent(spec: LevySpec, u: complex) -> complex:
    """``psi(u)`` with ``E exp(u xi_1) = exp(psi(u))`` minus the kill rate.

    Only purely imaginary ``u`` is accepted.
    """
    u = complex(u)
    if u.real != 0.0:
        raise ValueError(f"u must be purely imaginary, got {u}")
    return _exponent(spec, u)


# ---------------------------------------------------------------------------
# sampling


def sample_stable(alpha: float, beta: float, gen: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck draw with exponent ``-|l|^a (1 - i b sgn(l) tan(pi a/2))``.

    ``alpha = 1`` is only implemented for ``beta = 0``.
    """
    u = gen.uniform(-math.pi / 2, math.pi / 2, size)
    if alpha == 1.0:
        if beta != 0.0:
            raise ValueError("asymmetric Cauchy is not supported")
        return np.tan(u)
    w = gen.standard_exponential(size)
    t = beta * math.tan(math.pi * alpha / 2)
    b = math.atan(t) / alpha
    s = (1 + t * t) ** (1 / (2 * alpha))
    return (
        s
        * np.sin(alpha * (u + b))
        / np.cos(u) ** (1 / alpha)
        * (np.cos(u - alpha * (u + b)) / w) ** ((1 - alpha) / alpha)
    )


def positive_stable(alpha: float, gen: np.random.Generator, size=None):
    """Draw ``S`` with ``E exp(-s S) = exp(-s^alpha)``, ``0 < alpha < 1``."""
    scale = math.cos(math.pi * alpha / 2) ** (1 / alpha)
    return scale * sample_stable(alpha, 1.0, gen, size)


def _unkilled_increment(spec: LevySpec, dt, gen: np.random.Generator, size=None):
    dt_arr = np.asarray(dt, dtype=float)
    shape = size if size is not None else dt_arr.shape
    out = np.broadcast_to(spec.drift * dt_arr, shape).astype(float)
    if spec.sigma > 0:
        out = out + spec.sigma * np.sqrt(dt_arr) * gen.standard_normal(shape)
    if spec.stable is not None:
        a = spec.stable.alpha
        out = out + dt_arr ** (1 / a) * sample_stable(a, spec.stable.beta, gen, shape)
    if spec.cpois is not None and spec.cpois.rate > 0:
        counts = gen.poisson(spec.cpois.rate * np.broadcast_to(dt_arr, shape))
        flat = np.atleast_1d(counts).ravel()
        total = int(flat.sum())
        jumps = np.atleast_1d(spec.cpois.jump_law.sample(gen, total)) if total else np.zeros(0)
        sums = np.zeros(flat.size)
        if total:
            np.add.at(sums, np.repeat(np.arange(flat.size), flat), jumps)
        out = out + sums.reshape(np.shape(counts))
    return out if np.ndim(out) else float(out)


def sample_increment(spec: LevySpec, dt, rng: RngStream | np.random.Generator, size=None):
    """Increment over ``dt`` and an independent killing flag.

    ``dt`` may be an array (one increment per entry). Killing happens with
    probability ``1 - exp(-kill_rate dt)``.
    """
    if np.any(np.asarray(dt) <= 0):
        raise ValueError("dt must be positive")
    gen = as_generator(rng)
    inc = _unkilled_increment(spec, dt, gen, size)
    shape = np.shape(inc)
    if spec.kill_rate > 0:
        killed = gen.random(shape) < -np.expm1(-spec.kill_rate * np.asarray(dt, dtype=float))
    else:
        killed = np.zeros(shape, dtype=bool)
    if not shape:
        return float(inc), bool(killed)
    return inc, killed
