"""Finite-state Markov additive processes.

The modulating chain ``theta`` is simulated exactly from its holding times;
between chain jumps ``xi`` evolves as the Lévy process attached to the
current state, and a chain jump ``i -> j`` adds an independent draw from
``delta[i][j]``. Killing comes from the per-state Lévy kill rates and from
any row deficit of ``Q``; both are exponential clocks and are sampled exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.sparse.csgraph import connected_components

from . import kernel
from .kernel import Dirac, JumpLaw, LevySpec, canonical_law
from .paths import MapPath
from .rng import RngStream, as_generator

__all__ = [
    "MapSpec",
    "ReversibilityReport",
    "simulate_map",
    "sample_map_marginal",
    "matrix_exponent",
    "map_characteristic",
    "stationary_measure",
    "check_reversibility",
    "make_skew_product",
    "negate_xi",
]

_TOL = 1e-12


@dataclass(frozen=True)
class MapSpec:
    states: tuple[tuple[float, ...], ...]
    Q: tuple[tuple[float, ...], ...]
    levy: tuple[LevySpec, ...]
    delta: tuple[tuple[JumpLaw, ...], ...] = field(default=None)

    def __post_init__(self):
        states = tuple(tuple(float(c) for c in s) for s in self.states)
        q = tuple(tuple(float(c) for c in row) for row in self.Q)
        n = len(states)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "levy", tuple(self.levy))
        if self.delta is None:
            object.__setattr__(self, "delta", tuple(tuple(Dirac(0.0) for _ in range(n)) for _ in range(n)))
        else:
            object.__setattr__(self, "delta", tuple(tuple(row) for row in self.delta))
        if n == 0:
            raise ValueError("a MAP needs at least one state")
        if len({len(s) for s in states}) != 1:
            raise ValueError("all states must have the same dimension")
        for s in states:
            if abs(math.sqrt(sum(c * c for c in s)) - 1.0) > 1e-9:
                raise ValueError(f"state {s} is not a unit vector")
        if len(q) != n or any(len(r) != n for r in q):
            raise ValueError("Q must be n x n")
        if len(self.levy) != n:
            raise ValueError("one LevySpec per state is required")
        if len(self.delta) != n or any(len(r) != n for r in self.delta):
            raise ValueError("delta must be an n x n matrix of jump laws")
        for i in range(n):
            if canonical_law(self.delta[i][i]) != Dirac(0.0):
                raise ValueError("delta[i][i] must be Dirac(0)")
            off = [q[i][j] for j in range(n) if j != i]
            if any(v < 0 for v in off):
                raise ValueError(f"off-diagonal rates must be >= 0 (row {i})")
            if q[i][i] > -sum(off) + 1e-12:
                raise ValueError(f"row {i} of Q sums to a positive value")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states[0])

    @property
    def q_matrix(self) -> np.ndarray:
        return np.array(self.Q, dtype=float)

    @property
    def state_vectors(self) -> np.ndarray:
        return np.array(self.states, dtype=float)

    def state_index(self, y) -> int:
        if isinstance(y, (int, np.integer)):
            if not 0 <= int(y) < self.n:
                raise ValueError(f"state index {y} out of range")
            return int(y)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        for i, s in enumerate(self.state_vectors):
            if s.shape == y.shape and np.allclose(s, y, atol=1e-12):
                return i
        raise ValueError(f"{y} is not one of the MAP states")

    def kill_rates(self) -> np.ndarray:
        """Total killing intensity per state: Lévy kill plus Q row deficit."""
        q = self.q_matrix
        deficit = -q.sum(axis=1)
        return np.maximum(deficit, 0.0) + np.array([lv.kill_rate for lv in self.levy])


# ---------------------------------------------------------------------------
# simulation


def _chain_skeleton(spec: MapSpec, i0: int, horizon: float, gen: np.random.Generator):
    """Jump times, successive states and the killing time (or None) up to ``horizon``."""
    q = spec.q_matrix
    kill = spec.kill_rates()
    n = spec.n
    t, i = 0.0, i0
    times, states = [], [i0]
    while True:
        off = q[i].copy()
        off[i] = 0.0
        rate = off.sum() + kill[i]
        if rate <= 0:
            return times, states, None
        t += gen.exponential(1.0 / rate)
        if t >= horizon:
            return times, states, None
        probs = np.append(off, kill[i]) / rate
        j = int(gen.choice(n + 1, p=probs))
        if j == n:
            return times, states, t
        times.append(t)
        states.append(j)
        i = j


def simulate_map(spec: MapSpec, y0, z0: float, horizon: float, step: float,
                 rng: RngStream | np.random.Generator) -> MapPath:
    """One MAP path on the uniform grid ``0, step, ..., horizon``.

    The chain jumps are exact; values at grid times are exact in law.
    """
    if step <= 0 or horizon <= 0:
        raise ValueError("step and horizon must be positive")
    if step > horizon:
        raise ValueError("step must not exceed horizon")
    i0 = spec.state_index(y0)
    gen = as_generator(rng)
    nsteps = int(round(horizon / step))
    if not math.isclose(nsteps * step, horizon, rel_tol=1e-9):
        nsteps = int(math.floor(horizon / step))
    grid = np.arange(nsteps + 1) * step
    jumps, seq, death = _chain_skeleton(spec, i0, grid[-1], gen)
    jumps = np.array(jumps)
    end = grid[-1] if death is None else death
    # breakpoints: grid times up to end, chain jump times, death
    pts = np.union1d(grid[grid <= end], jumps)
    if death is not None:
        pts = np.union1d(pts, [death])
    seg_start, seg_len = pts[:-1], np.diff(pts)
    seg_state = np.array(seq)[np.searchsorted(jumps, seg_start, side="right")]
    incs = np.zeros(seg_start.size)
    for s in np.unique(seg_state):
        sel = (seg_state == s) & (seg_len > 0)
        if np.any(sel):
            incs[sel] = kernel._unkilled_increment(spec.levy[s], seg_len[sel], gen)
    # transition jumps land at the start of the segment following each chain jump
    for k, tj in enumerate(jumps):
        pos = np.searchsorted(pts, tj)
        a, b = seq[k], seq[k + 1]
        incs[pos - 1] += spec.delta[a][b].sample(gen)
    xi_pts = z0 + np.concatenate([[0.0], np.cumsum(incs)])
    alive_grid = grid < end if death is not None else np.ones(grid.size, dtype=bool)
    gidx = np.searchsorted(pts, grid[alive_grid])
    xi = np.full(grid.size, math.nan)
    xi[alive_grid] = xi_pts[gidx]
    idx = np.full(grid.size, -1)
    idx[alive_grid] = np.array(seq)[np.searchsorted(jumps, grid[alive_grid], side="right")]
    theta = np.full((grid.size, spec.dim), math.nan)
    theta[alive_grid] = spec.state_vectors[idx[alive_grid]]
    return MapPath.from_parts(grid, theta, xi, lifetime=death, theta_index=idx, jump_times=jumps)


def sample_map_marginal(spec: MapSpec, y0, z0: float, t: float, n: int,
                        rng: RngStream | np.random.Generator):
    """``n`` independent draws of ``(theta_t, xi_t, alive, jump_count)``.

    Vectorized across replicas; ``theta_t`` is ``-1`` and ``xi_t`` NaN for
    killed replicas.
    """
    gen = as_generator(rng)
    q = spec.q_matrix
    kill = spec.kill_rates()
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    out_rate = off.sum(axis=1) + kill
    cum = np.cumsum(np.column_stack([off, kill]), axis=1) / np.where(out_rate > 0, out_rate, 1.0)[:, None]
    state = np.full(n, spec.state_index(y0))
    xi = np.full(n, float(z0))
    clock = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    jumps = np.zeros(n, dtype=int)
    active = np.arange(n)
    while active.size:
        s = state[active]
        r = out_rate[s]
        hold = np.full(active.size, math.inf)
        pos = r > 0
        hold[pos] = gen.exponential(1.0 / r[pos])
        remaining = t - clock[active]
        finish = hold >= remaining
        dt = np.where(finish, remaining, hold)
        for st in np.unique(s):
            sel = (s == st) & (dt > 0)
            if np.any(sel):
                xi[active[sel]] += kernel._unkilled_increment(spec.levy[st], dt[sel], gen)
        clock[active] += dt
        move = active[~finish]
        if move.size:
            u = gen.random(move.size)
            dest = (u[:, None] > cum[state[move]]).sum(axis=1)
            killed = dest == spec.n
            alive[move[killed]] = False
            go = move[~killed]
            src, dst = state[go], dest[~killed]
            for a, b in set(zip(src.tolist(), dst.tolist())):
                sel = (src == a) & (dst == b)
                xi[go[sel]] += np.atleast_1d(spec.delta[a][b].sample(gen, int(sel.sum())))
            state[go] = dst
            jumps[go] += 1
        active = move[alive[move]] if move.size else move
    theta = np.where(alive, state, -1)
    xi = np.where(alive, xi, math.nan)
    return theta, xi, alive, jumps


# ---------------------------------------------------------------------------
# exponent and characteristic matrix


def matrix_exponent(spec: MapSpec, u: complex) -> np.ndarray:
    """``A(u) = diag(psi_i(u)) + (q_ij G_ij(u))``.

    ``u`` must be purely imaginary, or real when every state has finite
    exponential moments and every transition law is bounded.
    """
    u = complex(u)
    if u.real != 0.0:
        ok = all(lv.has_exponential_moments for lv in spec.levy) and all(
            law.bounded for row in spec.delta for law in row
        )
        if u.imag != 0.0 or not ok:
            raise ValueError(f"u = {u} is outside the supported domain")
    n = spec.n
    q = spec.q_matrix
    a = np.zeros((n, n), dtype=complex)
    for i in range(n):
        a[i, i] = kernel._exponent(spec.levy[i], u)
        for j in range(n):
            a[i, j] += q[i, j] * (1.0 if i == j else kernel.jump_mgf(spec.delta[i][j], u))
    return a


def map_characteristic(spec: MapSpec, u: complex, t: float) -> np.ndarray:
    """``exp(A(u) t)``; entry ``(i, j)`` is ``E_{i,0}[exp(u xi_t); theta_t = j]``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return expm(matrix_exponent(spec, u) * t)


# ---------------------------------------------------------------------------
# stationary measure and reversibility


def _check_generator(q: np.ndarray) -> None:
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("Q must be square")
    off = q - np.diag(np.diag(q))
    if np.any(off < 0):
        raise ValueError("off-diagonal rates must be >= 0")
    if np.max(np.abs(q.sum(axis=1))) > 1e-10 * max(1.0, np.abs(q).max()):
        raise ValueError("Q is not conservative (rows must sum to 0)")
    ncomp, _ = connected_components(off > 0, directed=True, connection="strong")
    if ncomp != 1:
        raise ValueError("Q is reducible")


def stationary_measure(Q) -> np.ndarray:
    """Probability vector ``pi`` with ``pi Q = 0``."""
    q = np.asarray(Q, dtype=float)
    _check_generator(q)
    n = q.shape[0]
    a = np.vstack([q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    # one step of iterative refinement
    resid = b - a @ pi
    pi = pi + np.linalg.lstsq(a, resid, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass
class ReversibilityReport:
    pi: np.ndarray
    balance_residual: float
    balance_pass: bool
    law_checks: dict[tuple[int, int], bool]
    law_method: dict[tuple[int, int], str]
    pass_: bool

    def to_dict(self) -> dict:
        return {
            "name": "reversibility",
            "pi": [float(p) for p in self.pi],
            "balance_residual": self.balance_residual,
            "balance_pass": self.balance_pass,
            "law_checks": [
                {"i": i, "j": j, "equal": ok, "method": self.law_method[(i, j)]}
                for (i, j), ok in sorted(self.law_checks.items())
            ],
            "pass": self.pass_,
        }


def _laws_equal(a: JumpLaw, b: JumpLaw, gen: np.random.Generator, n_draws: int = 10_000) -> tuple[bool, str]:
    ca, cb = canonical_law(a), canonical_law(b)
    if ca == cb:
        return True, "structural"
    if type(ca) is type(cb):
        return False, "structural"
    from .veritas import ks_two_sample

    stat, _, crit01 = ks_two_sample(np.atleast_1d(ca.sample(gen, n_draws)), np.atleast_1d(cb.sample(gen, n_draws)))
    return bool(stat <= crit01), "ks"


def check_reversibility(spec: MapSpec, pi=None, rng: RngStream | np.random.Generator | None = None,
                        tol: float = 1e-10) -> ReversibilityReport:
    """Detailed balance of ``Q`` plus ``delta[i][j] =d delta[j][i]``."""
    q = spec.q_matrix
    _check_generator(q)
    pi = stationary_measure(q) if pi is None else np.asarray(pi, dtype=float)
    flux = pi[:, None] * q
    resid = float(np.max(np.abs(flux - flux.T)))
    gen = as_generator(rng if rng is not None else RngStream(0))
    checks, method = {}, {}
    for i in range(spec.n):
        for j in range(spec.n):
            if i != j and q[i, j] > 0:
                checks[(i, j)], method[(i, j)] = _laws_equal(spec.delta[i][j], spec.delta[j][i], gen)
    bal = resid <= tol
    return ReversibilityReport(pi, resid, bal, checks, method, bal and all(checks.values()))


# ---------------------------------------------------------------------------
# constructors


def make_skew_product(theta_Q, states, levy: LevySpec, lam: float) -> MapSpec:
    """Independent ``theta`` and ``xi`` killed at an independent Exp(``lam``) time."""
    if levy.kill_rate != 0:
        raise ValueError("levy must not be killed; pass the kill rate as lam")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    q = np.atleast_2d(np.asarray(theta_Q, dtype=float))
    n = q.shape[0]
    from dataclasses import replace

    killed = replace(levy, kill_rate=float(lam))
    return MapSpec(states=states, Q=q.tolist(), levy=[killed] * n)


def negate_xi(spec: MapSpec) -> MapSpec:
    """The MAP ``(theta, -xi)``."""
    return MapSpec(
        states=spec.states,
        Q=spec.Q,
        levy=[lv.negated() for lv in spec.levy],
        delta=[[law.negated() for law in row] for row in spec.delta],
    )
