"""Jump-diffusion simulation with the decomposition ingredients kept alongside the path.

The scheme on a uniform grid: at every node ``k`` after the start node the
path moves by ``sigma(t_{k-1}) dW_k`` plus the drift increment, and then a
jump fires with probability ``lambda dt`` with applied size
``gamma(t_k) * mark``. A Bernoulli trial per node (instead of snapping a
Poisson clock) keeps the discrete compensator exactly ``lambda dt`` times
the law expectation, so compensated sums are exact discrete martingales.
"""
import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import pathspace as ps
from .errors import DomainError
from .rng import derive_seed, generator

GL_NODES = 64
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)
MAX_RATE_DT = 0.1


@dataclass(frozen=True)
class JumpLaw:
    """Bounded jump-mark law: ``uniform[a, b]``, ``two_point{±c}`` or ``gaussian`` truncated to ``|x| <= x_max``."""

    kind: str
    a: float = 0.0
    b: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "uniform":
            if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
                raise DomainError(f"uniform law needs finite a < b, got [{self.a}, {self.b}]")
        elif self.kind == "two_point":
            if not (np.isfinite(self.b) and self.b > 0):
                raise DomainError("two-point law needs c > 0")
        elif self.kind == "gaussian":
            if not (self.scale > 0 and np.isfinite(self.b) and self.b > 0):
                raise DomainError("gaussian law needs scale > 0 and x_max > 0")
        else:
            raise DomainError(f"unknown jump law {self.kind!r}")

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", float(a), float(b))

    @classmethod
    def two_point(cls, c):
        return cls("two_point", -float(c), float(c))

    @classmethod
    def gaussian(cls, scale, x_max):
        return cls("gaussian", -float(x_max), float(x_max), float(scale))

    @property
    def support(self):
        return self.a, self.b

    @property
    def bound(self):
        return max(abs(self.a), abs(self.b))

    def _dist(self):
        z = self.b / self.scale
        return stats.truncnorm(-z, z, scale=self.scale)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.a + u * (self.b - self.a)
        if self.kind == "two_point":
            return np.where(u < 0.5, self.a, self.b)
        return self._dist().ppf(u)

    def sample(self, rng, n):
        """``n`` marks by inverse CDF; always consumes ``n`` uniforms."""
        return self.ppf(rng.random(n))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)
        if self.kind == "gaussian":
            return self._dist().pdf(x)
        raise DomainError("two-point law has no density")

    @property
    def second_moment(self):
        if self.kind == "uniform":
            return (self.a * self.a + self.a * self.b + self.b * self.b) / 3.0
        if self.kind == "two_point":
            return self.b ** 2
        return float(self._dist().var())

    @property
    def mean(self):
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return 0.0

    def quadrature(self, gamma, lo=0.0, hi=np.inf, lo_open=False, hi_open=False):
        """Nodes ``x`` and weights ``w`` with ``sum w f(x) = E[f(x) 1{lo <= |gamma x| <= hi}]``.

        ``gamma`` may be an array; results then have shape ``gamma.shape + (n,)``.
        Continuous laws use 64-point Gauss-Legendre on each of the (at most two)
        intervals ``±[lo, hi] / |gamma|`` intersected with the support, always
        split at 0. Two-point laws use their atoms exactly; ``lo_open`` and
        ``hi_open`` only matter there.
        """
        gamma = np.asarray(gamma, dtype=float)
        g = np.abs(gamma)[..., None]
        if self.kind == "two_point":
            x = np.broadcast_to(np.array([self.a, self.b]), gamma.shape + (2,))
            s = g * np.abs(x)
            keep = (s > lo if lo_open else s >= lo) & (s < hi if hi_open else s <= hi)
            return np.array(x), np.where(keep, 0.5, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            xlo = np.where(g > 0, lo / g, np.where(lo > 0, np.inf, 0.0))
            xhi = np.where(g > 0, hi / g, np.inf)
        xs, ws = [], []
        for sign in (-1.0, 1.0):
            if sign < 0:
                left, right = np.maximum(self.a, -xhi), np.minimum(min(self.b, 0.0), -xlo)
            else:
                left, right = np.maximum(max(self.a, 0.0), xlo), np.minimum(self.b, xhi)
            width = np.where(right > left, right - left, 0.0)
            mid = np.where(right > left, 0.5 * (left + right), 0.0)
            x = mid + 0.5 * width * _GL_X
            w = 0.5 * width * _GL_W * self.density(x)
            xs.append(x)
            ws.append(w)
        return np.concatenate(xs, axis=-1), np.concatenate(ws, axis=-1)

    def describe(self):
        if self.kind == "uniform":
            return f"uniform[{self.a:g},{self.b:g}]"
        if self.kind == "two_point":
            return f"two_point(±{self.b:g})"
        return f"gaussian(scale={self.scale:g},x_max={self.b:g})"


@dataclass(frozen=True)
class OrthogonalExtraSpec:
    """Deterministic Weierstrass-type path ``amp * sum a^n (cos(b^n pi t / T) - 1)`` added to the drift."""

    amplitude: float = 0.1
    a: float = 0.6
    b: int = 3
    terms: int = 12

    def path(self, grid):
        u = np.pi * grid.times / grid.horizon
        n = np.arange(self.terms)[:, None]
        v = self.amplitude * np.sum(self.a ** n * (np.cos(self.b ** n * u) - 1.0), axis=0)
        return ps.CadlagPath(grid, v)


def _coef(c, times):
    if callable(c):
        v = np.broadcast_to(np.asarray(c(times), dtype=float), times.shape)
    else:
        v = np.full(times.shape, float(c))
    if not np.all(np.isfinite(v)):
        raise DomainError("coefficient is not finite on the grid")
    return np.array(v)


@dataclass(frozen=True)
class JumpDiffusionSpec:
    """Deterministic-coefficient jump diffusion ``dX = sigma dW + dA + gamma x dN``.

    ``sigma`` and ``gamma`` are constants or vectorized functions of time.
    ``drift`` is None, a vectorized continuous function ``A(t)`` with
    ``A(0) = 0``, or a ``CadlagPath``; ``drift_jumps`` lists extra node-aligned
    atoms ``(t, size)``. ``feedback``, if set, replaces ``sigma`` by
    ``feedback(t, X_{t-})`` (path-dependent, no closed-form oracles).
    """

    sigma: object = 0.0
    intensity: float = 0.0
    law: JumpLaw = field(default_factory=lambda: JumpLaw.uniform(-0.5, 0.5))
    gamma: object = 1.0
    drift: object = None
    drift_jumps: tuple = ()
    extra: OrthogonalExtraSpec = None
    feedback: object = None

    def __post_init__(self):
        if not (np.isfinite(self.intensity) and self.intensity >= 0):
            raise DomainError("jump intensity must be finite and >= 0")

    @property
    def deterministic(self):
        return self.feedback is None

    def sigma_on(self, grid):
        return _coef(self.sigma, grid.times)

    def gamma_on(self, grid):
        return _coef(self.gamma, grid.times)

    def drift_path(self, grid):
        if isinstance(self.drift, ps.CadlagPath):
            if self.drift.grid != grid:
                raise DomainError("drift path lives on a different grid")
            v, j = np.array(self.drift.values[:, 0]), np.array(self.drift.jumps[:, 0])
        elif self.drift is None:
            v, j = np.zeros(grid.node_count), np.zeros(grid.node_count)
        else:
            v, j = _coef(self.drift, grid.times), np.zeros(grid.node_count)
            v = v - v[0]
        for t, size in self.drift_jumps:
            k = grid.index_of(t)
            if k == 0:
                raise DomainError("drift atoms must be after time 0")
            v[k:] += size
            j[k] += size
        if self.extra is not None:
            v = v + self.extra.path(grid).values[:, 0]
        return ps.CadlagPath(grid, v, j)

    def drift_variation(self, grid):
        """Total variation of the drift on the grid (piecewise linear reading)."""
        return float(np.abs(np.diff(self.drift_path(grid).values[:, 0])).sum())

    def check_grid(self, grid):
        if self.intensity * grid.dt > MAX_RATE_DT:
            raise DomainError(
                f"lambda*dt = {self.intensity * grid.dt:.3g} > {MAX_RATE_DT}: grid too coarse for one jump per node"
            )


@dataclass(frozen=True, eq=False)
class SimulatedProcess:
    """A path with its ingredients: ``X = X_0 + Mc + sum(jumps) + A_used`` node by node.

    ``A_used`` carries the frozen start prefix (before ``t0``) plus the drift
    increments after ``t0``. ``jump_nodes`` / ``jump_marks`` / ``jump_sizes``
    describe the Poisson jumps; ``gamma`` holds the jump scaling on the grid.
    """

    X: ps.CadlagPath
    Mc: ps.CadlagPath
    A_used: ps.CadlagPath
    jump_nodes: np.ndarray
    jump_marks: np.ndarray
    jump_sizes: np.ndarray
    dW: np.ndarray
    spec: JumpDiffusionSpec
    gamma: np.ndarray
    start: int
    seed: int

    @property
    def grid(self):
        return self.X.grid

    @property
    def intensity(self):
        return self.spec.intensity

    @property
    def law(self):
        return self.spec.law

    @property
    def jump_count(self):
        return len(self.jump_nodes)

    def poisson_jumps(self):
        """Applied Poisson jump size at every node (zeros elsewhere)."""
        out = np.zeros(self.grid.node_count)
        np.add.at(out, self.jump_nodes, self.jump_sizes)
        return out

    def jump_possible(self):
        """Nodes where the Bernoulli jump trial runs (``k > start``)."""
        out = np.zeros(self.grid.node_count, dtype=bool)
        out[self.start + 1:] = True
        return out

    def counting_path(self):
        """Poisson count ``N_t`` as a path."""
        c = np.zeros(self.grid.node_count)
        np.add.at(c, self.jump_nodes, 1.0)
        return ps.CadlagPath(self.grid, np.cumsum(c), c)

    def compensator_weight(self):
        """Per-node compensator mass ``lambda dt`` (zero where no jump can fire)."""
        return np.where(self.jump_possible(), self.intensity * self.grid.dt, 0.0)

    def identity_error(self):
        x0 = self.X.values[0, 0]
        j = np.cumsum(self.poisson_jumps())
        recon = x0 + self.Mc.values[:, 0] + j + self.A_used.values[:, 0]
        return float(np.max(np.abs(recon - self.X.values[:, 0])))


def simulate(spec, grid, t0, x0, seed):
    """One path started from the prefix ``x0`` frozen at ``t0``."""
    spec.check_grid(grid)
    if isinstance(x0, ps.CadlagPath):
        if x0.grid != grid or x0.dim != 1:
            raise DomainError("x0 must be a one-dimensional path on the simulation grid")
    else:
        x0 = ps.CadlagPath.constant(grid, x0)
    k0 = grid.index_of(t0)
    m, dt = grid.node_count, grid.dt
    rng = generator(seed)
    dW = np.zeros(m)
    dW[1:] = rng.standard_normal(m - 1) * np.sqrt(dt)
    fire = np.zeros(m, dtype=bool)
    fire[1:] = rng.random(m - 1) < spec.intensity * dt
    marks_all = np.zeros(m)
    marks_all[1:] = spec.law.sample(rng, m - 1)
    fire[: k0 + 1] = False

    gamma = spec.gamma_on(grid)
    nodes = np.flatnonzero(fire)
    marks = marks_all[nodes]
    sizes = gamma[nodes] * marks
    pj = np.zeros(m)
    pj[nodes] = sizes

    A = spec.drift_path(grid)
    pre_v, pre_j = ps._stop_at(x0, k0)
    a_v = pre_v[:, 0] - pre_v[0, 0]
    a_j = pre_j[:, 0].copy()
    a_v[k0 + 1:] += A.values[k0 + 1:, 0] - A.values[k0, 0]
    a_j[k0 + 1:] = A.jumps[k0 + 1:, 0]
    A_used = ps.CadlagPath(grid, a_v, a_j)

    dW[: k0 + 1] = 0.0
    if spec.feedback is None:
        sig = spec.sigma_on(grid)
        inc = np.zeros(m)
        inc[1:] = sig[:-1] * dW[1:]
        mc = np.cumsum(inc)
        x = pre_v[0, 0] + mc + np.cumsum(pj) + a_v
    else:
        times = grid.times
        mc = np.zeros(m)
        x = np.array(pre_v[:, 0])
        for k in range(k0 + 1, m):
            s = float(spec.feedback(times[k - 1], x[k - 1]))
            mc[k] = mc[k - 1] + s * dW[k]
            x[k] = x[k - 1] + s * dW[k] + (a_v[k] - a_v[k - 1]) + pj[k]
    X = ps.CadlagPath(grid, x, a_j + pj)
    return SimulatedProcess(
        X=X, Mc=ps.CadlagPath(grid, mc), A_used=A_used, jump_nodes=nodes, jump_marks=marks,
        jump_sizes=sizes, dW=dW, spec=spec, gamma=gamma, start=k0, seed=int(seed),
    )


def path_seed(seed, index):
    return derive_seed(seed, index)


def ensemble(spec, grid, t0, x0, count, seed, start=0, workers=1):
    """``count`` independent paths with indices ``start..start+count-1``.

    Path ``i`` uses the seed derived from ``(seed, i)``, so results do not
    depend on ``workers`` or on how index ranges are split.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    idx = range(start, start + count)
    run = lambda i: simulate(spec, grid, t0, x0, path_seed(seed, i))  # noqa: E731
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, idx))
    return [run(i) for i in idx]


def coarsen(proc, factor):
    """The same realization observed on the grid with ``factor`` times fewer intervals.

    Values are sampled at the coarse nodes; Poisson jumps and drift atoms
    inside a coarse interval ``(T_{K-1}, T_K]`` are merged onto ``T_K``.
    """
    grid = proc.grid
    if factor < 1 or (grid.node_count - 1) % factor:
        raise DomainError(f"cannot coarsen {grid.node_count - 1} intervals by {factor}")
    cg = ps.TimeGrid(grid.horizon, (grid.node_count - 1) // factor + 1)
    block = np.zeros(grid.node_count, dtype=int)
    block[1:] = (np.arange(1, grid.node_count) + factor - 1) // factor

    def merge(a):
        out = np.zeros(cg.node_count)
        np.add.at(out, block, a)
        return out

    sub = slice(None, None, factor)
    pj = merge(proc.poisson_jumps())
    aj = merge(proc.A_used.jumps[:, 0])
    fired = merge(np.isin(np.arange(grid.node_count), proc.jump_nodes).astype(float)) > 0
    nodes = np.flatnonzero(fired)
    gamma = proc.gamma[sub]
    with np.errstate(divide="ignore", invalid="ignore"):
        marks = np.where(gamma[nodes] != 0, pj[nodes] / gamma[nodes], 0.0)
    X = ps.CadlagPath(cg, proc.X.values[sub, 0], aj + pj)
    A = ps.CadlagPath(cg, proc.A_used.values[sub, 0], aj)
    return SimulatedProcess(
        X=X, Mc=ps.CadlagPath(cg, proc.Mc.values[sub, 0]), A_used=A, jump_nodes=nodes,
        jump_marks=marks, jump_sizes=pj[nodes], dW=merge(proc.dW), spec=proc.spec, gamma=gamma,
        start=int(block[proc.start]), seed=proc.seed,
    )


def ensemble_csv(procs, fh=None, start=0):
    """Summary rows ``path_index, seed, X_T, jump_count, sup_norm``."""
    out = io.StringIO() if fh is None else fh
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["path_index", "seed", "X_T", "jump_count", "sup_norm"])
    for i, p in enumerate(procs):
        w.writerow([start + i, p.seed, ps.fmt(p.X.values[-1, 0]), p.jump_count, ps.fmt(ps.sup_norm(p.X))])
    if fh is None:
        return out.getvalue()
