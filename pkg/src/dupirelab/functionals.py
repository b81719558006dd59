"""Non-anticipative path functionals and their vertical (Dupire) derivatives.

Catalog functionals are written in *state form*: ``F(t_k, x)`` depends on the
path only through a running summary ``S_k`` of ``x`` on ``[0, t_k)`` and the
value ``x_{t_k}``. That makes ``F(t_k, x ⊞_{t_k} y)`` an O(1) evaluation,
which every along-path computation in the package relies on. Functionals
built from a plain callable work everywhere too, through explicit path
construction (quadratic cost in the grid size).
"""
from dataclasses import dataclass

import numpy as np

from . import pathspace as ps
from .errors import DomainError, NumericError


class FiniteMeasure:
    """Signed measure on ``[0, T]``: grid density plus finitely many node atoms.

    Integrals use the trapezoid rule on each interval ``[t_{i-1}, t_i)``
    between the right value at ``t_{i-1}`` and the left limit at ``t_i``;
    an atom at ``t_j`` integrates the right-continuous value ``x_{t_j}``.
    """

    def __init__(self, grid, density=None, atoms=()):
        self.grid = grid
        rho = np.zeros(grid.node_count) if density is None else np.array(density, dtype=float)
        if rho.shape != (grid.node_count,) or not np.all(np.isfinite(rho)):
            raise DomainError("density must be a finite array with one entry per node")
        alpha = np.zeros(grid.node_count)
        for t, mass in atoms:
            alpha[grid.index_of(t)] += float(mass)
        rho.setflags(write=False)
        alpha.setflags(write=False)
        self.density = rho
        self.atoms = alpha
        dt = grid.dt
        cell = 0.5 * dt * (rho[:-1] + rho[1:])
        tail = np.zeros(grid.node_count)
        tail[:-1] = np.cumsum(cell[::-1])[::-1]
        tail += np.cumsum(alpha[::-1])[::-1]
        tail.setflags(write=False)
        self._tail = tail

    @classmethod
    def lebesgue(cls, grid, scale=1.0):
        return cls(grid, np.full(grid.node_count, float(scale)))

    @classmethod
    def dirac(cls, grid, t, mass=1.0):
        return cls(grid, None, [(t, mass)])

    def __add__(self, other):
        atoms = [(t, a) for t, a in zip(self.grid.times, self.atoms + other.atoms) if a != 0.0]
        return FiniteMeasure(self.grid, self.density + other.density, atoms)

    @property
    def tail(self):
        """``mu([t_k, T])`` for every node, atom at ``t_k`` included."""
        return self._tail

    def tail_at(self, t):
        return float(self._tail[self.grid.index_of(t)])

    def between(self, t, t2):
        """``mu([t, t'))`` for nodes ``t <= t'``."""
        return float(self._tail[self.grid.index_of(t)] - self._tail[self.grid.index_of(t2)])

    @property
    def abs_tail(self):
        """``|mu|([t_k, T])`` for every node."""
        return FiniteMeasure(self.grid, np.abs(self.density), [
            (t, abs(a)) for t, a in zip(self.grid.times, self.atoms) if a != 0.0
        ]).tail

    @property
    def total_variation(self):
        r = np.abs(self.density)
        return float(0.5 * self.grid.dt * np.sum(r[:-1] + r[1:]) + np.abs(self.atoms).sum())

    def prefix(self, x, i=0):
        """Running integral of component ``i`` of ``x`` over ``[0, t_k)`` for every ``k``."""
        v = x.values[:, i]
        vl = x.left_limits[:, i]
        rho = self.density
        cell = 0.5 * self.grid.dt * (rho[:-1] * v[:-1] + rho[1:] * vl[1:])
        out = np.zeros(self.grid.node_count)
        out[1:] = np.cumsum(cell + self.atoms[:-1] * v[:-1])
        return out

    def integrate(self, x, i=0):
        """``∫ x dmu`` over ``[0, T]``."""
        return float(self.prefix(x, i)[-1] + self.atoms[-1] * x.values[-1, i])


# --- state forms -----------------------------------------------------------

class _MarkovState:
    def __init__(self, f, fprime):
        self.f, self.fprime = f, fprime

    def prefix(self, x):
        return np.zeros(x.grid.node_count)

    def freeze(self, s, y0, j, k2):
        return s

    def value(self, k, s, y):
        return self.f(y)

    def grad(self, k, s, y):
        return None if self.fprime is None else self.fprime(y)


class _IntegralState:
    def __init__(self, measure, g, gprime):
        self.measure, self.g, self.gprime = measure, g, gprime

    def prefix(self, x):
        return self.measure.prefix(x)

    def freeze(self, s, y0, j, k2):
        tail = self.measure.tail
        return s + y0 * (tail[j] - tail[k2])

    def argument(self, k, s, y):
        return s + y * self.measure.tail[k]

    def value(self, k, s, y):
        return self.g(self.argument(k, s, y))

    def grad(self, k, s, y):
        if self.gprime is None:
            return None
        return self.gprime(self.argument(k, s, y)) * self.measure.tail[k]


class _RunningSupState:
    def prefix(self, x):
        v = np.abs(x.values[:, 0])
        vl = np.abs(x.left_limits[:, 0])
        out = np.zeros(x.grid.node_count)
        if len(v) > 1:
            out[1:] = np.maximum.accumulate(np.maximum(v[:-1], vl[1:]))
        return out

    def freeze(self, s, y0, j, k2):
        return np.where(np.asarray(k2) > np.asarray(j), np.maximum(s, np.abs(y0)), s)

    def value(self, k, s, y):
        return np.maximum(s, np.abs(y))

    def grad(self, k, s, y):
        return None


class _ConstantState:
    def __init__(self, c):
        self.c = float(c)

    def prefix(self, x):
        return np.zeros(x.grid.node_count)

    def freeze(self, s, y0, j, k2):
        return s

    def value(self, k, s, y):
        return np.full(np.broadcast(k, s, y).shape, self.c)

    def grad(self, k, s, y):
        return np.zeros(np.broadcast(k, s, y).shape)


# --- functionals -----------------------------------------------------------

class PathFunctional:
    """Non-anticipative ``F(t, x)`` with optional analytic vertical gradient.

    ``func(t, x)`` and ``vgrad(t, x)`` take a time node and a ``CadlagPath``.
    Catalog constructors supply ``state`` instead, which makes the functional
    scalar-valued on one-dimensional paths and cheap to evaluate along paths.
    """

    def __init__(self, name, func=None, vgrad=None, markovian=False, state=None, grid=None):
        if func is None and state is None:
            raise DomainError("a functional needs either func or state")
        self.name = name
        self.func = func
        self.vgrad = vgrad
        self.markovian = bool(markovian)
        self.state = state
        self.grid = grid

    def __repr__(self):
        return f"PathFunctional({self.name!r})"

    @property
    def has_analytic_gradient(self):
        if self.state is not None:
            return self.state.grad(0, 0.0, 0.0) is not None
        return self.vgrad is not None

    def _check_path(self, x):
        if self.state is not None:
            if x.dim != 1:
                raise DomainError(f"{self.name} is defined on one-dimensional paths")
            if self.grid is not None and x.grid != self.grid:
                raise DomainError(f"{self.name} is bound to grid {self.grid}")

    def __call__(self, t, x):
        return self.eval_index(x.grid.index_of(t), x)

    def eval_index(self, k, x):
        self._check_path(x)
        if self.state is not None:
            s = self.state.prefix(x)[k]
            return float(self.state.value(k, s, x.values[k, 0]))
        return float(self.func(x.grid.times[k], x))

    def analytic_gradient(self, t, x):
        """Analytic ``∇_x F(t, x)`` or None."""
        self._check_path(x)
        k = x.grid.index_of(t)
        if self.state is not None:
            g = self.state.grad(k, self.state.prefix(x)[k], x.values[k, 0])
            return None if g is None else np.atleast_1d(np.asarray(g, dtype=float))
        if self.vgrad is None:
            return None
        return np.atleast_1d(np.asarray(self.vgrad(x.grid.times[k], x), dtype=float))

    def local(self, x):
        """Fast view ``(k, y) -> F(t_k, x ⊞_{t_k} y)`` along ``x``."""
        self._check_path(x)
        return LocalView(self, x)

    def frozen(self, x, j, k2, y):
        """``F(t_{k2}, x_{t_j∧} ⊞_{t_{k2}} y)`` for index arrays ``j <= k2``."""
        self._check_path(x)
        j, k2, y = np.broadcast_arrays(np.asarray(j), np.asarray(k2), np.asarray(y, dtype=float))
        if self.state is not None:
            s = self.state.prefix(x)
            x0 = x.values[:, 0]
            return np.asarray(self.state.value(k2, self.state.freeze(s[j], x0[j], j, k2), y), dtype=float)
        out = np.empty(j.shape)
        times = x.grid.times
        for idx in np.ndindex(j.shape):
            p = ps.replace(ps.stop(x, times[j[idx]]), times[k2[idx]], [y[idx]])
            out[idx] = self.func(times[k2[idx]], p)
        return out


class LocalView:
    """Values and vertical gradients of ``F`` at ``(t_k, x ⊞_{t_k} y)``."""

    def __init__(self, F, x):
        self.F = F
        self.x = x
        self._s = F.state.prefix(x) if F.state is not None else None

    def value(self, k, y):
        k, y = np.broadcast_arrays(np.asarray(k), np.asarray(y, dtype=float))
        if self._s is not None:
            return np.asarray(self.F.state.value(k, self._s[k], y), dtype=float) + np.zeros(k.shape)
        out = np.empty(k.shape)
        times = self.x.grid.times
        for idx in np.ndindex(k.shape):
            out[idx] = self.F.func(times[k[idx]], ps.replace(self.x, times[k[idx]], [y[idx]]))
        return out

    def grad(self, k, y, h=None):
        """Vertical derivative; analytic when available, else central difference with step ``h``."""
        k, y = np.broadcast_arrays(np.asarray(k), np.asarray(y, dtype=float))
        if self._s is not None:
            g = self.F.state.grad(k, self._s[k], y)
            if g is not None:
                return np.asarray(g, dtype=float) + np.zeros(k.shape)
        elif self.F.vgrad is not None:
            out = np.empty(k.shape)
            times = self.x.grid.times
            for idx in np.ndindex(k.shape):
                p = ps.replace(self.x, times[k[idx]], [y[idx]])
                out[idx] = np.atleast_1d(self.F.vgrad(times[k[idx]], p))[0]
            return out
        if h is None:
            h = default_step(self.x)
        return (self.value(k, y + h) - self.value(k, y - h)) / (2.0 * h)


def default_step(x):
    return 1e-5 * max(1.0, ps.sup_norm(x))


# --- catalog ---------------------------------------------------------------

def markovian(f, fprime=None, name="markovian"):
    """``F(t, x) = f(x_t)``."""
    return PathFunctional(name, state=_MarkovState(f, fprime), markovian=True)


def square(name="square"):
    return markovian(lambda u: u * u, lambda u: 2.0 * u, name=name)


def integral_functional(measure, g=None, gprime=None, name="integral"):
    """``F(t, x) = g(∫_0^T x_{t∧s} mu(ds))``; identity ``g`` when omitted."""
    if g is None:
        g, gprime = (lambda u: u), (lambda u: np.ones_like(u))
    return PathFunctional(name, state=_IntegralState(measure, g, gprime), grid=measure.grid)


def running_sup(name="running_sup"):
    """``F(t, x) = sup_{s <= t} |x_s|``."""
    return PathFunctional(name, state=_RunningSupState())


def constant(c=0.0, name="constant"):
    return PathFunctional(name, state=_ConstantState(c), markovian=True)


def from_callable(name, func, vgrad=None, markovian=False):
    """Wrap ``func(t, x)``; non-anticipativity is the caller's claim, see :func:`check_non_anticipative`."""
    return PathFunctional(name, func=func, vgrad=vgrad, markovian=markovian)


# --- operations ------------------------------------------------------------

def vertical_derivative(F, t, x, h=None):
    """``∇_x F(t, x)``: analytic gradient if the functional has one, else central differences."""
    g = F.analytic_gradient(t, x)
    if g is not None:
        return g
    if h is None:
        h = default_step(x)
    if not h > 0:
        raise DomainError("finite-difference step must be > 0")
    out = np.empty(x.dim)
    for i in range(x.dim):
        e = np.zeros(x.dim)
        e[i] = h
        up = F(t, ps.bump(x, t, e))
        dn = F(t, ps.bump(x, t, -e))
        if not (np.isfinite(up) and np.isfinite(dn)):
            raise NumericError(f"{F.name}: non-finite value for bump of component {i} by ±{h} at t={t}")
        out[i] = (up - dn) / (2.0 * h)
    return out


def one_sided_derivatives(F, t, x, h=None):
    """Forward and backward vertical difference quotients of component 0, plus a kink flag."""
    if h is None:
        h = default_step(x)
    f0 = F(t, ps.stop(x, t))
    e = np.zeros(x.dim)
    e[0] = h
    right = (F(t, ps.bump(x, t, e)) - f0) / h
    left = (f0 - F(t, ps.bump(x, t, -e))) / h
    return right, left, bool(abs(right - left) > 1e3 * h + 1e-6)


def random_path(grid, rng, scale=1.0, jump_rate=3.0, dim=1):
    """Random walk with a few node-aligned jumps, for probing functionals."""
    m = grid.node_count
    steps = rng.standard_normal((m, dim)) * np.sqrt(grid.dt) * scale
    steps[0] = rng.standard_normal(dim) * scale
    jumps = np.zeros((m, dim))
    hit = rng.random(m) < min(jump_rate * grid.dt, 0.5)
    hit[0] = False
    jumps[hit] = rng.uniform(-scale, scale, (hit.sum(), dim))
    return ps.CadlagPath(grid, np.cumsum(steps + jumps, axis=0), jumps)


@dataclass(frozen=True)
class NonAnticipationReport:
    samples: int
    max_discrepancy: float | None
    flagged: bool

    @property
    def defined(self):
        return self.max_discrepancy is not None


def check_non_anticipative(F, sample_count, seed, grid=None, tol=1e-12):
    """Compare ``F(t, x)`` with ``F(t, x_{t∧})`` on random paths and times."""
    if sample_count < 0:
        raise DomainError("sample_count must be >= 0")
    if sample_count == 0:
        return NonAnticipationReport(0, None, False)
    grid = grid or F.grid or ps.TimeGrid(1.0, 65)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sample_count):
        x = random_path(grid, rng)
        t = grid.times[rng.integers(0, grid.node_count)]
        a, b = F(t, x), F(t, ps.stop(x, t))
        worst = max(worst, abs(a - b))
    return NonAnticipationReport(sample_count, worst, worst > tol * max(1.0, abs(a)))


@dataclass(frozen=True)
class ModulusProbe:
    radius: float
    distances: np.ndarray
    deltas: np.ndarray
    edges: np.ndarray
    table: np.ndarray

    def rows(self):
        return list(zip(self.edges.tolist(), self.table.tolist()))


def _clip_to_radius(x, K):
    n = ps.sup_norm(x)
    return x if n <= K else x * (K / n)


def modulus_probe(F, K, pairs, seed, grid=None, buckets=16):
    """Empirical modulus of continuity of ``F`` on the ball of radius ``K``."""
    if not K > 0:
        raise DomainError("radius K must be > 0")
    grid = grid or F.grid or ps.TimeGrid(1.0, 65)
    rng = np.random.default_rng(seed)
    m = grid.node_count
    dist = np.empty(pairs)
    delta = np.empty(pairs)
    for i in range(pairs):
        x = _clip_to_radius(random_path(grid, rng, scale=K * rng.uniform(0.1, 0.5)), K)
        r = K * 10.0 ** (-rng.uniform(0.0, 3.0))
        x2 = _clip_to_radius(x + random_path(grid, rng, scale=r), K)
        k = int(rng.integers(0, m))
        k2 = min(m - 1, k + int(rng.integers(0, 3)))
        t, t2 = grid.times[k], grid.times[k2]
        dist[i] = ps.dtheta((t, x), (t2, x2))
        delta[i] = abs(F(t, x) - F(t2, x2))
    edges = np.linspace(0.0, dist.max() if pairs else 1.0, buckets + 1)[1:]
    table = np.array([delta[dist <= e].max(initial=0.0) for e in edges])
    table = np.maximum.accumulate(table)
    return ModulusProbe(float(K), dist, delta, edges, table)
