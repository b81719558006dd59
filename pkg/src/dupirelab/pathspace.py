"""Càdlàg paths on a uniform grid with an exact jump registry.

A path stores the right-continuous value at every node together with the
jump size at every node. Between nodes the continuous part is linear, so the
left limit at node ``k`` is ``values[k] - jumps[k]`` and the path on
``[t_{k-1}, t_k)`` runs linearly from ``values[k-1]`` to that left limit.
Operators take times that must be grid nodes; use :meth:`TimeGrid.snap` to
round arbitrary times first.
"""
import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GridMismatchError


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    node_count: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise DomainError(f"horizon must be finite and > 0, got {self.horizon}")
        if int(self.node_count) != self.node_count or self.node_count < 2:
            raise DomainError(f"node_count must be an integer >= 2, got {self.node_count}")
        object.__setattr__(self, "node_count", int(self.node_count))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self):
        return self.horizon / (self.node_count - 1)

    @cached_property
    def times(self):
        t = np.arange(self.node_count) * self.dt
        t[-1] = self.horizon
        t.setflags(write=False)
        return t

    def __len__(self):
        return self.node_count

    def index_of(self, t):
        """Node index of ``t``; raises unless ``t`` is (to round-off) a node."""
        t = float(t)
        if not np.isfinite(t) or t < -1e-12 * self.horizon or t > self.horizon * (1 + 1e-12):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * self.dt:
            raise DomainError(f"time {t} is not a grid node (dt={self.dt})")
        return min(max(k, 0), self.node_count - 1)

    def snap(self, t):
        """Nearest grid node to ``t`` (clipped to [0, T])."""
        k = int(round(float(t) / self.dt))
        return self.times[min(max(k, 0), self.node_count - 1)]

    def refine(self, factor):
        return TimeGrid(self.horizon, (self.node_count - 1) * factor + 1)


class CadlagPath:
    """Immutable càdlàg path, values and jumps of shape ``(m, d)``."""

    __slots__ = ("grid", "values", "jumps")

    def __init__(self, grid, values, jumps=None):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != grid.node_count:
            raise DomainError(f"values must have shape (m, d) with m={grid.node_count}, got {values.shape}")
        if jumps is None:
            jumps = np.zeros_like(values)
        else:
            jumps = np.array(jumps, dtype=float)
            if jumps.ndim == 1:
                jumps = jumps[:, None]
            if jumps.shape != values.shape:
                raise DomainError("jumps must have the same shape as values")
        if np.any(jumps[0] != 0.0):
            raise DomainError("no jump is allowed at node 0")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(jumps))):
            raise DomainError("path entries must be finite")
        values.setflags(write=False)
        jumps.setflags(write=False)
        self.grid = grid
        self.values = values
        self.jumps = jumps

    @classmethod
    def constant(cls, grid, c, dim=None):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        if dim is not None and c.size == 1:
            c = np.repeat(c, dim)
        return cls(grid, np.tile(c, (grid.node_count, 1)))

    @classmethod
    def step(cls, grid, t, size=1.0, base=0.0):
        """``base + size * 1_{[t, T]}`` with the jump registered at ``t``."""
        k = grid.index_of(t)
        v = np.full(grid.node_count, float(base))
        v[k:] += size
        j = np.zeros(grid.node_count)
        if k > 0:
            j[k] = size
        return cls(grid, v, j)

    @classmethod
    def continuous(cls, grid, values):
        return cls(grid, values)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def left_limits(self):
        return self.values - self.jumps

    @property
    def jump_indices(self):
        return np.flatnonzero(np.any(self.jumps != 0.0, axis=1))

    def component(self, i=0):
        return self.values[:, i]

    def at(self, t):
        return self.values[self.grid.index_of(t)]

    def __repr__(self):
        return f"CadlagPath(m={self.grid.node_count}, d={self.dim}, jumps={len(self.jump_indices)})"

    def _check(self, other):
        if not isinstance(other, CadlagPath):
            return NotImplemented
        check_same_grid(self, other)
        if other.dim != self.dim:
            raise DomainError("dimension mismatch")

    def __add__(self, other):
        if isinstance(other, CadlagPath):
            self._check(other)
            return CadlagPath(self.grid, self.values + other.values, self.jumps + other.jumps)
        return CadlagPath(self.grid, self.values + np.asarray(other, dtype=float), self.jumps)

    def __sub__(self, other):
        if isinstance(other, CadlagPath):
            self._check(other)
            return CadlagPath(self.grid, self.values - other.values, self.jumps - other.jumps)
        return CadlagPath(self.grid, self.values - np.asarray(other, dtype=float), self.jumps)

    def __neg__(self):
        return CadlagPath(self.grid, -self.values, -self.jumps)

    def __mul__(self, a):
        a = float(a)
        return CadlagPath(self.grid, a * self.values, a * self.jumps)

    __rmul__ = __mul__

    def identical(self, other):
        """Exact equality of grid, values and jump registry."""
        return (
            self.grid == other.grid
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.jumps, other.jumps)
        )


def check_same_grid(*paths):
    g = paths[0].grid
    for p in paths[1:]:
        if p.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {p.grid}")
    return g


def _vec(y, dim):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (dim,):
        raise DomainError(f"expected a vector of dimension {dim}, got shape {y.shape}")
    return y


def _stop_at(x, k):
    v = np.array(x.values)
    j = np.array(x.jumps)
    v[k + 1:] = v[k]
    j[k + 1:] = 0.0
    return v, j


def stop(x, t):
    """Path frozen at its value at ``t``."""
    k = x.grid.index_of(t)
    return CadlagPath(x.grid, *_stop_at(x, k))


def predictable_stop(x, t):
    """Path frozen at its left limit at ``t``; the jump at ``t`` is dropped."""
    k = x.grid.index_of(t)
    v, j = _stop_at(x, k)
    v[k:] = v[k] - j[k]
    j[k] = 0.0
    return CadlagPath(x.grid, v, j)


def bump(x, t, y):
    """Stopped path shifted by ``y`` from ``t`` on; the shift is registered as a jump at ``t``."""
    k = x.grid.index_of(t)
    y = _vec(y, x.dim)
    v, j = _stop_at(x, k)
    v[k:] += y
    if k > 0:
        j[k] += y
    return CadlagPath(x.grid, v, j)


def replace(x, t, y):
    """``x`` on ``[0, t)``, constant ``y`` on ``[t, T]``."""
    k = x.grid.index_of(t)
    y = _vec(y, x.dim)
    v = np.array(x.values)
    j = np.array(x.jumps)
    j[k + 1:] = 0.0
    if k > 0:
        j[k] = y - (v[k] - j[k])
    v[k:] = y
    return CadlagPath(x.grid, v, j)


def sup_norm(x):
    """Uniform norm of the represented path (node values and left limits, Euclidean per node)."""
    a = np.linalg.norm(x.values, axis=1)
    b = np.linalg.norm(x.left_limits, axis=1)
    return float(max(a.max(), b.max()))


def dtheta(first, second):
    """Pseudo-distance between ``(t, x)`` and ``(t', x')``."""
    (t, x), (t2, x2) = first, second
    check_same_grid(x, x2)
    return abs(float(t2) - float(t)) + sup_norm(stop(x2, t2) - stop(x, t))


def path_to_csv(x, fh=None):
    """Write ``t,x_1..x_d,jump_1..jump_d`` rows with 17 significant digits.

    Returns the CSV text when ``fh`` is None.
    """
    out = io.StringIO() if fh is None else fh
    w = csv.writer(out, lineterminator="\n")
    d = x.dim
    w.writerow(["t"] + [f"x_{i + 1}" for i in range(d)] + [f"jump_{i + 1}" for i in range(d)])
    for k, t in enumerate(x.grid.times):
        w.writerow([fmt(t)] + [fmt(v) for v in x.values[k]] + [fmt(v) for v in x.jumps[k]])
    if fh is None:
        return out.getvalue()


def path_from_csv(src):
    """Parse the format written by :func:`path_to_csv` (text or file object)."""
    fh = io.StringIO(src) if isinstance(src, str) else src
    rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if not header or header[0] != "t" or (len(header) - 1) % 2:
        raise DomainError(f"bad path CSV header: {header}")
    d = (len(header) - 1) // 2
    data = np.array([[float(c) for c in r] for r in body])
    t = data[:, 0]
    grid = TimeGrid(t[-1], len(t))
    if not np.allclose(t, grid.times, rtol=0, atol=1e-9 * grid.dt):
        raise DomainError("path CSV time column is not a uniform grid starting at 0")
    return CadlagPath(grid, data[:, 1:1 + d], data[:, 1 + d:])


def fmt(v):
    return format(float(v), ".17g")
