"""Calculus via regularization on grid paths.

``I_eps(t) = (1/eps) ∫_0^t H_s (X_{(s+eps)∧t} - X_s) ds`` is split into the
part ``s <= t - eps``, where the integrand no longer depends on ``t`` and a
running sum suffices, and the window ``(t - eps, t]``, summed directly. The
direct window sum keeps ``[X, X]_eps`` non-negative exactly, which a
difference of running sums would not.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import pathspace as ps
from .errors import ContractError, DomainError


class EpsSchedule:
    """Strictly decreasing regularization parameters, integer multiples of ``dt``, all ``>= 2 dt``."""

    def __init__(self, grid, values):
        vals = [float(v) for v in values]
        steps = []
        for v in vals:
            p = int(round(v / grid.dt))
            if p < 2 or abs(p * grid.dt - v) > 1e-9 * grid.dt:
                raise DomainError(f"eps={v} must be an integer multiple of dt={grid.dt} and >= 2 dt")
            steps.append(p)
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise DomainError("schedule must be strictly decreasing")
        self.grid = grid
        self.steps = tuple(steps)

    @classmethod
    def default(cls, grid, kmin=3, kmax=9):
        """``eps_k = 2^-k T`` for ``k = kmin..kmax``, clipped at ``2 dt``."""
        return cls.geometric(grid, [2.0 ** -k * grid.horizon for k in range(kmin, kmax + 1)])

    @classmethod
    def geometric(cls, grid, values):
        steps = sorted({max(2, int(round(v / grid.dt))) for v in values}, reverse=True)
        return cls(grid, [s * grid.dt for s in steps])

    @property
    def values(self):
        return [p * self.grid.dt for p in self.steps]

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.values)


def eps_steps(grid, eps):
    p = int(round(float(eps) / grid.dt))
    if p < 2 or abs(p * grid.dt - eps) > 1e-9 * grid.dt:
        raise DomainError(f"eps={eps} must be an integer multiple of dt={grid.dt} and >= 2 dt")
    return p


def _shift(a, p):
    """``a[i + p]`` with the index clipped at the last node."""
    idx = np.minimum(np.arange(len(a)) + p, len(a) - 1)
    return a[idx]


def _fwd_scalar(hr, hl, xr, xl, p, dt, backend=None):
    m = len(xr)
    # cells i = 1..m-1 fully inside [0, t - eps]
    cell = 0.5 * dt * (hr[:-1] * (_shift(xr, p)[:-1] - xr[:-1]) + hl[1:] * (_shift(xl, p)[1:] - xl[1:]))
    cum = np.concatenate(([0.0], np.cumsum(cell)))
    head = np.zeros(m)
    head[p:] = cum[: m - p]
    return head + kernels.window_fwd(hr, hl, xr, xl, p, 0.5 * dt, backend)


def _qc_scalar(xr, xl, yr, yl, p, dt, backend=None):
    m = len(xr)
    cell = 0.5 * dt * (
        (_shift(xr, p)[:-1] - xr[:-1]) * (_shift(yr, p)[:-1] - yr[:-1])
        + (_shift(xl, p)[1:] - xl[1:]) * (_shift(yl, p)[1:] - yl[1:])
    )
    cum = np.concatenate(([0.0], np.cumsum(cell)))
    head = np.zeros(m)
    head[p:] = cum[: m - p]
    return head + kernels.window_qc(xr, xl, yr, yl, p, 0.5 * dt, backend)


def forward_integral_eps(H, X, eps, backend=None):
    """``t -> (1/eps) ∫_0^t H_s · (X_{(s+eps)∧t} - X_s) ds`` summed over components."""
    grid = ps.check_same_grid(H, X)
    if H.dim != X.dim:
        raise DomainError("H and X must have the same dimension")
    p = eps_steps(grid, eps)
    total = np.zeros(grid.node_count)
    hl, xl = H.left_limits, X.left_limits
    for i in range(X.dim):
        total += _fwd_scalar(H.values[:, i], hl[:, i], X.values[:, i], xl[:, i], p, grid.dt, backend)
    return ps.CadlagPath(grid, total / (p * grid.dt))


def quadratic_covariation_eps(X, Y, eps, backend=None):
    """``t -> (1/eps) ∫_0^t (X_{(s+eps)∧t} - X_s)(Y_{(s+eps)∧t} - Y_s) ds``.

    Scalar paths give a path; otherwise an object array of paths indexed by
    the component pair.
    """
    grid = ps.check_same_grid(X, Y)
    p = eps_steps(grid, eps)
    xl, yl = X.left_limits, Y.left_limits

    def entry(i, j):
        v = _qc_scalar(X.values[:, i], xl[:, i], Y.values[:, j], yl[:, j], p, grid.dt, backend)
        return ps.CadlagPath(grid, v / (p * grid.dt))

    if X.dim == 1 and Y.dim == 1:
        return entry(0, 0)
    out = np.empty((X.dim, Y.dim), dtype=object)
    for i in range(X.dim):
        for j in range(Y.dim):
            out[i, j] = entry(i, j)
    return out


def left_point_integral(H, X):
    """Itô-style sum ``t_n -> sum_{k<n} H_{t_k} (X_{t_{k+1}} - X_{t_k})``."""
    grid = ps.check_same_grid(H, X)
    inc = np.sum(H.values[:-1] * np.diff(X.values, axis=0), axis=1)
    return ps.CadlagPath(grid, np.concatenate(([0.0], np.cumsum(inc))))


@dataclass(frozen=True)
class ConvergenceDiagnostic:
    eps: np.ndarray
    gaps: np.ndarray
    slope: float
    converged: bool
    tol: float
    scale: float = 1.0

    def slopes_so_far(self):
        return np.array([fit_slope(self.eps[: i + 1], self.gaps[: i + 1]) for i in range(len(self.eps))])

    def to_csv(self, fh=None):
        """Rows ``eps, sup_gap, slope_so_far, converged``."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["eps", "sup_gap", "slope_so_far", "converged"])
        thr = self.tol * self.scale
        for e, g, s in zip(self.eps, self.gaps, self.slopes_so_far()):
            w.writerow([ps.fmt(e), ps.fmt(g), ps.fmt(s), int(bool(g < thr))])
        if fh is None:
            return out.getvalue()


def fit_slope(eps, gaps):
    """Least-squares slope of ``log gap`` on ``log eps``; 0 when fewer than two gaps are positive."""
    eps, gaps = np.asarray(eps, dtype=float), np.asarray(gaps, dtype=float)
    ok = (gaps > 0) & (eps > 0)
    if ok.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(eps[ok]), np.log(gaps[ok]), 1)[0])


def _sup_diff(a, b):
    return float(np.max(np.abs(a.values - b.values)))


def ucp_limit(family, schedule, reference=None, tol=5e-2):
    """Sup-over-``t`` discrepancies along the schedule.

    ``family`` is a callable ``eps -> path`` or a sequence of paths aligned
    with ``schedule``. With a reference the gaps are ``sup |family(eps) - ref|``
    and the threshold is ``tol * max(1, sup |ref|)``; otherwise consecutive
    Cauchy gaps against ``tol``.
    """
    eps = np.array(list(schedule), dtype=float)
    if len(eps) < 2:
        raise DomainError("schedule must have at least two entries")
    paths = [family(e) for e in eps] if callable(family) else list(family)
    if len(paths) != len(eps):
        raise DomainError("family and schedule lengths differ")
    if reference is not None:
        gaps = np.array([_sup_diff(p, reference) for p in paths])
        scale = max(1.0, float(np.max(np.abs(reference.values))))
    else:
        gaps = np.array([_sup_diff(a, b) for a, b in zip(paths, paths[1:])])
        eps = eps[1:]
        scale = 1.0
    return ConvergenceDiagnostic(eps, gaps, fit_slope(eps, gaps), bool(gaps[-1] < tol * scale), tol, scale)


def assumption_A_statistic(F, Y, N, eps):
    """``t -> (1/eps) ∫_0^t (F_{s+eps}(Y) - F_{s+eps}(Y_{s∧} ⊞_{s+eps} Y_{s+eps})) (N_{s+eps} - N_s) ds``.

    The integrand is taken at nodes ``s = t_j`` (``s + eps`` clipped at ``T``)
    and integrated with the trapezoid rule.
    """
    grid = ps.check_same_grid(Y, N)
    if np.any(N.jumps != 0.0):
        raise ContractError("N must be continuous (no registered jumps)")
    p = eps_steps(grid, eps)
    m = grid.node_count
    j = np.arange(m)
    k = np.minimum(j + p, m - 1)
    y = Y.values[:, 0]
    full = F.local(Y).value(k, y[k])
    frozen = F.frozen(Y, j, k, y[k])
    n = N.values[:, 0]
    g = (full - frozen) * (n[k] - n)
    cell = 0.5 * grid.dt * (g[:-1] + g[1:])
    return ps.CadlagPath(grid, np.concatenate(([0.0], np.cumsum(cell))) / (p * grid.dt))
