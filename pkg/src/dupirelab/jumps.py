"""Compensated jump integrals and small-jump truncation.

Jump kernels are evaluated against the pre-jump state at each node: the
left limit of the path plus any drift atom at the same node (drift atoms are
applied before the Poisson jump). Compensators are ``lambda dt`` per node
times a Gauss-Legendre expectation against the jump law.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np

from . import pathspace as ps
from . import regcalc
from .errors import DomainError, NumericError

CUTOFF = 1.0


class JumpKernel:
    """``G(view, k, base, dx)`` with a small/big cutoff on ``|dx|``.

    ``view`` is the functional's local view along the path (or None for
    kernels that ignore the path), ``base`` the pre-jump value at node ``k``
    and ``dx`` the applied jump size. All arguments broadcast.
    """

    def __init__(self, func, cutoff=CUTOFF, name="kernel", functional=None):
        if not cutoff > 0:
            raise DomainError("cutoff must be > 0")
        self.func = func
        self.cutoff = float(cutoff)
        self.name = name
        self.functional = functional

    def bind(self, path):
        return None if self.functional is None else self.functional.local(path)

    def __call__(self, view, k, base, dx):
        return np.asarray(self.func(view, k, base, dx), dtype=float)

    @classmethod
    def identity(cls, cutoff=CUTOFF):
        return cls(lambda v, k, b, dx: dx + 0.0 * b, cutoff, "identity")

    @classmethod
    def constant(cls, c=1.0, cutoff=CUTOFF):
        return cls(lambda v, k, b, dx: np.full(np.broadcast(k, b, dx).shape, float(c)), cutoff, "constant")

    @classmethod
    def zero(cls, cutoff=CUTOFF):
        return cls.constant(0.0, cutoff)

    @classmethod
    def increment(cls, F, cutoff=CUTOFF):
        """``F(X- ⊕ x) - F(X-)``."""
        return cls(lambda v, k, b, dx: v.value(k, b + dx) - v.value(k, b), cutoff, f"increment[{F.name}]", F)

    @classmethod
    def taylor(cls, F, h=None, cutoff=CUTOFF):
        """``F(X- ⊕ x) - F(X-) - x ∇F(X-)``."""

        def g(v, k, b, dx):
            return v.value(k, b + dx) - v.value(k, b) - dx * v.grad(k, b, h)

        return cls(g, cutoff, f"taylor[{F.name}]", F)


@dataclass(frozen=True, eq=False)
class JumpContext:
    """Per-node jump data of a path: pre-jump base, applied Poisson jumps and compensator inputs."""

    path: ps.CadlagPath
    base: np.ndarray
    jumps: np.ndarray
    fired: np.ndarray
    rate: np.ndarray
    gamma: np.ndarray
    law: object

    def quadrature(self, lo=0.0, hi=np.inf, lo_open=False, hi_open=False):
        """Applied sizes ``y`` and weights ``w`` (shape ``(m, n)``) for ``lo <= |y| <= hi``."""
        x, w = self.law.quadrature(self.gamma, lo, hi, lo_open, hi_open)
        return self.gamma[:, None] * x, w

    def in_region(self, lo=0.0, hi=np.inf, lo_open=False, hi_open=False):
        a = np.abs(self.jumps)
        ok = (a > lo if lo_open else a >= lo) & (a < hi if hi_open else a <= hi)
        return self.fired & ok


def context(proc, path=None, drift_jumps=None, fired=None, jumps=None):
    """Jump context of ``proc`` or of a modified path sharing its Poisson clock."""
    path = proc.X if path is None else path
    dA = proc.A_used.jumps[:, 0] if drift_jumps is None else drift_jumps
    if fired is None:
        fired = np.zeros(proc.grid.node_count, dtype=bool)
        fired[proc.jump_nodes] = True
    pj = proc.poisson_jumps() if jumps is None else jumps
    left = path.left_limits[:, 0]
    return JumpContext(path, left + dA, pj, fired, proc.compensator_weight(), proc.gamma, proc.law)


def _check(a, what):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite {what}")
    return a


def kernel_sums(kernel, ctx, view, lo=0.0, hi=np.inf, lo_open=False, hi_open=False):
    """Per-node jump sum and per-node compensator for the region ``lo <= |dx| <= hi``."""
    m = ctx.path.grid.node_count
    k = np.arange(m)
    hit = ctx.in_region(lo, hi, lo_open, hi_open)
    s = np.zeros(m)
    if hit.any():
        kk = k[hit]
        s[hit] = _check(kernel(view, kk, ctx.base[kk], ctx.jumps[kk]), "kernel value at a jump")
    comp = np.zeros(m)
    live = ctx.rate > 0
    if live.any():
        y, w = ctx.quadrature(lo, hi, lo_open, hi_open)
        kk = k[live]
        vals = kernel(view, kk[:, None], ctx.base[kk, None], y[kk])
        comp[live] = ctx.rate[kk] * np.sum(w[kk] * np.where(w[kk] != 0.0, vals, 0.0), axis=1)
        _check(comp, "compensator")
    return s, comp


def compensated_jump_integral(kernel, proc, region="small"):
    """``sum G(Δ) 1_small - ∫ λ E[G(γx) 1_small] ds`` or the uncompensated big-jump sum."""
    if proc.law is None:
        raise DomainError("process carries no compensator descriptor")
    ctx = context(proc)
    view = kernel.bind(proc.X)
    c = kernel.cutoff
    if region == "small":
        s, comp = kernel_sums(kernel, ctx, view, 0.0, c)
        return ps.CadlagPath(proc.grid, np.cumsum(s - comp), s)
    if region == "big":
        m = proc.grid.node_count
        hit = ctx.in_region(c, np.inf, lo_open=True)
        s = np.zeros(m)
        kk = np.flatnonzero(hit)
        if len(kk):
            s[kk] = _check(kernel(view, kk, ctx.base[kk], ctx.jumps[kk]), "kernel value at a jump")
        return ps.CadlagPath(proc.grid, np.cumsum(s), s)
    raise DomainError(f"region must be 'small' or 'big', got {region!r}")


@dataclass(frozen=True, eq=False)
class TruncationTriple:
    Xn: ps.CadlagPath
    Zn: ps.CadlagPath
    Yn: ps.CadlagPath
    eps_n: float
    retained: np.ndarray
    retained_drift: np.ndarray
    kept_jumps: np.ndarray
    kept_drift_jumps: np.ndarray
    fired: np.ndarray

    @property
    def jump_times(self):
        """Nodes where ``Xn`` jumps (the stopping times between which the decomposition runs)."""
        return np.flatnonzero((self.kept_jumps != 0.0) | (self.kept_drift_jumps != 0.0))


def truncate_small_jumps(proc, eps_n):
    """Split ``X = Xn + Zn`` where ``Zn`` collects the jumps smaller than ``eps_n``.

    ``Yn`` is the compensated sum of Poisson jumps with ``|Δ| < eps_n``;
    ``Zn = Yn`` plus the drift atoms below ``eps_n``; ``Xn = X - Zn``.
    ``retained`` lists the Poisson jump nodes moved into ``Zn``.
    """
    if not eps_n > 0:
        raise DomainError("eps_n must be > 0")
    ctx = context(proc)
    grid = proc.grid
    small = ctx.in_region(0.0, eps_n, hi_open=True)
    yj = np.where(small, ctx.jumps, 0.0)
    y, w = ctx.quadrature(0.0, eps_n, hi_open=True)
    drift = ctx.rate * np.sum(w * y, axis=1)
    Yn = ps.CadlagPath(grid, np.cumsum(yj - drift), yj)
    dA = proc.A_used.jumps[:, 0]
    a_small = (dA != 0.0) & (np.abs(dA) < eps_n)
    aj = np.where(a_small, dA, 0.0)
    zj = yj + aj
    Zn = ps.CadlagPath(grid, np.cumsum(zj - drift), zj)
    Xn = proc.X - Zn
    fired = ctx.fired & ~small
    return TruncationTriple(
        Xn=Xn, Zn=Zn, Yn=Yn, eps_n=float(eps_n), retained=np.flatnonzero(small),
        retained_drift=np.flatnonzero(a_small), kept_jumps=np.where(fired, ctx.jumps, 0.0),
        kept_drift_jumps=np.where(a_small, 0.0, dA), fired=fired,
    )


@dataclass(frozen=True)
class TruncationStudy:
    eps: np.ndarray
    sup_Zn: np.ndarray
    bracket_Zn: np.ndarray
    retained: tuple
    diagnostic: regcalc.ConvergenceDiagnostic

    @property
    def values(self):
        return self.sup_Zn + self.bracket_Zn

    def nested(self):
        return all(set(b) <= set(a) for a, b in zip(self.retained, self.retained[1:]))

    def to_csv(self, fh=None):
        """Rows ``eps_n, sup_Zn, bracket_Zn, retained_jumps``."""
        out = io.StringIO() if fh is None else fh
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["eps_n", "sup_Zn", "bracket_Zn", "retained_jumps"])
        for e, s, b, r in zip(self.eps, self.sup_Zn, self.bracket_Zn, self.retained):
            wr.writerow([ps.fmt(e), ps.fmt(s), ps.fmt(b), len(r)])
        if fh is None:
            return out.getvalue()


def truncation_vanishing_study(proc, schedule, tol=1e-3):
    """``sup |Zn| + [Zn]_T`` along a decreasing sequence of thresholds.

    The bracket is the sum of squared ``Zn`` jumps plus the regularized
    bracket of the compensator drift at ``eps = 2 dt``.
    """
    eps = np.array(list(schedule), dtype=float)
    if len(eps) < 1 or np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise DomainError("truncation schedule must be positive and strictly decreasing")
    grid = proc.grid
    sup_z, br, kept = [], [], []
    for e in eps:
        tr = truncate_small_jumps(proc, e)
        z = tr.Zn
        drift = ps.CadlagPath(grid, z.values[:, 0] - np.cumsum(z.jumps[:, 0]))
        qv = regcalc.quadratic_covariation_eps(drift, drift, 2 * grid.dt).values[-1, 0]
        sup_z.append(ps.sup_norm(z))
        br.append(float(np.sum(z.jumps[:, 0] ** 2) + qv))
        kept.append(tuple(tr.retained.tolist()))
    sup_z, br = np.array(sup_z), np.array(br)
    vals = sup_z + br
    diag = regcalc.ConvergenceDiagnostic(eps, vals, regcalc.fit_slope(eps, vals), bool(vals[-1] < tol), tol)
    return TruncationStudy(eps, sup_z, br, tuple(kept), diag)
