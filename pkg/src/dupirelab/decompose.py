"""Functional Itô decomposition of ``F(t, X)`` along simulated paths.

Node by node, with ``B_k`` the pre-jump value (left limit plus drift atom)::

    martingale   grad(X_{k-1}) ΔMc_k + grad(B_k) Δ_k 1_small - λdt E[grad(B_k) γy 1_small]
    compensated  (F(B_k+Δ_k) - F(B_k) - Δ_k grad(B_k)) 1_small - λdt E[same kernel, 1_small]
    bigjump      (F(B_k+Δ_k) - F(B_k)) 1_big
    gamma        F_k - F_0 - (the three running sums)

with ``small`` meaning ``|Δ| <= cutoff``. The Brownian increment over
``(t_{k-1}, t_k]`` pairs with the gradient at ``X_{k-1}``, the last value
known before it; a Poisson jump at ``t_k`` pairs with the gradient at ``B_k``.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import jumps as jm
from . import pathspace as ps
from . import regcalc
from .errors import ContractError, DomainError, NumericError


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    F_path: ps.CadlagPath
    term_martingale: ps.CadlagPath
    term_bigjump: ps.CadlagPath
    term_compensated: ps.CadlagPath
    gamma: ps.CadlagPath
    h: float
    jump_nodes: np.ndarray
    drift_atoms: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.F_path.grid

    def ledger_error(self):
        lhs = self.F_path.values[:, 0] - self.F_path.values[0, 0]
        rhs = sum(p.values[:, 0] for p in (self.term_martingale, self.term_bigjump, self.term_compensated, self.gamma))
        return float(np.max(np.abs(lhs - rhs)))

    def to_csv(self, fh=None):
        """Rows ``t, F, term_martingale, term_bigjump, term_compensated, gamma``."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "F", "term_martingale", "term_bigjump", "term_compensated", "gamma"])
        cols = [self.F_path, self.term_martingale, self.term_bigjump, self.term_compensated, self.gamma]
        for k, t in enumerate(self.grid.times):
            w.writerow([ps.fmt(t)] + [ps.fmt(c.values[k, 0]) for c in cols])
        if fh is None:
            return out.getvalue()


def _finite(a, what, F):
    bad = np.flatnonzero(~np.isfinite(a))
    if len(bad):
        raise NumericError(f"{F.name}: non-finite {what} at node {bad[0]}")
    return a


def _decompose(F, ctx, Mc, lo, cutoff, h, omit_compensated=False, metadata=None):
    path = ctx.path
    grid = path.grid
    m = grid.node_count
    k = np.arange(m)
    view = F.local(path)
    x = path.values[:, 0]
    xl = path.left_limits[:, 0]
    Fv = _finite(view.value(k, x), "F value", F)
    Fl = view.value(k, xl)
    hb = view.value(k, ctx.base)
    g_post = _finite(view.grad(k, x, h), "vertical gradient", F)
    g_pre = _finite(view.grad(k, ctx.base, h), "vertical gradient", F)

    small = ctx.in_region(lo, cutoff)
    big = ctx.in_region(cutoff, np.inf, lo_open=True)
    d = ctx.jumps

    mart = np.zeros(m)
    mart[1:] = g_post[:-1] * np.diff(Mc.values[:, 0])
    jm_mart = np.where(small, g_pre * d, 0.0)
    kern = np.where(small, Fv - hb - d * g_pre, 0.0)
    bigj = np.where(big, Fv - hb, 0.0)

    comp_mart = np.zeros(m)
    comp_kern = np.zeros(m)
    live = ctx.rate > 0
    if live.any():
        y, w = ctx.quadrature(lo, cutoff)
        kk = k[live]
        yk, wk = y[kk], w[kk]
        gk = g_pre[kk, None]
        vals = view.value(kk[:, None], ctx.base[kk, None] + yk) - hb[kk, None] - yk * gk
        vals = np.where(wk != 0.0, vals, 0.0)
        comp_mart[live] = ctx.rate[kk] * np.sum(wk * yk, axis=1) * g_pre[kk]
        comp_kern[live] = ctx.rate[kk] * np.sum(wk * vals, axis=1)
        _finite(comp_kern, "compensator", F)
    if omit_compensated:
        kern = np.zeros(m)
        comp_kern = np.zeros(m)

    t_mart = np.cumsum(mart + jm_mart - comp_mart)
    t_comp = np.cumsum(kern - comp_kern)
    t_big = np.cumsum(bigj)
    gamma = (Fv - Fv[0]) - (t_mart + t_comp + t_big)
    gamma[0] = 0.0
    return DecompositionReport(
        F_path=ps.CadlagPath(grid, Fv, np.where(k > 0, Fv - Fl, 0.0)),
        term_martingale=ps.CadlagPath(grid, t_mart, jm_mart),
        term_bigjump=ps.CadlagPath(grid, t_big, bigj),
        term_compensated=ps.CadlagPath(grid, t_comp, kern),
        gamma=ps.CadlagPath(grid, gamma, np.where(k > 0, hb - Fl, 0.0)),
        h=float(h),
        jump_nodes=np.flatnonzero(ctx.fired),
        drift_atoms=np.flatnonzero(ctx.base != xl),
        metadata=dict(metadata or {}),
    )


def _step(proc, h):
    if h is None:
        return 1e-5 * max(1.0, ps.sup_norm(proc.X))
    if not h > 0:
        raise DomainError("finite-difference step must be > 0")
    return float(h)


def ito_dupire_decompose(F, proc, h=None, cutoff=jm.CUTOFF, omit_compensated=False):
    """Decomposition of ``F(t, X)`` along ``proc``; ``gamma`` is the exact residual.

    ``omit_compensated`` drops the small-jump kernel term (a deliberately
    wrong decomposition, useful to check that the predictability proxy bites).
    """
    if proc.law is None:
        raise DomainError("process carries no compensator descriptor")
    h = _step(proc, h)
    meta = {"functional": F.name, "seed": proc.seed, "intensity": proc.intensity, "law": proc.law.describe()}
    return _decompose(F, jm.context(proc), proc.Mc, 0.0, cutoff, h, omit_compensated, meta)


@dataclass(frozen=True)
class OrthoTestReport:
    eps: np.ndarray
    values: np.ndarray
    diagnostic: regcalc.ConvergenceDiagnostic

    @property
    def passed(self):
        return self.diagnostic.converged


def orthogonality_test(report, N, schedule, tol=5e-2):
    """``sup_t |[gamma, N]_eps|`` along the schedule, judged against 0."""
    if np.any(N.jumps != 0.0):
        raise ContractError("N must be continuous (no registered jumps)")
    gamma = report.gamma if isinstance(report, DecompositionReport) else report
    eps = np.array(list(schedule), dtype=float)
    fam = [regcalc.quadratic_covariation_eps(gamma, N, e) for e in eps]
    vals = np.array([float(np.max(np.abs(p.values))) for p in fam])
    zero = ps.CadlagPath.constant(gamma.grid, 0.0)
    return OrthoTestReport(eps, vals, regcalc.ucp_limit(fam, eps, reference=zero, tol=tol))


@dataclass(frozen=True)
class PredictabilityReport:
    passed: bool
    max_at_jumps: float
    at_jumps: np.ndarray
    at_drift_atoms: np.ndarray
    tol: float


def predictability_proxy(report, proc=None, tol=5e-2):
    """Largest one-step change of ``gamma`` at Poisson jump nodes (must stay below ``tol``).

    Changes at drift atoms (predictable times) are reported but not judged.
    """
    g = report.gamma.values[:, 0]
    inc = np.zeros_like(g)
    inc[1:] = np.diff(g)
    nodes = report.jump_nodes if proc is None else proc.jump_nodes
    at_j = np.abs(inc[nodes])
    at_a = np.abs(inc[report.drift_atoms])
    worst = float(at_j.max()) if len(at_j) else 0.0
    return PredictabilityReport(bool(worst < tol), worst, at_j, at_a, float(tol))


@dataclass(frozen=True)
class TruncatedDecomposition:
    eps: np.ndarray
    reports: list
    triples: list
    gaps: np.ndarray
    residual_parts: np.ndarray
    diagnostic: regcalc.ConvergenceDiagnostic

    @property
    def jump_times(self):
        return [t.jump_times for t in self.triples]


def decompose_via_truncation(F, proc, schedule, h=None, cutoff=jm.CUTOFF, direct=None, tol=5e-2):
    """Decompose ``F`` along ``Xn = X - Zn`` for each threshold and compare with the direct residual.

    ``Xn`` only jumps by at least ``eps_n``, so its compensator is the law
    restricted to ``eps_n <= |Δ|``. ``residual_parts`` holds, per level, the
    sup-distances of ``F(Xn)`` vs ``F(X)``, of the martingale terms and of the
    jump terms (the three error sources of the limit argument).
    """
    h = _step(proc, h)
    direct = direct or ito_dupire_decompose(F, proc, h, cutoff)
    eps = np.array(list(schedule), dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise DomainError("truncation schedule must be strictly decreasing")
    reports, triples, gaps, parts = [], [], [], []
    for e in eps:
        tr = jm.truncate_small_jumps(proc, e)
        ctx = jm.context(proc, tr.Xn, drift_jumps=tr.kept_drift_jumps, fired=tr.fired, jumps=tr.kept_jumps)
        r = _decompose(F, ctx, proc.Mc, e, cutoff, h, metadata={"eps_n": float(e), **direct.metadata})
        reports.append(r)
        triples.append(tr)
        gaps.append(float(np.max(np.abs(r.gamma.values - direct.gamma.values))))
        sup = lambda a, b: float(np.max(np.abs(a.values - b.values)))  # noqa: E731
        jt = lambda rep: rep.term_bigjump + rep.term_compensated  # noqa: E731
        parts.append([sup(r.F_path, direct.F_path), sup(r.term_martingale, direct.term_martingale), sup(jt(r), jt(direct))])
    gaps = np.array(gaps)
    diag = regcalc.ConvergenceDiagnostic(eps, gaps, regcalc.fit_slope(eps, gaps), bool(gaps[-1] < tol), tol)
    return TruncatedDecomposition(eps, reports, triples, gaps, np.array(parts), diag)


def ensemble_summary_csv(reports, fh=None):
    """One row per path: ``path, F_T, gamma_T, sup_gamma, ledger_error``."""
    out = io.StringIO() if fh is None else fh
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["path", "F_T", "gamma_T", "sup_gamma", "ledger_error"])
    for i, r in enumerate(reports):
        g = r.gamma.values[:, 0]
        w.writerow([i, ps.fmt(r.F_path.values[-1, 0]), ps.fmt(g[-1]), ps.fmt(np.max(np.abs(g))), ps.fmt(r.ledger_error())])
    if fh is None:
        return out.getvalue()
