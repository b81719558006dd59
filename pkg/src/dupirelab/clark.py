"""Value function ``v(t, x) = E[g(∫_0^T X^{t,x}_s mu(ds))]`` and its martingale representation.

With deterministic coefficients the remaining integral after node ``k``,
``R_k = ∫_{[t_k, T]} (X_u - X_{t_k}) mu(du)``, does not depend on the
starting path, so ``v(t_k, x) = E[g(a_k(x) + R_k)]`` where ``a_k(x)`` is the
integral of the path stopped at ``t_k``. ``R_k`` is sampled exactly in law
for the grid model: a Gaussian with the accumulated variance, a binomial
number of jump nodes placed uniformly, and marks drawn by inverse CDF. All
nested estimates are keyed by (seed, path, node) so they reproduce exactly
and give common random numbers wherever the key is shared.
"""
import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

from . import kernels as kn
from . import models
from . import pathspace as ps
from .errors import BudgetError, DomainError, NumericError
from .functionals import FiniteMeasure, random_path
from .rng import derive_seed, generator

_SEED_MASK = (1 << 63) - 1
DEFAULT_CAP = 5e9


@dataclass(frozen=True)
class Payoff:
    name: str
    code: int

    def g(self, u):
        return kn.payoff_np(self.code, np.asarray(u, dtype=float))

    def dg(self, u):
        return kn.payoff_d_np(self.code, np.asarray(u, dtype=float))


PAYOFFS = {
    "linear": Payoff("linear", kn.LINEAR),
    "quadratic": Payoff("quadratic", kn.QUADRATIC),
    "tanh": Payoff("tanh", kn.TANH),
}


def payoff(name):
    try:
        return PAYOFFS[name]
    except KeyError:
        raise DomainError(f"unknown payoff {name!r}; choose from {sorted(PAYOFFS)}") from None


@dataclass(frozen=True)
class ClarkSpec:
    payoff: Payoff
    measure: FiniteMeasure
    model: models.JumpDiffusionSpec
    x0: float = 0.0
    M_inner: int = 2000
    M_outer: int = 2000
    budget_cap: float = DEFAULT_CAP
    ppf_points: int = 4096

    def __post_init__(self):
        if not self.model.deterministic:
            raise DomainError("the value-function reduction needs deterministic coefficients")
        if self.M_inner < 2 or self.M_outer < 1:
            raise DomainError("M_inner must be >= 2 and M_outer >= 1")
        self.model.check_grid(self.grid)

    @property
    def grid(self):
        return self.measure.grid

    @cached_property
    def tables(self):
        return _Tables(self)


class _Tables:
    def __init__(self, spec):
        grid, mu, model = spec.grid, spec.measure, spec.model
        m, dt = grid.node_count, grid.dt
        self.tail = np.array(mu.tail)
        ccont = self.tail + 0.5 * dt * mu.density
        sigma = model.sigma_on(grid)
        self.gamma = model.gamma_on(grid)
        A = model.drift_path(grid)
        aj = A.jumps[:, 0]
        contrib = np.zeros(m)
        contrib[1:] = ccont[1:] * (np.diff(A.values[:, 0]) - aj[1:]) + self.tail[1:] * aj[1:]
        var = np.zeros(m)
        var[1:] = (ccont[1:] * sigma[:-1]) ** 2 * dt
        self.D = _tail_sum(contrib)
        self.sqrtV = np.sqrt(_tail_sum(var))
        self.cj = self.tail * self.gamma
        p = model.intensity * dt
        jmax = max(1, int(stats.binom.ppf(1.0 - 1e-15, m - 1, p)) + 1) if p > 0 else 1
        n = (m - 1 - np.arange(m))[:, None]
        self.cdf = stats.binom.cdf(np.arange(jmax + 1)[None, :], n, p) if p > 0 else np.ones((m, jmax + 1))
        self.jcap = jmax
        law = model.law
        self.lp = np.array([law.a, law.b])
        self.ppf = np.zeros(2)
        if law.kind == "uniform":
            self.law = kn.UNIFORM
        elif law.kind == "two_point":
            self.law = kn.TWO_POINT
        else:
            self.law = kn.TABLE
            self.ppf = law.ppf(np.linspace(0.0, 1.0, spec.ppf_points + 1))
        self.yq, self.wq = law.quadrature(1.0)
        self.rate = p

    def args(self):
        return (self.tail, self.gamma, self.D, self.sqrtV, self.cdf, self.cj, self.law, self.lp, self.ppf, self.yq, self.wq)


def _tail_sum(a):
    """``out[k] = sum_{i > k} a[i]``."""
    out = np.zeros_like(a)
    out[:-1] = np.cumsum(a[::-1])[::-1][1:]
    return out


def _path(spec, x):
    if not isinstance(x, ps.CadlagPath):
        x = ps.CadlagPath.constant(spec.grid, x)
    if x.grid != spec.grid or x.dim != 1:
        raise DomainError("x must be a one-dimensional path on the spec's grid")
    return x


def stopped_integral(spec, t, x):
    """``a(t, x) = ∫_0^T x_{t∧s} mu(ds)``; an atom at ``t`` counts toward ``[t, T]``."""
    x = _path(spec, x)
    k = spec.grid.index_of(t)
    return float(spec.measure.prefix(x)[k] + x.values[k, 0] * spec.measure.tail[k]), k


def _samples(spec, k, seed, stream):
    tb = spec.tables
    nk = kn.node_key_np(int(seed) & _SEED_MASK, int(stream), k)
    keys = kn.sample_keys_np(nk, spec.M_inner)
    return kn.sample_R_np(keys, k, tb.D, tb.sqrtV, tb.cdf, tb.cj, tb.law, tb.lp, tb.ppf, tb.jcap)


def _mean_se(v):
    if np.all(v == v[0]):
        return float(v[0]), 0.0
    mv = float(v.mean())
    return mv, float(np.sqrt(np.mean((v - mv) ** 2) / (len(v) - 1)))


def _finite(v, what):
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite {what}")
    return v


def v_estimate(spec, t, x, seed, stream=0):
    """Inner Monte Carlo estimate of ``v(t, x)`` and its standard error."""
    a, k = stopped_integral(spec, t, x)
    return _mean_se(_finite(spec.payoff.g(a + _samples(spec, k, seed, stream)), "payoff"))


def grad_v_estimate(spec, t, x, seed, stream=0):
    """``E[g'(a + R)] mu([t, T])`` on the same inner draws as :func:`v_estimate`."""
    a, k = stopped_integral(spec, t, x)
    d = _finite(spec.payoff.dg(a + _samples(spec, k, seed, stream)), "payoff derivative")
    m, se = _mean_se(d)
    tail = spec.measure.tail[k]
    return np.array([m * tail]), np.array([se * abs(tail)])


def fd_grad_estimate(spec, t, x, seed, h=1e-3, stream=0):
    """Central difference of ``v_estimate`` under bumps ``±h`` (common random numbers)."""
    a, k = stopped_integral(spec, t, x)
    r = _samples(spec, k, seed, stream)
    tail = spec.measure.tail[k]
    d = (spec.payoff.g(a + h * tail + r) - spec.payoff.g(a - h * tail + r)) / (2.0 * h)
    return _mean_se(_finite(d, "payoff"))


def v_bruteforce(spec, t, x, n, seed):
    """Plain forward-simulation estimate of ``v(t, x)`` (slow; an oracle for the reduction)."""
    x = _path(spec, x)
    vals = np.array([
        spec.payoff.g(spec.measure.integrate(models.simulate(spec.model, spec.grid, t, x, derive_seed(seed, i)).X))
        for i in range(n)
    ])
    return _mean_se(vals)


@dataclass(frozen=True)
class ClarkReport:
    residuals: np.ndarray
    drift: np.ndarray
    lattice: tuple = ()
    inner_se: float = 0.0

    @property
    def mean(self):
        return float(self.residuals.mean())

    @property
    def stderr(self):
        r = self.residuals
        return float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else 0.0

    def residual_csv(self, fh=None):
        """Rows ``path, gamma_T``."""
        return _write(fh, ["path", "gamma_T"], [[i, ps.fmt(g)] for i, g in enumerate(self.residuals)])

    def drift_csv(self, fh=None):
        """Rows ``t_bucket, mean, se``."""
        return _write(fh, ["t_bucket", "mean", "se"], [[ps.fmt(t), ps.fmt(m), ps.fmt(s)] for t, m, s in self.drift])

    def lattice_csv(self, fh=None):
        """Rows ``t, prefix_id, v, v_se, grad_v, grad_v_se``."""
        rows = [[ps.fmt(r[0]), int(r[1])] + [ps.fmt(v) for v in r[2:]] for r in self.lattice]
        return _write(fh, ["t", "prefix_id", "v", "v_se", "grad_v", "grad_v_se"], rows)


def _write(fh, header, rows):
    out = io.StringIO() if fh is None else fh
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if fh is None:
        return out.getvalue()


def estimated_cost(spec):
    return float(spec.M_inner) * spec.M_outer * spec.grid.node_count


def clark_representation_residual(spec, seed, buckets=8, chunk=64, backend=None, lattice=()):
    """Residual ``Gamma_T`` of the Clark-type representation on ``M_outer`` paths.

    Per path: ``g(I) - v(0) - sum grad v(t_k) ΔMc_{k+1} - sum_jumps (v(X_k) - v(B_k))
    + sum_k lambda dt E_y[v(B_k ⊕ gamma y) - v(B_k)]``, every ``v`` and
    ``grad v`` estimated by inner Monte Carlo on the stream of its
    (path, node). The compensator draws one Gauss-Legendre node per inner
    sample, cycling through the nodes, on the same draws as ``v(B_k)``.
    """
    cost = estimated_cost(spec)
    if cost > spec.budget_cap:
        raise BudgetError(f"nested Monte Carlo needs {cost:.3g} sample-node evaluations; cap is {spec.budget_cap:.3g}")
    tb = spec.tables
    if spec.M_inner < len(tb.yq):
        raise DomainError(f"M_inner must be >= {len(tb.yq)} (quadrature nodes of the jump law)")
    grid, mu = spec.grid, spec.measure
    m = grid.node_count
    inner = derive_seed(seed, 1) & _SEED_MASK
    procs = models.ensemble(spec.model, grid, 0.0, spec.x0, spec.M_outer, seed)
    res = np.empty(spec.M_outer)
    vpath = np.empty((spec.M_outer, m))
    se_all = []
    for c0 in range(0, spec.M_outer, chunk):
        block = procs[c0:c0 + chunk]
        a_post = np.empty((len(block), m))
        a_pre = np.empty((len(block), m))
        for i, p in enumerate(block):
            S = mu.prefix(p.X)
            a_post[i] = S + p.X.values[:, 0] * tb.tail
            base = p.X.left_limits[:, 0] + p.A_used.jumps[:, 0]
            a_pre[i] = S + base * tb.tail
        idx = np.arange(c0, c0 + len(block), dtype=np.int64)
        out = kn.clark_paths(inner, idx, a_post, a_pre, *tb.args(), spec.payoff.code, spec.M_inner, tb.jcap, backend=backend)
        _finite(out, "nested estimate")
        for i, p in enumerate(block):
            o = out[i]
            gI = float(spec.payoff.g(mu.integrate(p.X)))
            mart = float(np.sum(o[:-1, 2] * np.diff(p.Mc.values[:, 0])))
            jn = p.jump_nodes
            jumps = float(np.sum(o[jn, 0] - o[jn, 4]))
            comp = float(np.sum(p.compensator_weight()[1:] * o[1:, 5]))
            res[c0 + i] = gI - o[0, 0] - mart - jumps + comp
            vpath[c0 + i] = o[:, 0]
            se_all.append(np.median(o[:, 1]))
    edges = np.linspace(0, m - 1, buckets + 1).round().astype(int)
    drift = []
    for a, b in zip(edges[:-1], edges[1:]):
        d = vpath[:, b] - vpath[:, a]
        se = d.std(ddof=1) / np.sqrt(len(d)) if len(d) > 1 else 0.0
        drift.append((grid.times[a], float(d.mean()), float(se)))
    return ClarkReport(res, np.array(drift), tuple(lattice), float(np.median(se_all)))


PREFIXES = ("zero", "ramp", "step")


def prefix_path(grid, prefix_id):
    """Deterministic starting paths for the lattice: 0, ``t``, and ``0.5 * 1_{[T/2, T]}``."""
    if prefix_id == 0:
        return ps.CadlagPath.constant(grid, 0.0)
    if prefix_id == 1:
        return ps.CadlagPath(grid, grid.times)
    if prefix_id == 2:
        return ps.CadlagPath.step(grid, grid.snap(grid.horizon / 2), 0.5)
    raise DomainError(f"unknown prefix id {prefix_id}")


def clark_lattice(spec, seed, times, prefix_ids=(0, 1, 2)):
    """``(t, prefix_id, v, v_se, grad_v, grad_v_se)`` on a lattice of times and starting paths."""
    rows = []
    for t in times:
        t = spec.grid.snap(t)
        for pid in prefix_ids:
            x = prefix_path(spec.grid, pid)
            v, vs = v_estimate(spec, t, x, seed, pid)
            g, gs = grad_v_estimate(spec, t, x, seed, pid)
            rows.append((float(t), pid, v, vs, float(g[0]), float(gs[0])))
    return tuple(rows)


@dataclass(frozen=True)
class RegularityTable:
    rows: np.ndarray
    C_v: float
    C_grad: float
    C_grad_without_mu: float
    alpha: float

    columns = ("t", "t2", "dist", "sqrt_dt", "mu_between", "dv", "dgrad")


def _ratio(num, den):
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 1e-12, np.inf, 0.0))


def regularity_probe(spec, samples, seed, pairs=None, alpha=1.0):
    """Smallest constants ``C`` with ``|Δv| <= C (dist + |Δt|^1/2)`` and
    ``|Δ grad v| <= C (dist^a + |Δt|^(a/2) + |mu|([t, t')))`` over sampled pairs.

    ``pairs`` may supply ``((t, x), (t', x'))`` explicitly. Both ends of a
    pair share one inner stream, so the differences are common-random-number
    differences.
    """
    grid = spec.grid
    if pairs is None:
        pairs = []
        for i in range(samples):
            rng = generator(seed, i)
            x = random_path(grid, rng, scale=0.5)
            x2 = x + random_path(grid, rng, scale=0.1 * rng.random())
            k = int(rng.integers(0, grid.node_count))
            k2 = min(grid.node_count - 1, k + int(rng.integers(0, max(2, grid.node_count // 16))))
            pairs.append(((grid.times[k], x), (grid.times[k2], x2)))
    abs_tail = spec.measure.abs_tail
    rows = []
    for i, ((t, x), (t2, x2)) in enumerate(pairs):
        if t2 < t:
            (t, x), (t2, x2) = (t2, x2), (t, x)
        v1, _ = v_estimate(spec, t, x, seed, i)
        v2, _ = v_estimate(spec, t2, x2, seed, i)
        g1, _ = grad_v_estimate(spec, t, x, seed, i)
        g2, _ = grad_v_estimate(spec, t2, x2, seed, i)
        dist = ps.sup_norm(ps.stop(x2, t2) - ps.stop(x, t))
        between = abs_tail[grid.index_of(t)] - abs_tail[grid.index_of(t2)]
        rows.append((t, t2, dist, np.sqrt(t2 - t), between, abs(v2 - v1), abs(g2[0] - g1[0])))
    rows = np.array(rows, dtype=float).reshape(-1, 7)
    dist, sq, mub, dv, dg = rows[:, 2], rows[:, 3], rows[:, 4], rows[:, 5], rows[:, 6]
    cv = _ratio(dv, dist + sq)
    cg = _ratio(dg, dist ** alpha + sq ** alpha + mub)
    cg0 = _ratio(dg, dist ** alpha + sq ** alpha)
    top = lambda a: float(a.max()) if len(a) else 0.0  # noqa: E731
    return RegularityTable(rows, top(cv), top(cg), top(cg0), float(alpha))
