"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``. Medians are over path ensembles with
fixed seeds; every criterion uses the tolerances of the requirements.
"""
import json
import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from dupirelab import clark as ck
from dupirelab import cli
from dupirelab import decompose as dc
from dupirelab import functionals as fn
from dupirelab import jumps as jp
from dupirelab import models as md
from dupirelab import pathspace as ps
from dupirelab import regcalc as rc

pytestmark = pytest.mark.slow

PATHS = 100
G14 = ps.TimeGrid(1.0, 2**14 + 1)
SQ = fn.square()
RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    return ok


@lru_cache(maxsize=None)
def brownian_paths(count=PATHS, seed=2024):
    return md.ensemble(md.JumpDiffusionSpec(sigma=1.0), G14, 0.0, 0.0, count, seed)


def slope(eps, gaps):
    return rc.fit_slope(np.asarray(eps), np.asarray(gaps))


def criterion_1():
    sched = rc.EpsSchedule.default(G14, 3, 9)
    finals, cauchy = [], []
    for p in brownian_paths():
        W = p.X
        ref = rc.left_point_integral(W, W)
        fam = [rc.forward_integral_eps(W, W, e) for e in sched]
        finals.append(rc.ucp_limit(fam, sched, reference=ref).gaps)
        cauchy.append(rc.ucp_limit(fam, sched).gaps)
    med_ref = np.median(finals, axis=0)
    med_cauchy = np.median(cauchy, axis=0)
    s = slope(sched.values[1:], med_cauchy)
    ok = s > 0.3 and med_ref[-1] < 5e-2
    return report(1, ok, f"Cauchy slope {s:.3f} (> 0.3), median final sup-gap {med_ref[-1]:.4f} (< 0.05)")


def criterion_2():
    eps = rc.EpsSchedule.default(G14, 3, 9).values[-1]
    procs = brownian_paths()
    qv = np.median([rc.quadratic_covariation_eps(p.X, p.X, eps).values[-1, 0] for p in procs])
    cross = np.median([abs(rc.quadratic_covariation_eps(a.X, b.X, eps).values[-1, 0])
                       for a, b in zip(procs[::2], procs[1::2])])
    steps = ps.CadlagPath.step(G14, 0.25, 0.3) + ps.CadlagPath.step(G14, 0.5, -0.7)
    exact = all(abs(rc.quadratic_covariation_eps(steps, steps, e).values[-1, 0] - 0.58) < 1e-12
                for e in (4 * G14.dt, 256 * G14.dt, 0.125))
    ok = abs(qv - 1.0) < 0.05 and exact and cross < 0.05
    return report(2, ok, f"median [W]_T {qv:.4f} (within 5% of 1), step bracket exact {exact}, "
                         f"median |[W,W']_T| {cross:.4f} (< 0.05)")


def criterion_3():
    sched = rc.EpsSchedule.default(G14, 3, 9)
    F = fn.integral_functional(fn.FiniteMeasure.lebesgue(G14), np.tanh, lambda u: 1 - np.tanh(u) ** 2)
    markov = [SQ, fn.markovian(np.sin, np.cos)]
    zero, sups = True, []
    for p in brownian_paths():
        W = p.X
        zero &= all(np.all(rc.assumption_A_statistic(M, W, W, sched.values[0]).values == 0.0) for M in markov)
        sups.append([ps.sup_norm(rc.assumption_A_statistic(F, W, W, e)) for e in sched])
    med = np.median(sups, axis=0)
    dec = bool(np.all(np.diff(med) < 0))
    ok = zero and dec and med[-1] < 1e-2
    return report(3, ok, f"Markovian exactly zero {zero}, median sup decreasing {dec}, final {med[-1]:.2e} (< 1e-2)")


def criterion_4():
    law = md.JumpLaw.uniform(-1.0, 1.0)
    spec = md.JumpDiffusionSpec(sigma=0.3, intensity=10.0, law=law)
    sched = [2.0**-k for k in range(1, 8)]
    ident, nested, vals = 0.0, True, []
    for p in md.ensemble(spec, ps.TimeGrid(1.0, 4097), 0.0, 0.0, PATHS, seed=44):
        for e in sched:
            tr = jp.truncate_small_jumps(p, e)
            ident = max(ident, float(np.max(np.abs((tr.Xn + tr.Zn).values - p.X.values))))
        st = jp.truncation_vanishing_study(p, sched)
        nested &= st.nested()
        vals.append(st.values)
    med = np.median(vals, axis=0)
    dec = bool(np.all(np.diff(med) <= 0) and med[-1] < med[0])
    ok = ident < 1e-12 and nested and dec and med[-1] < 1e-3
    return report(4, ok, f"max |X - Xn - Zn| {ident:.1e}, nested {nested}, median decreasing {dec}, "
                         f"final median {med[-1]:.2e} (< 1e-3)")


def classical_gamma(proc, sigma, lam, law, cutoff=1.0):
    # truncated uniform moments in closed form
    lo, hi = max(law.a, -cutoff), min(law.b, cutoff)
    e1 = (hi**2 - lo**2) / (2 * (law.b - law.a))
    e2 = (hi**3 - lo**3) / (3 * (law.b - law.a))
    dt = proc.grid.dt
    xl = proc.X.left_limits[:, 0]
    inc = np.zeros(proc.grid.node_count)
    inc[1:] = sigma**2 * dt + lam * dt * e2 + 2 * xl[1:] * lam * dt * e1
    return np.cumsum(inc)


def criterion_5():
    t = G14.times
    gaps = [np.max(np.abs(dc.ito_dupire_decompose(SQ, p).gamma.values[:, 0] - t)) for p in brownian_paths()]
    law = md.JumpLaw.uniform(-0.5, 2.0)
    spec = md.JumpDiffusionSpec(sigma=0.5, intensity=5.0, law=law)
    jgaps = []
    for p in md.ensemble(spec, G14, 0.0, 0.0, PATHS, seed=55):
        rep = dc.ito_dupire_decompose(SQ, p)
        jgaps.append(np.max(np.abs(rep.gamma.values[:, 0] - classical_gamma(p, 0.5, 5.0, law))))
    a, b = np.median(gaps), np.median(jgaps)
    ok = a < 0.05 and b < 0.05 * 3
    return report(5, ok, f"median sup|gamma - t| {a:.4f} (< 0.05), jump-model median sup-gap to classical oracle "
                         f"{b:.4f} (< 0.15)")


def criterion_6():
    sched = rc.EpsSchedule.default(G14, 3, 9)
    finals, ratios = [], []
    for p in brownian_paths():
        W = p.Mc
        rep = dc.ito_dupire_decompose(SQ, p)
        finals.append(dc.orthogonality_test(rep, W, sched).values[-1])
        bad = dc.orthogonality_test(rep.gamma + W, W, sched)
        nn = rc.quadratic_covariation_eps(W, W, sched.values[-1]).values[-1, 0]
        ratios.append(bad.values / nn)
    med = np.median(finals)
    ratios = np.array(ratios)
    worst = float(np.median(ratios, axis=0).min())
    ok = med < 5e-2 and worst >= 0.5
    return report(6, ok, f"median final sup|[gamma, W]| {med:.4f} (< 0.05), adversarial median ratio to [W]_T "
                         f"{worst:.3f} over all eps (>= 0.5; per-path min at smallest eps {ratios[:, -1].min():.3f})")


def criterion_7():
    law = md.JumpLaw.uniform(-1.0, 1.0)
    spec = md.JumpDiffusionSpec(sigma=1.0, intensity=20.0, law=law)
    fine_grid = ps.TimeGrid(1.0, 4 * 1024 + 1)
    coarse, fine, sab = [], [], []
    for p in md.ensemble(spec, fine_grid, 0.0, 0.0, PATHS, seed=77):
        c = md.coarsen(p, 4)
        if p.jump_count == 0:
            continue
        fine.append(dc.predictability_proxy(dc.ito_dupire_decompose(SQ, p), p).max_at_jumps)
        coarse.append(dc.predictability_proxy(dc.ito_dupire_decompose(SQ, c), c).max_at_jumps)
        sab.append(not dc.predictability_proxy(dc.ito_dupire_decompose(SQ, p, omit_compensated=True), p).passed)
    ratio = np.median(coarse) / np.median(fine)
    fail_rate = float(np.mean(sab))
    ok = ratio >= 2.0 and fail_rate > 0.5
    return report(7, ok, f"median max|dgamma| coarse/fine {ratio:.2f} (>= 2), sabotaged proxy fails on "
                         f"{fail_rate:.0%} of paths")


def criterion_8():
    law = md.JumpLaw.uniform(-1.0, 1.0)
    spec = md.JumpDiffusionSpec(sigma=0.5, intensity=10.0, law=law)
    sched = [2.0**-k for k in range(1, 8)]
    gaps, mono = [], True
    for p in md.ensemble(spec, ps.TimeGrid(1.0, 4097), 0.0, 0.0, PATHS, seed=88):
        g = dc.decompose_via_truncation(SQ, p, sched).gaps
        mono &= bool(np.all(g[1:] <= 1.5 * g[:-1] + 1e-15))
        gaps.append(g)
    med = np.median(gaps, axis=0)
    ok = mono and med[-1] < 0.05
    return report(8, ok, f"non-increasing with 1.5 slack on every path {mono}, final median gap {med[-1]:.2e} (< 0.05)")


CLARK_GRID = ps.TimeGrid(1.0, 1025)


def clark_spec(name, model, inner=256, outer=2000):
    mu = fn.FiniteMeasure.lebesgue(CLARK_GRID) + fn.FiniteMeasure.dirac(CLARK_GRID, 0.75, 0.5)
    return ck.ClarkSpec(ck.payoff(name), mu, model, M_inner=inner, M_outer=outer)


def criterion_9():
    lin = ck.clark_representation_residual(clark_spec("linear", md.JumpDiffusionSpec(sigma=1.0)), seed=91)
    jumpy = md.JumpDiffusionSpec(sigma=1.0, intensity=1.0, law=md.JumpLaw.uniform(-0.5, 0.5))
    th = ck.clark_representation_residual(clark_spec("tanh", jumpy), seed=92)
    a = abs(lin.mean) < 2 * lin.stderr
    b = abs(th.mean) < 3 * th.stderr
    drift_ok = bool(np.all(np.abs(th.drift[:, 1]) < 3 * th.drift[:, 2]))
    spec = clark_spec("tanh", jumpy, inner=2000, outer=2)
    worst = 0.0
    for t, pid in ((0.0, 0), (0.25, 1), (0.5, 2), (0.75, 1), (0.875, 2)):
        x = ck.prefix_path(CLARK_GRID, pid)
        g, gs = ck.grad_v_estimate(spec, t, x, seed=93)
        f, fs = ck.fd_grad_estimate(spec, t, x, seed=93)
        worst = max(worst, abs(g[0] - f) / np.hypot(gs[0], fs))
    ok = a and b and drift_ok and worst < 3
    return report(9, ok, f"linear mean {lin.mean:.2e} se {lin.stderr:.2e}; tanh mean {th.mean:.2e} se {th.stderr:.2e}; "
                         f"grad vs FD worst {worst:.2e} combined se (< 3); drift buckets within 3 se {drift_ok}")


def criterion_10(tmp):
    configs = Path(__file__).resolve().parent.parent / "configs"
    identical = True
    for name in ("decompose", "clark", "truncation"):
        outs = []
        for threads in ("1", "4"):
            out = Path(tmp) / f"{name}-{threads}"
            code = cli.main(["run", str(configs / f"{name}.ini"), "--threads", threads, "--out", str(out)])
            identical &= code == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        identical &= outs[0] == outs[1]
        identical &= bool(json.loads(outs[0]["manifest.json"])["files"])
    return report(10, identical, "decompose, clark and truncation configs byte-identical at 1 and 4 threads" if identical
                  else "outputs differ between runs")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    with capsys.disabled():
        ok = CRITERIA[n]()
    assert ok, RESULTS[n]


def test_criterion_10(tmp_path, capsys):
    with capsys.disabled():
        ok = criterion_10(tmp_path)
    assert ok, RESULTS[10]


if __name__ == "__main__":
    import tempfile

    for n in sorted(CRITERIA):
        CRITERIA[n]()
    with tempfile.TemporaryDirectory() as d:
        criterion_10(d)
    sys.exit(0 if all("PASS" in RESULTS[n] for n in RESULTS) else 1)
