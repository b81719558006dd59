import numpy as np
import pytest

from dupirelab import functionals as fn
from dupirelab import pathspace as ps
from dupirelab import regcalc as rc
from dupirelab.errors import ContractError, DomainError
from conftest import brownian

G = ps.TimeGrid(1.0, 1025)
ONE = ps.CadlagPath.constant(G, 1.0)


def test_linear_path_forward_integral():
    X = ps.CadlagPath(G, G.times)
    eps = 32 * G.dt
    I = rc.forward_integral_eps(ONE, X, eps).values[:, 0]
    t = G.times
    expect = np.where(t >= eps, t - eps / 2, t**2 / (2 * eps))
    assert np.max(np.abs(I - expect)) < 1e-12


def test_step_path_forward_integral_and_bracket():
    X = ps.CadlagPath.step(G, 0.5, 1.0)
    for eps in (8 * G.dt, 64 * G.dt):
        I = rc.forward_integral_eps(ONE, X, eps)
        Q = rc.quadratic_covariation_eps(X, X, eps)
        k = G.index_of(0.5)
        assert np.allclose(I.values[k:, 0], 1.0, atol=1e-12)
        assert np.allclose(Q.values[k:, 0], 1.0, atol=1e-12)
        assert np.allclose(I.values[:k, 0], 0.0, atol=1e-12)


def test_linear_path_bracket_vanishes():
    X = ps.CadlagPath(G, G.times)
    gaps = [rc.quadratic_covariation_eps(X, X, e).values[-1, 0] for e in rc.EpsSchedule.default(G)]
    assert np.all(np.diff(gaps) < 0) and gaps[-1] < 1e-2


def test_brownian_bracket_close_to_t(rng):
    W = brownian(ps.TimeGrid(1.0, 16385), rng, 1.0)
    q = rc.quadratic_covariation_eps(W, W, 8 * W.grid.dt).values[-1, 0]
    assert abs(q - 1.0) < 0.1


def test_bilinear_symmetric_positive(rng):
    X, Y, Z = (brownian(G, rng, 1.0) for _ in range(3))
    eps = 16 * G.dt
    qc = lambda a, b: rc.quadratic_covariation_eps(a, b, eps).values[:, 0]  # noqa: E731
    XpZ = ps.CadlagPath(G, X.values + 2 * Z.values)
    assert np.allclose(qc(XpZ, Y), qc(X, Y) + 2 * qc(Z, Y), atol=1e-12)
    assert np.allclose(qc(X, Y), qc(Y, X), atol=1e-14)
    assert np.all(qc(X, X) >= 0.0)


def test_forward_integral_linear_in_h(rng):
    X, H1, H2 = (brownian(G, rng, 1.0) for _ in range(3))
    eps = 4 * G.dt
    f = lambda h: rc.forward_integral_eps(h, X, eps).values[:, 0]  # noqa: E731
    H = ps.CadlagPath(G, H1.values - 3 * H2.values)
    assert np.allclose(f(H), f(H1) - 3 * f(H2), atol=1e-11)


def test_multi_dimensional_bracket_is_matrix(rng):
    X = ps.CadlagPath(G, np.column_stack([brownian(G, rng, 1.0).values[:, 0], G.times]))
    out = rc.quadratic_covariation_eps(X, X, 8 * G.dt)
    assert out.shape == (2, 2)
    assert np.allclose(out[0, 1].values, out[1, 0].values)


def test_schedule_validation():
    with pytest.raises(DomainError):
        rc.EpsSchedule(G, [G.dt])
    with pytest.raises(DomainError):
        rc.EpsSchedule(G, [4 * G.dt, 8 * G.dt])
    with pytest.raises(DomainError):
        rc.eps_steps(G, 2.5 * G.dt)
    s = rc.EpsSchedule.default(ps.TimeGrid(1.0, 33), 3, 9)
    assert min(s.steps) == 2 and list(s.steps) == sorted(set(s.steps), reverse=True)


def test_ucp_limit_with_reference():
    X = ps.CadlagPath(G, G.times)
    ref = ps.CadlagPath(G, G.times)
    sched = rc.EpsSchedule.default(G, 3, 9)
    diag = rc.ucp_limit(lambda e: rc.forward_integral_eps(ONE, X, e), sched, ref)
    # sup gap is eps/2 exactly
    assert np.allclose(diag.gaps, np.array(list(sched)) / 2, atol=1e-12)
    assert diag.slope == pytest.approx(1.0, abs=1e-6)
    assert diag.converged
    assert diag.to_csv().splitlines()[0].startswith("eps")


def test_ucp_limit_cauchy_and_failure():
    sched = rc.EpsSchedule.default(G, 3, 6)
    paths = [ps.CadlagPath.constant(G, (-1.0) ** i) for i in range(len(sched))]
    diag = rc.ucp_limit(paths, sched)
    assert not diag.converged and len(diag.gaps) == len(sched) - 1
    with pytest.raises(DomainError):
        rc.ucp_limit(paths[:2], sched)


def test_assumption_a_markovian_is_zero(rng):
    Y, N = brownian(G, rng, 1.0), brownian(G, rng, 1.0)
    stat = rc.assumption_A_statistic(fn.square(), Y, N, 16 * G.dt)
    assert np.max(np.abs(stat.values)) == 0.0


def test_assumption_a_integral_decays(rng):
    Y, N = brownian(G, rng, 1.0), brownian(G, rng, 1.0)
    F = fn.integral_functional(fn.FiniteMeasure.lebesgue(G), np.tanh)
    sups = [ps.sup_norm(rc.assumption_A_statistic(F, Y, N, e)) for e in (64 * G.dt, 16 * G.dt, 4 * G.dt)]
    assert sups[-1] < sups[0] and sups[-1] < 0.05


def test_assumption_a_rejects_jumping_n(rng):
    with pytest.raises(ContractError):
        rc.assumption_A_statistic(fn.square(), brownian(G, rng, 1.0), ps.CadlagPath.step(G, 0.5, 1.0), 4 * G.dt)


def test_left_point_integral_matches_riemann():
    X = ps.CadlagPath(G, G.times**2)
    I = rc.left_point_integral(ps.CadlagPath(G, G.times), X)
    assert I.values[-1, 0] == pytest.approx(2 / 3, abs=2e-3)
