import numpy as np
import pytest

from dupirelab import functionals as fn
from dupirelab import pathspace as ps
from dupirelab.errors import DomainError, NumericError

G = ps.TimeGrid(1.0, 17)


def lebesgue():
    return fn.FiniteMeasure.lebesgue(G)


def catalog():
    mu = lebesgue() + fn.FiniteMeasure.dirac(G, 0.5, 0.3)
    return [
        fn.square(),
        fn.markovian(np.sin, np.cos, name="sin"),
        fn.integral_functional(mu, np.tanh, lambda u: 1 - np.tanh(u) ** 2),
        fn.integral_functional(lebesgue()),
        fn.running_sup(),
        fn.constant(2.0),
    ]


def test_measure_tail_and_integral():
    mu = lebesgue()
    assert mu.tail_at(0.25) == pytest.approx(0.75, abs=1e-15)
    assert mu.total_variation == pytest.approx(1.0)
    x = ps.CadlagPath(G, G.times)
    assert mu.integrate(x) == pytest.approx(0.5, abs=1e-15)


def test_measure_atom_is_right_continuous():
    mu = fn.FiniteMeasure.dirac(G, 0.5, 2.0)
    assert mu.tail_at(0.5) == 2.0
    assert mu.tail_at(0.5625) == 0.0
    assert mu.integrate(ps.CadlagPath.step(G, 0.5, 3.0)) == 6.0


def test_vertical_derivative_square():
    x = ps.CadlagPath.constant(G, 3.0)
    F = fn.from_callable("sq", lambda t, x: float(x.at(t)[0] ** 2))
    assert fn.vertical_derivative(F, 0.5, x, 1e-5)[0] == pytest.approx(6.0, abs=1e-8)
    assert fn.vertical_derivative(fn.square(), 0.5, x)[0] == 6.0


def test_vertical_derivative_constant_is_zero(rng):
    x = fn.random_path(G, rng)
    assert np.all(fn.vertical_derivative(fn.constant(1.5), 0.25, x) == 0.0)


def test_vertical_derivative_integral_linear():
    F = fn.integral_functional(lebesgue())
    x = ps.CadlagPath.constant(G, 0.0)
    assert fn.vertical_derivative(F, 0.25, x)[0] == pytest.approx(0.75, abs=1e-15)


def test_integral_linear_gradient_is_independent_of_x(rng):
    mu = lebesgue() + fn.FiniteMeasure.dirac(G, 0.75, -0.4)
    F = fn.integral_functional(mu)
    for _ in range(5):
        x = fn.random_path(G, rng)
        k = int(rng.integers(0, 17))
        t = G.times[k]
        assert fn.vertical_derivative(F, t, x)[0] == pytest.approx(mu.tail[k], abs=1e-14)
        Fnum = fn.from_callable("copy", lambda s, y: F(s, y))
        assert fn.vertical_derivative(Fnum, t, x, 1e-4)[0] == pytest.approx(mu.tail[k], abs=1e-9)


def test_finite_difference_second_order():
    f = fn.from_callable("cube", lambda t, x: float(np.exp(x.at(t)[0])))
    x = ps.CadlagPath.constant(G, 0.3)
    hs = np.array([0.2, 0.1, 0.05])
    errs = [abs(fn.vertical_derivative(f, 0.5, x, h)[0] - np.exp(0.3)) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 2.0) < 0.3


def test_numeric_error_reports_bump():
    F = fn.from_callable("log", lambda t, x: float(np.log(x.at(t)[0])))
    with np.errstate(all="ignore"), pytest.raises(NumericError, match="bump"):
        fn.vertical_derivative(F, 0.5, ps.CadlagPath.constant(G, 0.0), 1e-3)


def test_state_form_matches_path_construction(rng):
    for F in catalog():
        x = fn.random_path(G, rng)
        view = F.local(x)
        for k in (0, 3, 16):
            y = rng.standard_normal()
            direct = F(G.times[k], ps.replace(x, G.times[k], y))
            assert view.value(k, y) == pytest.approx(direct, abs=1e-13)


def test_frozen_matches_path_construction(rng):
    for F in catalog():
        x = fn.random_path(G, rng)
        for j, k in ((0, 0), (2, 5), (7, 16)):
            y = 0.7
            direct = F(G.times[k], ps.replace(ps.stop(x, G.times[j]), G.times[k], y))
            assert F.frozen(x, j, k, y) == pytest.approx(direct, abs=1e-13)


def test_catalog_is_non_anticipative():
    for F in catalog():
        rep = fn.check_non_anticipative(F, 40, seed=1, grid=G)
        assert rep.max_discrepancy == 0.0 and not rep.flagged


def test_adversarial_functional_flagged():
    F = fn.from_callable("terminal", lambda t, x: float(x.values[-1, 0]))
    rep = fn.check_non_anticipative(F, 40, seed=2, grid=G)
    assert rep.max_discrepancy > 0 and rep.flagged


def test_zero_samples_is_undefined():
    rep = fn.check_non_anticipative(fn.square(), 0, seed=0)
    assert rep.samples == 0 and not rep.defined


def test_markovian_flag_property(rng):
    F = fn.square()
    x = fn.random_path(G, rng)
    x2 = ps.replace(fn.random_path(G, rng), 0.5, x.at(0.5))
    assert F.markovian and F(0.5, x) == F(0.5, x2)


def test_modulus_constant_is_zero():
    probe = fn.modulus_probe(fn.constant(3.0), 2.0, 200, seed=3, grid=G)
    assert np.all(probe.table == 0.0)


def test_modulus_table_non_decreasing():
    probe = fn.modulus_probe(fn.running_sup(), 2.0, 200, seed=4, grid=G)
    assert np.all(np.diff(probe.table) >= 0)
    assert np.all(probe.distances >= 0)


def test_modulus_lipschitz_markovian():
    probe = fn.modulus_probe(fn.markovian(np.sin, np.cos), 2.0, 300, seed=5, grid=G)
    assert np.all(probe.table <= probe.edges + 1e-12)


def test_modulus_integral_functional():
    F = fn.integral_functional(lebesgue(), np.tanh)
    probe = fn.modulus_probe(F, 2.0, 300, seed=6, grid=G)
    assert np.all(probe.table <= 2.0 * probe.edges + 1e-12)


def test_modulus_bucket_zero_shrinks():
    F = fn.markovian(np.sin, np.cos)
    coarse = fn.modulus_probe(F, 1.0, 50, seed=7, grid=G, buckets=4)
    fine = fn.modulus_probe(F, 1.0, 400, seed=7, grid=G, buckets=64)
    assert fine.table[0] <= coarse.table[0]


def test_modulus_rejects_bad_radius():
    with pytest.raises(DomainError):
        fn.modulus_probe(fn.square(), 0.0, 10, seed=0)


def test_running_sup_one_sided():
    x = ps.CadlagPath(G, np.concatenate([np.linspace(0, 1, 9), np.linspace(1, 0.2, 8)]))
    right, left, kink = fn.one_sided_derivatives(fn.running_sup(), 0.5, x)
    assert right == pytest.approx(1.0) and left == pytest.approx(0.0)
    assert kink
    central = fn.vertical_derivative(fn.running_sup(), 0.5, x)[0]
    assert -1.0 <= central <= 1.0
    right, left, kink = fn.one_sided_derivatives(fn.running_sup(), 0.75, x)
    assert right == left == 0.0 and not kink


def test_catalog_requires_scalar_paths():
    x = ps.CadlagPath.constant(G, [1.0, 2.0])
    with pytest.raises(DomainError):
        fn.square()(0.5, x)
    F = fn.from_callable("norm2", lambda t, x: float(np.sum(x.at(t) ** 2)))
    assert np.allclose(fn.vertical_derivative(F, 0.5, x), [2.0, 4.0], atol=1e-8)
