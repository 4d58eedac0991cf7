import numpy as np
import pytest

from modalsimex.kernel import Bandwidth, log_phi_h, phi, phi_h, phi_h_deriv


def test_phi_values():
    assert phi(0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert phi(1.0) == pytest.approx(0.2419707245, abs=1e-10)
    assert phi(1.7) == phi(-1.7)


def test_phi_h_values():
    assert phi_h(0.0, 1.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert phi_h(0.0, 0.5) == pytest.approx(0.7978845608, abs=1e-10)
    assert phi_h(1.0, 2.0) == pytest.approx(0.1760326634, abs=1e-10)


def test_phi_h_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        phi_h(0.0, 0.0)
    with pytest.raises(ValueError):
        phi_h(0.0, -1.0)


def test_phi_h_deriv_examples():
    for h in (0.3, 1.0, 2.5):
        assert phi_h_deriv(0.0, h, 1) == 0.0
    assert phi_h_deriv(1.0, 1.0, 1) == pytest.approx(-0.2419707245, abs=1e-10)
    assert phi_h_deriv(0.0, 1.0, 2) == pytest.approx(-0.3989422804, abs=1e-10)


def test_phi_h_deriv_rejects_bad_order():
    with pytest.raises(ValueError):
        phi_h_deriv(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        phi_h_deriv(0.0, 1.0, 0)


def test_phi_h_deriv_matches_finite_differences():
    # Derivative of order k against central differences of order k-1.
    # Draws avoid the zeros of each derivative (u = 0, +-1, +-sqrt(3)),
    # where a relative comparison is vacuous.
    zeros = {1: [0.0], 2: [1.0], 3: [0.0, np.sqrt(3.0)]}
    rand = np.random.default_rng(99)
    checked = 0
    while checked < 1000:
        h = rand.uniform(0.05, 2.0)
        u = rand.uniform(0.2, 3.0) * rand.choice([-1.0, 1.0])
        order = int(rand.integers(1, 4))
        if min(abs(abs(u) - z) for z in zeros[order]) < 0.05:
            continue
        t = u * h
        step = 1e-5 * h
        lower = (lambda s: phi_h(s, h)) if order == 1 else (
            lambda s: phi_h_deriv(s, h, order - 1)
        )
        fd = (lower(t + step) - lower(t - step)) / (2 * step)
        an = phi_h_deriv(t, h, order)
        np.testing.assert_allclose(an, fd, rtol=1e-4)
        checked += 1


def test_phi_h_integrates_to_one():
    for h in (0.2, 1.0, 3.0):
        t = np.linspace(-10 * h, 10 * h, 10_000)
        total = np.trapezoid(phi_h(t, h), t)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_phi_h_symmetry_exact():
    rand = np.random.default_rng(3)
    t = rand.normal(size=200)
    h = 0.7
    np.testing.assert_array_equal(phi_h(t, h), phi_h(-t, h))


def test_log_phi_h_consistent():
    rand = np.random.default_rng(4)
    t = rand.normal(size=50)
    h = 0.4
    np.testing.assert_allclose(np.exp(log_phi_h(t, h)), phi_h(t, h), rtol=1e-12)
    # and stays finite where the linear-space density underflows
    assert np.isfinite(log_phi_h(60.0, 0.01))
    assert phi_h(60.0, 0.01) == 0.0


def test_bandwidth_rule():
    bw = Bandwidth.from_rule(0.8, 200)
    assert abs(bw.h - 0.8 * 200 ** (-1 / 7)) < 1e-12
    assert bw.c == 0.8 and bw.n == 200
    with pytest.raises(ValueError):
        Bandwidth(h=0.0)
    with pytest.raises(ValueError):
        Bandwidth.from_rule(-1.0, 10)
