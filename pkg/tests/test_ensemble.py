import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llspin import spin
from llspin.ensemble import ZEnsemble, apply_gradient, coherence_orders, diffuse, full_dephasing_area
from llspin.spin import GAMMA_1H

L = 0.02
FX = spin.total("x")


def _transverse(mode, **kw):
    return ZEnsemble(FX.copy(), mode=mode, sample_length=L, **kw)


def test_coherence_orders_partition():
    rho = spin.thermal_deviation() + FX + spin.op("I1p") @ spin.op("I2p")
    parts = coherence_orders(rho)
    assert np.allclose(sum(parts.values()), rho)
    assert np.allclose(parts[2], spin.op("I1p") @ spin.op("I2p"))


@given(st.floats(1e-7, 1e-4))
def test_slices_mean_is_cosine_average(area):
    n = 256
    ens = _transverse("slices", n_slices=n)
    ens.apply_gradient(area)
    z = (np.arange(n) + 0.5) / n * L - L / 2
    assert ens.expectation(FX) / 2 == pytest.approx(np.mean(np.cos(GAMMA_1H * area * z)), abs=1e-12)


@given(st.floats(1e-7, 1e-4))
def test_continuum_weight_is_sinc(area):
    ens = _transverse("continuum")
    ens.apply_gradient(area)
    x = GAMMA_1H * area * L / 2
    assert ens.expectation(FX) / 2 == pytest.approx(math.sin(x) / x, abs=1e-12)


def test_ideal_mode_kills_unrefocused_coherence():
    ens = _transverse("ideal")
    ens.apply_gradient(1e-6)
    assert abs(ens.expectation(FX)) < 1e-15
    ens.apply_gradient(-1e-6)
    assert ens.expectation(FX) == pytest.approx(2.0)


@pytest.mark.parametrize("mode", ["ideal", "continuum", "slices"])
def test_gradient_refocuses(mode):
    ens = _transverse(mode, n_slices=64) if mode == "slices" else _transverse(mode)
    ens.apply_gradient(3.3e-6)
    ens.apply_gradient(-3.3e-6)
    assert np.allclose(ens.mean(), FX, atol=1e-12)


def test_bipolar_pairs_refocus_with_same_sign():
    ens = _transverse("slices", n_slices=128)
    ens.apply_gradient(2e-6, bipolar=True)
    ens.apply_gradient(2e-6, bipolar=True)
    assert ens.expectation(FX) == pytest.approx(2.0, abs=1e-12)


def test_whole_cycle_gradient_averages_to_zero_on_slices():
    ens = _transverse("slices", n_slices=256)
    ens.apply_gradient(3 * full_dephasing_area(L))
    assert abs(ens.expectation(FX)) < 1e-12


def test_populations_untouched_by_gradients():
    ens = ZEnsemble(spin.thermal_deviation() + spin.singlet_order(), mode="slices", n_slices=32)
    ens.apply_gradient(5e-5)
    assert np.allclose(ens.mean(), spin.thermal_deviation() + spin.singlet_order(), atol=1e-14)


@given(st.floats(0, 3.0e-10), st.floats(0.01, 2.0))
def test_analytic_diffusion_attenuation(d, t):
    area = 2e-5
    ens = _transverse("ideal")
    ens.apply_gradient(area)
    ens.attenuate(d, t)
    ens.apply_gradient(-area)
    k = GAMMA_1H * area
    assert ens.expectation(FX) == pytest.approx(2 * math.exp(-d * k * k * t), rel=1e-12)


def test_monte_carlo_diffusion_matches_analytic():
    area, d, t = 2e-5, 1.9e-10, 1.0
    ens = _transverse("slices", n_slices=10_000, seed=11)
    ens.apply_gradient(area)
    ens.random_walk(d, t)
    ens.apply_gradient(-area)
    per_slice = ens.slice_expectations(FX)
    mean, se = per_slice.mean(), per_slice.std(ddof=1) / math.sqrt(per_slice.size)
    k = GAMMA_1H * area
    assert abs(mean - 2 * math.exp(-d * k * k * t)) < 4 * se


def test_random_walk_seeded_and_reproducible():
    a = diffuse(_transverse("slices", n_slices=2000, seed=5), 2e-10, 0.5)
    b = diffuse(_transverse("slices", n_slices=2000, seed=5), 2e-10, 0.5)
    c = diffuse(_transverse("slices", n_slices=2000, seed=6), 2e-10, 0.5)
    assert np.array_equal(a.z, b.z)
    assert not np.array_equal(a.z, c.z)


def test_module_level_helpers_copy():
    ens = _transverse("ideal")
    out = apply_gradient(ens, 1e-6)
    assert ens.expectation(FX) == pytest.approx(2.0)
    assert abs(out.expectation(FX)) < 1e-15


def test_hermitize_removes_drift():
    ens = ZEnsemble(FX.copy())
    ens.ops[0] = ens.ops[0] + 1e-7j * np.triu(np.ones((4, 4)), 1)
    assert ens.hermiticity_drift() > 1e-8
    ens.hermitize()
    assert ens.hermiticity_drift() < 1e-15


@given(st.floats(-1e-5, 1e-5), st.floats(0, 2 * math.pi))
def test_unitary_commutes_with_averaging(area, beta):
    ens = _transverse("continuum")
    ens.apply_gradient(area)
    u = spin.rotation(beta, 0.3)
    before = u @ ens.mean() @ u.conj().T
    ens.apply_unitary(u)
    assert np.allclose(ens.mean(), before, atol=1e-12)


def test_invalid_construction():
    with pytest.raises(ValueError):
        ZEnsemble(FX, mode="bogus")
    with pytest.raises(ValueError):
        ZEnsemble(FX, mode="slices", n_slices=0)
    with pytest.raises(ValueError):
        ZEnsemble(FX, mode="continuum", sample_length=-1)
