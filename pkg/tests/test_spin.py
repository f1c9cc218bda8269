import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from conftest import SX, SY, SZ, spin1, spin2
from llspin import spin
from llspin.spin import SpinSystem

couplings = st.floats(-2000, 2000, allow_nan=False)


def reference_h(omega, j, d):
    i1 = [spin1(a) for a in (SX, SY, SZ)]
    i2 = [spin2(a) for a in (SX, SY, SZ)]
    dot = sum(a @ b for a, b in zip(i1, i2))
    return (-math.pi * omega * i1[2] + math.pi * omega * i2[2] + 2 * math.pi * j * dot
            + 2 * math.pi * d * (3 * i1[2] @ i2[2] - dot))


def test_product_operators_match_pauli(pauli):
    for name, ref in pauli.items():
        assert np.allclose(spin.op("I" + name), ref, atol=1e-15)


def test_spin_commutators():
    ix, iy, iz = (spin.op(f"I1{a}") for a in "xyz")
    assert np.allclose(ix @ iy - iy @ ix, 1j * iz)
    assert np.allclose(spin.op("I1x") @ spin.op("I2y"), spin.op("I2y") @ spin.op("I1x"))


def test_singlet_triplet_basis_orthonormal():
    basis = spin.singlet_triplet_basis()
    m = basis.matrix
    assert basis.labels == ("T+1", "T0", "S0", "T-1")
    assert np.allclose(m.conj().T @ m, np.eye(4), atol=1e-14)
    assert np.allclose(basis.column("S0"), np.array([0, 1, -1, 0]) / math.sqrt(2))


@given(couplings, couplings, couplings)
def test_hamiltonian_matches_reference(omega, j, d):
    h = spin.hamiltonian(SpinSystem(omega, j, d))
    assert np.max(np.abs(h - reference_h(omega, j, d))) < 1e-9 * (1 + abs(omega) + abs(j) + abs(d))
    assert spin.is_hermitian(h)


@given(couplings, couplings, couplings)
def test_energy_levels_closed_form(omega, j, d):
    # T+-1 at J/4 + D/2; the {T0, S0} block at -(J/2 + D)/2 +- nu_eff/2 (Hz)
    evals = np.sort(np.linalg.eigvalsh(spin.hamiltonian(SpinSystem(omega, j, d)))) / (2 * math.pi)
    nu = math.hypot(omega, j - d)
    ref = np.sort([j / 4 + d / 2, j / 4 + d / 2, -(j / 2 + d) / 2 + nu / 2, -(j / 2 + d) / 2 - nu / 2])
    assert np.allclose(evals, ref, atol=1e-8 * (1 + abs(omega) + abs(j) + abs(d)))


def test_strong_pair_energy_levels():
    evals = np.sort(np.linalg.eigvalsh(spin.hamiltonian(SpinSystem(50, 10, 600)))) / (2 * math.pi)
    assert np.allclose(evals, [-598.5574268617, -6.4425731383, 302.5, 302.5], atol=1e-6)


@given(couplings, couplings)
def test_singlet_order_conserved_without_shift_difference(j, d):
    h = spin.hamiltonian(SpinSystem(0.0, j, d))
    so = spin.singlet_order()
    assert np.max(np.abs(h @ so - so @ h)) < 1e-9 * (1 + abs(j) + abs(d))


@given(st.floats(1, 500), couplings, couplings)
def test_eigen_singlet_order_commutes(omega, j, d):
    sys = SpinSystem(omega, j, d)
    h = spin.hamiltonian(sys)
    so = spin.eigen_singlet_order(sys)
    assert np.max(np.abs(h @ so - so @ h)) < 1e-8 * np.max(np.abs(h))
    assert spin.is_hermitian(so)


def test_observables_hermitian_and_named():
    for name in spin.OBSERVABLE_NAMES:
        o = spin.observable(name)
        assert spin.is_hermitian(o), name
        assert spin.chain_norm(name) == pytest.approx(np.trace(o @ o).real)
    with pytest.raises(ValueError):
        spin.observable("nope")


def test_chain_operators():
    assert np.allclose(spin.observable("rho1"), spin.op("I1x") + spin.op("I2x"))
    assert np.allclose(spin.observable("rho3"), spin.op("I1z") - spin.op("I2z"))
    s0 = np.array([0, 1, -1, 0]) / math.sqrt(2)
    t0 = np.array([0, 1, 1, 0]) / math.sqrt(2)
    assert np.allclose(spin.observable("rho5"), np.outer(s0, s0) - np.outer(t0, t0))


@given(st.floats(0, 360), st.floats(0, 360))
def test_rotation_matches_expm(flip, phase):
    b, p = math.radians(flip), math.radians(phase)
    gen = math.cos(p) * spin.total("x") + math.sin(p) * spin.total("y")
    ref = sla.expm(-1j * b * gen)
    assert np.max(np.abs(spin.rotation(b, p) - ref)) < 1e-12


def test_thermal_deviation_and_expectation():
    rho = spin.thermal_deviation()
    assert spin.expectation(rho, spin.total("z")) == pytest.approx(2.0)
    assert spin.expectation(rho, spin.total("x")) == pytest.approx(0.0)


def test_check_operator_rejects_bad_input():
    with pytest.raises(ValueError):
        spin.check_operator(np.eye(3))
    with pytest.raises(ValueError):
        spin.check_operator(np.array([[0, 1], [0, 0]]) * np.nan)
    with pytest.raises(ValueError):
        spin.check_operator(np.triu(np.ones((4, 4))), hermitian=True)


def test_spin_system_validation():
    with pytest.raises(ValueError):
        SpinSystem(float("nan"), 1, 1)
    with pytest.raises(ValueError):
        SpinSystem(1, 1, 1, gamma=-1)
    assert SpinSystem(1, 2, 3).replace(d=0).d == 0
