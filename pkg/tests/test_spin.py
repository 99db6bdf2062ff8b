import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdcavity.constants import MU_B_OVER_H
from gdcavity.spin import (
    STEVENS_TERMS,
    CrystalFieldParams,
    SpinParams,
    ZeemanConfig,
    build_spin_hamiltonian,
    build_spin_operators,
    build_stevens_operator,
    crystal_field_hamiltonian,
    spin_projections,
    zeeman_operator,
)

spins = st.sampled_from([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.5])
half_integer_spins = st.sampled_from([0.5, 1.5, 2.5, 3.5, 4.5])
coef = st.floats(-1e3, 1e3, allow_nan=False)


def ladder_element(S, m):
    """<m+1|S+|m> from the textbook formula."""
    return math.sqrt(S * (S + 1) - m * (m + 1))


def brute_stevens(S, k, q):
    """Element-by-element construction from the operator polynomials."""
    ms = [S - i for i in range(int(round(2 * S)) + 1)]
    n = len(ms)
    X = S * (S + 1)
    out = np.zeros((n, n))
    diag = {
        (2, 0): lambda m: 3 * m**2 - X,
        (4, 0): lambda m: 35 * m**4 - (30 * X - 25) * m**2 + 3 * X**2 - 6 * X,
        (6, 0): lambda m: 231 * m**6 - (315 * X - 735) * m**4
        + (105 * X**2 - 525 * X + 294) * m**2 - 5 * X**3 + 40 * X**2 - 60 * X,
    }
    if (k, q) in diag:
        for i, m in enumerate(ms):
            out[i, i] = diag[(k, q)](m)
        return out
    for i, mp in enumerate(ms):
        for j, m in enumerate(ms):
            if abs(mp - m) != 4:
                continue
            lo = min(m, mp)
            amp = 1.0
            for s in range(4):
                amp *= ladder_element(S, lo + s)
            if (k, q) == (4, 4):
                out[i, j] = 0.5 * amp
            else:
                p = lambda x: 11 * x**2 - X - 38  # noqa: E731
                out[i, j] = 0.25 * (p(mp) + p(m)) * amp
    return out


@given(spins)
def test_spin_operators_commutation(S):
    ops = build_spin_operators(S)
    comm = ops.sx @ ops.sy - ops.sy @ ops.sx
    np.testing.assert_allclose(comm, 1j * ops.sz, atol=1e-12)
    casimir = ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz
    np.testing.assert_allclose(casimir, S * (S + 1) * np.eye(ops.dim), atol=1e-10)


def test_ladder_operator_convention():
    ops = build_spin_operators(3.5)
    # basis index 1 is m = 5/2; S+ raises it to m = 7/2 (index 0)
    assert ops.splus[0, 1] == pytest.approx(ladder_element(3.5, 2.5))
    np.testing.assert_allclose(ops.sy, -0.5j * (ops.splus - ops.sminus))
    assert spin_projections(3.5)[0] == 3.5


@pytest.mark.parametrize("S", [0, -1.5, 1.25, float("nan")])
def test_invalid_spin_rejected(S):
    with pytest.raises(ValueError):
        build_spin_operators(S)


def test_operators_are_read_only():
    ops = build_spin_operators(3.5)
    with pytest.raises(ValueError):
        ops.sx[0, 0] = 1.0


@pytest.mark.parametrize("S", [2.0, 2.5, 3.5, 4.5])
@pytest.mark.parametrize("kq", STEVENS_TERMS)
def test_stevens_matches_brute_force(S, kq):
    np.testing.assert_allclose(build_stevens_operator(S, *kq), brute_stevens(S, *kq), atol=1e-9)


def test_stevens_known_values_spin_7_2():
    # diagonal of O_2^0 is 3 m^2 - 63/4
    np.testing.assert_allclose(
        np.diag(build_stevens_operator(3.5, 2, 0)).real, [21, 3, -9, -15, -15, -9, 3, 21]
    )
    # every Stevens operator is traceless
    for kq in STEVENS_TERMS:
        assert abs(np.trace(build_stevens_operator(3.5, *kq))) < 1e-9


def test_unsupported_stevens_rejected():
    with pytest.raises(ValueError):
        build_stevens_operator(3.5, 2, 2)


@settings(max_examples=40, deadline=None)
@given(coef, coef, coef, coef, coef, st.floats(-500, 500), st.floats(0, 180), st.floats(0, 360, exclude_max=True))
def test_spin_hamiltonian_hermitian(b20, b40, b44, b60, b64, H0, theta, phi):
    cf = CrystalFieldParams(b20, b40, b44, b60 * 1e-3, b64 * 1e-3)
    H = build_spin_hamiltonian(SpinParams(), cf, ZeemanConfig(H0, theta, phi))
    np.testing.assert_allclose(H, H.conj().T, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(half_integer_spins, coef, coef, coef, coef, coef)
def test_kramers_degeneracy_at_zero_field(S, b20, b40, b44, b60, b64):
    if S < 2:
        cf = CrystalFieldParams(b20, 0, 0, 0, 0)
    else:
        cf = CrystalFieldParams(b20, b40 * 1e-2, b44 * 1e-1, b60 * 1e-4, b64 * 1e-3)
    E = np.linalg.eigvalsh(crystal_field_hamiltonian(S, cf))
    scale = max(1.0, np.abs(E).max())
    np.testing.assert_allclose(E[0::2], E[1::2], atol=1e-9 * scale)


def test_zeeman_isotropic_g_field_along_z():
    sp = SpinParams(S=3.5, g_par=2.0, g_perp=2.0)
    E = np.linalg.eigvalsh(100.0 * zeeman_operator(sp, 0.0))
    np.testing.assert_allclose(np.diff(E), 2.0 * MU_B_OVER_H * 100.0, rtol=1e-12)


def test_zeeman_splitting_independent_of_direction_for_isotropic_g():
    sp = SpinParams(S=3.5, g_par=2.0, g_perp=2.0)
    ref = np.linalg.eigvalsh(zeeman_operator(sp, 0.0))
    for theta, phi in [(90, 0), (33, 71), (120, 250)]:
        np.testing.assert_allclose(np.linalg.eigvalsh(zeeman_operator(sp, theta, phi)), ref, atol=1e-12)


def test_zero_field_recovers_crystal_field():
    cf = CrystalFieldParams(-945.66, -1.2435, -25.3, 5.712e-4, 70.0e-4)
    H = build_spin_hamiltonian(SpinParams(), cf, ZeemanConfig(0.0, 81.66, 0.0))
    np.testing.assert_allclose(H, crystal_field_hamiltonian(3.5, cf))


def test_field_vector():
    z = ZeemanConfig(10.0, 90.0, 90.0)
    np.testing.assert_allclose(z.field_vector(), [0, 10, 0], atol=1e-12)
