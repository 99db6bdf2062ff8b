import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdcavity.constants import KB_OVER_H
from gdcavity.dicke import (
    boltzmann_weights,
    build_dicke_hamiltonian,
    cavity_operator,
    check_hermitian,
    diagonalize,
    diagonalize_config,
    dicke_hamiltonian_stack,
    ground_state_perturbation_scan,
    lorentzian,
    perturbation_comparison,
    photon_annihilation,
    render_map,
    sweep_spectrum,
    transition_amplitude,
)
from gdcavity.spin import build_spin_hamiltonian


def test_photon_operator():
    a = photon_annihilation(3)
    np.testing.assert_allclose(np.diag(a.T @ a), [0, 1, 2, 3])


def test_product_basis_order(base_dicke):
    # photon index is the slow one: the block structure of a (x) I
    a = cavity_operator(1, 8)
    assert a[0, 8] == 1.0 and a[1, 9] == 1.0 and a[8, 0] == 0.0


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-300, 300), st.floats(0, 180), st.floats(0, 200), st.integers(1, 3),
    st.floats(-50, 50),
)
def test_dicke_hamiltonian_hermitian(base_dicke, H0, theta, gc, n_max, b44):
    cfg = base_dicke.with_values(H0=H0, theta=theta, gc=gc, n_max=n_max, B44=b44)
    H = build_dicke_hamiltonian(cfg)
    check_hermitian(H)
    assert H.shape == (cfg.dim, cfg.dim)


def test_check_hermitian_rejects():
    H = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        check_hermitian(H)
    with pytest.raises(ValueError):
        diagonalize(H)


@pytest.mark.parametrize("n_max", [1, 2, 3])
def test_zero_coupling_block_spectrum(base_dicke, n_max):
    """At gc = 0 the spectrum is the spin spectrum repeated at n * omega_c."""
    cfg = base_dicke.with_values(gc=0.0, n_max=n_max)
    spin = np.linalg.eigvalsh(build_spin_hamiltonian(cfg.spin, cfg.cf, cfg.zeeman))
    expected = np.sort(np.concatenate([spin + n * cfg.cavity.omega_c for n in range(n_max + 1)]))
    np.testing.assert_allclose(diagonalize_config(cfg).energies, expected, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 150), st.floats(-40, 40), st.integers(1, 2))
def test_kramers_doublets_with_cavity(base_dicke, gc, b44, n_max):
    cfg = base_dicke.with_values(H0=0.0, gc=gc, B44=b44, n_max=n_max)
    E = diagonalize_config(cfg).energies
    np.testing.assert_allclose(E[0::2], E[1::2], atol=1e-7)


def test_eigensystem_gauge_and_labels(resonance_eigen):
    V = resonance_eigen.states
    np.testing.assert_allclose(V.conj().T @ V, np.eye(V.shape[1]), atol=1e-12)
    for k in range(V.shape[1]):
        j = np.argmax(np.abs(V[:, k]))
        assert V[j, k].real > 0 and abs(V[j, k].imag) < 1e-12
    assert resonance_eigen.amplitudes(3).shape == (2, 8)
    with pytest.raises(ValueError):
        resonance_eigen.state(0)
    with pytest.raises(ValueError):
        resonance_eigen.state(17)


def test_stack_matches_single_builds(base_dicke):
    fields = np.array([-100.0, 0.0, 35.5])
    stack = dicke_hamiltonian_stack(base_dicke, fields)
    for H, h in zip(stack, fields):
        np.testing.assert_allclose(H, build_dicke_hamiltonian(base_dicke.with_field(h)), atol=1e-9)


def test_boltzmann_weights():
    w = boltzmann_weights(np.array([5.0, 5.0 + KB_OVER_H * 0.5]), 0.5)
    np.testing.assert_allclose(w, [1.0, np.exp(-1.0)])
    with pytest.raises(ValueError):
        boltzmann_weights(np.zeros(2), 0.0)


def test_transition_amplitude_direction_and_weight(resonance_eigen):
    es = resonance_eigen
    a = cavity_operator(es.n_max, es.spin_dim)
    m = es.state(2).conj() @ a @ es.state(4)
    w2 = np.exp(-(es.energies[1] - es.energies[0]) / (KB_OVER_H * 0.38))
    assert transition_amplitude(es, 2, 4, 0.38) == pytest.approx(abs(m) ** 2 * w2, rel=1e-12)
    # emission uses the same matrix element, weighted by the upper population
    w4 = np.exp(-(es.energies[3] - es.energies[0]) / (KB_OVER_H * 0.38))
    assert transition_amplitude(es, 4, 2, 0.38) == pytest.approx(abs(m) ** 2 * w4, rel=1e-12)
    with pytest.raises(ValueError):
        transition_amplitude(es, 2, 2, 0.38)


def test_sweep_symmetric_under_field_reversal(base_dicke):
    fields = np.linspace(-200, 200, 81)
    spec = sweep_spectrum(base_dicke, fields)
    np.testing.assert_allclose(spec.freqs, spec.freqs[::-1], atol=1e-6)
    np.testing.assert_allclose(spec.amplitudes, spec.amplitudes[::-1], rtol=1e-6, atol=1e-12)


def test_sweep_matches_direct_diagonalization(base_dicke):
    fields = np.array([72.0])
    spec = sweep_spectrum(base_dicke, fields, [(2, 4), (2, 5)])
    es = diagonalize_config(base_dicke.with_field(72.0))
    np.testing.assert_allclose(
        spec.freqs[0], [es.energies[3] - es.energies[1], es.energies[4] - es.energies[1]], atol=1e-8
    )


def test_sweep_rejects_empty_and_bad_labels(base_dicke):
    with pytest.raises(ValueError):
        sweep_spectrum(base_dicke, [])
    with pytest.raises(ValueError):
        sweep_spectrum(base_dicke, [0.0], [(2, 40)])


def test_tracking_follows_branches_through_crossing(base_dicke):
    fields = np.linspace(60.0, 85.0, 51)
    tracked = sweep_spectrum(base_dicke, fields).freqs
    # tracked lines stay smooth: no jumps larger than the local slope allows
    assert np.abs(np.diff(tracked, axis=0)).max() < 20.0


def test_line_weight_exchanges_across_crossing(base_dicke):
    fields = np.linspace(0.0, 200.0, 801)
    amps = sweep_spectrum(base_dicke, fields).amplitudes
    ratio = amps[:, 0] / amps[:, 1]
    assert ratio[np.searchsorted(fields, 40.0)] > 2 and ratio[np.searchsorted(fields, 110.0)] < 0.2
    # [DERIVED] weights cross near 66 G, 0.78 at 72 G
    cross = fields[np.argmin(np.abs(np.log(ratio)))]
    assert 60.0 < cross < 72.0
    assert ratio[np.searchsorted(fields, 72.0)] == pytest.approx(0.7806, abs=1e-3)


def test_lorentzian_and_render(base_dicke):
    assert lorentzian(0.0, 0.0, 2.0) == 1.0
    assert lorentzian(2.0, 0.0, 2.0) == pytest.approx(0.5)
    fields = np.array([-72.0, 72.0])
    spec = sweep_spectrum(base_dicke, fields)
    fgrid = np.arange(17650.0, 18050.0, 0.5)
    P = render_map(spec, fgrid, gamma=8.8)
    assert P.shape == (2, fgrid.size)
    assert np.all(P <= 1.0) and np.all(P >= 0.0)
    j = np.argmin(P[1])
    assert np.min(np.abs(fgrid[j] - spec.freqs[1])) < 2.0


def test_perturbation_scans(base_dicke):
    zero = base_dicke.with_field(0.0)
    b44 = ground_state_perturbation_scan(zero.with_values(gc=0.0), "B44", [0.0, -10.0, -25.3])
    assert b44[0, 1] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.diff(b44[:, 1]) < 0)
    gc = ground_state_perturbation_scan(zero, "gc", [0.0, 20.0, 57.35])
    assert np.all(np.diff(gc[:, 1]) < 0)
    with pytest.raises(ValueError):
        ground_state_perturbation_scan(base_dicke, "gc", [0.0])
    with pytest.raises(ValueError):
        ground_state_perturbation_scan(zero, "B20", [0.0])
    both = perturbation_comparison(base_dicke, [0.0, -25.3], [0.0, 57.35])
    assert set(both) == {"B44", "gc"}


def test_config_validation(base_dicke):
    with pytest.raises(ValueError):
        base_dicke.with_values(gc=-1.0)
    with pytest.raises(ValueError):
        base_dicke.with_values(n_max=0)
    with pytest.raises(ValueError):
        base_dicke.with_values(nonsense=1.0)
