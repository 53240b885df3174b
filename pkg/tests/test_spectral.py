"""Bound states, embedded eigenvalues, resonances and the dominant split."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from friedrichs.errors import ConfigError, EmptyRealPoleSet
from friedrichs.model import preset
from friedrichs.selfenergy import sigma_boundary
from friedrichs.spectral import (
    bound_states,
    characteristic_det,
    characteristic_matrix,
    dominant_split,
    resonances,
    resonant_momenta,
    weak_coupling_resonances,
)

# energy of the first commensurate momentum pi/2 for gap 2, waveguide m=1
E1 = float(np.hypot(1.0, np.pi / 2.0))

WG_BELOW = preset("waveguide", [0.0], [0.5], gamma=0.5, m=1.0)
ML_RES = preset("massless-flat", [0.0], [1.0], g=0.4)
WG_PAIR = preset("waveguide", [0.0, 1.3], [2.0, 2.0], gamma=0.3, m=1.0)
BIC2 = preset("waveguide", [0.0, 2.0], [E1, E1], gamma=0.8, m=1.0)
BIC3 = preset("waveguide", [0.0, 2.0, 4.0], [E1, E1, E1], gamma=0.8, m=1.0)
ML_PAIR = preset("massless-flat", [0.0, 0.9], [1.0, 1.0], g=0.5)


def massless_sigma(z, g):
    """Closed form of the single-atom self-energy for omega = k^2."""
    return 1j * g * g / (2.0 * np.sqrt(complex(z)))


def waveguide_sigma_below_edge(e, gamma, m):
    """Independent quadrature for the single-atom value at 0 < E < m."""
    cut = quad(lambda t: 1.0 / np.sqrt(1.0 + (e / m) ** 2 * np.tan(t) ** 2),
               0.0, np.pi / 2.0, epsabs=1e-13, epsrel=1e-13)[0]
    return -(gamma / (np.pi * m)) * cut + gamma / np.sqrt(m * m - e * e)


class TestCharacteristicDet:
    def test_massless_closed_form_first_sheet(self):
        for z in (0.8 + 0.6j, 2.0 + 0.1j, -1.5 + 0.4j, 1.0 - 0.7j):
            sig = massless_sigma(z, 0.4) if z.imag > 0 \
                else -massless_sigma(z, 0.4)
            expected = 1.0 - z - sig
            got = characteristic_det(ML_RES, z)
            assert abs(got - expected) <= 1e-9 * (1.0 + abs(expected))

    def test_massless_closed_form_second_sheet(self):
        z = 1.1 - 0.3j
        expected = 1.0 - z - massless_sigma(z, 0.4)
        got = characteristic_det(ML_RES, z, sheet="second")
        assert abs(got - expected) <= 1e-8 * (1.0 + abs(expected))

    def test_second_sheet_equals_first_above_axis(self):
        z = 1.7 + 0.25j
        first = characteristic_det(WG_PAIR, z)
        second = characteristic_det(WG_PAIR, z, sheet="second")
        assert abs(first - second) <= 1e-9 * (1.0 + abs(first))

    def test_boundary_value_used_on_continuum(self):
        e = 1.9
        d_plus = characteristic_det(WG_PAIR, e + 1e-7j)
        d_bnd = characteristic_det(WG_PAIR, e)
        assert abs(d_plus - d_bnd) <= 1e-4 * (1.0 + abs(d_bnd))


class TestBoundStates:
    def test_below_edge_bound_state_matches_independent_root(self):
        f = lambda e: 0.5 - e - waveguide_sigma_below_edge(e, 0.5, 1.0)
        e_ref = brentq(f, 0.05, 0.45, xtol=1e-12)
        scan = bound_states(WG_BELOW, e_range=(0.05, 0.45), samples=120)
        assert len(scan.states) == 1
        st = scan.states[0]
        assert abs(st.energy - e_ref) <= 1e-8 * (1.0 + abs(e_ref))
        assert st.degeneracy == 1
        assert not st.embedded
        assert st.residual <= 1e-9

    def test_grid_outputs_are_consistent(self):
        scan = bound_states(WG_BELOW, e_range=(0.1, 0.4), samples=50)
        assert scan.grid_energies.shape == scan.grid_sigma.shape
        assert scan.grid_energies.size >= 40
        assert np.all(np.diff(scan.grid_energies) > 0)

    def test_embedded_pair_neglecting_corrections(self):
        scan = bound_states(BIC2, e_range=(E1 - 0.25, E1 + 0.25),
                            samples=150, neglect_corrections=True)
        assert len(scan.states) == 1
        st = scan.states[0]
        assert st.embedded
        assert abs(st.energy - E1) <= 1e-6
        assert st.degeneracy == 1
        # odd-nu constraint: the alternating sum of amplitudes vanishes
        v = st.vectors[:, 0]
        assert abs(v @ np.array([1.0, -1.0])) <= 1e-6
        assert abs(abs(v @ np.array([1.0, 1.0])) - np.sqrt(2.0)) <= 1e-6

    def test_embedded_triple_neglecting_corrections(self):
        scan = bound_states(BIC3, e_range=(E1 - 0.25, E1 + 0.25),
                            samples=150, neglect_corrections=True)
        assert len(scan.states) == 1
        st = scan.states[0]
        assert abs(st.energy - E1) <= 1e-6
        assert st.degeneracy == 2
        # the nullspace is orthogonal to the alternating vector
        u = np.array([1.0, -1.0, 1.0]) / np.sqrt(3.0)
        assert np.linalg.norm(st.vectors.conj().T @ u) <= 1e-8

    def test_corrections_lift_the_triple_degeneracy(self):
        # with the full boundary value no two-fold embedded state survives
        sv = np.sort(np.linalg.svd(
            characteristic_matrix(BIC3, E1), compute_uv=False))
        assert sv[1] > 1e-10 * sv[-1]
        scan = bound_states(BIC3, e_range=(E1 - 0.2, E1 + 0.2), samples=150)
        for st in scan.states:
            assert st.degeneracy == 1
            assert st.sigma_values[1] > 1e-10 * st.sigma_values[-1]
        for miss in scan.near_misses:
            assert miss.sigma_values[1] > 1e-10 * miss.sigma_values[-1]

    def test_range_must_stay_in_admissible_region(self):
        with pytest.raises(ConfigError):
            bound_states(WG_BELOW, e_range=(-1.0, 0.5))
        with pytest.raises(ConfigError):
            bound_states(WG_BELOW, e_range=(0.5, 0.2))


class TestResonances:
    def test_massless_single_atom_fixed_point(self):
        z_ref = complex(ML_RES.epsilon[0])
        for _ in range(400):
            z_ref = 1.0 - 1j * 0.4 ** 2 / (2.0 * np.sqrt(z_ref))
        search = resonances(ML_RES)
        assert not search.failures
        assert len(search.found) == 1
        r = search.found[0]
        assert abs(r.z - z_ref) <= 1e-8 * (1.0 + abs(z_ref))
        assert r.z.imag < 0
        assert r.residual <= 1e-9 * (1.0 + abs(r.z))

    def test_waveguide_pair_full_first_order(self):
        model = preset("waveguide", [0.0, 1.3], [2.0, 2.0], gamma=0.1,
                       m=1.0)
        search = resonances(model)
        assert not search.failures
        assert len(search.found) == 2
        found = sorted((r.z for r in search.found), key=lambda z: z.real)
        lam = np.linalg.eigvals(sigma_boundary(model, 2.0, "+").total)
        first = sorted((2.0 - v for v in lam), key=lambda z: z.real)
        weak = sorted(weak_coupling_resonances(model), key=lambda z: z.real)
        for z, f, w in zip(found, first, weak):
            assert z.imag < 0
            # eigenvalues of the full boundary matrix are accurate to
            # O(gamma^2); measured ~9e-3 at gamma = 0.1
            assert abs(z - f) <= 1.5e-2
            # the resonant-pair formula also drops the O(gamma) cut shift,
            # so here it is only qualitative
            assert abs(z - w) <= 5e-2
            det = characteristic_det(model, z, sheet="second")
            assert abs(det) <= 1e-8 * (1.0 + abs(z)) ** 2

    def test_massless_pair_weak_coupling_error_is_quartic(self):
        # with no cut term the resonant formula is the complete first
        # order, so its error falls by ~16 when g is halved
        errs = []
        for g in (0.5, 0.25):
            m = preset("massless-flat", [0.0, 0.9], [1.0, 1.0], g=g)
            search = resonances(m)
            assert not search.failures
            found = sorted((r.z for r in search.found),
                           key=lambda z: z.real)
            weak = sorted(weak_coupling_resonances(m),
                          key=lambda z: z.real)
            errs.append(max(abs(f - w) for f, w in zip(found, weak)))
        assert errs[0] <= 0.5 ** 4
        assert 10.0 <= errs[0] / errs[1] <= 22.0

    def test_failures_are_reported_not_raised(self):
        # a seed outside the admissible half plane cannot be continued
        search = resonances(WG_PAIR, seeds=[-2.0 - 0.5j])
        assert not search.found
        assert len(search.failures) == 1
        seed, reason = search.failures[0]
        assert seed == -2.0 - 0.5j
        assert reason


class TestWeakCoupling:
    def test_massless_single_atom_formula(self):
        vals = weak_coupling_resonances(ML_RES)
        expected = 1.0 - 1j * 0.4 ** 2 / (2.0 * np.sqrt(1.0))
        assert vals.shape == (1,)
        assert abs(vals[0] - expected) <= 1e-12

    def test_identical_energies_required(self):
        skew = preset("massless-flat", [0.0, 1.0], [1.0, 1.2], g=0.4)
        with pytest.raises(ConfigError):
            weak_coupling_resonances(skew)

    def test_below_edge_has_no_real_pair(self):
        below = preset("waveguide", [0.0], [0.5], gamma=0.3, m=1.0)
        with pytest.raises(EmptyRealPoleSet):
            weak_coupling_resonances(below)


class TestDominantSplit:
    def test_exact_reassembly_waveguide(self):
        split = dominant_split(WG_PAIR, 2.0)
        assert split.reassembly_residual <= 1e-10
        assert split.im_delta <= 1e-8
        assert np.all(np.abs(np.diag(split.b_matrix)) == 0.0)

    def test_z_total_matches_direct_weight(self):
        e = 2.0
        khat = np.sqrt(e * e - 1.0)
        z_direct = complex(WG_PAIR.gsq(khat)) / complex(WG_PAIR.domega(khat))
        split = dominant_split(WG_PAIR, e)
        assert abs(split.z_total - z_direct.real) <= 1e-10 * abs(z_direct)

    def test_correction_bound_holds(self):
        split = dominant_split(WG_PAIR, 2.0)
        d = WG_PAIR.positions[1] - WG_PAIR.positions[0]
        assert abs(split.b_matrix[0, 1]) <= split.correction_bound(d) * (
            1.0 + 1e-9)
        # the waveguide cut sits at height m = 1
        assert split.decay_rate == pytest.approx(1.0)

    def test_massless_has_no_corrections(self):
        split = dominant_split(ML_PAIR, 1.3)
        assert np.abs(split.b_matrix).max() <= 1e-12
        assert abs(split.delta) <= 1e-12
        assert split.alpha == 0.0
        lam_ref = (1.3 - 1.0) * 2.0 * np.sqrt(1.3) / 0.5 ** 2
        assert split.lam == pytest.approx(lam_ref, rel=1e-12)

    def test_below_edge_rejected(self):
        with pytest.raises(EmptyRealPoleSet):
            dominant_split(WG_PAIR, 0.5)


class TestResonantMomenta:
    def test_waveguide_catalog(self):
        out = resonant_momenta(BIC3, nu_max=2)
        assert [r.nu for r in out] == [1, 2]
        first, second = out
        assert first.momentum == pytest.approx(np.pi / 2.0)
        assert first.energy == pytest.approx(E1)
        assert "alternating" in first.constraint
        assert second.momentum == pytest.approx(np.pi)
        assert second.energy == pytest.approx(np.hypot(1.0, np.pi))
        assert "plain" in second.constraint

    def test_basis_spans_phase_matrix_nullspace(self):
        out = resonant_momenta(BIC3, nu_max=2)
        x = BIC3.positions
        for r in out:
            phi = np.exp(1j * r.momentum * np.abs(x[:, None] - x[None, :]))
            assert np.abs(phi @ r.basis).max() <= 1e-12
            gram = r.basis.T @ r.basis
            assert np.linalg.matrix_rank(gram, tol=1e-10) == 2

    def test_requires_equal_spacing(self):
        uneven = preset("waveguide", [0.0, 1.0, 2.5], [2.0] * 3, gamma=0.3)
        with pytest.raises(ConfigError):
            resonant_momenta(uneven)
        single = preset("waveguide", [0.0], [2.0], gamma=0.3)
        with pytest.raises(ConfigError):
            resonant_momenta(single)
