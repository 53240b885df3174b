"""Momentum solution enumeration, tracking, critical points."""

import math

import numpy as np
import pytest

from friedrichs import preset, principal_sqrt, model_from_dict
from friedrichs.dispersion import (
    SolutionFamily,
    complex_solutions,
    critical_points,
    real_solutions,
    track_solution,
)
from friedrichs.errors import (
    CriticalCollision,
    NearCriticalValue,
    SeedFailure,
    WindowTooSmall,
)

WG = preset("waveguide", [0.0], [2.0], m=1.0, gamma=2 * math.pi)
MF = preset("massless-flat", [0.0], [1.0], g=1.0)
QUARTIC = model_from_dict({
    "dispersion": {"name": "quartic", "params": {"a": 1.0}},
    "form_factor": {"name": "flat", "params": {"g": 1.0}},
    "positions": [0.0], "epsilon": [1.0]})


def test_real_solutions_waveguide():
    ks = real_solutions(WG, 2.0)
    assert len(ks) == 1
    assert abs(ks[0] - math.sqrt(3.0)) < 1e-12
    assert real_solutions(WG, 0.5) == []


def test_real_solutions_massless_and_quartic():
    ks = real_solutions(MF, 4.0)
    assert len(ks) == 1 and abs(ks[0] - 2.0) < 1e-12
    ks = real_solutions(QUARTIC, 16.0)
    assert len(ks) == 1 and abs(ks[0] - 2.0) < 1e-11


def test_real_solutions_window_too_small():
    with pytest.raises(WindowTooSmall):
        real_solutions(WG, 2.0, k_window=(0.0, 0.5))


def test_complex_solutions_waveguide_upper():
    z = 2.0 + 0.1j
    ss = complex_solutions(WG, z)
    assert len(ss.momenta) == 1
    exact = principal_sqrt(z * z - 1.0)
    assert abs(ss.momenta[0] - exact) < 1e-10
    assert ss.momenta[0].imag > 0
    assert max(ss.residuals) < 1e-10


def test_complex_solutions_massless_far():
    ss = complex_solutions(MF, 1j)
    exact = principal_sqrt(1j)
    assert abs(ss.momenta[0] - exact) < 1e-10


def test_complex_solutions_real_energy_families():
    # below the gap edge: single damped pair on the imaginary axis
    ss = complex_solutions(WG, 0.5)
    assert len(ss.momenta) == 1
    assert ss.families == [SolutionFamily.PLUS]
    assert abs(ss.momenta[0] - 1j * math.sqrt(0.75)) < 1e-12
    # above: one oscillatory pair
    ss = complex_solutions(WG, 2.0)
    assert ss.families == [SolutionFamily.ZERO]
    assert abs(ss.momenta[0] - math.sqrt(3.0)) < 1e-12


def test_complex_solutions_quartic_two_pairs():
    ss = complex_solutions(QUARTIC, 16.0)
    assert len(ss.momenta) == 2
    fams = sorted(f.value for f in ss.families)
    assert fams == ["plus", "zero"]
    vals = sorted(ss.momenta, key=lambda k: k.imag)
    assert abs(vals[0] - 2.0) < 1e-10
    assert abs(vals[1] - 2.0j) < 1e-10
    # and off the axis
    z = 16.0 + 4.0j
    ss2 = complex_solutions(QUARTIC, z)
    assert len(ss2.momenta) == 2
    for k in ss2.momenta:
        assert k.imag > 0
        assert abs(QUARTIC.omega(k) - z) < 1e-9


def test_complex_solutions_conjugate_reflection():
    z = 2.0 + 0.3j
    up = complex_solutions(WG, z)
    dn = complex_solutions(WG, np.conj(z))
    assert len(dn.momenta) == 1
    assert abs(dn.momenta[0] - np.conj(up.momenta[0])) < 1e-12
    assert dn.momenta[0].imag < 0


def test_complex_solutions_residual_random():
    rng = np.random.default_rng(11)
    for model in (WG, MF):
        lo = 0.2 if model is WG else -3.0
        for _ in range(25):
            z = complex(rng.uniform(lo, 4.0), rng.uniform(0.05, 2.0))
            ss = complex_solutions(model, z)
            assert len(ss.momenta) == model.dispersion.pair_count
            for k, res in zip(ss.momenta, ss.residuals):
                assert k.imag > 0
                assert res <= 1e-10 * (1 + abs(z))


def test_near_critical_value_guard():
    with pytest.raises(NearCriticalValue):
        complex_solutions(MF, 1e-10 + 0j)
    with pytest.raises(NearCriticalValue):
        complex_solutions(WG, 1.0 + 1e-12j)


def test_seed_failure_on_wrong_pair_count():
    bad = model_from_dict({
        "dispersion": {"name": "quartic", "params": {"a": 1.0}},
        "form_factor": {"name": "flat", "params": {"g": 1.0}},
        "positions": [0.0], "epsilon": [1.0], "pair_count": 3})
    with pytest.raises(SeedFailure):
        complex_solutions(bad, 16.0 + 4.0j)


def test_track_waveguide_descent():
    z0, z1 = 2.0 + 1.0j, 2.0 + 0.01j
    k0 = complex_solutions(WG, z0).momenta[0]
    path = track_solution(WG, k0, [z0, z1])
    exact = principal_sqrt(z1 * z1 - 1.0)
    assert abs(path.end - exact) < 1e-8
    # equipotential leg: Re omega stays pinned to Re z
    assert max(abs(u - 2.0) for u in path.u) < 1e-9


def test_track_sign_persistence_random_paths():
    rng = np.random.default_rng(5)
    for model in (WG, MF):
        lo = 0.3 if model is WG else -2.0
        for _ in range(20):
            z0 = complex(rng.uniform(lo, 3.0), rng.uniform(0.3, 2.0))
            k0 = complex_solutions(model, z0).momenta[0]
            nodes = [z0]
            for _ in range(3):
                nodes.append(complex(rng.uniform(lo, 3.0), rng.uniform(0.05, 2.0)))
            path = track_solution(model, k0, nodes)
            signs = {np.sign(k.imag) for k in path.momenta}
            assert signs == {1.0}


def test_track_into_critical_value_raises():
    z0 = 1.0 + 0.5j
    k0 = complex_solutions(MF, z0).momenta[0]
    with pytest.raises(CriticalCollision):
        track_solution(MF, k0, [z0, 0.0 + 0.0j])


def test_critical_points_presets():
    cps = critical_points(MF, (-1.0, 1.0, -0.5, 0.5))
    assert len(cps) == 1
    assert abs(cps[0].kappa) < 1e-9
    assert cps[0].order == 2
    assert abs(cps[0].value) < 1e-12

    cps = critical_points(WG, (-0.8, 0.8, -0.5, 0.5))
    assert len(cps) == 1
    assert abs(cps[0].kappa) < 1e-9
    assert abs(cps[0].value - 1.0) < 1e-12
    assert cps[0].order == 2

    cps = critical_points(QUARTIC, (-1.0, 1.0, -0.5, 0.5))
    assert len(cps) == 1
    assert cps[0].order == 4

    assert critical_points(WG, (2.0, 3.0, -0.2, 0.2)) == []
