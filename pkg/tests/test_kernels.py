"""Kernel correctness: recurrence vs dense algebra, jit path vs fallback."""

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import linear_sum_assignment

from friedrichs._kernels import HAVE_NUMBA, build_kernels, get_kernels

K = build_kernels(False)


def random_positions(rng, n, min_gap=0.05, span=4.0):
    gaps = min_gap + rng.uniform(0.0, span / max(n - 1, 1), size=max(n - 1, 0))
    pos = np.concatenate([[0.0], np.cumsum(gaps)])[:n]
    return pos


def phase_matrix_dense(kappa, positions):
    d = np.abs(positions[:, None] - positions[None, :])
    return np.exp(1j * kappa * d)


def gap_factors(kappa, positions):
    gaps = np.diff(positions)
    return np.exp(2j * kappa * gaps).astype(np.complex128)


def circle_guesses(n, center=1.0, radius=None):
    if radius is None:
        radius = n + 1.0
    ang = 2.0 * np.pi * (np.arange(n) + 0.37) / n
    return (center + radius * np.exp(1j * ang)).astype(np.complex128)


class TestCharEval:
    def test_matches_dense_determinant(self):
        rng = np.random.default_rng(11)
        for n in range(1, 11):
            pos = random_positions(rng, n)
            for _ in range(5):
                kappa = complex(rng.uniform(0.2, 4.0), rng.uniform(-0.3, 0.8))
                lam = complex(rng.normal(scale=2.0), rng.normal(scale=2.0))
                qs = gap_factors(kappa, pos)
                p, _ = K["char_eval"](lam, qs)
                phi = phase_matrix_dense(kappa, pos)
                det = np.linalg.det(phi - lam * np.eye(n))
                assert abs(p - det) <= 1e-9 * (1.0 + abs(det))

    def test_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(12)
        pos = random_positions(rng, 6)
        kappa = 1.3 + 0.05j
        qs = gap_factors(kappa, pos)
        for _ in range(8):
            lam = complex(rng.normal(), rng.normal())
            h = 1e-6
            _, dp = K["char_eval"](lam, qs)
            pp, _ = K["char_eval"](lam + h, qs)
            pm, _ = K["char_eval"](lam - h, qs)
            fd = (pp - pm) / (2.0 * h)
            assert abs(dp - fd) <= 1e-5 * (1.0 + abs(fd))

    def test_single_atom(self):
        qs = np.empty(0, np.complex128)
        p, dp = K["char_eval"](0.25 + 0.1j, qs)
        assert p == pytest.approx(0.75 - 0.1j)
        assert dp == pytest.approx(-1.0)

    def test_determinant_at_zero_is_gap_product(self):
        # det(Phi) = prod_j (1 - q_j), the closed form used elsewhere
        rng = np.random.default_rng(13)
        pos = random_positions(rng, 7)
        kappa = 2.1 + 0.2j
        qs = gap_factors(kappa, pos)
        p, _ = K["char_eval"](0.0 + 0.0j, qs)
        assert p == pytest.approx(np.prod(1.0 - qs), rel=1e-12)


class TestAberth:
    def test_matches_dense_eigenvalues(self):
        rng = np.random.default_rng(21)
        for n in (2, 3, 5, 8):
            for _ in range(4):
                pos = random_positions(rng, n)
                kappa = complex(rng.uniform(0.3, 3.0), rng.uniform(0.0, 0.4))
                qs = gap_factors(kappa, pos)
                roots, iters = K["aberth_solve"](
                    qs, circle_guesses(n), 1e-12, 300)
                assert iters >= 0
                ref = np.linalg.eigvals(phase_matrix_dense(kappa, pos))
                cost = np.abs(roots[:, None] - ref[None, :])
                rows, cols = linear_sum_assignment(cost)
                assert cost[rows, cols].max() <= 1e-8 * (1.0 + np.abs(ref).max())

    def test_degenerate_pair(self):
        # alternating-sign matrix at kappa*gap = pi has spectrum {0, 0, 3}
        pos = np.array([0.0, 1.0, 2.0])
        qs = gap_factors(np.pi + 0.0j, pos)
        roots, iters = K["aberth_solve"](qs, circle_guesses(3), 1e-10, 400)
        assert iters >= 0
        r = np.sort_complex(roots)
        assert abs(r[0]) <= 2e-8
        assert abs(r[1]) <= 2e-8
        assert abs(r[2] - 3.0) <= 1e-8

    def test_reports_nonconvergence(self):
        pos = np.array([0.0, 1.0, 2.0, 3.5])
        qs = gap_factors(1.7 + 0.1j, pos)
        _, iters = K["aberth_solve"](qs, circle_guesses(4), 1e-14, 2)
        assert iters == -1


class TestSweep:
    def test_warm_started_trajectories_are_continuous(self):
        pos = np.array([0.0, 1.0, 2.0])
        ks = np.linspace(0.5, 3.0, 201)
        qs_grid = np.stack([gap_factors(complex(k, 0.0), pos) for k in ks])
        roots, iters = K["sweep_roots"](qs_grid, circle_guesses(3), 1e-11, 300)
        assert (iters >= 0).all()
        jumps = np.abs(np.diff(roots, axis=0)).max(axis=1)
        assert jumps.max() < 0.2
        # after the first solve the warm start should keep iterations low
        assert np.median(iters[1:]) <= 40
        for idx in (0, 100, 200):
            ref = np.linalg.eigvals(phase_matrix_dense(ks[idx], pos))
            cost = np.abs(roots[idx][:, None] - ref[None, :])
            rows, cols = linear_sum_assignment(cost)
            assert cost[rows, cols].max() <= 1e-8 * (1.0 + np.abs(ref).max())


def make_system(rng, n, nm):
    eps = rng.uniform(0.5, 2.0, size=n)
    omega = rng.uniform(0.2, 5.0, size=nm)
    w = rng.uniform(0.01, 0.2, size=nm)
    fk = (rng.normal(size=(n, nm)) + 1j * rng.normal(size=(n, nm))) * 0.3
    closure = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    closure = 0.05 * (closure + closure.conj().T)
    y0 = np.zeros(n + nm, np.complex128)
    y0[0] = 1.0
    return eps, omega, w, fk.astype(np.complex128), closure.astype(np.complex128), y0


def dense_generator(eps, omega, w, fk, closure):
    n, nm = fk.shape
    gen = np.zeros((n + nm, n + nm), np.complex128)
    gen[:n, :n] = np.diag(eps) + closure
    gen[:n, n:] = fk * w[None, :]
    gen[n:, :n] = fk.conj().T
    gen[n:, n:] = np.diag(omega)
    return gen


class TestRK45:
    def test_free_atom_phase(self):
        eps = np.array([1.0])
        omega = np.empty(0)
        w = np.empty(0)
        fk = np.empty((1, 0), np.complex128)
        closure = np.zeros((1, 1), np.complex128)
        y0 = np.array([1.0 + 0.0j])
        t_eval = np.linspace(0.0, 10.0, 21)
        out, steps, status = K["rk45_evolve"](
            y0, eps, closure, omega, fk, w, t_eval,
            1e-10, 1e-12, 0.01, 1.0, 100000)
        assert status == 0
        ref = np.exp(-1j * t_eval)
        assert np.abs(out[:, 0] - ref).max() <= 1e-8

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(31)
        eps, omega, w, fk, closure, y0 = make_system(rng, 2, 5)
        gen = dense_generator(eps, omega, w, fk, closure)
        t_eval = np.array([0.0, 0.7, 1.3, 2.2, 3.0])
        out, _, status = K["rk45_evolve"](
            y0, eps, closure, omega, fk, w, t_eval,
            1e-9, 1e-12, 0.01, 1.0, 100000)
        assert status == 0
        for i, t in enumerate(t_eval):
            ref = expm(-1j * gen * t) @ y0
            assert np.abs(out[i] - ref).max() <= 1e-6

    def test_weighted_norm_is_conserved(self):
        rng = np.random.default_rng(32)
        eps, omega, w, fk, closure, y0 = make_system(rng, 2, 8)
        t_eval = np.linspace(0.0, 10.0, 11)
        out, _, status = K["rk45_evolve"](
            y0, eps, closure, omega, fk, w, t_eval,
            1e-10, 1e-13, 0.01, 1.0, 200000)
        assert status == 0
        n = eps.size
        norms = (np.abs(out[:, :n]) ** 2).sum(axis=1) \
            + (w[None, :] * np.abs(out[:, n:]) ** 2).sum(axis=1)
        assert np.abs(norms - norms[0]).max() <= 1e-8

    def test_step_budget_status(self):
        rng = np.random.default_rng(33)
        eps, omega, w, fk, closure, y0 = make_system(rng, 2, 5)
        t_eval = np.array([0.0, 50.0])
        _, _, status = K["rk45_evolve"](
            y0, eps, closure, omega, fk, w, t_eval,
            1e-12, 1e-14, 1e-4, 1e-3, 10)
        assert status == 2

    def test_single_sample_returns_initial_state(self):
        eps = np.array([1.0])
        y0 = np.array([0.5 + 0.5j])
        out, steps, status = K["rk45_evolve"](
            y0, eps, np.zeros((1, 1), np.complex128), np.empty(0),
            np.empty((1, 0), np.complex128), np.empty(0),
            np.array([0.0]), 1e-9, 1e-12, 0.01, 1.0, 100)
        assert status == 0 and steps == 0
        assert out[0, 0] == y0[0]


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
class TestJitParity:
    def test_char_and_roots_match_fallback(self):
        fast = build_kernels(True)
        rng = np.random.default_rng(41)
        pos = random_positions(rng, 5)
        kappa = 1.9 + 0.12j
        qs = gap_factors(kappa, pos)
        lam = 0.4 - 0.7j
        p0, dp0 = K["char_eval"](lam, qs)
        p1, dp1 = fast["char_eval"](lam, qs)
        assert abs(p0 - p1) <= 1e-13 * (1.0 + abs(p0))
        assert abs(dp0 - dp1) <= 1e-13 * (1.0 + abs(dp0))
        r0, _ = K["aberth_solve"](qs, circle_guesses(5), 1e-12, 300)
        r1, _ = fast["aberth_solve"](qs, circle_guesses(5), 1e-12, 300)
        assert np.abs(np.sort_complex(r0) - np.sort_complex(r1)).max() <= 1e-10

    def test_rk45_matches_fallback(self):
        fast = build_kernels(True)
        rng = np.random.default_rng(42)
        eps, omega, w, fk, closure, y0 = make_system(rng, 2, 4)
        t_eval = np.linspace(0.0, 2.0, 5)
        args = (y0, eps, closure, omega, fk, w, t_eval,
                1e-9, 1e-12, 0.01, 1.0, 100000)
        out0, _, s0 = K["rk45_evolve"](*args)
        out1, _, s1 = fast["rk45_evolve"](*args)
        assert s0 == 0 and s1 == 0
        assert np.abs(out0 - out1).max() <= 1e-10

    def test_default_selection_honors_env(self, monkeypatch):
        monkeypatch.setenv("FRIEDRICHS_NO_JIT", "1")
        kset = get_kernels()
        assert not hasattr(kset["char_eval"], "py_func")
        monkeypatch.delenv("FRIEDRICHS_NO_JIT")
        kset = get_kernels()
        assert hasattr(kset["char_eval"], "py_func")
