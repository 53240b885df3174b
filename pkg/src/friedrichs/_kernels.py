"""Numerical hot loops with an optional numba-compiled fast path.

Every kernel is written twice-in-one: ``build_kernels(jit=False)`` returns the
plain-Python versions, ``build_kernels(jit=True)`` returns the same bodies
wrapped with ``numba.njit``.  Both paths compute identical arithmetic so the
test suite can diff them directly.  The module-level ``KERNELS`` dict picks
the fast path automatically unless numba is missing or the environment
variable ``FRIEDRICHS_NO_JIT=1`` is set.

Kernels
-------
char_eval(lam, qs)
    Value and derivative of the characteristic polynomial of an n-atom phase
    matrix, evaluated through a three-term recurrence in the squared gap
    factors ``qs[j] = exp(2i*kappa*(x[j+1]-x[j]))``.  O(n) per evaluation and
    never forms the matrix.
aberth_solve(qs, guesses, tol, maxiter)
    Simultaneous root refinement (Aberth-Ehrlich) of all n eigenvalues of the
    phase matrix from the recurrence alone.
sweep_roots(qs_grid, guesses0, tol, maxiter)
    Aberth solve over a grid of momenta, warm-starting each solve from the
    previous momentum's roots so trajectories stay matched by continuity.
rk45_evolve(y0, eps, closure, omega, fk, w, t_eval, rtol, atol, h0, hmax,
            max_steps)
    Adaptive Dormand-Prince 4(5) propagation of the single-excitation
    amplitudes (atoms + discretized field modes), landing exactly on the
    requested sample times.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly on import
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def build_kernels(jit):
    """Build the kernel set; ``jit=True`` wraps each body with numba.njit."""
    if jit and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed; only jit=False is available")

    if jit:
        def wrap(fn):
            return numba.njit(fn, cache=False)
    else:
        def wrap(fn):
            return fn

    @wrap
    def char_eval(lam, qs):
        # det(Phi_n - lam*I) obeys, over atom index j with squared gap
        # factors q_j, the recurrence
        #   p_1 = 1 - lam
        #   p_j = [(1 - lam) - (1 + lam) q_j] p_{j-1} - lam^2 q_j p_{j-2}
        # with p_0 = 1; dp is the lambda-derivative carried alongside.
        n = qs.shape[0] + 1
        p_prev2 = 1.0 + 0.0j
        dp_prev2 = 0.0 + 0.0j
        p_prev = 1.0 - lam
        dp_prev = -1.0 + 0.0j
        for j in range(1, n):
            q = qs[j - 1]
            a = (1.0 - lam) - (1.0 + lam) * q
            da = -1.0 - q
            p = a * p_prev - lam * lam * q * p_prev2
            dp = (da * p_prev + a * dp_prev
                  - 2.0 * lam * q * p_prev2 - lam * lam * q * dp_prev2)
            p_prev2 = p_prev
            dp_prev2 = dp_prev
            p_prev = p
            dp_prev = dp
        return p_prev, dp_prev

    @wrap
    def aberth_solve(qs, guesses, tol, maxiter):
        # Simultaneous Newton with pairwise repulsion; returns the refined
        # roots and the iteration count (-1 when maxiter was exhausted).
        n = guesses.shape[0]
        z = guesses.copy()
        for it in range(maxiter):
            shift = 0.0
            for i in range(n):
                p, dp = char_eval(z[i], qs)
                if p == 0.0:
                    continue
                if dp == 0.0:
                    z[i] = z[i] + tol * (1.0 + abs(z[i]))
                    shift = shift + 1.0
                    continue
                newton = p / dp
                repel = 0.0 + 0.0j
                for j in range(n):
                    if j != i:
                        d = z[i] - z[j]
                        if d == 0.0:
                            d = 1e-30 + 0.0j
                        repel = repel + 1.0 / d
                denom = 1.0 - newton * repel
                if denom == 0.0:
                    w = newton
                else:
                    w = newton / denom
                z[i] = z[i] - w
                rel = abs(w) / (1.0 + abs(z[i]))
                if rel > shift:
                    shift = rel
            if shift < tol:
                return z, it + 1
        return z, -1

    @wrap
    def sweep_roots(qs_grid, guesses0, tol, maxiter):
        # Continuation over a momentum grid: each solve starts from the
        # previous converged roots (lightly splayed so coincident warm
        # starts cannot freeze the repulsion term).
        nk = qs_grid.shape[0]
        n = guesses0.shape[0]
        roots = np.empty((nk, n), np.complex128)
        iters = np.empty(nk, np.int64)
        warm = guesses0.copy()
        for m in range(nk):
            z, it = aberth_solve(qs_grid[m], warm, tol, maxiter)
            roots[m, :] = z
            iters[m] = it
            for i in range(n):
                angle = 2.0 * np.pi * (i + 0.37) / n
                jig = 1e-9 * (1.0 + abs(z[i]))
                warm[i] = z[i] + jig * (np.cos(angle) + 1j * np.sin(angle))
            if it < 0:
                for i in range(n):
                    warm[i] = guesses0[i]
        return roots, iters

    @wrap
    def _rhs(y, eps, closure, omega, fk, w, out):
        # Single-excitation equations of motion:
        #   i a_j' = eps_j a_j + sum_l closure_jl a_l + sum_i fk_ji w_i xi_i
        #   i xi_i' = omega_i xi_i + sum_j conj(fk_ji) a_j
        n = eps.shape[0]
        nm = omega.shape[0]
        for j in range(n):
            acc = eps[j] * y[j]
            for l in range(n):
                acc = acc + closure[j, l] * y[l]
            for i in range(nm):
                acc = acc + fk[j, i] * w[i] * y[n + i]
            out[j] = -1j * acc
        for i in range(nm):
            acc = omega[i] * y[n + i]
            for j in range(n):
                acc = acc + np.conj(fk[j, i]) * y[j]
            out[n + i] = -1j * acc

    @wrap
    def rk45_evolve(y0, eps, closure, omega, fk, w, t_eval, rtol, atol,
                    h0, hmax, max_steps):
        # Dormand-Prince 4(5) with FSAL; steps are clipped to land exactly
        # on every entry of t_eval.  Returns (samples, steps, status) with
        # status 0 = ok, 1 = step underflow, 2 = step budget exhausted.
        nt = t_eval.shape[0]
        dim = y0.shape[0]
        samples = np.empty((nt, dim), np.complex128)
        samples[0, :] = y0
        y = y0.copy()
        ynew = np.empty(dim, np.complex128)
        ytmp = np.empty(dim, np.complex128)
        k1 = np.empty(dim, np.complex128)
        k2 = np.empty(dim, np.complex128)
        k3 = np.empty(dim, np.complex128)
        k4 = np.empty(dim, np.complex128)
        k5 = np.empty(dim, np.complex128)
        k6 = np.empty(dim, np.complex128)
        k7 = np.empty(dim, np.complex128)
        _rhs(y, eps, closure, omega, fk, w, k1)

        a21 = 1.0 / 5.0
        a31 = 3.0 / 40.0
        a32 = 9.0 / 40.0
        a41 = 44.0 / 45.0
        a42 = -56.0 / 15.0
        a43 = 32.0 / 9.0
        a51 = 19372.0 / 6561.0
        a52 = -25360.0 / 2187.0
        a53 = 64448.0 / 6561.0
        a54 = -212.0 / 729.0
        a61 = 9017.0 / 3168.0
        a62 = -355.0 / 33.0
        a63 = 46732.0 / 5247.0
        a64 = 49.0 / 176.0
        a65 = -5103.0 / 18656.0
        b1 = 35.0 / 384.0
        b3 = 500.0 / 1113.0
        b4 = 125.0 / 192.0
        b5 = -2187.0 / 6784.0
        b6 = 11.0 / 84.0
        e1 = 71.0 / 57600.0
        e3 = -71.0 / 16695.0
        e4 = 71.0 / 1920.0
        e5 = -17253.0 / 339200.0
        e6 = 22.0 / 525.0
        e7 = -1.0 / 40.0

        t = t_eval[0]
        h_nat = h0
        idx = 1
        steps = 0
        status = 0
        while idx < nt:
            if steps >= max_steps:
                status = 2
                break
            t_next = t_eval[idx]
            h = h_nat
            if h > hmax:
                h = hmax
            hit = False
            if t + h >= t_next - 1e-15 * (1.0 + abs(t_next)):
                h = t_next - t
                hit = True
            if h < 1e-14 * (1.0 + abs(t)):
                status = 1
                break

            for i in range(dim):
                ytmp[i] = y[i] + h * (a21 * k1[i])
            _rhs(ytmp, eps, closure, omega, fk, w, k2)
            for i in range(dim):
                ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i])
            _rhs(ytmp, eps, closure, omega, fk, w, k3)
            for i in range(dim):
                ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i])
            _rhs(ytmp, eps, closure, omega, fk, w, k4)
            for i in range(dim):
                ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i]
                                      + a53 * k3[i] + a54 * k4[i])
            _rhs(ytmp, eps, closure, omega, fk, w, k5)
            for i in range(dim):
                ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i]
                                      + a64 * k4[i] + a65 * k5[i])
            _rhs(ytmp, eps, closure, omega, fk, w, k6)
            for i in range(dim):
                ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i]
                                      + b5 * k5[i] + b6 * k6[i])
            _rhs(ynew, eps, closure, omega, fk, w, k7)

            errsq = 0.0
            for i in range(dim):
                e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i]
                         + e5 * k5[i] + e6 * k6[i] + e7 * k7[i])
                ay = abs(y[i])
                an = abs(ynew[i])
                big = ay if ay > an else an
                sc = atol + rtol * big
                r = abs(e) / sc
                errsq = errsq + r * r
            err = np.sqrt(errsq / dim)

            steps = steps + 1
            if err <= 1.0:
                if hit:
                    t = t_next
                    samples[idx, :] = ynew
                    idx = idx + 1
                else:
                    t = t + h
                for i in range(dim):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = 0.9 * err ** -0.2
                    if fac > 5.0:
                        fac = 5.0
                    elif fac < 0.2:
                        fac = 0.2
                grown = h * fac
                if hit:
                    # the clip shortened this step artificially; never let it
                    # shrink the natural step
                    if grown > h_nat:
                        h_nat = grown
                else:
                    h_nat = grown
            else:
                fac = 0.9 * err ** -0.2
                if fac > 0.9:
                    fac = 0.9
                elif fac < 0.2:
                    fac = 0.2
                h_nat = h * fac
        return samples, steps, status

    return {
        "char_eval": char_eval,
        "aberth_solve": aberth_solve,
        "sweep_roots": sweep_roots,
        "rk45_evolve": rk45_evolve,
    }


_FALLBACK = None
_FAST = None


def get_kernels(jit=None):
    """Return the kernel dict; ``jit=None`` follows the environment default."""
    global _FALLBACK, _FAST
    if jit is None:
        jit = HAVE_NUMBA and os.environ.get("FRIEDRICHS_NO_JIT", "") != "1"
    if jit:
        if _FAST is None:
            _FAST = build_kernels(True)
        return _FAST
    if _FALLBACK is None:
        _FALLBACK = build_kernels(False)
    return _FALLBACK


KERNELS = get_kernels()
