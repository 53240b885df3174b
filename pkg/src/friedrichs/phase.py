"""Phase matrices of identical-atom arrays.

For atoms at positions x_1 < ... < x_n and momentum kappa = k + i eta the
phase matrix is ``Phi_jl = e^{i kappa |x_j - x_l|}``: the only object through
which the array geometry enters pole terms of the self-energy.  Its
characteristic polynomial obeys a three-term recurrence in the squared gap
factors ``q_j = e^{2 i kappa (x_{j+1} - x_j)}`` (it depends on the geometry
only through them), which evaluates in O(n) without forming the matrix and
feeds a simultaneous root solver for the spectrum.

Conventions and invariants used throughout:

  * det Phi = prod_j (1 - q_j): Phi is singular exactly when some gap factor
    equals one.
  * For real kappa the eigenvalues satisfy 0 <= Re lambda <= n.
  * For Im kappa -> +infinity, Phi -> identity and every eigenvalue of
    -i*Phi collapses into the Gershgorin disc centred at -i of radius
    (n-1) e^{-eta d_min}.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._kernels import get_kernels
from .errors import ConfigError, RootFindingStall


def _positions_array(positions):
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or pos.size == 0:
        raise ConfigError("positions must be a non-empty 1-d sequence")
    if np.any(np.diff(pos) <= 0):
        raise ConfigError("positions must be strictly increasing")
    return pos


def phase_matrix(positions, kappa):
    """Phi_jl = exp(i kappa |x_j - x_l|)."""
    pos = _positions_array(positions)
    d = np.abs(pos[:, None] - pos[None, :])
    return np.exp(1j * complex(kappa) * d)


def gap_factors(positions, kappa):
    """Squared gap factors q_j = exp(2 i kappa (x_{j+1} - x_j))."""
    pos = _positions_array(positions)
    return np.exp(2j * complex(kappa) * np.diff(pos)).astype(np.complex128)


def char_poly(positions, kappa, lam):
    """det(Phi - lam I) evaluated through the gap-factor recurrence."""
    kern = get_kernels()
    p, _ = kern["char_eval"](complex(lam), gap_factors(positions, kappa))
    return complex(p)


def det_closed(positions, kappa):
    """det Phi = prod_j (1 - q_j)."""
    return complex(np.prod(1.0 - gap_factors(positions, kappa)))


def cosine_sine_split(positions, kappa):
    """Split Phi = C + iS into damped cosine and sine matrices.

    With kappa = k + i eta: C_jl = e^{-eta d} cos(k d) and
    S_jl = e^{-eta d} sin(k d) at separation d = |x_j - x_l|.
    """
    pos = _positions_array(positions)
    k = complex(kappa).real
    eta = complex(kappa).imag
    d = np.abs(pos[:, None] - pos[None, :])
    damp = np.exp(-eta * d)
    return damp * np.cos(k * d), damp * np.sin(k * d)


def collapse_radius(positions, kappa):
    """Gershgorin radius of the spectrum of -i*Phi around -i.

    Every eigenvalue mu of -i*Phi satisfies |mu + i| <= radius; the radius
    decays like (n-1) e^{-eta d_min}, so growing Im kappa collapses the
    whole spectrum onto -i.
    """
    pos = _positions_array(positions)
    if pos.size == 1:
        return 0.0
    eta = complex(kappa).imag
    d = np.abs(pos[:, None] - pos[None, :])
    damp = np.exp(-eta * d)
    np.fill_diagonal(damp, 0.0)
    return float(damp.sum(axis=1).max())


def _circle_guesses(n, bound):
    ang = 2.0 * np.pi * (np.arange(n) + 0.37) / n
    return (1.0 + (bound + 1.0) * np.exp(1j * ang)).astype(np.complex128)


@dataclass(frozen=True)
class EigenSystem:
    """Spectrum of a phase matrix with clustered eigenvectors.

    values come from the recurrence-based simultaneous root solver;
    vectors are orthonormal within each near-degenerate cluster (columns of
    ``vectors``, aligned with ``values``); residuals are
    ``||(Phi - lambda_i) v_i||_2``.
    """

    kappa: complex
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    clusters: tuple
    matrix: np.ndarray

    def multiplicity(self, value, tol=1e-6):
        return int(sum(abs(v - value) <= tol * (1.0 + abs(value))
                       for v in self.values))


def eigen_system(positions, kappa, tol=1e-12, maxiter=400):
    """Eigenvalues and clustered eigenvectors of the phase matrix."""
    pos = _positions_array(positions)
    n = pos.size
    phi = phase_matrix(pos, kappa)
    if n == 1:
        return EigenSystem(kappa=complex(kappa), values=np.array([1.0 + 0j]),
                           vectors=np.eye(1, dtype=complex),
                           residuals=np.zeros(1), iterations=0,
                           clusters=((0,),), matrix=phi)
    kern = get_kernels()
    qs = gap_factors(pos, kappa)
    bound = float(np.abs(phi).sum(axis=1).max())
    roots, iters = kern["aberth_solve"](qs, _circle_guesses(n, bound),
                                        tol, maxiter)
    if iters < 0:
        raise RootFindingStall(
            f"eigenvalue iteration did not converge in {maxiter} steps "
            f"at kappa={kappa} (last iterates {np.round(roots, 6)})")

    # cluster near-coincident roots so eigenvectors of multiple eigenvalues
    # come out orthonormal and with the right multiplicity
    roots = roots[np.lexsort((roots.imag, roots.real))]
    scale = 1.0 + np.abs(roots).max()
    clusters = []
    current = [0]
    for i in range(1, n):
        if abs(roots[i] - roots[current[-1]]) <= 1e-6 * scale:
            current.append(i)
        else:
            clusters.append(tuple(current))
            current = [i]
    clusters.append(tuple(current))

    vectors = np.empty((n, n), complex)
    residuals = np.empty(n)
    for cluster in clusters:
        mu = roots[list(cluster)].mean()
        _, svals, vh = np.linalg.svd(phi - mu * np.eye(n))
        block = vh[n - len(cluster):].conj().T    # smallest singular vectors
        for j, idx in enumerate(cluster):
            v = block[:, len(cluster) - 1 - j]
            vectors[:, idx] = v
            residuals[idx] = float(
                np.linalg.norm(phi @ v - roots[idx] * v))
    return EigenSystem(kappa=complex(kappa), values=roots, vectors=vectors,
                       residuals=residuals, iterations=int(iters),
                       clusters=tuple(clusters), matrix=phi)


def eigenvalues(positions, kappa, tol=1e-12, maxiter=400):
    """Phase-matrix eigenvalues only (no vectors)."""
    return eigen_system(positions, kappa, tol=tol, maxiter=maxiter).values


@dataclass(frozen=True)
class TrajectorySweep:
    """Eigenvalue trajectories mu_s(k) of -i*Phi(k + i eta) along a k-grid.

    Rows of ``mu`` follow the grid; columns are individual trajectories,
    matched between consecutive grid points by nearest-neighbour assignment
    on top of the warm-started root solves.  ``ambiguous`` lists (row,
    trajectory) pairs where the matching step was large compared to the
    separation of trajectories, i.e. where column identity is uncertain
    (typically at closure points where trajectories touch).
    """

    k_values: np.ndarray
    eta: float
    mu: np.ndarray
    iterations: np.ndarray
    ambiguous: tuple


def trajectory_sweep(positions, k_values, eta=0.0, tol=1e-11, maxiter=400):
    """Sweep the spectrum of -i*Phi along real momenta k (+ i eta)."""
    pos = _positions_array(positions)
    n = pos.size
    ks = np.asarray(k_values, dtype=float)
    if ks.ndim != 1 or ks.size < 1:
        raise ConfigError("k_values must be a non-empty 1-d sequence")
    if n == 1:
        mu = np.full((ks.size, 1), -1j, dtype=complex)
        return TrajectorySweep(k_values=ks, eta=float(eta), mu=mu,
                               iterations=np.zeros(ks.size, dtype=int),
                               ambiguous=())
    gaps = np.diff(pos)
    kern = get_kernels()
    qs_grid = np.exp(2j * (ks[:, None] + 1j * eta) * gaps[None, :]) \
        .astype(np.complex128)
    bound = 1.0 + collapse_radius(pos, 1j * eta)
    roots, iters = kern["sweep_roots"](qs_grid, _circle_guesses(n, bound),
                                       tol, maxiter)
    bad = np.nonzero(iters < 0)[0]
    if bad.size:
        raise RootFindingStall(
            f"root sweep stalled at k={ks[bad[0]]} "
            f"({bad.size} of {ks.size} grid points failed)")
    mu = -1j * roots

    ambiguous = []
    for m in range(1, ks.size):
        prev = mu[m - 1]
        cost = np.abs(mu[m][None, :] - prev[:, None])
        rows, cols = linear_sum_assignment(cost)
        mu[m] = mu[m][cols]
        step = cost[rows, cols]
        sep = np.abs(prev[:, None] - prev[None, :])
        np.fill_diagonal(sep, np.inf)
        dmin = sep.min(axis=1)
        for i in range(n):
            if np.isfinite(dmin[i]) and step[i] > 0.45 * dmin[i]:
                ambiguous.append((m, i))
    return TrajectorySweep(k_values=ks, eta=float(eta), mu=mu,
                           iterations=iters.astype(int),
                           ambiguous=tuple(ambiguous))


def closure_period(positions, rel_tol=1e-9, max_denominator=1000):
    """Momentum period of the phase-matrix spectrum, if one exists.

    The spectrum depends on kappa only through the squared gap factors
    ``exp(2 i kappa g_j)``, so when the gaps are commensurate -- g_j = c m_j
    with coprime integers m_j -- the whole spectrum is periodic in real
    kappa with period pi / c.  Incommensurate gaps return None; gap ratios
    are only accepted as rational when a fraction with denominator up to
    max_denominator reproduces them to rel_tol, so finely tuned ratios
    beyond that resolution are treated as incommensurate too.
    """
    pos = _positions_array(positions)
    gaps = np.diff(pos)
    if gaps.size == 0:
        return None
    base = gaps[0]
    fracs = []
    for g in gaps:
        fr = Fraction(float(g / base)).limit_denominator(max_denominator)
        if abs(float(fr) - g / base) > rel_tol * max(1.0, g / base):
            return None
        fracs.append(fr)
    denom_lcm = 1
    for fr in fracs:
        denom_lcm = denom_lcm * fr.denominator \
            // gcd(denom_lcm, fr.denominator)
    ints = [int(fr * denom_lcm) for fr in fracs]
    g = 0
    for v in ints:
        g = gcd(g, v)
    c = base / denom_lcm * g
    return float(np.pi / c)
