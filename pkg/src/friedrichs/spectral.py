"""Discrete spectrum of the coupled atom-field Hamiltonian.

In the single-excitation sector the eigenvalue problem reduces to the n-by-n
nonlinear characteristic equation ``det(E - z - Sigma(z)) = 0`` with ``E``
the diagonal matrix of excitation energies:

  * real roots outside the continuum are ordinary bound states;
  * real roots inside it (where the boundary value ``Sigma(E+i0)`` must be
    used) are bound states in the continuum, possible only when the
    eigenvector also annihilates the anti-hermitian part;
  * complex roots of the continuation through the continuum onto the
    unphysical sheet are resonances.

The search routines work on the smallest singular value of the
characteristic matrix (real scans) or Newton iteration on the determinant
(complex roots), and they report near-misses and per-seed failures instead
of silently dropping them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .dispersion import real_solutions
from .errors import (
    ConfigError,
    EmptyRealPoleSet,
    NearSingular,
    NonConvergent,
)
from .model import Model
from .selfenergy import (
    SheetTracker,
    sigma_boundary,
    sigma_continuation,
    sigma_decomposed,
)


def _identical_epsilon(model):
    eps = model.epsilon
    if np.ptp(eps) > 1e-12 * (1.0 + np.abs(eps).max()):
        raise ConfigError(
            "this analysis needs identical excitation energies, got "
            f"{eps.tolist()}")
    return float(eps[0])


def characteristic_matrix(model, z, sheet="first", quad_config=None,
                          neglect_corrections=False):
    """E - z - Sigma(z) on the requested sheet (boundary value for real z).

    ``neglect_corrections`` keeps only the oscillatory (zero-family)
    pole terms of the boundary self-energy: the resonant-pair approximation
    in which embedded eigenvalues at commensurate momenta are exact.
    """
    zc = complex(z)
    n = model.n
    ident = np.eye(n)
    if zc.imag == 0.0 and real_solutions(model, zc.real):
        bres = sigma_boundary(model, zc.real, "+", quad_config)
        if neglect_corrections:
            sig = sum((t.term for t in bres.zero_terms),
                      np.zeros((n, n), complex))
        else:
            sig = bres.total
    elif neglect_corrections:
        sig = np.zeros((n, n), complex)
    elif sheet == "second":
        sig = sigma_continuation(model, zc, quad_config).total
    else:
        sig = sigma_decomposed(model, zc, quad_config).total
    return np.diag(model.epsilon).astype(complex) - zc * ident - sig


def characteristic_det(model, z, sheet="first", quad_config=None):
    """det(E - z - Sigma(z)); sheet='second' continues through the
    continuum."""
    return complex(np.linalg.det(
        characteristic_matrix(model, z, sheet, quad_config)))


# ---------------------------------------------------------------------------
# bound states


@dataclass(frozen=True)
class BoundState:
    """A real eigenvalue: energy, multiplicity and its eigenvectors.

    ``vectors`` has one orthonormal column per degenerate direction;
    ``sigma_values`` are all singular values of the characteristic matrix at
    the energy (ascending), so the gap between dropped and kept directions
    is visible; ``embedded`` marks bound states inside the continuum.
    """

    energy: float
    degeneracy: int
    vectors: np.ndarray
    sigma_values: np.ndarray
    embedded: bool
    residual: float

    def to_dict(self):
        return {
            "energy": self.energy,
            "degeneracy": self.degeneracy,
            "embedded": self.embedded,
            "residual": self.residual,
            "sigma_values": self.sigma_values.tolist(),
        }


@dataclass(frozen=True)
class NearMiss:
    energy: float
    sigma_min: float
    sigma_values: np.ndarray


@dataclass(frozen=True)
class BoundStateScan:
    states: tuple
    near_misses: tuple
    grid_energies: np.ndarray
    grid_sigma: np.ndarray


def _default_energy_range(model):
    eps = model.epsilon
    pad = 2.0 + 2.0 * max(1.0, model.dispersion.minimum)
    lo = float(eps.min()) - pad
    hi = float(eps.max()) + pad
    if model.dispersion.in_domain(complex(lo, 0.0)):
        return lo, hi
    # shrink into the admissible region (e.g. Re z > 0 for the waveguide)
    step = (hi - lo) / 512.0
    while lo < hi and not model.dispersion.in_domain(complex(lo, 0.0)):
        lo += step
    if lo >= hi:
        raise ConfigError("no admissible energies in the default range")
    return lo, hi


def _split_at_critical_values(model, lo, hi):
    """Scan segments of [lo, hi] with margins around each critical value."""
    cuts = []
    for v in model.dispersion.critical_values:
        vv = complex(v).real
        if lo < vv < hi:
            cuts.append(vv)
    segments = []
    left = lo
    for vv in sorted(cuts):
        margin = 1e-4 * (1.0 + abs(vv))
        if vv - margin > left:
            segments.append((left, vv - margin))
        left = vv + margin
    if left < hi:
        segments.append((left, hi))
    return segments


def _golden_refine(f, lo, hi, x0, xatol):
    """Shrink a minimum bracket around x0 down to xatol by golden section."""
    width = 64.0 * np.sqrt(np.finfo(float).eps) * (1.0 + abs(x0))
    a = max(lo, x0 - width)
    b = min(hi, x0 + width)
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = b - inv * (b - a)
    x2 = a + inv * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > xatol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def bound_states(model, e_range=None, samples=400, quad_config=None,
                 neglect_corrections=False, accept_tol=1e-8, near_tol=1e-3):
    """Scan for real eigenvalues by the smallest singular value.

    The grid avoids critical values of the dispersion (where solution pairs
    collide and the self-energy is singular); each local minimum of
    sigma_min is polished by bounded scalar minimization, then accepted as
    a bound state when sigma_min < accept_tol * sigma_max, with the
    degeneracy read off the number of collapsed singular values.  Minima
    below near_tol that fail acceptance are reported as near-misses.
    """
    if e_range is None:
        lo, hi = _default_energy_range(model)
    else:
        lo, hi = float(e_range[0]), float(e_range[1])
        if not (model.dispersion.in_domain(complex(lo, 0.0))
                and model.dispersion.in_domain(complex(hi, 0.0))):
            raise ConfigError(
                f"energy range [{lo}, {hi}] leaves the admissible region "
                f"({model.dispersion.domain_note})")
    if hi <= lo:
        raise ConfigError("empty energy range")

    def svals(e):
        d = characteristic_matrix(model, e, "first", quad_config,
                                  neglect_corrections)
        return np.linalg.svd(d, compute_uv=False)

    grid_e = []
    grid_s = []
    minima = []
    scan_scale = 0.0
    for a, b in _split_at_critical_values(model, lo, hi):
        count = max(8, int(samples * (b - a) / (hi - lo)))
        es = np.linspace(a, b, count)
        full = [svals(e) for e in es]
        scan_scale = max(scan_scale, max(sv[0] for sv in full))
        ss = np.array([sv[-1] for sv in full])
        grid_e.append(es)
        grid_s.append(ss)
        for i in range(1, count - 1):
            if ss[i] <= ss[i - 1] and ss[i] <= ss[i + 1]:
                minima.append((es[i - 1], es[i + 1]))
        # monotone runs ending at segment edges can hide a root just inside
        if count >= 2 and ss[0] < ss[1]:
            minima.append((es[0], es[1]))
        if count >= 2 and ss[-1] < ss[-2]:
            minima.append((es[-2], es[-1]))

    states = []
    misses = []
    seen = []
    for a, b in minima:
        res = minimize_scalar(lambda e: svals(e)[-1], bounds=(a, b),
                              method="bounded",
                              options={"xatol": 1e-12 * (1.0 + abs(b))})
        # the bounded minimizer stops at sqrt(eps) x-resolution, which on a
        # V-shaped minimum leaves sigma ~ slope * sqrt(eps); golden-section
        # refinement has no such floor
        e_star = _golden_refine(lambda e: svals(e)[-1], a, b, float(res.x),
                                1e-13 * (1.0 + abs(res.x)))
        if any(abs(e_star - s) <= 1e-9 * (1.0 + abs(e_star)) for s in seen):
            continue
        sv = svals(e_star)
        # the reference magnitude must survive n = 1, where the smallest
        # singular value is also the largest: lean on the whole scan
        smax = max(sv[0], scan_scale)
        smin = sv[-1]
        if smin <= accept_tol * smax:
            seen.append(e_star)
            deg = int(np.sum(sv <= accept_tol * smax))
            d = characteristic_matrix(model, e_star, "first", quad_config,
                                      neglect_corrections)
            _, _, vh = np.linalg.svd(d)
            vecs = vh[model.n - deg:].conj().T
            states.append(BoundState(
                energy=e_star, degeneracy=deg, vectors=vecs,
                sigma_values=sv[::-1].copy(),
                embedded=bool(real_solutions(model, e_star)),
                residual=float(smin)))
        elif smin <= near_tol * smax:
            seen.append(e_star)
            misses.append(NearMiss(energy=e_star, sigma_min=float(smin),
                                   sigma_values=sv[::-1].copy()))
    states.sort(key=lambda s: s.energy)
    misses.sort(key=lambda s: s.energy)
    return BoundStateScan(states=tuple(states), near_misses=tuple(misses),
                          grid_energies=np.concatenate(grid_e),
                          grid_sigma=np.concatenate(grid_s))


# ---------------------------------------------------------------------------
# resonances


@dataclass(frozen=True)
class Resonance:
    """Complex root of the continued characteristic equation."""

    z: complex
    vector: np.ndarray
    residual: float
    seed: complex
    iterations: int

    def to_dict(self):
        return {
            "z": [self.z.real, self.z.imag],
            "residual": self.residual,
            "seed": [self.seed.real, self.seed.imag],
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class ResonanceSearch:
    found: tuple
    failures: tuple       # (seed, reason) pairs


def resonances(model, seeds=None, quad_config=None, tol=1e-10, maxiter=60):
    """Newton search for roots of det(E - z - Sigma^II(z)) below the axis.

    Seeds default to the weak-coupling approximations when available (the
    bare excitation energies otherwise).  Roots with Im z > 1e-9 margin are
    rejected; failures are reported per seed, not raised, so one divergent
    seed cannot hide the others.
    """
    if seeds is None:
        try:
            seeds = list(weak_coupling_resonances(model))
        except (ConfigError, EmptyRealPoleSet):
            seeds = [complex(e, -1e-3 * (1.0 + abs(e)))
                     for e in model.epsilon]
    found = []
    failures = []
    n = model.n
    for seed in seeds:
        z = complex(seed)
        if z.imag > -1e-12:
            z = complex(z.real, min(z.imag, -1e-3 * (1.0 + abs(z))))
        try:
            tracker = SheetTracker(model, z, quad_config)

            def det_at(w):
                return complex(np.linalg.det(
                    np.diag(model.epsilon) - w * np.eye(n)
                    - tracker.sigma(w)))

            converged = False
            for it in range(maxiter):
                h = 1e-6 * (1.0 + abs(z))
                f0 = det_at(z)
                fp = det_at(z + h)
                fm = det_at(z - h)
                df = (fp - fm) / (2.0 * h)
                if df == 0.0:
                    raise NonConvergent("determinant derivative vanished")
                step = f0 / df
                z = z - step
                if abs(step) <= tol * (1.0 + abs(z)):
                    converged = True
                    break
            if not converged:
                raise NonConvergent(
                    f"Newton did not converge in {maxiter} iterations")
            if z.imag > 1e-9 * (1.0 + abs(z)):
                raise NonConvergent(
                    f"root {z} lies above the axis: not a resonance")
            dmat = np.diag(model.epsilon) - z * np.eye(n) - tracker.sigma(z)
            sv = np.linalg.svd(dmat, compute_uv=False)
            _, _, vh = np.linalg.svd(dmat)
            found.append(Resonance(
                z=z, vector=vh[-1].conj(), residual=float(sv[-1]),
                seed=complex(seed), iterations=it + 1))
        except Exception as exc:   # per-seed reporting by design
            failures.append((complex(seed), f"{type(exc).__name__}: {exc}"))
    unique = []
    for r in sorted(found, key=lambda r: (r.z.real, r.z.imag)):
        if all(abs(r.z - u.z) > 1e-8 * (1.0 + abs(r.z)) for u in unique):
            unique.append(r)
    return ResonanceSearch(found=tuple(unique), failures=tuple(failures))


def weak_coupling_resonances(model):
    """First-order resonances eps - 2*pi*i*Z*lambda_j(Phi) at k_hat(eps).

    Valid for identical atoms whose common energy lies in the continuum
    with a single real solution pair; lambda_j are the phase-matrix
    eigenvalues at the resonant momentum.
    """
    eps = _identical_epsilon(model)
    ks = real_solutions(model, eps)
    if not ks:
        raise EmptyRealPoleSet(
            f"no real momentum solves omega(k) = {eps}: the common energy "
            f"is outside the continuum")
    if len(ks) != 1:
        raise ConfigError(
            "weak-coupling form needs a single real solution pair, got "
            f"momenta {ks}")
    khat = ks[0]
    weight = complex(model.gsq(khat)) / complex(model.domega(khat))
    x = model.positions
    phi = np.exp(1j * khat * np.abs(x[:, None] - x[None, :]))
    lam = np.linalg.eigvals(phi)
    return eps - 2j * np.pi * weight * lam


# ---------------------------------------------------------------------------
# dominant-pole structure on the continuum


@dataclass(frozen=True)
class DominantSplit:
    """Self-energy boundary value organised around the resonant pair.

    With Z_tot the summed zero-family weight, the characteristic matrix
    factors as ``-2*pi*i*Z_tot * [sum_s (Z_s/Z_tot) Phi_s - i*Lambda + B]``:
    ``delta`` collects the level shift from the branch cut and damped
    poles, ``lam`` is the reduced detuning Lambda, and ``b_matrix`` the
    off-diagonal correction, bounded entrywise by
    ``alpha * exp(-decay_rate * d)``.
    """

    energy: float
    delta: float
    lam: float
    b_matrix: np.ndarray
    z_total: float
    alpha: float
    decay_rate: float
    im_delta: float
    reassembly_residual: float

    def correction_bound(self, distance):
        return self.alpha * np.exp(-self.decay_rate * np.asarray(distance))


def dominant_split(model, energy, quad_config=None):
    """Split the boundary characteristic matrix around the resonant term."""
    eps = _identical_epsilon(model)
    e = float(energy)
    bres = sigma_boundary(model, e, "+", quad_config)
    if not bres.zero_terms:
        raise EmptyRealPoleSet(
            f"E={e} has no real solution pair: nothing to split around")
    n = model.n
    z_raw = sum(t.weight for t in bres.zero_terms)
    if abs(z_raw.imag) > 1e-10 * (1.0 + abs(z_raw)):
        raise NearSingular(
            f"zero-family weight {z_raw} is not real at E={e}; the real "
            "solution pair is unreliable here")
    z_total = z_raw.real
    damped = sum((t.term for t in bres.plus_terms),
                 np.zeros((n, n), complex))
    m_corr = bres.contour + damped
    delta = complex(m_corr[0, 0])
    off = m_corr - np.diag(np.diag(m_corr))
    b_matrix = off / (2j * np.pi * z_total)
    lam = (e - eps + delta.real) / (2.0 * np.pi * z_total)

    # exact reassembly: E - e - Sigma^+ = -2*pi*i*Z_tot [resonant - i*lam + B]
    resonant = sum(((t.weight / z_total) * t.matrix
                    for t in bres.zero_terms),
                   np.zeros((n, n), complex))
    lhs = np.diag(model.epsilon).astype(complex) - e * np.eye(n) - bres.total
    rhs = -2j * np.pi * z_total * (
        resonant - 1j * lam * np.eye(n) + b_matrix
        + (delta.imag / (2.0 * np.pi * z_total)) * np.eye(n))
    reassembly = float(np.abs(lhs - rhs).max())

    # entrywise decay bound for the corrections
    cut_height = np.inf
    for anchor, direction in model.dispersion.branch_cuts:
        u = direction / abs(direction)
        if u.imag > 1e-12:
            cut_height = min(cut_height, complex(anchor).imag)
    plus_heights = [t.kappa.imag for t in bres.plus_terms]
    decay = min([cut_height] + plus_heights) if (
        np.isfinite(cut_height) or plus_heights) else np.inf
    scale_b = abs(bres.contour[0, 0]) + 2.0 * np.pi * sum(
        abs(t.weight) for t in bres.plus_terms)
    alpha = scale_b / (2.0 * np.pi * abs(z_total)) if np.isfinite(decay) \
        else 0.0
    return DominantSplit(
        energy=e, delta=float(delta.real), lam=float(lam),
        b_matrix=b_matrix, z_total=float(z_total.real), alpha=float(alpha),
        decay_rate=float(decay), im_delta=float(abs(delta.imag)),
        reassembly_residual=reassembly)


# ---------------------------------------------------------------------------
# commensurate momenta


@dataclass(frozen=True)
class ResonantMomentum:
    """Momentum nu*pi/gap where the phase matrix degenerates.

    At these momenta Phi collapses to rank one (all-ones for even nu,
    alternating signs for odd nu), so an (n-1)-fold degenerate block of
    candidate embedded eigenvalues opens at energy omega(k).  ``basis``
    spans it with nearest-neighbour pair vectors; the surviving amplitude
    patterns obey the parity sum rule recorded in ``constraint``.
    """

    nu: int
    momentum: float
    energy: float
    basis: np.ndarray
    constraint: str


def resonant_momenta(model, nu_max=4):
    """Candidate embedded-eigenvalue momenta of an equally spaced array."""
    x = model.positions
    if x.size < 2:
        raise ConfigError("resonant momenta need at least two atoms")
    gaps = np.diff(x)
    gap = float(gaps.mean())
    if np.ptp(gaps) > 1e-12 * gap:
        raise ConfigError("resonant momenta need equally spaced atoms")
    n = model.n
    out = []
    for nu in range(1, nu_max + 1):
        k = nu * np.pi / gap
        energy = complex(model.omega(k)).real
        sign = 1.0 if nu % 2 == 1 else -1.0
        basis = np.zeros((n, n - 1))
        for j in range(n - 1):
            basis[j, j] = 1.0 / np.sqrt(2.0)
            basis[j + 1, j] = sign / np.sqrt(2.0)
        constraint = ("alternating sum of amplitudes vanishes" if nu % 2 == 1
                      else "plain sum of amplitudes vanishes")
        out.append(ResonantMomentum(nu=nu, momentum=float(k), energy=energy,
                                    basis=basis, constraint=constraint))
    return out
