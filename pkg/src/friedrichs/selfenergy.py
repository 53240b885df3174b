"""Self-energy matrices of an atom array coupled to a one-dimensional field.

Two independent evaluation routes are provided and kept strictly separate so
they can cross-validate each other:

``sigma_direct``
    Brute-force momentum integration of
    ``Sigma_jl(z) = \\int G(k) e^{ik(x_j-x_l)} / (omega(k) - z) dk``
    folded onto the half line.  Near the real axis the integrable spikes at
    ``omega(k) = Re z`` are handled with tanh-sinh panels; oscillatory tails
    use cosine-weighted quadrature.

``sigma_decomposed``
    Contour deformation: a term per momentum-space solution pair (residues,
    ``2*pi*i * Z * Phi`` with ``Z = G/omega'`` and phase matrix
    ``Phi_jl = e^{i kappa |x_j - x_l|}``) plus the wrapped branch-cut
    integral ``b(z)``.  Boundary values on the continuum, the jump across
    it, and the continuation through it to the unphysical side are all
    assembled from the same pieces.

Both routes return the full n-by-n matrix; entries depend on the pair only
through the separation, so values are computed once per distinct distance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad, tanhsinh

from .dispersion import (
    SolutionFamily,
    complex_solutions,
    real_solutions,
    track_solution,
)
from .errors import (
    ConfigError,
    ContourTooClose,
    NearCriticalValue,
    PoleOnPath,
    QuadratureNonConvergent,
)


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances and switching thresholds for the quadrature engine."""

    epsabs: float = 1e-12
    epsrel: float = 1e-10
    limit: int = 200
    panel_threshold: float = 1e-3   # |Im z| below which pole panels engage
    panel_width: float = 0.0        # 0 -> automatic per-pole width
    tail_start: float = 0.0         # 0 -> automatic


DEFAULT_QUAD = QuadConfig()


def _cquad(f, a, b, cfg, points=None):
    kw = {"epsabs": cfg.epsabs, "epsrel": cfg.epsrel, "limit": cfg.limit}
    if points is not None:
        kw["points"] = sorted(points)
    re, ere = quad(lambda x: complex(f(x)).real, a, b, **kw)
    im, eim = quad(lambda x: complex(f(x)).imag, a, b, **kw)
    return complex(re, im), ere + eim


def _ctanhsinh(f, a, b):
    res_re = tanhsinh(lambda x: np.real(f(x)), a, b,
                      atol=1e-13, rtol=1e-11, maxlevel=14)
    res_im = tanhsinh(lambda x: np.imag(f(x)), a, b,
                      atol=1e-13, rtol=1e-11, maxlevel=14)
    err = abs(res_re.error) + abs(res_im.error)
    val = complex(res_re.integral, res_im.integral)
    # the level-difference error estimate is very conservative for a pole
    # hugging the shared endpoint; accept on the estimate, not the flag
    if err > 1e-7 * (1.0 + abs(val)):
        raise QuadratureNonConvergent(
            f"tanh-sinh panel on [{a}, {b}]: estimated error {err:.2e}")
    return val, err


def _near_axis_poles(model, z, cfg):
    """Real momenta where omega(k) = Re z, for quadrature break points."""
    try:
        return real_solutions(model, complex(z).real)
    except NearCriticalValue:
        if abs(complex(z).imag) < cfg.panel_threshold:
            raise
        # far from the axis the integrand is smooth there anyway
        return []


def _entry_direct(model, z, d, cfg):
    """One matrix entry by quadrature: 2 * int_0^inf G cos(kd)/(omega-z) dk."""
    zc = complex(z)
    s = max(model.dispersion.scale, 1e-6)
    near = _near_axis_poles(model, zc, cfg)
    if zc.imag == 0.0 and near:
        raise PoleOnPath(
            f"E={zc.real} lies in the continuum; the momentum integral has "
            f"poles on the path (use the boundary-value evaluation)")

    def f(k):
        # vectorized: the panel quadrature evaluates on whole node arrays
        return np.asarray(model.gsq(k)) * np.cos(np.asarray(k) * d) \
            / (np.asarray(model.omega(k)) - zc)

    if cfg.tail_start > 0.0:
        tail_from = cfg.tail_start
    else:
        tail_from = max(10.0 * s, (2.0 * max(near) + 5.0 * s) if near else 0.0)

    collected = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)

        total = 0.0 + 0.0j
        err = 0.0
        if near and 0.0 < abs(zc.imag) < cfg.panel_threshold:
            # tanh-sinh panels astride each near-axis pole, adaptive
            # quadrature on the smooth segments in between
            ks = sorted(near)
            gaps = [b - a for a, b in zip(ks, ks[1:])]
            widths = []
            for i, kstar in enumerate(ks):
                w = cfg.panel_width if cfg.panel_width > 0.0 else min(
                    1.0 * s, 0.5 * kstar,
                    *(0.4 * g for g in (gaps[max(i - 1, 0):i + 1] or [np.inf])))
                widths.append(max(w, 1e-8 * s))
            cursor = 0.0
            for kstar, w in zip(ks, widths):
                lo, hi = kstar - w, kstar + w
                if lo > cursor:
                    v, e = _cquad(f, cursor, lo, cfg)
                    total += v
                    err += e
                v, e = _ctanhsinh(f, max(lo, cursor), kstar)
                total += v
                err += e
                v, e = _ctanhsinh(f, kstar, hi)
                total += v
                err += e
                cursor = hi
            if cursor < tail_from:
                v, e = _cquad(f, cursor, tail_from, cfg)
                total += v
                err += e
        else:
            pts = [k for k in near if 0.0 < k < tail_from] or None
            v, e = _cquad(f, 0.0, tail_from, cfg, points=pts)
            total += v
            err += e

        if d == 0.0:
            # algebraic tail: substitute u = 1/k
            def g(u):
                k = 1.0 / u
                return (np.asarray(model.gsq(k))
                        / (np.asarray(model.omega(k)) - zc)) / (u * u)

            v, e = _cquad(g, 0.0, 1.0 / tail_from, cfg)
            total += v
            err += e
        else:
            # oscillatory tail: cosine-weighted quadrature
            def tre(k):
                return (complex(model.gsq(k))
                        / (complex(model.omega(k)) - zc)).real

            def tim(k):
                return (complex(model.gsq(k))
                        / (complex(model.omega(k)) - zc)).imag

            kw = {"weight": "cos", "wvar": d,
                  "epsabs": max(cfg.epsabs, 1e-12), "limlst": 120,
                  "limit": cfg.limit}
            vre, ere = quad(tre, tail_from, np.inf, **kw)
            vim, eim = quad(tim, tail_from, np.inf, **kw)
            total += complex(vre, vim)
            err += ere + eim
        collected = list(caught)

    value = 2.0 * total
    err = 2.0 * err
    if collected and err > 1e-8 * (1.0 + abs(value)):
        raise QuadratureNonConvergent(
            f"momentum integral at z={zc}, d={d}: estimated error {err:.2e} "
            f"({collected[0].message})")
    return value


def sigma_direct(model, z, quad_config=None):
    """Self-energy matrix by brute-force momentum quadrature."""
    cfg = quad_config or DEFAULT_QUAD
    zc = complex(z)
    if not model.dispersion.in_domain(zc):
        raise ConfigError(
            f"z={zc} outside the admissible region "
            f"({model.dispersion.domain_note})")
    x = model.positions
    dmat = np.round(np.abs(x[:, None] - x[None, :]), 14)
    values = {d: _entry_direct(model, zc, d, cfg) for d in np.unique(dmat)}
    out = np.empty((model.n, model.n), complex)
    for j in range(model.n):
        for l in range(model.n):
            out[j, l] = values[dmat[j, l]]
    return out


# ---------------------------------------------------------------------------
# decomposition pieces


def _phase_matrix(positions, kappa):
    d = np.abs(positions[:, None] - positions[None, :])
    return np.exp(1j * complex(kappa) * d)


@dataclass(frozen=True)
class ResidueTerm:
    """Contribution of one solution pair: 2*pi*i * Z(kappa) * Phi(kappa)."""

    kappa: complex
    family: SolutionFamily
    weight: complex          # Z = G(kappa) / omega'(kappa)
    matrix: np.ndarray       # Phi_jl = exp(i kappa |x_j - x_l|)

    @property
    def term(self):
        return 2j * np.pi * self.weight * self.matrix

    def to_dict(self):
        return {
            "kappa": [self.kappa.real, self.kappa.imag],
            "family": self.family.value,
            "weight": [self.weight.real, self.weight.imag],
        }


def residue_term(model, kappa, family=SolutionFamily.PLUS):
    kappa = complex(kappa)
    weight = complex(model.gsq(kappa)) / complex(model.domega(kappa))
    return ResidueTerm(kappa=kappa, family=family, weight=weight,
                       matrix=_phase_matrix(model.positions, kappa))


def matrix_pairs(mat):
    """Serialize a complex matrix as nested [re, im] pairs."""
    m = np.asarray(mat, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def pairs_matrix(doc):
    """Inverse of matrix_pairs."""
    return np.array([[complex(v[0], v[1]) for v in row] for row in doc])


@dataclass(frozen=True)
class SigmaResult:
    """Decomposed self-energy: branch-cut part plus one term per pair."""

    z: complex
    total: np.ndarray
    contour: np.ndarray
    pole_terms: tuple
    method: str

    @property
    def pole_sum(self):
        if not self.pole_terms:
            return np.zeros_like(self.contour)
        return sum(t.term for t in self.pole_terms)

    def to_dict(self):
        return {
            "z": [self.z.real, self.z.imag],
            "method": self.method,
            "total": matrix_pairs(self.total),
            "contour": matrix_pairs(self.contour),
            "poles": [t.to_dict() for t in self.pole_terms],
        }


# ---------------------------------------------------------------------------
# branch-cut contribution


def _wg_cut_entry(z, d, gamma, m, cfg):
    """Closed-form wrapped-cut integral for the square-root dispersion with
    its matched inverse-quarter form factor.

    After substituting the integration variable so the pole pair sits on a
    rotated ray, the contribution per separation d is
    ``-(gamma/(pi m)) * int_0^{pi/2} exp(-m d R)/R dtheta`` with
    ``R = sqrt(1 + (z/m)^2 tan^2 theta)``; valid for Re z > 0.
    """
    zc = complex(z)
    if zc.real <= 1e-9 * (1.0 + abs(zc)):
        raise ContourTooClose(
            f"wrapped-cut form needs Re z > 0, got z={zc}")
    w2 = (zc / m) ** 2

    def h(theta):
        t = math.tan(theta)
        r = np.sqrt(1.0 + w2 * t * t)
        e = m * d * r
        if e.real > 700.0:
            return 0.0j
        return np.exp(-e) / r

    val, _ = _cquad(h, 0.0, 0.5 * math.pi, cfg)
    return -(gamma / (math.pi * m)) * val


def _wrap_cut_entry(model, z, d, cfg):
    """Numerically wrapped branch cuts for a general dispersion.

    Integrates the two-sided jump of G(kappa) e^{i kappa d}/(omega-z) along
    every cut ray that points into the upper half momentum plane.  The
    square-root behaviour at the cut tip is bypassed by detouring around it
    on a small circle (the integrand is analytic there); on the straight
    part the side offset enters smoothly and Richardson extrapolation
    removes it.
    """
    disp = model.dispersion
    s = max(disp.scale, 1e-6)
    zc = complex(z)
    total = 0.0 + 0.0j

    def f(kappa):
        return complex(model.gsq(kappa)) * np.exp(1j * kappa * d) \
            / (complex(model.omega(kappa)) - zc)

    for anchor, direction in disp.branch_cuts:
        u = direction / abs(direction)
        if u.imag <= 1e-12:
            continue          # only cuts enclosed by the upper closure
        nvec = 1j * u
        rho = 0.05 * s

        # guard: z too close to the image of the cut makes the jump singular
        probe = anchor + u * s * np.array([0.05, 0.2, 0.5, 1.0, 2.0, 5.0])
        for side in (+1.0, -1.0):
            w = np.array([complex(model.omega(p + side * 1e-6 * s * nvec))
                          for p in probe])
            if np.min(np.abs(w - zc)) < 1e-4 * (1.0 + abs(zc)):
                raise ContourTooClose(
                    f"z={zc} sits on the image of a branch cut")

        def straight(delta):
            def jmp(t):
                kap = anchor + t * u
                return (f(kap - delta * nvec) - f(kap + delta * nvec)) * u

            head, _ = _cquad(jmp, rho, 10.0 * s, cfg)

            def tail(v):
                t = 1.0 / v
                return jmp(t) * t * t

            tl, _ = _cquad(tail, 0.0, 1.0 / (10.0 * s), cfg)
            return head + tl

        d1 = straight(1e-6 * s)
        d2 = straight(5e-7 * s)

        theta0 = float(np.angle(u))

        def arc(theta):
            kap = anchor + rho * np.exp(1j * theta)
            return f(kap) * 1j * rho * np.exp(1j * theta)

        # clockwise near-circle from theta0 to theta0 - 2*pi around the tip
        a_ccw, _ = _cquad(arc, theta0 - 2.0 * np.pi, theta0, cfg)
        total += (2.0 * d2 - d1) + a_ccw
    return total


def contour_term(model, z, quad_config=None):
    """Branch-cut part b(z) of the decomposition (zero matrix if entire)."""
    cfg = quad_config or DEFAULT_QUAD
    zc = complex(z)
    n = model.n
    disp = model.dispersion
    if not disp.branch_cuts:
        return np.zeros((n, n), complex)
    x = model.positions
    dmat = np.round(np.abs(x[:, None] - x[None, :]), 14)
    if (model.preset_name == "waveguide"
            or (disp.name == "massive-sqrt"
                and model.form_factor.name == "massive-quarter-inverse"
                and model.form_factor.params.get("m") == disp.params["m"])):
        gamma = model.form_factor.params["gamma"]
        m = disp.params["m"]
        values = {d: _wg_cut_entry(zc, d, gamma, m, cfg)
                  for d in np.unique(dmat)}
    else:
        values = {d: _wrap_cut_entry(model, zc, d, cfg)
                  for d in np.unique(dmat)}
    out = np.empty((n, n), complex)
    for j in range(n):
        for l in range(n):
            out[j, l] = values[dmat[j, l]]
    return out


# ---------------------------------------------------------------------------
# assembled evaluations


def sigma_decomposed(model, z, quad_config=None):
    """Self-energy as branch-cut part plus one residue term per pair.

    Valid on the physical sheet away from the continuum; real z are accepted
    only below/outside it (inside, boundary values are two-sided: use
    ``sigma_boundary``).
    """
    cfg = quad_config or DEFAULT_QUAD
    zc = complex(z)
    if zc.imag == 0.0:
        if real_solutions(model, zc.real):
            raise PoleOnPath(
                f"E={zc.real} lies inside the continuum: the self-energy is "
                f"discontinuous there (use sigma_boundary)")
    sols = complex_solutions(model, zc)
    # representatives with Im kappa > 0 close the contour upward; for
    # Im z < 0 the stored representatives are the mirrored ones
    reps = []
    for k in sols.momenta:
        k = complex(k)
        if k.imag < 0.0:
            k = -k
        reps.append(k)
    fams = sols.families or [SolutionFamily.PLUS] * len(reps)
    terms = tuple(residue_term(model, k, fam)
                  for k, fam in zip(reps, fams))
    b = contour_term(model, zc, cfg)
    total = b + sum((t.term for t in terms),
                    np.zeros((model.n, model.n), complex))
    return SigmaResult(z=zc, total=total, contour=b, pole_terms=terms,
                       method="decomposed")


@dataclass(frozen=True)
class BoundaryResult:
    """Self-energy boundary value on the continuum, from one side.

    The damped (plus-family) terms are one-sided limits of analytic
    functions and agree on both sides; the oscillatory (zero-family) terms
    flip to their conjugate transpose below, producing the jump.
    """

    energy: float
    side: str
    total: np.ndarray
    contour: np.ndarray
    plus_terms: tuple
    zero_terms: tuple

    def to_dict(self):
        return {
            "energy": self.energy,
            "side": self.side,
            "total": matrix_pairs(self.total),
            "contour": matrix_pairs(self.contour),
            "plus_poles": [t.to_dict() for t in self.plus_terms],
            "zero_poles": [t.to_dict() for t in self.zero_terms],
        }


def sigma_boundary(model, energy, side="+", quad_config=None):
    """Self-energy at E +/- i0 assembled from the deformed representation."""
    cfg = quad_config or DEFAULT_QUAD
    if side not in ("+", "-"):
        raise ConfigError(f"side must be '+' or '-', got {side!r}")
    e = float(energy)
    sols = complex_solutions(model, complex(e, 0.0))
    plus_terms = []
    zero_terms = []
    for k, fam in zip(sols.momenta, sols.families):
        t = residue_term(model, k, fam)
        (zero_terms if fam is SolutionFamily.ZERO else plus_terms).append(t)
    b = contour_term(model, complex(e, 0.0), cfg)
    total = b + sum((t.term for t in plus_terms),
                    np.zeros((model.n, model.n), complex))
    for t in zero_terms:
        total = total + (t.term if side == "+" else t.term.conj().T)
    return BoundaryResult(energy=e, side=side, total=total, contour=b,
                          plus_terms=tuple(plus_terms),
                          zero_terms=tuple(zero_terms))


def sigma_jump(model, energy, quad_config=None):
    """Discontinuity Sigma(E+i0) - Sigma(E-i0) across the continuum."""
    above = sigma_boundary(model, energy, "+", quad_config)
    jump = np.zeros((model.n, model.n), complex)
    for t in above.zero_terms:
        jump = jump + (t.term - t.term.conj().T)
    return jump


def sigma_continuation(model, z, quad_config=None):
    """Self-energy continued through the continuum to Im z <= 0.

    The branch-cut part is analytic across the real axis and is reused as
    is; the residue momenta are tracked from an anchor above the axis down
    to z, following each solution onto the unphysical side.
    """
    cfg = quad_config or DEFAULT_QUAD
    zc = complex(z)
    if zc.imag > 0.0:
        res = sigma_decomposed(model, zc, cfg)
        return SigmaResult(z=zc, total=res.total, contour=res.contour,
                           pole_terms=res.pole_terms, method="continuation")
    s = max(model.dispersion.scale, 1e-6)
    height = 0.35 * (1.0 + abs(zc.imag)) * max(1.0, s)
    z0 = complex(zc.real, height)
    sols = complex_solutions(model, z0)
    nodes = np.linspace(z0, zc, 9)
    tracked = [track_solution(model, k, nodes).end for k in sols.momenta]
    terms = tuple(residue_term(model, k, SolutionFamily.PLUS)
                  for k in tracked)
    b = contour_term(model, zc, cfg)
    total = b + sum((t.term for t in terms),
                    np.zeros((model.n, model.n), complex))
    return SigmaResult(z=zc, total=total, contour=b, pole_terms=terms,
                       method="continuation")


class SheetTracker:
    """Incremental continuation of the residue momenta for z-scans.

    Holds the current z and its tracked solution representatives; each
    ``sigma`` call tracks them along the straight segment from the previous
    z, so Newton iterations on the continued sheet stay cheap and never lose
    the branch.
    """

    def __init__(self, model, z_start, quad_config=None):
        self.model = model
        self.cfg = quad_config or DEFAULT_QUAD
        zc = complex(z_start)
        s = max(model.dispersion.scale, 1e-6)
        if zc.imag > 0.0:
            z0 = zc
        else:
            z0 = complex(zc.real, 0.35 * (1.0 + abs(zc.imag)) * max(1.0, s))
        sols = complex_solutions(model, z0)
        self._z = z0
        self._reps = [complex(k) for k in sols.momenta]
        if zc != z0:
            self._move(zc)

    def _move(self, z):
        zc = complex(z)
        if zc == self._z:
            return
        nodes = np.linspace(self._z, zc, 5)
        self._reps = [track_solution(self.model, k, nodes).end
                      for k in self._reps]
        self._z = zc

    @property
    def momenta(self):
        return tuple(self._reps)

    def sigma(self, z):
        """Continued self-energy matrix at z (tracked from the last call)."""
        self._move(z)
        total = contour_term(self.model, self._z, self.cfg)
        for k in self._reps:
            total = total + residue_term(self.model, k).term
        return total
