"""Momentum-space analysis of the dispersion relation.

For z off the continuous spectrum the equation omega(kappa) = z has, inside
the admissible region, a fixed number of +/- solution pairs; one member of
each pair is kept as the representative.  Conventions:

  * Im z > 0: representatives lie in the open upper half momentum plane.
  * Im z = 0: real representatives are the positive solutions (family ZERO,
    these produce the boundary-value discontinuity); strictly complex
    representatives keep Im kappa > 0 (family PLUS).
  * Im z < 0: representatives are conjugates of those at conj(z), so the
    quartet symmetry {kappa, -kappa, conj kappa, -conj kappa} is explicit.

Solutions never cross the real momentum axis while z stays in the open
upper half plane (their imaginary part would have to pass through a zero of
the group velocity, which sits on the boundary); the tracker asserts this
sign persistence on every accepted step of such paths.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConfigError,
    CriticalCollision,
    NearCriticalValue,
    SeedFailure,
    StepUnderflow,
    WindowTooSmall,
)


class SolutionFamily(Enum):
    PLUS = "plus"     # strictly complex representative (exponentially damped)
    ZERO = "zero"     # real representative (oscillatory, boundary jump)


@dataclass
class SolutionSet:
    z: complex
    momenta: list
    families: list          # SolutionFamily per momentum for real z, else None
    residuals: list

    def plus(self):
        return [k for k, f in zip(self.momenta, self.families or [])
                if f is SolutionFamily.PLUS]

    def zero(self):
        return [k for k, f in zip(self.momenta, self.families or [])
                if f is SolutionFamily.ZERO]


@dataclass
class CriticalPoint:
    kappa: complex
    value: complex
    order: int


@dataclass
class SolutionPath:
    z_values: list = field(default_factory=list)
    momenta: list = field(default_factory=list)
    u: list = field(default_factory=list)    # Re omega along the path
    v: list = field(default_factory=list)    # Im omega along the path

    def append(self, z, kappa):
        self.z_values.append(complex(z))
        self.momenta.append(complex(kappa))
        self.u.append(complex(z).real)
        self.v.append(complex(z).imag)

    @property
    def end(self):
        return self.momenta[-1]


def _critical_guard(model, z, tol=1e-8):
    for v in model.dispersion.critical_values:
        if abs(complex(z) - v) < tol * (1.0 + abs(v)):
            raise NearCriticalValue(
                f"z={complex(z)} within {tol} of critical value {v}")


def real_solutions(model, E, k_window=None, samples=4001):
    """Nonnegative real momenta with omega(k) = E, by bracketed bisection.

    The window is auto-derived for monotone-looking dispersions by doubling
    until omega exceeds E; a caller-supplied window that provably misses a
    solution raises WindowTooSmall.
    """
    E = float(E)
    disp = model.dispersion
    if k_window is None:
        if E < disp.minimum:
            return []
        K = 4.0 * disp.scale
        while model.omega(K).real <= E:
            K *= 2.0
            if K > 1e12 * disp.scale:
                raise WindowTooSmall("auto window exceeded 1e12*scale")
        window = (0.0, K)
    else:
        window = (float(k_window[0]), float(k_window[1]))
        if window[1] <= window[0]:
            raise ConfigError("window must be increasing")
    grid = np.linspace(window[0], window[1], samples)
    vals = np.asarray(model.omega(grid)).real - E
    roots = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(grid[i])
        elif a * b < 0.0:
            roots.append(brentq(lambda k: model.omega(k).real - E,
                                grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    out = []
    for r in sorted(roots):
        if not out or r - out[-1] > 1e-10 * (1 + disp.scale):
            out.append(float(r))
    if not out and k_window is not None and E >= disp.minimum:
        if vals[0] * vals[-1] > 0 and not (vals.min() < 0.0 < vals.max()):
            raise WindowTooSmall(
                f"window {window} misses the solution of omega(k)={E} "
                f"(dispersion range starts at {disp.minimum})")
    return out


def _newton_momentum(model, kappa, z, tol, maxiter=12):
    """Newton iteration for omega(kappa) = z; returns (kappa, iterations or -1)."""
    for it in range(maxiter):
        f = model.omega(kappa) - z
        if abs(f) < tol:
            return kappa, it
        dw = model.domega(kappa)
        if abs(dw) < 1e-13:
            return kappa, -1
        step = f / dw
        if abs(step) > 1.0 + abs(kappa):
            return kappa, -1
        kappa = kappa - step
    f = model.omega(kappa) - z
    return kappa, (maxiter if abs(f) < tol else -1)


def _continue_solution(model, kappa, z_from, z_to, path=None, min_step=1e-12):
    """Predictor-corrector continuation of omega(kappa)=z along a segment."""
    z_from, z_to = complex(z_from), complex(z_to)
    vel_floor = 1e-10 * (1.0 + model.dispersion.scale)
    t, h = 0.0, 1.0
    z_cur = z_from
    tol = 1e-13 * (1.0 + abs(z_to) + abs(z_from))
    both_upper = z_from.imag > 0 and z_to.imag > 0
    sign0 = np.sign(kappa.imag) if both_upper and kappa.imag != 0 else 0.0
    while t < 1.0:
        h = min(h, 1.0 - t)
        z_next = z_from + (t + h) * (z_to - z_from)
        dw = model.domega(kappa)
        if abs(dw) < vel_floor:
            raise CriticalCollision(
                f"group velocity {abs(dw):.2e} at kappa={kappa} while tracking to {z_next}")
        pred = kappa + (z_next - z_cur) / dw
        cand, iters = _newton_momentum(model, pred, z_next, tol, maxiter=8)
        ok = iters >= 0 and abs(cand - kappa) < 0.75 * (1.0 + abs(kappa))
        if ok and model.dispersion.cut_distance(cand) < 1e-9:
            ok = False
        if not ok:
            h *= 0.5
            if h < min_step:
                if abs(model.domega(kappa)) < 1e-3 * (1.0 + model.dispersion.scale):
                    raise CriticalCollision(
                        f"group velocity collapsed near kappa={kappa} while "
                        f"tracking to {z_next}")
                raise StepUnderflow(
                    f"continuation stalled near z={z_next} (step {h:.1e})")
            continue
        if sign0 != 0.0 and z_next.imag > 0 and np.sign(cand.imag) != sign0:
            raise CriticalCollision(
                f"Im kappa sign flip at z={z_next}: tracked solution jumped pairs")
        kappa, z_cur, t = cand, z_next, t + h
        if path is not None:
            path.append(z_cur, kappa)
        if iters <= 2:
            h *= 1.6
    return kappa


def track_solution(model, kappa0, z_path):
    """Track one solution of omega(kappa)=z along consecutive z nodes.

    Returns a SolutionPath sampling every accepted continuation step.  Paths
    whose nodes all sit in the open upper half z-plane additionally enforce
    the sign persistence of Im kappa.
    """
    nodes = [complex(z) for z in z_path]
    if len(nodes) < 2:
        raise ConfigError("z_path needs at least two nodes")
    for node in nodes:
        for v in model.dispersion.critical_values:
            if abs(node - v) < 1e-9 * (1.0 + abs(v)):
                raise CriticalCollision(
                    f"path node {node} sits at critical value {v}: "
                    f"solution pairs collide there")
    kappa = complex(kappa0)
    kappa, it = _newton_momentum(model, kappa, nodes[0],
                                 1e-12 * (1 + abs(nodes[0])))
    if it < 0:
        raise SeedFailure(f"kappa0 does not solve omega(kappa)={nodes[0]}")
    path = SolutionPath()
    path.append(nodes[0], kappa)
    for a, b in zip(nodes, nodes[1:]):
        kappa = _continue_solution(model, kappa, a, b, path=path)
    return path


def _imag_axis_solutions(model, E):
    """Solutions on the positive imaginary momentum axis with omega real = E."""
    disp = model.dispersion
    ymax = None
    for anchor, direction in disp.branch_cuts:
        if abs(anchor.real) < 1e-12 and anchor.imag > 0 and direction.imag > 0:
            # search right up to the cut tip: solutions migrate into it as
            # E approaches the bottom of the spectrum
            ymax = (1.0 - 1e-10) * anchor.imag
    if ymax is None:
        ymax = 4.0 * disp.scale
        for _ in range(40):
            w = np.asarray(model.omega(1j * np.linspace(1e-6, ymax, 64)))
            if np.max(np.abs(w.imag)) > 1e-8 * (1 + np.max(np.abs(w))):
                return []       # omega not real on the axis, nothing to bracket
            if w.real.min() - E < 0 < w.real.max() - E or ymax > 1e9 * disp.scale:
                break
            ymax *= 2.0
    ys = np.linspace(1e-9 * disp.scale, ymax, 2001)
    vals = np.asarray(model.omega(1j * ys)).real - E
    out = []
    for i in range(len(ys) - 1):
        if vals[i] * vals[i + 1] < 0.0:
            y = brentq(lambda t: model.omega(1j * t).real - E,
                       ys[i], ys[i + 1], xtol=1e-14)
            out.append(1j * y)
    return out


def _dedupe(momenta, tol):
    out = []
    for k in momenta:
        if all(abs(k - o) > tol and abs(k + o) > tol for o in out):
            out.append(k)
    return out


def _grid_newton_solutions(model, z, have):
    """Fallback sweep: Newton from a coarse grid over the upper momentum plane."""
    disp = model.dispersion
    s = disp.scale
    tol = 1e-11 * (1 + abs(z))
    found = list(have)
    res = np.linspace(-6 * s, 6 * s, 13)
    ims = np.linspace(0.05 * s, 4 * s, 9)
    for re in res:
        for im in ims:
            seed = complex(re, im)
            if disp.cut_distance(seed) < 0.05 * s:
                continue
            cand, it = _newton_momentum(model, seed, z, tol, maxiter=25)
            if it < 0 or disp.cut_distance(cand) < 1e-6:
                continue
            if cand.imag < 0:
                cand = -cand
            if abs(model.omega(cand) - z) < tol:
                found = _dedupe(found + [cand], 1e-8 * (1 + s))
    return found


def complex_solutions(model, z):
    """One representative per solution pair of omega(kappa) = z.

    Real z get family tags (ZERO for real momenta, PLUS for damped ones);
    for complex z the representatives are continued from a real anchor
    energy along a two-leg path staying clear of critical values.
    """
    z = complex(z)
    disp = model.dispersion
    if not disp.in_domain(z):
        raise ConfigError(
            f"z={z} outside the admissible region ({disp.domain_note})")
    _critical_guard(model, z)
    r = disp.pair_count

    if z.imag < 0.0:
        mirror = complex_solutions(model, np.conj(z))
        return SolutionSet(
            z=z,
            momenta=[np.conj(k) for k in mirror.momenta],
            families=None,
            residuals=[abs(model.omega(np.conj(k)) - z) for k in mirror.momenta])

    if z.imag == 0.0:
        E = z.real
        momenta, families = [], []
        for k in real_solutions(model, E):
            momenta.append(complex(k))
            families.append(SolutionFamily.ZERO)
        for ik in _imag_axis_solutions(model, E):
            momenta.append(ik)
            families.append(SolutionFamily.PLUS)
        momenta2 = momenta
        if len(momenta) < r:
            momenta2 = _grid_newton_solutions(model, z, momenta)
            families = families + [SolutionFamily.PLUS] * (len(momenta2) - len(momenta))
        if len(momenta2) != r:
            raise SeedFailure(
                f"found {len(momenta2)} solution pairs of omega(kappa)={z}, "
                f"model declares {r}", found=momenta2)
        residuals = [abs(model.omega(k) - z) for k in momenta2]
        return SolutionSet(z=z, momenta=momenta2, families=families,
                           residuals=residuals)

    # complex z in the upper half plane: continue from a real anchor
    margin = 0.35 * (1.0 + abs(z.imag)) * max(1.0, disp.scale)
    e_anchor = z.real
    guards = sorted(set(disp.critical_values))
    for _ in range(8):
        if all(abs(e_anchor - v) >= margin for v in guards):
            break
        e_anchor = max([v for v in guards if abs(e_anchor - v) < margin]) + margin
    anchor = complex_solutions(model, e_anchor)
    waypoint = complex(e_anchor, z.imag)
    momenta = []
    for k in anchor.momenta:
        kk = _continue_solution(model, k, complex(e_anchor), waypoint)
        kk = _continue_solution(model, kk, waypoint, z)
        momenta.append(kk)
    momenta = _dedupe(momenta, 1e-9 * (1 + disp.scale))
    if len(momenta) < r:
        momenta = _grid_newton_solutions(model, z, momenta)
    if len(momenta) != r:
        raise SeedFailure(
            f"found {len(momenta)} solution pairs of omega(kappa)={z}, "
            f"model declares {r}", found=momenta)
    for k in momenta:
        if k.imag <= 0:
            raise CriticalCollision(
                f"representative {k} left the upper half plane for z={z}")
    residuals = [abs(model.omega(k) - z) for k in momenta]
    return SolutionSet(z=z, momenta=momenta, families=None, residuals=residuals)


def critical_points(model, region, grid=24):
    """Zeros of the group velocity inside a rectangle, with orders.

    region = (re_min, re_max, im_min, im_max) in the momentum plane.  Each
    zero's order (the number of solution pairs colliding there, i.e. the
    order of the first nonvanishing derivative of omega) is estimated from
    finite-difference derivative magnitudes.
    """
    re0, re1, im0, im1 = map(float, region)
    disp = model.dispersion
    s = disp.scale
    found = []
    for re in np.linspace(re0, re1, grid):
        for im in np.linspace(im0, im1, grid):
            kappa = complex(re, im)
            if disp.cut_distance(kappa) < 0.02 * s:
                continue
            ok = True
            # multiple zeros of omega' converge only linearly, so run long
            # and let the residual filter below decide; the FD step follows
            # |kappa| down so the quotient keeps contracting near the zero
            for _ in range(150):
                h = max(1e-5 * abs(kappa), 1e-10 * s)
                dw = model.domega(kappa)
                d2 = (model.domega(kappa + h) - model.domega(kappa - h)) / (2 * h)
                if abs(d2) < 1e-14:
                    # flat curvature is fatal only if the gradient has not
                    # converged yet (at a multiple zero both shrink together)
                    ok = abs(dw) <= 1e-8 * (1 + s)
                    break
                step = dw / d2
                kappa = kappa - step
                if abs(step) < 1e-13 * (1 + abs(kappa)):
                    break
            if not ok or not (re0 - 1e-9 <= kappa.real <= re1 + 1e-9
                              and im0 - 1e-9 <= kappa.imag <= im1 + 1e-9):
                continue
            if disp.cut_distance(kappa) < 1e-6 or abs(model.domega(kappa)) > 1e-8 * (1 + s):
                continue
            if all(abs(kappa - c) > 1e-7 * (1 + s) for c in found):
                found.append(kappa)
    out = []
    for kappa in sorted(found, key=lambda c: (abs(c), c.real, c.imag)):
        h = 1e-3 * max(s, abs(kappa))
        dp = model.domega
        d2 = (dp(kappa + h) - dp(kappa - h)) / (2 * h)
        d3 = (dp(kappa + h) - 2 * dp(kappa) + dp(kappa - h)) / h ** 2
        d4 = (dp(kappa + 2 * h) - 2 * dp(kappa + h) + 2 * dp(kappa - h)
              - dp(kappa - 2 * h)) / (2 * h ** 3)
        mags = [abs(d2), abs(d3), abs(d4)]
        norm = max(max(mags), 1e-30)
        order = 2
        for idx, mag in enumerate(mags):
            if mag > 1e-4 * norm:
                order = idx + 2
                break
        out.append(CriticalPoint(kappa=kappa, value=complex(model.omega(kappa)),
                                 order=order))
    return out
