"""Real-time dynamics of the single-excitation sector.

Two independent routes to the same physics:

  * a discretized-field ODE (``field_grid`` + ``evolve_ode``) integrating
    the coupled atom/mode amplitudes with an adaptive Runge-Kutta kernel;
  * an inverse transform of the resolvent (``survival_amplitude``) along a
    line just above the real axis, with the uncoupled part subtracted and
    transformed in closed form so the numerical piece decays like 1/x^2.

Their agreement is a strong end-to-end check, since one never touches the
self-energy and the other never touches the Hamiltonian.  ``mode_decompose``
extracts complex-pole weights so short lists of resonances can be compared
against either route.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from ._kernels import get_kernels
from .dispersion import real_solutions
from .errors import (
    ConfigError,
    GridTooCoarse,
    NearSingular,
    NonConvergent,
    PoleCircleCrossesCut,
    StepUnderflow,
    TruncationDominated,
)
from .selfenergy import SheetTracker, sigma_decomposed


# ---------------------------------------------------------------------------
# field discretization


@dataclass(frozen=True)
class FieldGrid:
    """Momentum discretization of the field for direct time evolution.

    ``nodes`` are trapezoid points on [-cutoff, cutoff], refined around the
    momenta resonant with the atomic energies; ``closure`` is the static
    level-shift matrix standing in for the removed modes beyond the cutoff;
    ``recurrence_time`` estimates when the discrete bath echoes back and
    the evolution stops mimicking the continuum.
    """

    nodes: np.ndarray
    weights: np.ndarray
    omega_values: np.ndarray
    couplings: np.ndarray      # (n_atoms, n_nodes)
    closure: np.ndarray        # (n_atoms, n_atoms)
    cutoff: float
    recurrence_time: float


def _tail_closure_entry(model, cutoff, distance):
    """-2 * integral_{k > cutoff} G(k) cos(k d) / omega(k) dk (both tails)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        if distance == 0.0:
            val, _ = quad(
                lambda k: float(model.gsq(k)) / float(model.omega(k).real),
                cutoff, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
        else:
            val, _ = quad(
                lambda k: float(model.gsq(k)) / float(model.omega(k).real),
                cutoff, np.inf, weight="cos", wvar=distance, limlst=100,
                epsabs=1e-13, epsrel=1e-11, limit=200)
    if not np.isfinite(val):
        raise ConfigError(
            "field closure integral beyond the cutoff does not converge; "
            "the coupling does not fall off fast enough")
    return -2.0 * val


def field_grid(model, cutoff, fine_spacing, coarse_spacing=None,
               halfwidth=0.5):
    """Build the mode grid: coarse background plus windows at resonance.

    The windows are centred on the real momenta solving omega(k) = eps_j
    (both signs), where the emitted wavepacket concentrates; their node
    spacing controls the recurrence time reported on the grid.
    """
    cutoff = float(cutoff)
    fine = float(fine_spacing)
    if coarse_spacing is None:
        coarse_spacing = 10.0 * fine
    coarse = float(coarse_spacing)
    if not (0.0 < fine <= coarse):
        raise ConfigError("need 0 < fine_spacing <= coarse_spacing")

    focus = []
    for e in np.unique(model.epsilon):
        for k in real_solutions(model, float(e)):
            focus.extend((k, -k))
    windows = []
    for k0 in sorted(set(focus)):
        if abs(k0) + halfwidth > cutoff:
            raise ConfigError(
                f"cutoff {cutoff} does not cover the resonant window around "
                f"k = {k0} (halfwidth {halfwidth})")
        windows.append((k0 - halfwidth, k0 + halfwidth))

    pieces = [np.arange(-cutoff, cutoff + 0.5 * coarse, coarse)]
    for lo, hi in windows:
        pieces.append(np.arange(lo, hi + 0.5 * fine, fine))
    nodes = np.sort(np.concatenate(pieces))
    keep = np.concatenate(([True], np.diff(nodes) > 0.45 * fine))
    nodes = nodes[keep]

    weights = np.empty_like(nodes)
    weights[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    weights[0] = 0.5 * (nodes[1] - nodes[0])
    weights[-1] = 0.5 * (nodes[-1] - nodes[-2])

    wvals = np.array([float(model.omega(k).real) for k in nodes])
    prof = np.array([float(model.f(k)) for k in nodes])
    couplings = prof[None, :] * np.exp(
        1j * nodes[None, :] * model.positions[:, None])

    dmat = np.abs(model.positions[:, None] - model.positions[None, :])
    closure = np.zeros((model.n, model.n))
    cache = {}
    for j in range(model.n):
        for l in range(model.n):
            d = round(float(dmat[j, l]), 14)
            if d not in cache:
                cache[d] = _tail_closure_entry(model, cutoff, d)
            closure[j, l] = cache[d]

    in_window = np.zeros(nodes.size, bool)
    for lo, hi in windows:
        in_window |= (nodes >= lo - 1e-12) & (nodes <= hi + 1e-12)
    pair_mask = in_window[1:] & in_window[:-1]
    if pair_mask.any():
        dw = np.abs(np.diff(wvals))[pair_mask]
        recurrence = 2.0 * np.pi / dw.max()
    else:
        recurrence = np.inf   # nothing resonant: no decay to spoil
    return FieldGrid(nodes=nodes, weights=weights, omega_values=wvals,
                     couplings=couplings.astype(np.complex128),
                     closure=closure.astype(np.complex128),
                     cutoff=cutoff, recurrence_time=float(recurrence))


# ---------------------------------------------------------------------------
# direct integration


@dataclass(frozen=True)
class EvolveResult:
    times: np.ndarray
    atoms: np.ndarray          # (nt, n_atoms)
    field: np.ndarray          # (nt, n_nodes)
    norms: np.ndarray          # conserved weighted norm per sample
    steps: int

    def survival(self, a0):
        """Overlap of the atomic amplitudes with a reference vector."""
        ref = np.asarray(a0, dtype=np.complex128)
        return self.atoms @ ref.conj()


def evolve_ode(model, grid, a0, t_eval, rtol=1e-9, atol=1e-12,
               max_steps=2_000_000, jit=None):
    """Integrate the coupled amplitude equations on the given grid.

    Warns with GridTooCoarse when the requested horizon exceeds the grid's
    recurrence time; raises StepUnderflow / NonConvergent on integrator
    failure.
    """
    a0 = np.asarray(a0, dtype=np.complex128)
    if a0.shape != (model.n,):
        raise ConfigError(f"a0 must have shape ({model.n},), got {a0.shape}")
    ts = np.asarray(t_eval, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(np.diff(ts) <= 0.0):
        raise ConfigError("t_eval must be a strictly increasing 1-d array")
    if ts[-1] > grid.recurrence_time:
        warnings.warn(GridTooCoarse(
            f"horizon {ts[-1]} exceeds the grid recurrence time "
            f"{grid.recurrence_time:.3g}; refine fine_spacing"))

    nk = grid.nodes.size
    y0 = np.concatenate([a0, np.zeros(nk, np.complex128)])
    lam = max(np.abs(grid.omega_values).max(initial=0.0),
              np.abs(model.epsilon).max()
              + np.abs(grid.closure).sum(axis=1).max()) + 1.0
    hmax = 2.5 / lam
    span = ts[-1] - ts[0]
    if span > 0.0:
        hmax = min(hmax, span)
    h0 = 0.1 * hmax
    kern = get_kernels(jit)
    samples, steps, status = kern["rk45_evolve"](
        y0, model.epsilon.astype(np.complex128), grid.closure,
        grid.omega_values, grid.couplings, grid.weights, ts,
        float(rtol), float(atol), h0, hmax, int(max_steps))
    if status == 1:
        raise StepUnderflow("step size underflow in the field evolution")
    if status == 2:
        raise NonConvergent(
            f"step budget {max_steps} exhausted at horizon {ts[-1]}")
    atoms = samples[:, :model.n]
    field = samples[:, model.n:]
    norms = (np.abs(atoms) ** 2).sum(axis=1) \
        + (np.abs(field) ** 2 * grid.weights[None, :]).sum(axis=1)
    return EvolveResult(times=ts, atoms=atoms, field=field, norms=norms,
                        steps=int(steps))


# ---------------------------------------------------------------------------
# resolvent route


def resolvent_amplitude(model, z, a0, quad_config=None):
    """a0^dagger [E - z - Sigma(z)]^{-1} a0 on the first sheet."""
    a0 = np.asarray(a0, dtype=np.complex128)
    sig = sigma_decomposed(model, z, quad_config).total
    d = np.diag(model.epsilon).astype(complex) - complex(z) * np.eye(model.n)
    d -= sig
    sv = np.linalg.svd(d, compute_uv=False)
    if sv[-1] < 1e-13 * sv[0]:
        raise NearSingular(
            f"characteristic matrix at z={complex(z)} is singular to "
            "working precision (eigenvalue or resonance nearby)")
    return complex(np.vdot(a0, np.linalg.solve(d, a0)))


def _filon_segments(xs, fs, t):
    """integral e^{-i x t} f(x) dx with f piecewise linear on uniform xs."""
    h = xs[1] - xs[0]
    theta = t * h
    phi = -1j * theta
    if abs(theta) < 1e-4:
        # series in theta; error O(theta^2) relative, below 1e-8 here
        a_w = 0.5 - 1j * theta / 6.0
        b_w = 0.5 - 1j * theta / 3.0
    else:
        e = np.exp(phi)
        b_w = (e * (phi - 1.0) + 1.0) / phi ** 2
        a_w = (e - 1.0) / phi - b_w
    base = np.exp(-1j * t * xs[:-1])
    return h * np.sum(base * (fs[:-1] * a_w + fs[1:] * b_w))


def survival_amplitude(model, a0, t_eval, radius=None, delta=None,
                       spacing=None, target=1e-4, quad_config=None):
    """Survival amplitude by inverse transform of the resolvent.

    The uncoupled resolvent is subtracted and transformed exactly, the
    remainder (which decays like 1/x^2) is integrated along the lines
    Im z = +/- delta with a linear-interpolation oscillatory rule, and the
    lower line is obtained from the upper by symmetry.  Raises
    TruncationDominated when the discarded tails are estimated to exceed
    ``target``.  Needs a model whose self-energy is available along the
    whole line (the waveguide preset is restricted to Re z > 0: use
    evolve_ode there).
    """
    a0 = np.asarray(a0, dtype=np.complex128)
    if a0.shape != (model.n,):
        raise ConfigError(f"a0 must have shape ({model.n},), got {a0.shape}")
    ts = np.asarray(t_eval, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(ts < 0.0):
        raise ConfigError("t_eval must be a 1-d array of times >= 0")
    t_max = max(float(ts.max()), 1e-3)
    if delta is None:
        delta = min(1.0, max(1e-3, 1.0 / t_max))
    delta = float(delta)
    scale_v = max(1.0, float(np.abs(model.epsilon).max()),
                  float(model.dispersion.minimum))
    if radius is None:
        radius = 30.0 * scale_v
    radius = float(radius)
    if spacing is None:
        spacing = min(np.pi / (4.0 * t_max), delta / 8.0)
    count = int(np.ceil(2.0 * radius / spacing)) + 1
    xs = np.linspace(-radius, radius, count)
    for x in (xs[0], xs[-1]):
        if not model.dispersion.in_domain(complex(x, delta)):
            raise ConfigError(
                "the transform line leaves the model's admissible region "
                f"({model.dispersion.domain_note}); use evolve_ode instead")

    eps = model.epsilon
    ident = np.eye(model.n)
    probs = np.abs(a0) ** 2
    frem = np.empty(count, np.complex128)
    for i, x in enumerate(xs):
        z = complex(x, delta)
        sig = sigma_decomposed(model, z, quad_config).total
        d = np.diag(eps).astype(complex) - z * ident - sig
        full = complex(np.vdot(a0, np.linalg.solve(d, a0)))
        frem[i] = full - np.sum(probs / (eps - z))

    tail_scale = max(abs(frem[0]), abs(frem[-1])) * radius
    tail_est = tail_scale / np.pi * np.exp(delta * t_max)
    if tail_est > target:
        raise TruncationDominated(
            f"estimated tail contribution {tail_est:.3e} exceeds the "
            f"target {target}; increase radius (now {radius})")

    out = np.empty(ts.size, np.complex128)
    for i, t in enumerate(ts):
        s_plus = _filon_segments(xs, frem, t)
        s_minus = _filon_segments(xs, frem, -t)
        line = (np.exp(delta * t) * s_plus
                - np.exp(-delta * t) * np.conj(s_minus)) / (2j * np.pi)
        out[i] = np.sum(probs * np.exp(-1j * eps * t)) + line
    return out


# ---------------------------------------------------------------------------
# pole weights


@dataclass(frozen=True)
class ModeDecomposition:
    """Complex mode positions and their weights in the survival amplitude.

    weight_defect = |1 - sum of weights| measures how much of the initial
    state lives outside the listed poles (branch-cut background and any
    missed discrete states).
    """

    modes: tuple
    weights: tuple
    weight_defect: float

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        acc = np.zeros(t.shape, np.complex128)
        for z, w in zip(self.modes, self.weights):
            acc = acc + w * np.exp(-1j * z * t)
        return acc


def mode_decompose(model, a0, modes, radius=None, nodes=64,
                   quad_config=None):
    """Residue weights of the continued resolvent at the given poles.

    Each weight is -Res f^II by a trapezoid on a small circle (spectrally
    accurate for analytic integrands).  The tracked continuation must come
    back to itself after the loop; if not, the circle crossed a branch cut
    and PoleCircleCrossesCut is raised.
    """
    a0 = np.asarray(a0, dtype=np.complex128)
    mode_list = [complex(z) for z in modes]
    crit = [complex(v) for v in model.dispersion.critical_values]
    weights = []
    for zc in mode_list:
        limits = [0.45 * abs(zc - other)
                  for other in mode_list if other != zc]
        limits += [0.45 * abs(zc - v) for v in crit]
        limits.append(0.25 * (1.0 + abs(zc)))
        r = radius if radius is not None else min(limits)
        if r <= 0.0 or any(abs(zc - v) < r * 1.5 for v in crit):
            raise PoleCircleCrossesCut(
                f"no safe residue circle around {zc}: a branch point of the "
                "continuation is too close")
        angles = 2.0 * np.pi * np.arange(nodes) / nodes
        circle = zc + r * np.exp(1j * angles)
        tracker = SheetTracker(model, circle[0], quad_config)
        ident = np.eye(model.n)

        def f_at(z):
            d = np.diag(model.epsilon).astype(complex) - z * ident \
                - tracker.sigma(z)
            return complex(np.vdot(a0, np.linalg.solve(d, a0)))

        first = f_at(circle[0])
        acc = first * (circle[0] - zc)
        for z in circle[1:]:
            acc += f_at(z) * (z - zc)
        closed = f_at(circle[0])
        if abs(closed - first) > 1e-6 * (1.0 + abs(first)):
            raise PoleCircleCrossesCut(
                f"continuation around {zc} did not close (defect "
                f"{abs(closed - first):.3e}): the circle crossed a cut")
        weights.append(-acc / nodes)
    defect = abs(1.0 - sum(weights))
    return ModeDecomposition(modes=tuple(mode_list),
                             weights=tuple(weights),
                             weight_defect=float(defect))
