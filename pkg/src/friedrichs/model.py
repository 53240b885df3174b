"""Model definitions: dispersion relations, form factors, atom arrays.

A model couples n two-level atoms at fixed positions x_1 < ... < x_n, each
with excitation energy eps_j, to a one-dimensional boson field with
dispersion omega(k) and a shared scalar form-factor profile F(k).  The atoms
are identical apart from position and energy, so the coupling matrix is

    G_{jl}(k) = G(k) * exp(i k (x_j - x_l)),      G(k) = |F(k)|^2 on the real line,

with G extended off the real axis as the analytic continuation of |F|^2
(real and even on the real line, so G(conj kappa) = conj G(kappa)).

Conventions, used consistently everywhere:
  * principal square root: sqrt(z) = sqrt(|z|) exp(i arg(z)/2) with
    arg in (-pi, pi]; on the negative real axis the value is taken from
    the upper side (+i sqrt(|z|)).  Every branch choice in the package is
    expressed through this one helper.
  * the self-energy is Sigma_{jl}(z) = integral of G_{jl}(k)/(omega(k)-z) dk
    over the real line.

Model objects are immutable after construction.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidParam, NonConvergent, UnknownPreset, ConfigError

MAX_ATOMS = 64


def principal_sqrt(z):
    """Principal branch square root with arg in (-pi, pi].

    Signed zeros in the imaginary part are normalized first, so inputs
    sitting exactly on the negative real axis are evaluated on the upper
    side of the cut regardless of how they were produced.
    """
    z = np.asarray(z, dtype=complex)
    z = np.where(z.imag == 0.0, z.real + 0.0j, z)
    out = np.sqrt(z)
    if out.ndim == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class DispersionSpec:
    """Dispersion relation omega(kappa) and its analytic structure.

    branch_cuts lists (anchor, direction) pairs: each cut is the ray
    anchor + t*direction, t >= 0, excluded from the analyticity region.
    pair_count is the number of +/- solution pairs of omega(kappa) = z
    for z in the admissible region; critical_values are the images of the
    zeros of the group velocity (where solution pairs collide).
    """

    name: str
    params: dict
    evaluate: callable
    derivative: callable
    branch_cuts: tuple = ()
    minimum: float = 0.0
    critical_values: tuple = ()
    pair_count: int = 1
    scale: float = 1.0
    admissible: callable = None      # z -> bool, None means whole plane
    domain_note: str = ""

    def in_domain(self, z):
        if self.admissible is None:
            return True
        return bool(self.admissible(complex(z)))

    def cut_distance(self, kappa):
        """Distance from kappa to the nearest branch cut (inf if entire)."""
        if not self.branch_cuts:
            return math.inf
        kappa = complex(kappa)
        best = math.inf
        for anchor, direction in self.branch_cuts:
            d = direction / abs(direction)
            t = ((kappa - anchor) * d.conjugate()).real
            t = max(t, 0.0)
            best = min(best, abs(kappa - (anchor + t * d)))
        return best


@dataclass(frozen=True)
class FormFactorSpec:
    """Scalar coupling profile F(kappa) and the continuation G of |F|^2."""

    name: str
    params: dict
    profile: callable
    squared: callable


@dataclass(frozen=True)
class AtomArray:
    positions: tuple
    excitation_energies: tuple

    def __post_init__(self):
        pos = tuple(float(x) for x in self.positions)
        eps = tuple(float(e) for e in self.excitation_energies)
        if len(pos) == 0:
            raise InvalidParam("need at least one atom")
        if len(pos) > MAX_ATOMS:
            raise InvalidParam(f"atom count {len(pos)} exceeds cap {MAX_ATOMS}")
        if len(eps) != len(pos):
            raise InvalidParam("positions and excitation energies differ in length")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidParam("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "excitation_energies", eps)

    @property
    def n(self):
        return len(self.positions)


@dataclass(frozen=True)
class Model:
    dispersion: DispersionSpec
    form_factor: FormFactorSpec
    atoms: AtomArray
    preset_name: str = ""

    @property
    def n(self):
        return self.atoms.n

    @property
    def positions(self):
        return np.array(self.atoms.positions)

    @property
    def epsilon(self):
        return np.array(self.atoms.excitation_energies)

    def omega(self, kappa):
        return self.dispersion.evaluate(kappa)

    def domega(self, kappa):
        return self.dispersion.derivative(kappa)

    def gsq(self, kappa):
        """Analytic continuation of |F|^2 at kappa."""
        return self.form_factor.squared(kappa)

    def f(self, k):
        return self.form_factor.profile(k)

    def distances(self):
        """Sorted unique pairwise distances |x_j - x_l| (including 0)."""
        x = self.positions
        d = np.abs(x[:, None] - x[None, :])
        return np.unique(np.round(d, 14))


def _waveguide_dispersion(m):
    m2 = m * m

    def ev(kappa):
        return principal_sqrt(np.asarray(kappa, dtype=complex) ** 2 + m2)

    def dv(kappa):
        kappa = np.asarray(kappa, dtype=complex)
        return kappa / principal_sqrt(kappa ** 2 + m2)

    return DispersionSpec(
        name="massive-sqrt",
        params={"m": m},
        evaluate=ev,
        derivative=dv,
        branch_cuts=((1j * m, 1j), (-1j * m, -1j)),
        minimum=m,
        critical_values=(m,),
        pair_count=1,
        scale=m,
        admissible=lambda z: z.real > 0.0,
        domain_note="Re z > 0",
    )


def _quadratic_dispersion(a):
    def ev(kappa):
        return a * np.asarray(kappa, dtype=complex) ** 2

    def dv(kappa):
        return 2.0 * a * np.asarray(kappa, dtype=complex)

    return DispersionSpec(
        name="quadratic",
        params={"a": a},
        evaluate=ev,
        derivative=dv,
        minimum=0.0,
        critical_values=(0.0,),
        pair_count=1,
        scale=1.0,
    )


def _quartic_dispersion(a):
    def ev(kappa):
        return a * np.asarray(kappa, dtype=complex) ** 4

    def dv(kappa):
        return 4.0 * a * np.asarray(kappa, dtype=complex) ** 3

    return DispersionSpec(
        name="quartic",
        params={"a": a},
        evaluate=ev,
        derivative=dv,
        minimum=0.0,
        critical_values=(0.0,),
        pair_count=2,
        scale=1.0,
    )


def _flat_form_factor(g):
    g2 = g * g / (2.0 * math.pi)

    def prof(k):
        k = np.asarray(k, dtype=complex)
        return math.sqrt(g2) * (k * 0.0 + 1.0)

    def sq(kappa):
        kappa = np.asarray(kappa, dtype=complex)
        out = kappa * 0.0 + g2
        if out.ndim == 0:
            return complex(out)
        return out

    return FormFactorSpec(name="flat", params={"g": g}, profile=prof, squared=sq)


def _massive_quarter_inverse_form_factor(gamma, m):
    pref = gamma / (2.0 * math.pi)
    m2 = m * m

    def prof(k):
        k = np.asarray(k, dtype=complex)
        return math.sqrt(pref) / principal_sqrt(principal_sqrt(k ** 2 + m2))

    def sq(kappa):
        kappa = np.asarray(kappa, dtype=complex)
        out = pref / principal_sqrt(kappa ** 2 + m2)
        if np.ndim(out) == 0:
            return complex(out)
        return out

    return FormFactorSpec(
        name="massive-quarter-inverse",
        params={"gamma": gamma, "m": m},
        profile=prof,
        squared=sq,
    )


DISPERSION_CATALOG = {
    "massive-sqrt": (_waveguide_dispersion, ("m",)),
    "quadratic": (_quadratic_dispersion, ("a",)),
    "quartic": (_quartic_dispersion, ("a",)),
}

FORM_FACTOR_CATALOG = {
    "flat": (_flat_form_factor, ("g",)),
    "massive-quarter-inverse": (_massive_quarter_inverse_form_factor, ("gamma", "m")),
}

PRESETS = ("waveguide", "massless-flat")


def _build_from_catalog(catalog, kind, name, params):
    if name not in catalog:
        raise ConfigError(f"unknown {kind} '{name}', available: {sorted(catalog)}")
    builder, wanted = catalog[name]
    params = dict(params)
    extra = set(params) - set(wanted)
    missing = set(wanted) - set(params)
    if extra:
        raise ConfigError(f"{kind} '{name}': unknown params {sorted(extra)}")
    if missing:
        raise ConfigError(f"{kind} '{name}': missing params {sorted(missing)}")
    vals = [float(params[w]) for w in wanted]
    if any(not math.isfinite(v) or v <= 0 for v in vals):
        raise InvalidParam(f"{kind} '{name}': params must be finite and positive")
    return builder(*vals)


def preset(name, positions, epsilon, **params):
    """Build one of the two bundled models.

    'waveguide'      omega = sqrt(k^2 + m^2), F = sqrt(gamma/2pi) (k^2+m^2)^(-1/4)
                     params: m, gamma
    'massless-flat'  omega = k^2, F = g/sqrt(2pi)
                     params: g
    """
    atoms = AtomArray(tuple(positions), tuple(epsilon))
    if name == "waveguide":
        extra = set(params) - {"m", "gamma"}
        if extra:
            raise InvalidParam(f"waveguide: unknown params {sorted(extra)}")
        m = float(params.get("m", 1.0))
        gamma = float(params.get("gamma", 2.0 * math.pi))
        if m <= 0 or gamma <= 0:
            raise InvalidParam("waveguide: m and gamma must be positive")
        return Model(
            dispersion=_waveguide_dispersion(m),
            form_factor=_massive_quarter_inverse_form_factor(gamma, m),
            atoms=atoms,
            preset_name="waveguide",
        )
    if name == "massless-flat":
        extra = set(params) - {"g"}
        if extra:
            raise InvalidParam(f"massless-flat: unknown params {sorted(extra)}")
        g = float(params.get("g", 1.0))
        if g <= 0:
            raise InvalidParam("massless-flat: g must be positive")
        return Model(
            dispersion=_quadratic_dispersion(1.0),
            form_factor=_flat_form_factor(g),
            atoms=atoms,
            preset_name="massless-flat",
        )
    raise UnknownPreset(f"unknown preset '{name}', available: {PRESETS}")


def model_from_dict(doc):
    """Build a Model from a plain dict (the JSON model document).

    Two layouts are accepted:
      {"preset": ..., "params": {...}, "positions": [...], "epsilon": [...]}
      {"dispersion": {"name", "params"}, "form_factor": {"name", "params"},
       "positions": [...], "epsilon": [...], "pair_count": int (optional)}
    Unknown keys are rejected.
    """
    if not isinstance(doc, dict):
        raise ConfigError("model document must be a JSON object")
    keys = set(doc)
    common = {"positions", "epsilon"}
    if not common <= keys:
        raise ConfigError("model document needs 'positions' and 'epsilon'")
    positions = doc["positions"]
    epsilon = doc["epsilon"]
    if isinstance(epsilon, (int, float)):
        epsilon = [float(epsilon)] * len(positions)
    if "preset" in keys:
        allowed = common | {"preset", "params"}
        if keys - allowed:
            raise ConfigError(f"unknown model keys {sorted(keys - allowed)}")
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("'params' must be an object")
        return preset(doc["preset"], positions, epsilon, **params)
    allowed = common | {"dispersion", "form_factor", "pair_count"}
    if keys - allowed:
        raise ConfigError(f"unknown model keys {sorted(keys - allowed)}")
    if "dispersion" not in keys or "form_factor" not in keys:
        raise ConfigError("custom model needs 'dispersion' and 'form_factor'")
    for part in ("dispersion", "form_factor"):
        spec = doc[part]
        if not isinstance(spec, dict) or set(spec) - {"name", "params"} or "name" not in spec:
            raise ConfigError(f"'{part}' must be {{'name':..., 'params':{{...}}}}")
    disp = _build_from_catalog(
        DISPERSION_CATALOG, "dispersion", doc["dispersion"]["name"],
        doc["dispersion"].get("params", {}))
    if "pair_count" in keys:
        r = int(doc["pair_count"])
        if r < 1:
            raise ConfigError("pair_count must be >= 1")
        disp = DispersionSpec(
            name=disp.name, params=disp.params, evaluate=disp.evaluate,
            derivative=disp.derivative, branch_cuts=disp.branch_cuts,
            minimum=disp.minimum, critical_values=disp.critical_values,
            pair_count=r, scale=disp.scale, admissible=disp.admissible,
            domain_note=disp.domain_note)
    ff = _build_from_catalog(
        FORM_FACTOR_CATALOG, "form-factor", doc["form_factor"]["name"],
        doc["form_factor"].get("params", {}))
    atoms = AtomArray(tuple(positions), tuple(epsilon))
    return Model(dispersion=disp, form_factor=ff, atoms=atoms)


def model_to_dict(model):
    if model.preset_name:
        return {
            "preset": model.preset_name,
            "params": dict(model.form_factor.params if model.preset_name == "massless-flat"
                           else {**model.dispersion.params, "gamma": model.form_factor.params["gamma"]}),
            "positions": list(model.atoms.positions),
            "epsilon": list(model.atoms.excitation_energies),
        }
    return {
        "dispersion": {"name": model.dispersion.name, "params": dict(model.dispersion.params)},
        "form_factor": {"name": model.form_factor.name, "params": dict(model.form_factor.params)},
        "positions": list(model.atoms.positions),
        "epsilon": list(model.atoms.excitation_energies),
        "pair_count": model.dispersion.pair_count,
    }


def coupling_matrix(model, k):
    """n x n coupling matrix G(k) exp(i k (x_j - x_l)) at (possibly complex) k."""
    x = model.positions
    phase = np.exp(1j * complex(k) * (x[:, None] - x[None, :]))
    return model.gsq(k) * phase


def _sample_off_cuts(rng, disp, count):
    """Random complex points in the analyticity region, away from any cut."""
    s = disp.scale
    pts = []
    while len(pts) < count:
        kappa = complex(rng.uniform(-4 * s, 4 * s), rng.uniform(-0.8 * s, 0.8 * s))
        if disp.cut_distance(kappa) > 0.2 * s:
            pts.append(kappa)
    return pts


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst: float
    details: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    normalization_shifted: float = math.nan   # integral of G/(omega+1)
    normalization_bare: float = math.nan      # integral of G/omega (inf if divergent)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __str__(self):
        lines = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            lines.append(f"[{tag}] {c.name}: worst={c.worst:.3e} {c.details}".rstrip())
        lines.append(f"normalization integral (shifted denom): {self.normalization_shifted:.12g}")
        lines.append(f"normalization integral (bare denom):    {self.normalization_bare:.12g}")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines)


def _norm_integral(model, denom_shift, R, with_tail=False):
    import warnings

    from scipy.integrate import IntegrationWarning, quad

    def f(k):
        w = model.omega(k).real
        return model.gsq(k).real / (w + denom_shift)

    # convergence is judged by the nested-cutoff gaps, not quad's own gripes
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        core, _ = quad(f, 0.0, R, limit=200)
        tail = 0.0
        if with_tail:
            tail, _ = quad(lambda u: f(1.0 / u) / (u * u), 0.0, 1.0 / R, limit=200)
    return 2.0 * (core + tail)   # even integrand, folded


def validate_hypotheses(model, samples=64, seed=0, strict=False):
    """Check the standing assumptions on a sampled basis.

    Four groups: positivity plus finite normalization of the coupling;
    evenness/conjugation symmetry on the real line; analyticity of the
    continued dispersion and coupling (derivative consistency and Schwarz
    reflection on complex samples); decay of G/(omega - z0) on expanding
    arcs.  Returns a ValidationReport; with strict=True a failed
    normalization Cauchy criterion raises NonConvergent.
    """
    rng = np.random.default_rng(seed)
    disp = model.dispersion
    rep = ValidationReport()
    s = disp.scale

    # positivity and normalization with nested cutoffs
    ks = rng.uniform(-6 * s, 6 * s, size=samples)
    wvals = np.asarray(model.omega(ks))
    worst_im = float(np.max(np.abs(wvals.imag)))
    worst_neg = float(max(0.0, -np.min(wvals.real)))
    # truncated values at nested cutoffs: convergence shows as geometrically
    # shrinking gaps, divergence as flat or growing ones
    R0 = 20.0 * s
    vals = [_norm_integral(model, 1.0, R) for R in (R0, 2 * R0, 4 * R0)]
    gap1 = abs(vals[1] - vals[0])
    gap2 = abs(vals[2] - vals[1])
    floor = 1e-9 * (1 + abs(vals[2]))
    cauchy_ok = gap2 <= 0.75 * gap1 + floor or gap2 < floor
    rep.normalization_shifted = _norm_integral(model, 1.0, 4 * R0, with_tail=True)
    if disp.minimum > 0:
        rep.normalization_bare = _norm_integral(model, 0.0, 4 * R0, with_tail=True)
    else:
        rep.normalization_bare = math.inf
        rep.notes.append("bare-denominator normalization divergent (spectrum reaches 0)")
    ok1 = worst_im < 1e-10 and worst_neg < 1e-10 and cauchy_ok
    rep.checks.append(HypothesisCheck(
        "positivity+normalization", ok1, max(worst_im, worst_neg, gap2),
        f"cutoff gaps {gap1:.2e} -> {gap2:.2e}"))
    if strict and not cauchy_ok:
        raise NonConvergent("normalization integral failed the nested-cutoff Cauchy criterion")

    # evenness of omega, reflection of F on the real line
    ks = rng.uniform(0.0, 6 * s, size=samples)
    weven = np.max(np.abs(np.asarray(model.omega(ks)) - np.asarray(model.omega(-ks))))
    frefl = np.max(np.abs(np.asarray(model.f(-ks)) - np.conj(np.asarray(model.f(ks)))))
    worst2 = float(max(weven, frefl))
    rep.checks.append(HypothesisCheck(
        "evenness+reflection", worst2 < 1e-10 * (1 + float(np.max(np.abs(model.omega(ks))))),
        worst2))

    # analyticity: derivative consistency and Schwarz reflection off the axis
    pts = _sample_off_cuts(rng, disp, samples // 2)
    h = 1e-5 * s
    worst3 = 0.0
    for kappa in pts:
        fd = (model.omega(kappa + h) - model.omega(kappa - h)) / (2 * h)
        worst3 = max(worst3, abs(fd - model.domega(kappa)) / (1 + abs(fd)))
        worst3 = max(worst3, abs(model.omega(np.conj(kappa)) - np.conj(model.omega(kappa)))
                     / (1 + abs(model.omega(kappa))))
        worst3 = max(worst3, abs(model.omega(-kappa) - model.omega(kappa))
                     / (1 + abs(model.omega(kappa))))
        worst3 = max(worst3, abs(model.gsq(np.conj(kappa)) - np.conj(model.gsq(kappa)))
                     / (1 + abs(model.gsq(kappa))))
    rep.checks.append(HypothesisCheck("analyticity", worst3 < 1e-7, worst3))

    # arc decay of G/(omega - z0) at expanding radii
    z0 = 1j * (1.0 + s)
    thetas = np.linspace(0.05, math.pi - 0.05, 25)
    thetas = thetas[np.abs(thetas - math.pi / 2) > 0.03]
    arcvals = []
    for R in (30 * s, 60 * s, 120 * s):
        kap = R * np.exp(1j * thetas)
        v = R * np.max(np.abs(np.asarray(model.gsq(kap))
                              / (np.asarray(model.omega(kap)) - z0)))
        arcvals.append(float(v))
    ok4 = arcvals[2] < arcvals[1] < arcvals[0] and arcvals[2] < 0.5 * arcvals[0]
    rep.checks.append(HypothesisCheck(
        "arc-decay", ok4, arcvals[2],
        f"R-scaled sup over arcs: {arcvals[0]:.2e}, {arcvals[1]:.2e}, {arcvals[2]:.2e}"))

    if not disp.branch_cuts:
        rep.notes.append("dispersion entire: contour term identically zero")
    return rep
