"""Closed-form stationary solution families of the coupled equations.

Six families pair up as (ground, excited) atomic states over one molecular
profile:

    I   A cosh(bx)/(B + cosh^2 bx)      D/(B + cosh^2 bx)
    II  A sinh(bx)/(B + cosh^2 bx)      D/(B + cosh^2 bx)
    III A/(B + x^2)                     D(x^2 + y)/(B + x^2)
    IV  A x/(B + x^2)                   D(x^2 + y)/(B + x^2)
    V   A sech^2(bx)                    D[sech^2(bx) + y]
    VI  A sech(bx) tanh(bx)             D[sech^2(bx) + y]

For V/VI the molecular amplitude is conventionally written ``B``; here it
always lives in the ``D`` slot so that no symbol means two things.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .grid import Grid, make_grid
from .model import Couplings, FieldPair

SQRT2 = math.sqrt(2.0)


class FamilyId(Enum):
    I_droplet_ground = "I"
    II_droplet_excited = "II"
    III_pulse_ground = "III"
    IV_pulse_excited = "IV"
    V_hyperbolic_ground = "V"
    VI_hyperbolic_excited = "VI"

    @classmethod
    def parse(cls, value) -> "FamilyId":
        if isinstance(value, cls):
            return value
        s = str(value).strip()
        for member in cls:
            if s in (member.value, member.name):
                return member
        raise ValueError(f"unknown family {value!r}; expected one of I..VI")

    @property
    def is_excited(self) -> bool:
        return self in (FamilyId.II_droplet_excited, FamilyId.IV_pulse_excited,
                        FamilyId.VI_hyperbolic_excited)

    @property
    def partner(self) -> "FamilyId":
        return _PARTNER[self]

    @property
    def kind(self) -> str:
        """'droplet', 'pulse' or 'hyperbolic'."""
        return {"I": "droplet", "II": "droplet", "III": "pulse", "IV": "pulse"}.get(
            self.value, "hyperbolic"
        )

    @property
    def power_law(self) -> bool:
        return self.kind == "pulse"


F = FamilyId
_PARTNER = {
    F.I_droplet_ground: F.II_droplet_excited,
    F.II_droplet_excited: F.I_droplet_ground,
    F.III_pulse_ground: F.IV_pulse_excited,
    F.IV_pulse_excited: F.III_pulse_ground,
    F.V_hyperbolic_ground: F.VI_hyperbolic_excited,
    F.VI_hyperbolic_excited: F.V_hyperbolic_ground,
}
PAIRS = (
    (F.I_droplet_ground, F.II_droplet_excited),
    (F.III_pulse_ground, F.IV_pulse_excited),
    (F.V_hyperbolic_ground, F.VI_hyperbolic_excited),
)

SHAPE_PARAMS = {
    "droplet": ("A", "B", "D", "beta"),
    "pulse": ("A", "B", "D", "y"),
    "hyperbolic": ("A", "D", "beta", "y"),
}
COUPLING_PARAMS = ("mu", "epsilon", "g_a", "g_m", "g_am", "alpha")


def family_parameters(fid: FamilyId) -> tuple[str, ...]:
    """Full parameter set (shape + couplings + mu) of a family."""
    return SHAPE_PARAMS[FamilyId.parse(fid).kind] + COUPLING_PARAMS


def display_label(fid: FamilyId, name: str) -> str:
    """Conventional symbol of an internal parameter name."""
    if FamilyId.parse(fid).kind == "hyperbolic" and name == "D":
        return "B"
    return name


def internal_name(fid: FamilyId, label: str) -> str:
    """Inverse of :func:`display_label`."""
    if FamilyId.parse(fid).kind == "hyperbolic":
        if label == "B":
            return "D"
        if label == "D":
            raise ValueError("family V/VI molecular amplitude is labelled 'B'")
    return label


@dataclass(frozen=True)
class AnsatzParams:
    A: float = 0.0
    B: float = 0.0
    D: float = 0.0
    beta: float = 1.0
    y: float = 0.0

    @property
    def delta(self) -> float:
        """Half-separation of the kink/soliton constituents, B = sinh^2(delta)."""
        if self.B <= 0:
            raise ValueError(f"delta requires B > 0 (got B={self.B})")
        return math.asinh(math.sqrt(self.B))


def validate(fid: FamilyId, p: AnsatzParams) -> None:
    fid = FamilyId.parse(fid)
    for name in ("A", "B", "D", "beta", "y"):
        if not math.isfinite(getattr(p, name)):
            raise ValueError(f"parameter {name} is not finite")
    if fid.kind in ("droplet", "hyperbolic") and p.beta <= 0:
        raise ValueError(f"family {fid.value}: need beta > 0 (got {p.beta})")
    if fid.kind in ("droplet", "pulse") and p.B <= 0:
        raise ValueError(f"family {fid.value}: need B > 0 (got {p.B})")
    if fid.kind == "pulse" and p.y == p.B:
        raise ValueError(f"family {fid.value}: constraint y ≠ B violated (y = B = {p.B})")


def canonical(p: AnsatzParams) -> tuple[AnsatzParams, bool]:
    """Flip to A >= 0; psi_a -> -psi_a is a symmetry of the equations."""
    if p.A < 0:
        return replace(p, A=-p.A), True
    return p, False


# --- analytic profiles -------------------------------------------------------

def _sech(z):
    # overflow-free: 1/cosh via exp(-|z|)
    e = np.exp(-np.abs(z))
    return 2 * e / (1 + e * e)


def profiles(fid: FamilyId, p: AnsatzParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Real stationary profiles (phi_a, phi_m) at points ``x``."""
    fid = FamilyId.parse(fid)
    x = np.asarray(x, dtype=float)
    if fid.kind == "droplet":
        z = p.beta * x
        s = _sech(z)
        den = p.B * s * s + 1.0
        phi_m = p.D * s * s / den
        if fid is F.I_droplet_ground:
            phi_a = p.A * s / den
        else:
            phi_a = p.A * np.tanh(z) * s / den
    elif fid.kind == "pulse":
        q = 1.0 / (p.B + x * x)
        phi_m = p.D * (1.0 + (p.y - p.B) * q)
        phi_a = p.A * q if fid is F.III_pulse_ground else p.A * x * q
    else:
        z = p.beta * x
        s = _sech(z)
        u = s * s
        phi_m = p.D * (u + p.y)
        phi_a = p.A * u if fid is F.V_hyperbolic_ground else p.A * s * np.tanh(z)
    return phi_a, phi_m


def profile_second_derivatives(fid: FamilyId, p: AnsatzParams, x):
    """Exact d^2/dx^2 of both profiles (used for collocation residuals)."""
    fid = FamilyId.parse(fid)
    x = np.asarray(x, dtype=float)
    b2 = p.beta**2
    if fid.kind == "droplet":
        z = p.beta * x
        s = _sech(z)
        den = p.B * s * s + 1.0
        q = s * s / den  # 1/(B + cosh^2)
        wq = 1.0 - p.B * q  # cosh^2 * q
        w1q = 1.0 - (p.B + 1.0) * q  # sinh^2 * q
        w2q = 2.0 - (2 * p.B + 1.0) * q  # (2 cosh^2 - 1) * q
        d2m = 2 * b2 * p.D * q * (4 * wq * w1q - w2q)
        if fid is F.I_droplet_ground:
            d2a = p.A * b2 * (s / den) * (1 - 4 * w1q + 8 * wq * w1q - 2 * w2q)
        else:
            d2a = p.A * b2 * (np.tanh(z) * s / den) * (1 - 4 * wq + 8 * wq * w1q - 2 * w2q)
    elif fid.kind == "pulse":
        q = 1.0 / (p.B + x * x)
        d2q = q * q * (6.0 - 8.0 * p.B * q)
        d2m = p.D * (p.y - p.B) * d2q
        if fid is F.III_pulse_ground:
            d2a = p.A * d2q
        else:
            d2a = p.A * x * q * q * (2.0 - 8.0 * p.B * q)
    else:
        z = p.beta * x
        s = _sech(z)
        u = s * s
        d2u = b2 * (4 * u - 6 * u * u)
        d2m = p.D * d2u
        if fid is F.V_hyperbolic_ground:
            d2a = p.A * d2u
        else:
            d2a = p.A * b2 * s * np.tanh(z) * (1 - 6 * u)
    return d2a, d2m


def _check_mu(fid: FamilyId, p: AnsatzParams, mu: float) -> None:
    # beta^2 = -2 mu ties the droplet width to the chemical potential
    if fid.kind == "droplet" and abs(p.beta**2 + 2 * mu) > 1e-12 * max(1.0, p.beta**2):
        raise ValueError(
            f"family {fid.value}: beta^2 = -2 mu violated (beta={p.beta}, mu={mu})"
        )


def eval_family(fid, p: AnsatzParams, mu: float, g: Grid, t: float = 0.0) -> FieldPair:
    fid = FamilyId.parse(fid)
    validate(fid, p)
    _check_mu(fid, p, mu)
    phi_a, phi_m = profiles(fid, p, g.x)
    return FieldPair(phi_a * np.exp(-1j * mu * t), phi_m * np.exp(-2j * mu * t), g, t)


def superposed_form(fid, p: AnsatzParams, g: Grid) -> FieldPair:
    """Droplet fields rebuilt from shifted kinks (molecule) and sech
    solitons (atoms) separated by 2*delta, with B = sinh^2(delta)."""
    fid = FamilyId.parse(fid)
    if fid.kind != "droplet":
        raise ValueError("superposed form exists for families I and II only")
    if p.B <= 0:
        raise ValueError(f"superposed form needs B > 0 (got {p.B})")
    d = p.delta
    z = p.beta * g.x
    phi_m = p.D * (np.tanh(z + d) - np.tanh(z - d)) / math.sinh(2 * d)
    if fid is F.I_droplet_ground:
        phi_a = p.A * (_sech(z + d) + _sech(z - d)) / (2 * math.cosh(d))
    else:
        phi_a = p.A * (_sech(z - d) - _sech(z + d)) / (2 * math.sinh(d))
    return FieldPair(phi_a, phi_m, g)


@dataclass(frozen=True)
class DropletScaling:
    sqrt_n_m: float
    mu_ratio: float

    @property
    def n_m(self) -> float:
        return self.sqrt_n_m**2


def droplet_scaling(B: float, D: float) -> DropletScaling:
    if not B > 0:
        raise ValueError(f"droplet scaling needs B > 0 (got {B})")
    return DropletScaling(D * (2 * B + 1) / (2 * B * (B + 1)), 4 * B * (B + 1) / (2 * B + 1) ** 2)


def b_from_mu_ratio(mu_ratio: float) -> float:
    """Positive root of 4B(B+1)/(2B+1)^2 = mu_ratio."""
    if not 0 < mu_ratio < 1:
        raise ValueError(f"mu_ratio must lie in (0, 1) (got {mu_ratio})")
    return 0.5 * (1.0 / math.sqrt(1.0 - mu_ratio) - 1.0)


def _cosh_ratio(a, k, odd: bool):
    """cosh(a)/(1 + k cosh(2a)) (or sinh) without overflow."""
    e1 = np.exp(-np.abs(a))
    e2 = e1 * e1
    num = e1 - e1 * e2 if odd else e1 + e1 * e2
    out = num / (2 * e2 + k * (1 + e2 * e2))
    return np.sign(a) * out if odd else out


def reparametrized_form(fid, sqrt_n_m: float, mu_ratio: float, A: float, mu: float,
                        g: Grid, t: float = 0.0) -> FieldPair:
    """Droplet written through the plateau density and mu/mu_0.

    ``mu`` (< 0) fixes the absolute scale; mu/mu_0 alone does not.
    """
    fid = FamilyId.parse(fid)
    if fid.kind != "droplet":
        raise ValueError("reparametrized form exists for families I and II only")
    if not mu < 0:
        raise ValueError(f"need mu < 0 (got {mu})")
    B = b_from_mu_ratio(mu_ratio)
    k = math.sqrt(1.0 - mu_ratio)
    a = math.sqrt(-2 * mu) * g.x
    # 1/(1 + k cosh 2a) through the same overflow-free ratio
    e2 = np.exp(-2 * np.abs(a))
    plateau = 2 * e2 / (2 * e2 + k * (1 + e2 * e2))
    phi_m = sqrt_n_m * mu_ratio * plateau
    phi_a = 2 * A / (2 * B + 1) * _cosh_ratio(a, k, odd=fid is F.II_droplet_excited)
    return FieldPair(phi_a * np.exp(-1j * mu * t), phi_m * np.exp(-2j * mu * t), g, t)


# --- grids and presets -------------------------------------------------------

def default_grid(fid, p: AnsatzParams, n: int | None = None) -> Grid:
    """[-40/beta, 40/beta] spectral for exponential families (edge amplitude
    of the slowest, e^{-beta|x|}, tails below 1e-12 of peak); [-80, 80] in
    units of sqrt(B) with finite differences for power laws."""
    fid = FamilyId.parse(fid)
    if fid.power_law:
        half = 80.0 * math.sqrt(p.B)
        return make_grid(-half, half, n or 4096, periodic=False)
    half = 40.0 / p.beta
    return make_grid(-half, half, n or 2048)


@dataclass(frozen=True)
class Preset:
    family: FamilyId
    name: str
    params: AnsatzParams
    couplings: Couplings
    mu: float
    note: str = ""

    def as_assignment(self) -> dict[str, float]:
        return to_assignment(self.family, self.params, self.couplings, self.mu)


def to_assignment(fid, p: AnsatzParams, c: Couplings, mu: float) -> dict[str, float]:
    fid = FamilyId.parse(fid)
    vals = {"A": p.A, "B": p.B, "D": p.D, "beta": p.beta, "y": p.y, "mu": mu,
            "epsilon": c.epsilon, "g_a": c.g_a, "g_m": c.g_m, "g_am": c.g_am,
            "alpha": c.alpha}
    return {k: float(vals[k]) for k in family_parameters(fid)}


def from_assignment(fid, values: dict[str, float]):
    """Split a full assignment into (AnsatzParams, Couplings, mu)."""
    fid = FamilyId.parse(fid)
    missing = set(family_parameters(fid)) - set(values)
    if missing:
        raise ValueError(f"assignment for family {fid.value} lacks {sorted(missing)}")
    shape = {k: values[k] for k in SHAPE_PARAMS[fid.kind]}
    p = AnsatzParams(**shape)
    c = Couplings(values["g_a"], values["g_m"], values["g_am"], values["alpha"], values["epsilon"])
    return p, c, float(values["mu"])


def _vi_y0():
    a2 = 1.0 / (2.0 + SQRT2)
    return Preset(
        F.VI_hyperbolic_excited, "y0",
        AnsatzParams(A=math.sqrt(a2), D=1.0, beta=1.0, y=0.0),
        Couplings(g_a=-(3 + SQRT2) / a2, g_m=-(3 + SQRT2) * a2, g_am=-(3 + SQRT2),
                  alpha=1.0, epsilon=-SQRT2 * a2 / 2),
        -0.5,
    )


PRESETS: dict[tuple[FamilyId, str], Preset] = {
    (pr.family, pr.name): pr
    for pr in (
        Preset(F.I_droplet_ground, "canonical",
               AnsatzParams(A=math.sqrt(3.0), B=1.0, D=SQRT2, beta=1.0),
               Couplings(g_a=-3.0, g_m=1.25, g_am=-0.5, alpha=2.0, epsilon=-3.0), -0.5),
        Preset(F.II_droplet_excited, "canonical",
               AnsatzParams(A=1 / SQRT2, B=1.0, D=SQRT2, beta=1.0),
               Couplings(g_a=-22.0, g_m=-1.5, g_am=-7.0, alpha=2.0, epsilon=-0.5), -0.5),
        Preset(F.III_pulse_ground, "canonical",
               AnsatzParams(A=2.0, B=1.0, D=1.0, y=-1.0),
               Couplings(g_a=-0.5, g_m=0.0, g_am=-0.5, alpha=-1 / (2 * SQRT2), epsilon=-2.0),
               -1.0),
        Preset(F.IV_pulse_excited, "canonical",
               AnsatzParams(A=3 / (2 * SQRT2), B=1.0, D=1.0, y=-0.5),
               Couplings(g_a=136 / 9, g_m=2.0, g_am=52 / 9, alpha=-8 / (9 * SQRT2),
                         epsilon=70 / 9), 44 / 9),
        Preset(F.V_hyperbolic_ground, "y0",
               AnsatzParams(A=3 / SQRT2, D=-3 / SQRT2, beta=1.0, y=0.0),
               Couplings(g_a=-1.0, g_m=-1.0, g_am=1.0, alpha=1.0, epsilon=-3.0), -2.0,
               "mu=-2 beta^2, eps=-3 beta^2, A^2=B^2=9 beta^4/(2 alpha^2), g_a=g_m=-g_am"),
        Preset(F.V_hyperbolic_ground, "y0_repulsive",
               AnsatzParams(A=3 / SQRT2, D=-3 / SQRT2, beta=1.0, y=0.0),
               Couplings(g_a=1.0, g_m=1.0, g_am=-1.0, alpha=1.0, epsilon=-3.0), -2.0,
               "same line as y0 with g_a > 0; dynamically stable, used for evolution checks"),
        Preset(F.V_hyperbolic_ground, "y1",
               AnsatzParams(A=SQRT2, D=1.0, beta=1.0, y=1.0),
               Couplings(g_a=0.125, g_m=0.5, g_am=-0.25, alpha=-5 / (2 * SQRT2),
                         epsilon=-10.0), -4.75),
        _vi_y0(),
        Preset(F.VI_hyperbolic_excited, "y1",
               AnsatzParams(A=1.0, D=1.0, beta=1.0, y=-0.75),
               Couplings(g_a=4.0, g_m=4.0, g_am=4.0, alpha=-1 / SQRT2, epsilon=2.75), 2.5),
    )
}

DEFAULT_PRESET = {F.V_hyperbolic_ground: "y0", F.VI_hyperbolic_excited: "y0"}


def get_preset(fid, name: str | None = None) -> Preset:
    fid = FamilyId.parse(fid)
    name = name or DEFAULT_PRESET.get(fid, "canonical")
    try:
        return PRESETS[(fid, name)]
    except KeyError:
        names = sorted(n for f, n in PRESETS if f is fid)
        raise KeyError(f"no preset {name!r} for family {fid.value}; have {names}") from None


def hyperbolic_y0_relations(beta: float, alpha: float, g_a: float) -> dict[str, float]:
    """Family V, y = 0: the coefficient-matching solution in closed form."""
    amp = 3 * beta**2 / (SQRT2 * abs(alpha))
    return {
        "A": amp, "D": -3 * beta**2 / (SQRT2 * alpha), "beta": beta, "y": 0.0,
        "mu": -2 * beta**2, "epsilon": -3 * beta**2, "g_a": g_a, "g_m": g_a,
        "g_am": -g_a, "alpha": alpha,
    }


CONSTRAINTS_TEXT = {
    "droplet": "B > 0; beta > 0; beta^2 = -2 mu (mu < 0); B = sinh^2(delta)",
    "pulse": "B > 0; y ≠ B; molecular background D at |x| -> infinity",
    "hyperbolic": "beta > 0; two constraint classes: y = 0 and y ≠ 0",
}
