"""Overlaps, two-mode projection, phase slopes, flat-top and tail metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .catalog import AnsatzParams, FamilyId, profiles
from .grid import Grid
from .propagator import Trajectory


def overlap(f, g, grid: Grid) -> complex:
    """Inner product <f, g> = int conj(f) g dx."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape or f.shape != (grid.n,):
        raise ValueError(f"shape mismatch: {f.shape}, {g.shape} on grid n={grid.n}")
    return complex(grid.integrate(np.conj(f) * g))


def norm(f, grid: Grid) -> float:
    return math.sqrt(overlap(f, f, grid).real)


@dataclass(frozen=True)
class ModeBasis:
    """Unit-norm ground/excited atomic modes over one molecular profile."""

    ground: np.ndarray
    excited: np.ndarray
    molecular: np.ndarray
    labels: tuple[str, str] = ("", "")

    @classmethod
    def build(cls, ground, excited, molecular, grid: Grid, labels=("", "")) -> "ModeBasis":
        modes = []
        for name, v in (("ground", ground), ("excited", excited)):
            nv = norm(v, grid)
            if not nv > 0:
                raise ValueError(f"degenerate basis: {name} mode has zero norm")
            modes.append(np.asarray(v, dtype=complex) / nv)
        return cls(modes[0], modes[1], np.asarray(molecular, dtype=complex), tuple(labels))

    @classmethod
    def from_family(cls, family, params: AnsatzParams, grid: Grid) -> "ModeBasis":
        """Pair sharing the molecular parameters of ``params`` (A is irrelevant)."""
        fid = FamilyId.parse(family)
        gfid = fid.partner if fid.is_excited else fid
        ground, mol = profiles(gfid, params, grid.x)
        excited, _ = profiles(gfid.partner, params, grid.x)
        return cls.build(ground, excited, mol, grid, (gfid.value, gfid.partner.value))


@dataclass(frozen=True)
class QubitState:
    c0: complex
    c1: complex
    leakage: float
    norm2: float  # |psi_a|^2 integrated

    @property
    def bookkeeping_error(self) -> float:
        """| |c0|^2 + |c1|^2 + leakage*norm2 - norm2 |, zero by construction up to roundoff."""
        return abs(abs(self.c0) ** 2 + abs(self.c1) ** 2 + self.leakage * self.norm2 - self.norm2)


def project_qubit(psi_a, basis: ModeBasis, grid: Grid) -> QubitState:
    for name, v in (("ground", basis.ground), ("excited", basis.excited)):
        if not norm(v, grid) > 0:
            raise ValueError(f"degenerate basis: {name} mode has zero norm")
    c0 = overlap(basis.ground, psi_a, grid)
    c1 = overlap(basis.excited, psi_a, grid)
    n2 = overlap(psi_a, psi_a, grid).real
    leak = 1.0 - (abs(c0) ** 2 + abs(c1) ** 2) / n2 if n2 > 0 else 0.0
    return QubitState(c0, c1, leak, n2)


def qubit_observer(basis: ModeBasis):
    """Observer for :func:`ambec.propagator.evolve` recording the projection."""

    def observe(f):
        q = project_qubit(f.psi_a, basis, f.grid)
        return {"c0_abs": abs(q.c0), "c1_abs": abs(q.c1), "c0_arg": float(np.angle(q.c0)),
                "c1_arg": float(np.angle(q.c1)), "leakage": q.leakage, "norm2": q.norm2,
                "bookkeeping_error": q.bookkeeping_error}

    return observe


# --- phase slope ---------------------------------------------------------------

_SERIES = {"atomic": "overlap_a", "molecular": "overlap_m"}


def phase_slope(trajectory: Trajectory, which: str = "atomic") -> float:
    """Least-squares slope of the unwrapped projected phase against time.

    Stationary states give -mu (atomic) and -2 mu (molecular) for the
    e^{-i mu t} convention, so mu = -slope.
    """
    if which not in _SERIES:
        raise ValueError(f"which must be 'atomic' or 'molecular' (got {which!r})")
    t = trajectory.times
    if t.size < 2:
        raise ValueError("need at least two samples for a slope")
    z = trajectory.series(_SERIES[which])
    if np.any(np.abs(z) == 0):
        raise ValueError("projected amplitude vanished; phase undefined")
    raw = np.angle(z)
    steps = np.angle(np.exp(1j * np.diff(raw)))
    if np.max(np.abs(steps)) > 0.9 * math.pi:
        raise ValueError("phase unwrap ambiguous: per-sample phase change near pi; sample more often")
    phase = np.unwrap(raw)
    return float(np.polyfit(t, phase, 1)[0])


def chemical_potential_from(trajectory: Trajectory) -> tuple[float, float]:
    """(mu from atomic phase, mu from molecular phase)."""
    return -phase_slope(trajectory, "atomic"), -0.5 * phase_slope(trajectory, "molecular")


# --- profile metrics --------------------------------------------------------------

def flat_top_metric(psi_m, window: float = 0.5, grid: Grid | None = None,
                    half_width: float | None = None) -> float:
    """(max - min)/max of |psi_m| over the core of the box; 0 for a flat top.

    The core is the central ``window`` fraction of the samples, or
    |x| <= ``half_width`` when a grid and half-width are given (useful when
    the box is much wider than the droplet).
    """
    a = np.abs(np.asarray(psi_m))
    if a.size == 0:
        raise ValueError("empty field")
    if half_width is not None:
        if grid is None:
            raise ValueError("half_width needs the grid")
        core = a[np.abs(grid.x - 0.5 * (grid.x_min + grid.x_max)) <= half_width]
        if core.size == 0:
            raise ValueError("half_width selects no grid points")
    else:
        n = a.size
        half = max(1, int(round(0.5 * window * n)))
        mid = n // 2
        core = a[max(0, mid - half):min(n, mid + half)]
    peak = core.max()
    return float((peak - core.min()) / peak) if peak > 0 else 0.0


class TailFit(NamedTuple):
    value: float  # power exponent, or decay rate for mode='exponential'
    stderr: float
    mode: str


def tail_fit(field, grid: Grid, window: float = 0.2, mode: str = "power") -> TailFit:
    """Fit the right tail (outer ``window`` fraction of x > 0).

    ``mode='power'``: slope of log|f| against log x (e.g. -2 for 1/x^2).
    ``mode='exponential'``: decay rate k of |f| ~ e^{-k x} (positive).
    """
    if mode not in ("power", "exponential"):
        raise ValueError("mode must be 'power' or 'exponential'")
    if not 0 < window < 1:
        raise ValueError("window must lie in (0, 1)")
    x = grid.x
    amp = np.abs(np.asarray(field))
    x_hi = x.max()
    sel = x >= (1 - window) * x_hi
    sel &= x > 0
    xs, ys = x[sel], amp[sel]
    if xs.size < 3:
        raise ValueError("too few points in the tail window")
    if np.any(ys <= 0) or np.any(np.diff(ys) >= 0):
        raise ValueError("non-monotone tail: |field| must decrease strictly in the window")
    u = np.log(xs) if mode == "power" else xs
    v = np.log(ys)
    coef, cov = np.polyfit(u, v, 1, cov="unscaled")
    resid = v - np.polyval(coef, u)
    dof = max(1, u.size - 2)
    s2 = float(resid @ resid) / dof
    err = math.sqrt(max(s2 * cov[0, 0], 0.0))
    slope = float(coef[0])
    return TailFit(slope if mode == "power" else -slope, err, mode)


def tail_exponent(field, grid: Grid, window: float = 0.2, mode: str = "power") -> float:
    return tail_fit(field, grid, window, mode).value


def node_count(profile, grid: Grid, floor: float = 1e-8) -> int:
    """Sign changes of a real profile, ignoring points below floor*max."""
    v = np.real(np.asarray(profile))
    keep = np.abs(v) > floor * np.max(np.abs(v))
    s = np.sign(v[keep])
    return int(np.count_nonzero(s[1:] != s[:-1]))


# --- stability probes ----------------------------------------------------------------

def orbit_deviation(trajectory: Trajectory) -> np.ndarray:
    """Distance of psi_a(t) from the phase orbit of psi_a(0).

    min_theta |psi_a(t) - e^{i theta} psi_a(0)| from the recorded overlaps.
    """
    n_a = trajectory.series("N_a")
    ov = np.abs(trajectory.series("overlap_a"))
    d2 = n_a + n_a[0] - 2 * ov * n_a[0]
    return np.sqrt(np.maximum(d2, 0.0))


@dataclass(frozen=True)
class GrowthReport:
    rate: float  # fitted exponential growth exponent of the orbit deviation
    ratio: float  # deviation(T) / deviation(first sample after t=0)
    verdict: str


EXPLOSIVE_RATIO = 1e2


def growth_exponent(trajectory: Trajectory) -> GrowthReport:
    """Finite-time growth of the deviation from the initial orbit.

    Verdict is 'explosive growth' when the deviation grows by more than
    EXPLOSIVE_RATIO over the run, otherwise 'not explosively unstable at
    this probe scale'. No spectral stability claim is implied.
    """
    t = trajectory.times
    d = orbit_deviation(trajectory)
    keep = (t > 0) & (d > 0)
    if keep.sum() < 2:
        raise ValueError("need at least two nonzero deviation samples")
    rate = float(np.polyfit(t[keep], np.log(d[keep]), 1)[0])
    ratio = float(d[keep][-1] / d[keep][0])
    verdict = "explosive growth" if ratio > EXPLOSIVE_RATIO else "not explosively unstable at this probe scale"
    return GrowthReport(rate, ratio, verdict)
