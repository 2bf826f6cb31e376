"""Coupled atomic/molecular mean-field model.

Natural units (hbar = m_atom = 1). The molecular field carries twice the
atomic mass, hence the 1/4 kinetic prefactor, and rotates at twice the
atomic chemical potential in stationary states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .grid import Grid

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Couplings:
    """Interaction constants: atom-atom, molecule-molecule, atom-molecule,
    photoassociation strength ``alpha`` and detuning ``epsilon``."""

    g_a: float = 0.0
    g_m: float = 0.0
    g_am: float = 0.0
    alpha: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("g_a", "g_m", "g_am", "alpha", "epsilon"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"coupling {name}={v} is not finite")
            object.__setattr__(self, name, float(v))


@dataclass(frozen=True)
class Potential:
    """Trap potentials; ``None`` means identically zero."""

    v_a: np.ndarray | None = None
    v_m: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        return all(v is None or not np.any(v) for v in (self.v_a, self.v_m))


ZERO_POTENTIAL = Potential()


@dataclass(frozen=True)
class FieldPair:
    psi_a: np.ndarray
    psi_m: np.ndarray
    grid: Grid
    t: float = 0.0

    def __post_init__(self):
        a = np.array(self.psi_a, dtype=complex)
        m = np.array(self.psi_m, dtype=complex)
        if a.shape != (self.grid.n,) or m.shape != (self.grid.n,):
            raise ValueError(
                f"field shapes {a.shape}, {m.shape} do not match grid n={self.grid.n}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(m))):
            raise ValueError(f"non-finite field values at t={self.t}")
        a.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "psi_a", a)
        object.__setattr__(self, "psi_m", m)
        object.__setattr__(self, "t", float(self.t))

    def replace(self, psi_a=None, psi_m=None, t=None) -> "FieldPair":
        return FieldPair(
            self.psi_a if psi_a is None else psi_a,
            self.psi_m if psi_m is None else psi_m,
            self.grid,
            self.t if t is None else t,
        )

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "FieldPair":
        return cls(np.zeros(grid.n), np.zeros(grid.n), grid, t)


def _check_pair(a, m):
    if np.shape(a) != np.shape(m):
        raise ValueError(f"mismatched array lengths {np.shape(a)} vs {np.shape(m)}")


def local_terms(psi_a, psi_m, c: Couplings, p: Potential = ZERO_POTENTIAL):
    """Non-derivative parts of the Hamiltonian action on (psi_a, psi_m)."""
    na = np.abs(psi_a) ** 2
    nm = np.abs(psi_m) ** 2
    va = 0.0 if p.v_a is None else p.v_a
    vm = 0.0 if p.v_m is None else p.v_m
    la = (va + c.g_a * na + c.g_am * nm) * psi_a + SQRT2 * c.alpha * psi_m * np.conj(psi_a)
    lm = (vm + c.epsilon + c.g_m * nm + c.g_am * na) * psi_m + (c.alpha / SQRT2) * psi_a**2
    return la, lm


def hamiltonian_action(f: FieldPair, c: Couplings, p: Potential = ZERO_POTENTIAL):
    """Functional derivatives dE/dpsi_a*, dE/dpsi_m*; i d/dt psi = this."""
    la, lm = local_terms(f.psi_a, f.psi_m, c, p)
    g = f.grid
    return -0.5 * g.derivative(f.psi_a, 2) + la, -0.25 * g.derivative(f.psi_m, 2) + lm


def stationary_residual(phi_a, phi_m, c: Couplings, mu: float, g: Grid):
    """Residual of the time-independent equations for real profiles.

    With psi_a = phi_a e^{-i mu t}, psi_m = phi_m e^{-2 i mu t} and zero
    trap, exact solutions give residuals at discretisation level only.
    """
    phi_a = np.asarray(phi_a, dtype=float)
    phi_m = np.asarray(phi_m, dtype=float)
    _check_pair(phi_a, phi_m)
    la, lm = local_terms(phi_a, phi_m, c)
    r_a = -0.5 * g.derivative(phi_a, 2) + la - mu * phi_a
    r_m = -0.25 * g.derivative(phi_m, 2) + lm - 2 * mu * phi_m
    return np.real(r_a), np.real(r_m)


class ParticleNumbers(NamedTuple):
    N_a: float
    N_m: float
    N: float


def particle_numbers(f: FieldPair) -> ParticleNumbers:
    """N_a, N_m and the conserved combination N = N_a + 2 N_m."""
    g = f.grid
    n_a = float(g.integrate(np.abs(f.psi_a) ** 2))
    n_m = float(g.integrate(np.abs(f.psi_m) ** 2))
    return ParticleNumbers(n_a, n_m, n_a + 2 * n_m)


def excess_molecules(f: FieldPair, background: float) -> float:
    """Background-subtracted molecule number, int(|psi_m|^2 - |bg|^2) dx."""
    return float(f.grid.integrate(np.abs(f.psi_m) ** 2 - abs(background) ** 2))


def energy(f: FieldPair, p: Potential, c: Couplings) -> float:
    g = f.grid
    a, m = f.psi_a, f.psi_m
    na, nm = np.abs(a) ** 2, np.abs(m) ** 2
    va = 0.0 if p.v_a is None else p.v_a
    vm = 0.0 if p.v_m is None else p.v_m
    dens = (
        0.5 * np.abs(g.derivative(a)) ** 2
        + 0.25 * np.abs(g.derivative(m)) ** 2
        + va * na
        + (vm + c.epsilon) * nm
        + 0.5 * c.g_a * na**2
        + 0.5 * c.g_m * nm**2
        + c.g_am * na * nm
        + SQRT2 * c.alpha * np.real(np.conj(m) * a**2)
    )
    return float(g.integrate(dens))


@dataclass(frozen=True)
class MadelungDecomposition:
    n_a: np.ndarray
    n_m: np.ndarray
    phi_a: np.ndarray  # NaN where masked
    phi_m: np.ndarray
    mask_a: np.ndarray = field(repr=False)  # True where the phase is defined
    mask_m: np.ndarray = field(repr=False)


def _segments(mask: np.ndarray):
    """Index ranges of contiguous True runs."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1))


def _masked_phase(psi, mask):
    phase = np.full(psi.shape, np.nan)
    for lo, hi in _segments(mask):
        phase[lo:hi] = np.unwrap(np.angle(psi[lo:hi]))
    return phase


def madelung(f: FieldPair, floor: float | None = None) -> MadelungDecomposition:
    """Split both fields into density and (segment-wise unwrapped) phase.

    ``floor`` is an absolute density threshold; by default 1e-12 of the
    largest density of each field.
    """
    out = {}
    for key, psi in (("a", f.psi_a), ("m", f.psi_m)):
        n = np.abs(psi) ** 2
        fl = floor if floor is not None else 1e-12 * n.max()
        if floor is not None and floor <= 0:
            raise ValueError("floor must be positive")
        mask = n > fl if n.max() > 0 else np.zeros(n.shape, bool)
        out[key] = (n, _masked_phase(psi, mask), mask)
    return MadelungDecomposition(
        out["a"][0], out["m"][0], out["a"][1], out["m"][1], out["a"][2], out["m"][2]
    )


def probability_current(f: FieldPair) -> np.ndarray:
    """Flux of N_a + 2 N_m: Im(psi_a* psi_a') + Im(psi_m* psi_m').

    The molecular density carries weight 2 and its velocity weight 1/2
    (mass 2), so both species enter the flux with unit weight.
    """
    g = f.grid
    ja = np.imag(np.conj(f.psi_a) * g.derivative(f.psi_a))
    jm = np.imag(np.conj(f.psi_m) * g.derivative(f.psi_m))
    return ja + jm


def _literal_flux(f: FieldPair, floor: float | None) -> np.ndarray:
    # n_j d(phi_j)/dx from the masked Madelung phases
    md = madelung(f, floor)
    total = np.zeros(f.grid.n)
    for n, phi, mask in ((md.n_a, md.phi_a, md.mask_a), (md.n_m, md.phi_m, md.mask_m)):
        for lo, hi in _segments(mask):
            if hi - lo < 2:
                continue
            total[lo:hi] += n[lo:hi] * np.gradient(phi[lo:hi], f.grid.dx, edge_order=2)
    return total


def continuity_residual(
    snapshots: Sequence[FieldPair], literal: bool = False, floor: float | None = None
) -> np.ndarray:
    """Pointwise residual of d/dt(n_a + 2 n_m) + d/dx J at the middle snapshot.

    Time derivative by centred difference of three equally spaced
    snapshots. ``literal=True`` builds the flux from Madelung phases,
    sum_j n_j dphi_j/dx, instead of the current Im(psi* psi').
    """
    if len(snapshots) != 3:
        raise ValueError("need exactly three snapshots (t-dt, t, t+dt)")
    s0, s1, s2 = snapshots
    dt1, dt2 = s1.t - s0.t, s2.t - s1.t
    if dt1 <= 0 or not np.isclose(dt1, dt2, rtol=1e-9, atol=0.0):
        raise ValueError(f"snapshots must be equally spaced in time (got {dt1}, {dt2})")

    def rho(s):
        return np.abs(s.psi_a) ** 2 + 2 * np.abs(s.psi_m) ** 2

    drho = (rho(s2) - rho(s0)) / (dt1 + dt2)
    flux = _literal_flux(s1, floor) if literal else probability_current(s1)
    return drho + s1.grid.derivative(flux)
