"""Real- and imaginary-time evolution of the coupled mean-field equations.

Two real-time schemes: Strang splitting with exact spectral kinetic phases
and an RK4 local substep (periodic grids), and a method-of-lines RK4 with
4th-order finite differences (non-periodic grids, power-law families).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .grid import Grid, fd_derivative, fd_weights
from .model import (
    ZERO_POTENTIAL,
    Couplings,
    FieldPair,
    Potential,
    continuity_residual,
    energy,
    hamiltonian_action,
    local_terms,
    particle_numbers,
)

log = logging.getLogger(__name__)

SCHEMES = ("strang_spectral", "rk4_fd")
CFL_SAFETY = 1.0  # RK4 with the 4th-order Laplacian is stable up to ~1.05 dx^2


class PropagationError(RuntimeError):
    """Step failure; carries the trajectory recorded so far."""

    def __init__(self, message, t, trajectory=None):
        super().__init__(message)
        self.t = t
        self.trajectory = trajectory


class CFLWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class EvolveSpec:
    dt: float
    t_end: float
    scheme: str = "strang_spectral"
    observer_stride: int = 1
    noise_amplitude: float = 0.0
    seed: int = 0
    snapshot_times: tuple[float, ...] = ()
    continuity: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive (got {self.dt})")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be >= 0 (got {self.t_end})")
        if self.t_end > 0 and abs(self.t_end / self.dt - round(self.t_end / self.dt)) > 1e-6:
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if int(self.observer_stride) != self.observer_stride or self.observer_stride < 1:
            raise ValueError(f"observer_stride must be an integer >= 1 (got {self.observer_stride})")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        for t in self.snapshot_times:
            if not 0 <= t <= self.t_end + 0.5 * self.dt:
                raise ValueError(f"snapshot time {t} outside [0, t_end]")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_unwrap(self, omega: float) -> None:
        """Guard against phase aliasing between samples: |omega| dt stride < pi/2."""
        inc = abs(omega) * self.dt * self.observer_stride
        if inc >= math.pi / 2:
            raise ValueError(
                f"phase advance per sample {inc:.3g} >= pi/2 (|omega|={abs(omega):.3g}); "
                "reduce observer_stride or dt"
            )


@dataclass(frozen=True)
class DiagnosticsReport:
    t: float
    N_a: float
    N_m: float
    N: float
    E: float
    overlap_a: complex  # <psi_a(0), psi_a(t)> / <psi_a(0), psi_a(0)>
    overlap_m: complex
    continuity_max: float = math.nan
    extra: Mapping[str, float] = field(default_factory=dict)


@dataclass
class Trajectory:
    samples: list[tuple[float, DiagnosticsReport]] = field(default_factory=list)
    snapshots: dict[float, FieldPair] = field(default_factory=dict)
    final: FieldPair | None = None
    seed: int | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    def series(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) if hasattr(r, name) else r.extra[name] for _, r in self.samples]
        return np.array(vals)

    def append(self, report: DiagnosticsReport) -> None:
        if self.samples and report.t <= self.samples[-1][0]:
            raise ValueError("sample times must be strictly increasing")
        self.samples.append((report.t, report))


# --- Strang splitting ---------------------------------------------------------

def _pot(p: Potential):
    return p if p is not None else ZERO_POTENTIAL


def _local_rhs(a, m, c, p):
    la, lm = local_terms(a, m, c, p)
    return -1j * la, -1j * lm


def _rk4_local(a, m, c, p, dt):
    k1a, k1m = _local_rhs(a, m, c, p)
    k2a, k2m = _local_rhs(a + 0.5 * dt * k1a, m + 0.5 * dt * k1m, c, p)
    k3a, k3m = _local_rhs(a + 0.5 * dt * k2a, m + 0.5 * dt * k2m, c, p)
    k4a, k4m = _local_rhs(a + dt * k3a, m + dt * k3m, c, p)
    return (a + dt / 6 * (k1a + 2 * k2a + 2 * k3a + k4a),
            m + dt / 6 * (k1m + 2 * k2m + 2 * k3m + k4m))


class _StrangStepper:
    def __init__(self, grid: Grid, c: Couplings, p: Potential, dt: float):
        if not grid.periodic:
            raise ValueError("Strang splitting needs a periodic grid")
        k2 = grid.wavenumbers**2
        # half-step kinetic phases, prefactors 1/2 (atoms) and 1/4 (molecules)
        self.half_a = np.exp(-0.25j * k2 * dt)
        self.half_m = np.exp(-0.125j * k2 * dt)
        self.c, self.p, self.dt = c, _pot(p), dt

    def __call__(self, a, m):
        fft, ifft = np.fft.fft, np.fft.ifft
        a = ifft(self.half_a * fft(a))
        m = ifft(self.half_m * fft(m))
        a, m = _rk4_local(a, m, self.c, self.p, self.dt)
        return ifft(self.half_a * fft(a)), ifft(self.half_m * fft(m))


def step_strang(f: FieldPair, p: Potential, c: Couplings, dt: float) -> FieldPair:
    """One Strang step: kinetic half step, RK4 local step, kinetic half step."""
    a, m = _StrangStepper(f.grid, c, p, dt)(f.psi_a, f.psi_m)
    return _checked(f, a, m, f.t + dt)


# --- finite-difference method of lines ---------------------------------------------

@dataclass(frozen=True)
class FDBoundary:
    """Ghost-point closure: ghost = edge value x fixed ratio.

    The ratios are the reference profile extrapolated (5-point Lagrange)
    to the two ghost positions and divided by its edge value, so a state
    rotating as a whole (psi = phi e^{-i w t}) sees exactly its own
    continuation. Edges with zero reference value get zero ghosts.
    """

    ratios: tuple  # ((left_a, right_a), (left_m, right_m)), each length-2 arrays

    @classmethod
    def from_fields(cls, f: FieldPair) -> "FDBoundary":
        out = []
        for psi in (f.psi_a, f.psi_m):
            sides = []
            for data in (psi[:7], psi[::-1][:7]):
                r = []
                for ghost in (2, 1):  # distance outside the edge
                    w = fd_weights(tuple(range(ghost, ghost + 5)), 0)
                    val = sum(wk * data[k] for k, wk in enumerate(w))
                    r.append(val / data[0] if data[0] != 0 else 0.0)
                sides.append(np.array(r, dtype=complex))
            # left ghosts ordered by increasing x: (-2, -1); right: (+1, +2)
            out.append((sides[0], sides[1][::-1]))
        return cls(tuple(out))

    def ghosts(self, psi, species: int):
        left, right = self.ratios[species]
        return left * psi[0], right * psi[-1]


def cfl_limit(grid: Grid) -> float:
    return CFL_SAFETY * grid.dx**2


class _FDStepper:
    def __init__(self, grid: Grid, c: Couplings, p: Potential, dt: float, boundary: FDBoundary):
        if abs(dt) > cfl_limit(grid):
            warnings.warn(
                f"dt={abs(dt):.3g} exceeds the RK4/FD stability estimate "
                f"{CFL_SAFETY}*dx^2={cfl_limit(grid):.3g}", CFLWarning, stacklevel=3
            )
        self.grid, self.c, self.p, self.dt, self.bc = grid, c, _pot(p), dt, boundary

    def rhs(self, a, m):
        dx = self.grid.dx
        la, lm = local_terms(a, m, self.c, self.p)
        d2a = fd_derivative(a, dx, 2, self.bc.ghosts(a, 0))
        d2m = fd_derivative(m, dx, 2, self.bc.ghosts(m, 1))
        return -1j * (-0.5 * d2a + la), -1j * (-0.25 * d2m + lm)

    def __call__(self, a, m):
        dt = self.dt
        k1a, k1m = self.rhs(a, m)
        k2a, k2m = self.rhs(a + 0.5 * dt * k1a, m + 0.5 * dt * k1m)
        k3a, k3m = self.rhs(a + 0.5 * dt * k2a, m + 0.5 * dt * k2m)
        k4a, k4m = self.rhs(a + dt * k3a, m + dt * k3m)
        return (a + dt / 6 * (k1a + 2 * k2a + 2 * k3a + k4a),
                m + dt / 6 * (k1m + 2 * k2m + 2 * k3m + k4m))


def step_fd_rk4(f: FieldPair, p: Potential, c: Couplings, dt: float,
                boundary: FDBoundary | None = None) -> FieldPair:
    """One RK4 step of the FD semi-discretisation (boundary from ``f`` by default)."""
    bc = boundary or FDBoundary.from_fields(f)
    a, m = _FDStepper(f.grid, c, p, dt, bc)(f.psi_a, f.psi_m)
    return _checked(f, a, m, f.t + dt)


def _checked(f, a, m, t):
    if not (np.isfinite(np.sum(a)) and np.isfinite(np.sum(m))):
        raise PropagationError(f"non-finite field values at t={t:.6g}", t)
    return FieldPair(a, m, f.grid, t)


def make_stepper(scheme: str, f: FieldPair, p: Potential, c: Couplings, dt: float, boundary=None):
    if scheme == "strang_spectral":
        return _StrangStepper(f.grid, c, p, dt)
    if scheme == "rk4_fd":
        if f.grid.periodic:
            raise ValueError("rk4_fd needs a non-periodic grid")
        return _FDStepper(f.grid, c, p, dt, boundary or FDBoundary.from_fields(f))
    raise ValueError(f"unknown scheme {scheme!r}")


# --- driver ----------------------------------------------------------------------

def add_noise(f: FieldPair, amplitude: float, seed: int) -> FieldPair:
    """Seeded complex Gaussian noise, scaled by each field's peak modulus."""
    if amplitude == 0:
        return f
    rng = np.random.default_rng(seed)
    out = []
    for psi in (f.psi_a, f.psi_m):
        xi = rng.standard_normal(psi.size) + 1j * rng.standard_normal(psi.size)
        out.append(psi + amplitude * np.max(np.abs(psi)) * xi / math.sqrt(2))
    return f.replace(*out)


def rotation_rates(f: FieldPair, c: Couplings, p: Potential | None = None) -> tuple[float, float]:
    """Rayleigh-quotient frequencies of each species (mu and 2 mu if stationary)."""
    ha, hm = hamiltonian_action(f, c, _pot(p))
    g = f.grid
    out = []
    for psi, h in ((f.psi_a, ha), (f.psi_m, hm)):
        norm = g.integrate(np.abs(psi) ** 2).real
        out.append(float(np.real(g.integrate(np.conj(psi) * h)) / norm) if norm > 0 else 0.0)
    return out[0], out[1]


Observer = Callable[[FieldPair], Mapping[str, float]]


def evolve(f0: FieldPair, spec: EvolveSpec, p: Potential | None, c: Couplings,
           observers: Sequence[Observer] = ()) -> Trajectory:
    """Step ``f0`` to ``spec.t_end`` recording diagnostics every stride.

    Each sample holds N_a, N_m, N, E, overlaps with the initial fields, the
    sup-norm of the continuity residual (centred over one step) and the
    outputs of ``observers``.
    """
    p = _pot(p)
    traj = Trajectory(seed=spec.seed if spec.noise_amplitude else None)
    f = add_noise(f0, spec.noise_amplitude, spec.seed)
    for w in rotation_rates(f, c, p):
        spec.check_unwrap(w)
    stepper = make_stepper(spec.scheme, f, p, c, spec.dt)
    back = make_stepper(spec.scheme, f, p, c, -spec.dt, getattr(stepper, "bc", None)) if spec.continuity else None
    ref_a, ref_m = f.psi_a.copy(), f.psi_m.copy()
    g = f.grid
    norm_a = g.integrate(np.abs(ref_a) ** 2).real
    norm_m = g.integrate(np.abs(ref_m) ** 2).real

    def report(cur: FieldPair, prev: FieldPair | None, nxt: FieldPair | None):
        na, nm, n = particle_numbers(cur)
        ov_a = complex(g.integrate(np.conj(ref_a) * cur.psi_a) / norm_a) if norm_a > 0 else 0j
        ov_m = complex(g.integrate(np.conj(ref_m) * cur.psi_m) / norm_m) if norm_m > 0 else 0j
        cont = math.nan
        if prev is not None and nxt is not None:
            cont = float(np.max(np.abs(continuity_residual([prev, cur, nxt]))))
        extra = {}
        for obs in observers:
            extra.update(obs(cur))
        return DiagnosticsReport(cur.t, na, nm, n, energy(cur, p, c), ov_a, ov_m, cont, extra)

    n_steps = spec.n_steps
    stride = int(spec.observer_stride)
    sample_steps = set(range(0, n_steps + 1, stride)) | {n_steps}
    snap_steps = {int(round(t / spec.dt)): t for t in spec.snapshot_times}

    def advance(a, m, s, step_fn):
        a, m = step_fn(a, m)
        t = (s + 1) * spec.dt if step_fn is stepper else -spec.dt
        if not (np.isfinite(np.sum(a)) and np.isfinite(np.sum(m))):
            raise PropagationError(f"non-finite field values at t={t:.6g}", t, traj)
        return a, m

    a, m = f.psi_a, f.psi_m
    prev = None
    if back is not None:
        pa, pm = advance(a, m, -1, back)
        prev = FieldPair(pa, pm, g, -spec.dt)
    pending = None  # sample waiting for its forward neighbour
    for s in range(n_steps + 1):
        t = s * spec.dt
        cur = FieldPair(a, m, g, t)
        if pending is not None:
            traj.append(report(pending[1], pending[0], cur))
            pending = None
        if s in snap_steps:
            traj.snapshots[snap_steps[s]] = cur
        if s in sample_steps:
            if back is not None:
                pending = (prev, cur)
            else:
                traj.append(report(cur, None, None))
        if s == n_steps:
            break
        a, m = advance(a, m, s, stepper)
        prev = cur
    if pending is not None:
        na_, nm_ = advance(a, m, n_steps, stepper)
        traj.append(report(pending[1], pending[0], FieldPair(na_, nm_, g, (n_steps + 1) * spec.dt)))
    traj.final = FieldPair(a, m, g, n_steps * spec.dt)
    return traj


# --- imaginary time ----------------------------------------------------------------

@dataclass
class RelaxResult:
    field: FieldPair
    mu: float
    energy: float
    iterations: int
    converged: bool
    gradient_norm: float
    message: str = ""


class RelaxError(RuntimeError):
    pass


def imaginary_time_relax(f0: FieldPair, c: Couplings, target_N: float, spec: EvolveSpec,
                         p: Potential | None = None, energy_rtol: float = 1e-12,
                         gradient_tol: float = 1e-9) -> RelaxResult:
    """Normalised gradient flow to a stationary state at fixed N = N_a + 2 N_m.

    Semi-implicit step (kinetic part implicit in Fourier space, local part
    explicit) with pseudo-time step ``spec.dt``, followed by a common
    rescaling of both fields to ``target_N``. Stops once the relative energy
    change per step is below ``energy_rtol`` and the sup-norm of the
    constrained gradient (H - mu) psi is below ``gradient_tol``; at most
    ``spec.t_end / spec.dt`` steps.
    """
    if not target_N > 0:
        raise ValueError(f"target_N must be positive (got {target_N})")
    p = _pot(p)
    g = f0.grid
    if not g.periodic:
        raise ValueError("imaginary-time relaxation uses a periodic grid")
    dtau = spec.dt
    k2 = g.wavenumbers**2
    inv_a = 1.0 / (1.0 + 0.5 * dtau * k2)
    inv_m = 1.0 / (1.0 + 0.25 * dtau * k2)
    fft, ifft = np.fft.fft, np.fft.ifft

    def rescale(a, m):
        n = g.integrate(np.abs(a) ** 2 + 2 * np.abs(m) ** 2).real
        if not n > 1e-300:
            raise RelaxError("field collapsed to zero (no bound state at these couplings)")
        s = math.sqrt(target_N / n)
        return a * s, m * s

    def chem_potential(a, m, ha, hm):
        num = g.integrate(np.conj(a) * ha + 2 * np.conj(m) * hm).real
        den = g.integrate(np.abs(a) ** 2 + 4 * np.abs(m) ** 2).real
        return num / den

    a, m = rescale(np.asarray(f0.psi_a, complex), np.asarray(f0.psi_m, complex))
    e_old = energy(FieldPair(a, m, g), p, c)
    mu = math.nan
    grad = math.inf
    it = 0
    max_steps = max(1, spec.n_steps)
    for it in range(1, max_steps + 1):
        la, lm = local_terms(a, m, c, p)
        ha = -0.5 * g.derivative(a, 2) + la
        hm = -0.25 * g.derivative(m, 2) + lm
        mu = chem_potential(a, m, ha, hm)
        grad = float(max(np.max(np.abs(ha - mu * a)), np.max(np.abs(hm - 2 * mu * m))))
        # implicit kinetic, explicit local and multiplier terms
        a = ifft(inv_a * fft(a - dtau * (la - mu * a)))
        m = ifft(inv_m * fft(m - dtau * (lm - 2 * mu * m)))
        a, m = rescale(a, m)
        if not (np.isfinite(np.sum(a)) and np.isfinite(np.sum(m))):
            raise RelaxError(f"non-finite fields after {it} steps")
        e_new = energy(FieldPair(a, m, g), p, c)
        de = abs(e_new - e_old) / max(abs(e_new), 1e-300)
        e_old = e_new
        if de < energy_rtol and grad < gradient_tol:
            return RelaxResult(FieldPair(a, m, g), mu, e_new, it, True, grad, "converged")
    return RelaxResult(FieldPair(a, m, g), mu, e_old, it, False, grad,
                       f"not converged after {it} steps (gradient {grad:.3g})")
