"""Numerical reconstruction of the consistency conditions of each family.

The unknown relations between shape parameters, chemical potential and
couplings are found by driving the stationary residual to zero at a set of
collocation points (damped least squares), then validated on a full
4x-refined grid with the discrete operators of :mod:`ambec.model`.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .catalog import (
    AnsatzParams,
    FamilyId,
    from_assignment,
    family_parameters,
    profile_second_derivatives,
    profiles,
    validate,
)
from .grid import Grid, make_grid
from .model import SQRT2, Couplings, stationary_residual

log = logging.getLogger(__name__)


class DomainError(ValueError):
    """Assignment outside the domain of its family (e.g. y = B)."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10  # sup-norm of the collocation residual
    max_iter: int = 200
    fd_rel_step: float = 1e-6
    gtol: float = 1e-12  # normal-equation gradient, stagnation test
    lambda0: float = 1e-3
    rank_rtol: float = 1e-8
    n_points: int = 64
    validation_factor: int = 4
    fd_validation_tol: float = 1e-8


DEFAULT_OPTIONS = SolverOptions()


# --- residuals -------------------------------------------------------------

def support_scale(fid: FamilyId, values: Mapping[str, float]) -> float:
    """Half-width of the region carrying the profile structure."""
    fid = FamilyId.parse(fid)
    if fid.power_law:
        return 10.0 * math.sqrt(abs(values.get("B", 1.0)) or 1.0)
    beta = abs(values.get("beta", 1.0)) or 1.0
    extra = math.log1p(abs(values.get("B", 0.0))) if fid.kind == "droplet" else 0.0
    return (10.0 + extra) / beta


def collocation_points(half_width: float, n_points: int = 64) -> np.ndarray:
    """Chebyshev nodes on [-half_width, half_width] (denser in the tails)."""
    k = np.arange(n_points)
    return np.sort(half_width * np.cos(np.pi * (k + 0.5) / n_points))


def default_collocation_grid(fid: FamilyId, values: Mapping[str, float]) -> Grid:
    fid = FamilyId.parse(fid)
    if fid.power_law:
        half = 80.0 * math.sqrt(abs(values.get("B", 1.0)) or 1.0)
        return make_grid(-half, half, 16384, periodic=False)
    beta = abs(values.get("beta", 1.0)) or 1.0
    extra = math.log1p(abs(values.get("B", 0.0))) if fid.kind == "droplet" else 0.0
    half = (40.0 + extra) / beta
    return make_grid(-half, half, 2048)


def _split(fid, values):
    try:
        p, c, mu = from_assignment(fid, values)
        validate(fid, p)
    except ValueError as exc:
        raise DomainError(str(exc)) from None
    return p, c, mu


def _analytic_residual(fid, p: AnsatzParams, c: Couplings, mu: float, x):
    phi_a, phi_m = profiles(fid, p, x)
    d2a, d2m = profile_second_derivatives(fid, p, x)
    na, nm = phi_a**2, phi_m**2
    r_a = -0.5 * d2a + (c.g_a * na + c.g_am * nm) * phi_a + SQRT2 * c.alpha * phi_m * phi_a - mu * phi_a
    r_m = (-0.25 * d2m + (c.epsilon + c.g_m * nm + c.g_am * na) * phi_m
           + (c.alpha / SQRT2) * na - 2 * mu * phi_m)
    return r_a, r_m


def constraint_residual(family, assignment: Mapping[str, float], points) -> np.ndarray:
    """Stacked stationary residual (r_a, r_m).

    ``points`` is either an array of collocation abscissae (exact second
    derivatives of the ansatz) or a :class:`Grid` (spectral/FD derivatives
    of the sampled profiles, the validation route).
    """
    fid = FamilyId.parse(family)
    p, c, mu = _split(fid, assignment)
    if isinstance(points, Grid):
        phi_a, phi_m = profiles(fid, p, points.x)
        r_a, r_m = stationary_residual(phi_a, phi_m, c, mu, points)
    else:
        r_a, r_m = _analytic_residual(fid, p, c, mu, np.asarray(points, dtype=float))
    return np.concatenate([r_a, r_m])


# --- generic damped least squares -----------------------------------------------

@dataclass
class LMResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    message: str
    jacobian: np.ndarray | None = None


def _jacobian(fun, u, f0, rel_step):
    jac = np.empty((f0.size, u.size))
    for i in range(u.size):
        h = rel_step * max(1.0, abs(u[i]))
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        jac[:, i] = (fun(up) - fun(um)) / (2 * h)
    return jac


def levenberg_marquardt(fun: Callable[[np.ndarray], np.ndarray], u0, opts: SolverOptions = DEFAULT_OPTIONS) -> LMResult:
    """Minimise 0.5*|fun(u)|^2 with Marquardt-scaled damping.

    ``fun`` may raise :class:`DomainError` for trial points outside the
    admissible region; those steps are rejected like uphill steps. The
    Jacobian is by central differences with steps rel_step*max(1, |u_i|).
    """
    u = np.array(u0, dtype=float)
    f = fun(u)
    cost = 0.5 * f @ f
    lam = opts.lambda0
    message = "max_iter reached"
    jac = None
    polish = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        if np.max(np.abs(f), initial=0.0) < opts.tol:
            # a few extra steps tighten the parameters well below tol
            polish += 1
            if polish > 3:
                it -= 1
                break
        jac = _jacobian(fun, u, f, opts.fd_rel_step)
        grad = jac.T @ f
        jtj = jac.T @ jac
        if np.max(np.abs(grad)) < opts.gtol:
            message = "normal equations satisfied (gradient below gtol)"
            break
        diag = np.maximum(np.diag(jtj), 1e-12 * max(1.0, np.max(np.diag(jtj))))
        accepted = False
        while lam < 1e16:
            step = np.linalg.lstsq(jtj + lam * np.diag(diag), -grad, rcond=None)[0]
            trial = u + step
            try:
                ft = fun(trial)
                ct = 0.5 * ft @ ft
            except DomainError:
                ct = np.inf
            if np.isfinite(ct) and ct < cost:
                u, f, cost = trial, ft, ct
                lam = max(lam / 3.0, 1e-15)
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            message = "no descent step found (damping exhausted)"
            break
        if np.max(np.abs(step)) <= 1e-15 * (np.max(np.abs(u)) + 1e-15):
            message = "step below machine resolution"
            break
    if np.max(np.abs(f), initial=0.0) < opts.tol:
        message = "residual below tolerance"
    jac = _jacobian(fun, u, f, opts.fd_rel_step)
    return LMResult(u, f, it, message, jac)


# --- problems and solutions -----------------------------------------------------

@dataclass(frozen=True)
class ConstraintProblem:
    family: FamilyId
    knowns: Mapping[str, float]
    unknowns: tuple[str, ...]
    collocation: Grid | None = None

    def __post_init__(self):
        fid = FamilyId.parse(self.family)
        object.__setattr__(self, "family", fid)
        object.__setattr__(self, "knowns", {k: float(v) for k, v in self.knowns.items()})
        object.__setattr__(self, "unknowns", tuple(self.unknowns))
        names = set(family_parameters(fid))
        given = set(self.knowns) | set(self.unknowns)
        if set(self.knowns) & set(self.unknowns):
            raise ValueError(f"parameters both known and unknown: {sorted(set(self.knowns) & set(self.unknowns))}")
        if given != names:
            extra, missing = sorted(given - names), sorted(names - given)
            raise ValueError(
                f"family {fid.value} parameters are {sorted(names)}; "
                f"unexpected {extra}, undeclared {missing}"
            )
        if not self.unknowns:
            raise ValueError("no unknowns to solve for")
        k = self.knowns
        if fid.power_law and "y" in k and "B" in k and k["y"] == k["B"]:
            raise DomainError(f"family {fid.value}: constraint y ≠ B violated (y = B = {k['B']})")
        for name in ("B", "beta"):
            if name in k and k[name] <= 0 and name in family_parameters(fid):
                if not (name == "B" and fid.kind == "hyperbolic"):
                    raise DomainError(f"family {fid.value}: need {name} > 0 (got {k[name]})")

    def assignment(self, u: Sequence[float]) -> dict[str, float]:
        vals = dict(self.knowns)
        vals.update(zip(self.unknowns, map(float, u)))
        return {k: vals[k] for k in family_parameters(self.family)}

    def with_knowns(self, **updates) -> "ConstraintProblem":
        k = dict(self.knowns)
        k.update(updates)
        return ConstraintProblem(self.family, k, self.unknowns, self.collocation)


@dataclass
class ConstraintSolution:
    family: FamilyId
    values: dict[str, float]
    residual_norm: float
    validation_norm: float
    converged: bool
    iterations: int
    nullity: int = 0
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    message: str = ""
    sign_flipped: bool = False

    def ansatz(self):
        return from_assignment(self.family, self.values)


def _initial_vector(problem: ConstraintProblem, guess: Mapping[str, float]) -> np.ndarray:
    defaults = {"mu": -0.5}
    return np.array([float(guess.get(n, defaults.get(n, 1.0))) for n in problem.unknowns])


def validation_norm(fid, values, grid: Grid, factor: int = 4) -> float:
    fine = grid.refined(factor)
    return float(np.max(np.abs(constraint_residual(fid, values, fine))))


def solve(problem: ConstraintProblem, initial_guess: Mapping[str, float] | None = None,
          opts: SolverOptions = DEFAULT_OPTIONS) -> ConstraintSolution:
    """Solve for the declared unknowns; deterministic for fixed inputs.

    A rank-deficient Jacobian at the solution is reported through
    ``nullity`` (a continuum of solutions through the point), not treated
    as failure.
    """
    guess = dict(initial_guess or {})
    fid = problem.family
    u0 = _initial_vector(problem, guess)
    start = problem.assignment(u0)
    pts = collocation_points(support_scale(fid, start), opts.n_points)
    if len(problem.unknowns) > 2 * pts.size:
        raise ValueError("more unknowns than collocation equations")

    def fun(u):
        return constraint_residual(fid, problem.assignment(u), pts)

    _split(fid, start)  # domain check on the starting point
    res = levenberg_marquardt(fun, u0, opts)
    values = problem.assignment(res.x)
    flipped = False
    if values.get("A", 0.0) < 0 and "A" in problem.unknowns:
        values["A"] = -values["A"]
        flipped = True
    sv = np.linalg.svd(res.jacobian, compute_uv=False) if res.jacobian is not None else np.empty(0)
    rank = int(np.sum(sv > opts.rank_rtol * sv[0])) if sv.size and sv[0] > 0 else 0
    rnorm = float(np.max(np.abs(res.residual)))
    grid = problem.collocation or default_collocation_grid(fid, values)
    try:
        vnorm = validation_norm(fid, values, grid, opts.validation_factor)
    except DomainError:
        vnorm = math.inf
    vtol = max(10 * opts.tol, opts.fd_validation_tol) if not grid.periodic else 10 * opts.tol
    converged = rnorm < opts.tol and vnorm < vtol
    msg = res.message
    if rnorm < opts.tol and not vnorm < vtol:
        msg += f"; full-grid validation failed ({vnorm:.3g} >= {vtol:.3g})"
    return ConstraintSolution(
        fid, values, rnorm, vnorm, converged, res.iterations,
        nullity=len(problem.unknowns) - rank, singular_values=sv, message=msg,
        sign_flipped=flipped,
    )


def solve_many(problems: Sequence[ConstraintProblem], guesses: Sequence[Mapping[str, float]],
               opts: SolverOptions = DEFAULT_OPTIONS, workers: int = 1) -> list[ConstraintSolution]:
    """Independent solves, results in input order."""
    if workers <= 1:
        return [solve(p, g, opts) for p, g in zip(problems, guesses)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pg: solve(pg[0], pg[1], opts), zip(problems, guesses)))


# --- continuation -------------------------------------------------------------

@dataclass
class Branch:
    parameter: str
    points: list[ConstraintSolution]
    completed: bool
    boundary: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([s.values[name] for s in self.points])


def continuation(problem: ConstraintProblem, sweep: tuple[str, float, float, int],
                 initial_guess: Mapping[str, float] | None = None,
                 opts: SolverOptions = DEFAULT_OPTIONS) -> Branch:
    """Trace a branch over a known parameter with a secant predictor.

    Stops at the first point that is outside the family domain or fails to
    converge, recording the last good parameter value as the empirical
    branch boundary.
    """
    name, start, stop, steps = sweep
    if name not in problem.knowns:
        raise ValueError(f"sweep parameter {name!r} must be a known of the problem")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    values = np.linspace(start, stop, steps) if steps > 1 else np.array([start])
    sols: list[ConstraintSolution] = []
    guess = dict(initial_guess or {})
    for i, v in enumerate(values):
        if len(sols) >= 2:
            # secant predictor in the sweep parameter
            v0, v1 = sols[-2].values[name], sols[-1].values[name]
            w = (v - v1) / (v1 - v0)
            guess = {u: sols[-1].values[u] + w * (sols[-1].values[u] - sols[-2].values[u])
                     for u in problem.unknowns}
        elif sols:
            guess = {u: sols[-1].values[u] for u in problem.unknowns}
        last = f"{name}={sols[-1].values[name]:.6g}" if sols else "none"
        try:
            sol = solve(problem.with_knowns(**{name: float(v)}), guess, opts)
        except DomainError as exc:
            return Branch(name, sols, False, f"domain boundary at {name}={v:.6g} ({exc}); last good {last}")
        if not sol.converged:
            return Branch(name, sols, False,
                          f"lost convergence at {name}={v:.6g} (residual {sol.residual_norm:.3g}); last good {last}")
        sols.append(sol)
    return Branch(name, sols, True)


# --- symmetries and pairs -------------------------------------------------------

def rescale_assignment(family, values: Mapping[str, float], lam: float) -> dict[str, float]:
    """Map a solution to the one stretched by x -> lam*x.

    Amplitudes of the stretched profiles are kept; all energies and
    couplings scale as 1/lam^2.
    """
    fid = FamilyId.parse(family)
    out = dict(values)
    for k in ("mu", "epsilon", "g_a", "g_m", "g_am", "alpha"):
        out[k] = values[k] / lam**2
    if fid.power_law:
        out["B"] = values["B"] * lam**2
        out["y"] = values["y"] * lam**2
        out["A"] = values["A"] * (lam**2 if fid is FamilyId.III_pulse_ground else lam)
    else:
        out["beta"] = values["beta"] / lam
    return out


SHARED_MOLECULAR = {"droplet": ("B", "D", "beta"), "pulse": ("B", "D", "y"), "hyperbolic": ("D", "beta", "y")}


def pair_consistency(ground: ConstraintSolution, excited: ConstraintSolution) -> dict[str, float]:
    """Absolute differences of the molecular-side parameters of a pair."""
    keys = SHARED_MOLECULAR[ground.family.kind] + ("mu", "epsilon", "g_a", "g_m", "g_am", "alpha")
    return {k: abs(ground.values[k] - excited.values[k]) for k in keys}


def solve_shared_pair(ground_family, knowns: Mapping[str, float], unknowns: Sequence[str],
                      initial_guess: Mapping[str, float], opts: SolverOptions = DEFAULT_OPTIONS):
    """Look for one coupling set carrying both members of a pair.

    Parameters are those of the ground family plus ``A_excited``. Returns
    ``(values, residual_sup_norm, converged)``; non-convergence indicates
    that no shared-coupling pair exists near the guess.
    """
    g_fid = FamilyId.parse(ground_family)
    e_fid = g_fid.partner
    names = family_parameters(g_fid) + ("A_excited",)
    if set(knowns) | set(unknowns) != set(names):
        raise ValueError(f"shared pair parameters are {sorted(names)}")
    unknowns = tuple(unknowns)
    x_half = support_scale(g_fid, {**knowns, **initial_guess})
    pts = collocation_points(x_half, opts.n_points)

    def full(u):
        vals = dict(knowns)
        vals.update(zip(unknowns, map(float, u)))
        return vals

    def fun(u):
        vals = full(u)
        exc = {k: vals[k] for k in family_parameters(e_fid) if k != "A"}
        exc["A"] = vals["A_excited"]
        gnd = {k: vals[k] for k in family_parameters(g_fid)}
        return np.concatenate([constraint_residual(g_fid, gnd, pts), constraint_residual(e_fid, exc, pts)])

    u0 = np.array([float(initial_guess.get(n, 1.0)) for n in unknowns])
    res = levenberg_marquardt(fun, u0, opts)
    rnorm = float(np.max(np.abs(res.residual)))
    return full(res.x), rnorm, rnorm < opts.tol
