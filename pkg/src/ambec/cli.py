"""Command-line front end.

    ambec catalog | verify | evolve | diagnose | sweep | solve-constraints

Options come from flags and/or an INI file (``--config``); flags win.
Artifacts go to ``--output`` or ``$AMBEC_OUTPUT_ROOT/<command>``, together
with ``manifest.json`` and a resolved ``config.ini`` that reproduces the
run. Exit status: 0 all checks passed, 1 a numerical check failed (see
``failures.json``), 2 bad input.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import (
    CONSTRAINTS_TEXT,
    PRESETS,
    AnsatzParams,
    FamilyId,
    default_grid,
    droplet_scaling,
    eval_family,
    family_parameters,
    from_assignment,
    get_preset,
    hyperbolic_y0_relations,
    profiles,
    validate,
)
from .constraints import (
    DEFAULT_OPTIONS,
    ConstraintProblem,
    DomainError,
    SolverOptions,
    constraint_residual,
    continuation,
    solve,
    solve_many,
)
from .diagnostics import (
    ModeBasis,
    chemical_potential_from,
    flat_top_metric,
    node_count,
    project_qubit,
    qubit_observer,
    tail_fit,
)
from .grid import Grid, make_grid
from .model import ZERO_POTENTIAL, FieldPair, continuity_residual, energy, particle_numbers
from .propagator import (
    DiagnosticsReport,
    EvolveSpec,
    PropagationError,
    Trajectory,
    evolve,
    rotation_rates,
)
from .snapshots import load_snapshot, save_snapshot

log = logging.getLogger("ambec")

COMMANDS = ("catalog", "solve-constraints", "verify", "evolve", "diagnose", "sweep")
OUTPUT_ENV = "AMBEC_OUTPUT_ROOT"

# documented defaults; every threshold in a report comes from here or the config
TOLERANCES = {
    "residual_spectral": 1e-10,
    "residual_fd": 1e-8,
    "y0_relations": 1e-8,
    "drift_N": 1e-8,
    "drift_E": 1e-8,
    "phase_slope": 1e-6,
    "solver_tol": DEFAULT_OPTIONS.tol,
    "fd_validation_tol": DEFAULT_OPTIONS.fd_validation_tol,
}
VERIFY_FD_POINTS = 65536
DEFAULT_UNKNOWNS = ("A", "mu", "epsilon", "g_a", "g_m", "g_am")

def _list(s):
    return tuple(v.strip() for v in str(s).split(",") if v.strip())


def _float_list(s):
    return tuple(float(v) for v in _list(s))


def _kv(s):
    out = {}
    for item in _list(s):
        k, sep, v = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        out[k.strip()] = float(v)
    return out


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# section -> key -> parser; anything else in a config file is rejected
SCHEMA = {
    "run": {"command": str, "output": str, "seed": int, "workers": int, "plot": _bool},
    "family": {"family": str, "preset": str, "A": float, "B": float, "D": float,
               "beta": float, "y": float, "scan": str},
    "couplings": {"mu": float, "epsilon": float, "g_a": float, "g_m": float,
                  "g_am": float, "alpha": float},
    "grid": {"n": int, "x_min": float, "x_max": float, "periodic": _bool},
    "evolve": {"dt": float, "t_end": float, "scheme": str, "stride": int, "noise": float,
               "snapshots": _float_list, "check": _bool, "superpose": _bool},
    "problem": {"knowns": _kv, "unknowns": _list, "guess": _kv},
    "sweep": {"param": str, "from": float, "to": float, "steps": int, "unknowns": _list},
    "solver": {"tol": float, "max_iter": int, "n_points": int},
    "diagnose": {"snapshot": _list, "trajectory": str, "half_width": float},
}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict[str, dict]:
    """Parse and type-check an INI config; unknown sections/keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (A, B, D)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    out: dict[str, dict] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]; allowed: {sorted(SCHEMA)}")
        out[sec] = {}
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]; allowed: {sorted(SCHEMA[sec])}")
            try:
                out[sec][key] = SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None
    return out


def write_config(cfg: dict[str, dict]) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec in SCHEMA:
        vals = cfg.get(sec)
        if not vals:
            continue
        cp.add_section(sec)
        for k, v in vals.items():
            if isinstance(v, dict):
                v = ", ".join(f"{a}={_fmt(b)}" for a, b in v.items())
            elif isinstance(v, tuple):
                v = ", ".join(_fmt(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = _fmt(v)
            cp.set(sec, k, str(v))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


# --- run context ---------------------------------------------------------------

@dataclass
class Run:
    command: str
    cfg: dict
    outdir: Path
    artifacts: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)

    def get(self, sec, key, default=None):
        return self.cfg.get(sec, {}).get(key, default)

    def path(self, name) -> Path:
        p = self.outdir / name
        self.artifacts.append(name)
        return p

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def check(self, name, value, threshold, passed=None):
        ok = (value < threshold) if passed is None else passed
        if not ok:
            self.failures.append({"check": name, "value": _fmt(value), "threshold": _fmt(threshold)})
        self.tolerances[name] = threshold
        return ok

    def finish(self) -> int:
        files = {}
        for name in self.artifacts:
            p = self.outdir / name
            if p.exists():
                files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        (self.outdir / "config.ini").write_text(write_config(self.cfg))
        manifest = {
            "tool": "ambec", "version": __version__, "command": self.command,
            "config": json.loads(json.dumps(self.cfg, default=list)),
            "tolerances": {**TOLERANCES, **self.tolerances},
            "artifacts": files, "status": "fail" if self.failures else "pass",
        }
        (self.outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if self.failures:
            (self.outdir / "failures.json").write_text(
                json.dumps({"failures": self.failures}, indent=2) + "\n")
            for f in self.failures:
                print(f"FAIL {f['check']}: {f['value']} (threshold {f['threshold']})", file=sys.stderr)
            return 1
        return 0


# --- shared helpers -----------------------------------------------------------

def _family_setup(run: Run):
    """(fid, preset name, assignment) with config/flag overrides applied."""
    fam = run.get("family", "family")
    if fam is None:
        raise ConfigError("no family given (--family or [family] family)")
    fid = FamilyId.parse(fam)
    name = run.get("family", "preset")
    try:
        pre = get_preset(fid, name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    values = pre.as_assignment()
    names = family_parameters(fid)
    for sec in ("family", "couplings"):
        for k, v in run.cfg.get(sec, {}).items():
            if k in ("family", "preset", "scan"):
                continue
            if k not in names:
                raise ConfigError(f"parameter {k!r} does not belong to family {fid.value}")
            values[k] = float(v)
    p, _, _ = from_assignment(fid, values)
    try:
        validate(fid, p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return fid, pre.name, values


def _grid_from(run: Run, fid, p: AnsatzParams, fd_points=None) -> Grid:
    g = default_grid(fid, p, fd_points if fid.power_law and fd_points else None)
    sec = run.cfg.get("grid", {})
    if not sec:
        return g
    return make_grid(sec.get("x_min", g.x_min), sec.get("x_max", g.x_max), sec.get("n", g.n),
                     sec.get("periodic", g.periodic))


def emit_plot_data(run: Run, name: str, header, columns, render: bool = False):
    """Write one whitespace-separated view file (plus a PNG if requested)."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    path = run.path(f"plot_{name}.dat")
    with open(path, "w") as fh:
        fh.write("# " + "  ".join(header) + "\n")
        if cols and cols[0].size:
            for row in zip(*cols):
                fh.write(" ".join(format(v, ".17g") for v in row) + "\n")
    if render and cols and cols[0].size:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            log.warning("matplotlib not installed; skipping %s.png", name)
            return path
        fig, ax = plt.subplots(figsize=(6, 4))
        for h, c in zip(header[1:], cols[1:]):
            ax.plot(cols[0], c, label=h)
        ax.set_xlabel(header[0])
        ax.legend()
        fig.tight_layout()
        fig.savefig(run.path(f"plot_{name}.png"), dpi=100)
        plt.close(fig)
    return path


# --- commands ----------------------------------------------------------------------

def cmd_catalog(run: Run) -> None:
    rows = []
    for fid in FamilyId:
        presets = sorted(n for f, n in PRESETS if f is fid)
        rows.append((fid.value, fid.name, fid.kind, " ".join(family_parameters(fid)),
                     CONSTRAINTS_TEXT[fid.kind], " ".join(presets)))
    run.write_csv("catalog.csv", ("id", "name", "kind", "parameters", "constraints", "presets"), rows)
    for r in rows:
        print(f"{r[0]:>3}  {r[1]:<22} {r[2]:<10} presets: {r[5]}")
    if run.get("family", "family") is None:
        return
    fid, _, values = _family_setup(run)
    scan = run.get("family", "scan")
    variants = [dict(values)]
    if scan:
        key, _, vals = scan.partition("=")
        key = key.strip()
        if key not in ("A", "B", "D", "beta", "y") or key not in values:
            raise ConfigError(f"scan key {key!r} is not a shape parameter of family {fid.value}")
        variants = []
        for v in _list(vals.replace(";", ",")):
            d = dict(values)
            d[key] = float(v)
            variants.append(d)
    for d in variants:
        p, _, _ = from_assignment(fid, d)
        try:
            validate(fid, p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        g = _grid_from(run, fid, p)
        phi_a, phi_m = profiles(fid, p, g.x)
        tag = "_".join(f"{k}{_fmt(d[k])}" for k in ("B", "beta", "y") if k in d)
        emit_plot_data(run, f"profile_{fid.value}_{tag}", ("x", "n_a", "n_m"),
                       (g.x, phi_a**2, phi_m**2), run.get("run", "plot", False))


def _verification_grid(run, fid, p):
    if fid.power_law and not run.cfg.get("grid"):
        return default_grid(fid, p, VERIFY_FD_POINTS)
    return _grid_from(run, fid, p)


def cmd_verify(run: Run) -> None:
    fid, preset, values = _family_setup(run)
    p, c, mu = from_assignment(fid, values)
    g = _verification_grid(run, fid, p)
    r = constraint_residual(fid, values, g)
    r_a, r_m = np.abs(r[: g.n]).max(), np.abs(r[g.n:]).max()
    thr = TOLERANCES["residual_spectral"] if g.periodic else TOLERANCES["residual_fd"]
    ok = run.check("residual_sup", max(r_a, r_m), thr)
    rows = [("family", fid.value), ("preset", preset), ("grid_n", g.n), ("periodic", g.periodic),
            ("x_min", g.x_min), ("x_max", g.x_max), ("residual_atomic", r_a),
            ("residual_molecular", r_m), ("threshold", thr), ("pass", ok)]
    if fid is FamilyId.V_hyperbolic_ground and values["y"] == 0:
        ref = hyperbolic_y0_relations(values["beta"], values["alpha"], values["g_a"])
        dev = max(abs(abs(values[k]) - abs(ref[k])) if k == "A" else abs(values[k] - ref[k])
                  for k in ref)
        run.check("y0_relations", dev, TOLERANCES["y0_relations"])
        rows.append(("y0_relations_deviation", dev))
    rows += [(k, values[k]) for k in family_parameters(fid)]
    run.write_csv("verify.csv", ("key", "value"), rows)
    phi_a, phi_m = profiles(fid, p, g.x)
    stride = max(1, g.n // 4096)
    emit_plot_data(run, f"profile_{fid.value}", ("x", "n_a", "n_m"),
                   (g.x[::stride], phi_a[::stride] ** 2, phi_m[::stride] ** 2),
                   run.get("run", "plot", False))
    print(f"family {fid.value} [{preset}]: residual {max(r_a, r_m):.3e} (threshold {thr:g}) "
          f"{'PASS' if ok else 'FAIL'}")


def _auto_stride(rates, dt, cap=100):
    w = max(abs(rates[0]), abs(rates[1]), 1e-12)
    return max(1, min(cap, int((math.pi / 4) / (w * dt))))


TRAJ_HEADER = ("t", "N_a", "N_m", "N", "E", "overlap_a_abs", "overlap_a_arg",
               "overlap_m_abs", "overlap_m_arg", "continuity_max")


def trajectory_rows(traj: Trajectory):
    extra = sorted(traj.samples[0][1].extra) if traj.samples else []
    header = TRAJ_HEADER + tuple(extra)
    rows = []
    for t, r in traj.samples:
        rows.append((t, r.N_a, r.N_m, r.N, r.E, abs(r.overlap_a), np.angle(r.overlap_a),
                     abs(r.overlap_m), np.angle(r.overlap_m), r.continuity_max,
                     *(r.extra[k] for k in extra)))
    return header, rows


def read_trajectory_csv(path) -> Trajectory:
    traj = Trajectory()
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            v = {k: float(x) for k, x in row.items()}
            extra = {k: v[k] for k in v if k not in TRAJ_HEADER}
            traj.append(DiagnosticsReport(
                v["t"], v["N_a"], v["N_m"], v["N"], v["E"],
                v["overlap_a_abs"] * np.exp(1j * v["overlap_a_arg"]),
                v["overlap_m_abs"] * np.exp(1j * v["overlap_m_arg"]),
                v["continuity_max"], extra))
    return traj


def cmd_evolve(run: Run) -> None:
    fid, preset, values = _family_setup(run)
    p, c, mu = from_assignment(fid, values)
    g = _grid_from(run, fid, p)
    scheme = run.get("evolve", "scheme") or ("rk4_fd" if not g.periodic else "strang_spectral")
    superpose = run.get("evolve", "superpose", False)
    f0 = eval_family(fid, p, mu, g)
    observers = []
    if superpose:
        basis = ModeBasis.from_family(fid, p, g)
        amp = math.sqrt(abs(np.vdot(f0.psi_a, f0.psi_a).real * g.dx))
        f0 = FieldPair(amp * (basis.ground + basis.excited) / math.sqrt(2), f0.psi_m, g)
        observers.append(qubit_observer(basis))
    dt = run.get("evolve", "dt", 1e-3)
    stride = run.get("evolve", "stride") or _auto_stride(rotation_rates(f0, c), dt)
    try:
        spec = EvolveSpec(dt, run.get("evolve", "t_end", 1.0), scheme, stride,
                          run.get("evolve", "noise", 0.0), run.get("run", "seed", 0),
                          run.get("evolve", "snapshots", ()))
        spec.check_unwrap(max(rotation_rates(f0, c), key=abs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        traj = evolve(f0, spec, ZERO_POTENTIAL, c, observers)
    except PropagationError as exc:
        traj = exc.trajectory or Trajectory()
        run.failures.append({"check": "propagation", "value": str(exc), "threshold": "finite fields"})
    header, rows = trajectory_rows(traj)
    run.write_csv("trajectory.csv", header, rows)
    for t, snap in sorted(traj.snapshots.items()):
        save_snapshot(run.path(f"snapshot_t{_fmt(t)}.dat"), snap)
    cols = list(zip(*rows)) if rows else [() for _ in header]
    emit_plot_data(run, "timeseries", header[:5], cols[:5], run.get("run", "plot", False))
    if run.get("evolve", "check", False) and traj.samples:
        n = traj.series("N")
        e = traj.series("E")
        run.check("drift_N", float(np.max(np.abs(n - n[0])) / abs(n[0])), TOLERANCES["drift_N"])
        run.check("drift_E", float(np.max(np.abs(e - e[0])) / abs(e[0])), TOLERANCES["drift_E"])
        if not superpose and spec.noise_amplitude == 0 and len(traj.samples) > 1:
            mu_a, mu_m = chemical_potential_from(traj)
            run.check("phase_slope_atomic", abs(mu_a - mu), TOLERANCES["phase_slope"])
            run.check("phase_slope_molecular", abs(2 * mu_m - 2 * mu), TOLERANCES["phase_slope"])
    print(f"family {fid.value} [{preset}]: {len(traj.samples)} samples to t={spec.t_end:g} ({scheme})")


def cmd_diagnose(run: Run) -> None:
    snaps = run.get("diagnose", "snapshot", ())
    tpath = run.get("diagnose", "trajectory")
    if not snaps and not tpath:
        raise ConfigError("diagnose needs --snapshot and/or --trajectory")
    rows = []
    couplings = None
    basis_params = None
    if run.get("family", "family") is not None:
        fid, _, values = _family_setup(run)
        basis_params, couplings, _ = from_assignment(fid, values)
    fields = []
    for s in snaps:
        try:
            fields.append(load_snapshot(s))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load snapshot {s}: {exc}") from None
    hw = run.get("diagnose", "half_width")
    for s, f in zip(snaps, fields):
        tag = Path(s).name
        na, nm, n = particle_numbers(f)
        # real profile up to the global phase at the peak
        peak_phase = np.angle(f.psi_a[np.argmax(np.abs(f.psi_a))])
        rows += [(tag, "t", f.t), (tag, "N_a", na), (tag, "N_m", nm), (tag, "N", n),
                 (tag, "flat_top", flat_top_metric(f.psi_m, grid=f.grid if hw else None, half_width=hw)),
                 (tag, "nodes_atomic", node_count(np.real(f.psi_a * np.exp(-1j * peak_phase)), f.grid))]
        for which, psi in (("atomic", f.psi_a), ("molecular", f.psi_m)):
            for mode in ("power", "exponential"):
                try:
                    fit = tail_fit(psi, f.grid, mode=mode)
                    rows.append((tag, f"tail_{which}_{mode}", fit.value))
                    rows.append((tag, f"tail_{which}_{mode}_stderr", fit.stderr))
                except ValueError:
                    rows.append((tag, f"tail_{which}_{mode}", "n/a"))
        if couplings is not None:
            rows.append((tag, "E", energy(f, ZERO_POTENTIAL, couplings)))
            q = project_qubit(f.psi_a, ModeBasis.from_family(fid, basis_params, f.grid), f.grid)
            rows += [(tag, "c0_abs", abs(q.c0)), (tag, "c1_abs", abs(q.c1)), (tag, "leakage", q.leakage)]
    if len(fields) == 3:
        try:
            res = continuity_residual(sorted(fields, key=lambda f: f.t))
            rows.append(("snapshots", "continuity_max", float(np.max(np.abs(res)))))
        except ValueError as exc:
            rows.append(("snapshots", "continuity_max", f"n/a ({exc})"))
    if tpath:
        try:
            traj = read_trajectory_csv(tpath)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read trajectory {tpath}: {exc}") from None
        if len(traj.samples) >= 2:
            mu_a, mu_m = chemical_potential_from(traj)
            rows += [("trajectory", "mu_from_atomic_phase", mu_a),
                     ("trajectory", "mu_from_molecular_phase", mu_m)]
            n = traj.series("N")
            rows.append(("trajectory", "drift_N", float(np.max(np.abs(n - n[0])) / abs(n[0]))))
    run.write_csv("report.csv", ("source", "key", "value"), rows)
    for r in rows:
        print(f"{r[0]}: {r[1]} = {_fmt(r[2])}")


def _solver_options(run: Run) -> SolverOptions:
    sec = run.cfg.get("solver", {})
    return SolverOptions(tol=sec.get("tol", DEFAULT_OPTIONS.tol),
                         max_iter=sec.get("max_iter", DEFAULT_OPTIONS.max_iter),
                         n_points=sec.get("n_points", DEFAULT_OPTIONS.n_points))


def _solution_rows(fid, sols):
    names = family_parameters(fid)
    header = names + (
        "residual_norm", "validation_norm", "converged", "iterations", "nullity")
    if fid.kind == "droplet":
        header += ("mu_ratio", "sqrt_n_m", "flat_top")
    rows = []
    for s in sols:
        r = tuple(s.values[k] for k in names) + (
            s.residual_norm, s.validation_norm, s.converged, s.iterations, s.nullity)
        if fid.kind == "droplet":
            ds = droplet_scaling(s.values["B"], s.values["D"])
            p, _, _ = from_assignment(fid, s.values)
            g = default_grid(fid, p)
            r += (ds.mu_ratio, ds.sqrt_n_m,
                  flat_top_metric(profiles(fid, p, g.x)[1], grid=g, half_width=1.0 / p.beta))
        rows.append(r)
    return header, rows


def _branch_output(run, fid, sols, param, completed, boundary):
    header, rows = _solution_rows(fid, sols)
    run.write_csv("branch.csv", header, rows)
    if fid.kind == "droplet" and rows:
        i = header.index("mu_ratio")
        emit_plot_data(run, "branch", (param, "mu_ratio"), ([s.values[param] for s in sols], [r[i] for r in rows]),
                       run.get("run", "plot", False))
        mr = np.array([r[i] for r in rows])
        if param == "B" and mr.size > 1:
            run.check("mu_ratio_monotone", float(np.min(np.diff(mr))), 0.0,
                      passed=bool(np.all(np.diff(mr) > 0)))
    if not completed:
        run.failures.append({"check": "branch_complete", "value": boundary, "threshold": "all steps converged"})
    print(f"{len(sols)} branch points{'' if completed else '; ' + boundary}")


def cmd_sweep(run: Run) -> None:
    fid, _, values = _family_setup(run)
    param = run.get("sweep", "param")
    if param is None or param not in values:
        raise ConfigError(f"sweep parameter must be one of {family_parameters(fid)} (got {param!r})")
    unknowns = run.get("sweep", "unknowns") or DEFAULT_UNKNOWNS
    if param in unknowns:
        raise ConfigError(f"sweep parameter {param!r} cannot also be an unknown")
    start, stop = run.get("sweep", "from"), run.get("sweep", "to")
    steps = run.get("sweep", "steps", 11)
    if start is None or stop is None or steps < 1:
        raise ConfigError("sweep needs --from, --to and --steps >= 1")
    knowns = {k: v for k, v in values.items() if k not in unknowns}
    opts = _solver_options(run)
    try:
        problem = ConstraintProblem(fid, knowns, unknowns)
        guess = {k: values[k] for k in unknowns}
        seed = solve(problem.with_knowns(**{param: start}), guess, opts)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    workers = run.get("run", "workers", 1)
    if workers > 1:
        # independent solves from the seed, ordered by parameter value
        grid_vals = np.linspace(start, stop, steps)
        probs = []
        for v in grid_vals:
            try:
                probs.append(problem.with_knowns(**{param: float(v)}))
            except DomainError:
                break
        sols = solve_many(probs, [seed.values] * len(probs), opts, workers)
        good = []
        for s in sols:
            if not s.converged:
                break
            good.append(s)
        completed = len(good) == steps
        boundary = "" if completed else f"stopped after {len(good)} of {steps} points"
        _branch_output(run, fid, good, param, completed, boundary)
        return
    br = continuation(problem, (param, start, stop, steps), seed.values, opts)
    _branch_output(run, fid, br.points, param, br.completed, br.boundary)


def cmd_solve_constraints(run: Run) -> None:
    fam = run.get("family", "family")
    if fam is None:
        raise ConfigError("solve-constraints needs a family")
    fid = FamilyId.parse(fam)
    knowns = run.get("problem", "knowns", {})
    unknowns = run.get("problem", "unknowns", ())
    guess = run.get("problem", "guess", {})
    opts = _solver_options(run)
    try:
        problem = ConstraintProblem(fid, knowns, unknowns)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    param = run.get("sweep", "param")
    if param:
        br = continuation(problem, (param, run.get("sweep", "from"), run.get("sweep", "to"),
                                    run.get("sweep", "steps", 11)), guess, opts)
        _branch_output(run, fid, br.points, param, br.completed, br.boundary)
        return
    sol = solve(problem, guess, opts)
    header, rows = _solution_rows(fid, [sol])
    run.write_csv("solution.csv", header, rows)
    run.check("constraint_residual", sol.residual_norm, opts.tol, passed=sol.converged)
    print(f"family {fid.value}: converged={sol.converged} residual={sol.residual_norm:.3e} "
          f"validation={sol.validation_norm:.3e} nullity={sol.nullity} ({sol.message})")


HANDLERS = {
    "catalog": cmd_catalog, "verify": cmd_verify, "evolve": cmd_evolve,
    "diagnose": cmd_diagnose, "sweep": cmd_sweep, "solve-constraints": cmd_solve_constraints,
}

# flag dest -> (section, key)
FLAG_MAP = {
    "family": ("family", "family"), "preset": ("family", "preset"), "scan": ("family", "scan"),
    "n": ("grid", "n"), "x_min": ("grid", "x_min"), "x_max": ("grid", "x_max"),
    "dt": ("evolve", "dt"), "t_end": ("evolve", "t_end"), "scheme": ("evolve", "scheme"),
    "stride": ("evolve", "stride"), "noise": ("evolve", "noise"),
    "snapshots": ("evolve", "snapshots"), "check": ("evolve", "check"),
    "superpose": ("evolve", "superpose"),
    "param": ("sweep", "param"), "from_": ("sweep", "from"), "to": ("sweep", "to"),
    "steps": ("sweep", "steps"), "snapshot": ("diagnose", "snapshot"),
    "trajectory": ("diagnose", "trajectory"), "half_width": ("diagnose", "half_width"),
    "seed": ("run", "seed"), "workers": ("run", "workers"), "plot": ("run", "plot"),
    "tol": ("solver", "tol"), "max_iter": ("solver", "max_iter"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ambec", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"ambec {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with run options")
    common.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV}/<command>)")
    common.add_argument("--family", help="I..VI")
    common.add_argument("--preset")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a parameter or coupling")
    common.add_argument("--n", type=int, help="grid points")
    common.add_argument("--x-min", type=float, dest="x_min")
    common.add_argument("--x-max", type=float, dest="x_max")
    common.add_argument("--seed", type=int)
    common.add_argument("--plot", action="store_const", const=True, help="also render PNGs (matplotlib)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("catalog", parents=[common], help="list families, write profiles")
    sp.add_argument("--scan", help="shape parameter scan, e.g. B=0.5,5,50")
    sub.add_parser("verify", parents=[common], help="residual check of a parameter set")
    sp = sub.add_parser("evolve", parents=[common], help="time evolution")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-end", type=float, dest="t_end")
    sp.add_argument("--scheme", choices=("strang_spectral", "rk4_fd"))
    sp.add_argument("--stride", type=int)
    sp.add_argument("--noise", type=float)
    sp.add_argument("--snapshots", type=_float_list, help="comma-separated times")
    sp.add_argument("--check", action="store_const", const=True, help="enforce drift/phase thresholds")
    sp.add_argument("--superpose", action="store_const", const=True,
                    help="start from (ground + excited)/sqrt(2) and record the projection")
    sp = sub.add_parser("diagnose", parents=[common], help="analyse snapshots / trajectories")
    sp.add_argument("--snapshot", type=_list, help="snapshot file(s), comma-separated")
    sp.add_argument("--trajectory")
    sp.add_argument("--half-width", type=float, dest="half_width")
    sp = sub.add_parser("sweep", parents=[common], help="continuation in one parameter")
    sp.add_argument("--param")
    sp.add_argument("--from", type=float, dest="from_")
    sp.add_argument("--to", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int, dest="max_iter")
    sp = sub.add_parser("solve-constraints", parents=[common], help="solve a declared problem")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int, dest="max_iter")
    return ap


def resolve_config(args) -> dict:
    cfg = read_config(args.config) if args.config else {}
    cmd = cfg.get("run", {}).get("command")
    if cmd is not None and cmd != args.command:
        raise ConfigError(f"config is for command {cmd!r}, not {args.command!r}")
    for dest, (sec, key) in FLAG_MAP.items():
        v = getattr(args, dest, None)
        if v is not None:
            cfg.setdefault(sec, {})[key] = v
    for item in args.set:
        k, sep, v = item.partition("=")
        k = k.strip()
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        sec = "couplings" if k in SCHEMA["couplings"] else "family"
        if k not in SCHEMA[sec]:
            raise ConfigError(f"unknown parameter {k!r} in --set")
        try:
            cfg.setdefault(sec, {})[k] = float(v)
        except ValueError:
            raise ConfigError(f"--set {k}: not a number: {v!r}") from None
    cfg.setdefault("run", {})["command"] = args.command
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = args.output or cfg.get("run", {}).get("output")
        if out is None:
            out = Path(os.environ.get(OUTPUT_ENV, "ambec-output")) / args.command
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        run = Run(args.command, cfg, outdir)
        HANDLERS[args.command](run)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run.finish()


if __name__ == "__main__":
    raise SystemExit(main())
