"""Columnar text format for field snapshots.

    # ambec-snapshot t=<t> x_min=<..> x_max=<..> n=<..> periodic=<0|1>
    # x  re_psi_a  im_psi_a  re_psi_m  im_psi_m
    <one row per grid point, 17 significant digits>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Grid
from .model import FieldPair

COLUMNS = "x  re_psi_a  im_psi_a  re_psi_m  im_psi_m"


def format_snapshot(f: FieldPair) -> str:
    g = f.grid
    meta = (
        f"# ambec-snapshot t={f.t!r} x_min={g.x_min!r} x_max={g.x_max!r} "
        f"n={g.n} periodic={int(g.periodic)}"
    )
    lines = [meta, f"# {COLUMNS}"]
    data = np.column_stack([g.x, f.psi_a.real, f.psi_a.imag, f.psi_m.real, f.psi_m.imag])
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in data)
    return "\n".join(lines) + "\n"


def save_snapshot(path, f: FieldPair) -> Path:
    path = Path(path)
    path.write_text(format_snapshot(f))
    return path


def load_snapshot(path) -> FieldPair:
    text = Path(path).read_text().splitlines()
    meta = {}
    for line in text:
        if line.startswith("# ambec-snapshot"):
            for tok in line.split()[2:]:
                key, _, val = tok.partition("=")
                meta[key] = val
            break
    data = np.loadtxt(text, comments="#", ndmin=2)
    if data.shape[1] != 5:
        raise ValueError(f"{path}: expected 5 columns ({COLUMNS}), got {data.shape[1]}")
    if meta:
        grid = Grid(
            float(meta["x_min"]), float(meta["x_max"]), int(meta["n"]), bool(int(meta["periodic"]))
        )
        t = float(meta["t"])
    else:
        # bare column file: infer a periodic grid from the x column
        x = data[:, 0]
        dx = x[1] - x[0]
        grid = Grid(float(x[0]), float(x[-1] + dx), len(x))
        t = 0.0
    return FieldPair(data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4], grid, t)
