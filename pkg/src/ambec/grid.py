"""Uniform 1-D grids with spectral and finite-difference derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], order: int) -> tuple[float, ...]:
    """Exact finite-difference weights for the ``order``-th derivative.

    Solves the Taylor moment conditions in rational arithmetic, so the
    returned stencils carry no solver roundoff.
    """
    m = len(offsets)
    rows = [[Fraction(k) ** p for k in offsets] for p in range(m)]
    rhs = [Fraction(0)] * m
    fact = 1
    for p in range(1, order + 1):
        fact *= p
    rhs[order] = Fraction(fact)
    # Gauss-Jordan on the (small) Vandermonde system.
    a = [row[:] + [rhs[i]] for i, row in enumerate(rows)]
    for col in range(m):
        piv = next(r for r in range(col, m) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [vr - factor * vc for vr, vc in zip(a[r], a[col])]
    return tuple(float(a[i][m]) for i in range(m))


_CENTRAL = {1: (-2, -1, 0, 1, 2), 2: (-2, -1, 0, 1, 2)}
# one-sided closures for the two outermost points (4th order)
_EDGE = {
    1: ((0, 1, 2, 3, 4), (-1, 0, 1, 2, 3)),
    2: ((0, 1, 2, 3, 4, 5), (-1, 0, 1, 2, 3, 4)),
}


def fd_derivative(f: np.ndarray, dx: float, order: int, ghosts=None) -> np.ndarray:
    """4th-order finite-difference derivative of ``f`` (order 1 or 2).

    Interior points use the 5-point central stencil. At the two outermost
    points on each side either one-sided stencils are used, or, when
    ``ghosts=(left, right)`` is given (two values each, ordered by
    increasing x), the central stencil runs over the padded array.
    """
    f = np.asarray(f)
    n = f.shape[-1]
    if n < 6:
        raise ValueError("finite differences need at least 6 points")
    scale = dx**order
    if ghosts is not None:
        left, right = ghosts
        padded = np.concatenate([np.asarray(left), f, np.asarray(right)])
        w = fd_weights(_CENTRAL[order], order)
        out = sum(wk * padded[k : k + n] for k, wk in enumerate(w))
        return out / scale

    out = np.empty_like(f)
    w = fd_weights(_CENTRAL[order], order)
    out[2:-2] = sum(wk * f[k : n - 4 + k] for k, wk in enumerate(w))
    for i, offs in enumerate(_EDGE[order]):
        we = fd_weights(offs, order)
        out[i] = sum(wk * f[i + o] for o, wk in zip(offs, we))
        # mirrored stencil at the right edge
        sign = -1.0 if order % 2 else 1.0
        j = n - 1 - i
        out[j] = sign * sum(wk * f[j - o] for o, wk in zip(offs, we))
    return out / scale


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[x_min, x_max]``.

    Periodic grids hold ``n`` points with spacing ``(x_max - x_min)/n`` and
    exclude the right endpoint. Non-periodic (finite-difference) grids hold
    ``n`` points including both endpoints.
    """

    x_min: float
    x_max: float
    n: int
    periodic: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise ValueError(
                f"inverted or empty bounds: x_min={self.x_min} must be < x_max={self.x_max}"
            )
        if self.n < 8:
            raise ValueError(f"n={self.n} too small, need n >= 8")
        if not _is_power_of_two(self.n):
            raise ValueError(f"n={self.n} is not a power of two (required for FFT efficiency)")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        if self.periodic:
            return self.length / self.n
        return self.length / (self.n - 1)

    @property
    def symmetric(self) -> bool:
        return self.x_min == -self.x_max

    @cached_property
    def x(self) -> np.ndarray:
        center = 0.5 * (self.x_min + self.x_max)
        j = np.arange(self.n, dtype=float)
        # offsets from the centre keep x -> -x exact on symmetric grids
        if self.periodic:
            x = center + (j - self.n / 2) * self.dx
        else:
            x = center + (j - (self.n - 1) / 2) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.length / self.n)
        k.flags.writeable = False
        return k

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights: rectangle rule (periodic) or trapezoid."""
        w = np.full(self.n, self.dx)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    def integrate(self, f: np.ndarray) -> float | complex:
        return np.sum(self.weights * f)

    def derivative(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral derivative on periodic grids, 4th-order FD otherwise."""
        f = np.asarray(f)
        if f.shape[-1] != self.n:
            raise ValueError(f"array length {f.shape[-1]} does not match grid n={self.n}")
        if not self.periodic:
            return fd_derivative(f, self.dx, order)
        ik = 1j * self.wavenumbers
        if order % 2 == 1:
            ik = ik.copy()
            ik[self.n // 2] = 0.0  # drop the unpaired Nyquist mode
        out = np.fft.ifft(ik**order * np.fft.fft(f))
        return out.real if np.isrealobj(f) else out

    def refined(self, factor: int) -> "Grid":
        return Grid(self.x_min, self.x_max, self.n * factor, self.periodic)


def make_grid(x_min: float, x_max: float, n: int, periodic: bool = True) -> Grid:
    return Grid(float(x_min), float(x_max), int(n), periodic)
