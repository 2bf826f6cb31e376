import numpy as np
import pytest

from ambec.grid import Grid, fd_derivative, fd_weights, make_grid


def test_central_weights_exact():
    assert fd_weights((-2, -1, 0, 1, 2), 2) == (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12)
    assert fd_weights((-2, -1, 0, 1, 2), 1) == (1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12)


@pytest.mark.parametrize("bad", [dict(x_min=1, x_max=1, n=64), dict(x_min=2, x_max=-2, n=64),
                                 dict(x_min=0, x_max=1, n=4), dict(x_min=0, x_max=1, n=100),
                                 dict(x_min=0, x_max=np.inf, n=64)])
def test_grid_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


def test_inverted_bounds_message():
    with pytest.raises(ValueError, match="inverted or empty"):
        make_grid(1.0, -1.0, 64)


def test_symmetric_points():
    for periodic in (True, False):
        g = make_grid(-5, 5, 64, periodic)
        xs = g.x if not periodic else g.x[1:]
        assert np.array_equal(xs, -xs[::-1])
    assert make_grid(-5, 5, 64).x[0] == -5.0


def test_spectral_derivative_of_fourier_mode():
    g = make_grid(0, 2 * np.pi, 64)
    f = np.sin(3 * g.x)
    assert np.allclose(g.derivative(f), 3 * np.cos(3 * g.x), atol=1e-12)
    assert np.allclose(g.derivative(f, 2), -9 * f, atol=1e-11)
    assert np.isrealobj(g.derivative(f))


def test_fd_fourth_order_convergence():
    errs = []
    for n in (128, 256, 512):
        g = make_grid(-3, 3, n, periodic=False)
        f = np.exp(-g.x**2) * np.cos(g.x)
        d2 = g.derivative(f, 2)
        true = (np.exp(-g.x**2) * ((4 * g.x**2 - 3) * np.cos(g.x) + 4 * g.x * np.sin(g.x)))
        errs.append(np.max(np.abs(d2 - true)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.7)


def test_fd_ghosts_match_padding():
    x = np.linspace(-1, 1, 33)
    dx = x[1] - x[0]
    f = np.sin(x)
    ghosts = (np.sin(x[0] - np.array([2, 1]) * dx), np.sin(x[-1] + np.array([1, 2]) * dx))
    d = fd_derivative(f, dx, 2, ghosts)
    assert np.max(np.abs(d + f)) < 1e-6


def test_quadrature_rules():
    g = make_grid(-30, 30, 1024)
    assert abs(g.integrate(1 / np.cosh(g.x) ** 2) - 2.0) < 1e-13
    h = make_grid(0, 1, 1024, periodic=False)
    assert abs(h.integrate(h.x) - 0.5) < 1e-14
