import math
import warnings

import numpy as np
import pytest

from ambec.catalog import default_grid, eval_family, get_preset
from ambec.diagnostics import chemical_potential_from
from ambec.grid import make_grid
from ambec.model import Couplings, FieldPair, particle_numbers
from ambec.propagator import (
    CFLWarning,
    EvolveSpec,
    PropagationError,
    RelaxError,
    Trajectory,
    cfl_limit,
    evolve,
    imaginary_time_relax,
    step_fd_rk4,
    step_strang,
)

FREE = Couplings()


def stationary(fid, name=None, n=None, grid=None):
    pr = get_preset(fid, name) if name else get_preset(fid)
    g = grid or default_grid(fid, pr.params, n)
    return pr, eval_family(fid, pr.params, pr.mu, g)


def test_free_fourier_modes_exact():
    g = make_grid(-math.pi, math.pi, 64)
    k, q = 3.0, 5.0
    f = FieldPair(np.exp(1j * k * g.x), 0.5 * np.exp(1j * q * g.x), g)
    tr = evolve(f, EvolveSpec(0.01, 1.0, observer_stride=10), None, FREE)
    assert np.allclose(tr.final.psi_a, np.exp(1j * k * g.x - 0.5j * k**2), atol=1e-12)
    assert np.allclose(tr.final.psi_m, 0.5 * np.exp(1j * q * g.x - 0.25j * q**2), atol=1e-12)


def test_zero_fields_stay_zero():
    g = make_grid(-10, 10, 128)
    pr = get_preset("I")
    tr = evolve(FieldPair.zeros(g), EvolveSpec(0.01, 0.1), None, pr.couplings)
    assert not np.any(tr.final.psi_a) and not np.any(tr.final.psi_m)
    assert np.all(tr.series("N") == 0)


def test_zero_duration_single_sample():
    pr, f = stationary("I", n=256)
    tr = evolve(f, EvolveSpec(0.01, 0.0), None, pr.couplings)
    assert len(tr.samples) == 1 and tr.times[0] == 0
    assert np.array_equal(tr.final.psi_a, f.psi_a)


def deviation(dt, T=1.0):
    pr, f = stationary("V", "y0_repulsive")
    tr = evolve(f, EvolveSpec(dt, T, observer_stride=int(round(0.1 / dt)), continuity=False), None, pr.couplings)
    ex = eval_family("V", pr.params, pr.mu, f.grid, t=T)
    return max(np.max(np.abs(tr.final.psi_a - ex.psi_a)), np.max(np.abs(tr.final.psi_m - ex.psi_m)))


def test_stationary_state_tracked_at_second_order():
    e1, e2 = deviation(1e-3), deviation(5e-4)
    assert e2 < 1e-6
    assert e1 / e2 == pytest.approx(4.0, rel=0.1)


def test_strang_matches_fd_on_matched_points():
    pr = get_preset("V", "y0_repulsive")
    L, n = 20.0, 2048
    gp = make_grid(-L, L, n)
    gf = make_grid(-L, L - 2 * L / n, n, periodic=False)
    assert np.allclose(gp.x, gf.x)
    fp = eval_family("V", pr.params, pr.mu, gp)
    ff = eval_family("V", pr.params, pr.mu, gf)
    spec = dict(observer_stride=400, continuity=False)
    a = evolve(fp, EvolveSpec(2.5e-4, 1.0, **spec), None, pr.couplings).final
    with warnings.catch_warnings():
        warnings.simplefilter("error", CFLWarning)
        b = evolve(ff, EvolveSpec(2.5e-4, 1.0, scheme="rk4_fd", **spec), None, pr.couplings).final
    assert np.max(np.abs(a.psi_a - b.psi_a)) < 1e-6
    assert np.max(np.abs(a.psi_m - b.psi_m)) < 1e-6


def test_pulse_phase_slope_short_run():
    pr = get_preset("III")
    g = make_grid(-60, 60, 2048, periodic=False)
    f = eval_family("III", pr.params, pr.mu, g)
    tr = evolve(f, EvolveSpec(2e-3, 2.0, "rk4_fd", observer_stride=25), None, pr.couplings)
    mu_a, mu_m = chemical_potential_from(tr)
    assert mu_a == pytest.approx(pr.mu, abs=1e-4)
    assert mu_m == pytest.approx(pr.mu, abs=1e-4)
    assert np.ptp(tr.series("N")) < 1e-9 * tr.series("N")[0]


@pytest.mark.parametrize("theta", [0.3, 2.0])
def test_gauge_covariance(theta):
    pr, f = stationary("VI", "y1", n=512)
    rng = np.random.default_rng(1)
    f = f.replace(f.psi_a * (1 + 0.1 * rng.standard_normal(f.grid.n)))
    g = f.replace(f.psi_a * np.exp(1j * theta), f.psi_m * np.exp(2j * theta))
    a, b = f, g
    for _ in range(20):
        a = step_strang(a, None, pr.couplings, 1e-3)
        b = step_strang(b, None, pr.couplings, 1e-3)
    assert np.allclose(b.psi_a, a.psi_a * np.exp(1j * theta), atol=1e-13)
    assert np.allclose(b.psi_m, a.psi_m * np.exp(2j * theta), atol=1e-13)


def test_time_reversal():
    pr, f = stationary("II", n=512)
    f = f.replace(f.psi_a * np.exp(0.3j * f.grid.x / (1 + f.grid.x**2)))
    b = f
    for _ in range(50):
        b = step_strang(b, None, pr.couplings, 2e-3)
    for _ in range(50):
        b = step_strang(b, None, pr.couplings, -2e-3)
    assert np.max(np.abs(b.psi_a - f.psi_a)) < 1e-7
    assert np.max(np.abs(b.psi_m - f.psi_m)) < 1e-7


def test_strang_conserves_number_to_roundoff():
    pr, f = stationary("VI", "y0", n=512)
    f = f.replace(f.psi_a * (1 + 0.2 * np.cos(f.grid.x)))
    tr = evolve(f, EvolveSpec(1e-3, 0.5, observer_stride=50), None, pr.couplings)
    N = tr.series("N")
    assert np.max(np.abs(N - N[0])) < 1e-12 * N[0]


def test_nan_abort_keeps_partial_trajectory():
    # explicit RK4 far beyond its stability limit overflows
    g = make_grid(-10, 10, 256, periodic=False)
    f = FieldPair(np.exp(-g.x**2), np.zeros(g.n), g)
    dt = 5 * cfl_limit(g)
    with pytest.warns(CFLWarning), pytest.raises(PropagationError) as exc, np.errstate(all="ignore"):
        evolve(f, EvolveSpec(dt, 2000 * dt, scheme="rk4_fd", continuity=False), None, FREE)
    assert isinstance(exc.value.trajectory, Trajectory)
    assert len(exc.value.trajectory.samples) > 1
    assert exc.value.t > 0


def test_unwrap_guard_rejects_coarse_sampling():
    g = make_grid(-5, 5, 64)
    f = FieldPair(np.ones(g.n) * 10.0, np.zeros(g.n), g)
    with pytest.raises(ValueError, match="pi/2"):
        evolve(f, EvolveSpec(0.1, 1.0, observer_stride=10), None, Couplings(g_a=100.0))


def test_cfl_warning():
    pr, _ = stationary("III")
    g = make_grid(-20, 20, 1024, periodic=False)
    f = eval_family("III", pr.params, pr.mu, g)
    dt = 2 * cfl_limit(g)
    with pytest.warns(CFLWarning):
        step_fd_rk4(f, None, pr.couplings, dt)


def test_rk4_fd_rejects_periodic_grid():
    pr, f = stationary("I", n=128)
    with pytest.raises(ValueError, match="non-periodic"):
        evolve(f, EvolveSpec(1e-3, 1e-3, scheme="rk4_fd"), None, pr.couplings)


def test_noise_is_seeded():
    pr, f = stationary("I", n=256)
    spec = EvolveSpec(1e-3, 0.01, noise_amplitude=1e-3, seed=7)
    a = evolve(f, spec, None, pr.couplings)
    b = evolve(f, spec, None, pr.couplings)
    c = evolve(f, EvolveSpec(1e-3, 0.01, noise_amplitude=1e-3, seed=8), None, pr.couplings)
    assert np.array_equal(a.final.psi_a, b.final.psi_a) and a.seed == 7
    assert not np.array_equal(a.final.psi_a, c.final.psi_a)


def test_snapshots_and_samples():
    pr, f = stationary("I", n=256)
    tr = evolve(f, EvolveSpec(0.01, 0.1, observer_stride=3, snapshot_times=(0.0, 0.05)), None, pr.couplings)
    assert np.allclose(tr.times, [0, 0.03, 0.06, 0.09, 0.1])
    assert sorted(tr.snapshots) == [0.0, 0.05]
    assert np.all(np.isfinite(tr.series("continuity_max")))


@pytest.mark.parametrize("kw, msg", [
    (dict(dt=0.0, t_end=1.0), "dt"),
    (dict(dt=0.1, t_end=-1.0), "t_end"),
    (dict(dt=0.3, t_end=1.0), "multiple"),
    (dict(dt=0.1, t_end=1.0, scheme="euler"), "scheme"),
    (dict(dt=0.1, t_end=1.0, observer_stride=0), "stride"),
    (dict(dt=0.1, t_end=1.0, snapshot_times=(2.0,)), "snapshot"),
])
def test_spec_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        EvolveSpec(**kw)


def test_trajectory_times_increase():
    tr = Trajectory()
    pr, f = stationary("I", n=128)
    t = evolve(f, EvolveSpec(0.01, 0.01), None, pr.couplings)
    tr.append(t.samples[0][1])
    with pytest.raises(ValueError):
        tr.append(t.samples[0][1])


def test_bright_soliton_relaxation():
    g_a, N = -1.0, 4.0
    k = -g_a * N / 2
    a0 = math.sqrt(-k**2 / g_a)
    g = make_grid(-20, 20, 1024)
    c = Couplings(g_a=g_a)
    f0 = FieldPair(np.exp(-g.x**2 / 4), np.zeros(g.n), g)
    res = imaginary_time_relax(f0, c, N, EvolveSpec(0.05, 400.0))
    assert res.converged, res.message
    exact = a0 / np.cosh(k * g.x)
    assert np.max(np.abs(np.abs(res.field.psi_a) - exact)) < 1e-6
    assert res.mu == pytest.approx(-k**2 / 2, abs=1e-8)
    assert res.energy == pytest.approx(-a0**2 * k / 3, rel=1e-8)
    assert particle_numbers(res.field).N == pytest.approx(N, rel=1e-12)


def test_relax_collapse_and_grid_errors():
    g = make_grid(-5, 5, 64)
    with pytest.raises(RelaxError):
        imaginary_time_relax(FieldPair.zeros(g), FREE, 1.0, EvolveSpec(0.1, 1.0))
    gf = make_grid(-5, 5, 64, periodic=False)
    with pytest.raises(ValueError, match="periodic"):
        imaginary_time_relax(FieldPair(np.ones(64), np.zeros(64), gf), FREE, 1.0, EvolveSpec(0.1, 1.0))
