import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ambec.catalog import AnsatzParams, default_grid, eval_family, get_preset, profiles
from ambec.diagnostics import (
    EXPLOSIVE_RATIO,
    ModeBasis,
    chemical_potential_from,
    flat_top_metric,
    growth_exponent,
    node_count,
    orbit_deviation,
    overlap,
    phase_slope,
    project_qubit,
    tail_fit,
)
from ambec.grid import make_grid
from ambec.model import Couplings, FieldPair
from ambec.propagator import DiagnosticsReport, EvolveSpec, Trajectory, evolve

G = make_grid(-40, 40, 4096)


@given(st.floats(0.0, 6.0))
@settings(max_examples=25, deadline=None)
def test_shifted_sech_overlap(a):
    v = overlap(1 / np.cosh(G.x), 1 / np.cosh(G.x - a), G)
    assert v.real == pytest.approx(oracles.sech_overlap(a), rel=1e-12, abs=1e-14)
    assert abs(v.imag) < 1e-15


def test_overlap_conjugates_first_argument():
    f = np.exp(-G.x**2) * (1 + 1j)
    assert overlap(f, f, G).imag == pytest.approx(0, abs=1e-15)
    assert overlap(1j * f, f, G) == pytest.approx(-1j * overlap(f, f, G))
    with pytest.raises(ValueError, match="shape"):
        overlap(f, f[:-1], G)


def test_parity_pair_is_orthogonal():
    for fid in ("I", "V"):
        pr = get_preset(fid)
        g = default_grid(fid, pr.params)
        basis = ModeBasis.from_family(fid, pr.params, g)
        assert abs(overlap(basis.ground, basis.excited, g)) < 1e-14
        assert node_count(basis.ground.real, g) == 0
        assert node_count(basis.excited.real, g) == 1


def test_projection_cases():
    pr = get_preset("I")
    g = default_grid("I", pr.params)
    b = ModeBasis.from_family("I", pr.params, g)
    q = project_qubit(3 * b.ground, b, g)
    assert abs(q.c0) == pytest.approx(3) and abs(q.c1) < 1e-14 and abs(q.leakage) < 1e-14
    psi = (b.ground + 1j * b.excited) / math.sqrt(2)
    q = project_qubit(psi, b, g)
    assert abs(q.c0) ** 2 == pytest.approx(0.5) and abs(q.c1) ** 2 == pytest.approx(0.5)
    assert q.bookkeeping_error < 1e-15
    far = np.exp(-((g.x - 30) ** 2))
    q = project_qubit(far, b, g)
    assert q.leakage == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError, match="degenerate"):
        ModeBasis.build(np.zeros(g.n), b.excited, b.molecular, g)


@pytest.mark.parametrize("B, lo, hi", [(0.1, 0.3, 1.0), (100.0, 0.0, 0.02)])
def test_flat_top_metric(B, lo, hi):
    p = AnsatzParams(A=1, B=B, D=1, beta=1)
    g = default_grid("I", p)
    _, m = profiles("I", p, g.x)
    assert lo < flat_top_metric(m, grid=g, half_width=1.0) < hi


def test_flat_top_monotone_in_B():
    vals = []
    for B in (0.1, 1.0, 10.0, 100.0):
        p = AnsatzParams(A=1, B=B, D=1, beta=1)
        g = default_grid("I", p)
        vals.append(flat_top_metric(profiles("I", p, g.x)[1], grid=g, half_width=1.0))
    assert np.all(np.diff(vals) < 0)


def test_flat_top_constant_and_errors():
    assert flat_top_metric(np.full(100, 2.0)) == 0
    assert flat_top_metric(np.zeros(10)) == 0
    with pytest.raises(ValueError):
        flat_top_metric(np.ones(10), half_width=1.0)


@pytest.mark.parametrize("fid, expect", [("III", -2.0), ("IV", -1.0)])
def test_power_law_tails(fid, expect):
    pr = get_preset(fid)
    g = make_grid(-2000, 2000, 8192, periodic=False)
    a, _ = profiles(fid, pr.params, g.x)
    fit = tail_fit(a, g, mode="power")
    assert fit.value == pytest.approx(expect, abs=0.05)


@pytest.mark.parametrize("fid, factor", [("I", 1), ("II", 1), ("V", 2), ("VI", 1)])
def test_exponential_tails(fid, factor):
    pr = get_preset(fid)
    g = make_grid(-20, 20, 2048)
    a, m = profiles(fid, pr.params, g.x)
    assert tail_fit(a, g, mode="exponential").value == pytest.approx(factor * pr.params.beta, rel=1e-2)
    if fid in ("I", "II"):
        assert tail_fit(m, g, mode="exponential").value == pytest.approx(2 * pr.params.beta, rel=1e-2)


def test_tail_errors():
    with pytest.raises(ValueError, match="non-monotone"):
        tail_fit(np.ones(G.n), G)
    with pytest.raises(ValueError, match="mode"):
        tail_fit(np.ones(G.n), G, mode="log")


def test_node_count():
    g = make_grid(-10, 10, 2048, periodic=False)
    x = g.x
    assert node_count(np.sin(x), g) == 7  # k pi, |k| <= 3
    assert node_count(np.exp(-x**2), g) == 0
    assert node_count(x * np.exp(-x**2), g) == 1


def synthetic(times, za, zm=None):
    tr = Trajectory()
    zm = za if zm is None else zm
    for t, a, m in zip(times, za, zm):
        tr.append(DiagnosticsReport(t, 1.0, 1.0, 3.0, 0.0, a, m))
    return tr


def test_phase_slope_synthetic():
    t = np.linspace(0, 5, 101)
    tr = synthetic(t, np.exp(-0.7j * t), np.exp(-1.4j * t))
    mu_a, mu_m = chemical_potential_from(tr)
    assert mu_a == pytest.approx(0.7, abs=1e-12) and mu_m == pytest.approx(0.7, abs=1e-12)
    assert phase_slope(synthetic(t, np.ones(t.size, complex))) == 0


def test_phase_slope_unwrap_guard():
    t = np.linspace(0, 5, 11)
    with pytest.raises(ValueError, match="unwrap"):
        phase_slope(synthetic(t, np.exp(-6.0j * t)))
    with pytest.raises(ValueError):
        phase_slope(synthetic(t, np.zeros(t.size, complex)))
    with pytest.raises(ValueError):
        phase_slope(synthetic(t, np.ones(t.size)), "both")


def test_phase_slope_of_stationary_run():
    pr = get_preset("VI", "y1")
    g = default_grid("VI", pr.params, 512)
    f = eval_family("VI", pr.params, pr.mu, g)
    tr = evolve(f, EvolveSpec(1e-3, 0.5, observer_stride=20), None, pr.couplings)
    mu_a, mu_m = chemical_potential_from(tr)
    assert mu_a == pytest.approx(pr.mu, abs=1e-6) and mu_m == pytest.approx(pr.mu, abs=1e-6)


def test_growth_verdicts():
    t = np.linspace(0, 10, 101)
    def with_dev(d):
        # overlap magnitude giving orbit deviation d with N_a = 1
        tr = Trajectory()
        for ti, di in zip(t, d):
            tr.append(DiagnosticsReport(ti, 1.0, 0.0, 1.0, 0.0, 1 - di**2 / 2, 1.0))
        return tr
    rep = growth_exponent(with_dev(1e-6 * np.exp(t)))
    assert rep.rate == pytest.approx(1.0, rel=1e-2) and rep.verdict == "explosive growth"
    assert rep.ratio > EXPLOSIVE_RATIO
    rep = growth_exponent(with_dev(1e-6 * (1 + 0.01 * t)))
    assert rep.verdict.startswith("not explosively unstable")
    assert np.allclose(orbit_deviation(with_dev(np.full(t.size, 1e-3)))[1:], 1e-3, rtol=1e-6)


def test_noise_probe_droplet_not_explosive():
    pr = get_preset("I")
    g = default_grid("I", pr.params)
    f = eval_family("I", pr.params, pr.mu, g)
    spec = EvolveSpec(1e-3, 20.0, observer_stride=100, noise_amplitude=1e-6, seed=11, continuity=False)
    rep = growth_exponent(evolve(f, spec, None, pr.couplings))
    assert rep.verdict == "not explosively unstable at this probe scale"
    assert rep.ratio < EXPLOSIVE_RATIO
