import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specrg.feshbach import Partition
from specrg.fock import FockOperator, build_basis, build_dilation_b, build_hf, weight_b_theta
from specrg.grid import MomentumGrid
from specrg.kernels import assemble_hamiltonian
from specrg.models import NelsonConfig, NelsonModel
from specrg.verify import (
    OneBosonSpectrum,
    ScanTable,
    WeightedSpectrum,
    continuum_config,
    decay_scan,
    exact_diag,
    holder_exponent,
    holder_modulus,
    lap_scan,
    lap_transfer_check,
    local_spacing,
    mourre_check,
    mourre_rg_scan,
    rg_image_families,
    weighted_resolvent,
    window_schedule,
)


@pytest.fixture(scope="module")
def small_basis():
    return build_basis(MomentumGrid(0.5, 6), 2, 2.0)


@pytest.fixture(scope="module")
def continuum():
    """Dense quasi-continuum model: one boson, odd mode count."""
    m = NelsonModel(continuum_config(NelsonConfig(), sigma=0.97, k_min=1e-3))
    return m, m.hamiltonian()


# oracle --------------------------------------------------------------------

def test_exact_diag_free_field(small_basis):
    vals, _ = exact_diag(build_hf(small_basis))
    np.testing.assert_allclose(vals, np.sort(small_basis.energies), atol=1e-14)


def test_exact_diag_needs_flag(small_basis):
    with pytest.raises(ValueError):
        exact_diag(FockOperator(small_basis, build_hf(small_basis).mat))


def test_exact_diag_residuals(toy_model):
    h = toy_model.hamiltonian()
    vals, vecs = exact_diag(h)
    res = np.linalg.norm(h.mat @ vecs - vecs * vals, axis=0)
    assert res.max() <= 1e-10 * np.linalg.norm(h.mat, 2)
    assert vals[0] < toy_model.config.levels[0]


# weighted resolvent ----------------------------------------------------------

def test_resolvent_matches_spectral_formula(toy_model):
    h = toy_model.hamiltonian()
    b = build_dilation_b(h.basis)
    w = weight_b_theta(b, 0.75).mat
    vals, vecs = np.linalg.eigh(h.mat)
    lam, eps = -1.0, 1.0
    direct = np.linalg.norm(w @ vecs @ np.diag(1 / (vals - lam - 1j * eps)) @ vecs.conj().T @ w, 2)
    assert weighted_resolvent(h, 0.75, lam, eps, b) == pytest.approx(direct, rel=1e-12)
    assert direct <= 1 / abs(vals[0] - lam - 1j * eps) + 1e-12


def test_resolvent_below_spectrum_converges(small_basis):
    hf = build_hf(small_basis)
    w = weight_b_theta(build_dilation_b(small_basis), 1.0).mat
    limit = np.linalg.norm(w @ np.diag(1 / (small_basis.energies + 1.0)) @ w, 2)
    vals = [weighted_resolvent(hf, 1.0, -1.0, eps) for eps in (1e-2, 1e-4, 1e-6)]
    assert abs(vals[-1] - limit) < abs(vals[0] - limit) + 1e-15
    assert vals[-1] == pytest.approx(limit, rel=1e-9)


@given(st.floats(-0.5, 1.5), st.floats(1e-4, 1.0), st.floats(0.55, 1.0))
def test_unitarity_bound(toy_model, lam, eps, theta):
    spec = _spectrum(toy_model, theta)
    assert spec.resolvent(lam, eps) <= 1 / eps * (1 + 1e-12)


_CACHE = {}


def _spectrum(model, theta):
    key = (id(model), theta)
    if key not in _CACHE:
        _CACHE[key] = WeightedSpectrum(model.hamiltonian(), theta)
    return _CACHE[key]


def test_weighted_spectrum_agrees_with_solve(toy_model):
    h = toy_model.hamiltonian()
    spec = WeightedSpectrum(h, 0.75)
    for lam, eps in ((0.01, 1e-2), (0.3, 1e-3)):
        assert spec.resolvent(lam, eps) == pytest.approx(weighted_resolvent(h, 0.75, lam, eps), rel=1e-10)


@pytest.mark.parametrize("sigma", [0.9, 0.91])
def test_one_boson_engine_matches_dense(sigma):
    cfg = continuum_config(NelsonConfig(), sigma=sigma, k_min=1e-2)
    cfg_even = cfg.__class__(**{**cfg.__dict__, "n_modes": cfg.n_modes - 1})
    for c in (cfg, cfg_even):
        m = NelsonModel(c)
        dense, fast = WeightedSpectrum(m.hamiltonian(), 0.75), OneBosonSpectrum(m, 0.75)
        for lam, eps in ((dense.vals[0] + 0.02, 1e-3), (0.4, 1e-2), (-0.2, 0.3)):
            assert fast.resolvent(lam, eps) == pytest.approx(dense.resolvent(lam, eps), rel=1e-8)
        for z in (dense.vals[0] - 1e-9, 0.05, 0.7):
            assert fast.count_below(z) == dense.count_below(z)
        lam = dense.vals[0] + 0.03
        np.testing.assert_allclose(fast.eigenvalues_near(lam), dense.eigenvalues_near(lam), atol=1e-12)
        assert fast.ground_energy() == pytest.approx(dense.vals[0], abs=1e-13)


def test_one_boson_engine_needs_one_boson(toy_model):
    with pytest.raises(ValueError):
        OneBosonSpectrum(toy_model, 0.75)


def test_continuum_config_odd():
    for s in (0.97, 0.98, 0.99):
        assert continuum_config(NelsonConfig(), sigma=s).n_modes % 2 == 1


# Hoelder fits ------------------------------------------------------------------

@given(st.floats(0.1, 10.0), st.floats(-5, 5))
def test_holder_exponent_affine(a, c):
    x = np.linspace(0.0, 1.0, 21)
    assert holder_exponent(x, a * x + c, 0.1) == pytest.approx(1.0)
    assert holder_modulus(x, a * x + c, 1.0) == pytest.approx(a)


def test_holder_exponent_sqrt_below_one():
    x = np.linspace(0.0, 1.0, 21)
    assert 0.4 < holder_exponent(x, np.sqrt(x), 0.1) < 1.05
    assert holder_modulus(x, np.sqrt(x), 0.5) == pytest.approx(1.0)


# windows -----------------------------------------------------------------------

def test_window_schedule_endpoints():
    ws = window_schedule(-0.1, 0.5, 0.8, 3)
    np.testing.assert_allclose(ws.windows[:3, 1] + 0.1, 0.8 / 18 * np.array([1, 0.5, 0.25]), rtol=1e-15)


@given(st.floats(-1, 1), st.floats(0.01, 0.5), st.floats(0.1, 1.0), st.integers(1, 8))
def test_window_schedule_covers(e_g, rho, rho0, n):
    ws = window_schedule(e_g, rho, rho0, n)
    lo, hi = ws.coverage()
    assert lo == ws.windows[-1, 0] and hi == pytest.approx(e_g + rho0 / 18, abs=1e-15)
    assert np.all(ws.windows[:-1, 0] <= ws.windows[1:, 1])
    assert ws.covers(lo, hi) and not ws.covers(lo - 1e-3, hi)
    assert lo == pytest.approx(e_g + rho0 * rho**(n + 1) / 36, abs=1e-15)


def test_window_schedule_validation():
    with pytest.raises(ValueError):
        window_schedule(0.0, 0.6, 1.0, 3)
    with pytest.raises(ValueError):
        window_schedule(0.0, 0.5, 1.0, 0)


# LAP scan ----------------------------------------------------------------------

def test_lap_scan_far_from_spectrum(toy_model):
    rep = lap_scan(toy_model.hamiltonian(), 1.0, (-2.0, -1.5), n_lambda=12)
    assert rep.holder >= 0.99
    assert rep.growth <= 1.01
    t = rep.table
    assert t.columns == ("lambda", "factor", "eps", "value")
    assert np.all(t.column("value") * t.column("eps") <= 1.0 + 1e-9)


def test_lap_scan_floor_policy(continuum):
    m, h = continuum
    spec = WeightedSpectrum(h, 0.75)
    lam = spec.vals[0] + 0.03
    with pytest.raises(ValueError, match="level spacing"):
        lap_scan(spec, 0.75, (lam, lam + 0.005), eps_floor=1e-7, n_lambda=4)
    with pytest.raises(ValueError):
        lap_scan(spec, 0.5, (lam, lam + 0.005))
    floor = 2 * local_spacing(spec, lam)
    assert floor > 0


def test_lap_scan_quasi_continuum_bounded(continuum):
    """Growth stays moderate already at sigma = 0.97 and shrinks with refinement."""
    m, h = continuum
    spec = WeightedSpectrum(h, 0.75)
    ws = window_schedule(spec.vals[0], 0.5, 1.0, 1)
    rep = lap_scan(spec, 0.75, ws.window(0), n_lambda=8)
    assert rep.growth < 2.5
    assert rep.holder >= 0.2
    assert json.loads(rep.to_json())["growth"] == rep.growth


# decay -------------------------------------------------------------------------

def test_decay_single_level_constant(toy_model):
    h = toy_model.hamiltonian()
    spec = WeightedSpectrum(h, 1.0)
    e1 = spec.vals[1]
    rep = decay_scan(h, 1.0, (e1 - 1e-6, e1 + 1e-6), times=np.linspace(0, 50, 11), spectrum=spec)
    assert rep.n_levels == 1
    np.testing.assert_allclose(rep.table.column("value"), rep.value0, rtol=1e-12)


def test_decay_t0_value(toy_model):
    h = toy_model.hamiltonian()
    spec = WeightedSpectrum(h, 1.0)
    a, b = spec.vals[0] + 0.01, spec.vals[0] + 0.1
    from specrg.verify import bump

    f = bump(spec.vals, a, b) ** 4
    w = weight_b_theta(build_dilation_b(h.basis), 1.0).mat
    vals, vecs = np.linalg.eigh(h.mat)
    direct = np.linalg.norm(w @ (vecs * f) @ vecs.conj().T @ w, 2)
    rep = decay_scan(h, 1.0, (a, b), times=[0.0, 1.0], spectrum=spec)
    assert rep.table.column("value")[0] == pytest.approx(direct, abs=1e-12)


def test_decay_empty_support(toy_model):
    with pytest.raises(ValueError, match="no eigenvalue"):
        decay_scan(toy_model.hamiltonian(), 1.0, (-5.0, -4.0))


def test_decay_quasi_continuum(continuum):
    m, h = continuum
    spec = WeightedSpectrum(h, 1.0)
    e_g = spec.vals[0]
    rep = decay_scan(h, 1.0, (e_g + 0.026, e_g + 0.034), spectrum=spec)
    assert rep.n_levels >= 5
    assert rep.nu_fit > 0
    assert rep.monotone_fraction >= 0.8
    assert "T_rec" in rep.caveat


# Mourre --------------------------------------------------------------------------

def test_mourre_free_field(small_basis):
    hf = build_hf(small_basis)
    e = small_basis.energies
    b = build_dilation_b(small_basis)
    for delta in (0.1, 0.5):
        rep = mourre_check(hf, b, delta, t_diag=e, t_tilde=e)
        assert rep.margin >= -0.05 * delta
        assert rep.defect == 0.0


def test_mourre_closed_form(small_basis):
    """``W = 0, T = H_f, delta = 1``: the margin is ``min{r > 1/2} - 1/4 >= 1/4``."""
    hf = build_hf(small_basis)
    e = small_basis.energies
    rep = mourre_check(hf, build_dilation_b(small_basis), 1.0, t_diag=e, t_tilde=e)
    assert rep.margin == pytest.approx(e[e > 0.5].min() - 0.25, abs=1e-14)
    assert rep.margin >= 0.25


def test_mourre_rejects_bad_input(small_basis):
    b = build_dilation_b(small_basis)
    with pytest.raises(ValueError):
        mourre_check(FockOperator(small_basis, build_hf(small_basis).mat), b, 0.1)
    with pytest.raises(ValueError):
        mourre_check(build_hf(small_basis), b, -1.0)


def test_mourre_rg_image(toy_model, toy_eg):
    scan = mourre_rg_scan(toy_model, toy_eg, steps=(1, 2), delta=0.1)
    assert scan.passed()
    assert np.all(np.diff(scan.defects) <= 0)
    assert all(r.route == "kernel" for r in scan.reports)
    assert all(np.isfinite(r.w_tilde_bound) for r in scan.reports)
    assert np.all(scan.e_ratios > 0)


# LAP transfer ----------------------------------------------------------------------

def test_lap_transfer_free(small_basis):
    e = small_basis.full_energies()
    part = Partition.from_basis(small_basis, 0.5)
    b = build_dilation_b(small_basis)
    for shift in (0.0, -1.0):
        lams = np.linspace(-0.3, -0.1, 9) + shift
        r = lap_transfer_check(lambda l: np.diag(e - l + 0j), lams, part, 0.75, b, 1e-3, lambda l: np.diag(e - l + 0j))
        assert r.ratio == pytest.approx(1.0, abs=1e-12)
        if shift < 0:
            assert r.exponent_full == pytest.approx(1.0, abs=0.01)


def test_lap_transfer_rg_image(toy_model, toy_eg):
    basis = toy_model.photon_basis()
    b = build_dilation_b(basis)
    part = Partition.from_basis(basis, 0.5)
    cache = {}

    def h(lam):
        if lam not in cache:
            cache[lam] = assemble_hamiltonian(rg_image_families(toy_model, lam, 1)[0], basis).mat
        return cache[lam]

    lams = np.linspace(*window_schedule(toy_eg, 0.5, 1.0, 2).window(1), 7)
    for eps in (1e-2, 5e-3, 2.5e-3):
        r = lap_transfer_check(h, lams, part, 0.75, b, eps, lambda l: np.diag(np.diag(h(l))))
        assert r.finite()
        assert 0.5 <= r.ratio <= 2.0


# tables ----------------------------------------------------------------------------

def test_scan_table_round_trip():
    t = ScanTable(("a", "b"), np.array([[2.0, 1.0], [1.0, 3.0]]), {"k": 1})
    assert t.column("a").tolist() == [1.0, 2.0]
    back = ScanTable.from_json(t.to_json())
    assert back.to_csv() == t.to_csv()
    assert t.to_csv().splitlines()[0] == "a,b"
    with pytest.raises(FloatingPointError):
        ScanTable(("a",), np.array([[np.nan]]), {})
