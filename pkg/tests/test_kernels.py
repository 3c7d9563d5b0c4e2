import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specrg.fock import build_basis, build_hf, identity
from specrg.grid import MomentumGrid, RGrid
from specrg.kernels import (
    KERNEL_ORDERS,
    CutoffViolation,
    KernelFamily,
    WickKernel,
    assemble_hamiltonian,
    chi1,
    chi_cutoff,
    chi_rho,
    chibar_rho,
    extract_kernels,
    free_field_check,
    kernel_norm,
    random_family,
    round_trip_error,
    wick_bound_check,
)

SIGMA, NK = 0.5, 8
GRID, RG = MomentumGrid(SIGMA, NK), RGrid(SIGMA, NK)


@pytest.fixture(scope="module")
def basis():
    return build_basis(GRID, 2, 2.0)


def monomial_10(mu=0.5):
    """``w_{1,0}[r; k] = |k|^mu``."""
    return WickKernel(1, 0, np.broadcast_to(GRID.k**mu, (RG.size, NK)), GRID, RG)


# cut-off ------------------------------------------------------------------

def test_cutoff_values():
    assert chi1(0.5) == 1.0 and chi1(1.0) == 1.0
    assert chi1(1.2) == 0.0 and chi1(1.1) == 0.0


@given(st.floats(0.0, 3.0), st.sampled_from([1.0, 0.5, 0.25, 0.125]))
def test_partition_of_unity(x, rho):
    assert abs(chi_rho(x, rho) ** 2 + chibar_rho(x, rho) ** 2 - 1.0) <= 1e-12


def test_cutoff_first_derivative_bound():
    prof = chi_cutoff(RG)
    assert prof.sup_d1 <= 30.0


@pytest.mark.xfail(strict=True, reason="any ramp over width 0.1 has sup|chi''| >= 400, so C_chi > 200")
def test_c_chi_at_most_200():
    assert chi_cutoff(RG).c_chi <= 200.0


def test_cutoff_strict_mode_raises():
    with pytest.raises(CutoffViolation):
        chi_cutoff(RG, strict=True)


# norms ---------------------------------------------------------------------

def test_monomial_norm_is_one():
    assert kernel_norm(monomial_10(), "mu") == pytest.approx(1.0, rel=1e-14)


def test_w00_linear_norm():
    fam = KernelFamily.free(GRID, RG, s=1)
    assert kernel_norm(fam, "w00") == pytest.approx(1.0, rel=1e-12)


def hand_family_norm(fam, mu, xi):
    """s = 0 family norm summed with explicit loops."""
    unit = RG.points <= 1.0 + 1e-12
    total = abs(fam.w00[0])
    for (m, n), k in fam.kernels.items():
        best = 0.0
        for a in np.flatnonzero(unit):
            for idx in np.ndindex(*k.values.shape[1:]):
                wmax = max(GRID.k[i] ** -mu for i in idx)
                best = max(best, abs(k.values[(a,) + idx]) * wmax)
        total += xi ** -(m + n) * best
    return total


def test_family_norm_matches_hand_sum():
    fam = random_family(GRID, np.random.default_rng(3), s=0, xi=0.4)
    assert kernel_norm(fam, "family_xi") == pytest.approx(hand_family_norm(fam, 0.5, 0.4), rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from(KERNEL_ORDERS), st.sampled_from([1, 2]))
def test_norm_monotone_in_s(seed, order, s):
    k = random_family(GRID, np.random.default_rng(seed), orders=[order]).kernels[order]
    assert kernel_norm(k, "mu_s", s=0) <= kernel_norm(k, "mu_s", s=s) * (1 + 1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_space_nesting(seed, xi_a, xi_b):
    lo, hi = sorted((xi_a, xi_b))
    fam = random_family(GRID, np.random.default_rng(seed))
    assert kernel_norm(fam, "family_xi", xi=lo) >= kernel_norm(fam, "family_xi", xi=hi) * (1 - 1e-14)


def test_norm_rejects_wrong_objects():
    with pytest.raises(TypeError):
        kernel_norm(monomial_10(), "w00")
    with pytest.raises(ValueError):
        kernel_norm(monomial_10(), "mu_s", s=3)


# assembly -----------------------------------------------------------------

def test_free_family_assembles_to_hf(basis):
    assert free_field_check(basis) == 0.0


def test_self_adjoint_family_is_hermitian(basis):
    fam = random_family(GRID, np.random.default_rng(5), self_adjoint=True)
    assert fam.is_self_adjoint()
    h = assemble_hamiltonian(fam, basis)
    assert h.hermitian
    np.testing.assert_array_equal(h.mat, h.mat.conj().T)


@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=3, allow_nan=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False))
def test_assembly_linear(basis, seed, a, b):
    rng = np.random.default_rng(seed)
    f1, f2 = random_family(GRID, rng), random_family(GRID, rng)
    lhs = assemble_hamiltonian(f1.combine(a, f2, b), basis).mat
    rhs = a * assemble_hamiltonian(f1, basis).mat + b * assemble_hamiltonian(f2, basis).mat
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())


# extraction ----------------------------------------------------------------

def test_extract_free_field(basis):
    fam = extract_kernels(build_hf(basis), RG)
    ridx = [0] + [RG.index_of(k) for k in GRID.k]
    np.testing.assert_allclose(fam.w00[ridx], RG.points[ridx], atol=1e-15)
    assert all(np.abs(k.values).max() == 0 for k in fam.kernels.values())


def test_extract_scalar(basis):
    fam = extract_kernels(identity(basis).scale(2.5), RG)
    np.testing.assert_allclose(fam.w00, 2.5, atol=1e-15)
    assert all(np.abs(k.values).max() == 0 for k in fam.kernels.values())


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_round_trip(basis, seed, sa):
    fam = random_family(GRID, np.random.default_rng(seed), self_adjoint=sa)
    assert round_trip_error(fam, basis) <= 1e-10


def test_family_json_round_trip():
    fam = random_family(GRID, np.random.default_rng(9))
    back = KernelFamily.from_json(fam.to_json())
    np.testing.assert_array_equal(back.w00, fam.w00)
    for key in fam.kernels:
        np.testing.assert_array_equal(back.kernel(*key), fam.kernel(*key))


# operator bound -------------------------------------------------------------

def test_wick_bound_zero_kernel(basis):
    z = WickKernel(1, 1, np.zeros((RG.size, NK, NK)), GRID, RG)
    r = wick_bound_check(z, basis, 0.5)
    assert r.lhs_raw == r.rhs_raw == r.lhs_cut == r.rhs_cut == 0.0


def test_wick_bound_monomial(basis):
    r = wick_bound_check(monomial_10(), basis, 0.5, mu=0.5)
    assert r.rhs_cut == pytest.approx(0.5**1.5)
    assert r.lhs_cut <= (1 + 2 * SIGMA) * 0.5**1.5


@pytest.mark.parametrize("order", KERNEL_ORDERS)
def test_wick_bound_random(basis, order):
    rng = np.random.default_rng(sum(order) * 10 + order[0])
    for _ in range(50):
        k = random_family(GRID, rng, orders=[order]).kernels[order]
        assert wick_bound_check(k, basis, 0.5).holds(1 + 2 * SIGMA)
