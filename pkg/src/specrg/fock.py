"""Truncated bosonic Fock space over a geometric momentum grid.

States are multisets of mode indices (0-based), stored as sorted tuples;
``()`` is the vacuum.  A particle level index is tensored in front, so the
full basis is ``particle (major) x photon state``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import scatter_monomial
from .grid import MomentumGrid

DEFAULT_MAX_DIM = 6000


class BasisMismatch(ValueError):
    """Operators built on different bases were combined."""


class ResourceLimit(RuntimeError):
    """Requested basis exceeds the configured dimension cap."""


@dataclass(frozen=True, eq=False)
class TruncatedFockBasis:
    grid: MomentumGrid
    n_max: int
    e_max: float
    n_particle: int = 1
    states: tuple = field(init=False, repr=False)
    energies: np.ndarray = field(init=False, repr=False)
    raise_idx: np.ndarray = field(init=False, repr=False)
    raise_amp: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = self.grid.k
        states = []
        for n in range(self.n_max + 1):
            for occ in itertools.combinations_with_replacement(range(self.grid.n_modes), n):
                if n == 0 or k[list(occ)].sum() <= self.e_max + 1e-12:
                    states.append(occ)
        index = {s: j for j, s in enumerate(states)}
        nm = self.grid.n_modes
        r_idx = np.full((len(states), nm), -1, dtype=np.int64)
        r_amp = np.zeros((len(states), nm))
        for j, s in enumerate(states):
            for i in range(nm):
                t = index.get(tuple(sorted(s + (i,))))
                if t is not None:
                    r_idx[j, i] = t
                    r_amp[j, i] = np.sqrt(s.count(i) + 1.0)
        en = np.array([k[list(s)].sum() if s else 0.0 for s in states])
        object.__setattr__(self, "states", tuple(states))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "energies", en)
        object.__setattr__(self, "raise_idx", r_idx)
        object.__setattr__(self, "raise_amp", r_amp)

    @property
    def n_photon_states(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.n_particle * len(self.states)

    def index(self, state, particle: int = 0) -> int:
        """Full-basis index of a photon multiset (sorted tuple) in a particle level."""
        return particle * len(self.states) + self._index[tuple(sorted(state))]

    def photon_index(self, state) -> int:
        return self._index[tuple(sorted(state))]

    def photon_numbers(self) -> np.ndarray:
        return np.array([len(s) for s in self.states])

    def full_energies(self) -> np.ndarray:
        """Field energy for every full-basis state."""
        return np.tile(self.energies, self.n_particle)

    def embed(self, photon_matrix: np.ndarray) -> np.ndarray:
        """Lift a photon-space matrix to the full space (identity on levels)."""
        if self.n_particle == 1:
            return photon_matrix
        return np.kron(np.eye(self.n_particle), photon_matrix)

    def same_as(self, other: "TruncatedFockBasis") -> bool:
        return other is self or (
            self.grid == other.grid
            and self.n_max == other.n_max
            and self.e_max == other.e_max
            and self.n_particle == other.n_particle
        )

    def photon_only(self) -> "TruncatedFockBasis":
        if self.n_particle == 1:
            return self
        return TruncatedFockBasis(self.grid, self.n_max, self.e_max, 1)


def build_basis(grid: MomentumGrid, n_max: int, e_max: float, n_particle: int = 1,
                max_dim: int = DEFAULT_MAX_DIM) -> TruncatedFockBasis:
    """Enumerate admissible occupations with ``sum n_i <= n_max`` and field energy <= ``e_max``."""
    if n_max < 0 or e_max <= 0 or n_particle < 1:
        raise ValueError("need n_max >= 0, e_max > 0, n_particle >= 1")
    # cheap upper bound before enumerating
    from math import comb

    bound = sum(comb(grid.n_modes + n - 1, n) for n in range(n_max + 1)) * n_particle
    basis = None
    if bound > 50 * max_dim:
        raise ResourceLimit(f"basis bound {bound} exceeds cap {max_dim}")
    basis = TruncatedFockBasis(grid, n_max, e_max, n_particle)
    if basis.dim > max_dim:
        raise ResourceLimit(f"basis dimension {basis.dim} exceeds cap {max_dim}")
    return basis


@dataclass(frozen=True, eq=False)
class FockOperator:
    basis: TruncatedFockBasis
    mat: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        if self.mat.shape != (self.basis.dim, self.basis.dim):
            raise BasisMismatch(f"matrix shape {self.mat.shape} vs dim {self.basis.dim}")
        if self.hermitian:
            scale = max(np.abs(self.mat).max(initial=0.0), 1e-300)
            if np.abs(self.mat - self.mat.conj().T).max(initial=0.0) > 1e-12 * scale:
                raise ValueError("operator flagged hermitian is not self-adjoint")

    def _check(self, other: "FockOperator"):
        if not self.basis.same_as(other.basis):
            raise BasisMismatch("operators live on different bases")

    def __add__(self, other):
        self._check(other)
        return FockOperator(self.basis, self.mat + other.mat, self.hermitian and other.hermitian)

    def __sub__(self, other):
        self._check(other)
        return FockOperator(self.basis, self.mat - other.mat, self.hermitian and other.hermitian)

    def __matmul__(self, other):
        self._check(other)
        return FockOperator(self.basis, self.mat @ other.mat)

    def scale(self, c) -> "FockOperator":
        return FockOperator(self.basis, c * self.mat, self.hermitian and np.isreal(c))

    def dagger(self) -> "FockOperator":
        return FockOperator(self.basis, self.mat.conj().T, self.hermitian)

    def norm(self) -> float:
        return float(np.linalg.norm(self.mat, 2))


# ---------------------------------------------------------------------------
# monomial machinery

def ordered_tuples(n_modes: int, length: int) -> np.ndarray:
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(n_modes), repeat=length)), dtype=np.int64)


def raise_tuples(basis: TruncatedFockBasis, spectators: np.ndarray, tuples: np.ndarray):
    """Target index and amplitude of ``a*(k_t1)...a*(k_tn)|u>`` for each spectator and tuple.

    Returns arrays of shape ``(len(spectators), len(tuples))``; index -1
    marks targets outside the basis.
    """
    nu, nt = len(spectators), len(tuples)
    idx = np.repeat(np.asarray(spectators, dtype=np.int64)[:, None], nt, axis=1)
    amp = np.ones((nu, nt))
    for col in range(tuples.shape[1] - 1, -1, -1):
        modes = np.broadcast_to(tuples[:, col], (nu, nt))
        ok = idx >= 0
        nxt = np.full_like(idx, -1)
        nxt[ok] = basis.raise_idx[idx[ok], modes[ok]]
        amp = np.where(ok, amp * np.where(ok, basis.raise_amp[np.where(ok, idx, 0), modes], 0.0), 0.0)
        idx = nxt
    amp[idx < 0] = 0.0
    return np.ascontiguousarray(idx), np.ascontiguousarray(amp)


def scatter(out: np.ndarray, t_idx, t_amp, s_idx, s_amp, vals) -> np.ndarray:
    """``out[t, s] += vals[u, i, j] * t_amp[u, i] * s_amp[u, j]``, in place; returns ``out``."""
    scatter_monomial(
        out,
        np.ascontiguousarray(t_idx, dtype=np.int64),
        np.ascontiguousarray(t_amp, dtype=float),
        np.ascontiguousarray(s_idx, dtype=np.int64),
        np.ascontiguousarray(s_amp, dtype=float),
        np.ascontiguousarray(vals, dtype=complex),
    )
    return out


def one_body(basis: TruncatedFockBasis, h1: np.ndarray) -> np.ndarray:
    """Photon-space matrix of ``sum_ij h1[i, j] a*_i a_j``; transitions leaving the basis are dropped."""
    nm = basis.grid.n_modes
    specs = np.flatnonzero(basis.photon_numbers() < basis.n_max) if basis.n_max > 0 else np.array([], int)
    out = np.zeros((basis.n_photon_states,) * 2, dtype=complex)
    if specs.size == 0:
        return out
    single = ordered_tuples(nm, 1)
    t_idx, t_amp = raise_tuples(basis, specs, single)
    vals = np.broadcast_to(np.asarray(h1, dtype=complex), (specs.size, nm, nm))
    return scatter(out, t_idx, t_amp, t_idx, t_amp, vals)


# ---------------------------------------------------------------------------
# named operators

def ladder_op(basis: TruncatedFockBasis, mode: int, kind: str) -> FockOperator:
    """Discrete ladder operator ``A_i`` (``kind='annihilate'``) or ``A_i^*`` (``'create'``)."""
    if not 0 <= mode < basis.grid.n_modes:
        raise IndexError(mode)
    n = basis.n_photon_states
    create = np.zeros((n, n))
    src = np.flatnonzero(basis.raise_idx[:, mode] >= 0)
    create[basis.raise_idx[src, mode], src] = basis.raise_amp[src, mode]
    if kind == "create":
        m = create
    elif kind == "annihilate":
        m = create.T.copy()
    else:
        raise ValueError(f"unknown ladder kind {kind!r}")
    return FockOperator(basis, basis.embed(m).astype(complex))


def build_hf(basis: TruncatedFockBasis) -> FockOperator:
    return FockOperator(basis, np.diag(basis.full_energies()).astype(complex), hermitian=True)


STENCILS = ("spectral", "nearest")


def spectral_symbol(n_modes: int, log_step: float) -> np.ndarray:
    """Eigenvalues of the periodic spectral stencil in FFT order.

    ``p_m = -2 pi m / (n h)``; for even ``n`` the Nyquist entry is 0, the
    only value an ``i x (real antisymmetric)`` circulant allows there.
    """
    p = -2.0 * np.pi * np.fft.fftfreq(n_modes, d=log_step)
    if n_modes % 2 == 0:
        p[n_modes // 2] = 0.0
    return p


def dilation_one_particle(grid: MomentumGrid, stencil: str = "spectral") -> np.ndarray:
    """One-boson dilation generator on the log grid, ``i x (real antisymmetric)``.

    ``'spectral'`` is the infinite-order central difference in ``log k``
    with periodic closure (a circulant, diagonal under the FFT).
    ``'nearest'`` is the two-point central difference with weight
    ``1/(1/sigma - sigma)``, which makes ``i[h_f, b] = h_f`` exact on
    constant amplitudes.  Both satisfy ``i[h_f, b] ~ h_f`` on smooth
    packets.  The two-point stencil pairs every mode with the staggered
    mode of the same ``|b|``, so functions of ``b`` decouple even and odd
    sites; the spectral one does not (for odd ``n_modes``).
    """
    nm = grid.n_modes
    if nm < 3:
        raise ValueError("dilation generator needs at least 3 modes")
    if stencil == "nearest":
        a = 1.0 / (1.0 / grid.sigma - grid.sigma)
        d = np.zeros((nm, nm))
        i = np.arange(nm - 1)
        d[i, i + 1] = a
        d[i + 1, i] = -a
    elif stencil == "spectral":
        p = spectral_symbol(nm, grid.log_step)
        f = np.fft.fft(np.eye(nm), axis=0) / np.sqrt(nm)
        d = ((f.conj().T * p) @ f).imag
        d = 0.5 * (d - d.T)
    else:
        raise ValueError(f"unknown stencil {stencil!r}; expected one of {STENCILS}")
    return 1j * d


def build_dilation_b(basis: TruncatedFockBasis, stencil: str = "spectral") -> FockOperator:
    """Second quantisation of the discretised dilation generator.

    Convention: ``i[H_f, B] = +H_f`` on smooth packets (positive commutator).
    """
    m = one_body(basis, dilation_one_particle(basis.grid, stencil))
    m = 0.5 * (m + m.conj().T)
    return FockOperator(basis, basis.embed(m), hermitian=True)


def weight_b_theta(b: FockOperator, theta: float) -> FockOperator:
    """``<B>^{-theta} = (1 + B^2)^{-theta/2}`` by spectral decomposition."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    try:
        vals, vecs = scipy.linalg.eigh(b.mat)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigendecomposition of B failed") from exc
    w = (1.0 + vals**2) ** (-theta / 2)
    m = (vecs * w) @ vecs.conj().T
    return FockOperator(b.basis, 0.5 * (m + m.conj().T), hermitian=True)


def ad_b(b: FockOperator, x: FockOperator) -> FockOperator:
    """Exact matrix commutator ``[B, X]``."""
    b._check(x)
    return FockOperator(b.basis, b.mat @ x.mat - x.mat @ b.mat)


def identity(basis: TruncatedFockBasis) -> FockOperator:
    return FockOperator(basis, np.eye(basis.dim, dtype=complex), hermitian=True)
