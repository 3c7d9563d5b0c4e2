"""Generalised Wick kernels: storage, norms, cut-offs, assembly and extraction.

A kernel ``w_{m,n}`` is tabulated on ``RGrid x MomentumGrid^(m+n)``.  Its
operator is

    W_{m,n} = sum_{I, J} prod_I c_i prod_J c_j  A*_I  w[H_f; I, J]  A_J

over ordered mode tuples, with ``c = grid.measure``.  The ``H_f`` argument
sits between the creators and annihilators, so on matrix elements it is the
field energy of the spectator state ``u`` with ``t = u + I``, ``s = u + J``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .fock import (
    FockOperator,
    TruncatedFockBasis,
    build_hf,
    ordered_tuples,
    raise_tuples,
    scatter,
)
from .grid import MomentumGrid, RGrid

RAMP_WIDTH = 0.1
SUP_DERIV_BOUND = 30.0
C_CHI_BOUND = 200.0
KERNEL_ORDERS = ((1, 0), (0, 1), (1, 1), (2, 0), (0, 2))


class CutoffViolation(ValueError):
    """A cut-off profile breaks one of its required bounds."""


# ---------------------------------------------------------------------------
# cut-off

def chi1(r):
    """``cos^2`` ramp: 1 on ``r <= 1``, 0 on ``r >= 1.1``."""
    r = np.asarray(r, dtype=float)
    x = np.clip((r - 1.0) / RAMP_WIDTH, 0.0, 1.0)
    # cos(pi/2) is not exactly 0 in floating point
    return np.where(x >= 1.0, 0.0, np.cos(0.5 * np.pi * x) ** 2)


def chi1_d1(r):
    r = np.asarray(r, dtype=float)
    inside = (r > 1.0) & (r < 1.0 + RAMP_WIDTH)
    a = np.pi / RAMP_WIDTH
    return np.where(inside, -0.5 * a * np.sin(a * (r - 1.0)), 0.0)


def chi1_d2(r):
    r = np.asarray(r, dtype=float)
    inside = (r > 1.0) & (r < 1.0 + RAMP_WIDTH)
    a = np.pi / RAMP_WIDTH
    return np.where(inside, -0.5 * a * a * np.cos(a * (r - 1.0)), 0.0)


def chi_rho(x, rho: float):
    return chi1(np.asarray(x, dtype=float) / rho)


def chibar_rho(x, rho: float):
    return np.sqrt(np.clip(1.0 - chi_rho(x, rho) ** 2, 0.0, 1.0))


@dataclass(frozen=True)
class CutoffProfile:
    r: np.ndarray
    chi: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    sup_d1: float
    sup_d2: float
    c_chi: float
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def chi_cutoff(rgrid: RGrid | None = None, strict: bool = False) -> CutoffProfile:
    """Tabulate the ramp and its derivatives and check the required bounds.

    The sup norms are closed-form (``pi/(2 w)`` and ``pi^2/(2 w^2)`` for
    ramp width ``w``).  Any ramp from 1 to 0 over width ``w = 0.1`` needs
    ``sup |chi''| >= 4/w^2 = 400``, so the second-derivative and ``C_chi``
    bounds cannot hold; violations are recorded and raise only with ``strict``.
    """
    r = np.asarray(rgrid.points if rgrid is not None else np.linspace(0.0, 1.2, 241))
    a = np.pi / RAMP_WIDTH
    sup1, sup2 = 0.5 * a, 0.5 * a * a
    c_chi = 4.0 / 3.0 * (1.0 + sup1 + sup2 + sup1**2)
    bad = []
    if sup1 > SUP_DERIV_BOUND:
        bad.append(f"sup|chi'| = {sup1:.4g} > {SUP_DERIV_BOUND}")
    if sup2 > SUP_DERIV_BOUND:
        bad.append(f"sup|chi''| = {sup2:.4g} > {SUP_DERIV_BOUND}")
    if c_chi > C_CHI_BOUND:
        bad.append(f"C_chi = {c_chi:.4g} > {C_CHI_BOUND}")
    if strict and bad:
        raise CutoffViolation("; ".join(bad))
    return CutoffProfile(r, chi1(r), chi1_d1(r), chi1_d2(r), sup1, sup2, c_chi, tuple(bad))


# ---------------------------------------------------------------------------
# containers

def _check_grids(grid: MomentumGrid, rgrid: RGrid):
    if grid.sigma != rgrid.sigma or grid.n_modes != rgrid.n_modes:
        raise ValueError("momentum grid and r-grid disagree")


@dataclass(frozen=True, eq=False)
class WickKernel:
    m: int
    n: int
    values: np.ndarray
    grid: MomentumGrid
    rgrid: RGrid

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or not 1 <= self.m + self.n <= 2:
            raise ValueError(f"unsupported order ({self.m}, {self.n})")
        _check_grids(self.grid, self.rgrid)
        shape = (self.rgrid.size,) + (self.grid.n_modes,) * (self.m + self.n)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != shape:
            raise ValueError(f"kernel values have shape {vals.shape}, expected {shape}")
        object.__setattr__(self, "values", vals)

    @property
    def order(self) -> tuple:
        return (self.m, self.n)

    def symmetrized(self) -> "WickKernel":
        v = self.values
        if self.order in ((2, 0), (0, 2)):
            v = 0.5 * (v + v.transpose(0, 2, 1))
        return WickKernel(self.m, self.n, v, self.grid, self.rgrid)

    def symmetry_defect(self) -> float:
        if self.order in ((2, 0), (0, 2)):
            return float(np.abs(self.values - self.values.transpose(0, 2, 1)).max())
        return 0.0


@dataclass(frozen=True, eq=False)
class KernelFamily:
    grid: MomentumGrid
    rgrid: RGrid
    w00: np.ndarray
    kernels: dict = field(default_factory=dict)
    mu: float = 0.5
    s: int = 2
    xi: float = 0.5
    unsampled: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_grids(self.grid, self.rgrid)
        w00 = np.asarray(self.w00, dtype=complex)
        if w00.shape != (self.rgrid.size,):
            raise ValueError("w00 must live on the r-grid")
        object.__setattr__(self, "w00", w00)
        ks = {}
        for key, k in dict(self.kernels).items():
            if not isinstance(k, WickKernel):
                k = WickKernel(key[0], key[1], k, self.grid, self.rgrid)
            ks[k.order] = k
        object.__setattr__(self, "kernels", ks)

    # construction helpers
    @classmethod
    def free(cls, grid: MomentumGrid, rgrid: RGrid | None = None, const: float = 0.0, **params):
        """``w00(r) = const + r`` and no interaction."""
        rgrid = rgrid or RGrid(grid.sigma, grid.n_modes)
        return cls(grid, rgrid, const + rgrid.points, {}, **params)

    def kernel(self, m: int, n: int) -> np.ndarray:
        k = self.kernels.get((m, n))
        if k is None:
            return np.zeros((self.rgrid.size,) + (self.grid.n_modes,) * (m + n), dtype=complex)
        return k.values

    def replace(self, w00=None, kernels=None, **params) -> "KernelFamily":
        kw = dict(mu=self.mu, s=self.s, xi=self.xi)
        kw.update(params)
        return KernelFamily(
            self.grid,
            self.rgrid,
            self.w00 if w00 is None else w00,
            self.kernels if kernels is None else kernels,
            **kw,
        )

    def combine(self, a: complex, other: "KernelFamily", b: complex) -> "KernelFamily":
        """``a * self + b * other``."""
        if self.grid != other.grid or self.rgrid != other.rgrid:
            raise ValueError("families live on different grids")
        keys = set(self.kernels) | set(other.kernels)
        ks = {key: a * self.kernel(*key) + b * other.kernel(*key) for key in keys}
        return self.replace(a * self.w00 + b * other.w00, ks)

    def interaction(self) -> "KernelFamily":
        """Same family with ``w00 = 0`` (the ``w_1`` part)."""
        return self.replace(np.zeros_like(self.w00))

    def is_self_adjoint(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, max((np.abs(k.values).max() for k in self.kernels.values()), default=0.0))
        if np.abs(self.w00.imag).max() > tol * max(1.0, np.abs(self.w00).max()):
            return False
        pairs = [((1, 0), (0, 1)), ((2, 0), (0, 2))]
        for a, b in pairs:
            if np.abs(self.kernel(*a) - self.kernel(*b).conj()).max() > tol * scale:
                return False
        w11 = self.kernel(1, 1)
        return np.abs(w11 - w11.transpose(0, 2, 1).conj()).max() <= tol * scale

    # serialisation
    def to_dict(self) -> dict:
        def enc(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "grid": self.grid.to_dict(),
            "rgrid": self.rgrid.to_dict(),
            "mu": self.mu,
            "s": self.s,
            "xi": self.xi,
            "w00": enc(self.w00),
            "kernels": [
                {"m": k.m, "n": k.n, "values": enc(k.values)}
                for k in sorted(self.kernels.values(), key=lambda k: k.order)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelFamily":
        def dec(x):
            a = np.asarray(x, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        grid = MomentumGrid(**d["grid"])
        rgrid = RGrid(**d["rgrid"])
        ks = {(k["m"], k["n"]): dec(k["values"]) for k in d["kernels"]}
        return cls(grid, rgrid, dec(d["w00"]), ks, mu=d["mu"], s=d["s"], xi=d["xi"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "KernelFamily":
        return cls.from_dict(json.loads(text))


def random_family(grid: MomentumGrid, rng: np.random.Generator, scale: float = 1.0,
                  orders=KERNEL_ORDERS, self_adjoint: bool = False, zero_w11_diag: bool = True,
                  rgrid: RGrid | None = None, **params) -> KernelFamily:
    """Random smooth-ish family used by tests and audits."""
    rgrid = rgrid or RGrid(grid.sigma, grid.n_modes)
    r = rgrid.points
    w00 = rng.normal() * 0.1 + (1.0 + 0.1 * rng.normal()) * r + 0.05 * rng.normal() * r**2
    ks = {}
    for m, n in orders:
        shape = (rgrid.size,) + (grid.n_modes,) * (m + n)
        v = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * scale
        v *= (1.0 + 0.3 * r).reshape((-1,) + (1,) * (m + n))
        if (m, n) in ((2, 0), (0, 2)):
            v = 0.5 * (v + v.transpose(0, 2, 1))
        if (m, n) == (1, 1) and zero_w11_diag:
            i = np.arange(grid.n_modes)
            v[:, i, i] = 0.0
        ks[(m, n)] = v
    if self_adjoint:
        if (1, 0) in ks:
            ks[(0, 1)] = ks[(1, 0)].conj()
        if (2, 0) in ks:
            ks[(0, 2)] = ks[(2, 0)].conj()
        if (1, 1) in ks:
            ks[(1, 1)] = 0.5 * (ks[(1, 1)] + ks[(1, 1)].transpose(0, 2, 1).conj())
    return KernelFamily(grid, rgrid, w00, ks, **params)


# ---------------------------------------------------------------------------
# norms

def interp_r(points: np.ndarray, vals: np.ndarray, r) -> np.ndarray:
    """Piecewise-linear interpolation along axis 0, linear extrapolation outside."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    i = np.clip(np.searchsorted(points, r, side="right") - 1, 0, len(points) - 2)
    t = (r - points[i]) / (points[i + 1] - points[i])
    t = t.reshape((-1,) + (1,) * (vals.ndim - 1))
    return vals[i] * (1.0 - t) + vals[i + 1] * t


def _deriv_r(points, v):
    if len(points) < 3:
        return np.zeros_like(v)
    return np.gradient(v, points, axis=0)


def _deriv_k(v, axis, h):
    if v.shape[axis] < 2:
        return np.zeros_like(v)
    return np.gradient(v, h, axis=axis)


def _max_weight(grid: MomentumGrid, nk: int, mu: float) -> np.ndarray:
    kw = grid.k ** (-mu)
    grids = np.meshgrid(*([kw] * nk), indexing="ij")
    return np.maximum.reduce(grids) if nk > 1 else grids[0]


def _mu_sup(values: np.ndarray, mask: np.ndarray, weight: np.ndarray) -> float:
    return float(np.max(np.abs(values[mask]) * weight, initial=0.0))


def _derivative_terms(values, grid: MomentumGrid, rgrid: RGrid, s: int):
    """Yield ``d_r^n (k d_k)^q w`` for ``n + |q| <= s``."""
    nk = values.ndim - 1
    h = grid.log_step
    pts = rgrid.points
    rders = [values]
    for _ in range(s):
        rders.append(_deriv_r(pts, rders[-1]))
    qs = [q for q in np.ndindex(*([s + 1] * nk)) if sum(q) <= s] if nk else [()]
    for n in range(s + 1):
        for q in qs:
            if n + sum(q) > s:
                continue
            v = rders[n]
            for ax, qa in enumerate(q):
                for _ in range(qa):
                    v = _deriv_k(v, ax + 1, h)
            yield n, q, v


def kernel_norm(obj, variant: str = "mu", mu: float | None = None, s: int | None = None,
                xi: float | None = None) -> float:
    """Kernel-space norms.

    Parameters
    ----------
    obj : WickKernel or KernelFamily
    variant : {'mu', 'mu_s', 'w00', 'family_xi'}
        ``'mu'`` and ``'mu_s'`` take a kernel, ``'w00'`` and ``'family_xi'``
        a family.  Parameters default to the family's own.
    """
    if variant in ("w00", "family_xi"):
        if not isinstance(obj, KernelFamily):
            raise TypeError(f"variant {variant!r} needs a KernelFamily")
        fam = obj
        mu = fam.mu if mu is None else mu
        s = fam.s if s is None else s
        xi = fam.xi if xi is None else xi
    else:
        if not isinstance(obj, WickKernel):
            raise TypeError(f"variant {variant!r} needs a WickKernel")
        mu = 0.5 if mu is None else mu
        s = 0 if s is None else s
    if s < 0 or s > 2:
        raise ValueError("s must be 0, 1 or 2")
    if mu < 0:
        raise ValueError("mu must be >= 0")

    if variant == "w00":
        pts = obj.rgrid.points
        mask = obj.rgrid.unit_mask
        total = abs(obj.w00[0])
        d = obj.w00
        for _ in range(s):
            d = _deriv_r(pts, d)
            total += float(np.abs(d[mask]).max())
        out = float(total)
    elif variant == "family_xi":
        out = kernel_norm(obj, "w00", mu, s)
        for k in obj.kernels.values():
            out += xi ** (-(k.m + k.n)) * kernel_norm(k, "mu_s", mu, s)
    elif variant in ("mu", "mu_s"):
        k = obj
        nk = k.m + k.n
        weight = _max_weight(k.grid, nk, mu)
        mask = k.rgrid.unit_mask
        if variant == "mu":
            out = _mu_sup(k.values, mask, weight)
        else:
            out = sum(_mu_sup(v, mask, weight) for _, _, v in _derivative_terms(k.values, k.grid, k.rgrid, s))
    else:
        raise ValueError(f"unknown norm variant {variant!r}")
    if not np.isfinite(out):
        raise FloatingPointError("kernel norm is not finite")
    return out


# ---------------------------------------------------------------------------
# assembly

def _photon_block(basis: TruncatedFockBasis) -> TruncatedFockBasis:
    return basis.photon_only()


def _monomial_matrix(vals_r: np.ndarray, m: int, n: int, basis: TruncatedFockBasis,
                     rgrid: RGrid, cutoff_scale: float | None, r_max: float | None) -> np.ndarray:
    """Photon-space matrix of one kernel (optionally sandwiched by ``chi_1(H_f / scale)``)."""
    nm = basis.grid.n_modes
    e = basis.energies
    nph = basis.photon_numbers()
    specs = np.flatnonzero(nph + max(m, n) <= basis.n_max)
    if r_max is not None:
        specs = specs[e[specs] <= r_max + 1e-12]
    out = np.zeros((basis.n_photon_states,) * 2, dtype=complex)
    if specs.size == 0:
        return out
    c = basis.grid.measure
    ti, ta = raise_tuples(basis, specs, ordered_tuples(nm, m))
    si, sa = raise_tuples(basis, specs, ordered_tuples(nm, n))
    ta = ta * np.prod(c[ordered_tuples(nm, m)], axis=1)[None, :]
    sa = sa * np.prod(c[ordered_tuples(nm, n)], axis=1)[None, :]
    if cutoff_scale is not None:
        ta = ta * np.where(ti >= 0, chi_rho(e[np.maximum(ti, 0)], cutoff_scale), 0.0)
        sa = sa * np.where(si >= 0, chi_rho(e[np.maximum(si, 0)], cutoff_scale), 0.0)
    w = interp_r(rgrid.points, vals_r, e[specs])
    vals = w.reshape(specs.size, nm**m, nm**n)
    return scatter(out, ti, ta, si, sa, vals)


def assemble_hamiltonian(family: KernelFamily, basis: TruncatedFockBasis,
                         cutoff_scale: float | None = 1.0, include_w00: bool = True,
                         r_max: float | None = None) -> FockOperator:
    """``w00(H_f) + sum chi W_{m,n} chi`` on the truncated basis.

    ``cutoff_scale=None`` drops the cut-offs (raw ``W_{m,n}``);
    ``r_max`` drops spectators whose field energy exceeds it.
    """
    if basis.grid != family.grid:
        raise ValueError("family grid does not match basis grid")
    pb = _photon_block(basis)
    m = np.zeros((pb.n_photon_states,) * 2, dtype=complex)
    if include_w00:
        m[np.diag_indices_from(m)] = interp_r(family.rgrid.points, family.w00, pb.energies)
    for (a, b), k in family.kernels.items():
        m += _monomial_matrix(k.values, a, b, pb, family.rgrid, cutoff_scale, r_max)
    herm = family.is_self_adjoint()
    if herm:
        m = 0.5 * (m + m.conj().T)
    return FockOperator(basis, basis.embed(m), hermitian=herm)


# ---------------------------------------------------------------------------
# extraction

def _fill_r(points_idx: np.ndarray, samples: np.ndarray, ok: np.ndarray, rgrid: RGrid) -> np.ndarray:
    """Spread per-spectator samples onto the r-grid.

    ``samples[a, ...]`` is taken at ``r = points[points_idx[a]]``; masked
    entries are ignored.  Linear interpolation between sampled r values,
    constant continuation outside them, zero where nothing was sampled.
    """
    pts = rgrid.points
    flat = samples.reshape(samples.shape[0], -1)
    okf = ok.reshape(ok.shape[0], -1)
    out = np.zeros((pts.size, flat.shape[1]), dtype=complex)
    rs = pts[points_idx]
    for col in range(flat.shape[1]):
        sel = okf[:, col]
        if not sel.any():
            continue
        x, y = rs[sel], flat[sel, col]
        order = np.argsort(x)
        x, y = x[order], y[order]
        if x.size == 1:
            out[:, col] = y[0]
        else:
            out[:, col] = interp_r(x, y, pts)
    return out.reshape((pts.size,) + samples.shape[1:])


def extract_kernels(h: FockOperator, rgrid: RGrid | None = None, cutoff_scale: float = 1.0,
                    mu: float = 0.5, s: int = 2, xi: float = 0.5, chi_floor: float = 1e-12) -> KernelFamily:
    """Read an ``m + n <= 2`` Wick family off the matrix of ``h``.

    Spectators are the vacuum and the one-boson states, so kernels are
    sampled at ``r in {0} U {k_q}``.  ``w11`` is returned with zero diagonal;
    the diagonal is absorbed into ``w00`` (it is not separately identifiable
    from matrix elements).  Elements whose cut-off factor vanishes, or whose
    target leaves the basis, are unsampled; they are recorded in
    ``family.unsampled`` as boolean masks over the sample points.
    """
    basis = h.basis
    grid = basis.grid
    rgrid = rgrid or RGrid(grid.sigma, grid.n_modes)
    npst = basis.n_photon_states
    H = h.mat[:npst, :npst]
    e = basis.energies
    nm = grid.n_modes
    c = grid.measure

    specs = [0] + [basis.photon_index((q,)) for q in range(nm) if (q,) in basis._index]
    specs = np.array(specs, dtype=np.int64)
    ridx = np.array([rgrid.index_of(e[u]) for u in specs])

    # w00: diagonal at sampled r, linear in between, linear beyond the top sample
    d = np.real_if_close(np.diag(H)[specs])
    rs = rgrid.points[ridx]
    w00 = interp_r(rs, np.asarray(d, dtype=complex), rgrid.points)

    kernels, unsampled = {}, {}
    for m, n in KERNEL_ORDERS:
        ti, ta = raise_tuples(basis, specs, ordered_tuples(nm, m))
        si, sa = raise_tuples(basis, specs, ordered_tuples(nm, n))
        ct = np.prod(c[ordered_tuples(nm, m)], axis=1)
        cs = np.prod(c[ordered_tuples(nm, n)], axis=1)
        xt = np.where(ti >= 0, chi_rho(e[np.maximum(ti, 0)], cutoff_scale), 0.0)
        xs = np.where(si >= 0, chi_rho(e[np.maximum(si, 0)], cutoff_scale), 0.0)
        fac_t = ta * ct[None, :] * xt
        fac_s = sa * cs[None, :] * xs
        denom = fac_t[:, :, None] * fac_s[:, None, :]
        if (m, n) in ((2, 0), (0, 2)):
            tup = ordered_tuples(nm, 2)
            mult = np.where(tup[:, 0] != tup[:, 1], 2.0, 1.0)
            denom = denom * (mult[:, None] if m == 2 else mult[None, :])[None]
        ok = (ti[:, :, None] >= 0) & (si[:, None, :] >= 0) & (np.abs(denom) > chi_floor)
        elem = H[np.maximum(ti, 0)[:, :, None], np.maximum(si, 0)[:, None, :]]
        samp = np.where(ok, elem / np.where(ok, denom, 1.0), 0.0)
        shape = (specs.size,) + (nm,) * (m + n)
        samp = samp.reshape(shape)
        ok = ok.reshape(shape)
        if (m, n) == (1, 1):
            i = np.arange(nm)
            samp[:, i, i] = 0.0
            ok[:, i, i] = True
        kernels[(m, n)] = _fill_r(ridx, samp, ok, rgrid)
        unsampled[(m, n)] = ~ok
    return KernelFamily(grid, rgrid, w00, kernels, mu=mu, s=s, xi=xi, unsampled=unsampled)


def sampled_points(family: KernelFamily, basis: TruncatedFockBasis):
    """``(r-grid index per spectator, sampled masks)`` matching :func:`extract_kernels`."""
    e = basis.energies
    specs = [0] + [basis.photon_index((q,)) for q in range(basis.grid.n_modes) if (q,) in basis._index]
    ridx = np.array([family.rgrid.index_of(e[u]) for u in specs])
    return ridx, {k: ~v for k, v in (family.unsampled or {}).items()}


def round_trip_error(family: KernelFamily, basis: TruncatedFockBasis) -> float:
    """Max deviation of ``extract(assemble(family))`` from ``family`` at the sampled points.

    ``w11`` is compared off the diagonal only (the diagonal folds into
    ``w00``), so pass families with a zero ``w11`` diagonal.
    """
    h = assemble_hamiltonian(family, basis)
    back = extract_kernels(h, family.rgrid, mu=family.mu, s=family.s, xi=family.xi)
    ridx, masks = sampled_points(back, basis)
    err = float(np.abs(back.w00[ridx] - family.w00[ridx]).max())
    for key in KERNEL_ORDERS:
        d = np.abs(back.kernel(*key)[ridx] - family.kernel(*key)[ridx])
        err = max(err, float(np.max(d[masks[key]], initial=0.0)))
    return err


# ---------------------------------------------------------------------------
# Wick bound

@dataclass(frozen=True)
class WickBoundReport:
    order: tuple
    rho: float
    mu: float
    lhs_raw: float
    rhs_raw: float
    lhs_cut: float
    rhs_cut: float

    @property
    def margin_raw(self) -> float:
        return self.rhs_raw - self.lhs_raw

    @property
    def margin_cut(self) -> float:
        return self.rhs_cut - self.lhs_cut

    def holds(self, factor: float = 1.0) -> bool:
        return self.lhs_raw <= factor * self.rhs_raw + 1e-14 and self.lhs_cut <= factor * self.rhs_cut + 1e-14


def wick_bound_check(kernel: WickKernel, basis: TruncatedFockBasis, rho: float, mu: float = 0.5) -> WickBoundReport:
    """Both sides of the weighted and cut-off operator bounds for one kernel.

    Spectators are restricted to ``r <= 1`` so that only tabulated values of
    the kernel enter.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    m, n = kernel.order
    pb = basis.photon_only()
    raw = _monomial_matrix(kernel.values, m, n, pb, kernel.rgrid, None, 1.0)
    hf = pb.energies
    left = (hf + rho) ** (-m / 2)
    right = (hf + rho) ** (-n / 2)
    lhs_raw = float(np.linalg.norm(left[:, None] * raw * right[None, :], 2)) if raw.size else 0.0
    x = chi_rho(hf, rho)
    lhs_cut = float(np.linalg.norm(x[:, None] * raw * x[None, :], 2)) if raw.size else 0.0
    rhs_raw = kernel_norm(kernel, "mu", mu=0.0)
    rhs_cut = rho ** ((m + n) * (1 + mu)) / np.sqrt(factorial(m) * factorial(n)) * kernel_norm(kernel, "mu", mu=mu)
    return WickBoundReport((m, n), rho, mu, lhs_raw, rhs_raw, lhs_cut, rhs_cut)


def free_field_check(basis: TruncatedFockBasis) -> float:
    """Max deviation of ``assemble(w00 = r)`` from ``H_f`` (sanity helper)."""
    fam = KernelFamily.free(basis.grid)
    return float(np.abs(assemble_hamiltonian(fam, basis).mat - build_hf(basis).mat).max())
