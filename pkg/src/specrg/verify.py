"""Exact-diagonalisation oracle and numerical spectral checks.

The checks here are the desk-scale stand-ins for continuum statements:
Mourre positivity on a spectral window, weighted resolvent bounds down to
a level-spacing floor, and local decay up to half the recurrence time.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .feshbach import MARGIN_FLOOR, Partition, feshbach_map
from .fock import FockOperator, TruncatedFockBasis, build_dilation_b, spectral_symbol, weight_b_theta
from .kernels import KernelFamily, assemble_hamiltonian, interp_r

EIG_RESIDUAL = 1e-10
DENSE_NORM_DIM = 400


def _mat(x) -> np.ndarray:
    return x.mat if isinstance(x, FockOperator) else np.asarray(x)


def operator_hash(x) -> str:
    """Short content hash of an operator matrix (metadata tag for tables)."""
    m = np.ascontiguousarray(_mat(x), dtype=complex)
    return hashlib.sha256(m.tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# tables

@dataclass
class ScanTable:
    """Rows of numbers under named columns, sorted by the leading columns."""

    columns: tuple
    rows: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))
        if not np.all(np.isfinite(rows)):
            raise FloatingPointError("scan table contains non-finite values")
        order = np.lexsort(rows.T[::-1]) if rows.size else np.arange(0)
        self.rows = rows[order]
        self.columns = tuple(self.columns)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns)
        for r in self.rows:
            wr.writerow([repr(float(x)) for x in r])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": self.rows.tolist(), "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScanTable":
        d = json.loads(text)
        return cls(tuple(d["columns"]), np.array(d["rows"], dtype=float), d.get("meta", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, ScanTable):
        return obj.to_dict()
    return obj


class _Report:
    def to_dict(self) -> dict:
        return _jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# oracle

def exact_diag(h: FockOperator):
    """Full spectrum of a hermitian operator, ascending, with residual check.

    Raises
    ------
    ValueError
        If the operator is not flagged hermitian.
    FloatingPointError
        If some eigenpair has residual above ``1e-10 ||H||``.
    """
    if not getattr(h, "hermitian", False):
        raise ValueError("exact_diag needs an operator flagged hermitian")
    vals, vecs = scipy.linalg.eigh(h.mat)
    scale = max(np.linalg.norm(h.mat, 2), 1e-300)
    res = np.linalg.norm(h.mat @ vecs - vecs * vals, axis=0)
    if res.max(initial=0.0) > EIG_RESIDUAL * scale:
        raise FloatingPointError(f"eigenpair residual {res.max():.3e} exceeds tolerance")
    return vals, vecs


class WeightedSpectrum:
    """Eigendecomposition of ``H`` with ``<B>^-theta`` folded in, shared by scans.

    ``norm_of(d)`` evaluates ``|| <B>^-theta g(H) <B>^-theta ||`` for a
    function ``g`` given by its values ``d`` on the eigenvalues.
    """

    def __init__(self, h: FockOperator, theta: float, b: FockOperator | None = None):
        self.theta = theta
        self.vals, vecs = exact_diag(h)
        b = build_dilation_b(h.basis) if b is None else b
        w = weight_b_theta(b, theta).mat
        self.x = w @ vecs
        self.y = vecs.conj().T @ w
        self.hash = operator_hash(h)

    @property
    def dim(self) -> int:
        return self.vals.size

    def norm_of(self, d: np.ndarray, support: np.ndarray | None = None) -> float:
        x, y = self.x, self.y
        if support is not None:
            x, y, d = x[:, support], y[support], d[support]
            if d.size == 0:
                return 0.0
            # low rank: reduce to the triangular factors
            qx, rx = np.linalg.qr(x)
            qy, ry = np.linalg.qr(y.conj().T)
            return float(np.linalg.norm((rx * d) @ ry.conj().T, 2))
        if self.dim <= DENSE_NORM_DIM:
            return float(np.linalg.norm((x * d) @ y, 2))
        op = spla.LinearOperator(
            (self.dim, self.dim),
            matvec=lambda v: x @ (d * (y @ np.ravel(v))),
            rmatvec=lambda v: y.conj().T @ (d.conj() * (x.conj().T @ np.ravel(v))),
            dtype=complex,
        )
        return float(spla.svds(op, k=1, return_singular_vectors=False, tol=1e-12)[0])

    def resolvent(self, lam: float, eps: float) -> float:
        return self.norm_of(1.0 / (self.vals - lam - 1j * eps))

    def count_below(self, z: float) -> int:
        return int(np.searchsorted(self.vals, z))

    def eigenvalues_near(self, lam: float, width: int = 2) -> np.ndarray:
        j = self.count_below(lam)
        return self.vals[max(j - width, 0): j + width]


def weighted_resolvent(h: FockOperator, theta: float, lam: float, eps: float,
                       b: FockOperator | None = None) -> float:
    """``|| <B>^-theta (H - lam - i eps)^-1 <B>^-theta ||`` by a dense solve."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    b = build_dilation_b(h.basis) if b is None else b
    w = weight_b_theta(b, theta).mat
    a = h.mat - (lam + 1j * eps) * np.eye(h.basis.dim)
    try:
        x = np.linalg.solve(a, w)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("resolvent solve failed") from exc
    return float(np.linalg.norm(w @ x, 2))


# ---------------------------------------------------------------------------
# Hoelder fits

def holder_exponent(x, y, min_sep: float) -> float:
    """Least-squares slope of ``log|dy|`` against ``log|dx|`` over all pairs with ``|dx| >= min_sep``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    i, j = np.triu_indices(x.size, 1)
    dx, dy = np.abs(x[i] - x[j]), np.abs(y[i] - y[j])
    keep = (dx >= min_sep * (1 - 1e-12)) & (dy > 0)
    if keep.sum() < 2:
        return float("inf")
    slope = np.polyfit(np.log(dx[keep]), np.log(dy[keep]), 1)[0]
    return float(slope)


def holder_modulus(x, y, nu: float) -> float:
    """``max |y_i - y_j| / |x_i - x_j|^nu`` over distinct pairs."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    i, j = np.triu_indices(x.size, 1)
    dx = np.abs(x[i] - x[j])
    ok = dx > 0
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(y[i] - y[j])[ok] / dx[ok] ** nu))


# ---------------------------------------------------------------------------
# windows

@dataclass
class WindowSchedule(_Report):
    e_g: float
    rho: float
    rho0: float
    windows: np.ndarray

    @property
    def deltas(self) -> np.ndarray:
        return self.rho ** np.arange(len(self.windows)) / 18.0

    def coverage(self) -> tuple:
        return float(self.windows[-1, 0]), float(self.windows[0, 1])

    def covers(self, a: float, b: float) -> bool:
        lo, hi = self.coverage()
        return lo <= a and b <= hi

    def window(self, n: int) -> tuple:
        return float(self.windows[n, 0]), float(self.windows[n, 1])


def window_schedule(e_g: float, rho: float, rho0: float, n_max: int) -> WindowSchedule:
    """Windows ``[e_g + rho0 rho d_n / 2, e_g + rho0 d_n]`` with ``d_n = rho^n / 18``."""
    if not 0.0 < rho <= 0.5:
        raise ValueError("rho must lie in (0, 1/2]")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    d = rho ** np.arange(n_max + 1) / 18.0
    win = np.column_stack([e_g + rho0 * rho * d / 2.0, e_g + rho0 * d])
    # consecutive windows overlap: rho d_n / 2 < d_{n+1}
    if not np.all(win[:-1, 0] <= win[1:, 1]):
        raise AssertionError("window schedule leaves a gap")
    return WindowSchedule(e_g, rho, rho0, win)


# ---------------------------------------------------------------------------
# structured one-boson model

class OneBosonSpectrum:
    """Weighted resolvent of a Nelson model truncated at one boson, without dense algebra.

    With ``n_max = 1`` the Hamiltonian is a diagonal one-boson block
    coupled to the ``n_p`` vacuum states, so resolvents follow from an
    ``n_p x n_p`` Schur complement, and the spectral ``B`` is a circulant
    applied by FFT.  Cost per product is ``O(N log N)`` in the mode count.
    """

    def __init__(self, model, theta: float):
        c = model.config
        if c.n_max != 1:
            raise ValueError("OneBosonSpectrum needs n_max = 1")
        if not 0.0 < theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        self.theta = theta
        self.levels = np.asarray(c.levels, dtype=float)
        k = model.grid.k
        self.n_modes, self.n_p = k.size, self.levels.size
        # v[p, i, q] = <p, k_i | H | q, vac>
        amp = c.g * model.grid.measure * model.kappa
        self.v = np.transpose(amp[:, None, None] * model.coupling, (1, 0, 2))
        self.poles = self.levels[:, None] + k[None, :]
        self._sorted_poles = np.sort(self.poles.ravel())
        p = spectral_symbol(self.n_modes, model.grid.log_step)
        self.wsym = (1.0 + p**2) ** (-theta / 2)
        key = repr((c.levels, c.g, c.mu, c.sigma, c.n_modes, theta)).encode()
        self.hash = hashlib.sha256(key).hexdigest()[:16]

    @property
    def dim(self) -> int:
        return self.n_p * (self.n_modes + 1)

    # vectors are (n_p, N + 1): column 0 is the vacuum, columns 1.. the boson modes
    def _weight(self, x: np.ndarray) -> np.ndarray:
        out = x.copy()
        out[:, 1:] = np.fft.ifft(self.wsym * np.fft.fft(x[:, 1:], axis=1), axis=1)
        return out

    def _schur(self, z: complex) -> np.ndarray:
        g = 1.0 / (self.poles - z)
        s = np.diag(self.levels - z).astype(complex)
        return s - np.einsum("piq,pi,pir->qr", self.v.conj(), g, self.v)

    def _solve(self, z: complex, y: np.ndarray, s_inv: np.ndarray) -> np.ndarray:
        g = 1.0 / (self.poles - z)
        yb = y[:, 1:]
        rhs = y[:, 0] - np.einsum("piq,pi->q", self.v.conj(), g * yb)
        xv = s_inv @ rhs
        out = np.empty_like(y)
        out[:, 0] = xv
        out[:, 1:] = g * (yb - np.einsum("piq,q->pi", self.v, xv))
        return out

    def resolvent(self, lam: float, eps: float) -> float:
        """``|| <B>^-theta (H - lam - i eps)^-1 <B>^-theta ||`` by Lanczos on the normal operator."""
        shape = (self.n_p, self.n_modes + 1)
        z = lam + 1j * eps
        si, sic = np.linalg.inv(self._schur(z)), np.linalg.inv(self._schur(np.conj(z)))

        def mv(v):
            x = self._weight(np.reshape(v, shape).astype(complex))
            return self._weight(self._solve(z, x, si)).ravel()

        def rmv(v):
            x = self._weight(np.reshape(v, shape).astype(complex))
            return self._weight(self._solve(np.conj(z), x, sic)).ravel()

        op = spla.LinearOperator((self.dim, self.dim), matvec=mv, rmatvec=rmv, dtype=complex)
        return float(spla.svds(op, k=1, return_singular_vectors=False, tol=1e-10)[0])

    def count_below(self, z: float) -> int:
        """Number of eigenvalues below ``z`` (inertia of the Schur complement)."""
        n_poles = int(np.searchsorted(self._sorted_poles, z))
        s = self._schur(z)
        return n_poles + int(np.sum(np.linalg.eigvalsh(0.5 * (s + s.conj().T)) < 0))

    def eigenvalue(self, j: int, lo: float, hi: float, tol: float = 1e-15) -> float:
        """``j``-th eigenvalue (0-based) by bisection on the counting function inside ``[lo, hi]``."""
        for _ in range(200):
            if hi - lo <= tol * max(1.0, abs(lo)):
                break
            mid = 0.5 * (lo + hi)
            if self.count_below(mid) > j:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    def ground_energy(self) -> float:
        """Lowest eigenvalue; it lies within ``||V||`` below the lowest level."""
        vnorm = float(np.linalg.norm(self.v))
        return self.eigenvalue(0, self.levels[0] - vnorm - 1.0, self.levels[0])

    def eigenvalues_near(self, lam: float, width: int = 2) -> np.ndarray:
        j = self.count_below(lam)
        span = 4.0 * max(np.diff(self._sorted_poles).max(initial=1.0), 1e-12)
        out = []
        for jj in range(max(j - width, 0), j + width):
            lo, hi = lam - span, lam + span
            while self.count_below(lo) > jj:
                lo -= span
            while self.count_below(hi) <= jj:
                hi += span
            out.append(self.eigenvalue(jj, lo, hi))
        return np.array(out)


def local_spacing(spectrum, lam: float) -> float:
    """Largest of the level gaps adjacent to ``lam`` (two on each side)."""
    near = spectrum.eigenvalues_near(lam, 2)
    if near.size < 2:
        raise ValueError("fewer than two eigenvalues near lambda")
    return float(np.diff(near).max())


# ---------------------------------------------------------------------------
# LAP scans

@dataclass
class LapReport(_Report):
    theta: float
    window: tuple
    factors: list
    sup: list
    growth: float
    holder: float
    nu_target: float
    eps_floor_range: tuple
    table: ScanTable = field(repr=False)

    def passed(self, growth_tol: float = 0.10, nu_offset: float = 0.55) -> bool:
        return self.growth <= 1.0 + growth_tol and self.holder >= self.theta - nu_offset


def lap_scan(h, theta: float, window, eps_floor=None, n_lambda: int = 48, eps_factors=(8, 4, 2, 1),
             b: FockOperator | None = None) -> LapReport:
    """Weighted resolvent on a lambda grid at ``eps = f * eps_floor``.

    Parameters
    ----------
    h : FockOperator or spectrum
        A hermitian operator (dense route) or a prepared spectrum object
        such as :class:`WeightedSpectrum` or :class:`OneBosonSpectrum`.
    eps_floor : float or None
        ``None`` uses twice the local level spacing at every ``lambda``; a
        number is checked against that bound over the whole grid.

    ``growth`` is the largest ratio of ``sup_lambda`` at a smaller ``eps``
    to the one at the largest.  The Hoelder exponent is fitted at the floor
    over pairs at least two grid steps apart.
    """
    if theta <= 0.5 or theta > 1.0:
        raise ValueError("theta must lie in (1/2, 1]")
    spec = WeightedSpectrum(h, theta, b) if isinstance(h, FockOperator) else h
    if spec.theta != theta:
        raise ValueError("spectrum was built for another theta")
    lams = np.linspace(window[0], window[1], n_lambda)
    floor = np.array([2.0 * local_spacing(spec, l) for l in lams])
    if eps_floor is not None:
        if eps_floor < floor.max() * (1 - 1e-12):
            raise ValueError(f"eps_floor {eps_floor:.3e} below twice the level spacing {floor.max() / 2:.3e}")
        floor = np.full_like(floor, eps_floor)
    factors = sorted(eps_factors, reverse=True)
    rows, sups, floor_vals = [], [], None
    for f in factors:
        eps = f * floor
        vals = np.array([spec.resolvent(l, e) for l, e in zip(lams, eps)])
        if np.any(vals * eps > 1 + 1e-9):
            raise FloatingPointError("weighted resolvent exceeds 1/eps")
        rows += [(l, f, e, v) for l, e, v in zip(lams, eps, vals)]
        sups.append(float(vals.max()))
        floor_vals = vals
    step = lams[1] - lams[0] if n_lambda > 1 else 1.0
    hold = holder_exponent(lams, floor_vals, 2 * step)
    growth = max(sups) / sups[0]
    meta = {"theta": theta, "window": [float(w) for w in window], "model_hash": spec.hash}
    table = ScanTable(("lambda", "factor", "eps", "value"), np.array(rows), meta)
    return LapReport(theta, tuple(map(float, window)), [float(f) for f in factors], sups, float(growth),
                     hold, theta - 0.5, (float(floor.min()), float(floor.max())), table)


# ---------------------------------------------------------------------------
# local decay

def bump(x, a: float, b: float) -> np.ndarray:
    """Smooth bump supported on ``(a, b)`` with maximum 1 at the midpoint."""
    x = np.asarray(x, dtype=float)
    u = (2.0 * x - a - b) / (b - a)
    out = np.zeros_like(x)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass
class DecayReport(_Report):
    theta: float
    support: tuple
    n_levels: int
    t_rec: float
    value0: float
    ratio: float
    monotone_fraction: float
    nu_fit: float
    caveat: str
    table: ScanTable = field(repr=False)

    def passed(self, ratio_tol: float = 0.5, monotone: float = 0.8, min_levels: int = 5) -> bool:
        return self.n_levels >= min_levels and self.ratio <= ratio_tol and self.monotone_fraction >= monotone


def decay_scan(h: FockOperator, theta: float, support, times=None, n_times: int = 64,
               b: FockOperator | None = None, spectrum: WeightedSpectrum | None = None,
               sharpness: float = 4.0) -> DecayReport:
    """``|| <B>^-theta e^{-iHt} f(H) <B>^-theta ||`` for a smooth bump ``f`` on ``support``.

    ``f`` is the standard bump raised to ``sharpness``; a higher power
    concentrates the weights so their Fourier transform is monotone.

    Default times are ``n_times`` points on ``[0, T_rec / 2]`` with
    ``T_rec = 2 pi / (min level spacing inside the support)``.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    spec = WeightedSpectrum(h, theta, b) if spectrum is None else spectrum
    a, bb = support
    if sharpness <= 0:
        raise ValueError("sharpness must be positive")
    f = bump(spec.vals, a, bb) ** sharpness
    sel = np.flatnonzero(f > 0)
    if sel.size == 0:
        raise ValueError("f has no eigenvalue in its support")
    lv = spec.vals[sel]
    t_rec = 2 * np.pi / np.diff(lv).min() if lv.size > 1 else math.inf
    if times is None:
        t_end = t_rec / 2 if np.isfinite(t_rec) else 20 * np.pi / (bb - a)
        times = np.linspace(0.0, t_end, n_times)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    vals = np.array([spec.norm_of(f * np.exp(-1j * spec.vals * t), sel) for t in times])
    value0 = spec.norm_of(f.astype(complex), sel)
    dec = np.diff(vals) <= 1e-12 * value0
    mono = float(dec.mean()) if dec.size else 1.0
    pos = (times > 0) & (vals > 0)
    nu = float(-np.polyfit(np.log(times[pos]), np.log(vals[pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    meta = {"theta": theta, "support": [a, bb], "sharpness": sharpness, "t_rec": t_rec, "nu_fit": nu, "model_hash": spec.hash}
    table = ScanTable(("t", "value"), np.column_stack([times, vals]), meta)
    caveat = "discrete spectrum: quasi-periodic, no asymptotic power law beyond T_rec/2"
    return DecayReport(theta, (float(a), float(bb)), int(sel.size), float(t_rec), float(value0),
                       float(vals[-1] / value0), mono, nu, caveat, table)


# ---------------------------------------------------------------------------
# Mourre estimate

@dataclass
class MourreReport(_Report):
    delta: float
    margin: float
    free_margin: float
    defect: float
    w_tilde_bound: float
    w_norm: float
    n_range: int
    route: str

    def passed(self, tol: float = 0.05) -> bool:
        return self.margin >= -tol * self.delta


def mourre_check(h1: FockOperator, b: FockOperator, delta: float,
                 t_diag: np.ndarray | None = None, t_tilde: np.ndarray | None = None) -> MourreReport:
    """Lowest eigenvalue of ``E i[H1, B] E - (delta/4) E^2`` on ``Ran E``, ``E = E_(delta/2, inf)(H1)``.

    With ``t_diag`` and ``t_tilde`` (diagonal ``T(H_f)`` and ``T'(H_f) H_f``
    on the basis) the commutator is ``T~ + i[W, B]`` with ``W = H1 - T``,
    so the free part uses the exact dilation relation instead of a
    finite-difference commutator.  ``defect`` is the loss caused by ``W``
    relative to the same projection with ``W~`` dropped.
    """
    if not h1.hermitian:
        raise ValueError("H1 must be hermitian")
    if delta <= 0:
        raise ValueError("delta must be positive")
    hm, bm = h1.mat, b.mat
    if t_diag is None:
        comm = 1j * (hm @ bm - bm @ hm)
        tt = np.zeros(hm.shape[0])
        w = hm
        route = "matrix"
    else:
        tt = np.asarray(t_tilde, dtype=float)
        w = hm - np.diag(np.asarray(t_diag, dtype=float))
        comm = np.diag(tt) + 1j * (w @ bm - bm @ w)
        route = "kernel"
    comm = 0.5 * (comm + comm.conj().T)
    vals, vecs = scipy.linalg.eigh(hm)
    p = vecs[:, vals > delta / 2]
    if p.shape[1] == 0:
        return MourreReport(delta, math.inf, math.inf, 0.0, float("nan"), float("nan"), 0, route)
    eye = np.eye(p.shape[1])
    m = p.conj().T @ comm @ p - delta / 4 * eye
    margin = float(scipy.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
    m0 = (p.conj().T * tt) @ p - delta / 4 * eye
    free = float(scipy.linalg.eigvalsh(0.5 * (m0 + m0.conj().T))[0])
    if route == "kernel":
        wt = 1j * (w @ bm - bm @ w)
        wb, wn = float(np.linalg.norm(wt - w / 2, 2)), float(np.linalg.norm(w, 2))
    else:
        wb = wn = float("nan")
    return MourreReport(float(delta), margin, free, free - margin, wb, wn, int(p.shape[1]), route)


def free_part(family: KernelFamily, basis: TruncatedFockBasis):
    """``(E, T, T~)``: ``w00(0)`` and ``T(H_f)``, ``T'(H_f) H_f`` on the basis energies."""
    pts = family.rgrid.points
    w00 = family.w00.real
    e = basis.full_energies()
    e0 = float(w00[0])
    t = interp_r(pts, w00, e) - e0
    tt = interp_r(pts, np.gradient(w00, pts), e) * e
    return e0, t, tt


def mourre_family(family: KernelFamily, basis: TruncatedFockBasis, delta: float,
                  b: FockOperator | None = None) -> MourreReport:
    """Mourre check for ``H1 = H(w) - w00(0)`` of a kernel family."""
    h = assemble_hamiltonian(family, basis).mat
    if np.abs(h - h.conj().T).max() > 1e-10 * max(1.0, np.abs(h).max()):
        raise ValueError("family does not assemble to a self-adjoint operator")
    e0, t, tt = free_part(family, basis)
    h1 = FockOperator(basis, 0.5 * (h + h.conj().T) - e0 * np.eye(basis.dim), hermitian=True)
    b = build_dilation_b(basis) if b is None else b
    return mourre_check(h1, b, delta, t, tt)


def rg_image_families(model, lam: float, n_steps: int, rho0: float = 1.0, rho: float = 0.5):
    """Families ``H^(n)(lam)`` for ``n = 1..n_steps`` with the constant ``E_n`` kept."""
    from .rg import rg_step

    basis = model.photon_basis()
    fam = model.initial_family(lam, rho0)
    out = []
    for _ in range(n_steps):
        nxt, e_shift = rg_step(fam, rho, basis)
        fam = nxt.replace(nxt.w00 + e_shift)
        out.append(fam)
    return out


@dataclass
class MourreScan(_Report):
    steps: list
    lambdas: list
    gammas: list
    reports: list
    e_consts: list = field(default_factory=list)  # E_n(lam) = w00[r = 0]
    rho: float = 0.5

    @property
    def e_ratios(self) -> np.ndarray:
        """``|E_n(lam)| / rho``, to compare with the lower bound ``1/50``."""
        return np.abs(np.asarray(self.e_consts)) / self.rho

    @property
    def margins(self) -> np.ndarray:
        return np.array([r.margin for r in self.reports])

    @property
    def defects(self) -> np.ndarray:
        return np.array([r.defect for r in self.reports])

    def passed(self, tol: float = 0.05) -> bool:
        ok = all(r.passed(tol) for r in self.reports)
        d = self.defects
        return ok and bool(np.all(np.diff(d) <= 1e-15))

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["reports"] = [r.to_dict() for r in self.reports]
        return d


def mourre_rg_scan(model, e_g: float, steps=(1, 2, 3, 4), delta: float = 0.1,
                   rho0: float = 1.0, rho: float = 0.5) -> MourreScan:
    """Mourre check on the RG image at each step, ``lambda`` at the centre of window ``n``."""
    from .rg import polydisc_membership

    sched = window_schedule(e_g, rho, rho0, max(steps))
    basis = model.photon_basis()
    b = build_dilation_b(basis)
    reps, lams, gams, consts = [], [], [], []
    for n in steps:
        lam = float(np.mean(sched.window(n)))
        fam = rg_image_families(model, lam, n, rho0, rho)[-1]
        reps.append(mourre_family(fam, basis, delta, b))
        lams.append(lam)
        gams.append(polydisc_membership(fam).gamma)
        consts.append(float(fam.w00[0].real))
    return MourreScan(list(steps), lams, gams, reps, consts, rho)


# ---------------------------------------------------------------------------
# LAP transfer through the Feshbach map

@dataclass
class LapTransferCheck(_Report):
    lambdas: np.ndarray
    eps: float
    full: np.ndarray
    reduced: np.ndarray
    nu: float
    modulus_full: float
    modulus_reduced: float
    ratio: float
    exponent_full: float
    exponent_reduced: float

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.full)) and np.all(np.isfinite(self.reduced)))


def lap_transfer_check(h_of_lambda, lambdas, part: Partition, theta: float, b: FockOperator,
                       eps: float, h0_of_lambda=None, nu: float | None = None,
                       floor: float = MARGIN_FLOOR) -> LapTransferCheck:
    """Hoelder moduli of the weighted resolvents of ``H(lam) - i eps`` and of its Feshbach image.

    ``h_of_lambda`` returns the matrix of ``H(lam)``; the spectral point is 0.
    The reduced resolvent is ``F^-1`` on ``Ran chi``, embedded by zeros.
    """
    lam = np.asarray(lambdas, dtype=float)
    nu = theta - 0.55 if nu is None else nu
    w = weight_b_theta(b, theta).mat
    idx = part.range_chi
    full, red = np.empty(lam.size), np.empty(lam.size)
    for i, l in enumerate(lam):
        h = _mat(h_of_lambda(l))
        n = h.shape[0]
        hz = h - 1j * eps * np.eye(n)
        h0 = None if h0_of_lambda is None else _mat(h0_of_lambda(l)) - 1j * eps * np.eye(n)
        full[i] = np.linalg.norm(w @ np.linalg.solve(hz, w), 2)
        fr = feshbach_map(hz, part, h0, floor)
        finv = np.zeros((n, n), dtype=complex)
        finv[np.ix_(idx, idx)] = np.linalg.inv(fr.F[np.ix_(idx, idx)])
        red[i] = np.linalg.norm(w @ finv @ w, 2)
    step = lam[1] - lam[0] if lam.size > 1 else 1.0
    mf, mr = holder_modulus(lam, full, nu), holder_modulus(lam, red, nu)
    ratio = mf / mr if mr > 0 else (1.0 if mf == 0 else math.inf)
    return LapTransferCheck(lam, float(eps), full, red, float(nu), mf, mr, float(ratio),
                            holder_exponent(lam, full, 2 * step), holder_exponent(lam, red, 2 * step))


# ---------------------------------------------------------------------------
# quasi-continuum model

def continuum_config(base, sigma: float = 0.97, k_min: float = 1e-3, n_max: int = 1):
    """Copy of a Nelson config on a fine log grid reaching down to ``k_min``.

    A ratio close to 1 makes the one-boson levels dense enough that a
    resolvent at a few level spacings sees a quasi-continuum.  The mode
    count is made odd so the spectral dilation has no Nyquist mode.
    """
    n_modes = int(math.ceil(math.log(k_min) / math.log(sigma))) + 1
    n_modes += 1 - n_modes % 2
    return replace(base, sigma=sigma, n_modes=n_modes, n_max=n_max, kappa=None, coupling=None,
                   decimation_extra=0, max_dim=max(base.max_dim, 2 * (n_modes + 1) * len(base.levels)))
