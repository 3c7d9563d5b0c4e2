"""Smooth Feshbach-Schur map for operators that are diagonal-split.

Everything works on dense matrices in a basis where the partition
``chi, chibar`` is diagonal.  ``tau(H)`` must be diagonal in that basis too
(the free part ``w00(H_f)``, or the plain diagonal of ``H``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .fock import FockOperator, TruncatedFockBasis
from .kernels import chi_rho

RANGE_TOL = 1e-14
MARGIN_FLOOR = 1e-8
KERNEL_TOL = 1e-8


class NotInvertible(ArithmeticError):
    """``H_{tau, chibar}`` is (numerically) singular on ``Ran chibar``."""

    def __init__(self, margin: float, floor: float):
        super().__init__(f"invertibility margin {margin:.3e} <= floor {floor:.1e}")
        self.margin = margin
        self.floor = floor


@dataclass(frozen=True)
class Partition:
    """Diagonal smooth partition of unity ``chi^2 + chibar^2 = 1``."""

    rho: float
    chi: np.ndarray
    chibar: np.ndarray

    @classmethod
    def from_energies(cls, energies, rho: float, hard: bool = False) -> "Partition":
        e = np.asarray(energies, dtype=float)
        if hard:
            chi = (e <= rho).astype(float)
        else:
            chi = chi_rho(e, rho)
        return cls(rho, chi, np.sqrt(np.clip(1.0 - chi**2, 0.0, 1.0)))

    @classmethod
    def from_basis(cls, basis: TruncatedFockBasis, rho: float, hard: bool = False) -> "Partition":
        return cls.from_energies(basis.full_energies(), rho, hard)

    @property
    def range_chi(self) -> np.ndarray:
        return np.flatnonzero(self.chi > RANGE_TOL)

    @property
    def range_chibar(self) -> np.ndarray:
        return np.flatnonzero(self.chibar > RANGE_TOL)

    def unity_defect(self) -> float:
        return float(np.abs(self.chi**2 + self.chibar**2 - 1.0).max())


def _mat(x) -> np.ndarray:
    return x.mat if isinstance(x, FockOperator) else np.asarray(x)


def _restricted_inverse(m: np.ndarray, idx: np.ndarray):
    """Inverse of ``m[idx, idx]`` embedded in the full space, and its smallest singular value."""
    n = m.shape[0]
    out = np.zeros((n, n), dtype=complex)
    if idx.size == 0:
        return out, np.inf
    sub = m[np.ix_(idx, idx)]
    svals = np.linalg.svd(sub, compute_uv=False)
    margin = float(svals[-1])
    if margin > 0.0:
        out[np.ix_(idx, idx)] = np.linalg.inv(sub)
    return out, margin


@dataclass(frozen=True, eq=False)
class FeshbachResult:
    F: np.ndarray
    Q: np.ndarray
    Q_sharp: np.ndarray
    rbar: np.ndarray
    h0: np.ndarray
    w: np.ndarray
    partition: Partition
    margin: float
    inverse_norm: float
    basis: TruncatedFockBasis | None = field(default=None, repr=False)

    def restricted_F(self) -> np.ndarray:
        """``F`` as a matrix on ``Ran chi`` (its block on the chi-support)."""
        idx = self.partition.range_chi
        return self.F[np.ix_(idx, idx)]

    def F_operator(self) -> FockOperator:
        if self.basis is None:
            raise ValueError("result was computed from a bare matrix")
        return FockOperator(self.basis, self.F)


def feshbach_map(h, part: Partition, h0=None, floor: float = MARGIN_FLOOR) -> FeshbachResult:
    """``F = H0 + chi W chi - chi W chibar H_{tau,chibar}^{-1} chibar W chi``.

    Parameters
    ----------
    h : FockOperator or ndarray
    part : Partition
    h0 : optional
        ``tau(H)``; defaults to the diagonal of ``h``.  Must be diagonal.
    floor : float
        Smallest admissible singular value of ``H_{tau,chibar}`` on ``Ran chibar``.
    """
    H = _mat(h).astype(complex)
    basis = h.basis if isinstance(h, FockOperator) else None
    if H.shape[0] != part.chi.size:
        raise ValueError("partition size does not match operator")
    if h0 is None:
        H0 = np.diag(np.diag(H))
    else:
        H0 = _mat(h0).astype(complex)
        if np.abs(H0 - np.diag(np.diag(H0))).max(initial=0.0) > 0:
            raise ValueError("tau(H) must be diagonal so that it commutes with the partition")
    W = H - H0
    chi, cb = part.chi, part.chibar
    hbar = H0 + cb[:, None] * W * cb[None, :]
    rbar, margin = _restricted_inverse(hbar, part.range_chibar)
    if margin <= floor:
        raise NotInvertible(margin, floor)
    cwc = chi[:, None] * W * chi[None, :]
    cwcb = chi[:, None] * W * cb[None, :]
    cbwc = cb[:, None] * W * chi[None, :]
    F = H0 + cwc - cwcb @ rbar @ cbwc
    Q = np.diag(chi) - (cb[:, None] * rbar) @ cbwc
    Qs = np.diag(chi) - cwcb @ (rbar * cb[None, :])
    inv_norm = float(np.linalg.norm(rbar, 2)) if rbar.any() else 0.0
    return FeshbachResult(F, Q, Qs, rbar, H0, W, part, margin, inv_norm, basis)


def resolvent_reconstruct(fr: FeshbachResult, floor: float = MARGIN_FLOOR) -> np.ndarray:
    """``Q F^{-1} Q# + chibar H_{tau,chibar}^{-1} chibar`` with ``F^{-1}`` taken on ``Ran chi``."""
    finv, margin = _restricted_inverse(fr.F, fr.partition.range_chi)
    if margin <= floor:
        raise NotInvertible(margin, floor)
    cb = fr.partition.chibar
    return fr.Q @ finv @ fr.Q_sharp + cb[:, None] * fr.rbar * cb[None, :]


def _null_space(m: np.ndarray, tol: float):
    u, s, vh = np.linalg.svd(m)
    k = int(np.sum(s < tol))
    return vh[m.shape[1] - k:].conj().T if k else np.zeros((m.shape[1], 0), dtype=complex), s


@dataclass
class IsospectralityReport:
    margin_H: float
    margin_F: float
    invertible_H: bool
    invertible_F: bool
    dim_ker_H: int
    dim_ker_F: int
    res_ii: float = 0.0
    res_iii: float = 0.0
    res_resolvent: float = float("nan")
    res_inverse_F: float = float("nan")
    seed: int | None = None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def isospectrality_suite(h, part: Partition, h0=None, tol: float = 1e-8, kernel_tol: float = KERNEL_TOL,
                         seed: int | None = None) -> IsospectralityReport:
    """Check items (i)-(v) of the isospectrality theorem on one instance.

    The second inverse identity uses ``T = tau(H)``: on the full space ``F``
    equals ``tau(H)`` off ``Ran chi``, so ``F^{-1} = chi H^{-1} chi + chibar
    tau(H)^{-1} chibar``.
    """
    fr = feshbach_map(h, part, h0)
    H = _mat(h).astype(complex)
    n = H.shape[0]
    idx = part.range_chi
    Fr = fr.restricted_F()
    kerH, sH = _null_space(H, kernel_tol)
    kerF, sF = _null_space(Fr, kernel_tol)
    rep = IsospectralityReport(
        margin_H=float(sH[-1]),
        margin_F=float(sF[-1]) if sF.size else np.inf,
        invertible_H=bool(sH[-1] >= kernel_tol),
        invertible_F=bool(sF.size == 0 or sF[-1] >= kernel_tol),
        dim_ker_H=kerH.shape[1],
        dim_ker_F=kerF.shape[1],
        seed=seed,
    )
    if rep.invertible_H != rep.invertible_F:
        rep.failures.append("(i) invertibility differs")
    if rep.dim_ker_H != rep.dim_ker_F:
        rep.failures.append("(iv) kernel dimensions differ")
    for j in range(kerH.shape[1]):
        phi = part.chi * kerH[:, j]
        nrm = np.linalg.norm(phi)
        if nrm == 0:
            rep.failures.append("(ii) chi psi vanishes")
            continue
        rep.res_ii = max(rep.res_ii, float(np.linalg.norm(fr.F @ phi) / nrm))
    for j in range(kerF.shape[1]):
        phi = np.zeros(n, dtype=complex)
        phi[idx] = kerF[:, j]
        psi = fr.Q @ phi
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            rep.failures.append("(iii) Q phi vanishes")
            continue
        rep.res_iii = max(rep.res_iii, float(np.linalg.norm(H @ psi) / nrm))
    if rep.res_ii > tol:
        rep.failures.append(f"(ii) residual {rep.res_ii:.2e}")
    if rep.res_iii > tol:
        rep.failures.append(f"(iii) residual {rep.res_iii:.2e}")
    if rep.invertible_H and rep.invertible_F:
        hinv = np.linalg.inv(H)
        rec = resolvent_reconstruct(fr)
        rep.res_resolvent = float(np.linalg.norm(rec @ H - np.eye(n), 2))
        h0d = np.diag(fr.h0)
        if np.all(np.abs(h0d[part.range_chibar]) > 0):
            t_inv = np.zeros(n, dtype=complex)
            t_inv[part.range_chibar] = 1.0 / h0d[part.range_chibar]
            finv_pred = part.chi[:, None] * hinv * part.chi[None, :] + np.diag(part.chibar**2 * t_inv)
            finv = np.zeros((n, n), dtype=complex)
            finv[np.ix_(idx, idx)] = np.linalg.inv(Fr)
            # off Ran chi the full-space F is tau(H); include that block
            off = np.setdiff1d(np.arange(n), idx)
            finv[off, off] = 1.0 / h0d[off]
            rep.res_inverse_F = float(np.linalg.norm(finv - finv_pred, 2) / max(1.0, np.linalg.norm(finv, 2)))
            if rep.res_inverse_F > tol:
                rep.failures.append(f"(v) F inverse identity residual {rep.res_inverse_F:.2e}")
        if rep.res_resolvent > tol:
            rep.failures.append(f"(v) resolvent identity residual {rep.res_resolvent:.2e}")
    return rep


def random_instance(rng: np.random.Generator, dim: int, kernel_dim: int = 0, rho: float = 1.0,
                    coupling: float = 0.1):
    """Random non-normal ``H = S D S^-1`` with a prescribed kernel and a partition.

    Diagonal entries of ``D`` are spread over ``[0, 2 rho]``; the first
    ``kernel_dim`` of them are zero and sit deep in ``Ran chi``.
    """
    e = np.sort(rng.uniform(0.0, 2.0 * rho, size=dim))
    e[:kernel_dim] = 0.0
    d = e.astype(complex)
    d[kernel_dim:] += 0.05 * rng.normal(size=dim - kernel_dim) * 1j
    s = np.eye(dim) + coupling * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(dim)
    h = s @ np.diag(d) @ np.linalg.inv(s)
    energies = e.copy()
    energies[:kernel_dim] = 0.0
    return h, Partition.from_energies(energies, rho)


def random_suite(instances: int, seed: int, max_dim: int = 100, tol: float = 1e-8) -> list:
    """Reports for ``instances`` random cases with dimensions in ``[10, max_dim]``.

    Kernel dimensions cycle through 0, 1 and 2 so both the invertible and
    the singular branches of the theorem are exercised.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(instances):
        h, part = random_instance(rng, int(rng.integers(10, max_dim + 1)), i % 3)
        out.append(isospectrality_suite(h, part, tol=tol, seed=i))
    return out


@dataclass
class LapTransferReport:
    lambdas: np.ndarray
    norms: dict

    def finite(self) -> bool:
        return all(np.all(np.isfinite(v[~np.isnan(v)])) for v in self.norms.values())

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "norms": {k: np.asarray(v).tolist() for k, v in self.norms.items()}}


def lap_transfer_conditions(h_of_lambda, lambdas, part: Partition, b, h0_of_lambda=None,
                            floor: float = MARGIN_FLOOR) -> LapTransferReport:
    """Norms of ``[B, A]`` for the operators entering the resolvent-regularity transfer.

    ``A`` runs over ``chi, chibar, chi W, W chi`` and
    ``d^k/dlambda^k (chibar H_{tau,chibar}^{-1} chibar)`` for k = 0, 1, 2
    (central differences on the given, uniformly spaced lambda grid).
    """
    lam = np.asarray(lambdas, dtype=float)
    B = _mat(b)

    def ad(x):
        return float(np.linalg.norm(B @ x - x @ B, 2))

    blocks = []
    for l in lam:
        h = h_of_lambda(l)
        h0 = h0_of_lambda(l) if h0_of_lambda is not None else None
        fr = feshbach_map(h, part, h0, floor)
        cb = part.chibar
        blocks.append((fr.w, cb[:, None] * fr.rbar * cb[None, :]))
    norms = {k: np.full(lam.size, np.nan) for k in ("chi", "chibar", "chiW", "Wchi", "d0", "d1", "d2")}
    ac, acb = ad(np.diag(part.chi).astype(complex)), ad(np.diag(part.chibar).astype(complex))
    step = lam[1] - lam[0] if lam.size > 1 else 1.0
    for i, (w, rb) in enumerate(blocks):
        norms["chi"][i] = ac
        norms["chibar"][i] = acb
        norms["chiW"][i] = ad(part.chi[:, None] * w)
        norms["Wchi"][i] = ad(w * part.chi[None, :])
        norms["d0"][i] = ad(rb)
        if 0 < i < lam.size - 1:
            norms["d1"][i] = ad((blocks[i + 1][1] - blocks[i - 1][1]) / (2 * step))
            norms["d2"][i] = ad((blocks[i + 1][1] - 2 * rb + blocks[i - 1][1]) / step**2)
    return LapTransferReport(lam, norms)
