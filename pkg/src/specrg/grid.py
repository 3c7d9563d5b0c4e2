"""Geometric momentum and field-energy grids.

Both grids share the ratio ``sigma`` so that rescaling by ``rho = sigma**p``
is an exact index shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def grid_power(rho: float, sigma: float, tol: float = 1e-12) -> int:
    """Return ``p`` with ``rho == sigma**p``; raise ``ValueError`` otherwise."""
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"scale {rho!r} must lie in (0, 1]")
    p = int(round(np.log(rho) / np.log(sigma)))
    if p < 0 or abs(sigma**p - rho) > tol * max(rho, 1e-300):
        raise ValueError(f"rho must be sigma^p (rho={rho!r}, sigma={sigma!r})")
    return p


@dataclass(frozen=True)
class MomentumGrid:
    """Momenta ``k_i = sigma**(n_modes - i)``, i = 1..n_modes, so ``k_max = 1``.

    Quadrature weights follow the midpoint rule in ``log k``:
    ``w_i = k_i log(1/sigma)``.  Every cell is the same in log scale, so the
    weights are covariant under ``k -> sigma k`` (the RG rescaling is then an
    exact relabelling).  The sum approaches 1 as ``sigma -> 1``.
    """

    sigma: float
    n_modes: int
    k: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ValueError("sigma must lie in (0, 1)")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        k = self.sigma ** np.arange(self.n_modes - 1, -1, -1, dtype=float)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "weights", k * -np.log(self.sigma))
        self.k.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def dimension(self) -> int:
        return 1

    @property
    def log_step(self) -> float:
        return -np.log(self.sigma)

    @property
    def measure(self) -> np.ndarray:
        """Per-mode factor standing in for ``dk / |k|^{1/2}`` of one boson.

        The boson is the s-wave of a three-dimensional field, so the radial
        measure ``k^2 dk / k^{1/2}`` together with ``a(k) ~ A_i / (k sqrt(w_i))``
        leaves ``sqrt(w_i k_i)``.  This makes ``rho^-1 S_rho`` act on kernels
        as ``rho^(m+n-1) w(rho r, rho k)``.
        """
        return np.sqrt(self.weights * self.k)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "n_modes": self.n_modes}


@dataclass(frozen=True)
class RGrid:
    """Field-energy grid ``{0} U {sigma**m}`` covering ``[0, 1.2]``.

    The smallest positive point sits ``pad`` steps below the smallest
    momentum; the largest is the first power of ``1/sigma`` reaching 1.2.
    """

    sigma: float
    n_modes: int
    pad: int = 2
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        top = int(np.ceil(np.log(1.2) / -np.log(self.sigma) - 1e-12))
        exps = np.arange(self.n_modes - 1 + self.pad, -top - 1, -1)
        pts = np.concatenate(([0.0], self.sigma ** exps.astype(float)))
        object.__setattr__(self, "points", pts)
        self.points.setflags(write=False)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def n_top(self) -> int:
        """Number of grid points strictly above 1."""
        return int(np.sum(self.points > 1.0 + 1e-12))

    def index_of(self, r: float) -> int:
        i = int(np.argmin(np.abs(self.points - r)))
        if abs(self.points[i] - r) > 1e-12 * max(1.0, r):
            raise KeyError(r)
        return i

    @property
    def unit_mask(self) -> np.ndarray:
        """Points in ``I = [0, 1]``."""
        return self.points <= 1.0 + 1e-12

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "n_modes": self.n_modes, "pad": self.pad}
