"""Nelson-type toy model: finite particle levels linearly coupled to scalar bosons."""
from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .feshbach import Partition, feshbach_map
from .fock import FockOperator, TruncatedFockBasis, build_basis, ladder_op
from .grid import MomentumGrid, RGrid
from .kernels import KernelFamily, assemble_hamiltonian, chi_rho, extract_kernels
from .rg import polydisc_membership, scale_kernels


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def default_coupling(k: np.ndarray, n_p: int) -> np.ndarray:
    """``G(k)`` with unit diagonal and ``1/(1+k)`` off the diagonal."""
    c = 1.0 / (1.0 + np.asarray(k))
    g = np.empty((len(c), n_p, n_p))
    g[:] = c[:, None, None]
    i = np.arange(n_p)
    g[:, i, i] = 1.0
    return g


def kappa_norm(grid: MomentumGrid, kappa: np.ndarray, mu: float) -> float:
    """Grid version of ``(int dk k^(-1-2 mu) kappa^2)^(1/2)`` (radial part of the 3-d norm)."""
    return float(np.sqrt(np.sum(grid.weights * grid.k ** (-1.0 - 2.0 * mu) * np.abs(kappa) ** 2)))


@dataclass(frozen=True)
class NelsonConfig:
    levels: tuple = (0.0, 1.0)
    g: float = 0.02
    mu: float = 0.5
    sigma: float = 0.5
    n_modes: int = 8
    n_max: int = 2
    e_max: float = 2.0
    kappa: np.ndarray | None = field(default=None, compare=False, repr=False)
    coupling: np.ndarray | None = field(default=None, compare=False, repr=False)
    xi: float = 0.5
    s: int = 2
    max_dim: int = 6000
    decimation_extra: int = 1

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        if len(lv) < 2 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigError("particle levels must be strictly increasing, at least two")
        object.__setattr__(self, "levels", lv)
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.g < 0:
            raise ConfigError("g must be non-negative")
        if self.kappa is not None and np.shape(self.kappa) != (self.n_modes,):
            raise ConfigError("kappa must have one value per mode")
        if self.coupling is not None and np.shape(self.coupling) != (self.n_modes, self.n_p, self.n_p):
            raise ConfigError("coupling must have shape (n_modes, n_p, n_p)")

    @property
    def n_p(self) -> int:
        return len(self.levels)

    @property
    def gap(self) -> float:
        return self.levels[1] - self.levels[0]

    def with_g(self, g: float) -> "NelsonConfig":
        return replace(self, g=g)

    # configuration files -------------------------------------------------
    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser, base_dir: Path | None = None) -> "NelsonConfig":
        base_dir = Path(base_dir or ".")
        kw = {}
        try:
            if cp.has_section("model"):
                m = cp["model"]
                if "levels" in m:
                    kw["levels"] = tuple(float(x) for x in m["levels"].replace(",", " ").split())
                for key in ("g", "mu"):
                    if key in m:
                        kw[key] = m.getfloat(key)
            if cp.has_section("grid"):
                gs = cp["grid"]
                for key, conv in (("sigma", float), ("n_modes", int), ("n_max", int), ("e_max", float),
                                  ("max_dim", int), ("decimation_extra", int)):
                    if key in gs:
                        kw[key] = conv(gs[key])
            if cp.has_section("space"):
                sp = cp["space"]
                if "xi" in sp:
                    kw["xi"] = sp.getfloat("xi")
                if "s" in sp:
                    kw["s"] = sp.getint("s")
            n_modes = kw.get("n_modes", cls.n_modes)
            n_p = len(kw.get("levels", cls.levels))
            if cp.has_option("model", "kappa"):
                kw["kappa"] = _read_table(cp["model"]["kappa"], base_dir, n_modes)
            if cp.has_option("model", "coupling"):
                tab = _read_table(cp["model"]["coupling"], base_dir, n_modes, width=n_p * n_p)
                kw["coupling"] = None if tab is None else tab.reshape(n_modes, n_p, n_p)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "NelsonConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
        return cls.from_parser(cp, Path(path).parent)


def _read_table(spec: str, base_dir: Path, n_modes: int, width: int = 1):
    """``default``, an inline comma list, or ``file:<csv>`` with columns ``k, v1[, v2 ...]``."""
    spec = spec.strip()
    if spec in ("", "default"):
        return None
    if spec.startswith("file:"):
        path = base_dir / spec[5:].strip()
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        try:
            data = np.array([[float(x) for x in r] for r in rows])
        except ValueError:
            data = np.array([[float(x) for x in r] for r in rows[1:]])  # header row
        vals = data[:, 1:]
    else:
        vals = np.array([float(x) for x in spec.replace(",", " ").split()]).reshape(-1, width)
    if vals.shape != (n_modes, width):
        raise ConfigError(f"table has shape {vals.shape}, expected ({n_modes}, {width})")
    return vals[:, 0] if width == 1 else vals


class NelsonModel:
    """Truncated Nelson Hamiltonian and its initial decimation."""

    def __init__(self, config: NelsonConfig):
        self.config = config
        self.grid = MomentumGrid(config.sigma, config.n_modes)
        self.rgrid = RGrid(config.sigma, config.n_modes)
        k = self.grid.k
        if config.kappa is None:
            kap = k ** (config.mu + 0.5)
        else:
            kap = np.asarray(config.kappa, dtype=float)
        nrm = kappa_norm(self.grid, kap, config.mu)
        if nrm == 0:
            raise ConfigError("form factor vanishes")
        self.kappa = kap / nrm
        self.coupling = (default_coupling(k, config.n_p) if config.coupling is None
                         else np.asarray(config.coupling, dtype=complex))

    # bases -----------------------------------------------------------------
    @cached_property
    def basis(self) -> TruncatedFockBasis:
        c = self.config
        return build_basis(self.grid, c.n_max, c.e_max, c.n_p, c.max_dim)

    @cached_property
    def _photon_basis(self) -> TruncatedFockBasis:
        c = self.config
        return build_basis(self.grid, c.n_max, c.e_max, 1, c.max_dim)

    def photon_basis(self) -> TruncatedFockBasis:
        """Boson-only basis on which the RG flow runs."""
        return self._photon_basis

    @cached_property
    def decimation_model(self) -> "NelsonModel":
        """Same model with ``decimation_extra`` more bosons allowed.

        Reading ``w_{m,n}`` off one-boson spectators needs targets with up to
        three bosons; with ``n_max = 2`` one time ordering of the
        second-order ``w_{1,1}`` term would be cut off there, so the initial
        decimation runs on the enlarged space.
        """
        c = self.config
        if c.decimation_extra <= 0:
            return self
        return NelsonModel(replace(c, n_max=c.n_max + c.decimation_extra, decimation_extra=0))

    # operators -------------------------------------------------------------
    @cached_property
    def h0_diag(self) -> np.ndarray:
        b = self.basis
        return np.repeat(np.array(self.config.levels), b.n_photon_states) + b.full_energies()

    @cached_property
    def interaction(self) -> np.ndarray:
        """``sum_i c_i kappa_i (G_i x A*_i + G_i^* x A_i)`` (without ``g``)."""
        pb = self._photon_block
        n = self.basis.dim
        out = np.zeros((n, n), dtype=complex)
        c = self.grid.measure
        for i in range(self.grid.n_modes):
            a_dag = ladder_op(pb, i, "create").mat
            term = c[i] * self.kappa[i] * np.kron(self.coupling[i], a_dag)
            out += term + term.conj().T
        return out

    @property
    def _photon_block(self) -> TruncatedFockBasis:
        return self._photon_basis

    def hamiltonian(self) -> FockOperator:
        m = np.diag(self.h0_diag).astype(complex) + self.config.g * self.interaction
        if np.abs(m - m.conj().T).max() > 1e-12 * max(1.0, np.abs(m).max()):
            raise ConfigError("assembled Nelson Hamiltonian is not hermitian")
        return FockOperator(self.basis, 0.5 * (m + m.conj().T), hermitian=True)

    def exact_levels(self, count: int = 1) -> np.ndarray:
        return np.linalg.eigvalsh(self.hamiltonian().mat)[:count]

    # initial decimation ----------------------------------------------------
    def i0_bound(self, rho0: float) -> float:
        return self.config.levels[0] + 0.5 * rho0

    def energy_bracket(self, rho0: float = 1.0):
        e0 = self.config.levels[0]
        return e0 - rho0 / 8.0, e0 + rho0 / 8.0

    def partition0(self, rho0: float) -> Partition:
        b = self.basis
        chi = np.zeros(b.dim)
        chi[: b.n_photon_states] = chi_rho(b.energies, rho0)
        return Partition(rho0, chi, np.sqrt(np.clip(1.0 - chi**2, 0.0, 1.0)))

    def decimate0(self, lam: float, rho0: float):
        """Feshbach map with ``tau_0 = H_0 - lambda`` and ``chi = pi_0``; returns the result."""
        c = self.config
        if rho0 <= 0 or rho0 > c.gap + 1e-12:
            raise ConfigError(f"rho0 must lie in (0, gap = {c.gap}]")
        if c.g > 0 and rho0 < 100 * c.g**2:
            raise ConfigError("need rho0 >= 100 g^2")
        if lam > self.i0_bound(rho0) + 1e-12:
            raise ConfigError(f"lambda = {lam} outside I0 (lambda <= {self.i0_bound(rho0)})")
        n = self.basis.dim
        h = self.hamiltonian().mat - lam * np.eye(n)
        h0 = np.diag(self.h0_diag - lam).astype(complex)
        return feshbach_map(h, self.partition0(rho0), h0)

    def initial_family(self, lam: float, rho0: float = 1.0) -> KernelFamily:
        """``rho0^-1 S_rho0 F_{tau0, pi0}(H_g - lambda)`` restricted to the particle ground level."""
        dm = self.decimation_model
        if dm is not self:
            return dm.initial_family(lam, rho0)
        fr = self.decimate0(lam, rho0)
        pb = self._photon_basis
        n = pb.n_photon_states
        f = FockOperator(pb, fr.F[:n, :n])
        c = self.config
        fam = extract_kernels(f, self.rgrid, cutoff_scale=rho0, mu=c.mu, s=c.s, xi=c.xi)
        return scale_kernels(fam, rho0)


def build_nelson(config: NelsonConfig) -> FockOperator:
    return NelsonModel(config).hamiltonian()


def initial_decimation(model: NelsonModel, lam: float, rho0: float = 1.0) -> KernelFamily:
    return model.initial_family(lam, rho0)


@dataclass
class InitialAuditReport:
    lams: np.ndarray
    exact: np.ndarray
    feshbach_gap: np.ndarray
    family_gap: np.ndarray
    i0_bound: float
    polydisc: tuple

    @property
    def max_feshbach_gap(self) -> float:
        return float(np.max(self.feshbach_gap, initial=0.0))

    @property
    def max_family_gap(self) -> float:
        return float(np.max(self.family_gap, initial=0.0))

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_family_gap <= tol


def initial_polydisc(model: NelsonModel, lam: float, rho0: float = 1.0, xi: float | None = None):
    """``(alpha_0, beta_0, gamma_0)`` of the initial family after removing ``(e_0 - lambda)/rho0``."""
    fam = model.initial_family(lam, rho0)
    shift = (model.config.levels[0] - lam) / rho0
    fam = fam.replace(fam.w00 - shift)
    pd = polydisc_membership(fam, xi=xi)
    return pd.alpha, pd.beta, pd.gamma


def initial_audit(model: NelsonModel, lams=None, rho0: float = 1.0, n_levels: int = 3) -> InitialAuditReport:
    """Isospectral consistency of the initial decimation.

    For every ``lambda`` (default: exact eigenvalues of ``H_g`` below
    ``e_0 + rho0/2``, lowest ``n_levels``) report ``rho0 * dist(0, spec F)``
    for the decimated operator and for the re-assembled kernel family.  At
    an eigenvalue of ``H_g`` both vanish.
    """
    bound = model.i0_bound(rho0)
    ev = np.linalg.eigvalsh(model.hamiltonian().mat)
    exact = ev[ev < bound][:n_levels]
    lams = exact if lams is None else np.asarray(lams, dtype=float)
    if np.any(lams > bound + 1e-12):
        raise ConfigError(f"lambda grid leaves I0; boundary is {bound}")
    pb = model.photon_basis()
    n = pb.n_photon_states
    fg, ag = [], []
    for lam in lams:
        fr = model.decimate0(lam, rho0)
        idx = np.flatnonzero(fr.partition.chi[:n] > 1e-14)
        fblock = fr.F[np.ix_(idx, idx)]
        fg.append(float(np.linalg.svd(fblock, compute_uv=False)[-1]))
        fam = model.initial_family(lam, rho0)
        h = assemble_hamiltonian(fam, pb).mat
        ag.append(rho0 * float(np.min(np.abs(np.linalg.eigvals(h)))))
    pd = initial_polydisc(model, float(lams[0]), rho0) if len(lams) else (np.nan,) * 3
    return InitialAuditReport(lams, exact, np.array(fg), np.array(ag), bound, pd)


def relative_bound(model: NelsonModel, n_samples: int = 200, seed: int = 0):
    """Fit ``||I_g psi|| <= a ||H_0 psi|| + b ||psi||`` over random vectors; returns ``(a, b)``.

    ``b`` is fixed at ``||I_g (H_0 + 1)^-1||``-style scale and ``a`` is the
    smallest slope covering every sample.
    """
    rng = np.random.default_rng(seed)
    i_g = model.config.g * model.interaction
    h0 = model.h0_diag
    n = h0.size
    xs, ys = [], []
    for _ in range(n_samples):
        psi = rng.normal(size=n) + 1j * rng.normal(size=n)
        psi /= np.linalg.norm(psi)
        xs.append(np.linalg.norm(h0 * psi))
        ys.append(np.linalg.norm(i_g @ psi))
    xs, ys = np.array(xs), np.array(ys)
    b = float(np.linalg.norm(i_g, 2)) * 0.5
    a = float(max(0.0, np.max((ys - b) / xs)))
    return a, b
