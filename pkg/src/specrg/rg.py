"""Renormalisation map ``R_rho = rho^-1 S_rho o F_rho`` on kernel families."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .feshbach import NotInvertible, Partition, feshbach_map
from .fock import FockOperator, TruncatedFockBasis
from .grid import grid_power
from .kernels import KernelFamily, assemble_hamiltonian, chi_cutoff, extract_kernels, kernel_norm

ESCAPE = 1.0 / 18.0


class PolydiscViolation(ValueError):
    """Input family lies outside the domain of the decimation map."""


class NoSignChange(RuntimeError):
    """Bisection bracket does not straddle the ground-state energy."""


# ---------------------------------------------------------------------------
# scaling

def _shift_r(v: np.ndarray, pts: np.ndarray, p: int, rho: float) -> np.ndarray:
    out = np.empty_like(v)
    out[0] = v[0]
    for j in range(1, len(pts)):
        if j - p >= 1:
            out[j] = v[j - p]
        else:
            # below the smallest positive point: linear between 0 and pts[1]
            t = rho * pts[j] / pts[1]
            out[j] = v[0] + (v[1] - v[0]) * t
    return out


def _shift_k(v: np.ndarray, axis: int, p: int) -> np.ndarray:
    if p == 0:
        return v
    out = np.zeros_like(v)
    src = [slice(None)] * v.ndim
    dst = [slice(None)] * v.ndim
    src[axis] = slice(0, v.shape[axis] - p)
    dst[axis] = slice(p, None)
    out[tuple(dst)] = v[tuple(src)]
    return out


def scale_kernels(family: KernelFamily, rho: float) -> KernelFamily:
    """``s_rho(w_{m,n})[r; k] = rho^(m+n-1) w_{m,n}[rho r; rho k]`` by index shift.

    Momenta that would map below the smallest grid point are filled with 0.
    """
    p = grid_power(rho, family.grid.sigma)
    if p == 0:
        return family
    pts = family.rgrid.points
    w00 = _shift_r(family.w00, pts, p, rho) / rho
    ks = {}
    for (m, n), k in family.kernels.items():
        v = _shift_r(k.values, pts, p, rho)
        for ax in range(1, m + n + 1):
            v = _shift_k(v, ax, p)
        ks[(m, n)] = rho ** (m + n - 1) * v
    return family.replace(w00, ks)


# ---------------------------------------------------------------------------
# polydisc

@dataclass(frozen=True)
class PolydiscParams:
    alpha: float
    beta: float
    gamma: float
    mu: float
    s: int
    xi: float

    def inside(self, alpha: float, beta: float, gamma: float) -> bool:
        return self.alpha <= alpha and self.beta <= beta and self.gamma <= gamma


def polydisc_membership(family: KernelFamily, s: int | None = None, xi: float | None = None) -> PolydiscParams:
    """Measure ``(alpha, beta, gamma)``; ``beta`` is taken over the whole r-grid."""
    s = family.s if s is None else s
    xi = family.xi if xi is None else xi
    w = family.w00.real
    alpha = float(abs(family.w00[0]))
    beta = float(np.abs(np.gradient(w, family.rgrid.points) - 1.0).max())
    gamma = kernel_norm(family.interaction(), "family_xi", s=s, xi=xi)
    if not np.isfinite([alpha, beta, gamma]).all():
        raise FloatingPointError("polydisc parameters are not finite")
    return PolydiscParams(alpha, beta, gamma, family.mu, s, xi)


def predicted_bounds(gamma: float, rho: float, mu: float, c_chi: float):
    """``(alpha', beta' - beta, gamma')`` from the contraction estimate."""
    a = 3.0 * c_chi * gamma**2 / (2.0 * rho)
    return a, a, 128.0 * c_chi**2 * rho**mu * gamma


# ---------------------------------------------------------------------------
# one step

def _split(family: KernelFamily, basis: TruncatedFockBasis):
    h = assemble_hamiltonian(family, basis)
    h0 = assemble_hamiltonian(family.replace(kernels={}), basis)
    return h, h0


def decimate(family: KernelFamily, rho: float, basis: TruncatedFockBasis):
    """Feshbach map at scale ``rho`` with ``tau = w00(H_f)``; returns ``(F, H, result)``."""
    h, h0 = _split(family, basis)
    fr = feshbach_map(h, Partition.from_basis(basis, rho), h0)
    return FockOperator(basis, fr.F), h, fr


def rg_step(family: KernelFamily, rho: float, basis: TruncatedFockBasis, check_domain: bool = False):
    """``(R_rho - rho^-1 eps_0)(family)`` and the removed constant ``rho^-1 <H>_Omega``."""
    grid_power(rho, family.grid.sigma)
    if check_domain:
        pd = polydisc_membership(family, s=1)
        if not pd.inside(rho / 8, 1 / 8, rho / 8):
            raise PolydiscViolation(f"family outside D(rho/8, 1/8, rho/8): {pd}")
    f, h, _ = decimate(family, rho, basis)
    e_shift = float(h.mat[0, 0].real) / rho
    ext = extract_kernels(f, family.rgrid, cutoff_scale=rho, mu=family.mu, s=family.s, xi=family.xi)
    out = scale_kernels(ext, rho)
    return out.replace(out.w00 - e_shift), e_shift


# ---------------------------------------------------------------------------
# iteration

@dataclass
class StepRecord:
    step: int
    e_shift: float
    e_n: float
    delta_e: float
    alpha: float
    beta: float
    gamma: float
    pred_alpha: float = float("nan")
    pred_beta_inc: float = float("nan")
    pred_gamma: float = float("nan")
    w00: list = field(default_factory=list, repr=False)


@dataclass
class RGTrace:
    rho: float
    records: list = field(default_factory=list)
    status: str = "running"
    sign: int = 0
    lam: float | None = None
    error_step: int | None = None

    @property
    def steps(self) -> int:
        return max(0, len(self.records) - 1)

    def e_values(self) -> np.ndarray:
        return np.array([r.e_n for r in self.records])

    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "status": self.status,
            "sign": self.sign,
            "lam": self.lam,
            "error_step": self.error_step,
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RGTrace":
        d = json.loads(text)
        recs = [StepRecord(**r) for r in d.pop("records")]
        return cls(records=recs, **d)

    def to_csv(self) -> str:
        cols = ["step", "e_shift", "e_n", "delta_e", "alpha", "beta", "gamma",
                "pred_alpha", "pred_beta_inc", "pred_gamma"]
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(cols + ["status"])
        for r in self.records:
            wr.writerow([getattr(r, c) for c in cols] + [self.status])
        return buf.getvalue()


def _record(step, fam, e_shift, e_n, delta, prev_gamma, rho, c_chi):
    pd = polydisc_membership(fam)
    rec = StepRecord(step, e_shift, e_n, delta, pd.alpha, pd.beta, pd.gamma, w00=fam.w00.real.tolist())
    if prev_gamma is not None:
        rec.pred_alpha, rec.pred_beta_inc, rec.pred_gamma = predicted_bounds(prev_gamma, rho, fam.mu, c_chi)
    return rec


def rg_iterate(family0: KernelFamily, rho: float, n_steps: int, basis: TruncatedFockBasis,
               escape: float = ESCAPE, c_chi: float | None = None, stop_when_free: bool = True,
               lam: float | None = None) -> RGTrace:
    """Iterate the RG map, carrying the unstable constant ``E_n`` along.

    Record ``n`` stores the polydisc of the output of ``R - rho^-1 eps_0``
    (so ``alpha_n = |Delta_n E|``) and ``E_n = rho^-1 E_{n-1} + Delta_n E``.
    The flow stops with ``escaped+``/``escaped-`` once ``|E_n| > escape``; a
    singular decimation counts as ``escaped-`` (the spectral parameter
    sits above the spectrum).  When every interaction kernel has vanished
    the remaining flow is ``E -> E / rho`` exactly, so with
    ``stop_when_free`` the sign is read off immediately (status ``free``).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    c_chi = chi_cutoff().c_chi if c_chi is None else c_chi
    fam = family0
    e_prev = float(fam.w00[0].real)
    trace = RGTrace(rho, lam=lam)
    pd0 = polydisc_membership(fam)
    trace.records.append(StepRecord(0, 0.0, e_prev, 0.0, pd0.alpha, pd0.beta, pd0.gamma, w00=fam.w00.real.tolist()))
    prev_gamma = pd0.gamma
    for n in range(1, n_steps + 1):
        try:
            out, e_shift = rg_step(fam, rho, basis)
        except NotInvertible:
            trace.status, trace.sign, trace.error_step = "escaped-", -1, n
            return trace
        delta = float(out.w00[0].real)
        e_n = e_shift + delta
        rec = _record(n, out, e_shift, e_n, delta, prev_gamma, rho, c_chi)
        trace.records.append(rec)
        prev_gamma = rec.gamma
        if abs(e_n) > escape:
            trace.status, trace.sign = ("escaped+", 1) if e_n > 0 else ("escaped-", -1)
            return trace
        fam = out.replace(out.w00 + e_shift)
        if stop_when_free and rec.gamma == 0.0:
            trace.status, trace.sign = "free", int(np.sign(e_n))
            return trace
    trace.status, trace.sign = "completed", int(np.sign(trace.records[-1].e_n))
    return trace


# ---------------------------------------------------------------------------
# audit

@dataclass
class AuditReport:
    rows: list
    rate_fit: float
    rate_bound: float
    passed: bool
    hypotheses_met: bool
    c_implied: float = float("nan")  # c in gamma_n ~ (c rho^mu)^n gamma_0

    def to_dict(self) -> dict:
        return asdict(self)


def contraction_audit(trace: RGTrace, c_chi: float | None = None, mu: float = 0.5) -> AuditReport:
    """Compare every measured ``(alpha', beta' - beta, gamma')`` with its predicted bound.

    ``hypotheses_met`` says whether every input also satisfied the
    theorem's smallness assumptions ``gamma <= rho / (8 C_chi)``.
    """
    if len(trace.records) < 2:
        raise ValueError("audit needs at least one completed step")
    c_chi = chi_cutoff().c_chi if c_chi is None else c_chi
    rho = trace.rho
    rows, ok, hyp = [], True, True
    for prev, cur in zip(trace.records[:-1], trace.records[1:]):
        pa, pb, pg = predicted_bounds(prev.gamma, rho, mu, c_chi)
        beta_inc = cur.beta - prev.beta
        row = {
            "step": cur.step,
            "gamma_in": prev.gamma,
            "alpha": cur.alpha, "alpha_bound": pa,
            "beta_inc": beta_inc, "beta_bound": pb,
            "gamma": cur.gamma, "gamma_bound": pg,
        }
        row["ok"] = bool(cur.alpha <= pa * (1 + 1e-12) + 1e-15 and beta_inc <= pb * (1 + 1e-12) + 1e-15
                         and cur.gamma <= pg * (1 + 1e-12) + 1e-15)
        ok &= row["ok"]
        hyp &= prev.gamma <= rho / (8 * c_chi)
        rows.append(row)
    g = trace.gammas()
    pos = g[g > 0]
    rate = float(np.exp(np.mean(np.diff(np.log(pos))))) if pos.size >= 2 else 0.0
    return AuditReport(rows, rate, 128 * c_chi**2 * rho**mu, bool(ok), bool(hyp), rate / rho**mu)


# ---------------------------------------------------------------------------
# ground-state energy

def gs_energy_bisect(model, rho0: float = 1.0, rho: float = 0.5, n_steps: int = 80, tol: float = 1e-12,
                     bracket=None, max_iter: int = 200):
    """Bisection on ``lambda`` using the escape sign of the RG flow.

    ``model`` must provide ``photon_basis()``, ``initial_family(lam, rho0)``
    and ``energy_bracket(rho0)``.  Returns ``(e_g, trace at e_g)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    basis = model.photon_basis()
    lo, hi = bracket if bracket is not None else model.energy_bracket(rho0)

    def run(lam):
        try:
            fam = model.initial_family(lam, rho0)
        except NotInvertible:
            return -1, RGTrace(rho, status="escaped-", sign=-1, lam=lam, error_step=0)
        tr = rg_iterate(fam, rho, n_steps, basis, lam=lam)
        return tr.sign, tr

    s_lo, _ = run(lo)
    s_hi, _ = run(hi)
    if not (s_lo > 0 and s_hi < 0):
        raise NoSignChange(f"signs at bracket ends: {s_lo}, {s_hi}")
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        s, _ = run(mid)
        if s > 0:
            lo = mid
        elif s < 0:
            hi = mid
        else:
            lo = hi = mid
        it += 1
    lam = 0.5 * (lo + hi)
    return lam, run(lam)[1]


def e_series_estimate(trace: RGTrace):
    """``sum_i rho^i Delta_i E`` from a trace, with partial sums and the ``alpha`` envelope.

    Returns ``(estimate, partial_sums, envelope)`` where ``envelope[i] =
    2 rho^i alpha_i`` bounds the tail after term ``i``.
    """
    rho = trace.rho
    d = np.array([r.delta_e for r in trace.records[1:]])
    if d.size == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    w = rho ** np.arange(1, d.size + 1)
    terms = w * d
    partial = np.cumsum(terms)
    if not np.all(np.isfinite(partial)):
        raise FloatingPointError("e-series diverges")
    alphas = np.array([r.alpha for r in trace.records[1:]])
    return float(partial[-1]), partial, 2 * w * alphas
