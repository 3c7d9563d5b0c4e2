"""Command-line front end.

Every subcommand reads a sectioned ``key = value`` configuration, writes
its tables (CSV) and reports (JSON) into the output directory and finishes
with a ``<command>.manifest.json`` holding versions, wall time and the
config hash.  Tables and reports never contain timestamps, so identical
config and seed give byte-identical files.

Exit codes: 0 pass, 1 validation error, 2 numerical failure, 3 acceptance
failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import BACKEND, __version__
from .models import ConfigError, NelsonConfig, NelsonModel

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_ACCEPT = 0, 1, 2, 3
COMMANDS = ("build", "gs-energy", "rg-run", "audit-contraction", "isospectral-suite",
            "mourre", "lap-scan", "decay-scan")
RANDOMIZED = {"isospectral-suite"}


class ValidationError(ConfigError):
    """Configuration problems, collected so they can be reported together."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RGSettings:
    rho: float = 0.5
    rho0: float = 1.0
    n_steps: int = 80
    tol: float = 1e-15
    audit_steps: int = 6


@dataclass(frozen=True)
class VerifySettings:
    theta: tuple = (0.75,)
    windows: int = 3
    eps_floor: str = "local"
    eps_factors: tuple = (8.0, 4.0, 2.0, 1.0)
    n_lambda: int = 8
    lap_sigma: float = 0.99975
    lap_k_min: float = 2e-4
    delta: float = 0.1
    mourre_steps: tuple = (1, 2, 3, 4)
    gs_tol: float = 1e-4
    decay_theta: float = 1.0
    decay_sigma: float = 0.97
    decay_k_min: float = 1e-3
    decay_support: tuple = (0.03, 0.004)
    decay_sharpness: float = 4.0
    n_times: int = 64


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "specrg-out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    model: NelsonConfig = field(default_factory=NelsonConfig)
    rg: RGSettings = field(default_factory=RGSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    hash: str = ""


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


_RG_KEYS = {"rho": float, "rho0": float, "n_steps": int, "tol": float, "audit_steps": int}
_VERIFY_KEYS = {
    "theta": _floats, "windows": int, "eps_floor": str.strip, "eps_factors": _floats, "n_lambda": int,
    "lap_sigma": float, "lap_k_min": float, "delta": float,
    "mourre_steps": lambda s: tuple(int(x) for x in s.replace(",", " ").split()),
    "gs_tol": float, "decay_theta": float, "decay_sigma": float, "decay_k_min": float,
    "decay_support": _floats, "decay_sharpness": float, "n_times": int,
}
_OUTPUT_KEYS = {"dir": str.strip, "formats": lambda s: tuple(x.strip() for x in s.split(",") if x.strip())}
_MODEL_SECTIONS = {
    "model": {"levels", "g", "mu", "kappa", "coupling"},
    "grid": {"sigma", "n_modes", "n_max", "e_max", "max_dim", "decimation_extra"},
    "space": {"xi", "s"},
}


def apply_overrides(cp: configparser.ConfigParser, overrides) -> list:
    errors = []
    for item in overrides or ():
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not option:
            errors.append(f"override {item!r} is not section.key=value")
            continue
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    return errors


def _section(cp, name: str, keys: dict, cls, errors: list):
    kw = {}
    if cp.has_section(name):
        for opt, raw in cp[name].items():
            if opt not in keys:
                errors.append(f"{name}.{opt} is not a known option")
                continue
            try:
                kw[opt] = keys[opt](raw)
            except ValueError:
                errors.append(f"{name}.{opt}: cannot parse {raw!r}")
    return cls(**kw)


def config_hash(cp: configparser.ConfigParser) -> str:
    canon = {s: dict(sorted(cp[s].items())) for s in sorted(cp.sections())}
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path=None, overrides=()) -> RunConfig:
    """Read, override and cross-check a run configuration.

    Raises
    ------
    ValidationError
        With every problem found, not only the first.
    """
    cp = configparser.ConfigParser()
    errors = []
    base = Path(".")
    if path is not None:
        if not cp.read(path):
            raise ValidationError([f"cannot read config {path}"])
        base = Path(path).parent
    errors += apply_overrides(cp, overrides)
    for s in cp.sections():
        if s in _MODEL_SECTIONS:
            errors += [f"{s}.{o} is not a known option" for o in cp[s] if o not in _MODEL_SECTIONS[s]]
        elif s not in {"rg", "verify", "output"}:
            errors.append(f"unknown section [{s}]")
    try:
        model = NelsonConfig.from_parser(cp, base)
    except (ConfigError, TypeError) as exc:
        errors.append(f"model: {exc}")
        model = None
    rg = _section(cp, "rg", _RG_KEYS, RGSettings, errors)
    ver = _section(cp, "verify", _VERIFY_KEYS, VerifySettings, errors)
    out = _section(cp, "output", _OUTPUT_KEYS, OutputSettings, errors)
    errors += _cross_check(model, rg, ver, out)
    if errors:
        raise ValidationError(errors)
    return RunConfig(model, rg, ver, out, config_hash(cp))


def _cross_check(model, rg: RGSettings, ver: VerifySettings, out: OutputSettings) -> list:
    errors = []
    if not 0.0 < rg.rho < 1.0:
        errors.append("rg.rho must lie in (0, 1)")
    elif model is not None:
        p = math.log(rg.rho) / math.log(model.sigma)
        if abs(p - round(p)) > 1e-9 or round(p) < 1:
            errors.append("rg.rho must be sigma^p")
    if model is not None:
        if rg.rho0 > model.gap:
            errors.append("rg.rho0 must not exceed the particle gap")
        if rg.rho0 < 100 * model.g**2:
            errors.append("rg.rho0 must be at least 100 g^2")
    if rg.n_steps < 1 or rg.audit_steps < 1:
        errors.append("rg.n_steps and rg.audit_steps must be >= 1")
    if rg.tol <= 0:
        errors.append("rg.tol must be positive")
    if not ver.theta or any(not 0.5 < t <= 1.0 for t in ver.theta):
        errors.append("verify.theta values must lie in (1/2, 1]")
    if not 0.0 < ver.decay_theta <= 1.0:
        errors.append("verify.decay_theta must lie in (0, 1]")
    if ver.eps_floor != "local":
        try:
            if float(ver.eps_floor) <= 0:
                raise ValueError
        except ValueError:
            errors.append("verify.eps_floor must be 'local' or a positive number")
    if ver.windows < 0 or ver.n_lambda < 3 or ver.n_times < 2:
        errors.append("verify.windows >= 0, verify.n_lambda >= 3 and verify.n_times >= 2 required")
    if len(ver.decay_support) != 2 or ver.decay_support[1] <= 0:
        errors.append("verify.decay_support must be 'offset, halfwidth' with halfwidth > 0")
    for s in ("lap_sigma", "decay_sigma"):
        if not 0.0 < getattr(ver, s) < 1.0:
            errors.append(f"verify.{s} must lie in (0, 1)")
    bad = set(out.formats) - {"csv", "json"}
    if bad or not out.formats:
        errors.append("output.formats must be a subset of csv, json")
    return errors


# ---------------------------------------------------------------------------
# artifacts

class Writer:
    """Collects artifacts for one subcommand and writes the manifest."""

    def __init__(self, out: Path, cfg: RunConfig, command: str, seed):
        self.out, self.cfg, self.command, self.seed = out, cfg, command, seed
        self.files = []
        out.mkdir(parents=True, exist_ok=True)

    def _put(self, name: str, text: str):
        p = self.out / name
        p.write_text(text)
        self.files.append({"file": name, "sha256": hashlib.sha256(text.encode()).hexdigest()})

    def csv(self, name: str, text: str):
        if "csv" in self.cfg.output.formats:
            self._put(name, f"# config_hash={self.cfg.hash}\n" + text)

    def json(self, name: str, obj):
        if "json" in self.cfg.output.formats:
            payload = {"config_hash": self.cfg.hash, "seed": self.seed, "command": self.command, "data": obj}
            self._put(name, json.dumps(payload, indent=1, sort_keys=True, default=_default) + "\n")

    def manifest(self, status: int, wall: float):
        m = {
            "command": self.command, "config_hash": self.cfg.hash, "seed": self.seed, "exit": status,
            "wall_time_s": wall, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "versions": {"specrg": __version__, "backend": BACKEND, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "artifacts": self.files,
        }
        (self.out / f"{self.command}.manifest.json").write_text(json.dumps(m, indent=1, sort_keys=True) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# subcommands; each returns an exit code

def _oracle_eg(model: NelsonModel) -> float:
    return float(model.exact_levels(1)[0])


def cmd_build(cfg: RunConfig, w: Writer, args) -> int:
    from .verify import operator_hash

    model = NelsonModel(cfg.model)
    h = model.hamiltonian()
    info = {"dim": h.basis.dim, "n_modes": cfg.model.n_modes, "n_max": cfg.model.n_max,
            "operator_hash": operator_hash(h), "norm": float(np.linalg.norm(h.mat, 2)),
            "config": {**asdict(cfg.rg), "sigma": cfg.model.sigma, "g": cfg.model.g}}
    print(f"built H: dim {info['dim']}, ||H|| = {info['norm']:.6g}")
    w.json("build.json", info)
    return EXIT_OK


def cmd_gs_energy(cfg: RunConfig, w: Writer, args) -> int:
    from .rg import gs_energy_bisect

    model = NelsonModel(cfg.model)
    e_rg, trace = gs_energy_bisect(model, cfg.rg.rho0, cfg.rg.rho, cfg.rg.n_steps, cfg.rg.tol)
    e_ex = _oracle_eg(model)
    diff = abs(e_rg - e_ex)
    print(f"e_g(RG)     = {e_rg:.15g}\ne_g(oracle) = {e_ex:.15g}\n|delta|     = {diff:.3e}")
    w.csv("gs-energy_trace.csv", trace.to_csv())
    w.json("gs-energy.json", {"e_rg": e_rg, "e_oracle": e_ex, "abs_diff": diff, "tol": cfg.verify.gs_tol,
                              "trace_status": trace.status})
    return EXIT_OK if diff <= cfg.verify.gs_tol else EXIT_ACCEPT


def _trace_at_eg(cfg: RunConfig, n_steps: int, stop_when_free: bool = True):
    from .rg import rg_iterate

    model = NelsonModel(cfg.model)
    lam = _oracle_eg(model)
    fam = model.initial_family(lam, cfg.rg.rho0)
    return rg_iterate(fam, cfg.rg.rho, n_steps, model.photon_basis(), stop_when_free=stop_when_free, lam=lam)


def cmd_rg_run(cfg: RunConfig, w: Writer, args) -> int:
    trace = _trace_at_eg(cfg, cfg.rg.n_steps)
    print(f"RG flow at lambda = {trace.lam:.12g}: {trace.steps} steps, status {trace.status}")
    w.csv("rg-run_trace.csv", trace.to_csv())
    w.json("rg-run.json", trace.to_dict())
    return EXIT_OK


def cmd_audit(cfg: RunConfig, w: Writer, args) -> int:
    from .rg import contraction_audit

    trace = _trace_at_eg(cfg, cfg.rg.audit_steps, stop_when_free=False)
    rep = contraction_audit(trace, mu=cfg.model.mu)
    print(f"contraction audit over {len(rep.rows)} steps: {'pass' if rep.passed else 'FAIL'}"
          f" (rate {rep.rate_fit:.3g}, bound {rep.rate_bound:.3g}, hypotheses met: {rep.hypotheses_met})")
    w.csv("audit-contraction_trace.csv", trace.to_csv())
    w.json("audit-contraction.json", rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_ACCEPT


def cmd_isospectral(cfg: RunConfig, w: Writer, args) -> int:
    from .feshbach import random_suite

    reps = random_suite(args.instances, args.seed)
    fails = [r for r in reps if not r.passed]
    worst = {k: float(np.nanmax([getattr(r, k) for r in reps]))
             for k in ("res_ii", "res_iii", "res_resolvent", "res_inverse_F")}
    print(f"isospectrality: {len(reps) - len(fails)}/{len(reps)} pass; worst residuals "
          + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))
    w.json("isospectral-suite.json", {"instances": len(reps), "failed": len(fails), "worst": worst,
                                      "reports": [r.to_dict() for r in reps]})
    return EXIT_OK if not fails else EXIT_ACCEPT


def cmd_mourre(cfg: RunConfig, w: Writer, args) -> int:
    from .verify import ScanTable, mourre_rg_scan

    model = NelsonModel(cfg.model)
    scan = mourre_rg_scan(model, _oracle_eg(model), cfg.verify.mourre_steps, cfg.verify.delta,
                          cfg.rg.rho0, cfg.rg.rho)
    rows = np.column_stack([scan.steps, scan.lambdas, scan.gammas, scan.margins, scan.defects,
                            [r.w_tilde_bound for r in scan.reports], scan.e_ratios])
    tab = ScanTable(("step", "lambda", "gamma", "margin", "defect", "w_tilde_bound", "abs_E_over_rho"), rows, {})
    for n, r in zip(scan.steps, scan.reports):
        print(f"step {n}: margin/delta {r.margin / cfg.verify.delta:+.4f}, defect {r.defect:.3e}")
    w.csv("mourre.csv", tab.to_csv())
    w.json("mourre.json", scan.to_dict())
    return EXIT_OK if scan.passed() else EXIT_ACCEPT


def cmd_lap(cfg: RunConfig, w: Writer, args) -> int:
    from .verify import OneBosonSpectrum, continuum_config, lap_scan, window_schedule

    v = cfg.verify
    model = NelsonModel(continuum_config(cfg.model, v.lap_sigma, v.lap_k_min))
    floor = None if v.eps_floor == "local" else float(v.eps_floor)
    ok, reports = True, []
    for theta in v.theta:
        spec = OneBosonSpectrum(model, theta)
        e_g = spec.ground_energy()
        sched = window_schedule(e_g, cfg.rg.rho, cfg.rg.rho0, max(v.windows, 1))
        for n in range(v.windows + 1):
            rep = lap_scan(spec, theta, sched.window(n), floor, v.n_lambda, v.eps_factors)
            ok &= rep.passed()
            print(f"theta {theta} window {n}: growth {rep.growth:.4f}, holder {rep.holder:.3f}"
                  f" -> {'pass' if rep.passed() else 'FAIL'}")
            w.csv(f"lap-scan_theta{theta:g}_w{n}.csv", rep.table.to_csv())
            reports.append({"theta": theta, "window_index": n, **rep.to_dict()})
    w.json("lap-scan.json", {"n_modes": model.config.n_modes, "reports": reports})
    return EXIT_OK if ok else EXIT_ACCEPT


def cmd_decay(cfg: RunConfig, w: Writer, args) -> int:
    from .verify import continuum_config, decay_scan

    v = cfg.verify
    model = NelsonModel(continuum_config(cfg.model, v.decay_sigma, v.decay_k_min))
    h = model.hamiltonian()
    e_g = float(np.linalg.eigvalsh(h.mat)[0])
    off, half = v.decay_support
    rep = decay_scan(h, v.decay_theta, (e_g + off - half, e_g + off + half), n_times=v.n_times,
                     sharpness=v.decay_sharpness)
    print(f"decay: {rep.n_levels} levels, ratio {rep.ratio:.3f}, monotone {rep.monotone_fraction:.2f}"
          f" -> {'pass' if rep.passed() else 'FAIL'}")
    w.csv("decay-scan.csv", rep.table.to_csv())
    w.json("decay-scan.json", rep.to_dict())
    return EXIT_OK if rep.passed() else EXIT_ACCEPT


HANDLERS = {
    "build": cmd_build, "gs-energy": cmd_gs_energy, "rg-run": cmd_rg_run, "audit-contraction": cmd_audit,
    "isospectral-suite": cmd_isospectral, "mourre": cmd_mourre, "lap-scan": cmd_lap, "decay-scan": cmd_decay,
}


# ---------------------------------------------------------------------------
# driver

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError([message])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specrg", description="Spectral RG toolkit for a finite Nelson model.")
    p.add_argument("command", choices=COMMANDS + ("all",))
    p.add_argument("--config", help="sectioned key = value file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", dest="overrides")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="seed for randomized commands")
    p.add_argument("--instances", type=int, default=200, help="isospectral-suite instance count")
    return p


def _severity(code: int) -> int:
    # 1 outranks 2 outranks 3 outranks 0
    return {0: 0, 3: 1, 2: 2, 1: 3}[code]


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config, args.overrides)
        commands = COMMANDS if args.command == "all" else (args.command,)
        errs = []
        if RANDOMIZED & set(commands) and args.seed is None:
            errs.append("--seed is required for randomized commands")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            errs.append("--seed must be an unsigned 64-bit integer")
        if args.instances < 1:
            errs.append("--instances must be >= 1")
        if errs:
            raise ValidationError(errs)
    except ValidationError as exc:
        print(json.dumps({"errors": exc.errors}), file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out or cfg.output.dir)
    worst = EXIT_OK
    for cmd in commands:
        w = Writer(out, cfg, cmd, args.seed if cmd in RANDOMIZED else None)
        t0 = time.perf_counter()
        try:
            code = HANDLERS[cmd](cfg, w, args)
        except ConfigError as exc:
            print(json.dumps({"errors": [f"{cmd}: {exc}"]}), file=sys.stderr)
            code = EXIT_INVALID
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            print(json.dumps({"errors": [f"{cmd}: {type(exc).__name__}: {exc}"]}), file=sys.stderr)
            code = EXIT_NUMERIC
        w.manifest(code, time.perf_counter() - t0)
        worst = max(worst, code, key=_severity)
    return worst


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
