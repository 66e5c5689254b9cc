"""Command-line front end.

Every subcommand builds an :class:`ExperimentConfig`; ``qgmaps run
config.json`` executes one directly, and every run with ``--out`` leaves a
manifest next to its artifact that is itself a valid config.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .classical import (DEFAULT_PATH_BUDGET, equivalence_classes, trajectory_counts,
                        transition_matrix)
from .egorov import egorov_scaling
from .errors import ConfigError, NumericalFailure, QGMapsError
from .interval_map import load_map, validate_map
from .metric_graph import alternating_observable, check_variance_relation, random_graph
from .observables import Cosine, Constant, Linear, observable_from_dict, quantize_observable
from .partitioning import build_partition
from .quantizer import MODULUS_TOL, UNITARITY_TOL, quantize, random_phase_ensemble
from .report import dumps, emit_report, relation_table
from .spectral import (IDENTITY_TOL, diagonal_K, eigenbasis, majorant_curve, qe_sweep,
                       quantum_moments)

COMMANDS = ("validate", "dump-b", "quantize", "sweep", "egorov", "oracle", "metric-check")

DEFAULT_TOLERANCES = {
    "unitarity": UNITARITY_TOL,
    "modulus": MODULUS_TOL,
    "identity": IDENTITY_TOL,
    "mean": 1e-10,
}


@dataclass
class ExperimentConfig:
    command: str
    map: object = None
    observable: object = None
    level: int | None = None
    levels: list | None = None
    T_rule: object = "n"
    T_max: int | None = None
    seed: int = 0
    scheme: str = "fourier"
    random_phases: bool = False
    diag_T_max: int | None = None
    budget: int = DEFAULT_PATH_BUDGET
    bonds: int = 4
    lambda_max_spacings: list = field(default_factory=lambda: [200.0])
    out: str | None = None
    format: str = "csv"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {COMMANDS}")
        if self.seed is None:
            self.seed = 0
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.format not in ("csv", "json", "npz"):
            raise ConfigError(f"unknown format {self.format!r}")
        if isinstance(self.levels, str):
            self.levels = parse_levels(self.levels)
        if isinstance(self.lambda_max_spacings, (int, float)):
            self.lambda_max_spacings = [float(self.lambda_max_spacings)]
        for key, value in self.tolerances.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {key!r}")
            if not float(value) <= DEFAULT_TOLERANCES[key]:
                raise ConfigError(
                    f"tolerance {key}={value} would loosen the default {DEFAULT_TOLERANCES[key]}"
                )

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = [k for k in data if k not in known and not k.startswith("_")]
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "command" not in data:
            raise ConfigError("config needs a 'command'")
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_levels(text: str) -> list[int]:
    """``"1..8"``, ``"1,3,5"`` or ``"4"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse levels {text!r}") from exc


def parse_observable(spec):
    if spec is None:
        raise ConfigError("this command needs an observable (--obs)")
    if isinstance(spec, dict):
        return observable_from_dict(spec)
    text = str(spec)
    shorthands = {"cosine": Cosine(1), "linear": Linear(), "constant": Constant(Fraction(1))}
    if text in shorthands:
        return shorthands[text]
    if text.lstrip().startswith("{"):
        return observable_from_dict(json.loads(text))
    path = Path(text)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read observable {text}: {exc}") from exc
    return observable_from_dict(data, base_dir=path.parent)


def _map(cfg):
    if cfg.map is None:
        raise ConfigError("this command needs a map (--map)")
    return load_map(cfg.map)


def _level(cfg) -> int:
    if cfg.level is None:
        raise ConfigError("this command needs --level")
    return int(cfg.level)


def _levels(cfg) -> list[int]:
    if not cfg.levels:
        raise ConfigError("this command needs --levels")
    return [int(n) for n in cfg.levels]


# -- pipelines -------------------------------------------------------------------

def _run_validate(cfg):
    report = validate_map(_map(cfg))
    fmt = cfg.format if cfg.format != "npz" else "json"
    status = 0 if report.ok else ConfigError.exit_code
    return emit_report(report, fmt), status


def _propagator(cfg, smap, n):
    partition = build_partition(smap, n)
    B = transition_matrix(smap, partition)
    U = quantize(B, equivalence_classes(B), cfg.scheme)
    if cfg.random_phases:
        U = random_phase_ensemble(U, cfg.seed, 1, B=B)[0]
    if U.unitarity_residual > cfg.tol("unitarity"):
        raise NumericalFailure("unitarity residual above the requested tolerance",
                               residual=U.unitarity_residual)
    if U.modulus_residual > cfg.tol("modulus"):
        raise NumericalFailure("modulus residual above the requested tolerance",
                               residual=U.modulus_residual)
    return partition, B, U


def _run_dump_b(cfg):
    smap = _map(cfg)
    B = transition_matrix(smap, build_partition(smap, _level(cfg)))
    return emit_report(B, "json" if cfg.format == "json" else "csv"), 0


def _run_quantize(cfg):
    _, _, U = _propagator(cfg, _map(cfg), _level(cfg))
    if cfg.format == "npz":
        buf = io.BytesIO()
        coo = U.sparse.tocoo()
        np.savez(buf, row=coo.row, col=coo.col, data=coo.data, shape=np.array(coo.shape))
        return buf.getvalue(), 0
    return emit_report(U, cfg.format), 0


def _run_sweep(cfg):
    smap = _map(cfg)
    spec = parse_observable(cfg.observable)
    reports = qe_sweep(smap, spec, _levels(cfg), T_rule=cfg.T_rule, scheme=cfg.scheme,
                       seed=cfg.seed if cfg.random_phases else None,
                       diag_T_max=cfg.diag_T_max, budget=cfg.budget)
    tol = cfg.tol("identity")
    for r in reports:
        if abs(r.quantum_mean - r.classical_mean) > cfg.tol("mean"):
            raise NumericalFailure(f"n={r.level}: quantum mean misses the classical mean")
        for T, K in r.K_curve.items():
            if r.variance > K + tol:
                raise NumericalFailure(f"n={r.level}: V_n exceeds K(n,{T})")
    return emit_report(reports, "json" if cfg.format == "json" else "csv"), 0


def _run_egorov(cfg):
    result = egorov_scaling(_map(cfg), parse_observable(cfg.observable), _levels(cfg),
                            scheme=cfg.scheme)
    return emit_report(result, "json" if cfg.format == "json" else "csv"), 0


def _run_oracle(cfg):
    """Exact structural checks plus the exactness window at one level."""
    smap = _map(cfg)
    n = _level(cfg)
    partition, B, U = _propagator(cfg, smap, n)
    checks = {}
    checks["row_sums_exact"] = all(s == 1 for s in B.row_sums())
    checks["column_sums_exact"] = all(s == 1 for s in B.column_sums())
    max_paths = 0
    for T in range(1, n + 1):
        counts = trajectory_counts(B, T)
        max_paths = max(max_paths, int(counts.max()) if counts.nnz else 0)
    checks["unique_trajectories"] = max_paths <= 1
    classes = equivalence_classes(B)
    checks["max_class_size"] = classes.max_size
    out = {"level": n, "M": partition.atom_count, "checks": checks}
    if cfg.observable is not None:
        spec = parse_observable(cfg.observable)
        O = quantize_observable(spec, partition)
        mean, V, _ = quantum_moments(eigenbasis(U), O)
        T_max = cfg.T_max or max(n, 1)
        K = majorant_curve(U, O, T_max)
        window = []
        for T in range(1, T_max + 1):
            Kd = diagonal_K(U, O, T, budget=cfg.budget)
            window.append({"T": T, "K": float(K[T - 1]), "K_diag": Kd,
                           "gap": abs(float(K[T - 1]) - Kd)})
        checks["mean_identity"] = abs(mean - O.mean) <= cfg.tol("mean")
        checks["majorant"] = all(V <= w["K"] + cfg.tol("identity") for w in window)
        checks["exactness_window"] = all(w["gap"] <= cfg.tol("identity")
                                         for w in window if w["T"] <= n)
        out.update({"quantum_mean": mean, "classical_mean": O.mean, "V_n": V, "window": window})
    failed = [k for k, v in checks.items() if v is False]
    out["passed"] = not failed
    return dumps(out).encode(), (NumericalFailure.exit_code if failed else 0)


def _run_metric_check(cfg):
    g = random_graph(cfg.bonds, cfg.seed)
    A = alternating_observable(cfg.bonds)
    reports = [check_variance_relation(g, A, k * g.mean_spacing)
               for k in cfg.lambda_max_spacings]
    table = relation_table(reports)
    return emit_report(table, "json" if cfg.format == "json" else "csv"), 0


PIPELINES = {
    "validate": _run_validate,
    "dump-b": _run_dump_b,
    "quantize": _run_quantize,
    "sweep": _run_sweep,
    "egorov": _run_egorov,
    "oracle": _run_oracle,
    "metric-check": _run_metric_check,
}


def _manifest(cfg, wall_time, artifact):
    data = cfg.to_dict()
    data["_run"] = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg.seed,
        "wall_time_s": round(wall_time, 6),
        "artifact": artifact,
    }
    return json.dumps(data, indent=2, sort_keys=True, default=str) + "\n"


def run(cfg: ExperimentConfig, stdout=None) -> int:
    """Execute one pipeline, write its artifacts and return the exit status."""
    stdout = stdout or sys.stdout
    start = time.perf_counter()
    payload, status = PIPELINES[cfg.command](cfg)
    wall = time.perf_counter() - start
    if cfg.out:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(payload)
        Path(str(out) + ".manifest.json").write_text(_manifest(cfg, wall, str(out)))
    else:
        if isinstance(payload, bytes):
            try:
                stdout.write(payload.decode())
            except UnicodeDecodeError:
                raise ConfigError("binary output needs --out")
    return status


# -- argument parsing ---------------------------------------------------------------

def _add_common(p, *, needs_map=True, needs_obs=False, level=False, levels=False):
    if needs_map:
        p.add_argument("--map", required=True, help="fixture name (doubling, tent) or JSON file")
    if needs_obs:
        p.add_argument("--obs", required=True,
                       help="observable: JSON file, inline JSON or cosine/linear/constant")
    if level:
        p.add_argument("--level", type=int, required=True)
    if levels:
        p.add_argument("--levels", required=True, help="e.g. 1..8 or 1,2,3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json", "npz"), default="csv")
    p.add_argument("--tolerance", action="append", default=[], metavar="NAME=VALUE",
                   help="tighten a default tolerance (unitarity, modulus, identity, mean)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgmaps", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a JSON experiment config (or a manifest)")
    p.add_argument("config")

    _add_common(sub.add_parser("validate", help="check the map assumptions"))
    _add_common(sub.add_parser("dump-b", help="export B as (row, col, p/q) CSV"), level=True)

    p = sub.add_parser("quantize", help="build the unitary propagator")
    _add_common(p, level=True)
    p.add_argument("--scheme", choices=("fourier",), default="fourier")
    p.add_argument("--random-phases", action="store_true")

    p = sub.add_parser("sweep", help="quantum variance and majorant over levels")
    _add_common(p, needs_obs=True, levels=True)
    p.add_argument("--T-rule", dest="T_rule", default="n", help="'n' or a fixed integer T")
    p.add_argument("--scheme", choices=("fourier",), default="fourier")
    p.add_argument("--random-phases", action="store_true")
    p.add_argument("--diag-T-max", dest="diag_T_max", type=int)
    p.add_argument("--budget", type=int, default=DEFAULT_PATH_BUDGET)

    p = sub.add_parser("egorov", help="Egorov defect and its scaling with M")
    _add_common(p, needs_obs=True, levels=True)

    p = sub.add_parser("oracle", help="exact structural checks at one level")
    _add_common(p, level=True)
    p.add_argument("--obs")
    p.add_argument("--T-max", dest="T_max", type=int)
    p.add_argument("--budget", type=int, default=DEFAULT_PATH_BUDGET)

    p = sub.add_parser("metric-check", help="spectral vs averaged variance on a metric graph")
    _add_common(p, needs_map=False)
    p.add_argument("--bonds", type=int, default=4)
    p.add_argument("--lambda-max-spacings", dest="lambda_max_spacings", default="200",
                   help="comma-separated multiples of the mean level spacing")
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.command == "run":
        return ExperimentConfig.from_json(args.config)
    data = {"command": args.command}
    for name in ("map", "level", "levels", "T_rule", "T_max", "seed", "scheme", "random_phases",
                 "diag_T_max", "budget", "bonds", "out", "format"):
        if hasattr(args, name) and getattr(args, name) is not None:
            data[name] = getattr(args, name)
    if getattr(args, "obs", None) is not None:
        data["observable"] = args.obs
    if getattr(args, "lambda_max_spacings", None) is not None:
        try:
            data["lambda_max_spacings"] = [float(x) for x in args.lambda_max_spacings.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --lambda-max-spacings {args.lambda_max_spacings!r}") from exc
    tolerances = {}
    for item in getattr(args, "tolerance", []):
        name, _, value = item.partition("=")
        try:
            tolerances[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad tolerance {item!r}") from exc
    data["tolerances"] = tolerances
    if isinstance(data.get("T_rule"), str) and data["T_rule"].isdigit():
        data["T_rule"] = int(data["T_rule"])
    return ExperimentConfig.from_dict(data)


def _limit_threads():
    threads = os.environ.get("QGMAPS_THREADS")
    if not threads:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(int(threads))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _limit_threads()
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except QGMapsError as exc:
        err = exc.to_dict()
        err["exit_code"] = exc.exit_code
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
