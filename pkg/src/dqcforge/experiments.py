"""Config-driven experiment runners and their result tables.

Every command turns an :class:`ExperimentConfig` and a base seed into a list
of independent jobs, runs them (optionally in a process pool), and returns a
:class:`ResultTable` in long format: one row per (configuration, metric,
seed).  Rows carry the hash of the canonical config so tables from different
configs can share a file without ambiguity.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .circuit import make_ansatz, positions_from_gaps
from .lut import (TrainConfig, greedy_ancilla_search, static_config, sweep_train,
                  train_best_of)
from .mps import (MPS, entanglement_entropy, make_ghz, make_random_mps, make_subset_state,
                  tfi_ground_state)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COLUMNS = ("schema", "config_hash", "command", "configuration", "metric", "value", "seed")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


# ---- configuration -------------------------------------------------------------------

TARGET_CLASSES = ("tfi_critical", "random_mps", "subset", "ghz")


@dataclass
class TargetSpec:
    cls: str = "tfi_critical"
    n: int = 8
    chi: int = 4
    k: int = 2
    g: float = 1.0
    seed: int = 0
    indices: list | None = None


@dataclass
class AnsatzSpec:
    depth: int = 4
    r: int = 2
    placement: Any = "greedy"
    depth_post: int = 1


@dataclass
class OptimizerSpec:
    method: str = "env"
    tol: float = 1e-9
    max_sweeps: int = 200
    repeats: int = 10
    learning_rates: list = field(default_factory=lambda: [0.01, 0.1, 1.0])
    backend: str = "auto"


COMMAND_PARAMS: dict[str, dict] = {
    "compare": {"classes": None, "ns": None, "rs": None},
    "scan-ancillae": {"ns": [6, 8, 10], "depths": [2, 3, 4], "count_ns": [8], "r_max": 3},
    "purity-trace": {"ns": [4, 5, 6, 7, 8, 9], "rs": [1, 2], "seeds": 10},
    "gd-vs-env": {"gaps": [0, 8], "seeds": 10, "steps": 50},
    "scaling": {"tfi_ns": [4, 6, 8, 10], "subset_ns": [3, 4, 5, 6], "samples": 50,
                "subset_depth": 2, "threshold": 0.999, "depth_cap": None,
                "exhaustive_ns": [4]},
    "nn-train": {"n": 6, "widths": [8, 64], "seeds": 1, "epochs": 3000, "batch_size": 64,
                 "learning_rate": 0.01, "lr_final": 0.1, "optimizer": "adam",
                 "init_scale": 1.0, "output_scale": 10.0, "eval_every": 1},
    "realtime": {"n": 50, "shots": 5, "max_sweeps": 10, "tol": 1e-12, "depth_post": 0,
                 "restart": "neutral"},
}
COMMANDS = tuple(COMMAND_PARAMS)
ENV_ONLY = ("compare", "scan-ancillae", "purity-trace", "scaling")


@dataclass
class ExperimentConfig:
    experiment: str
    target: TargetSpec = field(default_factory=TargetSpec)
    ansatz: AnsatzSpec = field(default_factory=AnsatzSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "target": dataclasses.asdict(self.target),
                "ansatz": dataclasses.asdict(self.ansatz),
                "optimizer": dataclasses.asdict(self.optimizer), "params": dict(self.params)}

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _section(cls, raw, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    raw = dict(raw)
    if name == "target" and "class" in raw:
        raw["cls"] = raw.pop("class")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    defaults = cls()
    for key, val in raw.items():
        ref = getattr(defaults, key)
        if isinstance(ref, bool) or ref is None or isinstance(ref, (str, list)) or key == "placement":
            continue
        if isinstance(ref, int) and not (isinstance(val, int) and not isinstance(val, bool)):
            raise ConfigError(f"{name}.{key} must be an integer, got {val!r}")
        if isinstance(ref, float) and not (isinstance(val, (int, float)) and not isinstance(val, bool)):
            raise ConfigError(f"{name}.{key} must be a number, got {val!r}")
    return cls(**raw)


def _validate(cfg: ExperimentConfig) -> None:
    t, a, o = cfg.target, cfg.ansatz, cfg.optimizer
    if t.cls not in TARGET_CLASSES:
        raise ConfigError(f"target.class must be one of {TARGET_CLASSES}, got {t.cls!r}")
    if t.n < 1 or t.chi < 1 or t.k < 1:
        raise ConfigError("target.n, target.chi and target.k must be positive")
    if t.cls == "subset" and t.indices is None and t.k > 2**t.n:
        raise ConfigError(f"target.k={t.k} exceeds 2^n")
    if a.depth < 0 or a.r < 0 or a.depth_post < 0:
        raise ConfigError("ansatz.depth, ansatz.r and ansatz.depth_post must be >= 0")
    if a.placement != "greedy":
        if not isinstance(a.placement, list) or not all(isinstance(g, int) for g in a.placement):
            raise ConfigError("ansatz.placement must be 'greedy' or a list of integer gaps")
        if any(not 0 <= g <= t.n for g in a.placement):
            raise ConfigError(f"ansatz.placement gaps must lie in 0..{t.n}")
    if o.method not in ("env", "gd"):
        raise ConfigError("optimizer.method must be 'env' or 'gd'")
    if o.method == "gd" and cfg.experiment in ENV_ONLY:
        raise ConfigError(f"{cfg.experiment} trains with the environment method only; "
                          "gradient descent runs through gd-vs-env")
    if o.tol < 0 or o.max_sweeps < 0 or o.repeats < 1:
        raise ConfigError("optimizer.tol >= 0, max_sweeps >= 0 and repeats >= 1 required")
    if o.backend not in ("auto", "mps", "dense"):
        raise ConfigError("optimizer.backend must be auto, mps or dense")
    if not isinstance(o.learning_rates, list) or not o.learning_rates:
        raise ConfigError("optimizer.learning_rates must be a nonempty list")
    p = cfg.params
    if cfg.experiment in ("realtime", "nn-train") and p["n"] < 2:
        raise ConfigError("params.n must be >= 2 for the GHZ-patch circuit")
    if cfg.experiment == "realtime" and p["restart"] not in ("neutral", "random", "none"):
        raise ConfigError("params.restart must be neutral, random or none")
    if cfg.experiment == "nn-train" and p["optimizer"] not in ("adam", "sgd"):
        raise ConfigError("params.optimizer must be adam or sgd")
    if cfg.experiment == "compare":
        if a.placement != "greedy" and max(p["rs"], default=0) > len(a.placement):
            raise ConfigError("params.rs asks for more ancillae than ansatz.placement lists")
        for c in p["classes"]:
            if c not in TARGET_CLASSES:
                raise ConfigError(f"unknown class {c!r} in params.classes")


# params whose default is null: type of the value (or of its list entries)
_NULLABLE = {"classes": "string", "ns": "integer", "rs": "integer", "depth_cap": "int"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_param(exp: str, key: str, val, ref) -> None:
    """Type of ``params.key`` must match its default; counts must be non-negative."""
    where = f"params.{key} ({exp})"
    if ref is None:
        if val is None:
            return
        kind = _NULLABLE[key]
        if kind == "int":
            if not _is_int(val) or val < 0:
                raise ConfigError(f"{where} must be a non-negative integer or null, got {val!r}")
            return
        if kind == "string":
            item_ok = lambda x: isinstance(x, str)  # noqa: E731
        else:
            item_ok = lambda x: _is_int(x) and x >= 0  # noqa: E731
        if not isinstance(val, list) or not all(item_ok(x) for x in val):
            raise ConfigError(f"{where} must be a list of {kind}s or null, got {val!r}")
        return
    if isinstance(ref, list):
        if not isinstance(val, list):
            raise ConfigError(f"{where} must be a list, got {val!r}")
        if all(_is_int(x) for x in ref) and not all(_is_int(x) and x >= 0 for x in val):
            raise ConfigError(f"{where} must hold non-negative integers, got {val!r}")
    elif isinstance(ref, str):
        if not isinstance(val, str):
            raise ConfigError(f"{where} must be a string, got {val!r}")
    elif _is_int(ref):
        if not _is_int(val) or val < 0:
            raise ConfigError(f"{where} must be a non-negative integer, got {val!r}")
    elif isinstance(ref, float):
        if not (_is_int(val) or isinstance(val, float)) or val < 0:
            raise ConfigError(f"{where} must be a non-negative number, got {val!r}")


def config_from_dict(raw: dict, command: str | None = None) -> ExperimentConfig:
    """Build and validate a config; ``command`` (from the CLI) wins over ``experiment``."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    allowed = {"experiment", "target", "ansatz", "optimizer", "params"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    exp = raw.get("experiment", command)
    if command is not None and exp != command:
        raise ConfigError(f"config is for {exp!r} but command is {command!r}")
    if exp not in COMMAND_PARAMS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {COMMANDS}")
    target = _section(TargetSpec, raw.get("target"), "target")
    ansatz = _section(AnsatzSpec, raw.get("ansatz"), "ansatz")
    opt = _section(OptimizerSpec, raw.get("optimizer"), "optimizer")
    given = raw.get("params") or {}
    if not isinstance(given, dict):
        raise ConfigError("section 'params' must be a mapping")
    defaults = COMMAND_PARAMS[exp]
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown params for {exp}: {sorted(unknown)}")
    for key, val in given.items():
        _check_param(exp, key, val, defaults[key])
    params = {**defaults, **given}
    if exp == "compare":
        params["classes"] = params["classes"] or [target.cls]
        params["ns"] = params["ns"] or [target.n]
        if params["rs"] is None:
            params["rs"] = list(range(1, ansatz.r + 1))
    cfg = ExperimentConfig(exp, target, ansatz, opt, params)
    _validate(cfg)
    return cfg


def load_config(path, command: str | None = None) -> ExperimentConfig:
    """Read a YAML (or JSON, which YAML accepts) config file."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML/JSON: {e}") from e
    try:
        return config_from_dict(raw, command)
    except TypeError as e:
        raise ConfigError(str(e)) from e


# ---- result table --------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def configuration(**kw) -> str:
    """Canonical ``key=value;...`` label in the given key order."""
    return ";".join(f"{k}={v}" for k, v in kw.items())


def parse_configuration(text: str) -> dict:
    return dict(item.split("=", 1) for item in text.split(";") if item)


@dataclass
class ResultTable:
    command: str
    config_hash: str
    rows: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def add(self, config: str, metric: str, value, seed=None) -> None:
        self.rows.append((config, metric, _fmt(value), "" if seed is None else str(int(seed))))

    def extend(self, other: ResultTable) -> None:
        self.rows.extend(other.rows)
        for k, v in other.flags.items():
            self.flags[k] = self.flags.get(k, False) or v

    def records(self) -> list[dict]:
        return [dict(zip(COLUMNS, (str(SCHEMA_VERSION), self.config_hash, self.command) + r))
                for r in self.rows]

    def values(self, metric: str, **match) -> list[tuple[dict, float]]:
        out = []
        for cfg, m, v, seed in self.rows:
            if m != metric:
                continue
            c = parse_configuration(cfg)
            if all(c.get(k) == str(val) for k, val in match.items()):
                out.append((c, float(v)))
        return out

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(COLUMNS)
        for rec in self.records():
            w.writerow([rec[c] for c in COLUMNS])
        return buf.getvalue()

    def append_to(self, path) -> int:
        """Append rows not already present; never rewrites existing lines.

        A row is identified by ``(config_hash, configuration, metric, seed)``.
        Rows already on disk are kept as they are; if a rerun produced a
        different value for an existing key the new value is skipped and a
        warning is logged.  Returns the number of rows appended.
        """
        path = Path(path)
        existing: dict = {}
        if path.exists() and path.stat().st_size:
            with path.open(newline="") as fh:
                reader = csv.reader(fh)
                head = next(reader)
                if tuple(head) != COLUMNS:
                    raise ValueError(f"{path} has columns {head}, expected {list(COLUMNS)}")
                for row in reader:
                    rec = dict(zip(COLUMNS, row))
                    existing[(rec["config_hash"], rec["configuration"], rec["metric"],
                              rec["seed"])] = rec["value"]
        new = []
        for rec in self.records():
            key = (rec["config_hash"], rec["configuration"], rec["metric"], rec["seed"])
            if key in existing:
                if existing[key] != rec["value"]:
                    log.warning("kept existing row %s (new value %s differs)", key, rec["value"])
                continue
            existing[key] = rec["value"]
            new.append(rec)
        write_header = not path.exists() or path.stat().st_size == 0
        with path.open("a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if write_header:
                w.writerow(COLUMNS)
            for rec in new:
                w.writerow([rec[c] for c in COLUMNS])
        return len(new)


def read_table(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# Metrics each command may emit, and the configuration keys each metric's rows carry.
SCHEMAS: dict[str, dict[str, tuple]] = {
    "compare": {
        "infidelity": ("class", "n", "depth", "r", "gaps"),
        "ratio_to_static": ("class", "n", "depth", "r", "gaps"),
        "converged": ("class", "n", "depth", "r", "gaps"),
    },
    "scan-ancillae": {
        "infidelity_vs_n": ("n", "depth", "r", "gaps"),
        "infidelity_vs_r": ("n", "depth", "r", "gaps"),
        "flatness_ratio": ("depth",),
    },
    "purity-trace": {"purity": ("n", "r", "update")},
    "gd-vs-env": {
        "infidelity": ("method", "eta", "iteration"),
        "nonmonotone": ("method", "eta"),
        "diverged": ("method", "eta"),
    },
    "scaling": {
        "preparation_depth": ("n",),
        "depth_cap_hit": ("n",),
        "entanglement_depth": ("n",),
        "max_entropy": ("n",),
        "subset_fraction": ("n", "depth", "mode"),
        "subset_count": ("n", "depth", "mode"),
    },
    "nn-train": {
        "eval_loss": ("n", "width", "epoch"),
        "batch_loss": ("n", "width", "epoch"),
        "final_eval_loss": ("n", "width"),
        "diverged": ("n", "width"),
    },
    "realtime": {
        "sweep_overlap": ("n", "shot", "sweep"),
        "fidelity": ("n", "shot"),
        "sweeps": ("n", "shot"),
        "converged": ("n", "shot"),
        "pauli_deviation": ("n", "shot"),
        "matches_stabilizer": ("n", "shot"),
    },
}


def validate_schema(table: ResultTable) -> None:
    """Raise ``ValueError`` if a row uses an undocumented metric or configuration layout."""
    schema = SCHEMAS[table.command]
    for cfg, metric, _, _ in table.rows:
        if metric not in schema:
            raise ValueError(f"{table.command}: undocumented metric {metric!r}")
        keys = tuple(parse_configuration(cfg))
        if keys != schema[metric]:
            raise ValueError(f"{table.command}/{metric}: configuration keys {keys} != "
                             f"{schema[metric]}")


# ---- targets -------------------------------------------------------------------------

def make_target(spec: TargetSpec, n: int | None = None, cls: str | None = None) -> MPS:
    n = spec.n if n is None else n
    cls = spec.cls if cls is None else cls
    if cls == "tfi_critical":
        return tfi_ground_state(n, spec.g)
    if cls == "random_mps":
        return make_random_mps(n, spec.chi, spec.seed)
    if cls == "subset":
        if spec.indices is not None and n == spec.n:
            return make_subset_state(n, indices=spec.indices)
        return make_subset_state(n, spec.k, spec.seed)
    if cls == "ghz":
        return make_ghz(n)
    raise ConfigError(f"unknown target class {cls!r}")


def entanglement_depth(s: MPS) -> tuple[int, float]:
    """``ceil`` of the largest bipartite entropy in ebits, and that entropy."""
    s_max = max((entanglement_entropy(s, c) for c in range(1, s.n)), default=0.0)
    return int(math.ceil(s_max - 1e-9)), s_max


def _train_config(cfg: ExperimentConfig, seed=None) -> TrainConfig:
    o = cfg.optimizer
    return TrainConfig(max_sweeps=o.max_sweeps, tol=o.tol, depth_post=cfg.ansatz.depth_post,
                       seed=seed, record_purity=False, backend=o.backend)


def _repeat_seeds(cfg: ExperimentConfig, seed: int) -> list[int]:
    return [seed + i for i in range(cfg.optimizer.repeats)]


def _gaps_label(gaps) -> str:
    return "-".join(str(g) for g in gaps) if gaps else "none"


# ---- jobs ----------------------------------------------------------------------------

def run_jobs(fn: Callable, jobs: Sequence[tuple], n_jobs: int = 1,
             staging: Path | None = None) -> list:
    """Run ``fn(*job)`` for every job, in order; ``n_jobs > 1`` uses a process pool.

    With a ``staging`` directory each finished job's rows are also written to
    ``staging/job-XXXX.csv`` before the merge, so a crash leaves partial results.
    """
    if n_jobs <= 1 or len(jobs) <= 1:
        results = [fn(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(fn, *job) for job in jobs]
            results = [f.result() for f in futures]
    if staging is not None:
        staging.mkdir(parents=True, exist_ok=True)
        for i, res in enumerate(results):
            tab = res[0] if isinstance(res, tuple) else res
            (staging / f"job-{i:04d}.csv").write_text(tab.to_csv())
    return results


def _merge(command: str, h: str, parts: Sequence[ResultTable]) -> ResultTable:
    table = ResultTable(command, h)
    for p in parts:
        table.extend(p)
    return table


# compare -------------------------------------------------------------------------------

def _compare_job(cfg: ExperimentConfig, h: str, cls: str, n: int, seed: int) -> ResultTable:
    out = ResultTable("compare", h)
    target = make_target(cfg.target, n, cls)
    depth = cfg.ansatz.depth
    tcfg = _train_config(cfg)
    seeds = _repeat_seeds(cfg, seed)
    r_max = max(cfg.params["rs"], default=0)
    if cfg.ansatz.placement == "greedy":
        _, trace = greedy_ancilla_search(target, r_max, depth, tcfg, seeds)
        results = {st.r: (st.gaps, st.infidelity, True) for st in trace}
    else:
        results = {}
        static = train_best_of(lambda s: make_ansatz(n, depth, (), seed=s), target, seeds,
                               static_config(tcfg))
        results[0] = ((), static.final_infidelity, static.converged)
        for r in cfg.params["rs"]:
            gaps = tuple(cfg.ansatz.placement[:r])
            pos = positions_from_gaps(gaps)
            rep = train_best_of(lambda s: make_ansatz(n, depth, pos, seed=s), target, seeds, tcfg)
            results[r] = (gaps, rep.final_infidelity, rep.converged)
    base = results[0][1]
    for r in [0] + [r for r in cfg.params["rs"] if r in results]:
        gaps, inf, conv = results[r]
        label = configuration(**{"class": cls}, n=n, depth=depth, r=r, gaps=_gaps_label(gaps))
        out.add(label, "infidelity", inf, seed)
        out.add(label, "ratio_to_static", inf / base if base > 0 else float("nan"), seed)
        out.add(label, "converged", conv, seed)
        if not conv:
            out.flags["nonconverged"] = True
    return out


def cmd_compare(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                staging: Path | None = None) -> ResultTable:
    """Static vs few-ancilla DQC infidelity at fixed depth, best over repeats."""
    h = cfg.hash()
    jobs = [(cfg, h, c, n, seed) for c in cfg.params["classes"] for n in cfg.params["ns"]]
    return _merge("compare", h, run_jobs(_compare_job, jobs, n_jobs, staging))


# scan-ancillae -------------------------------------------------------------------------

def _scan_n_job(cfg, h, n, depth, seed) -> ResultTable:
    out = ResultTable("scan-ancillae", h)
    target = make_target(cfg.target, n, "tfi_critical")
    _, trace = greedy_ancilla_search(target, 1, depth, _train_config(cfg), _repeat_seeds(cfg, seed))
    for st in trace:
        out.add(configuration(n=n, depth=depth, r=st.r, gaps=_gaps_label(st.gaps)),
                "infidelity_vs_n", st.infidelity, seed)
    return out


def _scan_r_job(cfg, h, n, seed) -> ResultTable:
    out = ResultTable("scan-ancillae", h)
    target = make_target(cfg.target, n, "tfi_critical")
    depth = cfg.ansatz.depth
    _, trace = greedy_ancilla_search(target, cfg.params["r_max"], depth, _train_config(cfg),
                                     _repeat_seeds(cfg, seed))
    for st in trace:
        out.add(configuration(n=n, depth=depth, r=st.r, gaps=_gaps_label(st.gaps)),
                "infidelity_vs_r", st.infidelity, seed)
    return out


def cmd_scan_ancillae(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                      staging: Path | None = None) -> ResultTable:
    """Critical TFI: one-ancilla infidelity over n x depth, and over ancilla count."""
    h = cfg.hash()
    p = cfg.params
    jobs_n = [(cfg, h, n, d, seed) for d in p["depths"] for n in p["ns"]]
    jobs_r = [(cfg, h, n, seed) for n in p["count_ns"]]
    parts = run_jobs(_scan_n_job, jobs_n, n_jobs, staging)
    parts += run_jobs(_scan_r_job, jobs_r, n_jobs, staging and staging / "count")
    table = _merge("scan-ancillae", h, parts)
    for d in p["depths"]:
        vals = [v for c, v in table.values("infidelity_vs_n", depth=d, r=1)]
        if vals and min(vals) > 0:
            table.add(configuration(depth=d), "flatness_ratio", max(vals) / min(vals), seed)
    return table


# purity-trace --------------------------------------------------------------------------

def default_gaps(n: int, r: int) -> tuple:
    """Evenly spread ancilla gaps strictly inside the chain."""
    return tuple(int(round((i + 1) * n / (r + 1))) for i in range(r))


def purity_trace(n: int, r: int, depth: int, seed: int, target: MPS,
                 backend: str = "auto") -> list[float]:
    """Purity before and after each pre-gate update of the first sweep (random init)."""
    a = make_ansatz(n, depth, positions_from_gaps(default_gaps(n, r)), seed=seed)
    cfg = TrainConfig(max_sweeps=1, tol=0.0, seed=seed, trace_updates=True, backend=backend,
                      decoder_init="random")
    rep = sweep_train(a, target, cfg)
    return [rep.purity[0]] + list(rep.update_purity)


def _purity_job(cfg, h, n, r, seed) -> ResultTable:
    out = ResultTable("purity-trace", h)
    target = make_target(cfg.target, n)
    for i, p in enumerate(purity_trace(n, r, cfg.ansatz.depth, seed, target, cfg.optimizer.backend)):
        out.add(configuration(n=n, r=r, update=i), "purity", p, seed)
    return out


def cmd_purity_trace(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                     staging: Path | None = None) -> ResultTable:
    h = cfg.hash()
    p = cfg.params
    jobs = [(cfg, h, n, r, seed + s) for n in p["ns"] for r in p["rs"] for s in range(p["seeds"])]
    return _merge("purity-trace", h, run_jobs(_purity_job, jobs, n_jobs, staging))


# gd-vs-env -----------------------------------------------------------------------------

def _nonmonotone(series: Sequence[float]) -> bool:
    return any(b > a + 1e-12 for a, b in zip(series, series[1:]))


def gd_vs_env(n: int, depth: int, gaps: Sequence[int], seed: int, steps: int,
              learning_rates: Sequence[float], max_sweeps: int = 50, tol: float = 0.0,
              target: MPS | None = None, backend: str = "auto") -> dict:
    """Infidelity traces of the environment method and of GD from a shared start.

    Both methods start from the same KAK-parameterized gates (GD angles drawn
    from ``seed``), so iteration 0 agrees.  Returns ``{"env": report,
    eta: report, ...}``.
    """
    from .gd import gd_baseline, kak_ansatz

    target = make_ghz(n) if target is None else target
    base = make_ansatz(n, depth, positions_from_gaps(tuple(gaps)), seed=seed)
    a, params = kak_ansatz(base, 1, seed)
    env = sweep_train(a, target, TrainConfig(max_sweeps=max_sweeps, tol=tol, seed=seed,
                                             record_purity=False, backend=backend))
    out = {"env": env}
    for eta in learning_rates:
        out[eta] = gd_baseline(a, target, eta, steps, params=params, seed=seed, backend=backend)
    return out


def _gd_job(cfg, h, seed) -> ResultTable:
    out = ResultTable("gd-vs-env", h)
    p = cfg.params
    n = cfg.target.n
    res = gd_vs_env(n, cfg.ansatz.depth, p["gaps"], seed, p["steps"], cfg.optimizer.learning_rates,
                    p["steps"], 0.0, make_target(cfg.target, n), cfg.optimizer.backend)
    for key, rep in res.items():
        method, eta = ("env", "none") if key == "env" else ("gd", key)
        for i, v in enumerate(rep.infidelity):
            out.add(configuration(method=method, eta=eta, iteration=i), "infidelity", v, seed)
        out.add(configuration(method=method, eta=eta), "nonmonotone",
                _nonmonotone(rep.infidelity), seed)
        out.add(configuration(method=method, eta=eta), "diverged",
                bool(rep.flags.get("diverged", False)), seed)
    return out


def cmd_gd_vs_env(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                  staging: Path | None = None) -> ResultTable:
    h = cfg.hash()
    jobs = [(cfg, h, seed + s) for s in range(cfg.params["seeds"])]
    return _merge("gd-vs-env", h, run_jobs(_gd_job, jobs, n_jobs, staging))


# scaling -------------------------------------------------------------------------------

def best_static_fidelity(target: MPS, depth: int, seeds: Sequence[int], max_sweeps: int = 200,
                         tol: float = 1e-9, backend: str = "auto", stop_at: float | None = None
                         ) -> float:
    """Highest trained static-circuit fidelity over ``seeds`` (early exit at ``stop_at``)."""
    best = 0.0
    for s in seeds:
        rep = sweep_train(make_ansatz(target.n, depth, (), seed=s), target,
                          TrainConfig(max_sweeps=max_sweeps, tol=tol, depth_post=0, seed=s,
                                      record_purity=False, backend=backend))
        best = max(best, 1.0 - rep.final_infidelity)
        if stop_at is not None and best >= stop_at:
            break
    return best


def preparation_depth(target: MPS, threshold: float, seeds: Sequence[int], cap: int | None = None,
                      max_sweeps: int = 200, tol: float = 1e-9, backend: str = "auto"
                      ) -> tuple[int, bool]:
    """Smallest brickwork depth reaching ``threshold`` fidelity; ``(cap, True)`` if none does."""
    cap = 2 * target.n if cap is None else cap
    for d in range(1, cap + 1):
        if best_static_fidelity(target, d, seeds, max_sweeps, tol, backend, threshold) >= threshold:
            return d, False
    return cap, True


def subset_preparable(n: int, indices: Sequence[int], depth: int, threshold: float,
                      seeds: Sequence[int], max_sweeps: int = 200, tol: float = 1e-9,
                      backend: str = "auto") -> bool:
    target = make_subset_state(n, indices=indices)
    return best_static_fidelity(target, depth, seeds, max_sweeps, tol, backend,
                                threshold) >= threshold


def sampled_subsets(n: int, k: int, samples: int, seed: int) -> list[tuple]:
    """``samples`` seeded k-subsets of ``range(2**n)`` (sorted indices)."""
    out = []
    for i in range(samples):
        rng = np.random.default_rng([seed, n, i])
        out.append(tuple(sorted(int(x) for x in rng.choice(2**n, size=k, replace=False))))
    return out


def _tfi_depth_job(cfg, h, n, seed) -> ResultTable:
    out = ResultTable("scaling", h)
    p = cfg.params
    o = cfg.optimizer
    target = tfi_ground_state(n, cfg.target.g)
    d, hit = preparation_depth(target, p["threshold"], _repeat_seeds(cfg, seed), p["depth_cap"],
                               o.max_sweeps, o.tol, o.backend)
    d_ent, s_max = entanglement_depth(target)
    lab = configuration(n=n)
    out.add(lab, "preparation_depth", d, seed)
    out.add(lab, "depth_cap_hit", hit, seed)
    out.add(lab, "entanglement_depth", d_ent, seed)
    out.add(lab, "max_entropy", s_max, seed)
    if hit:
        out.flags["nonconverged"] = True
    return out


def _subset_job(cfg, h, n, mode, seed) -> ResultTable:
    out = ResultTable("scaling", h)
    p = cfg.params
    o = cfg.optimizer
    k = cfg.target.k
    if mode == "exhaustive":
        subsets = list(itertools.combinations(range(2**n), k))
    else:
        subsets = sampled_subsets(n, k, p["samples"], seed)
    seeds = _repeat_seeds(cfg, seed)
    ok = sum(subset_preparable(n, s, p["subset_depth"], p["threshold"], seeds, o.max_sweeps,
                               o.tol, o.backend) for s in subsets)
    lab = configuration(n=n, depth=p["subset_depth"], mode=mode)
    out.add(lab, "subset_fraction", ok / len(subsets), seed)
    out.add(lab, "subset_count", len(subsets), seed)
    return out


def cmd_scaling(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                staging: Path | None = None) -> ResultTable:
    h = cfg.hash()
    p = cfg.params
    parts = run_jobs(_tfi_depth_job, [(cfg, h, n, seed) for n in p["tfi_ns"]], n_jobs, staging)
    jobs = [(cfg, h, n, "sampled", seed) for n in p["subset_ns"]]
    jobs += [(cfg, h, n, "exhaustive", seed) for n in p["exhaustive_ns"]]
    parts += run_jobs(_subset_job, jobs, n_jobs, staging and staging / "subset")
    return _merge("scaling", h, parts)


# nn-train ------------------------------------------------------------------------------

def nn_config(params: dict, seed: int):
    from .nn import NNTrainConfig

    return NNTrainConfig(epochs=params["epochs"], batch_size=params["batch_size"],
                         learning_rate=params["learning_rate"], seed=seed,
                         optimizer=params["optimizer"], lr_final=params["lr_final"],
                         eval_every=params["eval_every"])


def _nn_job(cfg, h, width, seed, out_dir) -> ResultTable:
    from .nn import BranchSource, MLPDecoder, ghz_patch_precircuit, train

    p = cfg.params
    n = p["n"]
    out = ResultTable("nn-train", h)
    a = ghz_patch_precircuit(n)
    src = BranchSource(a, make_ghz(n))
    d = MLPDecoder.create(a.r, 3 * n, (width,), seed=seed, scale=p["init_scale"],
                          output_scale=p["output_scale"])
    tr = train(d, src, nn_config(p, seed))
    for e, v in tr.eval_points():
        out.add(configuration(n=n, width=width, epoch=e), "eval_loss", v, seed)
    for e, v in enumerate(tr.batch_loss, start=1):
        out.add(configuration(n=n, width=width, epoch=e), "batch_loss", v, seed)
    final = tr.eval_loss[-1] if tr.eval_loss else float("nan")
    out.add(configuration(n=n, width=width), "final_eval_loss", final, seed)
    out.add(configuration(n=n, width=width), "diverged", tr.diverged, seed)
    if tr.diverged:
        out.flags["nonconverged"] = True
    if out_dir is not None:
        tr.decoder.save(Path(out_dir) / f"decoder_w{width}_s{seed}.json")
    return out


def cmd_nn_train(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                 staging: Path | None = None, out_dir=None) -> ResultTable:
    h = cfg.hash()
    p = cfg.params
    jobs = [(cfg, h, w, seed + s, out_dir) for w in p["widths"] for s in range(p["seeds"])]
    return _merge("nn-train", h, run_jobs(_nn_job, jobs, n_jobs, staging))


# realtime ------------------------------------------------------------------------------

def _realtime_job(cfg, h, shot, seed) -> tuple[ResultTable, str, float]:
    from .nn import ghz_patch_ops, ghz_patch_precircuit
    from .realtime import (RealtimeConfig, equivalent_mod_ghz, gates_as_pauli, run_protocol,
                           stabilizer_correction)

    p = cfg.params
    n = p["n"]
    out = ResultTable("realtime", h)
    a = ghz_patch_precircuit(n)
    rc = RealtimeConfig(p["max_sweeps"], p["tol"], p["depth_post"], p["restart"])
    rep = run_protocol(n, seed, rc, a, make_ghz(n))
    for i, v in enumerate(rep.sweep_overlaps):
        out.add(configuration(n=n, shot=shot, sweep=i), "sweep_overlap", v, seed)
    lab = configuration(n=n, shot=shot)
    out.add(lab, "fidelity", rep.fidelity, seed)
    out.add(lab, "sweeps", rep.sweeps, seed)
    out.add(lab, "converged", rep.converged, seed)
    if p["depth_post"] == 0:
        found, dev = gates_as_pauli(rep.session)
        out.add(lab, "pauli_deviation", dev, seed)
        expected = stabilizer_correction(a, ghz_patch_ops(n), rep.outcome)
        out.add(lab, "matches_stabilizer", equivalent_mod_ghz(found, expected), seed)
    if not rep.converged:
        out.flags["nonconverged"] = True
    return out, rep.to_text(with_timing=False), rep.decode_ms


def cmd_realtime(cfg: ExperimentConfig, seed: int = 0, n_jobs: int = 1,
                 staging: Path | None = None) -> tuple[ResultTable, list[str], list[float]]:
    h = cfg.hash()
    jobs = [(cfg, h, i, seed + i) for i in range(cfg.params["shots"])]
    res = run_jobs(_realtime_job, jobs, n_jobs, staging)
    table = _merge("realtime", h, [r[0] for r in res])
    return table, [r[1] for r in res], [r[2] for r in res]


RUNNERS: dict[str, Callable] = {
    "compare": cmd_compare,
    "scan-ancillae": cmd_scan_ancillae,
    "purity-trace": cmd_purity_trace,
    "gd-vs-env": cmd_gd_vs_env,
    "scaling": cmd_scaling,
    "nn-train": cmd_nn_train,
    "realtime": cmd_realtime,
}


def environment_versions() -> dict:
    import platform

    import scipy

    from . import __version__

    return {"dqcforge": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def cpu_count() -> int:
    return os.cpu_count() or 1
