"""Experiment configuration, seeded multi-trial orchestration and CSV reporting.

Trials are keyed by seed: trial ``r`` of an experiment with base seed ``s``
runs with seed ``s + r``. Seeds are grouped into fixed-size chunks that are
simulated in lockstep; chunks may run in worker processes, and because the
chunking does not depend on the worker count, serial and parallel
execution write identical files.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from pairgossip.data import (SyntheticMixtureSpec, auc_toy, load_csv_report, parity_labels,
                             synth_mixture)
from pairgossip.dualavg import (MODES, ProjectionSpec, StepSchedule, experiment_projection,
                                gossip_da_batch)
from pairgossip.errors import NumericError, ParameterError
from pairgossip.graph import Graph, generate, spectral_report
from pairgossip.losses import AucLogistic, MetricHinge, PairwiseObjective, auc_batch
from pairgossip.pairwise import Dataset

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ("t", "mean_risk", "std_risk", "mean_bias_inner", "mean_auc")
OPTIMIZER_COLUMNS = ("t", "node_id", "risk", "risk_std", "bias_inner", "auc", "seed")
OBJECTIVE_NAMES = ("auc", "metric")


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {v!r}")


def _label_map(v) -> dict | None:
    if v is None or isinstance(v, dict):
        return v
    s = str(v).strip()
    if s.lower() in ("", "none", "identity"):
        return None
    out = {}
    for item in s.split(","):
        try:
            k, val = item.split(":")
            out[int(k)] = float(val)
        except ValueError:
            raise ParameterError(f"bad label_map entry {item!r}; expected raw:mapped") from None
    return out


@dataclass(frozen=True)
class DataSource:
    """Where the points come from: ``toy``, ``mixture`` or ``csv``."""

    kind: str = "toy"
    n: int | None = None  # defaults to the graph size
    dim: int = 2
    shift: float = 0.5
    seed: int = 0
    classes: int = 10
    subspace: int = 5
    variance: float = 1.0
    separation: float = 3.0
    binarize: str = "auto"  # parity for AUC on class ids
    path: str | None = None
    has_header: bool = False
    id_column: int | None = 0
    label_column: int | None = -1
    label_map: dict | None = field(default_factory=lambda: {2: -1.0, 4: 1.0})
    keep_id_as_feature: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in ("toy", "mixture", "csv"):
            raise ParameterError(f"unknown data source {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ParameterError("csv data source needs a path")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "complete:20"
    mode: str = "sync"
    objective: str = "auc"
    a: float = 1.0
    alpha: float = -0.5
    T: int = 1000
    n_trials: int = 1
    base_seed: int = 0
    record_every: int = 1
    output: str = "out"
    record_bias: bool = False
    workers: int = 1
    chunk: int = 10
    b: float = 1.0
    hinge: str = "standard"
    data: DataSource = field(default_factory=DataSource)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.objective not in OBJECTIVE_NAMES:
            raise ParameterError(f"objective must be one of {OBJECTIVE_NAMES}")
        if self.T < 1:
            raise ParameterError("T must be >= 1")
        if self.n_trials < 1:
            raise ParameterError("n_trials must be >= 1")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")
        if self.workers < 1 or self.chunk < 1:
            raise ParameterError("workers and chunk must be >= 1")
        if self.record_bias and self.mode == "async":
            raise ParameterError("record_bias is only available for sync and baseline modes")
        StepSchedule(self.a, self.alpha)  # validates the schedule

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + r for r in range(self.n_trials)]

    def to_dict(self) -> dict:
        return asdict(self)


_EXPERIMENT_KEYS = {
    "topology": str, "mode": str, "objective": str, "T": int, "n_trials": int, "base_seed": int,
    "record_every": int, "output": str, "record_bias": _bool, "workers": int, "chunk": int,
}
_SCHEDULE_KEYS = {"a": float, "alpha": float}
_OBJECTIVE_KEYS = {"b": float, "hinge": str}
_OPTIONAL_INT = lambda v: None if str(v).strip().lower() in ("none", "") else int(v)  # noqa: E731
_DATA_KEYS = {
    "kind": str, "source": str, "n": _OPTIONAL_INT, "dim": int, "shift": float, "seed": int, "classes": int,
    "subspace": int, "variance": float, "separation": float, "binarize": str,
    "path": lambda v: None if v.strip().lower() == "none" else v,
    "has_header": _bool, "id_column": _OPTIONAL_INT, "label_column": _OPTIONAL_INT,
    "label_map": _label_map, "keep_id_as_feature": _bool, "standardize": _bool,
}


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _convert(section: str, table: dict, items) -> dict:
    out = {}
    for key, raw in items:
        if key not in table:
            raise ParameterError(f"unknown key {key!r} in section [{section}]")
        try:
            out[key] = table[key](_unquote(raw))
        except ValueError as exc:
            raise ParameterError(f"[{section}] {key} = {raw!r}: {exc}") from None
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` text with ``[experiment]``, ``[schedule]``, ``[objective]`` and ``[data]`` sections."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"config syntax: {exc}") from None
    known = {"experiment": _EXPERIMENT_KEYS, "schedule": _SCHEDULE_KEYS,
             "objective": _OBJECTIVE_KEYS, "data": _DATA_KEYS}
    fields: dict = {}
    data: dict = {}
    for sec in cp.sections():
        if sec not in known:
            raise ParameterError(f"unknown config section [{sec}]")
        vals = _convert(sec, known[sec], cp.items(sec))
        if sec == "data":
            if "source" in vals:
                vals["kind"] = vals.pop("source")
            data.update(vals)
        else:
            fields.update(vals)
    return ExperimentConfig(**fields, data=DataSource(**data))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`."""
    def fmt(v):
        if isinstance(v, dict):
            return ",".join(f"{k}:{x:g}" for k, x in v.items())
        return "none" if v is None else str(v)

    d = cfg.to_dict()
    data = d.pop("data")
    lines = ["[experiment]"]
    lines += [f"{k} = {fmt(d[k])}" for k in _EXPERIMENT_KEYS]
    lines += ["", "[schedule]"] + [f"{k} = {fmt(d[k])}" for k in _SCHEDULE_KEYS]
    lines += ["", "[objective]"] + [f"{k} = {fmt(d[k])}" for k in _OBJECTIVE_KEYS]
    lines += ["", "[data]"] + [f"{k} = {fmt(v)}" for k, v in data.items() if k != "label_map" or v]
    if not data["label_map"]:
        lines.append("label_map = none")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# problem construction


@dataclass
class Problem:
    graph: Graph
    data: Dataset
    objective: PairwiseObjective
    psi: ProjectionSpec
    sched: StepSchedule
    notes: list[str] = field(default_factory=list)


def build_dataset(src: DataSource, n_default: int, objective: str) -> tuple[Dataset, list[str]]:
    notes: list[str] = []
    n = src.n or n_default
    if src.kind == "toy":
        data = auc_toy(n, src.dim, src.shift, src.seed)
    elif src.kind == "mixture":
        data = synth_mixture(SyntheticMixtureSpec(n, src.classes, src.dim, src.subspace, src.variance,
                                                  src.separation, src.seed))
    else:
        data, rep = load_csv_report(src.path, src.has_header, src.id_column, src.label_column,
                                    src.label_map, src.keep_id_as_feature)
        notes.append(f"{src.path}: loaded {rep.loaded} rows, dropped {rep.dropped} with missing values")
        if src.n is not None and src.n < data.n:
            data = Dataset(data.points[: src.n], None if data.labels is None else data.labels[: src.n])
            notes.append(f"kept the first {src.n} rows")
    binarize = src.binarize
    if binarize == "auto":
        binarize = "parity" if (objective == "auc" and src.kind == "mixture") else "none"
    if binarize == "parity":
        data = Dataset(data.points, parity_labels(data.labels))
    elif binarize != "none":
        raise ParameterError(f"unknown binarize mode {src.binarize!r}")
    if src.standardize:
        x = data.points
        sd = x.std(axis=0)
        data = Dataset((x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0), data.labels)
    return data, notes


def build_problem(cfg: ExperimentConfig) -> Problem:
    g = generate(cfg.topology)
    data, notes = build_dataset(cfg.data, g.n, cfg.objective)
    if data.n != g.n:
        raise ParameterError(f"topology {cfg.topology} has {g.n} nodes but the dataset has {data.n} points")
    if data.labels is None:
        raise ParameterError(f"objective {cfg.objective!r} needs labelled data")
    if cfg.objective == "auc":
        obj: PairwiseObjective = AucLogistic(data)
        psi = experiment_projection()
    else:
        obj = MetricHinge(data, cfg.b, cfg.hinge)
        psi = ProjectionSpec("psd", d=data.d)
    return Problem(g, data, obj, psi, StepSchedule(cfg.a, cfg.alpha), list(g.notes) + notes)


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialResult:
    """Per-trial summaries at the recorded steps; arrays are ``(S,)`` except ``node_risk`` ``(S, n)``."""

    seed: int
    t: np.ndarray
    node_risk: np.ndarray
    bias_inner: np.ndarray | None
    node_auc: np.ndarray | None

    @property
    def risk(self) -> np.ndarray:
        return self.node_risk.mean(axis=1)

    @property
    def risk_std(self) -> np.ndarray:
        return self.node_risk.std(axis=1)

    @property
    def auc(self) -> np.ndarray | None:
        return None if self.node_auc is None else self.node_auc.mean(axis=1)


def _run_chunk(cfg: ExperimentConfig, seeds: list[int]) -> list[TrialResult]:
    prob = build_problem(cfg)
    tr = gossip_da_batch(prob.graph, prob.objective, prob.sched, prob.psi, cfg.T, seeds, mode=cfg.mode,
                         record_every=cfg.record_every, record_bias=cfg.record_bias)
    bad = ~np.isfinite(tr.theta_bar).all(axis=(1, 2, 3))
    if bad.any():
        raise NumericError(f"trial with seed {seeds[int(np.argmax(bad))]} produced non-finite iterates")
    node_risk = prob.objective.risk(tr.theta_bar)
    node_auc = None
    if cfg.objective == "auc":
        node_auc = auc_batch(prob.data, tr.theta_bar)
    bias = tr.bias_inner
    return [TrialResult(s, tr.t, node_risk[r], None if bias is None else bias[r],
                        None if node_auc is None else node_auc[r]) for r, s in enumerate(seeds)]


def run_trials(cfg: ExperimentConfig, workers: int | None = None) -> list[TrialResult]:
    """Run every trial of ``cfg``; results come back in seed order whatever the worker count."""
    seeds = cfg.seeds
    chunks = [seeds[k:k + cfg.chunk] for k in range(0, len(seeds), cfg.chunk)]
    workers = cfg.workers if workers is None else workers
    if workers <= 1 or len(chunks) == 1:
        parts = [_run_chunk(cfg, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, [cfg] * len(chunks), chunks))
    return [r for part in parts for r in part]


@dataclass
class Aggregate:
    t: np.ndarray
    mean_risk: np.ndarray
    std_risk: np.ndarray
    mean_bias_inner: np.ndarray
    mean_auc: np.ndarray

    def rows(self) -> list[tuple]:
        return list(zip(self.t.tolist(), self.mean_risk.tolist(), self.std_risk.tolist(),
                        self.mean_bias_inner.tolist(), self.mean_auc.tolist()))


def aggregate(results: list[TrialResult]) -> Aggregate:
    """Across-trial mean and (population) std of the node-averaged risk; NaN where a column is absent."""
    risk = np.stack([r.risk for r in results])
    nan = np.full(risk.shape[1], np.nan)
    bias = (np.stack([r.bias_inner for r in results]).mean(axis=0)
            if results[0].bias_inner is not None else nan)
    aucs = np.stack([r.auc for r in results]).mean(axis=0) if results[0].node_auc is not None else nan
    return Aggregate(results[0].t, risk.mean(axis=0), risk.std(axis=0), bias, aucs)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def write_rows(target, header, rows) -> None:
    """Write a CSV to a path or an open text stream; floats keep full precision."""
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(header)
        w.writerows([_cell(v) for v in row] for row in rows)
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        write_rows(fh, header, rows)


def optimizer_rows(results: list[TrialResult], per_node: bool = False) -> list[tuple]:
    """Raw per-trial dump with columns :data:`OPTIMIZER_COLUMNS`."""
    rows = []
    for res in results:
        risk, rstd, auc_mean = res.risk, res.risk_std, res.auc
        for s, t in enumerate(res.t.tolist()):
            bias = res.bias_inner[s] if res.bias_inner is not None else np.nan
            rows.append((t, "mean", risk[s], rstd[s], bias, auc_mean[s] if auc_mean is not None else np.nan,
                         res.seed))
            if per_node:
                for k in range(res.node_risk.shape[1]):
                    a = res.node_auc[s, k] if res.node_auc is not None else np.nan
                    rows.append((t, k, res.node_risk[s, k], 0.0, bias, a, res.seed))
    return rows


def write_optimizer_csv(target, results: list[TrialResult], per_node: bool = False) -> None:
    write_rows(target, OPTIMIZER_COLUMNS, optimizer_rows(results, per_node))


@dataclass
class ExperimentReport:
    aggregate_csv: Path
    trials_csv: Path
    manifest: Path
    aggregate: Aggregate
    results: list[TrialResult]


def _manifest(cfg: ExperimentConfig, prob: Problem, seeds, wall: float, extra: dict | None = None) -> dict:
    out = {
        "config": cfg.to_dict(),
        "config_text": format_config(cfg),
        "graph": spectral_report(prob.graph),
        "notes": prob.notes,
        "seeds": list(seeds),
        "wall_time_s": wall,
        "lipschitz": prob.objective.lipschitz,
    }
    out.update(extra or {})
    return out


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   workers: int | None = None) -> ExperimentReport:
    """Run all trials and write ``aggregate.csv``, ``trials.csv`` and ``manifest.json``."""
    out = Path(out_dir or cfg.output)
    start = time.perf_counter()
    prob = build_problem(cfg)
    results = run_trials(cfg, workers)
    agg = aggregate(results)
    paths = (out / "aggregate.csv", out / "trials.csv", out / "manifest.json")
    write_rows(paths[0], AGGREGATE_COLUMNS, agg.rows())
    write_optimizer_csv(paths[1], results)
    wall = time.perf_counter() - start
    paths[2].write_text(json.dumps(_manifest(cfg, prob, cfg.seeds, wall), indent=2, default=float) + "\n")
    return ExperimentReport(*paths, agg, results)


def run_sweep(cfg: ExperimentConfig, topologies: list[str], out_dir: str | Path | None = None,
              workers: int | None = None) -> Path:
    """Same experiment over several topologies, written to one long-format ``sweep.csv``."""
    if not topologies:
        raise ParameterError("empty topology list")
    out = Path(out_dir or cfg.output)
    rows, graphs = [], {}
    start = time.perf_counter()
    for topo in topologies:
        sub = replace(cfg, topology=topo)
        prob = build_problem(sub)
        graphs[topo] = spectral_report(prob.graph)
        agg = aggregate(run_trials(sub, workers))
        rows += [(topo, *r) for r in agg.rows()]
    path = out / "sweep.csv"
    write_rows(path, ("topology",) + AGGREGATE_COLUMNS, rows)
    manifest = {"config": cfg.to_dict(), "config_text": format_config(cfg), "topologies": topologies,
                "graphs": graphs, "seeds": cfg.seeds, "wall_time_s": time.perf_counter() - start}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return path
