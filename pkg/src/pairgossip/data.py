"""Dataset ingestion and synthetic generators."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pairgossip.errors import DataError, ParameterError
from pairgossip.pairwise import Dataset
from pairgossip.rng import trial_rng

log = logging.getLogger(__name__)

BREAST_CANCER_LABELS = {2: -1, 4: 1}
MISSING = {"?", ""}
# data streams are keyed apart from the protocol streams (trial 0, 1, ...) of the same seed
DATA_STREAM = 1_000_003


@dataclass
class CsvReport:
    loaded: int
    dropped: int
    dropped_rows: list[int] = field(default_factory=list)  # 1-based line numbers


def _resolve(col: int | None, width: int, what: str) -> int | None:
    if col is None:
        return None
    idx = col + width if col < 0 else col
    if not 0 <= idx < width:
        raise ParameterError(f"{what} column {col} out of range for {width} columns")
    return idx


def load_csv_report(
    path: str | Path,
    has_header: bool = False,
    id_column: int | None = 0,
    label_column: int | None = -1,
    label_map: dict | None = BREAST_CANCER_LABELS,
    keep_id_as_feature: bool = False,
) -> tuple[Dataset, CsvReport]:
    """Read a numeric CSV, one point per row, and report the rows that were dropped.

    Rows holding a missing marker (``?`` or an empty cell) are dropped.
    Any other unparsable cell is a :class:`DataError` naming its line and
    column. ``label_map`` translates raw label values; ``None`` or ``{}``
    keeps them as they are.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    start = 1 if has_header else 0
    body = [(ln, r) for ln, r in enumerate(rows[start:], start=start + 1) if any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(body[0][1])
    id_idx = _resolve(id_column, width, "id")
    lab_idx = _resolve(label_column, width, "label")
    feat_idx = [c for c in range(width) if c != lab_idx and (c != id_idx or keep_id_as_feature)]
    if not feat_idx:
        raise DataError(f"{path}: no feature columns left")

    feats, labels, dropped = [], [], []
    for ln, r in body:
        if len(r) != width:
            raise DataError(f"{path}:{ln}: expected {width} columns, found {len(r)}")
        cells = [c.strip() for c in r]
        if any(cells[c] in MISSING for c in feat_idx + ([lab_idx] if lab_idx is not None else [])):
            dropped.append(ln)
            continue
        vals = []
        for c in feat_idx:
            try:
                vals.append(float(cells[c]))
            except ValueError:
                raise DataError(f"{path}:{ln}: column {c + 1} is not numeric: {cells[c]!r}") from None
        feats.append(vals)
        if lab_idx is not None:
            raw = cells[lab_idx]
            try:
                lab = float(raw)
            except ValueError:
                raise DataError(f"{path}:{ln}: label column {lab_idx + 1} is not numeric: {raw!r}") from None
            if label_map:
                key = int(lab) if lab.is_integer() else lab
                if key not in label_map:
                    raise DataError(f"{path}:{ln}: label {raw!r} not in label map {label_map}")
                lab = float(label_map[key])
            labels.append(lab)
    if not feats:
        raise DataError(f"{path}: every row was dropped for missing values")
    if dropped:
        log.info("%s: dropped %d row(s) with missing values", path, len(dropped))
    data = Dataset(np.array(feats), np.array(labels) if lab_idx is not None else None)
    return data, CsvReport(len(feats), len(dropped), dropped)


def load_csv(path, has_header=False, id_column=0, label_column=-1, label_map=BREAST_CANCER_LABELS,
             keep_id_as_feature=False) -> Dataset:
    return load_csv_report(path, has_header, id_column, label_column, label_map, keep_id_as_feature)[0]


@dataclass(frozen=True)
class SyntheticMixtureSpec:
    """Balanced Gaussian mixture whose class means live in the first ``subspace`` coordinates."""

    n: int = 1000
    classes: int = 10
    dim: int = 40
    subspace: int = 5
    variance: float = 1.0
    separation: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.classes < 1:
            raise ParameterError("n and classes must be positive")
        if not 1 <= self.subspace <= self.dim:
            raise ParameterError("subspace dimension must lie in [1, dim]")
        if self.variance <= 0:
            raise ParameterError("variance must be positive")


def mixture_means(spec: SyntheticMixtureSpec) -> np.ndarray:
    rng = trial_rng(spec.seed, DATA_STREAM)
    means = np.zeros((spec.classes, spec.dim))
    means[:, : spec.subspace] = spec.separation * rng.standard_normal((spec.classes, spec.subspace))
    return means


def synth_mixture(spec: SyntheticMixtureSpec) -> Dataset:
    """Points ``mu_c + sqrt(variance) * N(0, I)`` with labels = class ids, in a seeded random order."""
    means = mixture_means(spec)
    rng = trial_rng(spec.seed, DATA_STREAM + 1)
    labels = np.arange(spec.n) % spec.classes
    labels = labels[rng.permutation(spec.n)]
    pts = means[labels] + np.sqrt(spec.variance) * rng.standard_normal((spec.n, spec.dim))
    return Dataset(pts, labels)


def parity_labels(labels) -> np.ndarray:
    """Binarize class ids: even classes map to +1, odd ones to -1."""
    lab = np.asarray(labels).astype(np.int64)
    return np.where(lab % 2 == 0, 1.0, -1.0)


def auc_toy(n: int, dim: int = 2, shift: float = 0.5, seed: int = 0) -> Dataset:
    """Two overlapping Gaussian classes with alternating labels ``+1, -1, +1, ...``.

    The classes overlap, so the logistic pairwise risk has a finite minimizer.
    """
    if n < 2:
        raise ParameterError("the AUC toy needs n >= 2")
    if dim < 1:
        raise ParameterError("dim must be positive")
    lab = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    direction = 1.0 / np.arange(1, dim + 1)
    x = shift * lab[:, None] * direction + trial_rng(seed, DATA_STREAM).standard_normal((n, dim))
    return Dataset(x, lab)


def gaussian_points(n: int, dim: int = 1, seed: int = 0) -> Dataset:
    if n < 1 or dim < 1:
        raise ParameterError("n and dim must be positive")
    return Dataset(trial_rng(seed, DATA_STREAM).standard_normal((n, dim)))
