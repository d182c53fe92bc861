"""Precision/recall scoring and the train/validation experiment matrix.

Unstable is the positive class throughout. A metric whose denominator is
zero is ``None`` (undefined), never silently 0.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    Dataset,
    IntervalSpec,
    build_dataset,
    normalize,
)
from .dynamics import DEFAULT_DT, DEFAULT_N_POINTS
from .errors import AllUndefined, InvalidConfig, LengthMismatch
from .labeling import DEFAULT_HALF_WIDTH
from .network import NetworkParams, TrainConfig, forward, predict_from_probs, save_model, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metrics:
    precision: float | None
    recall: float | None


@dataclass(frozen=True)
class AggregateMetrics:
    mean_precision: float | None
    mean_recall: float | None
    std_precision: float | None
    std_recall: float | None
    n_systems: int
    n_undefined_precision: int = 0
    n_undefined_recall: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def confusion(predictions, truths) -> ConfusionCounts:
    p = np.asarray(predictions).astype(bool)
    t = np.asarray(truths).astype(bool)
    if p.shape != t.shape or p.ndim != 1:
        raise LengthMismatch(f"predictions {p.shape} and truths {t.shape} differ")
    if len(p) == 0:
        raise LengthMismatch("cannot score an empty prediction set")
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)),
        tn=int(np.sum(~p & ~t)),
    )


def precision_recall(c: ConfusionCounts) -> Metrics:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    return Metrics(precision, recall)


def _mean_std(values):
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def aggregate(per_system, strict: bool = True) -> AggregateMetrics:
    """Mean and population std over systems whose metric is defined.

    With ``strict`` (the default) a metric undefined on every system raises
    :class:`AllUndefined`; otherwise its mean/std are reported as ``None``.
    """
    per_system = list(per_system)
    precs = [m.precision for m in per_system if m.precision is not None]
    recs = [m.recall for m in per_system if m.recall is not None]
    if strict and per_system and (not precs or not recs):
        which = "precision" if not precs else "recall"
        raise AllUndefined(f"{which} is undefined for every system")
    if not per_system:
        raise AllUndefined("no systems to aggregate")
    n_up = len(per_system) - len(precs)
    n_ur = len(per_system) - len(recs)
    if n_up or n_ur:
        log.warning("excluded undefined metrics: %d precision, %d recall", n_up, n_ur)
    mp, sp = _mean_std(precs)
    mr, sr = _mean_std(recs)
    return AggregateMetrics(mp, mr, sp, sr, len(per_system), n_up, n_ur)


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentSpec:
    train_interval: IntervalSpec
    val_interval: IntervalSpec
    normalize: bool = False
    data_seed: int = 0
    train_config: TrainConfig = TrainConfig()
    n_train_systems: int = 25
    n_val_systems: int = 5
    n_points: int = DEFAULT_N_POINTS
    dt: float = DEFAULT_DT
    half_width: int = DEFAULT_HALF_WIDTH

    def as_dict(self) -> dict:
        d = asdict(self)
        d["train_interval"] = self.train_interval.as_list()
        d["val_interval"] = self.val_interval.as_list()
        return d

    def train_key(self) -> tuple:
        return (self.train_interval, self.normalize, self.data_seed, self.train_config,
                self.n_train_systems, self.n_points, self.dt, self.half_width)


@dataclass
class SystemResult:
    system_id: int
    counts: ConfusionCounts
    metrics: Metrics
    predictions: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"system_id": self.system_id, **asdict(self.counts), **asdict(self.metrics)}


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    per_system: list[SystemResult]
    aggregate: AggregateMetrics
    loss_history: list[float]
    effective_sample_counts: dict
    elapsed_s: float = 0.0

    def report(self) -> dict:
        return build_report(self.spec.as_dict(), self.per_system, self.aggregate,
                            self.effective_sample_counts, loss_history=self.loss_history)


def build_report(spec: dict, per_system, agg: AggregateMetrics, counts: dict, **extra) -> dict:
    rep = {
        "spec": spec,
        "per_system": [s.as_dict() for s in per_system],
        "aggregate": agg.as_dict(),
        "effective_sample_counts": counts,
        "std_convention": "population (1/N)",
        "positive_class": "unstable",
    }
    rep.update(extra)
    return rep


def evaluate_model(params: NetworkParams, dataset: Dataset) -> tuple[list[SystemResult], AggregateMetrics]:
    """Score every system of ``dataset`` separately, then aggregate."""
    results = []
    for sid, sl in dataset.system_slices().items():
        probs = forward(params, dataset.features[sl])
        pred = predict_from_probs(probs)
        c = confusion(pred, dataset.labels[sl])
        results.append(SystemResult(sid, c, precision_recall(c), pred, probs))
    return results, aggregate([r.metrics for r in results], strict=False)


def _build(spec: ExperimentSpec, role: str) -> Dataset:
    train_role = role == "train"
    ds = build_dataset(
        spec.train_interval if train_role else spec.val_interval,
        spec.n_train_systems if train_role else spec.n_val_systems,
        n_points=spec.n_points,
        dt=spec.dt,
        seed=spec.data_seed,
        role=role,
        half_width=spec.half_width,
    )
    return normalize(ds) if spec.normalize else ds


class ModelCache:
    """Reuses trained models (and their data) across experiments sharing a training setup."""

    def __init__(self):
        self._models: dict = {}

    def get(self, spec: ExperimentSpec, progress=None):
        key = spec.train_key()
        if key not in self._models:
            train_ds = _build(spec, "train")
            log.info("training on %s (%d samples, normalize=%s)",
                     spec.train_interval, len(train_ds), spec.normalize)
            res = train(train_ds, config=spec.train_config, progress=progress)
            self._models[key] = (res.params, res.loss_history, train_ds)
        return self._models[key]


def run_experiment(spec: ExperimentSpec, out_dir=None, cache: ModelCache | None = None,
                   progress=None) -> ExperimentResult:
    """Build data, train (or reuse a cached model), score each validation system.

    When ``out_dir`` is given, writes ``model.json``, ``predictions.csv`` and
    ``report.json`` there.
    """
    t0 = time.perf_counter()
    cache = cache or ModelCache()
    params, history, train_ds = cache.get(spec, progress)
    val_ds = _build(spec, "val")
    per_system, agg = evaluate_model(params, val_ds)
    counts = {"train": train_ds.counts(), "val": val_ds.counts()}
    result = ExperimentResult(spec, per_system, agg, list(history), counts,
                              time.perf_counter() - t0)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(out / "model.json", params, spec.train_config, normalize=spec.normalize,
                   train_interval=spec.train_interval.as_list(), data_seed=spec.data_seed,
                   loss_history=list(history))
        write_predictions(out / "predictions.csv", val_ds, per_system)
        (out / "report.json").write_text(json.dumps(result.report(), indent=2) + "\n",
                                         encoding="utf-8")
    return result


def write_predictions(path, dataset: Dataset, per_system) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system_id", "time_index", "truth", "predicted", "p_stable", "p_unstable"])
        slices = dataset.system_slices()
        for r in per_system:
            sl = slices[r.system_id]
            for t, y, p, pr in zip(dataset.time_indices[sl], dataset.labels[sl],
                                   r.predictions, r.probs):
                w.writerow([r.system_id, int(t), int(y), int(p), repr(float(pr[0])),
                            repr(float(pr[1]))])


# ---------------------------------------------------------------------------
# table reproduction

# (train interval, validation interval, mean P, mean R, std P, std R)
TABLE_1 = [
    ((0, 1), (0, 1), 0.82, 0.617, 0.122, 0.170),
    ((-1, 0), (-1, 0), 0.632, 0.455, 0.247, 0.202),
    ((0, 1), (-1, 0), 0.034, 0.026, 0.049, 0.044),
    ((-1, 0), (0, 1), 0.028, 0.032, 0.014, 0.025),
    ((-1, 1), (-1, 0), 0.704, 0.128, 0.195, 0.06),
]
TABLE_2 = [
    ((-1, 1), (0, 1), 0.96, 0.964, 0.032, 0.007),
    ((-1, 1), (-1, 0), 0.963, 0.969, 0.039, 0.015),
    ((-1, 1), (-1, 1), 0.982, 0.978, 0.007, 0.005),
    ((-1, 1), (2, 4), 0.988, 0.934, 0.01, 0.015),
    ((-1, 1), (0, 10), 0.975, 0.955, 0.025, 0.028),
    ((-1, 1), (-10, 10), 0.952, 0.9464, 0.066, 0.032),
]
TABLES = {1: (TABLE_1, False), 2: (TABLE_2, True)}

TABLE_CSV_HEADER = [
    "table", "row", "train_interval", "val_interval", "normalized",
    "mean_precision", "mean_recall", "std_precision", "std_recall",
    "paper_mean_precision", "paper_mean_recall", "paper_std_precision", "paper_std_recall",
]


def table_specs(table: int, data_seed: int = 0, train_config: TrainConfig = TrainConfig(),
                **overrides) -> list[ExperimentSpec]:
    if table not in TABLES:
        raise InvalidConfig(f"table must be 1 or 2, got {table!r}")
    rows, norm = TABLES[table]
    return [
        ExperimentSpec(IntervalSpec(*tr), IntervalSpec(*va), norm, data_seed, train_config,
                       **overrides)
        for tr, va, *_ in rows
    ]


def reproduce_table(table: int, data_seed: int = 0, train_config: TrainConfig = TrainConfig(),
                    out_dir=None, cache: ModelCache | None = None, **overrides):
    """Run every row of a table; returns ``(rows, results)``.

    Rows sharing a training setup reuse one trained model. With ``out_dir``,
    each row's artifacts go to ``row_<k>/`` and the comparison table to
    ``table<k>.csv``.
    """
    cache = cache or ModelCache()
    specs = table_specs(table, data_seed, train_config, **overrides)
    paper_rows = TABLES[table][0]
    rows, results = [], []
    for k, (spec, paper) in enumerate(zip(specs, paper_rows), start=1):
        sub = None if out_dir is None else Path(out_dir) / f"row_{k}"
        res = run_experiment(spec, sub, cache)
        a = res.aggregate
        log.info("table %d row %d %s -> %s: P=%s R=%s", table, k, spec.train_interval,
                 spec.val_interval, a.mean_precision, a.mean_recall)
        rows.append({
            "table": table,
            "row": k,
            "train_interval": str(spec.train_interval),
            "val_interval": str(spec.val_interval),
            "normalized": int(spec.normalize),
            "mean_precision": a.mean_precision,
            "mean_recall": a.mean_recall,
            "std_precision": a.std_precision,
            "std_recall": a.std_recall,
            "paper_mean_precision": paper[2],
            "paper_mean_recall": paper[3],
            "paper_std_precision": paper[4],
            "paper_std_recall": paper[5],
        })
        results.append(res)
    if out_dir is not None:
        write_table_csv(Path(out_dir) / f"table{table}.csv", rows)
    return rows, results


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_table_csv(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_CSV_HEADER)
        for r in rows:
            w.writerow([_cell(r[k]) for k in TABLE_CSV_HEADER])


# ---------------------------------------------------------------------------
# distribution comparison data


def silverman_bandwidth(x) -> float:
    """Silverman's rule of thumb: 0.9 min(std, IQR/1.34) n^(-1/5)."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(ddof=1) if len(x) > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        spread = 1.0
    return 0.9 * spread * len(x) ** (-0.2)


def gaussian_kde(x, grid, bandwidth: float | None = None, chunk: int = 4096) -> np.ndarray:
    """Gaussian kernel density estimate of ``x`` evaluated on ``grid``."""
    x = np.asarray(x, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    h = silverman_bandwidth(x) if bandwidth is None else bandwidth
    dens = np.zeros_like(grid)
    for start in range(0, len(x), chunk):
        u = (grid[:, None] - x[None, start:start + chunk]) / h
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    return dens / (len(x) * h * math.sqrt(2 * math.pi))


def overlap_coefficient(p, q) -> float:
    """Shared probability mass of two histograms over the same bins."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.minimum(p / p.sum(), q / q.sum()).sum())


@dataclass
class DistributionData:
    feature: str
    bin_edges: np.ndarray
    hist_train: np.ndarray
    hist_val: np.ndarray
    grid: np.ndarray
    kde_train: np.ndarray
    kde_val: np.ndarray

    @property
    def overlap(self) -> float:
        return overlap_coefficient(self.hist_train, self.hist_val)


def export_distribution_data(train_ds, val_ds, feature_index: int = 0, bins: int = 64,
                             grid_points: int = 256, out_path=None) -> DistributionData:
    """Histogram (density) and KDE of one feature for a train/validation pair.

    Both sources share the bins and grid, spanning their joint range. Accepts
    datasets or plain 1-D arrays.
    """
    from .dataset import FEATURE_NAMES

    def column(src):
        f = getattr(src, "features", None)
        return np.asarray(f[:, feature_index] if f is not None else src, dtype=np.float64)

    a, b = column(train_ds), column(val_ds)
    if len(a) == 0 or len(b) == 0:
        raise InvalidConfig("distribution export needs non-empty inputs")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ha, _ = np.histogram(a, edges, density=True)
    hb, _ = np.histogram(b, edges, density=True)
    grid = np.linspace(lo, hi, grid_points)
    data = DistributionData(
        FEATURE_NAMES[feature_index], edges, ha, hb, grid, gaussian_kde(a, grid),
        gaussian_kde(b, grid),
    )
    if out_path is not None:
        write_distribution_csv(out_path, data)
    return data


def distribution_pair(data_seed: int = 0, n_points: int = DEFAULT_N_POINTS, dt: float = DEFAULT_DT,
                      half_width: int = DEFAULT_HALF_WIDTH,
                      train_interval=IntervalSpec(0, 1), val_interval=IntervalSpec(-1, 0)):
    """Raw train/validation datasets for the mismatched distribution comparison."""
    kw = dict(n_points=n_points, dt=dt, seed=data_seed, half_width=half_width)
    return (build_dataset(train_interval, 25, role="train", **kw),
            build_dataset(val_interval, 5, role="val", **kw))


def write_distribution_csv(path, data: DistributionData) -> None:
    """Two sections in one file, keyed by the ``kind`` column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "feature", "x_lo", "x_hi", "train", "val"])
        for lo, hi, t, v in zip(data.bin_edges[:-1], data.bin_edges[1:], data.hist_train,
                                data.hist_val):
            w.writerow(["hist", data.feature, repr(float(lo)), repr(float(hi)), repr(float(t)),
                        repr(float(v))])
        for g, t, v in zip(data.grid, data.kde_train, data.kde_val):
            w.writerow(["kde", data.feature, repr(float(g)), repr(float(g)), repr(float(t)),
                        repr(float(v))])

