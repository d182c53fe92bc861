"""Labelled feature datasets built from ensembles of Lorenz trajectories.

Each sample is the 6-vector ``(x, y, z, dx/dt, dy/dt, dz/dt)`` at an interior
point of one trajectory, together with its stability label. Samples are kept
in flat arrays, grouped contiguously by ``system_id``.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_DT, DEFAULT_N_POINTS, SystemParams, integrate
from .errors import DegenerateFeature, InvalidConfig, MissingStats
from .labeling import DEFAULT_HALF_WIDTH, WindowSpec, label_trajectory

FEATURE_NAMES = ("x", "y", "z", "dxdt", "dydt", "dzdt")
CSV_HEADER = ("t",) + FEATURE_NAMES + ("regime", "stability")
MANIFEST_FILENAME = "manifest.json"


class Role(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "val"

    @classmethod
    def parse(cls, value) -> "Role":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        if v in ("val", "validation"):
            return cls.VALIDATION
        if v == "train":
            return cls.TRAIN
        raise InvalidConfig(f"unknown role {value!r}")


# stream tags keep train and validation draws apart even under one seed
_ROLE_STREAM = {Role.TRAIN: 0, Role.VALIDATION: 1}


@dataclass(frozen=True)
class IntervalSpec:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise InvalidConfig(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise InvalidConfig(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def parse(cls, text: str) -> "IntervalSpec":
        """Parse ``"lo,hi"`` (brackets optional)."""
        parts = str(text).strip().strip("[]()").split(",")
        if len(parts) != 2:
            raise InvalidConfig(f"interval must look like 'lo,hi', got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as e:
            raise InvalidConfig(f"interval must look like 'lo,hi', got {text!r}") from e

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]

    def __str__(self):
        return f"[{self.lo:g},{self.hi:g}]"


@dataclass(frozen=True)
class NormalizationStats:
    system_id: int
    mean: np.ndarray
    std: np.ndarray

    def as_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(int(d["system_id"]), np.asarray(d["mean"], float), np.asarray(d["std"], float))


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of labelled samples.

    ``features`` is ``(M, 6)``; ``labels``, ``regimes``, ``system_ids`` and
    ``time_indices`` are length ``M``. ``initial_conditions`` holds one row per
    system.
    """

    features: np.ndarray
    labels: np.ndarray
    regimes: np.ndarray
    system_ids: np.ndarray
    time_indices: np.ndarray
    role: Role
    n_systems: int
    interval: IntervalSpec
    seed: int
    dt: float = DEFAULT_DT
    n_points: int = DEFAULT_N_POINTS
    half_width: int = DEFAULT_HALF_WIDTH
    initial_conditions: np.ndarray | None = None
    normalized: bool = False
    stats: dict[int, NormalizationStats] | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.labels)

    @property
    def unstable_fraction(self) -> float:
        return float(self.labels.mean()) if len(self.labels) else 0.0

    def system_slices(self) -> dict[int, slice]:
        """Contiguous row range of every system."""
        ids = self.system_ids
        bounds = np.flatnonzero(np.diff(ids)) + 1
        starts = np.concatenate(([0], bounds))
        stops = np.concatenate((bounds, [len(ids)]))
        return {int(ids[a]): slice(int(a), int(b)) for a, b in zip(starts, stops)}

    def subset(self, system_id: int) -> "Dataset":
        sl = self.system_slices()[system_id]
        stats = None if self.stats is None else {system_id: self.stats[system_id]}
        ics = None if self.initial_conditions is None else self.initial_conditions[[system_id]]
        return replace(
            self,
            features=self.features[sl],
            labels=self.labels[sl],
            regimes=self.regimes[sl],
            system_ids=self.system_ids[sl],
            time_indices=self.time_indices[sl],
            n_systems=1,
            initial_conditions=ics,
            stats=stats,
        )

    def counts(self) -> dict:
        return {
            "n_samples": int(len(self)),
            "n_unstable": int(self.labels.sum()),
            "n_stable": int(len(self) - self.labels.sum()),
            "unstable_fraction": self.unstable_fraction,
            "samples_per_system": {
                str(k): sl.stop - sl.start for k, sl in self.system_slices().items()
            },
        }


def system_rng(seed: int, role, system_index: int) -> np.random.Generator:
    """Independent counter-based stream for one (seed, role, system)."""
    role = Role.parse(role)
    ss = np.random.SeedSequence([int(seed), _ROLE_STREAM[role], int(system_index)])
    return np.random.Generator(np.random.Philox(ss))


def sample_initial_condition(interval: IntervalSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw ``(x0, y0, z0)`` independently and uniformly from the interval."""
    return rng.uniform(interval.lo, interval.hi, size=3)


def build_dataset(
    interval: IntervalSpec,
    n_systems: int,
    n_points: int = DEFAULT_N_POINTS,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    role="train",
    half_width: int = DEFAULT_HALF_WIDTH,
    params: SystemParams = SystemParams(),
) -> Dataset:
    """Integrate ``n_systems`` trajectories and emit one sample per interior point."""
    role = Role.parse(role)
    window = WindowSpec(half_width)
    if n_systems < 1:
        raise InvalidConfig(f"n_systems must be >= 1, got {n_systems}")
    if n_points <= 2 * window.half_width:
        raise InvalidConfig(f"n_points must exceed {2 * window.half_width}, got {n_points}")

    feats, labels, regimes, sids, tidx, ics = [], [], [], [], [], []
    for k in range(n_systems):
        ic = sample_initial_condition(interval, system_rng(seed, role, k))
        traj = integrate(ic, params, dt, n_points)
        reg, idx, stab = label_trajectory(traj, window)
        feats.append(np.hstack([traj.states[idx], traj.derivatives[idx]]))
        labels.append(stab)
        regimes.append(reg[idx])
        sids.append(np.full(len(idx), k, dtype=np.int64))
        tidx.append(idx.astype(np.int64))
        ics.append(ic)

    return Dataset(
        features=np.concatenate(feats),
        labels=np.concatenate(labels),
        regimes=np.concatenate(regimes),
        system_ids=np.concatenate(sids),
        time_indices=np.concatenate(tidx),
        role=role,
        n_systems=n_systems,
        interval=interval,
        seed=int(seed),
        dt=float(dt),
        n_points=int(n_points),
        half_width=window.half_width,
        initial_conditions=np.array(ics),
    )


def fit_normalization(dataset: Dataset) -> dict[int, NormalizationStats]:
    """Per-system, per-feature mean and population standard deviation."""
    stats = {}
    for sid, sl in dataset.system_slices().items():
        f = dataset.features[sl]
        if len(f) < 2:
            raise DegenerateFeature(f"system {sid} has fewer than 2 samples")
        mu = f.mean(axis=0)
        sd = np.sqrt(((f - mu) ** 2).mean(axis=0))
        if np.any(sd == 0):
            bad = [FEATURE_NAMES[i] for i in np.flatnonzero(sd == 0)]
            raise DegenerateFeature(f"system {sid}: zero spread in {', '.join(bad)}")
        stats[sid] = NormalizationStats(sid, mu, sd)
    return stats


def apply_normalization(dataset: Dataset, stats: dict[int, NormalizationStats]) -> Dataset:
    """Standardize each system's features with that system's own stats."""
    out = np.empty_like(dataset.features)
    for sid, sl in dataset.system_slices().items():
        if sid not in stats:
            raise MissingStats(f"no normalization stats for system {sid}")
        s = stats[sid]
        out[sl] = (dataset.features[sl] - s.mean) / s.std
    return replace(dataset, features=out, normalized=True, stats=dict(stats))


def normalize(dataset: Dataset) -> Dataset:
    return apply_normalization(dataset, fit_normalization(dataset))


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return repr(float(v))


def manifest_dict(dataset: Dataset, files: list[str] | None = None, extra: dict | None = None) -> dict:
    d = {
        "role": dataset.role.value,
        "interval": dataset.interval.as_list(),
        "seed": dataset.seed,
        "dt": dataset.dt,
        "n_points": dataset.n_points,
        "n_systems": dataset.n_systems,
        "half_width": dataset.half_width,
        "feature_names": list(FEATURE_NAMES),
        "normalized": dataset.normalized,
        "counts": dataset.counts(),
        "initial_conditions": (
            None if dataset.initial_conditions is None else dataset.initial_conditions.tolist()
        ),
        "normalization_stats": (
            None if dataset.stats is None
            else [dataset.stats[k].as_dict() for k in sorted(dataset.stats)]
        ),
    }
    if files is not None:
        d["files"] = files
    if extra:
        d.update(extra)
    return d


def write_dataset(dataset: Dataset, out_dir, extra: dict | None = None) -> Path:
    """Write one CSV per system plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for sid, sl in dataset.system_slices().items():
        name = f"system_{sid:03d}.csv"
        files.append(name)
        with open(out_dir / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for t, f, reg, lab in zip(
                dataset.time_indices[sl], dataset.features[sl],
                dataset.regimes[sl], dataset.labels[sl],
            ):
                w.writerow(
                    [_fmt(t * dataset.dt)] + [_fmt(v) for v in f]
                    + ["R" if reg else "L", int(lab)]
                )
    path = out_dir / MANIFEST_FILENAME
    path.write_text(
        json.dumps(manifest_dict(dataset, files, extra), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def read_dataset(data_dir) -> Dataset:
    """Load a dataset written by :func:`write_dataset`."""
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / MANIFEST_FILENAME).read_text(encoding="utf-8"))
    dt = float(manifest["dt"])
    feats, labels, regimes, sids, tidx = [], [], [], [], []
    for sid, name in enumerate(manifest["files"]):
        with open(data_dir / name, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_HEADER:
            raise InvalidConfig(f"{name}: unexpected header {rows[0]}")
        body = rows[1:]
        feats.append(np.array([[float(v) for v in r[1:7]] for r in body]).reshape(-1, 6))
        tidx.append(np.array([round(float(r[0]) / dt) for r in body], dtype=np.int64))
        regimes.append(np.array([r[7] == "R" for r in body], dtype=np.int8))
        labels.append(np.array([int(r[8]) for r in body], dtype=np.int8))
        sids.append(np.full(len(body), sid, dtype=np.int64))
    stats = None
    if manifest.get("normalization_stats"):
        stats = {
            s["system_id"]: NormalizationStats.from_dict(s)
            for s in manifest["normalization_stats"]
        }
    ics = manifest.get("initial_conditions")
    return Dataset(
        features=np.concatenate(feats),
        labels=np.concatenate(labels),
        regimes=np.concatenate(regimes),
        system_ids=np.concatenate(sids),
        time_indices=np.concatenate(tidx),
        role=Role.parse(manifest["role"]),
        n_systems=int(manifest["n_systems"]),
        interval=IntervalSpec(*manifest["interval"]),
        seed=int(manifest["seed"]),
        dt=dt,
        n_points=int(manifest["n_points"]),
        half_width=int(manifest["half_width"]),
        initial_conditions=None if ics is None else np.asarray(ics, float),
        normalized=bool(manifest["normalized"]),
        stats=stats,
    )
