"""Command-line entry point: ``lorenz-stability {generate,train,evaluate,reproduce}``.

Settings resolve as CLI flag > ``--config`` JSON file > built-in default, and
the effective configuration is written into every artifact.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .dataset import (
    IntervalSpec,
    Role,
    build_dataset,
    normalize,
    read_dataset,
    write_dataset,
)
from .errors import (
    DegenerateFeature,
    InvalidConfig,
    LorenzStabilityError,
    NonFiniteState,
    NumericalDivergence,
    PreprocessingMismatch,
)
from .evaluation import (
    ModelCache,
    build_report,
    distribution_pair,
    evaluate_model,
    export_distribution_data,
    reproduce_table,
)
from .network import TrainConfig, load_model, save_model, train

log = logging.getLogger("lorenz_stability")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

DEFAULT_SYSTEMS = {Role.TRAIN: 25, Role.VALIDATION: 5}


@dataclass
class RunConfig:
    """Every tunable setting, defaulting to the published setup."""

    seed: int = 0
    out: str | None = None
    data: str | None = None
    model: str | None = None
    interval: tuple[float, float] = (0.0, 1.0)
    role: str = "train"
    systems: int | None = None
    points: int = 4000
    dt: float = 0.01
    half_width: int = 5
    normalize: bool | None = None
    epochs: int = 20
    batch: int = 128
    lr: float = 0.001
    table: int | None = None

    def __post_init__(self):
        self.interval = tuple(float(v) for v in self.interval)
        IntervalSpec(*self.interval)
        Role.parse(self.role)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["interval"] = list(self.interval)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.lr, epochs=self.epochs, batch_size=self.batch,
                           seed=self.seed)

    def n_systems(self) -> int:
        return self.systems if self.systems is not None else DEFAULT_SYSTEMS[Role.parse(self.role)]


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if getattr(args, "config", None):
        try:
            merged.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"{args.config}: not valid JSON ({e})") from e
    known = {f.name for f in fields(RunConfig)}
    for k, v in vars(args).items():
        if k in known and v is not None:
            merged[k] = v
    if isinstance(merged.get("interval"), str):
        merged["interval"] = IntervalSpec.parse(merged["interval"]).as_list()
    try:
        return RunConfig.from_dict(merged)
    except TypeError as e:
        raise InvalidConfig(str(e)) from e


def _require(value, flag):
    if value is None:
        raise InvalidConfig(f"{flag} is required")
    return value


def cmd_generate(cfg: RunConfig) -> int:
    out = Path(_require(cfg.out, "--out"))
    ds = build_dataset(IntervalSpec(*cfg.interval), cfg.n_systems(), cfg.points, cfg.dt,
                       cfg.seed, cfg.role, cfg.half_width)
    write_dataset(ds, out, extra={"config": cfg.to_dict()})
    c = ds.counts()
    print(f"wrote {ds.n_systems} systems to {out}")
    print(f"samples: {c['n_samples']} (unstable {c['n_unstable']}, "
          f"fraction {c['unstable_fraction']:.4f})")
    return EXIT_OK


def _prepare(ds, want_normalized: bool):
    if want_normalized and not ds.normalized:
        return normalize(ds)
    if not want_normalized and ds.normalized:
        raise PreprocessingMismatch("data on disk is already normalized; pass --normalize")
    return ds


def cmd_train(cfg: RunConfig) -> int:
    ds = read_dataset(_require(cfg.data, "--data"))
    norm = bool(cfg.normalize)
    ds = _prepare(ds, norm)
    tc = cfg.train_config()
    res = train(ds, config=tc, progress=lambda e, l: log.info("epoch %d loss %.6f", e, l))
    out = Path(_require(cfg.out, "--out"))
    path = out / "model.json" if out.suffix != ".json" else out
    save_model(path, res.params, tc, normalize=norm, loss_history=res.loss_history,
               train_interval=ds.interval.as_list(), data_seed=ds.seed, run_config=cfg.to_dict())
    print(f"wrote {path}")
    print(f"loss: first epoch {res.loss_history[0]:.6f}, last epoch {res.loss_history[-1]:.6f}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    params, meta = load_model(_require(cfg.model, "--model"))
    trained_norm = bool(meta.get("normalize", False))
    want = trained_norm if cfg.normalize is None else cfg.normalize
    if want != trained_norm:
        raise PreprocessingMismatch(
            f"model was trained with normalize={trained_norm}, evaluation requested {want}"
        )
    ds = _prepare(read_dataset(_require(cfg.data, "--data")), want)
    per_system, agg = evaluate_model(params, ds)
    report = build_report(
        {"model": cfg.model, "data": cfg.data, "normalize": want,
         "val_interval": ds.interval.as_list(), "train_config": meta.get("train_config")},
        per_system, agg, {"val": ds.counts()}, config=cfg.to_dict(),
    )
    out = Path(cfg.out or ".")
    path = out / "report.json" if out.suffix != ".json" else out
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for s in per_system:
        print(f"system {s.system_id}: precision={s.metrics.precision} recall={s.metrics.recall}")
    print(f"mean precision={agg.mean_precision} mean recall={agg.mean_recall}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig) -> int:
    table = _require(cfg.table, "--table")
    out = Path(_require(cfg.out, "--out"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    rows, _ = reproduce_table(table, cfg.seed, cfg.train_config(), out, ModelCache(),
                              n_points=cfg.points, dt=cfg.dt, half_width=cfg.half_width)
    # x-coordinate distributions for the mismatched pair, raw and standardized
    train_ds, val_ds = distribution_pair(cfg.seed, cfg.points, cfg.dt, cfg.half_width)
    for tag, a, b in (("raw", train_ds, val_ds),
                      ("normalized", normalize(train_ds), normalize(val_ds))):
        d = export_distribution_data(a, b, 0, out_path=out / f"distribution_x_{tag}.csv")
        log.info("x overlap (%s): %.4f", tag, d.overlap)
    for r in rows:
        print(f"row {r['row']}: train {r['train_interval']} val {r['val_interval']} "
              f"P={r['mean_precision']} R={r['mean_recall']} "
              f"(paper {r['paper_mean_precision']}/{r['paper_mean_recall']})")
    print(f"wrote {out / f'table{table}.csv'}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorenz-stability", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, help="master seed (default 0)")
    shared.add_argument("--config", help="JSON file with default settings")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("-v", "--verbose", action="store_true")

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--points", type=int, help="points per trajectory (default 4000)")
    gen.add_argument("--dt", type=float, help="sampling step (default 0.01)")
    gen.add_argument("--half-width", dest="half_width", type=int,
                     help="stability window half-width (default 5)")

    trn = argparse.ArgumentParser(add_help=False)
    trn.add_argument("--epochs", type=int, help="default 20")
    trn.add_argument("--batch", type=int, help="default 128")
    trn.add_argument("--lr", type=float, help="default 0.001")

    norm = argparse.ArgumentParser(add_help=False)
    norm.add_argument("--normalize", dest="normalize", action="store_true", default=None,
                      help="standardize features per system")
    norm.add_argument("--no-normalize", dest="normalize", action="store_false")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", parents=[shared, gen], help="write a labelled dataset")
    p.add_argument("--interval", help="initial-condition interval 'lo,hi' (default 0,1)")
    p.add_argument("--systems", type=int, help="number of trajectories (25 train / 5 val)")
    p.add_argument("--role", choices=["train", "val"], help="default train")

    p = sub.add_parser("train", parents=[shared, trn, norm], help="train a classifier")
    p.add_argument("--data", help="dataset directory from 'generate'")

    p = sub.add_parser("evaluate", parents=[shared, norm], help="score a model")
    p.add_argument("--model", help="model.json from 'train'")
    p.add_argument("--data", help="validation dataset directory")

    p = sub.add_parser("reproduce", parents=[shared, gen, trn], help="rerun a results table")
    p.add_argument("--table", type=int, choices=[1, 2])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (NonFiniteState, NumericalDivergence, DegenerateFeature) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidConfig, PreprocessingMismatch, LorenzStabilityError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
