"""Command-line pipeline: ingest | synth | train | eval | compare | export.

Configuration is a flat ``key=value`` text file; every key is also exposed
as a same-named flag (dashes for underscores), and flags win over the file.
Each run locks its output directory, writes its artifacts, and leaves a
manifest (command + merged config + input digests) sufficient to reproduce
the run bit for bit.

Failure classes map to distinct exit codes so scripts can branch without
parsing messages: 2 config, 3 missing input, 4 bad data, 5 training abort,
6 degenerate comparison, 7 output directory already locked.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields

from .corpus import (
    ColumnSpec,
    SplitDataset,
    filter_dataset,
    parse_interactions,
    reindex,
    temporal_split,
    write_interactions,
)
from .errors import (
    BasketVecError,
    CorpusError,
    DegenerateComparisonError,
    SamplingError,
    TrainingError,
)
from .evaluator import evaluate, paired_t_test
from .recommender import point_embeddings
from .serialize import (
    read_checkpoint,
    read_id_maps,
    read_metrics_report,
    write_checkpoint,
    write_embeddings_tsv,
    write_id_maps,
    write_json,
    write_manifest,
    write_metrics_report,
    write_train_report,
)
from .synthgen import SynthConfig, generate
from .trainer import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_DATA = 4
EXIT_TRAINING = 5
EXIT_DEGENERATE = 6
EXIT_LOCKED = 7

LOCK_NAME = ".lock"


class ConfigError(BasketVecError):
    """Unknown key, unparseable value, or missing required setting."""


class MissingInputError(BasketVecError):
    """A referenced input path does not exist."""


class LockedError(BasketVecError):
    """The output directory is already claimed by another run."""


@dataclass
class RunConfig:
    """Merged view of file paths, corpus thresholds, and training knobs.

    Defaults < config file < command-line flags. ``data`` may be a raw
    corpus file (split on the fly, no activity filtering) or an ingest
    output directory (pre-split, with persisted id maps).
    """

    data: str | None = None
    out: str | None = None
    checkpoint: str | None = None
    metrics_a: str | None = None
    metrics_b: str | None = None

    col_user: str = "user_id"
    col_item: str = "item_id"
    col_order: str = "order_id"
    col_time: str = "timestamp"
    delimiter: str = ","
    min_orders_per_user: int = 7
    min_items_per_user: int = 30
    min_users_per_item: int = 16
    split_ratio: float = 0.8

    seed: int = 0
    mode: str = "variational"
    epochs: int = 5
    batch_size: int = 512
    lr: float = 1e-3
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    neg_ratio: int = 5
    kl_scale_mode: str = "per-batch"
    prior_alpha: float = 1.0
    resample: bool = True
    triples_per_epoch: int = 100_000
    dim: int = 64
    hidden: int | None = None
    checkpoint_every: int = 0
    k: int = 10

    n_users: int = 100
    n_items: int = 100
    n_clusters: int = 4
    orders_per_user: int = 20
    items_per_order: int = 5
    in_cluster_prob: float = 0.9
    user_pool_size: int | None = None

    def column_spec(self) -> ColumnSpec:
        return ColumnSpec(
            user=self.col_user,
            item=self.col_item,
            order=self.col_order,
            time=self.col_time,
            delimiter=self.delimiter,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.lr,
            rms_decay=self.rms_decay,
            rms_epsilon=self.rms_epsilon,
            seed=self.seed,
            neg_ratio=self.neg_ratio,
            kl_scale_mode=self.kl_scale_mode,
            mode=self.mode,
            latent_dim=self.dim,
            hidden_dim=self.hidden,
            prior_alpha=self.prior_alpha,
            resample_each_epoch=self.resample,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_users=self.n_users,
            n_items=self.n_items,
            n_clusters=self.n_clusters,
            orders_per_user=self.orders_per_user,
            items_per_order=self.items_per_order,
            in_cluster_prob=self.in_cluster_prob,
            seed=self.seed,
            user_pool_size=self.user_pool_size,
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_OPTIONAL_INT_KEYS = {"hidden", "user_pool_size"}
_OPTIONAL_STR_KEYS = {"data", "out", "checkpoint", "metrics_a", "metrics_b"}


def _parse_value(key: str, raw: str):
    """Convert a config-file or flag string to the key's declared type."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key in _OPTIONAL_INT_KEYS:
        if raw.lower() in ("", "none"):
            return None
        key_type = "int"
    elif key in _OPTIONAL_STR_KEYS:
        return raw
    else:
        key_type = _FIELD_TYPES[key]
    try:
        if key_type == "int":
            return int(raw)
        if key_type == "float":
            return float(raw)
        if key_type == "bool":
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {key!r}") from None


def _read_config_file(path: str) -> dict:
    if not os.path.isfile(path):
        raise MissingInputError(f"config file {path} does not exist")
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
            key, _, raw = stripped.partition("=")
            values[key.strip()] = _parse_value(key.strip(), raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="basketvec",
        description="Train and evaluate basket-triple embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "parse, filter, and temporally split a raw corpus",
        "synth": "generate a clustered synthetic corpus",
        "train": "train encoders on a corpus or ingest directory",
        "eval": "score a checkpoint against the held-out split",
        "compare": "paired t-test between two per-user metrics files",
        "export": "dump a checkpoint's embeddings as TSV",
    }
    visible = {
        "data": "raw corpus file or ingest output directory",
        "out": "output directory for artifacts (locked per run)",
        "seed": "integer seed; fully determines a run",
        "mode": "variational or deterministic",
        "epochs": "training epochs",
        "batch_size": "triples per gradient step",
        "lr": "RMSprop learning rate",
        "neg_ratio": "negatives per positive triple",
        "triples_per_epoch": "positive triples drawn each epoch",
        "k": "ranking cutoff for metrics",
        "dim": "latent embedding size",
        "hidden": "encoder hidden width (default 2*dim)",
    }
    for command, help_text in helps.items():
        p = sub.add_parser(command, help=help_text)
        p.add_argument("--config", help="flat key=value configuration file")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(
                flag,
                dest=f.name,
                metavar="V",
                help=visible.get(f.name, argparse.SUPPRESS),
            )
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, object] = {}
    if args.config:
        values.update(_read_config_file(args.config))
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _parse_value(f.name, raw)
    return RunConfig(**values)


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        if getattr(cfg, key) is None:
            raise ConfigError(f"command requires {key!r} (flag --{key.replace('_', '-')})")


def _require_file(path: str, what: str) -> None:
    if not os.path.exists(path):
        raise MissingInputError(f"{what} {path} does not exist")


def _load_split(cfg: RunConfig):
    """Dataset + id maps from either an ingest directory or a raw corpus file."""
    _require_file(cfg.data, "data path")
    columns = cfg.column_spec()
    if os.path.isdir(cfg.data):
        for name in ("train.csv", "test.csv", "users.tsv", "items.tsv"):
            _require_file(os.path.join(cfg.data, name), "ingest artifact")
        with open(os.path.join(cfg.data, "train.csv"), encoding="utf-8") as fh:
            train_part = parse_interactions(fh, columns)
        with open(os.path.join(cfg.data, "test.csv"), encoding="utf-8") as fh:
            test_part = parse_interactions(fh, columns)
        split = SplitDataset(train=train_part, test=test_part, split_ratio=cfg.split_ratio)
        return split, read_id_maps(cfg.data)
    with open(cfg.data, encoding="utf-8") as fh:
        data = parse_interactions(fh, columns)
    return temporal_split(data, cfg.split_ratio), reindex(data)


class _OutputDir:
    """Create-or-reuse an output directory holding an exclusive lock file."""

    def __init__(self, path: str):
        self.path = path
        self.lock_path = os.path.join(path, LOCK_NAME)
        self._fd: int | None = None

    def __enter__(self) -> str:
        os.makedirs(self.path, exist_ok=True)
        try:
            self._fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockedError(
                f"{self.path} is locked by another run (remove {self.lock_path} "
                "if that run is dead)"
            ) from None
        return self.path

    def __exit__(self, *exc_info) -> None:
        if self._fd is not None:
            os.close(self._fd)
            os.remove(self.lock_path)


def _manifest(out_dir: str, command: str, cfg: RunConfig, inputs: list[str]) -> None:
    write_manifest(
        os.path.join(out_dir, "manifest.json"),
        command,
        cfg.as_dict(),
        [p for p in inputs if p and os.path.isfile(p)],
    )


def cmd_ingest(cfg: RunConfig) -> None:
    _require(cfg, "data", "out")
    _require_file(cfg.data, "data file")
    columns = cfg.column_spec()
    with open(cfg.data, encoding="utf-8") as fh:
        raw = parse_interactions(fh, columns)
    filtered = filter_dataset(
        raw,
        min_orders_per_user=cfg.min_orders_per_user,
        min_items_per_user=cfg.min_items_per_user,
        min_users_per_item=cfg.min_users_per_item,
    )
    split = temporal_split(filtered, cfg.split_ratio)
    id_maps = reindex(filtered)
    with _OutputDir(cfg.out) as out:
        for name, part in (("train.csv", split.train), ("test.csv", split.test)):
            with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
                write_interactions(part, fh, columns)
        write_id_maps(out, id_maps)
        _manifest(out, "ingest", cfg, [cfg.data])


def cmd_synth(cfg: RunConfig) -> None:
    _require(cfg, "out")
    corpus = generate(cfg.synth_config())
    with _OutputDir(cfg.out) as out:
        with open(os.path.join(out, "corpus.csv"), "w", encoding="utf-8") as fh:
            write_interactions(corpus, fh, cfg.column_spec())
        _manifest(out, "synth", cfg, [])


def cmd_train(cfg: RunConfig) -> None:
    _require(cfg, "data", "out")
    split, id_maps = _load_split(cfg)
    train_cfg = cfg.train_config()
    with _OutputDir(cfg.out) as out:

        def checkpoint_hook(epoch: int, params, _stats) -> None:
            if cfg.checkpoint_every > 0 and (epoch + 1) % cfg.checkpoint_every == 0:
                write_checkpoint(
                    os.path.join(out, f"checkpoint_epoch_{epoch + 1}.bin"),
                    params,
                    id_maps,
                )

        params, report = train(
            split,
            train_cfg,
            cfg.triples_per_epoch,
            id_maps=id_maps,
            epoch_callback=checkpoint_hook,
        )
        write_checkpoint(os.path.join(out, "checkpoint.bin"), params, id_maps)
        write_train_report(out, report)
        _manifest(out, "train", cfg, [cfg.data])


def cmd_eval(cfg: RunConfig) -> None:
    _require(cfg, "data", "checkpoint", "out")
    _require_file(cfg.checkpoint, "checkpoint")
    params, id_maps = read_checkpoint(cfg.checkpoint)
    split, _ = _load_split(cfg)
    zu, zi = point_embeddings(params)
    report = evaluate(zu, zi, split.test, cfg.k, id_maps)
    with _OutputDir(cfg.out) as out:
        write_metrics_report(os.path.join(out, "metrics.json"), report)
        _manifest(out, "eval", cfg, [cfg.data, cfg.checkpoint])


def cmd_compare(cfg: RunConfig) -> None:
    _require(cfg, "metrics_a", "metrics_b", "out")
    _require_file(cfg.metrics_a, "metrics file")
    _require_file(cfg.metrics_b, "metrics file")
    a = read_metrics_report(cfg.metrics_a)
    b = read_metrics_report(cfg.metrics_b)
    users_a = [m.user for m in a.per_user]
    users_b = [m.user for m in b.per_user]
    if users_a != users_b:
        raise CorpusError(
            "metrics files cover different user sets; comparison must be paired"
        )
    recall_t, recall_p = paired_t_test(
        [m.recall for m in a.per_user], [m.recall for m in b.per_user]
    )
    ndcg_t, ndcg_p = paired_t_test(
        [m.ndcg for m in a.per_user], [m.ndcg for m in b.per_user]
    )
    with _OutputDir(cfg.out) as out:
        write_json(
            os.path.join(out, "comparison.json"),
            {
                "users": len(users_a),
                "recall": {"t": recall_t, "p": recall_p},
                "ndcg": {"t": ndcg_t, "p": ndcg_p},
            },
        )
        _manifest(out, "compare", cfg, [cfg.metrics_a, cfg.metrics_b])


def cmd_export(cfg: RunConfig) -> None:
    _require(cfg, "checkpoint", "out")
    _require_file(cfg.checkpoint, "checkpoint")
    params, id_maps = read_checkpoint(cfg.checkpoint)
    with _OutputDir(cfg.out) as out:
        with open(os.path.join(out, "embeddings.tsv"), "w", encoding="utf-8") as fh:
            write_embeddings_tsv(fh, params, id_maps)
        _manifest(out, "export", cfg, [cfg.checkpoint])


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
        _COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except LockedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCKED
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except DegenerateComparisonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (CorpusError, SamplingError, BasketVecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
