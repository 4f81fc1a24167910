"""On-disk formats: checkpoints, embedding dumps, reports, manifests, id maps.

Everything here is byte-deterministic for a given value: JSON is written
with sorted keys and floats in shortest round-trip form, arrays as raw
little-endian float64. Wall-clock timings deliberately live in their own
file so the substantive artifacts of two identical runs compare equal.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import IO

import numpy as np

from .corpus import IdMaps
from .errors import BasketVecError
from .evaluator import MetricsReport, UserMetrics
from .model import DETERMINISTIC, EncoderNet, EncoderParams, encode
from .trainer import TrainReport

CHECKPOINT_FORMAT = "basketvec-checkpoint"
CHECKPOINT_VERSION = 1


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str, obj) -> None:
    """Sorted-keys, 2-space-indented JSON with a trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _net_arrays(net: EncoderNet) -> tuple[np.ndarray, ...]:
    return (net.w1, net.b1, net.w2, net.b2)


def write_checkpoint(path: str, params: EncoderParams, id_maps: IdMaps) -> None:
    """Flat binary checkpoint: one JSON header line, then raw array bytes.

    The header pins the format version, mode, dims, and the external ids in
    dense order; the body is the float64 little-endian concatenation of
    user (w1, b1, w2, b2) then item (w1, b1, w2, b2).
    """
    users = sorted(id_maps.user_map, key=id_maps.user_map.__getitem__)
    items = sorted(id_maps.item_map, key=id_maps.item_map.__getitem__)
    if len(users) != params.n_users or len(items) != params.n_items:
        raise ValueError(
            f"id map sizes ({len(users)}, {len(items)}) do not match params "
            f"({params.n_users}, {params.n_items})"
        )
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": params.mode,
        "hidden_dim": params.hidden_dim,
        "latent_dim": params.latent_dim,
        "users": users,
        "items": items,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for net in (params.user_net, params.item_net):
            for arr in _net_arrays(net):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path: str) -> tuple[EncoderParams, IdMaps]:
    """Inverse of ``write_checkpoint``; validates format and byte count."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BasketVecError(f"unreadable checkpoint header in {path}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise BasketVecError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise BasketVecError(
            f"unsupported checkpoint version {header.get('version')!r}"
        )

    h, d = header["hidden_dim"], header["latent_dim"]
    users, items = header["users"], header["items"]
    shapes = []
    for n_entities in (len(users), len(items)):
        shapes.extend([(n_entities, h), (h,), (h, 2 * d), (2 * d,)])
    expected = sum(int(np.prod(s)) for s in shapes)
    flat = np.frombuffer(body, dtype="<f8")
    if flat.size != expected:
        raise BasketVecError(
            f"checkpoint body holds {flat.size} floats, expected {expected}"
        )
    arrays = []
    start = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(flat[start : start + size].reshape(shape).copy())
        start += size
    params = EncoderParams(
        user_net=EncoderNet(*arrays[:4]),
        item_net=EncoderNet(*arrays[4:]),
        mode=header["mode"],
    )
    id_maps = IdMaps(
        user_map={u: i for i, u in enumerate(users)},
        item_map={v: i for i, v in enumerate(items)},
    )
    return params, id_maps


def write_embeddings_tsv(sink: IO[str], params: EncoderParams, id_maps: IdMaps) -> None:
    """Per-entity posterior parameters as TSV.

    Row layout: kind, external id, D mean columns, then D variance columns.
    Deterministic-mode checkpoints have no meaningful variance head, so the
    variance columns are omitted there.
    """
    with_var = params.mode != DETERMINISTIC
    for kind, mapping in (("user", id_maps.user_map), ("item", id_maps.item_map)):
        ids = sorted(mapping, key=mapping.__getitem__)
        g = encode(params, kind, np.arange(len(ids)))
        var = np.exp(g.log_var)
        for dense, ext in enumerate(ids):
            cols = [kind, ext]
            cols.extend(repr(float(x)) for x in g.mu[dense])
            if with_var:
                cols.extend(repr(float(x)) for x in var[dense])
            sink.write("\t".join(cols) + "\n")


def train_report_to_dict(report: TrainReport) -> dict:
    return {
        "params_digest": report.params_digest,
        "trajectory": [
            {"epoch": e, "elbo": s.elbo, "recon": s.recon, "kl": s.kl}
            for e, s in enumerate(report.trajectory)
        ],
    }


def write_train_report(out_dir: str, report: TrainReport) -> None:
    """train_report.json + plot-ready train_report.csv, timings kept apart."""
    write_json(os.path.join(out_dir, "train_report.json"), train_report_to_dict(report))
    with open(os.path.join(out_dir, "train_report.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,elbo,recon,kl\n")
        for e, s in enumerate(report.trajectory):
            fh.write(f"{e},{s.elbo!r},{s.recon!r},{s.kl!r}\n")
    write_json(
        os.path.join(out_dir, "timings.json"),
        {"epoch_seconds": list(report.epoch_seconds)},
    )


def metrics_to_dict(report: MetricsReport, include_per_user: bool = True) -> dict:
    out = {
        "k": report.k,
        "users": report.users,
        "recall_mean": report.recall_mean,
        "ndcg_mean": report.ndcg_mean,
    }
    if include_per_user:
        out["per_user"] = [
            {"user": m.user, "recall": m.recall, "ndcg": m.ndcg}
            for m in report.per_user
        ]
    return out


def write_metrics_report(path: str, report: MetricsReport) -> None:
    write_json(path, metrics_to_dict(report))


def read_metrics_report(path: str) -> MetricsReport:
    raw = read_json(path)
    if "per_user" not in raw:
        raise BasketVecError(f"{path} has no per_user block; cannot reconstruct")
    per_user = tuple(
        UserMetrics(user=m["user"], recall=m["recall"], ndcg=m["ndcg"])
        for m in raw["per_user"]
    )
    return MetricsReport(
        k=raw["k"],
        per_user=per_user,
        recall_mean=raw["recall_mean"],
        ndcg_mean=raw["ndcg_mean"],
    )


def write_id_maps(out_dir: str, id_maps: IdMaps) -> None:
    """users.tsv / items.tsv with "external_id<TAB>dense_index" lines."""
    for name, mapping in (("users.tsv", id_maps.user_map), ("items.tsv", id_maps.item_map)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            for ext in sorted(mapping, key=mapping.__getitem__):
                fh.write(f"{ext}\t{mapping[ext]}\n")


def read_id_maps(dir_path: str) -> IdMaps:
    maps = []
    for name in ("users.tsv", "items.tsv"):
        mapping: dict[str, int] = {}
        with open(os.path.join(dir_path, name), "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                ext, dense = line.split("\t")
                mapping[ext] = int(dense)
        maps.append(mapping)
    return IdMaps(user_map=maps[0], item_map=maps[1])


def write_manifest(path: str, command: str, config: dict, input_paths: list[str]) -> None:
    """Reproducibility record: command, config snapshot, input digests."""
    write_json(
        path,
        {
            "command": command,
            "config": config,
            "inputs": {p: sha256_file(p) for p in sorted(input_paths)},
        },
    )
