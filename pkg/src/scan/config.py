"""Flat ``key=value`` experiment configs.

Blank lines and lines starting with ``#`` are ignored; unknown keys are an
error. Example::

    seed=7
    widths=8,8
    epochs=5
    rmo.enabled=true
    dataset.kind=synthetic-blobs
    dataset.blur=1,4
"""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .data import DatasetSpec
from .errors import FormatError
from .network import config_digest
from .training import RmoConfig, TrainConfig


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.split(",") if x.strip())


def _range(v: str) -> tuple[float, float] | None:
    if v.strip().lower() in ("", "none"):
        return None
    parts = [float(x) for x in v.split(",")]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f"expected 'lo,hi', got {v!r}")
    return parts[0], parts[1]


TRAIN_KEYS = {
    "seed": ("seed", int),
    "widths": ("widths", _ints),
    "epochs": ("epochs", int),
    "lr": ("lr", float),
    "batch_size": ("batch_size", int),
    "momentum": ("momentum", float),
    "weight_decay": ("weight_decay", float),
    "lr_drop": ("lr_drop", float),
    "lsc.enabled": ("lsc", _bool),
    "sac.enabled": ("sac", _bool),
    "dtype": ("dtype", str),
}
RMO_KEYS = {
    "lambda": ("lam", float),
    "rmo.enabled": ("enabled", _bool),
    "rmo.aggregation": ("aggregation", str),
}
DATASET_KEYS = {
    "dataset.kind": ("kind", str),
    "dataset.classes": ("classes", int),
    "dataset.train_samples": ("train_samples", int),
    "dataset.test_samples": ("test_samples", int),
    "dataset.size": ("size", int),
    "dataset.blur": ("blur", _range),
    "dataset.seed": ("seed", int),
    "dataset.inner_scale": ("inner_scale", _range),
    "dataset.noise": ("noise", float),
    "dataset.path": ("path", str),
}


def parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _apply(obj, table, pairs):
    updates = {}
    for key, value in pairs.items():
        if key in table:
            field, conv = table[key]
            try:
                updates[field] = conv(value)
            except ValueError as exc:
                raise FormatError(f"bad value for {key}: {exc}") from exc
    try:
        return replace(obj, **updates)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def dataset_from_pairs(pairs: dict[str, str], base: DatasetSpec = DatasetSpec()) -> DatasetSpec:
    unknown = set(pairs) - set(DATASET_KEYS)
    if unknown:
        raise FormatError(f"unknown dataset keys: {', '.join(sorted(unknown))}")
    return _apply(base, DATASET_KEYS, pairs)


def parse_config(text: str) -> TrainConfig:
    pairs = parse_pairs(text)
    unknown = set(pairs) - set(TRAIN_KEYS) - set(RMO_KEYS) - set(DATASET_KEYS)
    if unknown:
        raise FormatError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = _apply(TrainConfig(), TRAIN_KEYS, pairs)
    rmo = _apply(RmoConfig(), RMO_KEYS, pairs)
    ds = dataset_from_pairs({k: v for k, v in pairs.items() if k in DATASET_KEYS})
    if cfg.dtype not in ("float32", "float64"):
        raise FormatError(f"dtype must be float32 or float64, got {cfg.dtype!r}")
    return replace(cfg, rmo=rmo, dataset=ds)


def load_config(path: str | Path) -> tuple[TrainConfig, str]:
    """Parsed config and a short digest of the file text."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text), config_digest(text)


def parse_dataset_arg(arg: str) -> DatasetSpec:
    """A dataset given on the command line: a config file path or inline ``k=v,k=v`` pairs.

    Inline keys may omit the ``dataset.`` prefix; range values use ``:``
    (``blur=1:4``).
    """
    path = Path(arg)
    if path.exists():
        pairs = {k: v for k, v in parse_pairs(path.read_text(encoding="utf-8")).items()
                 if k.startswith("dataset.")}
        return dataset_from_pairs(pairs)
    pairs = {}
    for item in filter(None, (s.strip() for s in arg.split(","))):
        if "=" not in item:
            raise FormatError(f"bad dataset item {item!r}; expected key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        key = key if key.startswith("dataset.") else f"dataset.{key}"
        pairs[key] = value.replace(":", ",")
    return dataset_from_pairs(pairs)
