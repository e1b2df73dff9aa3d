"""Run configuration and dataset manifests.

The run config is a human-editable text file of `key = value` lines
('#' comments allowed) covering training and blob-detector settings plus the
deterministic flag; unknown keys are rejected.  CLI flags override file
values.  A dataset manifest is a text file of `image<TAB>annotation` lines,
paths resolved relative to the manifest's directory; every referenced file
must exist at load time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .blobs import BlobParams
from .train import TrainConfig


@dataclass
class RunConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 100
    dropout_rate: float = 0.5
    width_divisor: int = 1
    seed: int = 0
    max_steps: int | None = None
    threshold: float = 0.5
    min_area: int = 100
    max_area: int = 800
    connectivity: int = 8
    deterministic: bool = True

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            dropout_rate=self.dropout_rate,
            width_divisor=self.width_divisor,
            seed=self.seed,
            max_steps=self.max_steps,
        )

    def blob_params(self) -> BlobParams:
        return BlobParams(
            threshold=self.threshold,
            min_area=self.min_area,
            max_area=self.max_area,
            connectivity=self.connectivity,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    if raw.lower() in ("none", ""):
        if key == "max_steps":
            return None
        raise ValueError(f"key {key!r} cannot be empty")
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"key {key!r} expects a boolean, got {raw!r}")
    if ftype in ("int", "int | None"):
        return int(raw)
    if ftype == "float":
        return float(raw)
    raise ValueError(f"unhandled config field type for {key!r}")


def load_run_config(path: str) -> RunConfig:
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                setattr(cfg, key, _parse_value(key, value))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return cfg


def default_config_text() -> str:
    cfg = RunConfig()
    lines = ["# sinpoint run configuration (defaults shown)\n"]
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}\n")
    return "".join(lines)


@dataclass
class ManifestEntry:
    image_path: str
    annotation_path: str


def load_pairs(path: str) -> list[tuple[str, str]]:
    """Two-column tab-separated file; paths resolved against the file's
    directory and checked for existence."""
    base = os.path.dirname(os.path.abspath(path))
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two tab-separated paths, got {line!r}")
            first = os.path.join(base, parts[0])
            second = os.path.join(base, parts[1])
            for p in (first, second):
                if not os.path.exists(p):
                    raise FileNotFoundError(f"{path}:{lineno}: referenced file missing: {p}")
            pairs.append((first, second))
    return pairs


def load_manifest(path: str) -> list[ManifestEntry]:
    return [ManifestEntry(image_path=a, annotation_path=b) for a, b in load_pairs(path)]
