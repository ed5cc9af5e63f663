"""Run configuration: one TOML file, one root seed.

Precedence, lowest to highest: built-in defaults, the config file, the
``CHECKNET_OUT_DIR`` environment variable (output directory only), command
line flags.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .basemodel import BaseArch, ConfigError, SynthSpec
from .campaign import CampaignSpec
from .verifier import CheckNetHyper

OUT_ENV = "CHECKNET_OUT_DIR"


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"  # or "csv"
    synthetic: SynthSpec = SynthSpec()
    train_csv: str | None = None
    test_csv: str | None = None
    n_classes: int | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    dataset: DatasetConfig = DatasetConfig()
    base: BaseArch = BaseArch()
    checknet: CheckNetHyper = CheckNetHyper()
    campaign: CampaignSpec = field(default_factory=CampaignSpec)

    def validate(self) -> "RunConfig":
        d = self.dataset
        if d.kind not in ("synthetic", "csv"):
            raise ConfigError(f"dataset.kind must be 'synthetic' or 'csv', not {d.kind!r}")
        if d.kind == "csv":
            for name in ("train_csv", "test_csv"):
                path = getattr(d, name)
                if not path or not Path(path).is_file():
                    raise ConfigError(f"dataset.{name} {path!r} does not exist")
        if self.base.epochs < 0 or self.base.batch_size < 1 or self.base.lr <= 0:
            raise ConfigError(f"invalid base training settings {self.base}")
        c = self.checknet
        if c.n_outputs < 1 or c.n_sets < 1 or c.bits < 1 or c.n_pairs < 1:
            raise ConfigError("checknet N_o, N_s, l, N_h must be positive")
        th, tc = c.thresholds()
        if not 0 <= th <= c.bits or not 0 <= tc <= c.n_sets:
            raise ConfigError(f"thresholds T_h={th}, T_c={tc} out of range")
        n_classes = d.synthetic.n_classes if d.kind == "synthetic" else d.n_classes
        if n_classes is not None and n_classes > c.n_outputs:
            raise ConfigError(f"N_c={n_classes} exceeds N_o={c.n_outputs}")
        self.campaign.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    kwargs = {}
    for key, value in values.items():
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{where}.{key}")
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "root")


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    doc: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from exc
    if os.environ.get(OUT_ENV):
        doc["out_dir"] = os.environ[OUT_ENV]
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = doc
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_dict(doc).validate()
