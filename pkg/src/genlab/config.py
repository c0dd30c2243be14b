"""Strict JSON configuration for capacity sweeps.

Every key is checked: unknown keys and out-of-domain values raise
:class:`ConfigError` naming the offending key. Defaults (echoed into
``config.resolved.json`` next to the results):

=====================  =============================================
widths                 [4, 8, 16, 32, 64]   critic width multipliers
seeds                  [0, 1, 2]            seed indices per width
baseline_width         16                   fixed-width independent critic
master_seed            0                    overridden by $GENLAB_SEED
dataset                gaussian_ring, 8 components, radius 0.8, sigma 0.04
sizes                  n1 = n2 = 2048, n_test = 1024
gan                    20000 steps, batch 64, Adam(1e-4, 0.5, 0.999),
                       latent 16, generator hidden [64, 64], critic depth 2,
                       eval every 500, mean reduction, auxiliary on
independent            5000 steps, batch 64, SGD lr 0.01 cosine to 0
embedding              identity
out_dir                "runs/sweep"
=====================  =============================================
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import DistributionSpec, SplitSizes
from .metrics import EmbeddingSpec
from .training import AdamSettings


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GanTemplate:
    latent_dim: int = 16
    generator_hidden: tuple[int, ...] = (64, 64)
    disc_depth: int = 2
    total_steps: int = 20000
    batch_size: int = 64
    adam: AdamSettings = field(default_factory=AdamSettings)
    eval_every: int = 500
    n_eval_gen: int = 1024
    auxiliary_enabled: bool = True
    reduction: str = "mean"


@dataclass(frozen=True)
class IndependentTemplate:
    steps: int = 5000
    batch_size: int = 64
    base_lr: float = 0.01
    floor_lr: float = 0.0
    depth: int = 2
    eval_every: int = 500
    reduction: str = "mean"


@dataclass(frozen=True)
class SweepSpec:
    widths: tuple[int, ...] = (4, 8, 16, 32, 64)
    seeds: tuple[int, ...] = (0, 1, 2)
    baseline_width: int = 16
    master_seed: int = 0
    dataset: DistributionSpec = field(default_factory=DistributionSpec)
    sizes: SplitSizes = field(default_factory=SplitSizes)
    gan: GanTemplate = field(default_factory=GanTemplate)
    independent: IndependentTemplate = field(default_factory=IndependentTemplate)
    embedding: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    out_dir: str = "runs/sweep"

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {
    "dataset": DistributionSpec,
    "sizes": SplitSizes,
    "gan": GanTemplate,
    "adam": AdamSettings,
    "independent": IndependentTemplate,
    "embedding": EmbeddingSpec,
}

_INT_LISTS = {"widths", "seeds", "generator_hidden"}

_CHOICES = {
    "kind": {
        "dataset": ("gaussian_ring", "checkerboard", "spiral"),
        "embedding": ("identity", "fixed_random_projection"),
    },
    "reduction": ("mean", "sum"),
}

_NONNEGATIVE = {"master_seed", "seed", "floor_lr", "eps"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_value(path: str, name: str, default, value, section: str):
    if name in _INT_LISTS:
        lo = 0 if name == "seeds" else 1
        if not isinstance(value, list) or not value or not all(_is_int(v) and v >= lo for v in value):
            raise ConfigError(f"{path}: expected a nonempty list of integers >= {lo}, got {value!r}")
        if name != "generator_hidden" and len(set(value)) != len(value):
            raise ConfigError(f"{path}: duplicate entries in {value!r}")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if _is_int(default):
        if not _is_int(value):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        lo = 0 if name in _NONNEGATIVE else 1
        if value < lo:
            raise ConfigError(f"{path}: expected an integer >= {lo}, got {value}")
        return value
    if isinstance(default, float):
        if not (_is_int(value) or isinstance(value, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
        if name in ("beta1", "beta2"):
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{path}: expected a value in [0, 1), got {value}")
        elif name in _NONNEGATIVE:
            if value < 0:
                raise ConfigError(f"{path}: expected a number >= 0, got {value}")
        elif value <= 0:
            raise ConfigError(f"{path}: expected a number > 0, got {value}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        allowed = _CHOICES.get(name)
        if isinstance(allowed, dict):
            allowed = allowed.get(section)
        if allowed is not None and value not in allowed:
            raise ConfigError(f"{path}: expected one of {list(allowed)}, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _build(cls, data, path: str):
    if isinstance(data, str) and cls is DistributionSpec:
        data = {"kind": data}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key {where!r}; expected one of {sorted(known)}")
    section = path.rsplit(".", 1)[-1] if path else ""
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, where)
        else:
            kwargs[key] = _check_value(where, key, getattr(defaults, key), value, section)
    return replace(defaults, **kwargs)


def spec_from_dict(data: dict) -> SweepSpec:
    spec = _build(SweepSpec, data, "")
    if spec.sizes.n1 != spec.sizes.n2:
        raise ConfigError(f"sizes: n1 and n2 must be equal, got {spec.sizes.n1} and {spec.sizes.n2}")
    if spec.gan.batch_size < 2 or spec.gan.batch_size > spec.sizes.n1:
        raise ConfigError("gan.batch_size: expected 2 <= batch_size <= sizes.n1")
    try:
        spec.dataset.validate()
    except ValueError as exc:
        raise ConfigError(f"dataset: {exc}") from None
    return spec


def parse_config(path) -> SweepSpec:
    """Read a sweep config; $GENLAB_SEED, when set, overrides master_seed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    spec = spec_from_dict(data)
    env = os.environ.get("GENLAB_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"GENLAB_SEED: expected an integer, got {env!r}") from None
        if seed < 0:
            raise ConfigError(f"GENLAB_SEED: expected an integer >= 0, got {seed}")
        spec = replace(spec, master_seed=seed)
    return spec
