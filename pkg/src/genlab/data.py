"""Synthetic 2-D targets, the three-way data split, and seeded batching."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .seeding import derive_seed
from .tensor import ContractError


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class DistributionSpec:
    """Target distribution. ``kind`` picks which of the other fields matter.

    gaussian_ring: ``components`` centers evenly spaced on a circle of
    ``radius``, each with isotropic noise ``sigma``.
    checkerboard: uniform over the dark cells of a ``cells`` x ``cells`` board
    spanning [-radius, radius]^2.
    spiral: ``arms`` interleaved Archimedean arms out to ``radius`` with
    Gaussian jitter ``sigma``.
    """

    kind: str = "gaussian_ring"
    components: int = 8
    radius: float = 0.8
    sigma: float = 0.04
    cells: int = 4
    arms: int = 2
    dimension: int = 2

    def validate(self) -> None:
        if self.kind not in ("gaussian_ring", "checkerboard", "spiral"):
            raise SpecError(f"unknown distribution kind {self.kind!r}")
        if self.dimension != 2:
            raise SpecError("built-in distributions are 2-D")
        if self.kind == "gaussian_ring":
            if self.components < 1:
                raise SpecError("gaussian_ring needs components >= 1")
            if self.sigma <= 0:
                raise SpecError("gaussian_ring needs sigma > 0")
            if self.radius < 0 or (self.radius == 0 and self.components > 1):
                raise SpecError("gaussian_ring needs radius > 0")
        elif self.kind == "checkerboard":
            if self.cells < 1 or self.radius <= 0:
                raise SpecError("checkerboard needs cells >= 1 and radius > 0")
        else:
            if self.arms < 1 or self.radius <= 0 or self.sigma < 0:
                raise SpecError("spiral needs arms >= 1, radius > 0, sigma >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _ring(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    k = rng.integers(spec.components, size=n)
    angle = 2 * np.pi * k / spec.components
    centers = spec.radius * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    return centers + spec.sigma * rng.normal(size=(n, 2))


def _checkerboard(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    c = spec.cells
    dark = [(i, j) for i in range(c) for j in range(c) if (i + j) % 2 == 0]
    pick = np.array(dark)[rng.integers(len(dark), size=n)]
    offs = rng.uniform(size=(n, 2))
    cell = 2 * spec.radius / c
    return -spec.radius + (pick + offs) * cell


def _spiral(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    arm = rng.integers(spec.arms, size=n)
    t = np.sqrt(rng.uniform(size=n))
    theta = 3 * np.pi * t + 2 * np.pi * arm / spec.arms
    r = spec.radius * t
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return pts + spec.sigma * rng.normal(size=(n, 2))


_SAMPLERS = {"gaussian_ring": _ring, "checkerboard": _checkerboard, "spiral": _spiral}


def sample_distribution(spec: DistributionSpec, n: int, seed: int) -> np.ndarray:
    spec.validate()
    if n < 1:
        raise ContractError(f"need n >= 1 samples, got {n}")
    return _SAMPLERS[spec.kind](spec, n, np.random.default_rng(seed))


@dataclass(frozen=True)
class SplitSizes:
    n1: int = 2048
    n2: int = 2048
    n_test: int = 1024


@dataclass
class DatasetSplit:
    train1: np.ndarray
    train2: np.ndarray
    test: np.ndarray
    source_seed: int
    sizes: SplitSizes

    def get(self, name: str) -> np.ndarray:
        if name not in ("train1", "train2", "test"):
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)


def make_splits(spec: DistributionSpec, sizes: SplitSizes, seed: int) -> DatasetSplit:
    """Draw train1, train2 and test from three disjoint seed streams."""
    if sizes.n1 != sizes.n2:
        raise ContractError(f"training halves must be equal, got n1={sizes.n1}, n2={sizes.n2}")
    return DatasetSplit(
        train1=sample_distribution(spec, sizes.n1, derive_seed(seed, "train1")),
        train2=sample_distribution(spec, sizes.n2, derive_seed(seed, "train2")),
        test=sample_distribution(spec, sizes.n_test, derive_seed(seed, "test")),
        source_seed=seed,
        sizes=sizes,
    )


def batch_at(data: np.ndarray, batch_size: int, seed: int, step: int) -> np.ndarray:
    """Batch for one step: rows drawn uniformly with replacement."""
    rows = data.shape[0]
    if rows == 0:
        raise ContractError("cannot batch an empty dataset")
    if batch_size > rows:
        raise ContractError(f"batch_size {batch_size} exceeds {rows} rows")
    idx = np.random.default_rng((seed, step)).integers(rows, size=batch_size)
    return data[idx]


def batch_iter(data: np.ndarray, batch_size: int, seed: int, start: int = 0) -> Iterator[np.ndarray]:
    step = start
    while True:
        yield batch_at(data, batch_size, seed, step)
        step += 1


@dataclass(frozen=True)
class LatentSampler:
    """i.i.d. standard normal latents; draws are keyed by (seed, step)."""

    latent_dim: int
    seed: int

    def sample(self, n: int, step: int = 0) -> np.ndarray:
        return np.random.default_rng((self.seed, step)).standard_normal((n, self.latent_dim))


def export_csv(data: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(data.shape[1])])
        for row in data:
            w.writerow([repr(float(v)) for v in row])
