"""GAN training with an original and an observing auxiliary critic, plus the
post-hoc independent critic trainer."""

from __future__ import annotations

import contextlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import tensor as T
from .data import DatasetSplit, DistributionSpec, LatentSampler, SplitSizes, batch_at, make_splits, sample_distribution
from .metrics import DivergenceEstimate, estimate_divergence
from .nn import Network, discriminator_spec, generator_spec, init_network
from .optim import AdamState, CosineSchedule, adam_step, cosine_lr, sgd_step
from .seeding import derive_seed
from .tensor import ContractError, Tensor

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    """Training produced a non-finite loss. ``last_good`` holds the bundle as
    of the most recent evaluation point (or initialization)."""

    def __init__(self, message: str, step: int, last_good: "TrainedBundle | None" = None):
        super().__init__(message)
        self.step = step
        self.last_good = last_good


# -- losses ----------------------------------------------------------------


def _reduce(x: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return T.reduce_mean(x)
    if reduction == "sum":
        return T.reduce_sum(x)
    raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")


def discriminator_loss(d_real: Tensor, d_fake: Tensor, reduction: str = "mean") -> Tensor:
    """softplus(reduce D(G(z)) - reduce D(x))."""
    return T.softplus(T.sub(_reduce(d_fake, reduction), _reduce(d_real, reduction)))


def generator_loss(d_fake: Tensor, reduction: str = "mean") -> Tensor:
    """softplus(-reduce D(G(z)))."""
    return T.softplus(T.negate(_reduce(d_fake, reduction)))


@contextlib.contextmanager
def frozen(net: Network) -> Iterator[None]:
    """Temporarily stop gradients from being recorded for ``net``'s parameters."""
    params = net.parameters()
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


def _finite_or_raise(value: float, what: str, step: int) -> None:
    if not math.isfinite(value):
        raise NonFiniteLossError(f"{what} became non-finite ({value}) at step {step}", step)


def generate(gen: Network, z: np.ndarray, train: bool = True, update_stats: bool = False) -> np.ndarray:
    with T.no_grad():
        return gen.forward(z, train=train, update_stats=update_stats).data


def discriminator_update_step(
    disc: Network,
    gen: Network | None,
    real_batch: np.ndarray,
    latent_batch: np.ndarray | None,
    adam_state: AdamState,
    reduction: str = "mean",
    fake_batch: np.ndarray | None = None,
    step: int = 0,
) -> float:
    """One Adam step on the critic's L_D. The generator is only read.

    Pass ``fake_batch`` to reuse generator outputs already computed for this
    step; otherwise they are produced from ``latent_batch`` with batch
    statistics and without touching the generator's running statistics.
    """
    if fake_batch is None:
        fake_batch = generate(gen, latent_batch, train=True, update_stats=False)
    if len(fake_batch) != len(real_batch):
        raise ContractError("real and generated batches must have the same size")
    n = len(real_batch)
    disc.zero_grad()
    out = disc.forward(np.concatenate([real_batch, fake_batch], axis=0), update_sn=True)
    d_real = _rows(out, 0, n)
    d_fake = _rows(out, n, 2 * n)
    loss = discriminator_loss(d_real, d_fake, reduction)
    value = loss.item()
    _finite_or_raise(value, "discriminator loss", step)
    loss.backward()
    adam_step(disc.parameters(), adam_state)
    disc.step += 1
    return value


def generator_update_step(
    gen: Network,
    disc: Network,
    latent_batch: np.ndarray,
    adam_state: AdamState,
    reduction: str = "mean",
    step: int = 0,
) -> float:
    """One Adam step on the generator's L_G through a read-only critic."""
    gen.zero_grad()
    with frozen(disc):
        fake = gen.forward(latent_batch, train=True, update_stats=True)
        loss = generator_loss(disc.forward(fake, update_sn=False), reduction)
    value = loss.item()
    _finite_or_raise(value, "generator loss", step)
    loss.backward()
    adam_step(gen.parameters(), adam_state)
    gen.step += 1
    return value


def _rows(x: Tensor, start: int, stop: int) -> Tensor:
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return Tensor._from_op(x.data[start:stop], (x,), backward, "rows")


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class AdamSettings:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def state(self) -> AdamState:
        return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)


@dataclass(frozen=True)
class GanConfig:
    dataset: DistributionSpec = field(default_factory=DistributionSpec)
    sizes: SplitSizes = field(default_factory=SplitSizes)
    latent_dim: int = 16
    generator_hidden: tuple[int, ...] = (64, 64)
    disc_width: int = 16
    disc_depth: int = 2
    total_steps: int = 20000
    batch_size: int = 64
    adam: AdamSettings = field(default_factory=AdamSettings)
    eval_every: int = 500
    n_eval_gen: int = 1024
    master_seed: int = 0
    auxiliary_enabled: bool = True
    reduction: str = "mean"
    # overrides so that sweep cells sharing a seed index share data and generator init
    data_seed: int | None = None
    generator_seed: int | None = None

    def validate(self) -> None:
        if self.total_steps < 1:
            raise ContractError("total_steps must be >= 1")
        if self.eval_every < 1:
            raise ContractError("eval_every must be >= 1")
        if self.batch_size < 2:
            raise ContractError("batch_size must be >= 2")
        if self.reduction not in ("mean", "sum"):
            raise ContractError("reduction must be 'mean' or 'sum'")
        self.dataset.validate()

    def seed_for(self, role: str) -> int:
        if role == "data" and self.data_seed is not None:
            return self.data_seed
        if role == "generator" and self.generator_seed is not None:
            return self.generator_seed
        return derive_seed(self.master_seed, role)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedBundle:
    generator: Network
    original: Network
    auxiliary: Network | None
    history: list[dict]
    config: GanConfig
    split: DatasetSplit
    d_updates: int = 0
    g_updates: int = 0
    wall_time_s: float = 0.0

    def snapshot(self) -> "TrainedBundle":
        return TrainedBundle(
            self.generator.copy(),
            self.original.copy(),
            self.auxiliary.copy() if self.auxiliary is not None else None,
            list(self.history),
            self.config,
            self.split,
            self.d_updates,
            self.g_updates,
            self.wall_time_s,
        )

    def eval_latents(self) -> np.ndarray:
        cfg = self.config
        return LatentSampler(cfg.latent_dim, cfg.seed_for("latent_eval")).sample(cfg.n_eval_gen)

    def final(self, role: str, eval_set: str) -> DivergenceEstimate:
        return self.history[-1]["divergences"][f"{role}/{eval_set}"]


def evaluate_critics(
    gen: Network, critics: dict[str, Network], split: DatasetSplit, z_eval: np.ndarray
) -> dict[str, DivergenceEstimate]:
    """Payoff of each critic on train1 and test against one fixed generated set."""
    fake = generate(gen, z_eval, train=False)
    out = {}
    for role, disc in critics.items():
        for name in ("train1", "test"):
            out[f"{role}/{name}"] = estimate_divergence(disc, split.get(name), fake, role, name)
    return out


StepCallback = Callable[[int, TrainedBundle], None]


def train_gan(
    config: GanConfig,
    split: DatasetSplit | None = None,
    on_step: StepCallback | None = None,
    log_path: str | Path | None = None,
) -> TrainedBundle:
    """Alternating GAN training with an observing auxiliary critic.

    Per step: original critic update, auxiliary critic update on the same real
    batch and the same generated batch, then a generator update against the
    original critic only. Every ``eval_every`` steps both critics are scored
    on train1 and test. ``on_step`` is called after every step.
    """
    config.validate()
    t0 = time.perf_counter()
    if split is None:
        split = make_splits(config.dataset, config.sizes, config.seed_for("data"))
    data_dim = split.train1.shape[1]
    gen = init_network(
        generator_spec(config.latent_dim, data_dim, config.generator_hidden), config.seed_for("generator")
    )
    dspec = discriminator_spec(data_dim, config.disc_width, config.disc_depth)
    orig = init_network(dspec, config.seed_for("disc_original"))
    aux = init_network(dspec, config.seed_for("disc_auxiliary")) if config.auxiliary_enabled else None
    opt_g, opt_o = config.adam.state(), config.adam.state()
    opt_a = config.adam.state() if aux is not None else None

    real_seed = config.seed_for("real_batches")
    zd = LatentSampler(config.latent_dim, config.seed_for("latent_d"))
    zg = LatentSampler(config.latent_dim, config.seed_for("latent_g"))
    bundle = TrainedBundle(gen, orig, aux, [], config, split)
    z_eval = bundle.eval_latents()
    critics = {"original": orig} if aux is None else {"original": orig, "auxiliary": aux}
    last_good = bundle.snapshot()
    log_fh = open(log_path, "w") if log_path is not None else None
    bs, red = config.batch_size, config.reduction
    try:
        for step in range(1, config.total_steps + 1):
            try:
                real = batch_at(split.train1, bs, real_seed, step)
                fake = generate(gen, zd.sample(bs, step), train=True, update_stats=False)
                loss_d = discriminator_update_step(orig, None, real, None, opt_o, red, fake, step)
                loss_a = None
                if aux is not None:
                    loss_a = discriminator_update_step(aux, None, real, None, opt_a, red, fake, step)
                bundle.d_updates += 1
                loss_g = generator_update_step(gen, orig, zg.sample(bs, step), opt_g, red, step)
                bundle.g_updates += 1
            except NonFiniteLossError as exc:
                exc.last_good = last_good
                raise
            if bundle.d_updates != step or bundle.g_updates != step:
                raise RuntimeError("update counters out of sync with the step index")
            if step % config.eval_every == 0:
                div = evaluate_critics(gen, critics, split, z_eval)
                record = {"step": step, "loss_d": loss_d, "loss_a": loss_a, "loss_g": loss_g, "divergences": div}
                bundle.history.append(record)
                if not all(math.isfinite(e.value) for e in div.values()):
                    raise NonFiniteLossError(f"non-finite divergence at step {step}", step, last_good)
                bundle.wall_time_s = time.perf_counter() - t0
                last_good = bundle.snapshot()
                if log_fh is not None:
                    log_fh.write(json.dumps(_log_record(record), sort_keys=True) + "\n")
            if on_step is not None:
                on_step(step, bundle)
    finally:
        if log_fh is not None:
            log_fh.close()
    bundle.wall_time_s = time.perf_counter() - t0
    return bundle


def _log_record(record: dict) -> dict:
    return {
        "step": record["step"],
        "loss_d": record["loss_d"],
        "loss_a": record["loss_a"],
        "loss_g": record["loss_g"],
        "divergences": {k: v.to_dict() for k, v in record["divergences"].items()},
    }


# -- independent critic -----------------------------------------------------------


class GeneratorSampler:
    """Frozen generator exposed as a sampler: ``sample(n, seed)``."""

    def __init__(self, net: Network, latent_dim: int):
        self.net = net
        self.latent_dim = latent_dim

    def sample(self, n: int, seed: int) -> np.ndarray:
        z = LatentSampler(self.latent_dim, seed).sample(n)
        return generate(self.net, z, train=False)

    def checksum(self) -> str:
        return self.net.checksum()


class DistributionSampler:
    """The target distribution itself, for oracle tests."""

    def __init__(self, spec: DistributionSpec):
        self.spec = spec

    def sample(self, n: int, seed: int) -> np.ndarray:
        return sample_distribution(self.spec, n, derive_seed(seed, "distribution_sampler"))

    def checksum(self) -> str:
        return repr(self.spec)


@dataclass(frozen=True)
class IndependentDiscConfig:
    width: int = 16
    depth: int = 2
    split: str = "train1"
    steps: int = 5000
    batch_size: int = 64
    base_lr: float = 0.01
    floor_lr: float = 0.0
    seed: int = 0
    generator_sample_count: int | None = None
    eval_every: int = 500
    reduction: str = "mean"

    def validate(self, split: DatasetSplit) -> None:
        if self.split not in ("train1", "train2"):
            raise ContractError(f"independent critic trains on train1 or train2, not {self.split!r}")
        n = len(split.get(self.split))
        if self.generator_sample_count is not None and self.generator_sample_count != n:
            raise ContractError(
                f"generator_sample_count ({self.generator_sample_count}) must equal the size "
                f"of {self.split} ({n})"
            )
        if self.steps < 0 or self.batch_size < 1:
            raise ContractError("steps must be >= 0 and batch_size >= 1")


@dataclass
class IndependentResult:
    disc: Network
    curve: list[tuple[int, float]]
    estimates: dict[str, DivergenceEstimate]
    config: IndependentDiscConfig

    @property
    def train_estimate(self) -> DivergenceEstimate:
        return self.estimates[self.config.split]


def train_independent_discriminator(gen, split: DatasetSplit, cfg: IndependentDiscConfig) -> IndependentResult:
    """Train a fresh critic on (real split, fixed generated set) with SGD and
    cosine decay.

    ``gen`` is anything with ``sample(n, seed)``; a bare :class:`Network`
    is wrapped as a generator with its input width as latent size. The
    generated training set is drawn once, with as many rows as the real split.
    Returns payoffs on the training split (against that fixed set) and on
    the other splits (against a separate held-out generated set).
    """
    if isinstance(gen, Network):
        gen = GeneratorSampler(gen, gen.spec.input_dim)
    cfg.validate(split)
    before = gen.checksum()
    real = split.get(cfg.split)
    n = len(real)
    fake = gen.sample(n, derive_seed(cfg.seed, "indep_fixed"))
    heldout = gen.sample(len(split.test), derive_seed(cfg.seed, "indep_heldout"))
    disc = init_network(discriminator_spec(real.shape[1], cfg.width, cfg.depth), derive_seed(cfg.seed, "indep_init"))
    sched = CosineSchedule(cfg.base_lr, cfg.steps, cfg.floor_lr)
    rs, fs = derive_seed(cfg.seed, "indep_real"), derive_seed(cfg.seed, "indep_fake")
    curve = []
    bs = min(cfg.batch_size, n)
    for step in range(cfg.steps):
        r = batch_at(real, bs, rs, step)
        f = batch_at(fake, bs, fs, step)
        disc.zero_grad()
        out = disc.forward(np.concatenate([r, f], axis=0), update_sn=True)
        loss = discriminator_loss(_rows(out, 0, bs), _rows(out, bs, 2 * bs), cfg.reduction)
        _finite_or_raise(loss.item(), "independent critic loss", step)
        loss.backward()
        sgd_step(disc.parameters(), cosine_lr(sched, step))
        disc.step += 1
        if (step + 1) % cfg.eval_every == 0:
            curve.append((step + 1, estimate_divergence(disc, real, fake).value))
    if gen.checksum() != before:
        raise ContractError("generator changed while training the independent critic")
    estimates = {}
    for name in ("train1", "train2", "test"):
        other = fake if name == cfg.split else heldout
        estimates[name] = estimate_divergence(disc, split.get(name), other, "independent", name)
    return IndependentResult(disc, curve, estimates, cfg)
