import math

import numpy as np
import pytest

from genlab.data import DistributionSpec, SplitSizes, make_splits
from genlab.nn import discriminator_spec, generator_spec, init_network
from genlab.optim import AdamState
from genlab.tensor import ContractError, Tensor
from genlab.training import (
    DistributionSampler,
    GanConfig,
    GeneratorSampler,
    IndependentDiscConfig,
    NonFiniteLossError,
    discriminator_loss,
    discriminator_update_step,
    generator_loss,
    generator_update_step,
    train_gan,
    train_independent_discriminator,
)

SMALL = SplitSizes(128, 128, 64)


def tiny_config(**kw):
    base = dict(
        sizes=SMALL,
        latent_dim=4,
        generator_hidden=(8, 8),
        disc_width=4,
        total_steps=10,
        batch_size=16,
        eval_every=5,
        n_eval_gen=64,
        master_seed=3,
    )
    base.update(kw)
    return GanConfig(**base)


def _const_critic(value, width=4):
    net = init_network(discriminator_spec(2, width), 0)
    last = net.layers[-1]
    last.W.data = np.zeros_like(last.W.data)
    last.b.data = np.full_like(last.b.data, value)
    return net


def _col(*v):
    return Tensor(np.array(v, dtype=float).reshape(-1, 1))


class TestLosses:
    def test_discriminator_sum_example(self):
        loss = discriminator_loss(_col(2, 2), _col(1, 1), "sum").item()
        assert abs(loss - math.log1p(math.exp(-2))) < 1e-12
        assert loss == pytest.approx(0.1269, abs=5e-5)

    def test_generator_sum_example(self):
        loss = generator_loss(_col(3, 3), "sum").item()
        assert abs(loss - math.log1p(math.exp(-6))) < 1e-12
        assert loss == pytest.approx(2.4757e-3, rel=1e-4)

    @pytest.mark.parametrize("reduction", ["mean", "sum"])
    def test_zero_critic_is_ln2(self, reduction):
        assert discriminator_loss(_col(0, 0), _col(0, 0), reduction).item() == math.log(2)
        assert generator_loss(_col(0, 0, 0), reduction).item() == math.log(2)

    def test_mean_convention(self):
        loss = discriminator_loss(_col(2, 2), _col(1, 1), "mean").item()
        assert abs(loss - math.log1p(math.exp(-1))) < 1e-12

    def test_bad_reduction(self):
        with pytest.raises(ValueError):
            generator_loss(_col(1), "max")


class TestUpdateSteps:
    def test_zero_critic_loss_through_update(self, rng):
        disc = _const_critic(0.0)
        gen = init_network(generator_spec(4, 2, (8, 8)), 1)
        loss = discriminator_update_step(disc, gen, rng.normal(size=(8, 2)), rng.normal(size=(8, 4)), AdamState())
        assert loss == math.log(2)

    def test_constant_critic_generator_loss(self, rng):
        gen = init_network(generator_spec(4, 2, (8, 8)), 1)
        loss = generator_update_step(gen, _const_critic(3.0), rng.normal(size=(2, 4)), AdamState(), "sum")
        assert abs(loss - math.log1p(math.exp(-6))) < 1e-12

    def test_discriminator_step_leaves_generator(self, rng):
        gen = init_network(generator_spec(4, 2, (8, 8)), 1)
        disc = init_network(discriminator_spec(2, 8), 2)
        before_g, before_d = gen.checksum(), disc.checksum()
        discriminator_update_step(disc, gen, rng.normal(size=(16, 2)), rng.normal(size=(16, 4)), AdamState())
        assert gen.checksum() == before_g
        assert disc.checksum() != before_d
        assert all(p.grad is None for p in gen.parameters())

    def test_generator_step_leaves_discriminator(self, rng):
        gen = init_network(generator_spec(4, 2, (8, 8)), 1)
        disc = init_network(discriminator_spec(2, 8), 2)
        before_g, before_d = gen.checksum(), disc.checksum()
        generator_update_step(gen, disc, rng.normal(size=(16, 4)), AdamState())
        assert disc.checksum() == before_d
        assert gen.checksum() != before_g
        assert all(p.requires_grad for p in disc.parameters())

    def test_nan_loss_aborts(self, rng):
        disc = init_network(discriminator_spec(2, 4), 0)
        disc.layers[-1].b.data = np.array([np.nan])
        gen = init_network(generator_spec(4, 2, (8, 8)), 1)
        with pytest.raises(NonFiniteLossError) as info:
            discriminator_update_step(disc, gen, rng.normal(size=(4, 2)), rng.normal(size=(4, 4)), AdamState(), step=7)
        assert info.value.step == 7

    def test_batch_size_mismatch(self, rng):
        with pytest.raises(ContractError):
            discriminator_update_step(
                _const_critic(0), None, rng.normal(size=(4, 2)), None, AdamState(), fake_batch=rng.normal(size=(3, 2))
            )


class TestTrainGan:
    def test_history_length(self):
        b = train_gan(tiny_config(eval_every=1))
        assert [h["step"] for h in b.history] == list(range(1, 11))
        assert b.d_updates == b.g_updates == 10
        assert b.original.step == b.auxiliary.step == b.generator.step == 10

    def test_history_keys_and_finite(self):
        b = train_gan(tiny_config())
        keys = set(b.history[-1]["divergences"])
        assert keys == {"original/train1", "original/test", "auxiliary/train1", "auxiliary/test"}
        for h in b.history:
            assert all(math.isfinite(e.value) and math.isfinite(e.standard_error) for e in h["divergences"].values())

    def test_deterministic(self):
        a, b = train_gan(tiny_config()), train_gan(tiny_config())
        for x, y in ((a.generator, b.generator), (a.original, b.original), (a.auxiliary, b.auxiliary)):
            assert x.checksum() == y.checksum()
        assert [h["divergences"] for h in a.history] == [h["divergences"] for h in b.history]

    def test_auxiliary_is_pure_observer(self):
        trajectories = {}
        for enabled in (True, False):
            seen = []
            train_gan(tiny_config(auxiliary_enabled=enabled), on_step=lambda s, b: seen.append(b.generator.checksum()))
            trajectories[enabled] = seen
        assert trajectories[True] == trajectories[False]

    def test_seeds_differ(self):
        assert train_gan(tiny_config(master_seed=1)).generator.checksum() != train_gan(tiny_config(master_seed=2)).generator.checksum()

    def test_log_file(self, tmp_path):
        import json

        train_gan(tiny_config(), log_path=tmp_path / "log.ndjson")
        lines = (tmp_path / "log.ndjson").read_text().splitlines()
        assert [json.loads(l)["step"] for l in lines] == [5, 10]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_last_good(self):
        def poison(step, bundle):
            if step == 6:
                bundle.generator.layers[0].W.data[:] = np.inf

        with pytest.raises(NonFiniteLossError) as info:
            train_gan(tiny_config(), on_step=poison)
        assert info.value.step == 7
        assert info.value.last_good is not None and info.value.last_good.history[-1]["step"] == 5
        assert np.all(np.isfinite(info.value.last_good.generator.layers[0].W.data))

    @pytest.mark.parametrize("kw", [dict(total_steps=0), dict(eval_every=0), dict(batch_size=1), dict(reduction="max")])
    def test_invalid_config(self, kw):
        with pytest.raises(ContractError):
            train_gan(tiny_config(**kw))


class TestIndependent:
    @pytest.fixture(scope="class")
    @classmethod
    def split(cls):
        return make_splits(DistributionSpec(), SplitSizes(1024, 1024, 1024), 11)

    def test_real_sampler_gives_zero_divergence(self, split):
        res = train_independent_discriminator(
            DistributionSampler(DistributionSpec()), split, IndependentDiscConfig(steps=1000, seed=4)
        )
        for name in ("train1", "train2", "test"):
            e = res.estimates[name]
            assert abs(e.value) < 3 * e.standard_error, name

    def test_untrained_critic_zero_on_matching_data(self, split):
        res = train_independent_discriminator(DistributionSampler(DistributionSpec()), split, IndependentDiscConfig(steps=0))
        assert res.curve == []
        for e in res.estimates.values():
            assert abs(e.value) < 3 * e.standard_error

    def test_untrained_critic_zero_on_average(self, split):
        # a single random critic can score a bad generator, but the output
        # layer is sign-symmetric at init so the payoff averages out
        gen = init_network(generator_spec(4, 2, (8, 8)), 0)
        vals = np.array([
            train_independent_discriminator(gen, split, IndependentDiscConfig(steps=0, seed=s)).train_estimate.value
            for s in range(40)
        ])
        assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(len(vals))

    def test_separates_a_bad_generator(self, split):
        gen = init_network(generator_spec(4, 2, (8, 8)), 0)
        res = train_independent_discriminator(gen, split, IndependentDiscConfig(steps=1000))
        assert res.train_estimate.value > 10 * res.train_estimate.standard_error
        assert res.estimates["test"].value > 0

    def test_deterministic_and_generator_untouched(self, split):
        gen = init_network(generator_spec(4, 2, (8, 8)), 0)
        before = gen.checksum()
        cfg = IndependentDiscConfig(steps=200, eval_every=50, split="train2", seed=9)
        a = train_independent_discriminator(gen, split, cfg)
        b = train_independent_discriminator(gen, split, cfg)
        assert gen.checksum() == before
        assert a.train_estimate.value == b.train_estimate.value
        assert a.curve == b.curve and [s for s, _ in a.curve] == [50, 100, 150, 200]
        assert a.disc.checksum() == b.disc.checksum()

    def test_sample_count_must_match_split(self, split):
        gen = init_network(generator_spec(4, 2, (8, 8)), 0)
        with pytest.raises(ContractError):
            train_independent_discriminator(gen, split, IndependentDiscConfig(generator_sample_count=512))
        with pytest.raises(ContractError):
            train_independent_discriminator(gen, split, IndependentDiscConfig(split="test"))

    def test_mutating_generator_detected(self, split):
        class Drifting(GeneratorSampler):
            def sample(self, n, seed):
                out = super().sample(n, seed)
                self.net.layers[0].b.data = self.net.layers[0].b.data + 1.0
                return out

        gen = Drifting(init_network(generator_spec(4, 2, (8, 8)), 0), 4)
        with pytest.raises(ContractError):
            train_independent_discriminator(gen, split, IndependentDiscConfig(steps=1))
