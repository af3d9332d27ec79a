"""TimeGAN training, generation, and checkpoint selection at toy scale."""

import numpy as np
import pytest

from vrmotion.core import stream_rng
from vrmotion.timegan import (TimeGanConfig, TimeGanModel,
                              discriminator_accuracy, select_checkpoint,
                              timegan_generate, timegan_train)

TOY_CFG = TimeGanConfig(features=3, window_len=25, latent_dim=6, hidden=6,
                        layers=1, batch_size=64, disc_lr=1e-4,
                        recon_epochs=12, supervised_epochs=6, joint_epochs=20,
                        checkpoint_every=10)


def toy_windows(n=1200, seed=0):
    """Seeded smooth sinusoid windows with varied phase/frequency, roughly
    standard-normal marginals (the space TimeGAN trains in)."""
    rng = stream_rng(seed, "toy-windows")
    t = np.arange(25)
    phase = rng.uniform(0, 2 * np.pi, size=(n, 1, 3))
    freq = rng.uniform(0.05, 0.25, size=(n, 1, 3))
    amp = rng.uniform(0.8, 1.6, size=(n, 1, 3))
    return amp * np.sin(freq * t[None, :, None] + phase) * np.sqrt(2.0)


@pytest.fixture(scope="module")
def trained():
    windows = toy_windows()
    model, checkpoints, history = timegan_train(windows, config=TOY_CFG, seed=0)
    return windows, model, checkpoints, history


class TestTraining:
    def test_reconstruction_improves(self, trained):
        _, _, _, history = trained
        assert history.recon[-1] < history.recon[0]

    def test_checkpoints_every_ten_epochs(self, trained):
        _, _, checkpoints, _ = trained
        assert [c.epoch for c in checkpoints] == [10, 20]

    def test_deterministic(self):
        windows = toy_windows(n=1000, seed=1)
        cfg = TimeGanConfig(features=3, window_len=25, latent_dim=4, hidden=4,
                            layers=1, batch_size=64, recon_epochs=3,
                            supervised_epochs=2, joint_epochs=4,
                            checkpoint_every=2)
        a = timegan_train(windows, config=cfg, seed=5)[0]
        b = timegan_train(windows, config=cfg, seed=5)[0]
        assert a.to_dict() == b.to_dict()

    def test_needs_enough_windows(self):
        with pytest.raises(ValueError):
            timegan_train(toy_windows(n=100), config=TOY_CFG, seed=0)

    def test_window_shape_mismatch(self):
        with pytest.raises(ValueError):
            timegan_train(np.zeros((1200, 10, 3)), config=TOY_CFG, seed=0)

    def test_discriminator_not_saturated(self, trained):
        windows, model, _, _ = trained
        acc = discriminator_accuracy(model, windows[:400], seed=0)
        assert 0.4 <= acc <= 0.75


class TestGeneration:
    def test_shape_and_determinism(self, trained):
        _, model, _, _ = trained
        a = timegan_generate(model, 64, seed=9)
        b = timegan_generate(model, 64, seed=9)
        assert a.shape == (64, 25, 3)
        assert np.array_equal(a, b)

    def test_seed_matters(self, trained):
        _, model, _, _ = trained
        a = timegan_generate(model, 16, seed=1)
        b = timegan_generate(model, 16, seed=2)
        assert not np.array_equal(a, b)

    def test_generation_interface_takes_no_corpus(self):
        import inspect
        params = list(inspect.signature(timegan_generate).parameters)
        assert params == ["model", "n", "seed"]

    def test_serialization_round_trip(self, trained):
        _, model, _, _ = trained
        clone = TimeGanModel.from_dict(model.to_dict())
        assert np.array_equal(timegan_generate(model, 8, seed=3),
                              timegan_generate(clone, 8, seed=3))


class TestSelectCheckpoint:
    def _transformer(self):
        from vrmotion.preprocess import fit_quantile_transformer
        rng = stream_rng(0, "toy-transformer")
        return fit_quantile_transformer({
            "yaw": rng.normal(0, 60, 5000),
            "pitch": rng.normal(0, 12, 5000),
            "roll": rng.normal(0, 4, 5000),
        })

    def test_picks_minimum_kl(self, trained):
        _, _, checkpoints, _ = trained
        tf = self._transformer()
        ref = stream_rng(1, "ref-yaw").normal(0, 60, 20000)
        best, kls = select_checkpoint(checkpoints, tf, ref, n_eval=400, seed=0)
        assert len(kls) == len(checkpoints)
        assert kls[best.epoch] == min(kls.values())

    def test_fixed_epoch(self, trained):
        _, _, checkpoints, _ = trained
        tf = self._transformer()
        best, kls = select_checkpoint(checkpoints, tf, np.zeros(100),
                                      fixed_epoch=10)
        assert best.epoch == 10
        assert kls == {}
        with pytest.raises(ValueError):
            select_checkpoint(checkpoints, tf, np.zeros(100), fixed_epoch=7)
