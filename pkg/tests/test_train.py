import numpy as np
import pytest

from scalarnet.attention import FeatureGroupSpec
from scalarnet.data import standardize, synth_nonlinear
from scalarnet.errors import ConfigError
from scalarnet.losses import LossConfig
from scalarnet.model import ModelConfig, ScalarModel
from scalarnet.tensor import Rng
from scalarnet.train import (
    Checkpoint,
    evaluate,
    gradcheck,
    predict,
    train,
)

GROUPS = [[0, 4], [4, 8]]


def tiny_dataset(n=64, noise=0.05, seed=1):
    spec = FeatureGroupSpec(GROUPS)
    return synth_nonlinear(n, spec, noise, seed=seed)


def quick_cfg(**kw):
    base = dict(
        groups=GROUPS,
        max_epochs=30,
        batch_size=16,
        learning_rate=3e-3,
        patience=10,
        seed=0,
    )
    base.update(kw)
    return ModelConfig(**base)


class TestGradcheck:
    def test_default_passes(self):
        report = gradcheck(seed=0)
        assert report["max_rel_error"] < 1e-4, report["worst_param"]

    def test_beta0_zero_latent_path_still_gets_gradient(self):
        from scalarnet.losses import composite_loss

        cfg = ModelConfig(groups=[[0, 3], [3, 6]], k=2, d=2, components=(4, 3, 2),
                          loss=LossConfig(beta0=0.0), seed=0)
        model = ScalarModel(cfg, 6)
        rng = Rng(5)
        x, y = rng.normal((4, 6)), rng.normal(4)
        y_hat, trace = model.forward(x, "train", rng)
        total, _ = composite_loss(y, y_hat, trace.mu, trace.log_sigma, 0, 10, cfg.loss)
        total.backward()
        named = model.named_parameters()
        for key in ("var.phi_mu.w", "var.phi_sigma.w"):
            assert np.abs(named[key].grad).max() > 0, key

    def test_zero_initialized_residual_layers_finite(self):
        cfg = ModelConfig(groups=[[0, 3], [3, 6]], k=2, d=2, components=(4, 3, 2), seed=0)
        model = ScalarModel(cfg, 6)
        for name, t in model.named_parameters().items():
            if name.startswith(("cal.phi_t", "var.phi_d")) or ".phi_p." in name:
                t.data = np.zeros_like(t.data)
        from scalarnet.losses import composite_loss

        rng = Rng(6)
        x, y = rng.normal((4, 6)), rng.normal(4)
        y_hat, trace = model.forward(x, "train", rng)
        total, _ = composite_loss(y, y_hat, trace.mu, trace.log_sigma, 0, 10, cfg.loss)
        total.backward()
        for name, t in model.named_parameters().items():
            assert np.isfinite(t.grad).all(), name


class TestTraining:
    def test_two_runs_bit_identical(self):
        ds = standardize(tiny_dataset())
        cfg = quick_cfg(max_epochs=10)
        ck1, h1 = train(ds, cfg)
        ck2, h2 = train(ds, cfg)
        assert h1 == h2
        assert ck1.params == ck2.params

    def test_checkpoint_roundtrip_bit_identical(self, tmp_path):
        ds_raw = tiny_dataset()
        ck, _ = train(standardize(ds_raw), quick_cfg(max_epochs=8))
        before = predict(ck, ds_raw)
        path = tmp_path / "model.json"
        ck.save(path)
        loaded = Checkpoint.load(path)
        after = predict(loaded, ds_raw)
        assert np.array_equal(before, after)

    def test_early_stopping_returns_best(self):
        ds = standardize(tiny_dataset())
        ck, history = train(ds, quick_cfg(max_epochs=40, patience=3))
        assert ck.best_val_loss == min(h["val_loss"] for h in history)

    def test_eval_deterministic_and_permutation_invariant(self):
        ds_raw = tiny_dataset()
        ck, _ = train(standardize(ds_raw), quick_cfg(max_epochs=8))
        m1 = evaluate(ck, ds_raw)
        m2 = evaluate(ck, ds_raw)
        assert m1 == m2
        perm = np.random.default_rng(0).permutation(ds_raw.n)
        from scalarnet.data import take

        m3 = evaluate(ck, take(ds_raw, perm))
        for key in ("mse", "rmse", "mae", "r2", "ci"):
            assert m3[key] == pytest.approx(m1[key], abs=1e-12)

    def test_requires_standardized_dataset(self):
        with pytest.raises(ConfigError, match="standardized"):
            train(tiny_dataset(), quick_cfg())

    def test_loss_eventually_decreasing_on_easy_problem(self):
        # noiseless, pure-MSE objective: smoothed loss must trend down
        ds = standardize(tiny_dataset(n=128, noise=0.0, seed=3))
        cfg = quick_cfg(
            max_epochs=60,
            patience=10_000,
            loss=LossConfig(omega_mse=1.0, beta0=0.0),
        )
        _, history = train(ds, cfg)
        losses = [h["train_loss"] for h in history]
        smooth = [np.mean(losses[i : i + 10]) for i in range(0, len(losses) - 10, 10)]
        assert smooth[-1] < smooth[0]

    def test_dimension_mismatch_on_evaluate(self):
        ds_raw = tiny_dataset()
        ck, _ = train(standardize(ds_raw), quick_cfg(max_epochs=5))
        other = synth_nonlinear(10, FeatureGroupSpec([(0, 3), (3, 6)]), 0.1, seed=0)
        with pytest.raises(ConfigError, match="features"):
            evaluate(ck, other)

    def test_variational_toggle_isolates_parameters(self):
        ds = standardize(tiny_dataset())
        ck_with, _ = train(ds, quick_cfg(max_epochs=3))
        ck_without, _ = train(ds, quick_cfg(max_epochs=3, use_variational=False))
        with_keys = set(ck_with.params)
        without_keys = set(ck_without.params)
        assert without_keys < with_keys
        assert all(k.startswith("var.") for k in with_keys - without_keys)


class TestModelConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ModelConfig.from_dict({"groups": GROUPS, "learning_rte": 0.1})

    def test_unknown_loss_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown loss config keys"):
            ModelConfig.from_dict({"groups": GROUPS, "loss": {"omega": 1.0}})

    def test_roundtrip_through_dict(self):
        cfg = quick_cfg()
        again = ModelConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            ModelConfig(groups=GROUPS, learning_rate=-1.0)
        with pytest.raises(ConfigError):
            ModelConfig(groups=GROUPS, k=0)
        with pytest.raises(ConfigError):
            ModelConfig(groups=[[0, 2], [3, 5]])
