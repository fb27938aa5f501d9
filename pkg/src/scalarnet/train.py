"""Training loop (Adam, gradient clipping, early stopping), checkpointing,
evaluation, the data-fraction ablation harness, and full-model gradient
checking against central finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import (
    Dataset,
    Scaler,
    destandardize_predictions,
    split,
    standardize,
    standardize_with,
    take,
)
from .errors import ConfigError, NumericError
from .head import feature_importance
from .losses import LossConfig, binwise_rmse, composite_loss, metrics
from .model import ForwardTrace, ModelConfig, ScalarModel
from .tensor import Rng, Tensor

CHECKPOINT_VERSION = 1


class Adam:
    """Adaptive-moment gradient descent over a named parameter dict."""

    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, clip_norm: float = None):
        grads = {k: p.grad for k, p in self.params.items()}
        if any(g is None for g in grads.values()):
            missing = [k for k, g in grads.items() if g is None]
            raise NumericError(f"missing gradients for {missing[:3]}")
        if clip_norm is not None:
            total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > clip_norm:
                scale = clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[k] / b1c) / (
                np.sqrt(self.v[k] / b2c) + self.eps
            )


@dataclass
class Checkpoint:
    format_version: int
    config: dict
    params: dict  # path -> nested lists
    scaler: dict
    best_val_loss: float
    epoch: int

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "format_version": self.format_version,
                    "config": self.config,
                    "params": self.params,
                    "scaler": self.scaler,
                    "best_val_loss": self.best_val_loss,
                    "epoch": self.epoch,
                },
                fh,
            )

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if raw.get("format_version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"unsupported checkpoint format_version {raw.get('format_version')}"
            )
        return cls(**raw)

    def build_model(self) -> ScalarModel:
        cfg = ModelConfig.from_dict(self.config)
        p = len(self.scaler["x_mean"])
        model = ScalarModel(cfg, p)
        named = model.named_parameters()
        extra = set(self.params) - set(named)
        if extra:
            raise ConfigError(f"checkpoint has unexpected parameters: {sorted(extra)[:3]}")
        for k, t in named.items():
            if k not in self.params:
                raise ConfigError(f"checkpoint is missing parameter {k!r}")
            arr = np.asarray(self.params[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ConfigError(
                    f"checkpoint parameter {k!r} has shape {arr.shape}, "
                    f"expected {t.data.shape}"
                )
            t.data = arr
        return model

    def get_scaler(self) -> Scaler:
        s = self.scaler
        return Scaler(
            x_mean=np.asarray(s["x_mean"]),
            x_std=np.asarray(s["x_std"]),
            y_mean=float(s["y_mean"]),
            y_std=float(s["y_std"]),
        )


def _snapshot(model: ScalarModel) -> dict:
    return {k: t.data.copy() for k, t in model.named_parameters().items()}


def _checkpoint_from(model, ds, best_val, epoch) -> Checkpoint:
    return Checkpoint(
        format_version=CHECKPOINT_VERSION,
        config=model.cfg.to_dict(),
        params={k: v.tolist() for k, v in _snapshot(model).items()},
        scaler={
            "x_mean": ds.scaler.x_mean.tolist(),
            "x_std": ds.scaler.x_std.tolist(),
            "y_mean": ds.scaler.y_mean,
            "y_std": ds.scaler.y_std,
        },
        best_val_loss=best_val,
        epoch=epoch,
    )


def train(ds: Dataset, cfg: ModelConfig):
    """Mini-batch training per the end-to-end pipeline; returns the
    best-validation checkpoint and the per-epoch history."""
    if ds.scaler is None:
        raise ConfigError("train expects a standardized dataset")
    if ds.n == 0:
        raise ConfigError("empty training set")
    model = ScalarModel(cfg, ds.p)
    noise_rng = Rng(cfg.seed + 1)
    order_rng = np.random.default_rng(cfg.seed + 2)

    n_val = max(1, int(round(ds.n * cfg.val_fraction)))
    if n_val >= ds.n:
        raise ConfigError(f"dataset too small for validation carve-out (n={ds.n})")
    perm = np.random.default_rng(cfg.seed + 3).permutation(ds.n)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    x_tr, y_tr = ds.x[tr_idx], ds.y[tr_idx]
    x_val, y_val = ds.x[val_idx], ds.y[val_idx]

    opt = Adam(model.named_parameters(), cfg.learning_rate)
    history = []
    best_val, best_params, best_epoch = math.inf, _snapshot(model), 0
    bad_epochs = 0
    for epoch in range(cfg.max_epochs):
        batch_losses = []
        order = order_rng.permutation(len(x_tr))
        for b0 in range(0, len(x_tr), cfg.batch_size):
            idx = order[b0 : b0 + cfg.batch_size]
            try:
                y_hat, trace = model.forward(x_tr[idx], "train", noise_rng)
                total, parts = composite_loss(
                    y_tr[idx], y_hat, trace.mu, trace.log_sigma,
                    epoch, cfg.max_epochs, cfg.loss,
                )
                total.backward()
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch {b0 // cfg.batch_size}: {exc}"
                ) from exc
            opt.step(cfg.grad_clip_norm)
            batch_losses.append(float(total.data))

        y_hat_val, trace_val = model.forward(x_val, "eval")
        val_total, val_parts = composite_loss(
            y_val, y_hat_val, trace_val.mu, trace_val.log_sigma,
            epoch, cfg.max_epochs, cfg.loss,
        )
        val_loss = float(val_total.data)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)),
                "val_loss": val_loss,
                "kl_weight": val_parts["kl_weight"],
                "parts": val_parts,
            }
        )
        if val_loss < best_val:
            best_val, best_params, best_epoch = val_loss, _snapshot(model), epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break

    for k, t in model.named_parameters().items():
        t.data = best_params[k]
    return _checkpoint_from(model, ds, best_val, best_epoch), history


def predict(ckpt: Checkpoint, ds_raw: Dataset) -> np.ndarray:
    """Deterministic eval-mode predictions on the original target scale."""
    scaler = ckpt.get_scaler()
    if ds_raw.p != len(scaler.x_mean):
        raise ConfigError(
            f"data has {ds_raw.p} features, checkpoint expects {len(scaler.x_mean)}"
        )
    model = ckpt.build_model()
    x_std = (ds_raw.x - scaler.x_mean) / scaler.x_std
    y_hat, _ = model.forward(x_std, "eval")
    return destandardize_predictions(y_hat.data, scaler)


def evaluate(ckpt: Checkpoint, ds_raw: Dataset, n_bins: int = 5) -> dict:
    """Metrics JSON (plus the bin-wise RMSE table) for raw, unstandardized
    evaluation data."""
    from .losses import concordance_index

    y_hat = predict(ckpt, ds_raw)
    out = metrics(ds_raw.y, y_hat)
    out["ci"] = concordance_index(ds_raw.y, y_hat)
    out["bins"] = binwise_rmse(ds_raw.y, y_hat, n_bins)
    return out


def importance_scores(ckpt: Checkpoint, ds_raw: Dataset):
    """Global-tier feature importance over the whole evaluation set."""
    scaler = ckpt.get_scaler()
    model = ckpt.build_model()
    x_std = (ds_raw.x - scaler.x_mean) / scaler.x_std
    _, trace = model.forward(x_std, "eval")
    return feature_importance(trace.global_trace.k_hat, trace.global_trace.w)


def ablation_data_fraction(ds_raw: Dataset, cfg: ModelConfig, fractions):
    """Train with and without the variational block at several training-set
    fractions; returns rows of (fraction, r2_with, r2_without) on a held-out
    test split."""
    plan = split(ds_raw, test_fraction=0.2, seed=cfg.seed)
    train_ds_raw = take(ds_raw, plan.train)
    test_ds_raw = take(ds_raw, plan.test)
    sub_rng = np.random.default_rng(cfg.seed + 10)
    rows = []
    for frac in fractions:
        if not 0.0 < frac <= 1.0:
            raise ConfigError(f"fractions must lie in (0, 1], got {frac}")
        n_sub = int(round(len(plan.train) * frac))
        if n_sub < 2 * cfg.batch_size:
            raise ConfigError(
                f"fraction {frac} leaves {n_sub} rows; need >= {2 * cfg.batch_size}"
            )
        sub_idx = np.sort(sub_rng.permutation(len(plan.train))[:n_sub])
        sub = standardize(take(train_ds_raw, sub_idx))
        r2 = {}
        for use_var in (True, False):
            variant_cfg = ModelConfig.from_dict(
                {**cfg.to_dict(), "use_variational": use_var}
            )
            ckpt, _ = train(sub, variant_cfg)
            r2[use_var] = metrics(test_ds_raw.y, predict(ckpt, test_ds_raw))["r2"]
        rows.append({"fraction": frac, "r2_variational": r2[True], "r2_ablated": r2[False]})
    return rows


def gradcheck(seed: int = 0, h: float = 1e-5, beta0: float = 0.01) -> dict:
    """Compare analytic gradients of the composite loss on a tiny model
    against central finite differences, with frozen dropout mask and frozen
    reparameterization noise.

    Returns {"max_rel_error", "worst_param", "per_param"}.
    """
    cfg = ModelConfig(
        groups=[[0, 3], [3, 6]],
        k=2,
        d=2,
        components=(4, 3, 2),
        loss=LossConfig(omega_mse=0.7, huber_delta=0.5, beta0=beta0),
        seed=seed,
    )
    model = ScalarModel(cfg, 6)
    data_rng = Rng(seed + 100)
    x = data_rng.normal((3, 6))
    y = data_rng.normal(3)
    noise = {
        "mask": data_rng.bernoulli(0.8, (3, 6)),
        "eps": data_rng.normal((3, model.d)),
    }

    def loss_value():
        y_hat, trace = model.forward(x, "train", noise=noise)
        total, _ = composite_loss(
            y, y_hat, trace.mu, trace.log_sigma, 50, 100, cfg.loss
        )
        return total

    total = loss_value()
    total.backward()
    named = model.named_parameters()
    analytic = {k: t.grad.copy() for k, t in named.items()}

    per_param, worst, worst_key = {}, 0.0, None
    for k, t in named.items():
        num = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_value().data)
            flat[i] = orig - h
            dn = float(loss_value().data)
            flat[i] = orig
            nflat[i] = (up - dn) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(analytic[k]), np.abs(num)), 1e-4)
        rel = float((np.abs(analytic[k] - num) / denom).max())
        per_param[k] = rel
        if rel > worst:
            worst, worst_key = rel, k
    return {"max_rel_error": worst, "worst_param": worst_key, "per_param": per_param}
