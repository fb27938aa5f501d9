"""Full model: grouped kernel attention -> self-calibration -> variational
block -> global kernel attention -> hierarchical projection head, plus the
configuration record that owns every free hyperparameter.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .attention import (
    AttentionTrace,
    FeatureGroupSpec,
    KernelAttentionParams,
    grouped_attention_forward,
    kernel_attention_forward,
)
from .calibration import (
    CalibrationParams,
    VariationalParams,
    default_latent_dim,
    self_calibrate,
    variational_encode_decode,
)
from .errors import ConfigError
from .head import HeadParams, default_components, head_forward
from .losses import LossConfig
from .tensor import Rng, Tensor


@dataclass
class ModelConfig:
    groups: list  # [[start, end), ...]
    k: int = 4  # kernels per attention tier
    d: int = None  # latent dim; default derived from p
    components: tuple = None  # (c1, c2, c3); default derived from p
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 30
    grad_clip_norm: float = 5.0
    val_fraction: float = 0.1
    use_variational: bool = True
    seed: int = 0

    def __post_init__(self):
        self.spec = FeatureGroupSpec(self.groups)
        self.groups = [list(g) for g in self.spec.groups]
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.components is not None:
            self.components = tuple(int(c) for c in self.components)
        for name in ("k", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d is not None and self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if self.learning_rate <= 0 or self.grad_clip_norm <= 0:
            raise ConfigError("learning_rate and grad_clip_norm must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        loss_raw = raw.get("loss", {})
        if isinstance(loss_raw, dict):
            loss_known = {f.name for f in fields(LossConfig)}
            bad = set(loss_raw) - loss_known
            if bad:
                raise ConfigError(f"unknown loss config keys: {sorted(bad)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("spec", None)
        if d["components"] is not None:
            d["components"] = list(d["components"])
        return d


@dataclass
class ForwardTrace:
    group_traces: list  # per-group AttentionTrace
    delta: np.ndarray  # (batch,)
    gamma: np.ndarray  # (batch,)
    mu: "Tensor | None"
    log_sigma: "Tensor | None"
    global_trace: AttentionTrace
    alpha: np.ndarray  # (batch, 3)


class ScalarModel:
    """Holds all learnable parameters and runs the end-to-end forward pass."""

    def __init__(self, cfg: ModelConfig, p: int):
        cfg.spec.validate_width(p)
        self.cfg = cfg
        self.p = p
        self.d = cfg.d if cfg.d is not None else default_latent_dim(p)
        comps = cfg.components if cfg.components is not None else default_components(p)
        rng = Rng(cfg.seed)
        self.group_params = [
            KernelAttentionParams.init(rng, e - s, cfg.k) for s, e in cfg.spec.groups
        ]
        self.cal_params = CalibrationParams.init(rng, p)
        self.var_params = VariationalParams.init(rng, p, self.d)
        self.global_params = KernelAttentionParams.init(rng, p, cfg.k)
        self.head_params = HeadParams.init(rng, p, comps)

    def named_parameters(self) -> dict:
        out = {}
        for g, gp in enumerate(self.group_params):
            out.update(gp.params(f"group{g}"))
        out.update(self.cal_params.params("cal"))
        if self.cfg.use_variational:
            out.update(self.var_params.params("var"))
        out.update(self.global_params.params("global"))
        out.update(self.head_params.params("head"))
        return out

    def forward(self, x: np.ndarray, mode: str = "train", rng: Rng = None, noise=None):
        """Run the pipeline on a (batch, p) array.

        `noise` may carry precomputed {"mask", "eps"} arrays to freeze the
        stochastic draws (gradient checking). Returns (y_hat, ForwardTrace).
        """
        noise = noise or {}
        xt = Tensor(np.asarray(x, dtype=np.float64))
        z, group_traces = grouped_attention_forward(xt, self.cfg.spec, self.group_params)
        s, delta, gamma = self_calibrate(
            z, self.cal_params, mode, rng, mask=noise.get("mask")
        )
        mu = log_sigma = None
        if self.cfg.use_variational:
            v, mu, log_sigma, _ = variational_encode_decode(
                s, self.var_params, mode, rng, eps=noise.get("eps")
            )
        else:
            v = s
        global_trace = kernel_attention_forward(v, self.global_params)
        y_hat, alpha = head_forward(global_trace.z, self.head_params)
        trace = ForwardTrace(
            group_traces=group_traces,
            delta=delta.data.reshape(-1).copy(),
            gamma=gamma.data.reshape(-1).copy(),
            mu=mu,
            log_sigma=log_sigma,
            global_trace=global_trace,
            alpha=alpha,
        )
        return y_hat, trace
