"""Hierarchical projection head: three decreasing-width projections of the
global-attention output, softmax component weighting, scalar prediction, and
kernel-attention feature importance scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .layers import Mlp2, glorot, hidden_width
from .tensor import Rng, Tensor, concat


def default_components(p: int):
    c1, c2, c3 = min(16, p), min(8, p - 1), min(4, p - 2)
    if not (c1 > c2 > c3 >= 1):
        raise ConfigError(
            f"cannot pick strictly decreasing component widths for p={p}; "
            "set them explicitly or use p >= 3"
        )
    return c1, c2, c3


@dataclass
class HeadParams:
    p: int
    components: tuple  # (c1, c2, c3), strictly decreasing
    w1: Tensor
    w2: Tensor
    w3: Tensor
    phi_alpha: Mlp2  # p -> 3 tier logits
    phi_y: Mlp2  # c1+c2+c3 -> 1

    @classmethod
    def init(cls, rng: Rng, p: int, components=None) -> "HeadParams":
        c1, c2, c3 = components if components is not None else default_components(p)
        if not (c1 > c2 > c3 >= 1):
            raise ConfigError(f"need c1 > c2 > c3 >= 1, got {(c1, c2, c3)}")
        if c1 > p:
            raise ConfigError(f"c1={c1} exceeds feature count p={p}")
        total = c1 + c2 + c3
        return cls(
            p=p,
            components=(c1, c2, c3),
            w1=Tensor(glorot(rng, p, c1)),
            w2=Tensor(glorot(rng, p, c2)),
            w3=Tensor(glorot(rng, p, c3)),
            phi_alpha=Mlp2.init(rng, p, hidden_width(p), 3),
            phi_y=Mlp2.init(rng, total, hidden_width(total), 1),
        )

    def params(self, prefix: str) -> dict:
        return {
            f"{prefix}.w1": self.w1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.w3": self.w3,
            **self.phi_alpha.params(f"{prefix}.phi_alpha"),
            **self.phi_y.params(f"{prefix}.phi_y"),
        }


def head_forward(g: Tensor, params: HeadParams):
    """Predict one scalar per row of the global-attention output.

    Returns (y_hat (batch,) Tensor, alpha (batch, 3) ndarray).
    """
    alpha = params.phi_alpha(g).softmax()  # (b, 3)
    blocks = []
    for idx, w in enumerate((params.w1, params.w2, params.w3)):
        blocks.append(alpha.cols(idx, idx + 1) * (g @ w))
    y = params.phi_y(concat(blocks))  # (b, 1)
    return y.reshape(-1), alpha.data.copy()


def feature_importance(k_hat: np.ndarray, w: np.ndarray):
    """Per-feature relevance from the global tier's kernel weights and
    normalized kernels, min-max scaled to [0, 1].

    Parameters
    ----------
    k_hat: (n, k, p) normalized kernels over the evaluation set.
    w: (n, k) kernel weights.

    Returns
    -------
    (raw, normalized): two length-p vectors.
    """
    k_hat = np.asarray(k_hat, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if k_hat.ndim != 3 or w.ndim != 2 or k_hat.shape[:2] != w.shape:
        raise DataError(
            f"trace shapes do not conform: k_hat {k_hat.shape}, w {w.shape}"
        )
    if k_hat.shape[0] == 0:
        raise DataError("empty trace set")
    if k_hat.shape[2] < 2:
        raise DataError("feature importance needs p >= 2")
    raw = np.abs(np.einsum("il,ilj->ij", w, k_hat)).mean(axis=0)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        raise DataError("degenerate importance: all features scored equally")
    return raw, (raw - lo) / (hi - lo)
