"""Adaptive kernel attention: per-sample kernels, softmax kernel weights,
weighted kernel-modulated features, and a zero-initialized projection with a
residual connection. Used per feature group and again (separate parameters)
as the global tier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import Affine, Mlp2, hidden_width
from .tensor import Rng, Tensor, concat


@dataclass(frozen=True)
class FeatureGroupSpec:
    """Ordered half-open column intervals partitioning [0, p)."""

    groups: tuple

    def __init__(self, groups):
        object.__setattr__(self, "groups", tuple((int(s), int(e)) for s, e in groups))
        if not self.groups:
            raise ConfigError("feature group spec is empty")
        pos = 0
        for s, e in self.groups:
            if s != pos:
                raise ConfigError(
                    f"group intervals must be sorted, disjoint and contiguous; "
                    f"expected start {pos}, got {s}"
                )
            if e <= s:
                raise ConfigError(f"group [{s}, {e}) has non-positive width")
            pos = e

    @property
    def n_features(self) -> int:
        return self.groups[-1][1]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def widths(self) -> list:
        return [e - s for s, e in self.groups]

    def validate_width(self, p: int) -> None:
        if self.n_features != p:
            raise ConfigError(
                f"group spec covers [0, {self.n_features}) but data has {p} features"
            )


@dataclass
class KernelAttentionParams:
    """phi_k: p_in -> k*p_in, phi_w: p_in -> k (both two-layer tanh nets);
    phi_p: affine p_in -> p_in, zero-initialized so training starts at the
    residual identity."""

    p_in: int
    k: int
    phi_k: Mlp2
    phi_w: Mlp2
    phi_p: Affine

    @classmethod
    def init(cls, rng: Rng, p_in: int, k: int) -> "KernelAttentionParams":
        if p_in < 1 or k < 1:
            raise ConfigError(f"need p_in >= 1 and k >= 1, got p_in={p_in}, k={k}")
        h = hidden_width(p_in)
        return cls(
            p_in=p_in,
            k=k,
            phi_k=Mlp2.init(rng, p_in, h, k * p_in),
            phi_w=Mlp2.init(rng, p_in, h, k),
            phi_p=Affine.init(rng, p_in, p_in, zero=True),
        )

    def params(self, prefix: str) -> dict:
        return {
            **self.phi_k.params(f"{prefix}.phi_k"),
            **self.phi_w.params(f"{prefix}.phi_w"),
            **self.phi_p.params(f"{prefix}.phi_p"),
        }


@dataclass
class AttentionTrace:
    """Intermediates kept for the KL-free diagnostics and feature importance.

    k_hat and w are detached copies; z stays in the graph.
    """

    k_hat: np.ndarray  # (batch, k, p_in), unit rows up to the eps guard
    w: np.ndarray  # (batch, k), simplex rows
    z: Tensor  # (batch, p_in)


def kernel_attention_forward(x: Tensor, params: KernelAttentionParams) -> AttentionTrace:
    b, p_in = x.data.shape
    if p_in != params.p_in:
        raise ShapeError(
            f"input has {p_in} columns but attention params expect {params.p_in}"
        )
    k = params.k
    raw = params.phi_k(x)  # (b, k*p_in)
    w = params.phi_w(x).softmax()  # (b, k)
    attended = None
    k_hat_blocks = []
    for j in range(k):
        kj = raw.cols(j * p_in, (j + 1) * p_in).l2_normalize()
        term = w.cols(j, j + 1) * (x * kj)
        attended = term if attended is None else attended + term
        k_hat_blocks.append(kj.data)
    z = params.phi_p(attended) + x
    k_hat = np.stack(k_hat_blocks, axis=1)
    return AttentionTrace(k_hat=k_hat, w=w.data.copy(), z=z)


def grouped_attention_forward(x: Tensor, spec: FeatureGroupSpec, per_group_params):
    """Run kernel attention on each column group and concatenate in spec order."""
    if len(per_group_params) != spec.n_groups:
        raise ConfigError(
            f"got {len(per_group_params)} parameter sets for {spec.n_groups} groups"
        )
    spec.validate_width(x.data.shape[1])
    traces = [
        kernel_attention_forward(x.cols(s, e), params)
        for (s, e), params in zip(spec.groups, per_group_params)
    ]
    z = traces[0].z if len(traces) == 1 else concat([t.z for t in traces])
    return z, traces
