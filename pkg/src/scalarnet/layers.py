"""Affine layers and the two-layer tanh blocks used by every subnetwork."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Rng, Tensor


def glorot(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return (rng.uniform((fan_in, fan_out)) * 2.0 - 1.0) * limit


@dataclass
class Affine:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: Rng, fan_in: int, fan_out: int, zero: bool = False) -> "Affine":
        w = np.zeros((fan_in, fan_out)) if zero else glorot(rng, fan_in, fan_out)
        return cls(Tensor(w), Tensor(np.zeros(fan_out)))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


@dataclass
class Mlp2:
    """affine -> tanh -> affine"""

    l1: Affine
    l2: Affine

    @classmethod
    def init(cls, rng: Rng, fan_in: int, hidden: int, fan_out: int) -> "Mlp2":
        return cls(Affine.init(rng, fan_in, hidden), Affine.init(rng, hidden, fan_out))

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(self.l1(x).tanh())

    def params(self, prefix: str) -> dict:
        return {**self.l1.params(f"{prefix}.l1"), **self.l2.params(f"{prefix}.l2")}


def hidden_width(p_in: int) -> int:
    # width floor keeps 1- and 2-feature groups from collapsing to a bottleneck
    return max(p_in, 8)
