"""Linear layers and MLP stacks on top of the autodiff core."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    """Affine map x @ w + b for row-batched inputs."""

    def __init__(self, w: Tensor, b: Tensor):
        self.w = w
        self.b = b

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "Linear":
        w = Tensor(glorot_uniform(rng, in_dim, out_dim), requires_grad=True)
        b = Tensor(np.zeros(out_dim), requires_grad=True)
        return cls(w, b)

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.w)
        return ad.add(y, ad.repeat_rows(self.b, x.shape[0]))


class MLP:
    """Stack of Linear layers with ReLU between them and a linear output."""

    def __init__(self, layers: list[Linear]):
        self.layers = layers

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int,
               hidden: Sequence[int], out_dim: int) -> "MLP":
        dims = [in_dim, *hidden, out_dim]
        return cls([Linear.create(rng, a, b) for a, b in zip(dims[:-1], dims[1:])])

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"{prefix}.layer{i}.w", layer.w))
            out.append((f"{prefix}.layer{i}.b", layer.b))
        return out
