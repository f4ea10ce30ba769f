"""Adaptive Ensemble-experts Module.

The Expert Selector turns the user embedding and the similar-scene mix
into per-expert selection probabilities plus a single shared threshold;
a smooth logistic comparison (`dics`) converts each probability/threshold
pair into a gate in (0, 1) without breaking gradients. The adaptive
group's experts are gated at the decision layer; the shared group's
experts run unconditionally for every scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP


def dics(p: float, t: float, tau: float) -> float:
    """Smooth gate: logistic((p - t) / tau).

    Strictly increasing in p, strictly decreasing in t; tau sharpens the
    transition toward a hard 0/1 comparison as it shrinks.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = (p - t) / tau
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def dics_gate(p: Tensor, t: Tensor, tau: float) -> Tensor:
    """Tensor form of `dics` for a [B, K] probability matrix and [B, K] thresholds."""
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    return ad.sigmoid(ad.scale(ad.sub(p, t), 1.0 / tau))


@dataclass
class AemParams:
    """Selector MLPs, temperature and the two expert groups."""

    prob_mlp: MLP    # e_user (+) vec_san -> N_a logits
    thre_mlp: MLP    # vec_san -> 1 logit
    aeg: list[MLP]   # adaptive experts, e_in -> d_expert
    seg: list[MLP]   # shared experts, e_in -> d_expert
    tau: float

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.aeg or not self.seg:
            raise ValueError("both expert groups need at least one expert")


@dataclass
class SelectorOutput:
    p: Tensor  # [B, N_a] selection probabilities
    t: Tensor  # [B, 1] shared threshold
    w: Tensor  # [B, N_a] gate values


def expert_selector(e_user: Tensor, vec_san: Tensor,
                    params: AemParams) -> SelectorOutput:
    """Per-expert probabilities, the shared threshold and the smooth gates."""
    p = ad.sigmoid(params.prob_mlp(ad.concat([e_user, vec_san])))
    t = ad.sigmoid(params.thre_mlp(vec_san))
    n = p.shape[-1]
    w = dics_gate(p, ad.repeat_cols(t, n), params.tau)
    return SelectorOutput(p=p, t=t, w=w)


def aeg_forward(e_in: Tensor, w: Tensor, experts: Sequence[MLP]) -> list[Tensor]:
    """Adaptive-group expert outputs; `w` is applied at the decision layer."""
    if w.shape[-1] != len(experts):
        raise ad.DimensionError(
            f"aeg_forward: {w.shape[-1]} gates for {len(experts)} experts")
    return [expert(e_in) for expert in experts]


def seg_forward(e_in: Tensor, experts: Sequence[MLP]) -> list[Tensor]:
    """Shared-group expert outputs, identical treatment for every scene."""
    return [expert(e_in) for expert in experts]
