"""Similarity Attention Network.

Scores each similar scene against the target scene from the user's
perspective; the scores are softmax-normalized over the retrieved
similar-scene set and used to mix the similar-scene embeddings into a
single vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP


@dataclass
class SanOutput:
    """Attention weights over the similar scenes and their weighted mix."""

    weights: Tensor  # [B, I], rows sum to 1
    vec: Tensor      # [B, d_scene]


def san_forward(e_user: Tensor, e_target: Tensor,
                similar_embeddings: Sequence[Tensor], score_mlp: MLP) -> SanOutput:
    """Attend over similar scenes conditioned on the user.

    Each score is MLP[e_user (+) e_target (+) (e_target - e_s) (+)
    (e_target * e_s)] where (+) is concatenation and * the elementwise
    product; weights are the softmax of the scores across the similar
    scenes and the output vector is the weight-mixed similar-scene
    embedding. All inputs are row batches.
    """
    similar_embeddings = list(similar_embeddings)
    if not similar_embeddings:
        raise ValueError("san_forward needs at least one similar scene")
    scores = []
    for e_s in similar_embeddings:
        features = ad.concat([e_user, e_target,
                              ad.sub(e_target, e_s), ad.mul(e_target, e_s)])
        scores.append(score_mlp(features))  # [B, 1]
    weights = ad.softmax(ad.concat(scores))  # [B, I]
    d = similar_embeddings[0].shape[1]
    vec = None
    for i, e_s in enumerate(similar_embeddings):
        w_i = ad.repeat_cols(ad.slice_cols(weights, i, i + 1), d)
        term = ad.mul(w_i, e_s)
        vec = term if vec is None else ad.add(vec, term)
    return SanOutput(weights=weights, vec=vec)
