"""Shared fixtures: a small planted dataset with its graph and config."""

import pytest

from swan.datagen import GenConfig, generate
from swan.head import LossWeights
from swan.model import ModelConfig
from swan.srg import build_srg
from swan.training import TrainConfig


def tiny_gen_config(**overrides):
    base = dict(archetypes=2, train_scenes=6, cold_scenes=2, users=40,
                items_per_scene=30, examples_per_scene=60, user_features=2,
                item_features=3, scene_attr_features=2, label_noise=0.05,
                seed=11, attr_noise=0.2)
    base.update(overrides)
    return GenConfig(**base)


def tiny_model_config(**overrides):
    base = dict(embed_dim=4, expert_dim=4, n_aeg=2, n_seg=2, tau=0.5,
                k_neighbors=3, min_weight=1, san_hidden=(6,),
                expert_hidden=(6,), selector_hidden=(6,), final_hidden=(4,),
                dnn_hidden=(8,), buckets=4)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_train_config(**overrides):
    base = dict(model=tiny_model_config(), epochs=2, batch_size=32, seed=5,
                lr=1e-2, loss=LossWeights(alpha=1.0, beta=1e-3, gamma=1e-3))
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def tiny_data():
    result = generate(tiny_gen_config())
    graph = build_srg(result.train, result.schema, cc_threshold=0.05, buckets=4)
    return result, graph
