"""Training loop, Adam optimizer, DNN baseline and sweep machinery.

Mini-batches are drawn per scene so every batch shares one similar-scene
neighborhood; batch order is shuffled across scenes each epoch. Runs are
deterministic given the seed: fixed shuffles, fixed parameter order,
fixed reduction order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .autodiff import Tensor, backward
from .features import Example, FeatureSchema
from .head import LossWeights, ce_loss, total_loss
from .metrics import evaluate
from .model import (DnnParams, ModelConfig, PreparedBatch, SwanParams,
                    dnn_forward, encode_batch, init_dnn_params,
                    init_swan_params, resolve_neighbors, swan_forward)
from .srg import SceneRelationGraph, build_srg


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings, loss weights and the model hyperparameters."""

    model: ModelConfig = field(default_factory=ModelConfig)
    model_kind: str = "swan"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 2
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.lr < 0.0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("rates and sizes must be positive")
        if self.model_kind not in ("swan", "dnn"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "model":
                value = value.to_json()
            elif f.name == "loss":
                value = {"alpha": value.alpha, "beta": value.beta,
                         "gamma": value.gamma}
            out[f.name] = value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        kwargs = dict(obj)
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_json(kwargs["model"])
        if "loss" in kwargs:
            kwargs["loss"] = LossWeights(**kwargs["loss"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


class Adam:
    """Standard Adam over a fixed-order parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)
            p.data = p.data - self.lr * update

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class TrainResult:
    params: SwanParams | DnnParams
    epoch_losses: list[float]


def _scene_batches(dataset: Sequence[Example], schema: FeatureSchema,
                   params, graph: SceneRelationGraph | None,
                   batch_size: int) -> list[PreparedBatch]:
    """Encode the dataset once and cut per-scene example lists into batches."""
    groups: dict[str, list[Example]] = {}
    for ex in dataset:
        groups.setdefault(ex.scene_id, []).append(ex)
    batches = []
    for sid in sorted(groups):
        examples = groups[sid]
        neighbors: list[str] = []
        if params.kind == "swan":
            if sid not in graph.profiles:
                raise ValueError(f"training scene {sid!r} missing from the graph; "
                                 "build the graph from the same training data")
            neighbors = resolve_neighbors(graph, sid, graph.profiles[sid], params)
        idx, scene_idx = encode_batch(examples, schema, params.embeddings)
        labels = np.array([ex.label for ex in examples], dtype=np.float64)
        for lo in range(0, len(examples), batch_size):
            hi = min(lo + batch_size, len(examples))
            batches.append(PreparedBatch(
                scene_id=sid,
                feature_idx={k: v[lo:hi] for k, v in idx.items()},
                scene_idx=scene_idx[lo:hi],
                labels=labels[lo:hi],
                neighbor_ids=neighbors))
    return batches


def _batch_loss(params, batch: PreparedBatch, weights: LossWeights) -> Tensor:
    if params.kind == "swan":
        flags = params.config.flags
        out = swan_forward(params, batch, training=True)
        eff = LossWeights(
            alpha=weights.alpha,
            beta=weights.beta if flags.loss_cos else 0.0,
            gamma=weights.gamma if (flags.loss_var and flags.aem) else 0.0)
        return total_loss(batch.labels, out.yhat, out.aeg_outputs, out.w, eff,
                          literal_var=params.config.var_loss_literal)
    yhat = dnn_forward(params, batch)
    return ce_loss(batch.labels, yhat)


def train(dataset: Sequence[Example], graph: SceneRelationGraph | None,
          config: TrainConfig,
          schema: FeatureSchema | None = None) -> TrainResult:
    """Mini-batch Adam on the combined loss; returns params and the loss curve.

    The per-epoch loss is the example-weighted mean of batch losses.
    Aborts with the offending batch index if the loss ever goes
    non-finite. The feature schema normally travels with the dataset
    (load_dataset and the generator attach it); pass it explicitly for
    hand-built example lists.
    """
    if len(dataset) == 0:
        raise ValueError("train needs a non-empty dataset")
    if config.model_kind == "swan" and graph is None:
        raise ValueError("the full model needs a scene relation graph")

    scene_ids = sorted({ex.scene_id for ex in dataset})
    schema = _require_schema(dataset, schema)
    if config.model_kind == "swan":
        params = init_swan_params(schema, scene_ids, config.model, config.seed)
    else:
        params = init_dnn_params(schema, scene_ids, config.model, config.seed)

    rng = np.random.default_rng(config.seed)
    batches = _scene_batches(_shuffled(dataset, rng), schema, params, graph,
                             config.batch_size)
    opt = Adam(params.parameters(), lr=config.lr, beta1=config.beta1,
               beta2=config.beta2, eps=config.adam_eps)

    epoch_losses: list[float] = []
    order = np.arange(len(batches))
    n_examples = sum(len(b.scene_idx) for b in batches)
    for epoch in range(config.epochs):
        rng.shuffle(order)
        total = 0.0
        for step, b_idx in enumerate(order):
            batch = batches[b_idx]
            loss = _batch_loss(params, batch, config.loss)
            value = loss.item()
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {step} "
                    f"(scene {batch.scene_id!r})")
            total += value * len(batch.scene_idx)
            if config.lr > 0.0:
                backward(loss)
                opt.step()
            opt.zero_grad()
        epoch_losses.append(total / n_examples)
    return TrainResult(params=params, epoch_losses=epoch_losses)


def _shuffled(dataset: Sequence[Example], rng: np.random.Generator) -> list[Example]:
    order = rng.permutation(len(dataset))
    return [dataset[i] for i in order]


def _require_schema(dataset, schema) -> FeatureSchema:
    schema = schema or getattr(dataset, "schema", None)
    if schema is None:
        raise ValueError("no feature schema: pass schema= or use a dataset "
                         "that carries one")
    return schema


def baseline_dnn(dataset: Sequence[Example], config: TrainConfig,
                 schema: FeatureSchema | None = None) -> TrainResult:
    """Single-tower baseline on the same embeddings, cross-entropy only."""
    cfg = TrainConfig(model=config.model, model_kind="dnn", lr=config.lr,
                      beta1=config.beta1, beta2=config.beta2,
                      adam_eps=config.adam_eps, batch_size=config.batch_size,
                      epochs=config.epochs, seed=config.seed, loss=config.loss)
    return train(dataset, None, cfg, schema=schema)


# ---------------------------------------------------------------------------
# hyperparameter sweeps


SWEEPABLE = ("tau", "cc_threshold", "n_aeg", "n_seg", "alpha", "beta", "gamma",
             "lr", "epochs", "batch_size", "k_neighbors", "min_weight")


def _config_with(config: TrainConfig, param: str, value: float) -> TrainConfig:
    model_fields = {f.name for f in fields(ModelConfig)}
    obj = config.to_json()
    if param in ("alpha", "beta", "gamma"):
        obj["loss"][param] = value
    elif param in model_fields:
        obj["model"][param] = _coerce_like(ModelConfig, param, value)
    else:
        obj[param] = _coerce_like(TrainConfig, param, value)
    return TrainConfig.from_json(obj)


def _coerce_like(cls, name: str, value):
    kind = {f.name: f.type for f in fields(cls)}.get(name, "float")
    return int(value) if "int" in str(kind) else value


def gate_saturation(gates: np.ndarray | None, tolerance: float = 0.05) -> float | None:
    """Fraction of selector gates within `tolerance` of 0 or 1."""
    if gates is None:
        return None
    near = (gates <= tolerance) | (gates >= 1.0 - tolerance)
    return float(near.mean())


def run_sweep(param: str, values: Sequence[float], train_set: Sequence[Example],
              test_set: Sequence[Example], schema: FeatureSchema,
              graph: SceneRelationGraph | None, config: TrainConfig,
              ) -> list[dict]:
    """Train one model per value and report its evaluation metrics.

    Sweeping `cc_threshold` rebuilds the scene relation graph per value;
    every other parameter reuses the supplied graph. Each entry carries
    the AUC summary plus, for the full model, the selector gate
    saturation fraction on the test set.
    """
    if param not in SWEEPABLE:
        raise ValueError(f"unknown sweep parameter {param!r}; one of {SWEEPABLE}")
    from .model import predict_scores

    results = []
    for value in values:
        cfg = _config_with(config, param, value)
        g = graph
        n_key = len(graph.key_features) if graph is not None else None
        if param == "cc_threshold":
            g = build_srg(train_set, schema, cc_threshold=float(value),
                          buckets=cfg.model.buckets)
            n_key = len(g.key_features)
        result = train(train_set, g, cfg, schema=schema)
        report = evaluate(result.params, g, test_set)
        entry = {"param": param, "value": value,
                 "auc_all": report.auc_all,
                 "auc_cold_start": report.auc_cold_start,
                 "final_loss": result.epoch_losses[-1],
                 "n_key_features": n_key}
        if cfg.model_kind == "swan":
            _, gates = predict_scores(result.params, g, test_set,
                                      collect_gates=True)
            entry["gate_saturation"] = gate_saturation(gates)
        results.append(entry)
    return results
