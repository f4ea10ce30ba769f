"""Synthetic dynamic multi-scene dataset generator and clustering utilities.

Scenes are planted on a small set of hidden archetypes: an archetype
fixes the item feature distributions of its scenes, the (noisy) scene
attribute values, and how user feature values translate into click
affinity. Same-archetype scenes therefore share key-feature statistics,
which is exactly the structure the scene relation graph is meant to
pick up, while cold-start scenes draw from the same archetype pool but
never appear in the training split.

Labels follow a deterministic threshold rule: click iff the latent score
(user-archetype affinity + item quality + calibrated bias) is positive,
then flipped with the configured noise probability. The bias is fit on
the training split so the positive rate lands on the configured target
after noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .features import Dataset, Example, Feature, FeatureSchema, fit_numeric_boundaries


@dataclass(frozen=True)
class GenConfig:
    """Generator knobs; the JSON config file mirrors these field names."""

    archetypes: int = 4
    train_scenes: int = 60
    cold_scenes: int = 20
    users: int = 400
    items_per_scene: int = 150
    examples_per_scene: int = 800
    user_features: int = 4
    item_features: int = 7
    scene_attr_features: int = 2
    label_noise: float = 0.1
    seed: int = 0
    positive_rate: float = 0.25
    user_vocab: int = 8
    attr_noise: float = 0.4
    archetype_spread: float = 0.7
    affinity_scale: float = 1.6
    opposed_archetypes: bool = True
    quality_scale: float = 1.5
    quality_decay: float = 0.62
    quality_profile: tuple[float, ...] | None = (1.0, 0.62, 0.33, 0.26, 0.11,
                                                 0.0, 0.0)

    def __post_init__(self):
        counts = (self.archetypes, self.train_scenes, self.cold_scenes,
                  self.users, self.items_per_scene, self.examples_per_scene,
                  self.user_features, self.item_features,
                  self.scene_attr_features, self.user_vocab)
        if any(c < 1 for c in counts):
            raise ValueError("all counts must be positive")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must be in [0, 0.5)")
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must be in (0, 1)")

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GenConfig":
        kwargs = dict(obj)
        if kwargs.get("quality_profile") is not None:
            kwargs["quality_profile"] = tuple(kwargs["quality_profile"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> "GenConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class GroundTruth:
    """Hidden generator state, emitted for diagnostics only."""

    scene_archetypes: dict[str, int]
    archetype_user_weights: list  # [A][user_features][user_vocab]
    quality_weights: list         # [item_features]
    item_means: list              # [A][item_features]
    item_sigmas: list             # [A][item_features]
    bias: float

    def to_json(self) -> dict:
        return {
            "archetype_user_weights": self.archetype_user_weights,
            "bias": self.bias,
            "item_means": self.item_means,
            "item_sigmas": self.item_sigmas,
            "quality_weights": self.quality_weights,
            "scene_archetypes": dict(sorted(self.scene_archetypes.items())),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(scene_archetypes=dict(obj["scene_archetypes"]),
                   archetype_user_weights=obj["archetype_user_weights"],
                   quality_weights=obj["quality_weights"],
                   item_means=obj["item_means"], item_sigmas=obj["item_sigmas"],
                   bias=float(obj["bias"]))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class GenResult:
    train: Dataset
    test: Dataset
    truth: GroundTruth
    schema: FeatureSchema


def _quality_weights(cfg: GenConfig) -> np.ndarray:
    """Per-feature quality weights, spread over the cc-threshold grid.

    An explicit relative profile wins when provided (padded with zeros or
    truncated to the feature count); otherwise the weights decay
    super-geometrically with the last third of the features zeroed as
    pure noise. Either way each feature-label correlation is meant to sit
    well inside one threshold band instead of hugging an edge.
    """
    if cfg.quality_profile is not None:
        rel = np.zeros(cfg.item_features)
        given = np.asarray(cfg.quality_profile, dtype=np.float64)
        rel[:min(len(given), cfg.item_features)] = given[:cfg.item_features]
        return cfg.quality_scale * rel
    j = np.arange(cfg.item_features, dtype=np.float64)
    w = cfg.quality_scale * cfg.quality_decay ** (j + 0.25 * j * (j - 1))
    if cfg.item_features > 1:
        w[-max(1, cfg.item_features // 3):] = 0.0
    return w


def generate(config: GenConfig) -> GenResult:
    """Build the train split, the cold-start test split and the ground truth."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    A = cfg.archetypes

    user_values = rng.integers(0, cfg.user_vocab,
                               size=(cfg.users, cfg.user_features))
    # Per-archetype preference of each user feature value; affinity variance
    # is roughly affinity_scale squared. Rows are centered over the value
    # vocabulary so no archetype gets a population-level rate shift. With
    # opposed archetypes, odd archetypes invert their predecessor's
    # preferences: transferring across the wrong pair is then actively
    # harmful, not merely uninformative.
    user_weights = rng.normal(0.0, cfg.affinity_scale / np.sqrt(cfg.user_features),
                              size=(A, cfg.user_features, cfg.user_vocab))
    user_weights -= user_weights.mean(axis=2, keepdims=True)
    if cfg.opposed_archetypes:
        for a in range(1, A, 2):
            user_weights[a] = -user_weights[a - 1]
    # Archetype item means sit on an equally spaced grid (independently
    # permuted per feature, plus jitter). Adjacent archetypes stay one
    # spread apart on every feature: scene-level aggregates separate them
    # cleanly while a single item remains ambiguous.
    offsets = np.arange(A, dtype=np.float64) - (A - 1) / 2.0
    item_means = np.empty((A, cfg.item_features))
    for f in range(cfg.item_features):
        item_means[:, f] = cfg.archetype_spread * rng.permutation(offsets)
    item_means += rng.normal(0.0, 0.15 * cfg.archetype_spread,
                             size=item_means.shape)
    item_sigmas = rng.uniform(0.85, 1.15, size=(A, cfg.item_features))
    quality_w = _quality_weights(cfg)

    def scene_archetype_list(count: int) -> list[int]:
        kinds = np.array([i % A for i in range(count)])
        rng.shuffle(kinds)
        return [int(a) for a in kinds]

    train_ids = [f"scene_{i:04d}" for i in range(cfg.train_scenes)]
    cold_ids = [f"cold_{i:04d}" for i in range(cfg.cold_scenes)]
    archetypes = dict(zip(train_ids, scene_archetype_list(cfg.train_scenes)))
    archetypes.update(zip(cold_ids, scene_archetype_list(cfg.cold_scenes)))

    def make_scene(scene_id: str) -> dict:
        a = archetypes[scene_id]
        items = rng.normal(item_means[a], item_sigmas[a],
                           size=(cfg.items_per_scene, cfg.item_features))
        attrs = np.full(cfg.scene_attr_features, a)
        noisy = rng.random(cfg.scene_attr_features) < cfg.attr_noise
        attrs[noisy] = rng.integers(0, A, size=int(noisy.sum()))
        return {"archetype": a, "items": items, "attrs": attrs}

    scenes = {sid: make_scene(sid) for sid in train_ids + cold_ids}

    def draw_examples(scene_ids: Sequence[str]):
        # Quality is centered on the archetype's item means so that scene
        # base rates do not drift with the archetype; without this, every
        # archetype-conditioned feature picks up a spurious label
        # correlation through the scene-level rate shifts.
        drawn = []
        for sid in scene_ids:
            scene = scenes[sid]
            a = scene["archetype"]
            u_idx = rng.integers(0, cfg.users, size=cfg.examples_per_scene)
            i_idx = rng.integers(0, cfg.items_per_scene,
                                 size=cfg.examples_per_scene)
            affinity = user_weights[a][np.arange(cfg.user_features),
                                       user_values[u_idx]].sum(axis=1)
            quality = (scene["items"][i_idx] - item_means[a]) @ quality_w
            drawn.append((sid, u_idx, i_idx, affinity + quality))
        return drawn

    train_raw = draw_examples(train_ids)
    test_raw = draw_examples(cold_ids)

    # Threshold-rule labels: calibrate the bias so the post-flip positive
    # rate lands on the target.
    eps = cfg.label_noise
    pre_flip_rate = (cfg.positive_rate - eps) / (1.0 - 2.0 * eps)
    pre_flip_rate = min(max(pre_flip_rate, 1e-6), 1.0 - 1e-6)
    z_train = np.concatenate([z for _, _, _, z in train_raw])
    bias = -float(np.quantile(z_train, 1.0 - pre_flip_rate))

    def to_examples(raw) -> list[Example]:
        out = []
        for sid, u_idx, i_idx, z in raw:
            scene = scenes[sid]
            labels = (z + bias > 0.0).astype(np.int64)
            flips = rng.random(len(labels)) < eps
            labels[flips] = 1 - labels[flips]
            for n in range(len(labels)):
                user = {f"user_f{j}": int(user_values[u_idx[n], j])
                        for j in range(cfg.user_features)}
                item = {f"item_f{j}": float(scene["items"][i_idx[n], j])
                        for j in range(cfg.item_features)}
                item.update({f"scene_f{j}": int(scene["attrs"][j])
                             for j in range(cfg.scene_attr_features)})
                out.append(Example(user=user, item=item, scene_id=sid,
                                   label=int(labels[n])))
        return out

    train_examples = to_examples(train_raw)
    test_examples = to_examples(test_raw)

    schema = FeatureSchema(
        [Feature(f"user_f{j}", "categorical", "user", vocab=cfg.user_vocab)
         for j in range(cfg.user_features)]
        + [Feature(f"item_f{j}", "numeric", "item")
           for j in range(cfg.item_features)]
        + [Feature(f"scene_f{j}", "categorical", "scene", vocab=A)
           for j in range(cfg.scene_attr_features)])
    schema = fit_numeric_boundaries(train_examples, schema, buckets=10)

    truth = GroundTruth(
        scene_archetypes={sid: int(a) for sid, a in archetypes.items()},
        archetype_user_weights=user_weights.tolist(),
        quality_weights=quality_w.tolist(),
        item_means=item_means.tolist(),
        item_sigmas=item_sigmas.tolist(),
        bias=bias)
    return GenResult(train=Dataset(train_examples, schema=schema),
                     test=Dataset(test_examples, schema=schema),
                     truth=truth, schema=schema)


# ---------------------------------------------------------------------------
# k-means and silhouette (dataset-preparation utilities)


def _pairwise_sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=-1)


def _lloyd(pts: np.ndarray, k: int,
           rng: np.random.Generator, max_iters: int):
    n = len(pts)
    # k-means++ seeding
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    closest = _pairwise_sq_dist(pts, centers[:1]).ravel()
    for j in range(1, k):
        prob = closest / closest.sum() if closest.sum() > 0 else np.full(n, 1.0 / n)
        centers[j] = pts[rng.choice(n, p=prob)]
        closest = np.minimum(closest, _pairwise_sq_dist(pts, centers[j:j + 1]).ravel())

    assign = np.full(n, -1, dtype=np.int64)
    prev_inertia = np.inf
    inertia = prev_inertia
    for _ in range(max_iters):
        d2 = _pairwise_sq_dist(pts, centers)
        new_assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), new_assign].sum())
        assert inertia <= prev_inertia + 1e-9, "Lloyd iteration increased inertia"
        prev_inertia = inertia
        if (new_assign == assign).all():
            break
        assign = new_assign
        for j in range(k):
            members = pts[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                worst = d2[np.arange(n), assign].argmax()
                centers[j] = pts[worst]
    return assign, centers, inertia


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100,
           n_init: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from seeded k-means++ starts, best of `n_init`.

    Returns (assignments, centroids) of the restart with the lowest
    inertia. Inertia is asserted non-increasing across iterations; an
    emptied cluster is re-seeded at the point farthest from its assigned
    centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if k > len(np.unique(pts, axis=0)):
        raise ValueError(f"k={k} exceeds the number of distinct points")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        assign, centers, inertia = _lloyd(pts, k, rng, max_iters)
        if best is None or inertia < best[2]:
            best = (assign, centers, inertia)
    return best[0], best[1]


def silhouette(points, assignments) -> float:
    """Mean silhouette coefficient; singleton clusters contribute 0."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    assign = np.asarray(assignments, dtype=np.int64)
    labels = np.unique(assign)
    if len(labels) < 2:
        raise ValueError("silhouette needs at least two clusters")
    if len(assign) != len(pts):
        raise ValueError("assignments must align with points")
    dist = np.sqrt(np.maximum(_pairwise_sq_dist(pts, pts), 0.0))
    sizes = {lab: int((assign == lab).sum()) for lab in labels}
    scores = np.zeros(len(pts))
    for i in range(len(pts)):
        own = assign[i]
        if sizes[own] == 1:
            continue
        a = dist[i][assign == own].sum() / (sizes[own] - 1)
        b = min(dist[i][assign == lab].mean() for lab in labels if lab != own)
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def choose_k(points, ks: Sequence[int], seed: int = 0) -> tuple[int, dict[int, float]]:
    """Silhouette sweep over candidate cluster counts; ties pick the smaller k."""
    scores: dict[int, float] = {}
    for k in ks:
        assign, _ = kmeans(points, k, seed=seed)
        scores[k] = silhouette(points, assign)
    best = max(sorted(scores), key=lambda k: (scores[k], -k))
    return best, scores
