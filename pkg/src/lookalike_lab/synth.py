"""Deterministic synthetic twin-world generator.

Geometry guarantees, not just probabilistic tendencies:

* base centroids sit on concentric shells of radius ``spread * (k + 1)``
  with seeded random directions, so two unrelated base centroids are at
  least ``spread`` apart;
* a twin's centroid is its co-twin's base centroid displaced by a random
  direction of exact norm ``delta_twin``;
* each image is its subject's centroid plus noise drawn uniformly inside
  a ball of radius ``sigma_image`` (bounded support, not Gaussian).

With sigma_image < delta_twin < spread (enforced) and
spread > 3 * delta_twin + 4 * sigma_image, every identical-twin image
distance is strictly below every cross-family image distance, which makes
separability-based acceptance tests sound rather than merely likely.

Randomness comes from numpy's Philox engine, a named 64-bit counter-based
generator, so one seed regenerates byte-identical worlds on any platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import EmbeddingStore, IdentityGraph, SubjectId, TwinKind
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    n_twin_pairs: int = 10
    n_singles: int = 5
    images_per_subject: int = 2
    dim: int = 16
    sigma_image: float = 0.05
    delta_twin: float = 0.3
    spread: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_twin_pairs, self.n_singles) < 0:
            raise ConfigError("subject counts must be >= 0")
        if self.n_twin_pairs + self.n_singles == 0:
            raise ConfigError("world must contain at least one subject")
        if self.images_per_subject < 0:
            raise ConfigError("images_per_subject must be >= 0")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if not 0.0 <= self.sigma_image < self.delta_twin < self.spread:
            raise ConfigError(
                "separability ordering requires sigma_image < delta_twin < spread, got "
                f"{self.sigma_image} / {self.delta_twin} / {self.spread}")


@dataclass(frozen=True)
class GroundTruth:
    """Generator-side truth: exact subject centroids for oracle checks."""

    centroids: dict[SubjectId, np.ndarray]

    def centroid_distance(self, a: SubjectId, b: SubjectId) -> float:
        d = self.centroids[a] - self.centroids[b]
        return float(np.sqrt((d * d).sum()))


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.sqrt((v * v).sum())


def _ball_noise(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    if radius == 0.0:
        return np.zeros(dim)
    direction = _unit_vector(rng, dim)
    r = radius * rng.uniform() ** (1.0 / dim)
    return r * direction


def generate(config: SynthConfig) -> tuple[IdentityGraph, EmbeddingStore, GroundTruth]:
    """Build a twin world: identity graph, embedding store, and ground truth.

    Subject ids are ``t0000a/t0000b`` for twin pairs and ``s0000`` for
    singles; image ids append ``_i00``.  Same seed, same bytes.
    """
    rng = np.random.Generator(np.random.Philox(key=config.seed))

    centroids: dict[SubjectId, np.ndarray] = {}
    twin_of: dict[SubjectId, SubjectId] = {}
    twin_kind: dict[SubjectId, TwinKind] = {}
    dataset_tag: dict[SubjectId, str] = {}

    shell = 0
    for p in range(config.n_twin_pairs):
        a, b = f"t{p:04d}a", f"t{p:04d}b"
        shell += 1
        base = config.spread * shell * _unit_vector(rng, config.dim)
        offset = config.delta_twin * _unit_vector(rng, config.dim)
        centroids[a] = base
        centroids[b] = base + offset
        twin_of[a], twin_of[b] = b, a
        twin_kind[a] = twin_kind[b] = TwinKind.IDENTICAL
        dataset_tag[a] = dataset_tag[b] = "twin"
    for s in range(config.n_singles):
        sid = f"s{s:04d}"
        shell += 1
        centroids[sid] = config.spread * shell * _unit_vector(rng, config.dim)
        dataset_tag[sid] = "nontwin"

    graph = IdentityGraph(
        subjects=frozenset(centroids),
        twin_kind=twin_kind,
        twin_of=twin_of,
        dataset_tag=dataset_tag,
        meta_complete={s: True for s in centroids},
    )

    image_ids: list[str] = []
    vectors: list[np.ndarray] = []
    for sid in sorted(centroids):
        for i in range(config.images_per_subject):
            image_ids.append(f"{sid}_i{i:02d}")
            vectors.append(centroids[sid] + _ball_noise(rng, config.dim, config.sigma_image))
    if vectors:
        matrix = np.asarray(vectors, dtype=np.float32)
    else:
        matrix = np.zeros((0, config.dim), dtype=np.float32)
    store = EmbeddingStore(tuple(image_ids), matrix)
    return graph, store, GroundTruth(centroids)


def image_map_for(store: EmbeddingStore) -> dict[str, str]:
    """Image-to-subject map recovered from the generator's id scheme."""
    return {img: img.rsplit("_i", 1)[0] for img in store.image_ids}
