"""Prompt curation: embed, cluster by cosine, sample per group.

The default embedder is a deterministic hashed bag-of-words so the
pipeline runs with no model weights; any callable returning fixed-width
vectors (e.g. a sentence-embedding backend) can be plugged in instead.
Clustering is spherical k-means with seeded k-means++ initialization.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

MAX_KMEANS_ITERATIONS = 100

Embedder = Callable[[Sequence[str]], np.ndarray]

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingError(RuntimeError):
    def __init__(self, prompt_id: str, cause: Exception):
        self.prompt_id = prompt_id
        super().__init__(f"embedder failed on prompt {prompt_id!r}: {cause}")


class ClusteringError(ValueError):
    pass


class UndersizedGroupError(ValueError):
    def __init__(self, group: int, size: int, wanted: int):
        self.group = group
        super().__init__(f"group {group} has {size} prompts, cannot sample {wanted}")


@dataclass(frozen=True)
class EmbeddingMatrix:
    prompt_ids: tuple[str, ...]
    vectors: np.ndarray  # (P, d), rows unit-normalized


@dataclass(frozen=True)
class GroupAssignment:
    groups: dict[str, int]  # prompt_id -> group index in [0, k)
    k: int

    def members(self, group: int) -> list[str]:
        return [p for p, g in self.groups.items() if g == group]


class HashedBagOfWords:
    """Signed feature-hashing bag-of-words embedder, fully deterministic."""

    def __init__(self, dim: int = 384):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _bucket(self, token: str) -> tuple[int, float]:
        h = hashlib.blake2s(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(h, "big")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self.dim, sign

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            for token in _TOKEN_RE.findall(text.lower()):
                j, sign = self._bucket(token)
                out[i, j] += sign
        return out


def embed_prompts(
    prompts: Sequence[tuple[str, str]],
    embedder: Embedder | None = None,
) -> EmbeddingMatrix:
    """Embed (prompt_id, text) pairs; rows come back unit-normalized.

    All-zero embeddings (e.g. empty text under the hashed embedder) are
    nudged onto a fixed basis vector before normalization.
    """
    if not prompts:
        raise ValueError("prompt list is empty")
    if embedder is None:
        embedder = HashedBagOfWords()
    ids = tuple(p for p, _ in prompts)
    texts = [t for _, t in prompts]
    try:
        vectors = np.asarray(embedder(texts), dtype=np.float64)
    except Exception as e:  # surface which prompt broke a per-item backend
        for pid, text in prompts:
            try:
                embedder([text])
            except Exception:
                raise EmbeddingError(pid, e) from e
        raise EmbeddingError(ids[0], e) from e
    if vectors.ndim != 2 or vectors.shape[0] != len(prompts):
        raise ValueError(f"embedder returned shape {vectors.shape}, expected ({len(prompts)}, d)")
    norms = np.linalg.norm(vectors, axis=1)
    degenerate = norms == 0
    if degenerate.any():
        vectors[degenerate, 0] = 1.0
        norms = np.linalg.norm(vectors, axis=1)
    return EmbeddingMatrix(prompt_ids=ids, vectors=vectors / norms[:, None])


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding under cosine distance d = 1 - x.c.

    Each step draws 2 + log(k) candidates by D^2 sampling and keeps the
    one that shrinks the total potential most; plain D^2 sampling seeds
    the same tight cluster twice often enough to matter.
    """
    n = x.shape[0]
    n_trials = 2 + int(math.log(k)) if k > 1 else 1
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    d2 = np.maximum(1.0 - x @ centroids[0], 0.0) ** 2
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
            centroids[i] = x[idx]
            d2 = np.minimum(d2, np.maximum(1.0 - x @ centroids[i], 0.0) ** 2)
            continue
        candidates = rng.choice(n, size=n_trials, p=d2 / total)
        cand_d2 = np.minimum(
            d2[:, None], np.maximum(1.0 - x @ x[candidates].T, 0.0) ** 2)
        best = int(np.argmin(cand_d2.sum(axis=0)))
        centroids[i] = x[candidates[best]]
        d2 = cand_d2[:, best]
    return centroids


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    zero = norms == 0
    if zero.any():
        m = m.copy()
        m[zero, 0] = 1.0
        norms = np.linalg.norm(m, axis=1)
    return m / norms[:, None]


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One seeded k-means run; returns (assignment, cosine inertia)."""
    n = x.shape[0]
    centroids = _kmeans_pp_init(x, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(MAX_KMEANS_ITERATIONS):
        sims = x @ centroids.T  # (n, k)
        new_assign = np.argmax(sims, axis=1)

        # repair empty clusters with the point farthest from its own centroid
        for g in range(k):
            if not (new_assign == g).any():
                own_sims = sims[np.arange(n), new_assign]
                candidates = np.where(np.bincount(new_assign, minlength=k)[new_assign] > 1)[0]
                pool = candidates if len(candidates) else np.arange(n)
                worst = pool[np.argmin(own_sims[pool])]
                centroids[g] = x[worst]
                new_assign[worst] = g
                sims = x @ centroids.T

        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for g in range(k):
            members = x[assign == g]
            centroids[g] = members.mean(axis=0)
        centroids = _normalize_rows(centroids)

    sims_own = (x * centroids[assign]).sum(axis=1)
    inertia = float(np.maximum(1.0 - sims_own, 0.0).sum())
    return assign, inertia


def cluster_prompts(emb: EmbeddingMatrix, k: int, seed: int = 0,
                    n_init: int = 10) -> GroupAssignment:
    """Spherical k-means into k non-empty groups, deterministic given seed.

    Runs ``n_init`` independent k-means++ restarts (streams derived from
    ``seed``) and keeps the assignment with the lowest cosine inertia;
    single inits routinely double-seed one tight bundle and starve another.
    """
    x = _normalize_rows(np.asarray(emb.vectors, dtype=np.float64))
    n = x.shape[0]
    if k < 1:
        raise ClusteringError("k must be >= 1")
    if k > n:
        raise ClusteringError(f"k={k} exceeds the number of prompts ({n})")
    if n_init < 1:
        raise ClusteringError("n_init must be >= 1")

    best_assign = None
    best_inertia = float("inf")
    for restart in range(n_init):
        assign, inertia = _lloyd(x, k, np.random.default_rng((seed, restart)))
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia

    return GroupAssignment(
        groups={pid: int(g) for pid, g in zip(emb.prompt_ids, best_assign)}, k=k
    )


def sample_per_group(assign: GroupAssignment, m: int, seed: int = 0) -> list[str]:
    """Sample exactly m prompt ids from every group; k*m ids total."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    selected: list[str] = []
    for g in range(assign.k):
        members = sorted(assign.members(g))
        if len(members) < m:
            raise UndersizedGroupError(g, len(members), m)
        picks = rng.choice(len(members), size=m, replace=False)
        selected.extend(members[i] for i in sorted(picks))
    return selected
