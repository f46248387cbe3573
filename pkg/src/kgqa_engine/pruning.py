"""Embedding-based candidate pruning.

When exploration returns more candidates than the configured threshold
(70 by default), only the candidates whose rendered text is most similar
to the step objective are kept.
"""

from __future__ import annotations

import hashlib
import math
import re
from typing import Protocol, Sequence

import requests

from .errors import DimensionMismatch, PruningUnavailable, ZeroVector
from .triples import CandidateTriple

Vector = Sequence[float]


class Embedder(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


def cosine_similarity(u: Vector, v: Vector) -> float:
    if len(u) != len(v):
        raise DimensionMismatch(f"dimensions differ: {len(u)} vs {len(v)}")
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return max(-1.0, min(1.0, dot / (nu * nv)))


def prune(
    candidates: list[CandidateTriple],
    objective: str,
    threshold: int,
    embedder: Embedder,
) -> list[CandidateTriple]:
    """Keep the ``threshold`` candidates most relevant to the objective.

    Scores are populated on every candidate either way.  At or below the
    threshold the input list comes back unchanged; above it, the top
    ``threshold`` by cosine similarity are returned sorted score-descending,
    ties broken by lexicographic rendering.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    if not candidates:
        return []
    texts = [c.render() for c in candidates]
    try:
        vectors = embedder.embed([objective] + texts)
    except Exception as exc:
        raise PruningUnavailable(f"embedder failed: {exc}") from exc
    objective_vec = vectors[0]
    for cand, vec in zip(candidates, vectors[1:]):
        cand.score = cosine_similarity(objective_vec, vec)
    if len(candidates) <= threshold:
        return candidates
    ranked = sorted(candidates, key=lambda c: (-c.score, c.render(), c.key()))
    return ranked[:threshold]


class HashingEmbedder:
    """Deterministic token-hash bag-of-words embedder for offline runs."""

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _one(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for token in re.findall(r"[a-z0-9]+", text.lower()):
            digest = hashlib.md5(token.encode("utf-8")).hexdigest()
            vec[int(digest, 16) % self.dim] += 1.0
        if not any(vec):
            vec[0] = 1.0  # token-free text still needs a nonzero vector
        return vec

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._one(t) for t in texts]


class HttpEmbedder:
    """Embeddings over an HTTP endpoint taking {model, input:[...]}."""

    def __init__(self, url: str, model: str, token: str = "", timeout: float = 30.0):
        self.url = url
        self.model = model
        self.token = token
        self.timeout = timeout

    def embed(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                self.url,
                json={"model": self.model, "input": texts},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()["data"]
            vectors = [item["embedding"] for item in data]
        except (requests.RequestException, KeyError, TypeError, ValueError) as exc:
            raise PruningUnavailable(f"embeddings endpoint failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise PruningUnavailable("embeddings endpoint returned wrong number of vectors")
        return vectors


class CachingEmbedder:
    """Per-run cache keyed by exact text; repeated renderings embed once."""

    def __init__(self, inner: Embedder):
        self.inner = inner
        self._cache: dict[str, list[float]] = {}

    def embed(self, texts: list[str]) -> list[list[float]]:
        missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            for text, vec in zip(missing, self.inner.embed(missing)):
                self._cache[text] = vec
        return [self._cache[t] for t in texts]
