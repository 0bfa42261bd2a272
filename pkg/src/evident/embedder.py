"""Frozen text embedding behind one interface.

Two configured instances back the pipeline: a feature embedder for the
additive risk head and a similarity embedder for diagnosis-term
normalization. The reference implementation hashes lowercase word unigrams
and bigrams into signed buckets, which is deterministic, dependency-free,
and lexically separable enough for synthetic corpora. A remote HTTP
embedder can be swapped in for either role without touching the core.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import GatewayError
from .stablehash import stable_bits

EMBED_URL_ENV = "EVIDENT_EMBED_URL"

_WORD_RE = re.compile(r"[a-z#]+")
_DIGIT_RE = re.compile(r"\d+")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class EmbeddingSpec:
    embedder_id: str
    dimension: int
    normalized: bool

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dimension}")


class Embedder(Protocol):
    spec: EmbeddingSpec

    def embed(self, text: str) -> np.ndarray: ...


def canonicalize(text: str) -> str:
    """Trim and collapse whitespace so spacing variants embed identically."""
    return _WS_RE.sub(" ", text).strip()


class HashingEmbedder:
    """Signed feature hashing of word unigrams and bigrams.

    Digit runs are canonicalized to '#' before hashing so numeric metadata
    (days, counts) contributes one shared feature instead of per-value
    noise. Deterministic for a fixed (dimension, hash seed): the same text
    always maps to the same vector across processes. Output is unit L2 norm
    unless the text contains no word tokens, in which case it is the zero
    vector.
    """

    def __init__(self, dimension: int = 64, hash_seed: int = 13, normalized: bool = True) -> None:
        self.dimension = dimension
        self.hash_seed = hash_seed
        self.spec = EmbeddingSpec(
            embedder_id=f"hashing-{dimension}-s{hash_seed}",
            dimension=dimension,
            normalized=normalized,
        )

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        words = _WORD_RE.findall(_DIGIT_RE.sub("#", canonicalize(text).lower()))
        features = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
        vec = np.zeros(self.dimension, dtype=np.float64)
        for feature in features:
            bits = stable_bits("feat", self.hash_seed, feature)
            bucket = bits % self.dimension
            sign = 1.0 if (bits >> 40) & 1 else -1.0
            vec[bucket] += sign
        if self.spec.normalized:
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
        return vec


class RemoteEmbedder:
    """Client for an HTTP embedding endpoint.

    POST {url}/embed with {"texts": [...]} and expect {"vectors": [[...]]}.
    The URL defaults to the EVIDENT_EMBED_URL environment variable.
    """

    def __init__(
        self,
        url: str | None = None,
        dimension: int = 384,
        normalized: bool = False,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ) -> None:
        url = url or os.environ.get(EMBED_URL_ENV)
        if not url:
            raise GatewayError(f"no embedder URL given and {EMBED_URL_ENV} is unset")
        self.url = url.rstrip("/")
        self.spec = EmbeddingSpec(
            embedder_id=f"remote-{dimension}:{self.url}",
            dimension=dimension,
            normalized=normalized,
        )
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        try:
            resp = self._client.post(f"{self.url}/embed", json={"texts": [canonicalize(text)]})
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except (httpx.HTTPError, KeyError) as exc:
            raise GatewayError(f"embedding backend failure: {exc}") from exc
        vec = np.asarray(vectors[0], dtype=np.float64)
        if vec.shape != (self.spec.dimension,):
            raise GatewayError(
                f"embedding backend returned shape {vec.shape}, expected ({self.spec.dimension},)"
            )
        return vec


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; rejects zero vectors."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def default_feature_embedder() -> HashingEmbedder:
    return HashingEmbedder(dimension=64)


def default_similarity_embedder() -> HashingEmbedder:
    return HashingEmbedder(dimension=128)


def from_id(embedder_id: str) -> Embedder:
    """Reconstruct an embedder from its stable identifier."""
    m = re.fullmatch(r"hashing-(\d+)-s(\d+)", embedder_id)
    if m:
        return HashingEmbedder(dimension=int(m.group(1)), hash_seed=int(m.group(2)))
    m = re.fullmatch(r"remote-(\d+):(.+)", embedder_id)
    if m:
        return RemoteEmbedder(url=m.group(2), dimension=int(m.group(1)))
    raise ValueError(f"cannot reconstruct embedder from id {embedder_id!r}")
