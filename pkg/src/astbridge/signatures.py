"""Deterministic node-label signatures and similarity providers.

Each (language, type_name) gets a 512-dim unit vector built from hashed
character trigrams of the normalized type name (256 bins), hashed trigrams of
the schema's field and child-type names (192 bins), and bucketed structural
features (64 bins). Similarity is plain cosine. An optional external provider
swaps in embeddings from an HTTP service while keeping the cosine local.
"""

from __future__ import annotations

import json
import logging
import re
import urllib.error
import urllib.request
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import EmptySignature, ProviderUnavailable
from .grammar import GrammarSchema, NodeSpec

log = logging.getLogger(__name__)

SIGNATURE_DIM = 512
_NAME_BINS = 256
_SCHEMA_BINS = 192
_STRUCT_BINS = 64

_DELIMS = re.compile(r"[^0-9a-z]+")

LabelKey = tuple[str, str]  # (language, type_name)


def normalize_type_name(type_name: str) -> str:
    """Lowercase and strip delimiters: ForStatement and for_statement agree."""
    return _DELIMS.sub("", type_name.lower())


def _trigrams(text: str) -> list[str]:
    padded = f"^{text}$"
    if len(padded) < 3:
        return [padded]
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def _hash_bin(gram: str, bins: int) -> int:
    return zlib.crc32(gram.encode("utf-8")) % bins


@dataclass(frozen=True)
class NodeSignature:
    language: str
    type_name: str
    feature_vector: np.ndarray  # float64, unit L2 norm, length 512

    @property
    def key(self) -> LabelKey:
        return (self.language, self.type_name)


def _structural_bins(spec: NodeSpec) -> np.ndarray:
    out = np.zeros(_STRUCT_BINS)
    out[min(spec.arity_min, 15)] = 1.0
    out[16 + (15 if spec.arity_max is None else min(spec.arity_max, 14))] = 1.0
    out[32 + min(sum(spec.optional_flags), 15)] = 1.0
    out[48 + min(sum(spec.repeatable_flags), 7)] = 1.0
    out[56 + min(len(spec.field_names), 7)] = 1.0
    return out


def build_signature(schema: GrammarSchema, type_name: str) -> NodeSignature:
    """Hashed trigram + structural feature vector for one node label."""
    spec = schema.spec_for(type_name)
    vec = np.zeros(SIGNATURE_DIM)

    name = normalize_type_name(type_name)
    for gram in _trigrams(name) if name else []:
        vec[_hash_bin(gram, _NAME_BINS)] += 1.0

    for schema_name in list(spec.field_names) + list(spec.child_types):
        normalized = normalize_type_name(schema_name)
        if not normalized:
            continue
        for gram in _trigrams(normalized):
            vec[_NAME_BINS + _hash_bin(gram, _SCHEMA_BINS)] += 1.0

    vec[_NAME_BINS + _SCHEMA_BINS :] = _structural_bins(spec)

    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmptySignature(f"{schema.language}/{type_name}: no signature features")
    return NodeSignature(schema.language, type_name, vec / norm)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


class SimilarityProvider:
    """Cosine similarity over signature vectors, with a symmetric cache."""

    kind = "builtin"

    def __init__(self) -> None:
        self.cache: dict[tuple[LabelKey, LabelKey], float] = {}

    def _vectors(self, a: NodeSignature, b: NodeSignature) -> tuple[np.ndarray, np.ndarray]:
        return a.feature_vector, b.feature_vector

    def similarity(self, a: NodeSignature, b: NodeSignature) -> float:
        key = (a.key, b.key) if a.key <= b.key else (b.key, a.key)
        if key not in self.cache:
            va, vb = self._vectors(a, b)
            self.cache[key] = cosine(va, vb)
        return self.cache[key]


class ExternalSimilarityProvider(SimilarityProvider):
    """Embedding service client: POST /embed {texts:[...]} -> {vectors:[[...]]}.

    Falls back to the builtin signature cosine when the endpoint is
    unreachable or returns garbage (logged once per call site).
    """

    kind = "external"

    def __init__(
        self,
        endpoint: str,
        timeout: float = 5.0,
        schemas: dict[str, GrammarSchema] | None = None,
    ) -> None:
        super().__init__()
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.schemas = schemas or {}
        self._embeddings: dict[LabelKey, np.ndarray] = {}

    @staticmethod
    def render_text(sig: NodeSignature, spec: NodeSpec) -> str:
        arity_max = "unbounded" if spec.arity_max is None else str(spec.arity_max)
        return (
            f"{sig.language} node {sig.type_name}"
            f" fields: {', '.join(spec.field_names) or 'none'}"
            f" children: {', '.join(spec.child_types) or 'none'}"
            f" arity: {spec.arity_min}..{arity_max}"
        )

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        payload = json.dumps({"texts": texts}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint + "/embed", data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
            return [np.asarray(v, dtype=np.float64) for v in body["vectors"]]
        except (urllib.error.URLError, OSError, KeyError, ValueError, TimeoutError) as exc:
            raise ProviderUnavailable(f"{self.endpoint}: {exc}") from exc

    def _spec_for(self, sig: NodeSignature) -> NodeSpec:
        schema = self.schemas.get(sig.language)
        return schema.spec_for(sig.type_name) if schema else NodeSpec()

    def _vectors(self, a: NodeSignature, b: NodeSignature) -> tuple[np.ndarray, np.ndarray]:
        missing = [s for s in (a, b) if s.key not in self._embeddings]
        if missing:
            try:
                fetched = self.embed([self.render_text(s, self._spec_for(s)) for s in missing])
            except ProviderUnavailable as exc:
                log.warning("external provider failed (%s); falling back to builtin signatures", exc)
                return a.feature_vector, b.feature_vector
            for sig, vec in zip(missing, fetched):
                self._embeddings[sig.key] = vec
        return self._embeddings[a.key], self._embeddings[b.key]


def pairwise_similarity(a: NodeSignature, b: NodeSignature, provider: SimilarityProvider | None = None) -> float:
    """Cosine similarity in [-1, 1]; symmetric and cached on the provider."""
    if provider is None:
        provider = SimilarityProvider()
    return provider.similarity(a, b)
