"""Universal label construction: clustering, merging, Other-mapping, application.

Node labels from all languages are clustered with union-find over the
thresholded signature-similarity graph, structurally compatible clusters are
merged, and rare or context-promiscuous labels fall into the Other category.
The result is a total mapping (language, type_name) -> universal label id.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .grammar import GrammarSchema
from .interchange import ParseTree, tokenize_attrs
from .signatures import LabelKey, NodeSignature, SimilarityProvider, build_signature, cosine
from .unionfind import UnionFind

GLOBAL_ROOT_NAME = "GLOBAL_ROOT"
OTHER_NAME = "OTHER"
GLOBAL_ROOT_ID = 0
OTHER_ID = 1

DEFAULT_THRESHOLD = 0.75
DEFAULT_F_MIN = 10
DEFAULT_H_MAX = 0.9

_WORD_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|\d+")

Partition = list[list[LabelKey]]


@dataclass(frozen=True)
class UniversalLabel:
    id: int
    name: str


@dataclass
class UniversalLabelSet:
    labels: list[UniversalLabel]
    mapping: dict[LabelKey, int]
    other_id: int = OTHER_ID
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        self._by_name = {label.name: label.id for label in self.labels}

    @property
    def global_root_id(self) -> int:
        return self._by_name[GLOBAL_ROOT_NAME]

    def __len__(self) -> int:
        return len(self.labels)

    def label_for(self, language: str, type_name: str) -> int:
        """Universal id for a node label; unseen types map to Other."""
        return self.mapping.get((language, type_name), self.other_id)

    def name_of(self, label_id: int) -> str:
        return self.labels[label_id].name

    def ids_matching(self, patterns: list[str]) -> set[int]:
        """Label ids whose display name matches any pattern.

        A pattern matches when it equals the name or when every
        underscore-separated part of the pattern appears among the name's
        parts (so FOR matches FOR_STATEMENT but not FORMAT_SPEC).
        """
        matched: set[int] = set()
        for label in self.labels:
            parts = set(label.name.split("_"))
            for pattern in patterns:
                if pattern == label.name or set(pattern.split("_")) <= parts:
                    matched.add(label.id)
                    break
        return matched

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "threshold": self.threshold,
            "labels": [{"id": label.id, "name": label.name} for label in self.labels],
            "mapping": [
                {"language": lang, "type_name": type_name, "label_id": label_id}
                for (lang, type_name), label_id in sorted(self.mapping.items())
            ],
            "other_id": self.other_id,
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def display_name(type_name: str) -> str:
    """FOR_STATEMENT-style name from ForStatement or for_statement."""
    words = _WORD_RE.findall(type_name)
    return "_".join(w.upper() for w in words) if words else type_name.upper()


def cluster_labels(
    signatures: list[NodeSignature],
    threshold: float = DEFAULT_THRESHOLD,
    provider: SimilarityProvider | None = None,
) -> Partition:
    """Connected components of the similarity graph at the given threshold.

    Components are returned with sorted members, ordered by their
    lexicographically smallest key; the result does not depend on input order.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if provider is None:
        provider = SimilarityProvider()
    forest = UnionFind(sig.key for sig in signatures)
    ordered = sorted(signatures, key=lambda s: s.key)
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if provider.similarity(a, b) >= threshold:
                forest.union(a.key, b.key)
    return forest.groups()


def _centroid(cluster: list[LabelKey], vectors: dict[LabelKey, np.ndarray]) -> np.ndarray:
    return np.mean([vectors[key] for key in cluster], axis=0)


def _arity_overlap_fraction(
    a: list[LabelKey], b: list[LabelKey], schemas: dict[str, GrammarSchema]
) -> float:
    """Fraction of cross pairs whose declared arity intervals intersect."""

    def interval(key: LabelKey) -> tuple[int, float]:
        schema = schemas.get(key[0])
        spec = schema.spec_for(key[1]) if schema else None
        if spec is None:
            return (0, float("inf"))
        hi = float("inf") if spec.arity_max is None else float(spec.arity_max)
        return (spec.arity_min, hi)

    overlaps = 0
    total = 0
    for key_a in a:
        lo_a, hi_a = interval(key_a)
        for key_b in b:
            lo_b, hi_b = interval(key_b)
            total += 1
            if max(lo_a, lo_b) <= min(hi_a, hi_b):
                overlaps += 1
    return overlaps / total if total else 0.0


def merge_equivalent_clusters(
    partition: Partition,
    signatures: list[NodeSignature],
    schemas: dict[str, GrammarSchema],
    threshold: float = DEFAULT_THRESHOLD,
) -> Partition:
    """Merge cluster pairs with centroid cosine >= threshold whose arity
    ranges overlap for at least half the member pairs.

    Runs to a fixpoint, so applying it again changes nothing, and it never
    splits an existing cluster.
    """
    vectors = {sig.key: sig.feature_vector for sig in signatures}
    clusters = [sorted(c) for c in partition]
    clusters.sort(key=lambda c: c[0])

    changed = True
    while changed:
        changed = False
        centroids = [_centroid(c, vectors) for c in clusters]
        merged: list[list[LabelKey]] = []
        consumed = [False] * len(clusters)
        for i in range(len(clusters)):
            if consumed[i]:
                continue
            current = list(clusters[i])
            centroid_i = centroids[i]
            for j in range(i + 1, len(clusters)):
                if consumed[j]:
                    continue
                if cosine(centroid_i, centroids[j]) < threshold:
                    continue
                if _arity_overlap_fraction(current, clusters[j], schemas) < 0.5:
                    continue
                current = sorted(current + clusters[j])
                centroid_i = _centroid(current, vectors)
                consumed[j] = True
                changed = True
            merged.append(current)
        clusters = sorted(merged, key=lambda c: c[0])
    return clusters


@dataclass
class CorpusLabelStats:
    """Per-key occurrence counts and distinct parent clusters, gathered over
    the training split."""

    counts: dict[LabelKey, int] = field(default_factory=dict)
    parent_clusters: dict[LabelKey, set[int]] = field(default_factory=dict)


def collect_label_stats(trees: list[ParseTree], partition: Partition) -> CorpusLabelStats:
    cluster_of: dict[LabelKey, int] = {}
    for index, cluster in enumerate(partition):
        for key in cluster:
            cluster_of[key] = index

    stats = CorpusLabelStats()
    for tree in trees:
        by_id = {node.id: node for node in tree.nodes}
        for node in tree.nodes:
            key = (tree.language, node.type_name)
            stats.counts[key] = stats.counts.get(key, 0) + 1
            stats.parent_clusters.setdefault(key, set())
        for node in tree.nodes:
            parent_key = (tree.language, node.type_name)
            parent_cluster = cluster_of.get(parent_key, -1)
            for child in node.children:
                child_key = (tree.language, by_id[child].type_name)
                stats.parent_clusters[child_key].add(parent_cluster)
    return stats


def map_rare_to_other(
    partition: Partition,
    corpus_frequencies: dict[LabelKey, int],
    f_min: int = DEFAULT_F_MIN,
    h_max: float = DEFAULT_H_MAX,
    parent_clusters: dict[LabelKey, set[int]] | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> UniversalLabelSet:
    """Finalize the label set, remapping rare or promiscuous keys to Other.

    A key goes to Other when its training-split count is below f_min or when
    (#distinct parent labels)/count exceeds h_max. Clusters left with no
    mapped keys are dropped.
    """
    parent_clusters = parent_clusters or {}

    def is_rare(key: LabelKey) -> bool:
        count = corpus_frequencies.get(key, 0)
        if count < f_min:
            return True
        heterogeneity = len(parent_clusters.get(key, ())) / count
        return heterogeneity > h_max

    labels = [UniversalLabel(GLOBAL_ROOT_ID, GLOBAL_ROOT_NAME), UniversalLabel(OTHER_ID, OTHER_NAME)]
    taken = {GLOBAL_ROOT_NAME, OTHER_NAME}
    mapping: dict[LabelKey, int] = {}
    for cluster in partition:
        kept = [key for key in cluster if not is_rare(key)]
        for key in cluster:
            if key not in kept:
                mapping[key] = OTHER_ID
        if not kept:
            continue
        name = display_name(kept[0][1])
        if name in taken:
            suffix = 2
            while f"{name}_{suffix}" in taken:
                suffix += 1
            name = f"{name}_{suffix}"
        taken.add(name)
        label = UniversalLabel(len(labels), name)
        labels.append(label)
        for key in kept:
            mapping[key] = label.id
    return UniversalLabelSet(labels=labels, mapping=mapping, other_id=OTHER_ID, threshold=threshold)


def build_label_set(
    trees: list[ParseTree],
    schemas: dict[str, GrammarSchema],
    threshold: float = DEFAULT_THRESHOLD,
    f_min: int = DEFAULT_F_MIN,
    h_max: float = DEFAULT_H_MAX,
    provider: SimilarityProvider | None = None,
) -> UniversalLabelSet:
    """Full pipeline: inventory -> signatures -> cluster -> merge -> Other."""
    inventory: set[LabelKey] = set()
    for language, schema in schemas.items():
        for type_name in schema.node_specs:
            inventory.add((language, type_name))
    for tree in trees:
        for node in tree.nodes:
            inventory.add((tree.language, node.type_name))

    signatures = []
    for language, type_name in sorted(inventory):
        schema = schemas.get(language) or GrammarSchema(language=language)
        signatures.append(build_signature(schema, type_name))

    partition = cluster_labels(signatures, threshold, provider)
    partition = merge_equivalent_clusters(partition, signatures, schemas, threshold)
    stats = collect_label_stats(trees, partition)
    return map_rare_to_other(
        partition, stats.counts, f_min, h_max, stats.parent_clusters, threshold=threshold
    )


def save_label_set(labels: UniversalLabelSet, path: str | Path, provenance: dict | None = None) -> None:
    payload = labels.to_dict()
    if provenance is not None:
        payload["provenance"] = provenance
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_label_set(path: str | Path) -> UniversalLabelSet:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        labels = [UniversalLabel(entry["id"], entry["name"]) for entry in payload["labels"]]
        mapping = {
            (entry["language"], entry["type_name"]): entry["label_id"] for entry in payload["mapping"]
        }
        label_set = UniversalLabelSet(
            labels=sorted(labels, key=lambda l: l.id),
            mapping=mapping,
            other_id=payload["other_id"],
            threshold=payload["threshold"],
        )
        label_set.global_root_id  # must exist
    except KeyError as exc:
        raise SchemaError(f"{path}: malformed label set ({exc})") from exc
    return label_set


@dataclass(frozen=True)
class LabeledNode:
    id: int
    universal_label_id: int
    attr_tokens: tuple[str, ...]
    children: tuple[int, ...]


@dataclass(frozen=True)
class LabeledTree:
    """A parse tree annotated with universal label ids and attr tokens."""

    language: str
    source_id: str
    task_id: str
    root: int
    nodes: tuple[LabeledNode, ...]


def apply_mapping(tree: ParseTree, labels: UniversalLabelSet, task_id: str = "") -> LabeledTree:
    """Annotate every node with its universal label; topology is unchanged."""
    nodes = tuple(
        LabeledNode(
            id=node.id,
            universal_label_id=labels.label_for(tree.language, node.type_name),
            attr_tokens=tuple(tokenize_attrs(node.attrs)),
            children=node.children,
        )
        for node in tree.nodes
    )
    return LabeledTree(
        language=tree.language,
        source_id=tree.source_id,
        task_id=task_id,
        root=tree.root,
        nodes=nodes,
    )
