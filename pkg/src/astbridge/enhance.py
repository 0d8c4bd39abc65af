"""Structural enhancement: global root insertion, key-node flags, edge pruning.

The enhanced graph is undirected. Pruning removes a ratio-controlled number
of unprotected edges, never touching edges incident to the global root, to
key nodes, or to first-order neighbors of key nodes, and never disconnecting
the graph.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .unify import LabeledTree, UniversalLabelSet

DEFAULT_PRUNE_RATIO = 0.4

DEFAULT_WRAPPER_PATTERNS = [
    "MODULE",
    "PROGRAM",
    "SOURCE_FILE",
    "COMPILATION_UNIT",
    "TRANSLATION_UNIT",
    "FILE",
    "UNIT",
    "ROOT",
]

DEFAULT_KEY_PATTERNS = [
    "FOR",
    "WHILE",
    "IF",
    "SWITCH",
    "TRY",
    "FUNC_DEF",
    "VAR_DECL",
    "CLASS_DECL",
    "RETURN",
    "CALL",
    "CONST_NUM",
    "CONST_STR",
    "TYPE_REF",
]

Edge = tuple[int, int]


@dataclass(frozen=True)
class UnifiedNode:
    id: int
    universal_label_id: int
    attr_tokens: tuple[str, ...] = ()
    is_key: bool = False
    is_global_root: bool = False


@dataclass(frozen=True)
class UnifiedAst:
    graph_id: str
    language: str
    task_id: str
    nodes: tuple[UnifiedNode, ...]
    edges: tuple[Edge, ...]  # canonical (lo, hi) pairs, sorted, no duplicates
    root: int | None = field(default=None, compare=False)  # pre-insertion tree root

    def __len__(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> list[list[int]]:
        """Neighbor lists indexed by node id (ids are dense)."""
        neighbors: list[list[int]] = [[] for _ in self.nodes]
        for a, b in self.edges:
            neighbors[a].append(b)
            neighbors[b].append(a)
        return neighbors

    def global_root(self) -> UnifiedNode | None:
        for node in self.nodes:
            if node.is_global_root:
                return node
        return None


@dataclass(frozen=True)
class KeyNodePolicy:
    key_label_ids: frozenset[int]

    @classmethod
    def from_patterns(cls, labels: UniversalLabelSet, patterns: list[str] | None = None) -> "KeyNodePolicy":
        ids = labels.ids_matching(patterns or DEFAULT_KEY_PATTERNS)
        ids.discard(labels.global_root_id)
        if not ids:
            raise ValueError("key-node policy matched no universal labels")
        return cls(key_label_ids=frozenset(ids))

    @classmethod
    def from_file(cls, path: str | Path, labels: UniversalLabelSet) -> "KeyNodePolicy":
        patterns = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(patterns, list):
            raise ValueError(f"{path}: policy file must be a JSON list of label names")
        return cls.from_patterns(labels, patterns)


@dataclass(frozen=True)
class PruneConfig:
    ratio: float = DEFAULT_PRUNE_RATIO
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"prune ratio must be in [0, 1), got {self.ratio}")


def _canonical_edges(edges) -> tuple[Edge, ...]:
    unique = {(min(a, b), max(a, b)) for a, b in edges if a != b}
    return tuple(sorted(unique))


def graph_from_labeled_tree(tree: LabeledTree, graph_id: str = "") -> UnifiedAst:
    """Undirected graph over the labeled tree; parent and child are mutual
    neighbors from here on."""
    nodes = tuple(
        UnifiedNode(id=n.id, universal_label_id=n.universal_label_id, attr_tokens=n.attr_tokens)
        for n in sorted(tree.nodes, key=lambda n: n.id)
    )
    edges = _canonical_edges((n.id, c) for n in tree.nodes for c in n.children)
    return UnifiedAst(
        graph_id=graph_id or f"{tree.task_id}/{tree.language}/{tree.source_id}",
        language=tree.language,
        task_id=tree.task_id,
        nodes=nodes,
        edges=edges,
        root=tree.root,
    )


def insert_global_root(
    graph: UnifiedAst,
    labels: UniversalLabelSet,
    wrapper_patterns: list[str] | None = None,
) -> UnifiedAst:
    """Add the artificial anchor node and connect it to every top-level construct.

    The anchor links to the original root; when the root is a module-style
    wrapper it additionally links straight to the wrapper's children so the
    top-level declarations hang directly under the anchor. Calling this on an
    already rooted graph is a no-op.
    """
    if graph.global_root() is not None:
        return graph
    if graph.root is None:
        raise ValueError(f"{graph.graph_id}: original root unknown; cannot insert global root")

    new_id = len(graph.nodes)
    anchor = UnifiedNode(id=new_id, universal_label_id=labels.global_root_id, is_global_root=True)
    new_edges = [(graph.root, new_id)]

    wrapper_ids = labels.ids_matching(wrapper_patterns or DEFAULT_WRAPPER_PATTERNS)
    root_node = graph.nodes[graph.root]
    if root_node.universal_label_id in wrapper_ids:
        for neighbor in graph.adjacency()[graph.root]:
            new_edges.append((neighbor, new_id))

    return replace(
        graph,
        nodes=graph.nodes + (anchor,),
        edges=_canonical_edges(list(graph.edges) + new_edges),
    )


def classify_key_nodes(graph: UnifiedAst, policy: KeyNodePolicy) -> UnifiedAst:
    """Flag nodes whose universal label is in the policy."""
    nodes = tuple(
        replace(node, is_key=node.universal_label_id in policy.key_label_ids) for node in graph.nodes
    )
    return replace(graph, nodes=nodes)


def _is_connected(n: int, edges: set[Edge]) -> bool:
    if n == 0:
        return True
    neighbors: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in edges:
        neighbors[a].append(b)
        neighbors[b].append(a)
    seen = {0}
    queue = deque([0])
    while queue:
        for nb in neighbors[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == n


def protected_nodes(graph: UnifiedAst) -> set[int]:
    """Global root, key nodes, and first-order neighbors of key nodes."""
    adjacency = graph.adjacency()
    protected: set[int] = set()
    for node in graph.nodes:
        if node.is_global_root:
            protected.add(node.id)
        if node.is_key:
            protected.add(node.id)
            protected.update(adjacency[node.id])
    return protected


def deletable_edges(graph: UnifiedAst) -> list[Edge]:
    shielded = protected_nodes(graph)
    return [e for e in graph.edges if e[0] not in shielded and e[1] not in shielded]


def _prune_seed(seed: int, graph_id: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{graph_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def prune(graph: UnifiedAst, cfg: PruneConfig) -> UnifiedAst:
    """Remove floor(ratio * |deletable|) unprotected edges, skipping any
    removal that would disconnect the graph. Deterministic in (graph, seed)."""
    candidates = deletable_edges(graph)
    target = math.floor(cfg.ratio * len(candidates))
    remaining = set(graph.edges)
    if target > 0:
        rng = np.random.Generator(np.random.PCG64(_prune_seed(cfg.seed, graph.graph_id)))
        order = [candidates[i] for i in rng.permutation(len(candidates))]
        removed = 0
        for edge in order:
            if removed == target:
                break
            remaining.discard(edge)
            if _is_connected(len(graph.nodes), remaining):
                removed += 1
            else:
                remaining.add(edge)
    pruned = replace(graph, edges=tuple(sorted(remaining)))
    if not _is_connected(len(pruned.nodes), remaining):
        raise AssertionError(f"{graph.graph_id}: pruning left the graph disconnected")
    return pruned


def enhance_tree(
    tree: LabeledTree,
    labels: UniversalLabelSet,
    policy: KeyNodePolicy,
    cfg: PruneConfig,
    wrapper_patterns: list[str] | None = None,
) -> UnifiedAst:
    """apply insert_global_root, key classification, and pruning in order."""
    graph = graph_from_labeled_tree(tree)
    graph = insert_global_root(graph, labels, wrapper_patterns)
    graph = classify_key_nodes(graph, policy)
    return prune(graph, cfg)


def unified_to_dict(graph: UnifiedAst) -> dict:
    return {
        "graph_id": graph.graph_id,
        "language": graph.language,
        "task_id": graph.task_id,
        "nodes": [
            {
                "id": n.id,
                "universal_label_id": n.universal_label_id,
                "attr_tokens": list(n.attr_tokens),
                "is_key": n.is_key,
                "is_global_root": n.is_global_root,
            }
            for n in graph.nodes
        ],
        "edges": [list(e) for e in graph.edges],
    }


def save_unified(graph: UnifiedAst, path: str | Path, provenance: dict | None = None) -> None:
    payload = unified_to_dict(graph)
    if provenance is not None:
        payload["provenance"] = provenance
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_unified(path: str | Path) -> UnifiedAst:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    nodes = tuple(
        UnifiedNode(
            id=n["id"],
            universal_label_id=n["universal_label_id"],
            attr_tokens=tuple(n["attr_tokens"]),
            is_key=n["is_key"],
            is_global_root=n["is_global_root"],
        )
        for n in sorted(payload["nodes"], key=lambda n: n["id"])
    )
    return UnifiedAst(
        graph_id=payload["graph_id"],
        language=payload["language"],
        task_id=payload["task_id"],
        nodes=nodes,
        edges=tuple((a, b) for a, b in payload["edges"]),
    )
