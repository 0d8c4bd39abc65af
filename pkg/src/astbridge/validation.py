"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

from collections import deque

from .enhance import UnifiedAst
from .interchange import ParseTree, validate_tree
from .unify import LabeledTree


def ensure_parse_trees(X, max_nodes: int = 400) -> list[ParseTree]:
    trees = list(X)
    if not trees:
        raise ValueError("expected at least one parse tree")
    for tree in trees:
        if not isinstance(tree, ParseTree):
            raise TypeError(f"expected ParseTree, got {type(tree).__name__}")
        validate_tree(tree, max_nodes=max_nodes)
    return trees


def ensure_labeled_trees(X) -> list[LabeledTree]:
    trees = list(X)
    if not trees:
        raise ValueError("expected at least one labeled tree")
    for tree in trees:
        if not isinstance(tree, LabeledTree):
            raise TypeError(f"expected LabeledTree, got {type(tree).__name__}")
    return trees


def check_unified_ast(graph: UnifiedAst) -> None:
    """Structural invariants of an enhanced graph."""
    n = len(graph.nodes)
    ids = [node.id for node in graph.nodes]
    if sorted(ids) != list(range(n)):
        raise ValueError(f"{graph.graph_id}: node ids must be dense 0..{n - 1}")
    roots = [node for node in graph.nodes if node.is_global_root]
    if len(roots) != 1:
        raise ValueError(f"{graph.graph_id}: expected exactly one global root, found {len(roots)}")
    seen = set()
    for a, b in graph.edges:
        if a == b:
            raise ValueError(f"{graph.graph_id}: self-loop at {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"{graph.graph_id}: edge ({a}, {b}) out of range")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ValueError(f"{graph.graph_id}: duplicate edge {key}")
        seen.add(key)
    if n > 1:
        adjacency = graph.adjacency()
        visited = {0}
        queue = deque([0])
        while queue:
            for nb in adjacency[queue.popleft()]:
                if nb not in visited:
                    visited.add(nb)
                    queue.append(nb)
        if len(visited) != n:
            raise ValueError(f"{graph.graph_id}: graph is disconnected")


def ensure_unified_graphs(X) -> list[UnifiedAst]:
    graphs = list(X)
    if not graphs:
        raise ValueError("expected at least one unified graph")
    for graph in graphs:
        if not isinstance(graph, UnifiedAst):
            raise TypeError(f"expected UnifiedAst, got {type(graph).__name__}")
        check_unified_ast(graph)
    return graphs


def ensure_graph_pairs(X) -> list[tuple[UnifiedAst, UnifiedAst]]:
    pairs = []
    for item in X:
        if not (isinstance(item, (tuple, list)) and len(item) == 2):
            raise TypeError("expected (graph, graph) pairs")
        a, b = item
        if not isinstance(a, UnifiedAst) or not isinstance(b, UnifiedAst):
            raise TypeError("pair members must be UnifiedAst")
        pairs.append((a, b))
    if not pairs:
        raise ValueError("expected at least one pair")
    return pairs
