"""Language-neutral parse-tree interchange format, corpus layout, and ingestion.

A parse tree arrives as UTF-8 JSON with fields exactly
``{language, source_id, root, nodes:[{id, type_name, attrs, children}]}``.
Corpora live on disk as ``corpus/<task_id>/<language>/<snippet_id>.json``.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateSnippet, EmptyCorpus, MalformedTree, OversizeTree, SchemaError

DEFAULT_MAX_NODES = 400
DEFAULT_MAX_ATTR_TOKENS = 8

NUM_TOKEN = "NUM"
STR_TOKEN = "STR"

_NUMERIC_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_WORD_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|\d+")


@dataclass(frozen=True)
class ParseNode:
    id: int
    type_name: str
    attrs: tuple[str, ...] = ()
    children: tuple[int, ...] = ()


@dataclass(frozen=True)
class ParseTree:
    """A validated language-specific AST."""

    language: str
    source_id: str
    root: int
    nodes: tuple[ParseNode, ...]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    task_id: str
    language: str
    path: str


@dataclass
class CorpusManifest:
    corpus_id: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def _require(mapping: dict, key: str, kind, where: str):
    if key not in mapping:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = mapping[key]
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}, got {type(value).__name__}")
    return value


def tree_from_dict(payload: dict, max_nodes: int = DEFAULT_MAX_NODES) -> ParseTree:
    """Build and validate a ParseTree from decoded interchange JSON."""
    if not isinstance(payload, dict):
        raise SchemaError("interchange payload must be a JSON object")
    language = _require(payload, "language", str, "tree")
    source_id = _require(payload, "source_id", str, "tree")
    root = _require(payload, "root", int, "tree")
    raw_nodes = _require(payload, "nodes", list, "tree")

    nodes = []
    for raw in raw_nodes:
        if not isinstance(raw, dict):
            raise SchemaError("node entries must be objects")
        node_id = _require(raw, "id", int, "node")
        type_name = _require(raw, "type_name", str, "node")
        attrs = _require(raw, "attrs", list, f"node {node_id}")
        children = _require(raw, "children", list, f"node {node_id}")
        if not type_name:
            raise SchemaError(f"node {node_id}: type_name is empty")
        if not all(isinstance(a, str) for a in attrs):
            raise SchemaError(f"node {node_id}: attrs must be strings")
        if not all(isinstance(c, int) for c in children):
            raise SchemaError(f"node {node_id}: children must be ids")
        nodes.append(ParseNode(node_id, type_name, tuple(attrs), tuple(children)))

    tree = ParseTree(language=language, source_id=source_id, root=root, nodes=tuple(nodes))
    validate_tree(tree, max_nodes=max_nodes)
    return tree


def validate_tree(tree: ParseTree, max_nodes: int = DEFAULT_MAX_NODES) -> None:
    """Check all structural invariants, raising MalformedTree/OversizeTree."""
    n = len(tree.nodes)
    if n == 0:
        raise MalformedTree(f"{tree.source_id}: tree has no nodes")
    if n > max_nodes:
        raise OversizeTree(f"{tree.source_id}: {n} nodes exceeds cap {max_nodes}")

    ids = [node.id for node in tree.nodes]
    if sorted(ids) != list(range(n)):
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise MalformedTree(f"{tree.source_id}: duplicate node ids {sorted(dupes)}")
        raise MalformedTree(f"{tree.source_id}: node ids must be dense 0..{n - 1}")
    if not 0 <= tree.root < n:
        raise MalformedTree(f"{tree.source_id}: root {tree.root} out of range")

    by_id = {node.id: node for node in tree.nodes}
    parent: dict[int, int] = {}
    for node in tree.nodes:
        for child in node.children:
            if child not in by_id:
                raise MalformedTree(f"{tree.source_id}: node {node.id} lists missing child {child}")
            if child == node.id:
                raise MalformedTree(f"{tree.source_id}: node {node.id} is its own child")
            if child in parent:
                raise MalformedTree(f"{tree.source_id}: node {child} has two parents")
            parent[child] = node.id
    if tree.root in parent:
        raise MalformedTree(f"{tree.source_id}: root {tree.root} has a parent")

    # |edges| = N - 1 plus reachability from the root rules out cycles and
    # disconnected fragments in one pass.
    if len(parent) != n - 1:
        orphans = sorted(set(by_id) - set(parent) - {tree.root})
        raise MalformedTree(f"{tree.source_id}: nodes {orphans} have no parent")
    seen = {tree.root}
    queue = deque([tree.root])
    while queue:
        current = queue.popleft()
        for child in by_id[current].children:
            if child not in seen:
                seen.add(child)
                queue.append(child)
    if len(seen) != n:
        raise MalformedTree(f"{tree.source_id}: {n - len(seen)} nodes unreachable from root")


def tree_to_dict(tree: ParseTree) -> dict:
    return {
        "language": tree.language,
        "source_id": tree.source_id,
        "root": tree.root,
        "nodes": [
            {
                "id": node.id,
                "type_name": node.type_name,
                "attrs": list(node.attrs),
                "children": list(node.children),
            }
            for node in sorted(tree.nodes, key=lambda n: n.id)
        ],
    }


def load_parse_tree(path: str | Path, max_nodes: int = DEFAULT_MAX_NODES) -> ParseTree:
    """Read, decode, and validate one interchange file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return tree_from_dict(payload, max_nodes=max_nodes)


def save_parse_tree(tree: ParseTree, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(tree_to_dict(tree), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def scan_corpus(root_dir: str | Path, max_nodes: int = DEFAULT_MAX_NODES) -> CorpusManifest:
    """Walk corpus/<task_id>/<language>/<snippet>.json and list every snippet.

    Every file is loaded and validated; entry order is lexicographic by
    (task_id, language, source_id) so manifests are reproducible.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise EmptyCorpus(f"{root} is not a directory")
    manifest = CorpusManifest(corpus_id=root.name)
    seen: set[tuple[str, str, str]] = set()
    for task_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for lang_dir in sorted(p for p in task_dir.iterdir() if p.is_dir()):
            for snippet in sorted(lang_dir.glob("*.json")):
                tree = load_parse_tree(snippet, max_nodes=max_nodes)
                key = (task_dir.name, lang_dir.name, tree.source_id)
                if key in seen:
                    raise DuplicateSnippet(f"{snippet}: duplicate key {key}")
                seen.add(key)
                manifest.entries.append(
                    ManifestEntry(
                        source_id=tree.source_id,
                        task_id=task_dir.name,
                        language=lang_dir.name,
                        path=str(snippet),
                    )
                )
    if not manifest.entries:
        raise EmptyCorpus(f"{root} contains no snippets")
    manifest.entries.sort(key=lambda e: (e.task_id, e.language, e.source_id))
    return manifest


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """Write the manifest as JSON lines, one entry per snippet."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for entry in manifest.entries:
            handle.write(
                json.dumps(
                    {
                        "source_id": entry.source_id,
                        "task_id": entry.task_id,
                        "language": entry.language,
                        "path": entry.path,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_manifest(path: str | Path, corpus_id: str = "") -> CorpusManifest:
    manifest = CorpusManifest(corpus_id=corpus_id or Path(path).stem)
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        manifest.entries.append(
            ManifestEntry(
                source_id=raw["source_id"],
                task_id=raw["task_id"],
                language=raw["language"],
                path=raw["path"],
            )
        )
    return manifest


def tokenize_attrs(attrs: list[str] | tuple[str, ...], max_tokens: int = DEFAULT_MAX_ATTR_TOKENS) -> list[str]:
    """Turn raw attribute strings into a bounded token list.

    Identifiers are split on camelCase and snake_case boundaries and
    lowercased; numeric literals collapse to NUM and quoted strings to STR.
    The NUM/STR sentinels pass through unchanged so re-tokenizing the output
    is a no-op.
    """
    tokens: list[str] = []
    for attr in attrs:
        if len(tokens) >= max_tokens:
            break
        if attr in (NUM_TOKEN, STR_TOKEN):
            tokens.append(attr)
            continue
        stripped = attr.strip()
        if not stripped:
            continue
        if _NUMERIC_RE.match(stripped):
            tokens.append(NUM_TOKEN)
            continue
        if len(stripped) >= 2 and stripped[0] == stripped[-1] and stripped[0] in "'\"":
            tokens.append(STR_TOKEN)
            continue
        for word in _WORD_RE.findall(stripped):
            if len(tokens) >= max_tokens:
                break
            # digit runs inside identifiers are numeric content too
            tokens.append(NUM_TOKEN if word.isdigit() else word.lower())
    return tokens[:max_tokens]
