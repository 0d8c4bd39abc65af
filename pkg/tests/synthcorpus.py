"""Template-generated corpora over two pseudo-languages.

"alpine" uses snake_case node types and wraps statement-position calls in an
expr_stmt node; "brook" uses CamelCase types, attaches a TypeRef child to
every var_decl, and sprinkles Annotation leaves. Corresponding type names
normalize identically (for_statement vs ForStatement) so unification clusters
them, while the per-language quirks keep raw trees structurally divergent.

Tasks are built from motif lists. Clone corpora use sibling task pairs that
differ in a single leaf class (a numeric vs string constant), which is what
makes hard negatives informative.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

ALPINE = "alpine"
BROOK = "brook"

_TYPE_TABLE = {
    # neutral -> (alpine, brook)
    "module": ("module", "Module"),
    "func_def": ("func_def", "FuncDef"),
    "param_list": ("param_list", "ParamList"),
    "param": ("param", "Param"),
    "block": ("block", "Block"),
    "for_statement": ("for_statement", "ForStatement"),
    "while_statement": ("while_statement", "WhileStatement"),
    "if_statement": ("if_statement", "IfStatement"),
    "condition": ("condition", "Condition"),
    "assign": ("assign", "Assign"),
    "aug_assign": ("aug_assign", "AugAssign"),
    "bin_op": ("bin_op", "BinOp"),
    "call": ("call", "Call"),
    "arg_list": ("arg_list", "ArgList"),
    "name": ("name", "Name"),
    "const_num": ("const_num", "ConstNum"),
    "const_text": ("const_text", "ConstText"),
    "return_stmt": ("return_stmt", "ReturnStmt"),
    "var_decl": ("var_decl", "VarDecl"),
    "type_ref": ("type_ref", "TypeRef"),
}

_WORDS = [
    "total", "count", "value", "item", "index", "limit", "buffer", "result",
    "left", "right", "queue", "stack", "node", "edge", "score", "delta",
    "width", "depth", "cursor", "offset", "ratio", "sum", "size", "key",
]


def _spec(fields=(), children=(), optional=(), repeatable=(), lo=0, hi=None):
    return {
        "field_names": list(fields),
        "child_types": list(children),
        "optional_flags": list(optional),
        "repeatable_flags": list(repeatable),
        "arity_min": lo,
        "arity_max": hi,
    }


def _schema_specs(language: str) -> dict:
    def t(neutral: str) -> str:
        return _TYPE_TABLE[neutral][0 if language == ALPINE else 1]

    specs = {
        t("module"): _spec(children=[t("func_def"), t("var_decl")], repeatable=[True], lo=0, hi=None),
        t("func_def"): _spec(
            fields=["name", "params", "body"], children=[t("param_list"), t("block")], lo=2, hi=3
        ),
        t("param_list"): _spec(children=[t("param")], repeatable=[True], lo=0, hi=None),
        t("param"): _spec(fields=["name"], lo=0, hi=1),
        t("block"): _spec(children=[t("assign"), t("for_statement")], repeatable=[True], lo=0, hi=None),
        t("for_statement"): _spec(
            fields=["target", "iter", "body"], children=[t("name"), t("block")], lo=2, hi=3
        ),
        t("while_statement"): _spec(fields=["condition", "body"], children=[t("condition"), t("block")], lo=2, hi=2),
        t("if_statement"): _spec(
            fields=["condition", "then", "else"],
            children=[t("condition"), t("block")],
            optional=[True],
            lo=2,
            hi=3,
        ),
        t("condition"): _spec(fields=["test"], children=[t("bin_op"), t("name")], lo=1, hi=1),
        t("assign"): _spec(fields=["target", "value"], lo=2, hi=2),
        t("aug_assign"): _spec(fields=["target", "value"], lo=2, hi=2),
        t("bin_op"): _spec(fields=["left", "right"], lo=2, hi=2),
        t("call"): _spec(fields=["callee", "args"], children=[t("name"), t("arg_list")], lo=1, hi=2),
        t("arg_list"): _spec(children=[t("name"), t("const_num")], repeatable=[True], lo=0, hi=None),
        t("name"): _spec(fields=["id"], lo=0, hi=0),
        t("const_num"): _spec(fields=["num_value"], lo=0, hi=0),
        t("const_text"): _spec(fields=["text_value"], lo=0, hi=0),
        t("return_stmt"): _spec(fields=["value"], optional=[True], lo=0, hi=1),
        t("var_decl"): _spec(fields=["name", "value"], lo=1, hi=3),
        t("type_ref"): _spec(fields=["name"], lo=0, hi=0),
    }
    if language == ALPINE:
        specs["expr_stmt"] = _spec(fields=["expr"], children=[t("call")], lo=1, hi=1)
    else:
        specs["Annotation"] = _spec(fields=["text"], lo=0, hi=0)
    return specs


def write_schemas(schema_dir: Path) -> Path:
    schema_dir.mkdir(parents=True, exist_ok=True)
    for language in (ALPINE, BROOK):
        payload = {"language": language, "node_specs": _schema_specs(language)}
        (schema_dir / f"{language}.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    return schema_dir


# --------------------------------------------------------------- tree builder


class _TreeBuilder:
    def __init__(self, language: str, rng: np.random.Generator, word_pool: list[str] | None = None):
        self.language = language
        self.rng = rng
        self.words = word_pool or _WORDS
        self.nodes: list[dict] = []

    def type_name(self, neutral: str) -> str:
        return _TYPE_TABLE[neutral][0 if self.language == ALPINE else 1]

    def node(self, neutral_or_raw: str, attrs=(), children=()) -> int:
        type_name = _TYPE_TABLE.get(neutral_or_raw, (neutral_or_raw, neutral_or_raw))[
            0 if self.language == ALPINE else 1
        ] if neutral_or_raw in _TYPE_TABLE else neutral_or_raw
        node_id = len(self.nodes)
        self.nodes.append(
            {"id": node_id, "type_name": type_name, "attrs": list(attrs), "children": list(children)}
        )
        return node_id

    def ident(self) -> str:
        a, b = self.rng.choice(len(self.words), size=2, replace=False)
        first, second = self.words[int(a)], self.words[int(b)]
        if self.language == ALPINE:
            return f"{first}_{second}"
        return first + second.capitalize()

    def number(self) -> str:
        return str(int(self.rng.integers(1, 500)))

    def string(self) -> str:
        return f'"{_WORDS[int(self.rng.integers(len(_WORDS)))]}"'


def _statement(builder: _TreeBuilder, motif: str) -> int:
    b = builder
    if motif == "decl_num":
        value = b.node("const_num", [b.number()])
        extras = [value]
        if b.language == BROOK:
            extras.append(b.node("type_ref", [b.ident()]))
        return b.node("var_decl", [b.ident()], extras)
    if motif == "decl_text":
        value = b.node("const_text", [b.string()])
        extras = [value]
        if b.language == BROOK:
            extras.append(b.node("type_ref", [b.ident()]))
        return b.node("var_decl", [b.ident()], extras)
    if motif == "sum_loop":
        target = b.node("name", [b.ident()])
        iterable = b.node("name", [b.ident()])
        update = b.node(
            "aug_assign",
            [],
            [b.node("name", [b.ident()]), b.node("name", [b.ident()])],
        )
        body = b.node("block", [], [update])
        return b.node("for_statement", [], [target, iterable, body])
    if motif == "while_count":
        test = b.node(
            "bin_op", [], [b.node("name", [b.ident()]), b.node("const_num", [b.number()])]
        )
        cond = b.node("condition", [], [test])
        step = b.node(
            "assign", [], [b.node("name", [b.ident()]), b.node("const_num", [b.number()])]
        )
        body = b.node("block", [], [step])
        return b.node("while_statement", [], [cond, body])
    if motif == "branch":
        test = b.node(
            "bin_op", [], [b.node("name", [b.ident()]), b.node("name", [b.ident()])]
        )
        cond = b.node("condition", [], [test])
        then_branch = b.node(
            "block", [], [b.node("assign", [], [b.node("name", [b.ident()]), b.node("const_num", [b.number()])])]
        )
        else_branch = b.node(
            "block", [], [b.node("assign", [], [b.node("name", [b.ident()]), b.node("name", [b.ident()])])]
        )
        return b.node("if_statement", [], [cond, then_branch, else_branch])
    if motif == "call_chain":
        callee = b.node("name", [b.ident()])
        args = b.node(
            "arg_list", [], [b.node("name", [b.ident()]), b.node("const_num", [b.number()])]
        )
        call = b.node("call", [], [callee, args])
        if b.language == ALPINE:
            return b.node("expr_stmt", [], [call])
        return call
    if motif == "nested_loop":
        inner_update = b.node(
            "aug_assign", [], [b.node("name", [b.ident()]), b.node("name", [b.ident()])]
        )
        inner_body = b.node("block", [], [inner_update])
        inner = b.node(
            "for_statement",
            [],
            [b.node("name", [b.ident()]), b.node("name", [b.ident()]), inner_body],
        )
        outer_body = b.node("block", [], [inner])
        return b.node(
            "for_statement",
            [],
            [b.node("name", [b.ident()]), b.node("name", [b.ident()]), outer_body],
        )
    if motif == "return_value":
        expr = b.node(
            "bin_op", [], [b.node("name", [b.ident()]), b.node("const_num", [b.number()])]
        )
        return b.node("return_stmt", [], [expr])
    raise ValueError(f"unknown motif {motif}")


def build_snippet(
    language: str,
    motifs: list[str],
    source_id: str,
    rng: np.random.Generator,
    word_pool: list[str] | None = None,
) -> dict:
    """One interchange tree: module -> func_def -> block of motif statements."""
    b = _TreeBuilder(language, rng, word_pool)
    statements = [_statement(b, motif) for motif in motifs]
    params = [b.node("param", [b.ident()]) for _ in range(int(rng.integers(1, 3)))]
    param_list = b.node("param_list", [], params)
    block_children = list(statements)
    if language == BROOK and rng.random() < 0.7:
        block_children.append(b.node("Annotation", [b.ident()]))
    body = b.node("block", [], block_children)
    func = b.node("func_def", [b.ident()], [param_list, body])
    root = b.node("module", [], [func])
    return {"language": language, "source_id": source_id, "root": root, "nodes": b.nodes}


_MOTIF_POOL = ["sum_loop", "while_count", "branch", "call_chain", "nested_loop", "return_value"]


def _draw_unique_motifs(rng: np.random.Generator, taken: set, lo: int, hi: int) -> list[str]:
    # distinct multiset per task; identical structures would make
    # impossible-to-separate negative pairs
    for _ in range(10_000):
        size = int(rng.integers(lo, hi))
        motifs = [
            _MOTIF_POOL[int(i)] for i in rng.choice(len(_MOTIF_POOL), size=size, replace=True)
        ]
        key = tuple(sorted(motifs))
        if key not in taken:
            taken.add(key)
            return motifs
    raise RuntimeError("motif space exhausted; lower the task count")


def clone_task_specs(n_families: int, seed: int) -> dict[str, list[str]]:
    """Sibling task pairs: same motifs, one differing constant-class leaf."""
    rng = np.random.Generator(np.random.PCG64(seed))
    specs: dict[str, list[str]] = {}
    taken: set = set()
    for family in range(n_families):
        base = _draw_unique_motifs(rng, taken, 2, 4)
        specs[f"task{family:02d}a"] = base + ["decl_num"]
        specs[f"task{family:02d}b"] = base + ["decl_text"]
    return specs


def retrieval_task_specs(n_tasks: int, seed: int) -> dict[str, list[str]]:
    """Structurally diverse tasks (no planted siblings)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    specs: dict[str, list[str]] = {}
    taken: set = set()
    for task in range(n_tasks):
        motifs = _draw_unique_motifs(rng, taken, 2, 6)
        specs[f"task{task:03d}"] = motifs
    return specs


def write_corpus(
    corpus_dir: Path,
    task_specs: dict[str, list[str]],
    snippets_per: int,
    seed: int,
    word_pools: dict[str, list[str]] | None = None,
) -> Path:
    corpus_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    for task_id in sorted(task_specs):
        pool = (word_pools or {}).get(task_id)
        for language in (ALPINE, BROOK):
            for snippet in range(snippets_per):
                source_id = f"{task_id}_{language}_{snippet}"
                tree = build_snippet(language, task_specs[task_id], source_id, rng, pool)
                path = corpus_dir / task_id / language / f"{source_id}.json"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(json.dumps(tree, indent=1, sort_keys=True))
    return corpus_dir


def family_word_pools(task_specs: dict[str, list[str]], seed: int, pool_size: int = 8) -> dict[str, list[str]]:
    """Sibling tasks (same family prefix) share an identifier vocabulary, the
    way solutions to one problem share naming across languages."""
    rng = np.random.Generator(np.random.PCG64(seed + 9173))
    pools: dict[str, list[str]] = {}
    by_family: dict[str, list[str]] = {}
    for task_id in sorted(task_specs):
        by_family.setdefault(task_id.rstrip("ab"), []).append(task_id)
    for _, members in sorted(by_family.items()):
        chosen = [_WORDS[int(i)] for i in rng.choice(len(_WORDS), size=pool_size, replace=False)]
        for task_id in members:
            pools[task_id] = chosen
    return pools


def write_clone_corpus(root: Path, n_families: int = 10, snippets_per: int = 2, seed: int = 7):
    specs = clone_task_specs(n_families, seed)
    corpus = write_corpus(root / "corpus", specs, snippets_per, seed, family_word_pools(specs, seed))
    schemas = write_schemas(root / "schemas")
    return corpus, schemas


def write_smoke_corpus(root: Path, n_tasks: int = 20, snippets_per: int = 2, seed: int = 7):
    """Structurally diverse tasks with per-task identifier pools; the fast
    overfit-sanity corpus."""
    specs = retrieval_task_specs(n_tasks, seed)
    corpus = write_corpus(root / "corpus", specs, snippets_per, seed, family_word_pools(specs, seed))
    schemas = write_schemas(root / "schemas")
    return corpus, schemas


def write_retrieval_corpus(root: Path, n_tasks: int = 60, snippets_per: int = 1, seed: int = 11):
    corpus = write_corpus(root / "corpus", retrieval_task_specs(n_tasks, seed), snippets_per, seed)
    schemas = write_schemas(root / "schemas")
    return corpus, schemas
