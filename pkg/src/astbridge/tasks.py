"""Pair construction, splits, split auditing, mining, losses, and metrics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .enhance import UnifiedAst
from .errors import TooFewTasks
from .gmn import GmnModel, embed_graphs, encode_pair
from .interchange import CorpusManifest

log = logging.getLogger(__name__)

POSITIVE = "positive"
RANDOM_NEGATIVE = "random_negative"
HARD_NEGATIVE = "hard_negative"


@dataclass(frozen=True)
class PairExample:
    g1_id: str
    g2_id: str
    label: int  # clone=1, nonclone=0
    source: str = POSITIVE


@dataclass(frozen=True)
class RetrievalExample:
    anchor_id: str
    positive_id: str
    negative_ids: tuple[str, ...]


@dataclass
class SplitManifest:
    train: set[str]
    valid: set[str]
    test: set[str]
    ratios: tuple[int, int, int] = (8, 1, 1)
    seed: int = 0

    def split_of(self, task_id: str) -> str | None:
        for name in ("train", "valid", "test"):
            if task_id in getattr(self, name):
                return name
        return None

    def tasks(self, name: str) -> set[str]:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "train": sorted(self.train),
            "valid": sorted(self.valid),
            "test": sorted(self.test),
            "ratios": list(self.ratios),
            "seed": self.seed,
        }


def save_splits(splits: SplitManifest, path: str | Path, provenance: dict | None = None) -> None:
    payload = splits.to_dict()
    if provenance is not None:
        payload["provenance"] = provenance
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_splits(path: str | Path) -> SplitManifest:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SplitManifest(
        train=set(payload["train"]),
        valid=set(payload["valid"]),
        test=set(payload["test"]),
        ratios=tuple(payload["ratios"]),
        seed=payload["seed"],
    )


def make_splits(
    manifest: CorpusManifest, ratios: tuple[int, int, int] = (8, 1, 1), seed: int = 0
) -> SplitManifest:
    """Task-granular split: shuffle task ids with the seed, then partition.

    valid and test get floor(n * ratio) tasks each, train gets the rest;
    10 tasks at 8:1:1 come out exactly 8/1/1.
    """
    tasks = sorted({entry.task_id for entry in manifest.entries})
    if len(tasks) < 10:
        raise TooFewTasks(f"need at least 10 tasks, found {len(tasks)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = [tasks[i] for i in rng.permutation(len(tasks))]
    total = sum(ratios)
    n_valid = max(1, math.floor(len(tasks) * ratios[1] / total))
    n_test = max(1, math.floor(len(tasks) * ratios[2] / total))
    n_train = len(tasks) - n_valid - n_test
    return SplitManifest(
        train=set(order[:n_train]),
        valid=set(order[n_train : n_train + n_valid]),
        test=set(order[n_train + n_valid :]),
        ratios=ratios,
        seed=seed,
    )


# ------------------------------------------------------------ split auditing


def _task_of(graph_id: str) -> str:
    # graph ids are "task/language/source" (optionally corpus-prefixed)
    parts = graph_id.split("/")
    return parts[-3] if len(parts) >= 3 else graph_id


@dataclass
class SplitAudit:
    task_overlap: int
    snippet_overlap: int
    pair_overlap: int
    per_split: dict[str, dict[str, int]]
    overlapping_tasks: list[str] = field(default_factory=list)
    overlapping_snippets: list[str] = field(default_factory=list)
    overlapping_pairs: list[tuple[str, str]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.task_overlap == 0 and self.snippet_overlap == 0 and self.pair_overlap == 0

    def to_dict(self) -> dict:
        return {
            "task_overlap": self.task_overlap,
            "snippet_overlap": self.snippet_overlap,
            "pair_overlap": self.pair_overlap,
            "overlapping_tasks": self.overlapping_tasks,
            "overlapping_snippets": self.overlapping_snippets,
            "overlapping_pairs": [list(p) for p in self.overlapping_pairs],
            "per_split": self.per_split,
            "clean": self.clean,
        }

    def summary_lines(self) -> list[str]:
        lines = []
        for name in ("train", "valid", "test"):
            stats = self.per_split.get(name, {"pairs": 0, "tasks": 0})
            lines.append(f"{name}: {stats['pairs']:,} pairs over {stats['tasks']:,} tasks")
        lines.append(
            f"overlaps: {self.task_overlap} task ids, {self.snippet_overlap} snippet ids, "
            f"{self.pair_overlap} unordered pairs"
        )
        return lines


def check_split_integrity(splits: SplitManifest, pair_lists: dict[str, list[PairExample]]) -> SplitAudit:
    """Audit task ids, snippet ids, and unordered pairs across split boundaries.

    Report-only: callers decide what to do with a dirty audit (the CLI exits 1).
    """
    names = ("train", "valid", "test")
    task_sets: dict[str, set[str]] = {}
    snippet_sets: dict[str, set[str]] = {}
    pair_sets: dict[str, set[tuple[str, str]]] = {}
    per_split: dict[str, dict[str, int]] = {}
    for name in names:
        pairs = pair_lists.get(name, [])
        tasks = set(splits.tasks(name))
        snippets: set[str] = set()
        canonical: set[tuple[str, str]] = set()
        for pair in pairs:
            snippets.update((pair.g1_id, pair.g2_id))
            tasks.update((_task_of(pair.g1_id), _task_of(pair.g2_id)))
            canonical.add(tuple(sorted((pair.g1_id, pair.g2_id))))
        task_sets[name] = tasks
        snippet_sets[name] = snippets
        pair_sets[name] = canonical
        per_split[name] = {"pairs": len(pairs), "tasks": len(splits.tasks(name) | {
            _task_of(g) for pair in pairs for g in (pair.g1_id, pair.g2_id)
        })}

    def overlaps(sets: dict[str, set]) -> set:
        found = set()
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                found |= sets[a] & sets[b]
        return found

    task_hits = overlaps(task_sets)
    snippet_hits = overlaps(snippet_sets)
    pair_hits = overlaps(pair_sets)
    return SplitAudit(
        task_overlap=len(task_hits),
        snippet_overlap=len(snippet_hits),
        pair_overlap=len(pair_hits),
        per_split=per_split,
        overlapping_tasks=sorted(task_hits),
        overlapping_snippets=sorted(snippet_hits),
        overlapping_pairs=sorted(pair_hits),
    )


def save_pairs(pairs: list[PairExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(
                json.dumps(
                    {"g1_id": pair.g1_id, "g2_id": pair.g2_id, "label": pair.label, "source": pair.source},
                    sort_keys=True,
                )
                + "\n"
            )


def load_pairs(path: str | Path) -> list[PairExample]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        pairs.append(
            PairExample(
                g1_id=raw["g1_id"],
                g2_id=raw["g2_id"],
                label=int(raw.get("label", 0)),
                source=raw.get("source", RANDOM_NEGATIVE),
            )
        )
    return pairs


# ------------------------------------------------------------ pair building


def clone_positives(graphs: list[UnifiedAst], tasks: set[str] | None = None) -> list[PairExample]:
    """All unordered cross-language same-task pairs."""
    pool = [g for g in graphs if tasks is None or g.task_id in tasks]
    by_task: dict[str, list[UnifiedAst]] = {}
    for graph in pool:
        by_task.setdefault(graph.task_id, []).append(graph)
    positives = []
    for task in sorted(by_task):
        members = sorted(by_task[task], key=lambda g: g.graph_id)
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                if a.language != b.language:
                    positives.append(PairExample(a.graph_id, b.graph_id, 1, POSITIVE))
    return positives


def label_histogram(graph: UnifiedAst, num_labels: int) -> np.ndarray:
    hist = np.zeros(num_labels, dtype=np.float64)
    for node in graph.nodes:
        hist[node.universal_label_id] += 1.0
    return hist


def mine_hard_negatives(
    anchors: list[UnifiedAst],
    candidates: list[UnifiedAst],
    model: GmnModel | None = None,
    top_k: int = 10,
    num_labels: int | None = None,
    cross_language: bool = True,
) -> dict[str, list[PairExample]]:
    """Rank non-clone candidates per anchor by similarity in the unified space.

    Static mode (model=None) uses cosine between universal-label histograms;
    dynamic mode uses the current model's graph embeddings. Same-task
    candidates are always excluded; same-language candidates too unless
    cross_language is False. Returns the top_k list per anchor id.
    """
    universe = {g.graph_id: g for g in list(anchors) + list(candidates)}
    if num_labels is None:
        num_labels = 1 + max(
            (n.universal_label_id for g in universe.values() for n in g.nodes), default=0
        )
    if model is None:
        vectors = {gid: label_histogram(g, num_labels) for gid, g in universe.items()}
    else:
        vectors = embed_graphs([universe[gid] for gid in sorted(universe)], model)

    def cos(a: np.ndarray, b: np.ndarray) -> float:
        denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
        return float(np.dot(a, b) / denom) if denom else 0.0

    mined: dict[str, list[PairExample]] = {}
    for anchor in anchors:
        pool = [
            c
            for c in candidates
            if c.task_id != anchor.task_id
            and c.graph_id != anchor.graph_id
            and (not cross_language or c.language != anchor.language)
        ]
        if not pool:
            log.warning("no cross-task candidates for anchor %s", anchor.graph_id)
            mined[anchor.graph_id] = []
            continue
        scored = sorted(
            pool,
            key=lambda c: (-cos(vectors[anchor.graph_id], vectors[c.graph_id]), c.graph_id),
        )
        mined[anchor.graph_id] = [
            PairExample(anchor.graph_id, c.graph_id, 0, HARD_NEGATIVE) for c in scored[:top_k]
        ]
    return mined


# --------------------------------------------------------------------- losses


def pair_distance(v1: Tensor, v2: Tensor) -> Tensor:
    """Euclidean distance with a tiny epsilon so the gradient exists at 0."""
    diff = ad.add(v1, ad.affine(v2, -1.0))
    sq = ad.sum_all(ad.mul(diff, diff))
    return ad.sqrt(ad.affine(sq, 1.0, 1e-12))


def clone_loss(
    sim: Tensor, dist: Tensor, label: int, tau: float = 0.1, margin: float = 10.0, form: str = "contrastive"
) -> Tensor:
    """Clone objective for one pair.

    contrastive (default): positives pay (1 - sim)/tau, negatives pay
    max(0, margin - dist)^2 on the unbounded Euclidean distance.
    cosine_hinge: negatives pay max(0, sim)^2 / tau instead (experimental).
    """
    if label == 1:
        return ad.affine(sim, -1.0 / tau, 1.0 / tau)
    if form == "cosine_hinge":
        hinge = ad.relu(sim)
        return ad.affine(ad.mul(hinge, hinge), 1.0 / tau)
    hinge = ad.relu(ad.affine(dist, -1.0, margin))
    return ad.mul(hinge, hinge)


def retrieval_loss(
    anchor_v: Tensor, positive_v: Tensor, negative_vs: list[Tensor], tau: float = 0.1
) -> Tensor:
    """Temperature-scaled cross-entropy over one positive and k negatives.

    With no negatives the softmax is a singleton and the loss is exactly 0.
    """
    logits = [ad.affine(ad.cosine_sim(anchor_v, positive_v), 1.0 / tau)]
    for neg in negative_vs:
        logits.append(ad.affine(ad.cosine_sim(anchor_v, neg), 1.0 / tau))
    row = ad.concat([ad.reshape(t, (1, 1)) for t in logits], axis=1)
    probs = ad.softmax_rows(row)
    pick = ad.constant(np.eye(len(logits), 1), dtype=probs.data.dtype)
    positive_prob = ad.matmul(probs, pick)
    return ad.affine(ad.log(ad.sum_all(positive_prob)), -1.0)


# -------------------------------------------------------------------- metrics


@dataclass
class Metrics:
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    mrr: float | None = None
    precision_at_k: float | None = None

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mrr": self.mrr,
            "precision_at_k": self.precision_at_k,
        }


def classification_metrics(labels: list[int], predicted: list[int]) -> Metrics:
    tp = sum(1 for y, p in zip(labels, predicted) if y == 1 and p == 1)
    fp = sum(1 for y, p in zip(labels, predicted) if y == 0 and p == 1)
    fn = sum(1 for y, p in zip(labels, predicted) if y == 1 and p == 0)
    if tp + fp == 0:
        log.warning("no positive predictions; precision defined as 0")
        precision = 0.0
    else:
        precision = tp / (tp + fp)
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1)


def _f1_at(sims: list[float], labels: list[int], threshold: float) -> float:
    tp = fp = fn = 0
    for s, y in zip(sims, labels):
        p = 1 if s >= threshold else 0
        if p and y:
            tp += 1
        elif p and not y:
            fp += 1
        elif y and not p:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def sweep_threshold(sims: list[float], labels: list[int], step: float = 0.01) -> tuple[float, float]:
    """Brute-force F1 maximization over a similarity grid on [-1, 1].

    When several grid values tie for the best F1 the midpoint of the
    optimal plateau is returned (it still attains the maximum and sits
    farthest from both score distributions); deterministic throughout.
    """
    grid = np.arange(-1.0, 1.0 + step / 2, step)
    scores = [_f1_at(sims, labels, float(t)) for t in grid]
    best_f1 = max(scores)
    winners = [float(t) for t, f1 in zip(grid, scores) if f1 >= best_f1 - 1e-12]
    return winners[len(winners) // 2], best_f1


def pair_similarities(
    pairs: list[PairExample], graphs: dict[str, UnifiedAst], model: GmnModel
) -> list[float]:
    sims = []
    with ad.no_grad():
        for pair in pairs:
            enc = encode_pair(graphs[pair.g1_id], graphs[pair.g2_id], model)
            sims.append(float(enc.similarity().data))
    return sims


def detect_clones(
    pairs: list[PairExample],
    graphs: dict[str, UnifiedAst],
    model: GmnModel,
    threshold: float,
) -> tuple[list[dict], Metrics]:
    """Score pairs, predict clone iff sim >= threshold, report P/R/F1."""
    sims = pair_similarities(pairs, graphs, model)
    predictions = []
    for pair, sim in zip(pairs, sims):
        predictions.append(
            {
                "g1_id": pair.g1_id,
                "g2_id": pair.g2_id,
                "sim": sim,
                "predicted": int(sim >= threshold),
                "label": pair.label,
            }
        )
    metrics = classification_metrics([p.label for p in pairs], [p["predicted"] for p in predictions])
    return predictions, metrics


def _parse_graph_id(graph_id: str) -> tuple[str, str]:
    """(task_id, language) from a task/language/source style id."""
    parts = graph_id.split("/")
    if len(parts) >= 3:
        return parts[-3], parts[-2]
    return graph_id, ""


def evaluate_retrieval(
    queries: list[str], index: dict[str, np.ndarray], k: int = 4
) -> Metrics:
    """Rank cross-language candidates per query by cosine; MRR from the first
    correct hit, Precision@k normalized by min(k, #relevant)."""
    reciprocal_ranks = []
    precisions = []
    for query_id in queries:
        q_task, q_lang = _parse_graph_id(query_id)
        q_vec = index[query_id]
        candidates = []
        for cand_id, vec in index.items():
            c_task, c_lang = _parse_graph_id(cand_id)
            if cand_id == query_id or c_lang == q_lang:
                continue
            denom = float(np.linalg.norm(q_vec)) * float(np.linalg.norm(vec))
            sim = float(np.dot(q_vec, vec) / denom) if denom else 0.0
            candidates.append((sim, cand_id, c_task))
        relevant = sum(1 for _, _, task in candidates if task == q_task)
        if relevant == 0:
            log.warning("query %s has no cross-language answers; skipped", query_id)
            continue
        candidates.sort(key=lambda item: (-item[0], item[1]))
        first_hit = next(i for i, (_, _, task) in enumerate(candidates) if task == q_task)
        reciprocal_ranks.append(1.0 / (first_hit + 1))
        top = candidates[: k]
        correct = sum(1 for _, _, task in top if task == q_task)
        precisions.append(correct / min(k, relevant))
    if not reciprocal_ranks:
        return Metrics()
    return Metrics(mrr=float(np.mean(reciprocal_ranks)), precision_at_k=float(np.mean(precisions)))
