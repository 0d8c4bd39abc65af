"""Training loops for the clone and retrieval objectives.

Fully seeded: model init, epoch shuffles, negative sampling, and dropout all
derive from the config seed, so identical configs reproduce identical loss
curves and checkpoints. Per-epoch validation metrics stream to a callback as
dicts (the CLI writes them as JSON lines) and the best-validation parameters
are restored at the end.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, adam_step, gradients, zero_grads
from .enhance import UnifiedAst
from .errors import NonFiniteLoss, NonFiniteValue
from .gmn import GmnConfig, GmnModel, build_vocab, embed_graphs, encode_pair
from .tasks import (
    HARD_NEGATIVE,
    RANDOM_NEGATIVE,
    Metrics,
    PairExample,
    RetrievalExample,
    SplitManifest,
    clone_loss,
    clone_positives,
    evaluate_retrieval,
    mine_hard_negatives,
    pair_distance,
    pair_similarities,
    retrieval_loss,
    classification_metrics,
    sweep_threshold,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    task: str = "clone"  # clone | retrieval
    batch_size: int | None = None  # None: 24 for clone, 8 for retrieval
    lr: float = 1e-3
    epochs: int = 10
    max_steps: int | None = None
    neg_k: int = 10
    tau: float = 0.1
    margin: float = 10.0
    neg_per_pos: int = 1
    mining: str = "static"  # static | dynamic | random
    hard_fraction: float = 0.5
    mining_top_k: int = 10
    loss_form: str = "contrastive"
    prune_ratio: float = 0.4  # recorded for provenance; pruning happens upstream
    seed: int = 17
    type_dim: int = 50
    attr_dim: int = 50
    hidden_dim: int = 100
    rounds: int = 4
    dropout: float = 0.1
    leaky_slope: float = 0.2
    vocab_size: int = 5000
    threshold_step: float = 0.01

    def effective_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 24 if self.task == "clone" else 8

    def gmn_config(self) -> GmnConfig:
        return GmnConfig(
            type_dim=self.type_dim,
            attr_dim=self.attr_dim,
            hidden_dim=self.hidden_dim,
            rounds=self.rounds,
            dropout=self.dropout,
            leaky_slope=self.leaky_slope,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainResult:
    model: GmnModel
    history: list[dict]
    threshold: float | None = None
    best_metric: float | None = None
    pairs_used: dict[str, list[PairExample]] = field(default_factory=dict)


def _rngs(seed: int, names: list[str]) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(names, children)}


def _dropout_seed(seed: int, step: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{step}:{tag}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def _dump_diagnostics(out_dir: str | Path | None, payload: dict) -> str:
    if out_dir is None:
        return ""
    path = Path(out_dir) / "diagnostic_dump.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return str(path)


def _snapshot(model: GmnModel) -> dict[str, np.ndarray]:
    return {name: tensor.data.copy() for name, tensor in model.params.items()}


def _restore(model: GmnModel, snapshot: dict[str, np.ndarray]) -> None:
    for name, tensor in model.params.items():
        tensor.data = snapshot[name].copy()


def build_eval_pairs(
    graphs: list[UnifiedAst],
    tasks: set[str],
    rng: np.random.Generator,
    neg_per_pos: int = 1,
    include_hard: bool = True,
) -> list[PairExample]:
    """Positives plus a deterministic draw of cross-task negatives, all within
    the given task set (no pairs cross split boundaries).

    Each positive contributes neg_per_pos random negatives and, when
    include_hard is set, the hardest histogram-cosine negative for its
    anchor, so threshold calibration sees near-duplicates too.
    """
    pool = sorted([g for g in graphs if g.task_id in tasks], key=lambda g: g.graph_id)
    positives = clone_positives(pool)
    mined = mine_hard_negatives(pool, pool, None, top_k=1) if include_hard and positives else {}
    negatives: list[PairExample] = []
    seen: set[tuple[str, str]] = set()

    def admit(pair: PairExample) -> bool:
        key = tuple(sorted((pair.g1_id, pair.g2_id)))
        if key in seen:
            return False
        seen.add(key)
        negatives.append(pair)
        return True

    for pair in positives:
        anchor = next(g for g in pool if g.graph_id == pair.g1_id)
        for hard in mined.get(anchor.graph_id, []):
            admit(hard)
        partners = [g for g in pool if g.task_id != anchor.task_id and g.language != anchor.language]
        rng.shuffle(partners)
        taken = 0
        for partner in partners:
            if admit(PairExample(anchor.graph_id, partner.graph_id, 0, RANDOM_NEGATIVE)):
                taken += 1
            if taken >= neg_per_pos:
                break
    return positives + negatives


def _sample_negatives(
    positives: list[PairExample],
    train_graphs: list[UnifiedAst],
    mined: dict[str, list[PairExample]] | None,
    hard_fraction: float,
    neg_per_pos: int,
    rng: np.random.Generator,
    epoch: int,
) -> list[PairExample]:
    by_id = {g.graph_id: g for g in train_graphs}
    negatives: list[PairExample] = []
    hard_cursor: dict[str, int] = {}
    for pair in positives:
        anchor = by_id[pair.g1_id]
        for _ in range(neg_per_pos):
            use_hard = mined is not None and rng.random() < hard_fraction
            candidate: PairExample | None = None
            if use_hard:
                ranked = mined.get(anchor.graph_id, [])
                if ranked:
                    cursor = hard_cursor.get(anchor.graph_id, epoch % len(ranked))
                    candidate = ranked[cursor % len(ranked)]
                    hard_cursor[anchor.graph_id] = cursor + 1
            if candidate is None:
                partners = [
                    g
                    for g in train_graphs
                    if g.task_id != anchor.task_id and g.language != anchor.language
                ]
                if not partners:
                    continue
                pick = partners[int(rng.integers(len(partners)))]
                candidate = PairExample(anchor.graph_id, pick.graph_id, 0, RANDOM_NEGATIVE)
            negatives.append(candidate)
    return negatives


def train_clone(
    graphs: list[UnifiedAst],
    splits: SplitManifest,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    log_fn=None,
) -> TrainResult:
    """Mini-batch Adam on the contrastive clone objective."""
    rngs = _rngs(config.seed, ["model", "shuffle", "negatives", "valid", "dropout"])
    model_seed = int(rngs["model"].integers(2**31))
    dropout_base = int(rngs["dropout"].integers(2**31))

    graphs = sorted(graphs, key=lambda g: g.graph_id)
    by_id = {g.graph_id: g for g in graphs}
    train_graphs = [g for g in graphs if g.task_id in splits.train]
    num_labels = 1 + max(n.universal_label_id for g in graphs for n in g.nodes)

    model = GmnModel(num_labels, build_vocab(train_graphs, config.vocab_size), config.gmn_config(), model_seed)
    state = AdamState(lr=config.lr)

    positives = clone_positives(train_graphs)
    if not positives:
        raise ValueError("no cross-language positive pairs in the training split")
    valid_pairs = build_eval_pairs(graphs, splits.valid, rngs["valid"], config.neg_per_pos)

    mined: dict[str, list[PairExample]] | None = None
    if config.mining == "static":
        mined = mine_hard_negatives(
            train_graphs, train_graphs, None, config.mining_top_k, num_labels
        )

    history: list[dict] = []
    pairs_used: set[PairExample] = set(positives)
    best_metric = -1.0
    best_params = _snapshot(model)
    batch_size = config.effective_batch_size()
    step = 0
    done = False

    def run_validation(epoch: int, mean_loss: float) -> None:
        nonlocal best_metric, best_params
        metrics = _validate_clone(valid_pairs, by_id, model, config)
        row = {
            "epoch": epoch,
            "step": step,
            "loss": mean_loss,
            "val_p": metrics.precision,
            "val_r": metrics.recall,
            "val_f1": metrics.f1,
            "val_mrr": None,
        }
        history.append(row)
        if log_fn:
            log_fn(row)
        score = metrics.f1 if metrics.f1 is not None else -1.0
        # >= keeps the latest checkpoint among equally good epochs
        if score >= best_metric:
            best_metric = score
            best_params = _snapshot(model)

    for epoch in range(config.epochs):
        if config.mining == "dynamic":
            mined = mine_hard_negatives(train_graphs, train_graphs, model, config.mining_top_k, num_labels)
        negatives = _sample_negatives(
            positives,
            train_graphs,
            mined if config.mining in ("static", "dynamic") else None,
            config.hard_fraction,
            config.neg_per_pos,
            rngs["negatives"],
            epoch,
        )
        examples = positives + negatives
        pairs_used.update(negatives)
        order = [examples[i] for i in rngs["shuffle"].permutation(len(examples))]

        epoch_losses: list[float] = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            loss_terms = []
            try:
                for index, example in enumerate(batch):
                    enc = encode_pair(
                        by_id[example.g1_id],
                        by_id[example.g2_id],
                        model,
                        train=True,
                        dropout_seed=_dropout_seed(dropout_base, step, f"{index}"),
                    )
                    sim = enc.similarity()
                    dist = pair_distance(enc.v1, enc.v2)
                    loss_terms.append(
                        clone_loss(sim, dist, example.label, config.tau, config.margin, config.loss_form)
                    )
                total = loss_terms[0]
                for term in loss_terms[1:]:
                    total = ad.add(total, term)
                mean = ad.affine(total, 1.0 / len(loss_terms))
                value = float(mean.data)
                if not np.isfinite(value):
                    raise NonFiniteValue(f"loss={value}")
                grads = gradients(mean, model.params)
                adam_step(model.params, grads, state)
                zero_grads(model.params)
            except NonFiniteValue as exc:
                dump = _dump_diagnostics(
                    out_dir,
                    {
                        "task": "clone",
                        "epoch": epoch,
                        "step": step,
                        "batch": [[p.g1_id, p.g2_id, p.label] for p in batch],
                        "error": str(exc),
                    },
                )
                raise NonFiniteLoss(f"non-finite loss at step {step} ({dump or exc})") from exc
            epoch_losses.append(value)
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
        run_validation(epoch, float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
        if done:
            break

    _restore(model, best_params)
    threshold, _ = sweep_threshold(
        pair_similarities(valid_pairs, by_id, model),
        [p.label for p in valid_pairs],
        config.threshold_step,
    )
    return TrainResult(
        model=model,
        history=history,
        threshold=threshold,
        best_metric=best_metric,
        pairs_used={
            "train": sorted(pairs_used, key=lambda p: (p.g1_id, p.g2_id, p.label)),
            "valid": valid_pairs,
        },
    )


def _validate_clone(
    pairs: list[PairExample], by_id: dict[str, UnifiedAst], model: GmnModel, config: TrainConfig
) -> Metrics:
    if not pairs:
        return Metrics()
    sims = pair_similarities(pairs, by_id, model)
    labels = [p.label for p in pairs]
    threshold, _ = sweep_threshold(sims, labels, config.threshold_step)
    predicted = [1 if s >= threshold else 0 for s in sims]
    return classification_metrics(labels, predicted)


def build_retrieval_examples(
    train_graphs: list[UnifiedAst], neg_k: int, rng: np.random.Generator
) -> list[RetrievalExample]:
    """One positive and neg_k cross-task negatives per eligible anchor."""
    examples = []
    ordered = sorted(train_graphs, key=lambda g: g.graph_id)
    for anchor in ordered:
        positives = [
            g for g in ordered if g.task_id == anchor.task_id and g.language != anchor.language
        ]
        if not positives:
            continue
        positive = positives[int(rng.integers(len(positives)))]
        pool = [g for g in ordered if g.task_id != anchor.task_id and g.language != anchor.language]
        count = min(neg_k, len(pool))
        chosen = (
            [pool[i] for i in rng.choice(len(pool), size=count, replace=False)] if count else []
        )
        examples.append(
            RetrievalExample(
                anchor_id=anchor.graph_id,
                positive_id=positive.graph_id,
                negative_ids=tuple(g.graph_id for g in chosen),
            )
        )
    return examples


def train_retrieval(
    graphs: list[UnifiedAst],
    splits: SplitManifest,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    log_fn=None,
) -> TrainResult:
    """Multi-negative sampling with temperature-scaled cross-entropy."""
    rngs = _rngs(config.seed, ["model", "shuffle", "negatives", "dropout"])
    model_seed = int(rngs["model"].integers(2**31))
    dropout_base = int(rngs["dropout"].integers(2**31))

    graphs = sorted(graphs, key=lambda g: g.graph_id)
    by_id = {g.graph_id: g for g in graphs}
    train_graphs = [g for g in graphs if g.task_id in splits.train]
    valid_graphs = [g for g in graphs if g.task_id in splits.valid]
    num_labels = 1 + max(n.universal_label_id for g in graphs for n in g.nodes)

    model = GmnModel(num_labels, build_vocab(train_graphs, config.vocab_size), config.gmn_config(), model_seed)
    state = AdamState(lr=config.lr)

    history: list[dict] = []
    best_metric = -1.0
    best_params = _snapshot(model)
    batch_size = config.effective_batch_size()
    step = 0
    done = False

    def run_validation(epoch: int, mean_loss: float) -> None:
        nonlocal best_metric, best_params
        index = embed_graphs(valid_graphs, model)
        metrics = evaluate_retrieval([g.graph_id for g in valid_graphs], index, k=4)
        row = {
            "epoch": epoch,
            "step": step,
            "loss": mean_loss,
            "val_p": None,
            "val_r": None,
            "val_f1": None,
            "val_mrr": metrics.mrr,
        }
        history.append(row)
        if log_fn:
            log_fn(row)
        score = metrics.mrr if metrics.mrr is not None else -1.0
        if score >= best_metric:
            best_metric = score
            best_params = _snapshot(model)

    for epoch in range(config.epochs):
        examples = build_retrieval_examples(train_graphs, config.neg_k, rngs["negatives"])
        order = [examples[i] for i in rngs["shuffle"].permutation(len(examples))]
        epoch_losses: list[float] = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            try:
                cache: dict[str, ad.Tensor] = {}

                def embed_train(graph_id: str) -> ad.Tensor:
                    if graph_id not in cache:
                        graph = by_id[graph_id]
                        cache[graph_id] = encode_pair(
                            graph,
                            graph,
                            model,
                            train=True,
                            dropout_seed=_dropout_seed(dropout_base, step, graph_id),
                        ).v1
                    return cache[graph_id]

                loss_terms = []
                for example in batch:
                    anchor_v = embed_train(example.anchor_id)
                    positive_v = embed_train(example.positive_id)
                    negative_vs = [embed_train(gid) for gid in example.negative_ids]
                    loss_terms.append(retrieval_loss(anchor_v, positive_v, negative_vs, config.tau))
                total = loss_terms[0]
                for term in loss_terms[1:]:
                    total = ad.add(total, term)
                mean = ad.affine(total, 1.0 / len(loss_terms))
                value = float(mean.data)
                if not np.isfinite(value):
                    raise NonFiniteValue(f"loss={value}")
                grads = gradients(mean, model.params)
                adam_step(model.params, grads, state)
                zero_grads(model.params)
            except NonFiniteValue as exc:
                dump = _dump_diagnostics(
                    out_dir,
                    {
                        "task": "retrieval",
                        "epoch": epoch,
                        "step": step,
                        "batch": [e.anchor_id for e in batch],
                        "error": str(exc),
                    },
                )
                raise NonFiniteLoss(f"non-finite loss at step {step} ({dump or exc})") from exc
            epoch_losses.append(value)
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
        run_validation(epoch, float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
        if done:
            break

    _restore(model, best_params)
    return TrainResult(model=model, history=history, threshold=None, best_metric=best_metric)


def train(
    graphs: list[UnifiedAst],
    splits: SplitManifest,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    log_fn=None,
) -> TrainResult:
    if config.task == "clone":
        return train_clone(graphs, splits, config, out_dir, log_fn)
    if config.task == "retrieval":
        return train_retrieval(graphs, splits, config, out_dir, log_fn)
    raise ValueError(f"unknown training task {config.task!r}")
