"""scikit-learn style front door for the pipeline.

LabelUnifier learns the universal label set from parse trees and rewrites
trees over it; AstEnhancer turns labeled trees into enhanced graphs;
GmnCloneDetector and GmnRetriever train the pair encoder for the two
downstream tasks. All four follow the fit/transform/predict conventions and
compose with sklearn tooling via get_params/set_params.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .enhance import (
    DEFAULT_PRUNE_RATIO,
    KeyNodePolicy,
    PruneConfig,
    UnifiedAst,
    enhance_tree,
)
from .gmn import encode_pair, graph_embedding
from .interchange import CorpusManifest, ManifestEntry, ParseTree
from .signatures import ExternalSimilarityProvider, SimilarityProvider
from .tasks import evaluate_retrieval, make_splits
from .train import TrainConfig, train
from .unify import (
    DEFAULT_F_MIN,
    DEFAULT_H_MAX,
    DEFAULT_THRESHOLD,
    UniversalLabelSet,
    apply_mapping,
    build_label_set,
)
from . import autodiff as ad
from .validation import ensure_graph_pairs, ensure_parse_trees, ensure_unified_graphs


class LabelUnifier(BaseEstimator, TransformerMixin):
    """Learn the cross-language universal label set and apply it to trees.

    fit expects parse trees (plain, or (tree, task_id) tuples so downstream
    graphs know their task); transform annotates trees with universal label
    ids. Unseen node types at transform time map to Other.
    """

    def __init__(
        self,
        schemas=None,
        threshold=DEFAULT_THRESHOLD,
        f_min=DEFAULT_F_MIN,
        h_max=DEFAULT_H_MAX,
        provider="builtin",
        endpoint=None,
        timeout=5.0,
    ):
        self.schemas = schemas
        self.threshold = threshold
        self.f_min = f_min
        self.h_max = h_max
        self.provider = provider
        self.endpoint = endpoint
        self.timeout = timeout

    @staticmethod
    def _split(X) -> tuple[list[ParseTree], list[str]]:
        trees, task_ids = [], []
        for item in X:
            if isinstance(item, ParseTree):
                trees.append(item)
                task_ids.append("")
            else:
                tree, task_id = item
                trees.append(tree)
                task_ids.append(task_id)
        return trees, task_ids

    def _provider(self) -> SimilarityProvider:
        if self.provider == "external":
            if not self.endpoint:
                raise ValueError("provider='external' needs an endpoint")
            return ExternalSimilarityProvider(self.endpoint, self.timeout, self.schemas or {})
        return SimilarityProvider()

    def fit(self, X, y=None):
        trees, _ = self._split(X)
        ensure_parse_trees(trees)
        self.label_set_ = build_label_set(
            trees,
            self.schemas or {},
            threshold=self.threshold,
            f_min=self.f_min,
            h_max=self.h_max,
            provider=self._provider(),
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "label_set_")
        trees, task_ids = self._split(X)
        return [apply_mapping(tree, self.label_set_, task_id) for tree, task_id in zip(trees, task_ids)]


class AstEnhancer(BaseEstimator, TransformerMixin):
    """Stateless transform: global root, key-node flags, seeded pruning."""

    def __init__(
        self,
        label_set: UniversalLabelSet | None = None,
        key_patterns=None,
        wrapper_patterns=None,
        ratio=DEFAULT_PRUNE_RATIO,
        seed=17,
    ):
        self.label_set = label_set
        self.key_patterns = key_patterns
        self.wrapper_patterns = wrapper_patterns
        self.ratio = ratio
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.label_set is None:
            raise ValueError("AstEnhancer needs the label_set learned by LabelUnifier")
        self.policy_ = KeyNodePolicy.from_patterns(self.label_set, self.key_patterns)
        return self

    def transform(self, X) -> list[UnifiedAst]:
        check_is_fitted(self, "policy_")
        cfg = PruneConfig(ratio=self.ratio, seed=self.seed)
        return [
            enhance_tree(tree, self.label_set, self.policy_, cfg, self.wrapper_patterns) for tree in X
        ]


def _splits_from_graphs(graphs: list[UnifiedAst], ratios, seed: int):
    manifest = CorpusManifest(corpus_id="memory")
    for g in graphs:
        manifest.entries.append(
            ManifestEntry(
                source_id=g.graph_id.split("/")[-1], task_id=g.task_id, language=g.language, path=""
            )
        )
    return make_splits(manifest, ratios, seed)


class GmnCloneDetector(BaseEstimator):
    """Pair classifier: clone iff encoded cosine similarity clears a
    validation-tuned threshold.

    fit takes enhanced graphs (supervision comes from their task ids) and
    holds out validation tasks internally; predict and decision_function take
    (graph, graph) pairs.
    """

    def __init__(
        self,
        lr=1e-3,
        epochs=10,
        max_steps=None,
        batch_size=24,
        tau=0.1,
        margin=10.0,
        neg_per_pos=1,
        mining="static",
        hard_fraction=0.5,
        mining_top_k=10,
        loss_form="contrastive",
        seed=17,
        split_ratios=(8, 1, 1),
        type_dim=50,
        attr_dim=50,
        hidden_dim=100,
        rounds=4,
        dropout=0.1,
        leaky_slope=0.2,
        vocab_size=5000,
        threshold_step=0.01,
    ):
        self.lr = lr
        self.epochs = epochs
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.tau = tau
        self.margin = margin
        self.neg_per_pos = neg_per_pos
        self.mining = mining
        self.hard_fraction = hard_fraction
        self.mining_top_k = mining_top_k
        self.loss_form = loss_form
        self.seed = seed
        self.split_ratios = split_ratios
        self.type_dim = type_dim
        self.attr_dim = attr_dim
        self.hidden_dim = hidden_dim
        self.rounds = rounds
        self.dropout = dropout
        self.leaky_slope = leaky_slope
        self.vocab_size = vocab_size
        self.threshold_step = threshold_step

    def _config(self, task: str) -> TrainConfig:
        return TrainConfig(
            task=task,
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            max_steps=self.max_steps,
            tau=self.tau,
            margin=self.margin,
            neg_per_pos=self.neg_per_pos,
            mining=self.mining,
            hard_fraction=self.hard_fraction,
            mining_top_k=self.mining_top_k,
            loss_form=self.loss_form,
            seed=self.seed,
            type_dim=self.type_dim,
            attr_dim=self.attr_dim,
            hidden_dim=self.hidden_dim,
            rounds=self.rounds,
            dropout=self.dropout,
            leaky_slope=self.leaky_slope,
            vocab_size=self.vocab_size,
            threshold_step=self.threshold_step,
        )

    def fit(self, X, y=None, splits=None):
        graphs = ensure_unified_graphs(X)
        if splits is None:
            splits = _splits_from_graphs(graphs, self.split_ratios, self.seed)
        result = train(graphs, splits, self._config("clone"))
        self.model_ = result.model
        self.threshold_ = result.threshold
        self.history_ = result.history
        self.splits_ = splits
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        pairs = ensure_graph_pairs(X)
        sims = []
        with ad.no_grad():
            for a, b in pairs:
                sims.append(float(encode_pair(a, b, self.model_).similarity().data))
        return np.asarray(sims)

    def predict(self, X) -> np.ndarray:
        sims = self.decision_function(X)
        return (sims >= self.threshold_).astype(int)


class GmnRetriever(BaseEstimator, TransformerMixin):
    """Cross-language code retrieval over self-encoded graph embeddings."""

    def __init__(
        self,
        lr=1e-3,
        epochs=10,
        max_steps=None,
        batch_size=8,
        neg_k=10,
        tau=0.1,
        seed=17,
        split_ratios=(8, 1, 1),
        type_dim=50,
        attr_dim=50,
        hidden_dim=100,
        rounds=4,
        dropout=0.1,
        leaky_slope=0.2,
        vocab_size=5000,
    ):
        self.lr = lr
        self.epochs = epochs
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.neg_k = neg_k
        self.tau = tau
        self.seed = seed
        self.split_ratios = split_ratios
        self.type_dim = type_dim
        self.attr_dim = attr_dim
        self.hidden_dim = hidden_dim
        self.rounds = rounds
        self.dropout = dropout
        self.leaky_slope = leaky_slope
        self.vocab_size = vocab_size

    def fit(self, X, y=None, splits=None):
        graphs = ensure_unified_graphs(X)
        if splits is None:
            splits = _splits_from_graphs(graphs, self.split_ratios, self.seed)
        config = TrainConfig(
            task="retrieval",
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            max_steps=self.max_steps,
            neg_k=self.neg_k,
            tau=self.tau,
            seed=self.seed,
            type_dim=self.type_dim,
            attr_dim=self.attr_dim,
            hidden_dim=self.hidden_dim,
            rounds=self.rounds,
            dropout=self.dropout,
            leaky_slope=self.leaky_slope,
            vocab_size=self.vocab_size,
        )
        result = train(graphs, splits, config)
        self.model_ = result.model
        self.history_ = result.history
        self.splits_ = splits
        self.index_ = {}
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        graphs = ensure_unified_graphs(X)
        return np.stack([graph_embedding(g, self.model_) for g in graphs])

    def build_index(self, X) -> "GmnRetriever":
        check_is_fitted(self, "model_")
        graphs = ensure_unified_graphs(X)
        self.index_ = {g.graph_id: graph_embedding(g, self.model_) for g in graphs}
        return self

    def query(self, graph: UnifiedAst, k: int = 4) -> list[tuple[str, float]]:
        """Top-k cross-language candidates from the built index."""
        check_is_fitted(self, "model_")
        if not self.index_:
            raise ValueError("call build_index before query")
        vector = graph_embedding(graph, self.model_)
        scored = []
        for graph_id, candidate in self.index_.items():
            parts = graph_id.split("/")
            language = parts[-2] if len(parts) >= 2 else ""
            if graph_id == graph.graph_id or language == graph.language:
                continue
            denom = float(np.linalg.norm(vector)) * float(np.linalg.norm(candidate))
            sim = float(np.dot(vector, candidate) / denom) if denom else 0.0
            scored.append((graph_id, sim))
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:k]

    def score(self, X, y=None, k: int = 4) -> float:
        """Mean reciprocal rank over X as queries against the built index."""
        graphs = ensure_unified_graphs(X)
        index = dict(self.index_) or {g.graph_id: graph_embedding(g, self.model_) for g in graphs}
        metrics = evaluate_retrieval([g.graph_id for g in graphs], index, k=k)
        return metrics.mrr if metrics.mrr is not None else 0.0
