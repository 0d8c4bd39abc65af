"""Graph matching encoder for pairs of unified ASTs.

One encode runs: node feature init (type embedding + mean attribute embedding
through a two-layer MLP with LayerNorm/Dropout), then four shared-weight
rounds of cross-graph attention followed by a GRU node update over each
graph's own neighborhood, then global attention pooling. The two pooled
vectors are mutually aware; cosine between them scores the pair.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .enhance import UnifiedAst
from .errors import UnknownLabel

PAD_TOKEN = "<pad>"
OOV_TOKEN = "<oov>"


@dataclass(frozen=True)
class GmnConfig:
    type_dim: int = 50
    attr_dim: int = 50
    hidden_dim: int = 100
    rounds: int = 4
    dropout: float = 0.1
    leaky_slope: float = 0.2

    @property
    def node_dim(self) -> int:
        return self.type_dim + self.attr_dim


def build_vocab(graphs: list[UnifiedAst], max_size: int = 5000) -> dict[str, int]:
    """Attribute-token vocabulary with reserved PAD and OOV rows."""
    counts: dict[str, int] = {}
    for graph in graphs:
        for node in graph.nodes:
            for token in node.attr_tokens:
                counts[token] = counts.get(token, 0) + 1
    budget = max(0, max_size - 2)
    chosen = sorted(counts, key=lambda t: (-counts[t], t))[:budget]
    vocab = {PAD_TOKEN: 0, OOV_TOKEN: 1}
    for token in sorted(chosen):
        vocab[token] = len(vocab)
    return vocab


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class _GraphConstants:
    label_idx: np.ndarray
    token_idx: np.ndarray
    token_weights: np.ndarray  # N x T, row i averages node i's token rows
    neighbor_avg: np.ndarray  # N x N, row i averages node i's neighbors


class GmnModel:
    """Trainable parameters plus the attribute vocabulary."""

    def __init__(
        self,
        num_labels: int,
        vocab: dict[str, int],
        config: GmnConfig = GmnConfig(),
        seed: int = 0,
        dtype=np.float32,
    ) -> None:
        self.num_labels = num_labels
        self.vocab = dict(vocab)
        self.config = config
        self.dtype = dtype
        self._graph_cache: dict[str, _GraphConstants] = {}

        d_t, d_a = config.type_dim, config.attr_dim
        d, hidden = config.node_dim, config.hidden_dim
        rng = np.random.Generator(np.random.PCG64(seed))

        def mat(fan_in, fan_out, shape=None):
            return Tensor(
                _glorot(rng, fan_in, fan_out, shape or (fan_in, fan_out), dtype),
                requires_grad=True,
                dtype=dtype,
            )

        def vec(n):
            return Tensor(np.zeros(n, dtype=dtype), requires_grad=True, dtype=dtype)

        self.params: dict[str, Tensor] = {
            "e_type": Tensor(
                rng.normal(0.0, 0.1, size=(num_labels, d_t)).astype(dtype), requires_grad=True, dtype=dtype
            ),
            "e_attr": Tensor(
                rng.normal(0.0, 0.1, size=(len(self.vocab), d_a)).astype(dtype),
                requires_grad=True,
                dtype=dtype,
            ),
            "w1": mat(d, hidden),
            "b1": vec(hidden),
            "w2": mat(hidden, d),
            "b2": vec(d),
            "attn_own": mat(d, 1, (d, 1)),
            "attn_other": mat(d, 1, (d, 1)),
            "gru_wr": mat(2 * d, d),
            "gru_ur": mat(d, d),
            "gru_br": vec(d),
            "gru_wz": mat(2 * d, d),
            "gru_uz": mat(d, d),
            "gru_bz": vec(d),
            "gru_wh": mat(2 * d, d),
            "gru_uh": mat(d, d),
            "gru_bh": vec(d),
            "pool_w": mat(d, 1, (d, 1)),
        }

    # -------------------------------------------------------- persistence

    def vocab_hash(self) -> str:
        blob = json.dumps(sorted(self.vocab.items()), separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def sidecar(self, label_set_hash: str = "", extra: dict | None = None) -> dict:
        side = {
            "type_dim": self.config.type_dim,
            "attr_dim": self.config.attr_dim,
            "hidden_dim": self.config.hidden_dim,
            "rounds": self.config.rounds,
            "dropout": self.config.dropout,
            "leaky_slope": self.config.leaky_slope,
            "num_labels": self.num_labels,
            "vocab": sorted(self.vocab.items(), key=lambda kv: kv[1]),
            "label_set_hash": label_set_hash,
            "vocab_hash": self.vocab_hash(),
        }
        if extra:
            side.update(extra)
        return side

    def save(self, path, label_set_hash: str = "", extra: dict | None = None) -> None:
        save_checkpoint(path, self.params, self.sidecar(label_set_hash, extra))

    @classmethod
    def load(cls, path) -> "GmnModel":
        arrays, side = load_checkpoint(path)
        config = GmnConfig(
            type_dim=side["type_dim"],
            attr_dim=side["attr_dim"],
            hidden_dim=side["hidden_dim"],
            rounds=side["rounds"],
            dropout=side["dropout"],
            leaky_slope=side["leaky_slope"],
        )
        vocab = {token: idx for token, idx in side["vocab"]}
        model = cls(side["num_labels"], vocab, config)
        for name, tensor in model.params.items():
            tensor.data = arrays[name].astype(model.dtype)
        return model

    # -------------------------------------------------------- graph prep

    def _constants(self, graph: UnifiedAst) -> _GraphConstants:
        cached = self._graph_cache.get(graph.graph_id)
        if cached is not None:
            return cached
        n = len(graph.nodes)
        label_idx = np.array([node.universal_label_id for node in graph.nodes], dtype=np.int64)
        if label_idx.size and label_idx.max() >= self.num_labels:
            raise UnknownLabel(
                f"{graph.graph_id}: label id {int(label_idx.max())} outside table of {self.num_labels}"
            )

        token_idx: list[int] = []
        token_weights = []
        positions: list[tuple[int, int]] = []
        for node in graph.nodes:
            m = len(node.attr_tokens)
            for token in node.attr_tokens:
                positions.append((node.id, len(token_idx)))
                token_idx.append(self.vocab.get(token, self.vocab[OOV_TOKEN]))
                token_weights.append(1.0 / m)
        weights = np.zeros((n, len(token_idx)), dtype=self.dtype)
        for (node_id, column), w in zip(positions, token_weights):
            weights[node_id, column] = w

        adjacency = graph.adjacency()
        neighbor_avg = np.zeros((n, n), dtype=self.dtype)
        for node in graph.nodes:
            neighbors = adjacency[node.id]
            if neighbors:
                neighbor_avg[node.id, neighbors] = 1.0 / len(neighbors)

        constants = _GraphConstants(label_idx, np.asarray(token_idx, dtype=np.int64), weights, neighbor_avg)
        self._graph_cache[graph.graph_id] = constants
        return constants


@dataclass
class PairEncoding:
    """Jointly produced graph vectors; v1 depends on graph 2 and vice versa."""

    v1: Tensor
    v2: Tensor
    node_states: tuple[Tensor, Tensor]
    graph_ids: tuple[str, str]
    stats: dict = field(default_factory=dict)

    def similarity(self) -> Tensor:
        return ad.cosine_sim(self.v1, self.v2)


def init_node_features(
    graph: UnifiedAst, model: GmnModel, train: bool = False, dropout_seed: int = 0
) -> Tensor:
    """Initial node representations: [type embedding ; mean attr embedding]
    through the two-layer MLP, LayerNorm, and (in training) Dropout.

    Nodes without attribute tokens get a zero attribute embedding.
    """
    consts = model._constants(graph)
    p = model.params
    t = ad.rows(p["e_type"], consts.label_idx)
    gathered = ad.rows(p["e_attr"], consts.token_idx)
    v = ad.matmul(ad.constant(consts.token_weights, dtype=model.dtype), gathered)
    h0 = ad.concat([t, v], axis=1)
    a1 = ad.relu(ad.add(ad.matmul(h0, p["w1"]), p["b1"]))
    a2 = ad.relu(ad.add(ad.matmul(a1, p["w2"]), p["b2"]))
    z0 = ad.layer_norm(a2)
    if train and model.config.dropout > 0.0:
        z0 = ad.dropout(z0, model.config.dropout, train=True, seed=dropout_seed)
    return z0


def _attention_scores(z_own: Tensor, z_other: Tensor, model: GmnModel) -> Tensor:
    """LeakyReLU(a^T [z_i || z_j]) for all (i, j), via the rank-1 split of a."""
    n_own = z_own.data.shape[0]
    n_other = z_other.data.shape[0]
    p_own = ad.matmul(z_own, model.params["attn_own"])
    q_other = ad.matmul(z_other, model.params["attn_other"])
    ones_row = ad.constant(np.ones((1, n_other)), dtype=model.dtype)
    ones_col = ad.constant(np.ones((n_own, 1)), dtype=model.dtype)
    scores = ad.add(ad.matmul(p_own, ones_row), ad.matmul(ones_col, ad.transpose(q_other)))
    return ad.leaky_relu(scores, model.config.leaky_slope)


def cross_attention(z1: Tensor, z2: Tensor, model: GmnModel) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Softmax-weighted counterpart contexts for both graphs.

    Returns (c1, c2, alpha1, alpha2) where alpha rows sum to one.
    """
    alpha1 = ad.softmax_rows(_attention_scores(z1, z2, model))
    alpha2 = ad.softmax_rows(_attention_scores(z2, z1, model))
    c1 = ad.matmul(alpha1, z2)
    c2 = ad.matmul(alpha2, z1)
    return c1, c2, alpha1, alpha2


def propagate_round(z: Tensor, context: Tensor, neighbor_avg: Tensor, model: GmnModel) -> Tensor:
    """GRU update: input [z_i || c_i], hidden state = mean neighbor state.

    Isolated nodes aggregate a zero vector; the update is still defined.
    """
    p = model.params
    u = ad.concat([z, context], axis=1)
    nbar = ad.matmul(neighbor_avg, z)
    reset = ad.sigmoid(ad.add(ad.add(ad.matmul(u, p["gru_wr"]), ad.matmul(nbar, p["gru_ur"])), p["gru_br"]))
    update = ad.sigmoid(ad.add(ad.add(ad.matmul(u, p["gru_wz"]), ad.matmul(nbar, p["gru_uz"])), p["gru_bz"]))
    candidate = ad.tanh(
        ad.add(ad.add(ad.matmul(u, p["gru_wh"]), ad.matmul(ad.mul(reset, nbar), p["gru_uh"])), p["gru_bh"])
    )
    keep = ad.affine(update, -1.0, 1.0)
    return ad.add(ad.mul(keep, nbar), ad.mul(update, candidate))


def pool(z: Tensor, model: GmnModel) -> tuple[Tensor, Tensor]:
    """Global attention pooling; returns (graph vector 1 x d, gamma 1 x n)."""
    scores = ad.matmul(z, model.params["pool_w"])
    gamma = ad.softmax_rows(ad.transpose(scores))
    return ad.matmul(gamma, z), gamma


def encode_pair(
    g1: UnifiedAst,
    g2: UnifiedAst,
    model: GmnModel,
    train: bool = False,
    dropout_seed: int = 0,
    collect_stats: bool = False,
) -> PairEncoding:
    """Run the full pipeline on a pair of graphs."""
    if len(g1.nodes) == 0 or len(g2.nodes) == 0:
        raise ValueError("encode_pair needs non-empty graphs")
    avg1 = ad.constant(model._constants(g1).neighbor_avg, dtype=model.dtype)
    avg2 = ad.constant(model._constants(g2).neighbor_avg, dtype=model.dtype)
    z1 = init_node_features(g1, model, train, dropout_seed=2 * dropout_seed)
    z2 = init_node_features(g2, model, train, dropout_seed=2 * dropout_seed + 1)

    stats: dict = {"attention_row_sums": [], "pool_sums": []}
    for _ in range(model.config.rounds):
        c1, c2, alpha1, alpha2 = cross_attention(z1, z2, model)
        if collect_stats:
            stats["attention_row_sums"].append(
                (alpha1.data.sum(axis=1).copy(), alpha2.data.sum(axis=1).copy())
            )
        z1 = propagate_round(z1, c1, avg1, model)
        z2 = propagate_round(z2, c2, avg2, model)

    v1, gamma1 = pool(z1, model)
    v2, gamma2 = pool(z2, model)
    if collect_stats:
        stats["pool_sums"] = [float(gamma1.data.sum()), float(gamma2.data.sum())]

    return PairEncoding(
        v1=v1,
        v2=v2,
        node_states=(z1, z2),
        graph_ids=(g1.graph_id, g2.graph_id),
        stats=stats if collect_stats else {},
    )


def pair_similarity(g1: UnifiedAst, g2: UnifiedAst, model: GmnModel) -> float:
    """Eval-mode cosine score for one pair."""
    with ad.no_grad():
        return float(encode_pair(g1, g2, model).similarity().data)


def graph_embedding(graph: UnifiedAst, model: GmnModel) -> np.ndarray:
    """Standalone vector for one graph: the graph encoded against itself."""
    with ad.no_grad():
        encoding = encode_pair(graph, graph, model)
    return np.array(encoding.v1.data[0], dtype=np.float32)


def embed_graphs(graphs: list[UnifiedAst], model: GmnModel) -> dict[str, np.ndarray]:
    return {g.graph_id: graph_embedding(g, model) for g in graphs}
