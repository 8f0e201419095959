"""Multi-faceted entity representations.

Two stages, both differentiable end to end:

* per-snapshot relation-aware attenuated graph attention over 1..K hop
  neighbors (multi-hop relations are sums along a sampled shortest path,
  weighted by a Gaussian decay in the hop count);
* causal multi-head self-attention over each entity's per-snapshot sequence.

:class:`MFAR` evaluates both stages for every (entity, snapshot) pair at once
and caches the resulting table per parameter version.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .graph import TemporalKG, hop_neighbors, shortest_relation_path
from .params import ParameterStore, glorot


def auxiliary_relation(relation_emb: torch.Tensor, path) -> torch.Tensor:
    path = list(path)
    if not path:
        raise ValueError("relation path must be non-empty")
    if len(path) == 1:
        return relation_emb[path[0]]
    return relation_emb[torch.as_tensor(path)].sum(0)


def attenuation(k, b: float):
    """Gaussian hop decay ``exp(-k^2 / (2 b^2))``."""
    if not b > 0:
        raise ValueError("bandwidth must be positive")
    if isinstance(k, torch.Tensor):
        return torch.exp(-k.double() ** 2 / (2 * b * b))
    return math.exp(-(k ** 2) / (2 * b * b))


def triple_scores(W1, W2, e_i, rel_vecs, e_j, hops, bandwidth, slope=0.2):
    """Triple vectors, importance scores and attenuations for one entity's neighbors.

    ``W1``: (M, d, 2D+F'); ``W2``: (M, d); ``e_i``: (D,); ``rel_vecs``: (n, F');
    ``e_j``: (n, D); ``hops``: (n,). Returns ``t`` (n, M, d), ``beta`` (n, M),
    ``w`` (n,).
    """
    n = rel_vecs.shape[0]
    if n == 0:
        m, d = W2.shape
        return W1.new_zeros(0, m, d), W1.new_zeros(0, m), W1.new_zeros(0)
    x = torch.cat([e_i.expand(n, -1), rel_vecs, e_j], dim=1)
    t = torch.einsum("nc,mdc->nmd", x, W1)
    beta = F.leaky_relu(torch.einsum("nmd,md->nm", t, W2), slope)
    w = attenuation(torch.as_tensor(hops), bandwidth)
    return t, beta, w


def attention_weights(beta: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Softmax of ``w * beta`` over neighbor triples (dim 0); heads broadcast."""
    if beta.dim() == 2:
        w = w[:, None]
    return torch.softmax(w * beta, dim=0)


def raga_combine(alpha: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
    """Sigmoid of the attention-weighted triple sum, heads concatenated."""
    return torch.sigmoid((alpha[..., None] * t).sum(0)).reshape(-1)


def tsan_encode(history: torch.Tensor, Wq, Wk, Wv, window: int | None = None) -> torch.Tensor:
    """Causal self-attention output at the last position of ``history`` (T, D')."""
    if history.shape[0] == 0:
        raise ValueError("history must contain at least one snapshot")
    if window is not None:
        history = history[-window:]
    return tsan_sequence(history[None], Wq, Wk, Wv)[0, -1]


def tsan_sequence(X: torch.Tensor, Wq, Wk, Wv, window: int | None = None) -> torch.Tensor:
    """Causal multi-head self-attention for a batch of sequences.

    ``X``: (B, T, D'); ``Wq/Wk/Wv``: (heads, D', F'/heads). Position ``p``
    attends to positions ``max(0, p - window + 1) .. p``.
    """
    T = X.shape[1]
    q = torch.einsum("btc,hcd->bhtd", X, Wq)
    k = torch.einsum("btc,hcd->bhtd", X, Wk)
    v = torch.einsum("btc,hcd->bhtd", X, Wv)
    scores = q @ k.transpose(-1, -2)
    pos = torch.arange(T)
    allowed = pos[None, :] <= pos[:, None]
    if window is not None:
        allowed &= pos[None, :] > pos[:, None] - window
    scores = scores.masked_fill(~allowed, float("-inf"))
    out = torch.softmax(scores, dim=-1) @ v  # (B, H, T, d)
    return out.permute(0, 2, 1, 3).reshape(X.shape[0], T, -1)


@dataclass
class RagaStructure:
    """Flattened neighbor triples for every (snapshot, entity) segment.

    Segment id is ``snapshot_index * num_entities + entity``. Relation paths
    are padded to ``max_hop`` with ``mask`` marking real entries.
    """

    seg: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    paths: np.ndarray
    mask: np.ndarray
    hops: np.ndarray
    num_segments: int

    @classmethod
    def build(cls, graph: TemporalKG, max_hop: int, hop_samples: int,
              rng: np.random.Generator) -> "RagaStructure":
        E = graph.num_entities
        seg, src, dst, paths, hops = [], [], [], [], []
        for si, snap in enumerate(graph.snapshots):
            for ent in snap.entities:
                sid = si * E + ent
                for r, o in snap.out_edges(ent):
                    seg.append(sid); src.append(ent); dst.append(o)
                    paths.append([r]); hops.append(1)
                if max_hop < 2:
                    continue
                dist = hop_neighbors(snap, ent, max_hop)
                for k in range(2, max_hop + 1):
                    ring = sorted(n for n, d in dist.items() if d == k)
                    if len(ring) > hop_samples:
                        ring = sorted(rng.choice(ring, size=hop_samples, replace=False).tolist())
                    for n in ring:
                        path = shortest_relation_path(snap, ent, n, k, rng)
                        seg.append(sid); src.append(ent); dst.append(n)
                        paths.append(path); hops.append(k)
        K = max(max_hop, 1)
        P = np.zeros((len(paths), K), dtype=np.int64)
        M = np.zeros((len(paths), K), dtype=bool)
        for i, p in enumerate(paths):
            P[i, :len(p)] = p
            M[i, :len(p)] = True
        return cls(np.asarray(seg, dtype=np.int64), np.asarray(src, dtype=np.int64),
                   np.asarray(dst, dtype=np.int64), P, M, np.asarray(hops, dtype=np.int64),
                   len(graph.snapshots) * E)

    def segment(self, snapshot_index: int, entity: int, num_entities: int) -> np.ndarray:
        return np.nonzero(self.seg == snapshot_index * num_entities + entity)[0]


def init_embedding_params(store: ParameterStore, cfg: TrainConfig, num_entities: int,
                          num_relation_ids: int, rng: np.random.Generator):
    store.add("emb.entity", glorot(rng, (num_entities, cfg.dim_entity)))
    store.add("emb.relation", glorot(rng, (num_relation_ids, cfg.dim_relation)))


def init_mfar_params(store: ParameterStore, cfg: TrainConfig, rng: np.random.Generator):
    D, Fr = cfg.dim_entity, cfg.dim_relation
    M, Mt = cfg.heads_raga, cfg.heads_tsan
    store.add("mfar.raga.W1", glorot(rng, (M, D // M, 2 * D + Fr)))
    store.add("mfar.raga.W2", glorot(rng, (M, D // M)))
    store.add("mfar.raga.W_iso", glorot(rng, (D, D)))
    for name in ("Wq", "Wk", "Wv"):
        store.add(f"mfar.tsan.{name}", glorot(rng, (Mt, D, Fr // Mt)))


class MFAR:
    """Representation table ``Z[entity, snapshot]`` over one graph.

    Column ``len(graph.snapshots)`` (also reachable as index ``-1``) holds the
    cold-start representation used before an entity's first snapshot.
    """

    def __init__(self, graph: TemporalKG, store: ParameterStore, cfg: TrainConfig,
                 structure: RagaStructure | None = None):
        self.graph = graph
        self.store = store
        self.cfg = cfg
        if structure is None:
            structure = RagaStructure.build(graph, cfg.max_hop, cfg.hop_samples,
                                            np.random.default_rng(cfg.seed))
        self.structure = structure
        s = structure
        self._seg = torch.as_tensor(s.seg)
        self._src = torch.as_tensor(s.src)
        self._dst = torch.as_tensor(s.dst)
        self._paths = torch.as_tensor(s.paths)
        self._mask = torch.as_tensor(s.mask, dtype=torch.float64)
        self._w = attenuation(torch.as_tensor(s.hops), cfg.bandwidth)
        present = torch.zeros(s.num_segments, dtype=torch.bool)
        present[self._seg] = True
        self._present = present
        self._cache: tuple[int, torch.Tensor] | None = None
        self._lock = threading.Lock()

    # -- single-entity paths (mirror the batched table) -----------------
    def isolated(self, entity) -> torch.Tensor:
        p = self.store
        return torch.sigmoid(p["emb.entity"][entity] @ p["mfar.raga.W_iso"].T)

    def raga_update(self, snapshot_index: int, entity: int) -> torch.Tensor:
        p = self.store
        idx = self.structure.segment(snapshot_index, entity, self.graph.num_entities)
        if len(idx) == 0:
            return self.isolated(entity)
        rel = p["emb.relation"]
        rel_vecs = torch.stack([
            auxiliary_relation(rel, self.structure.paths[i][self.structure.mask[i]].tolist())
            for i in idx])
        ent = p["emb.entity"]
        t, beta, w = triple_scores(p["mfar.raga.W1"], p["mfar.raga.W2"], ent[entity], rel_vecs,
                                   ent[torch.as_tensor(self.structure.dst[idx])],
                                   self.structure.hops[idx], self.cfg.bandwidth,
                                   self.cfg.leaky_slope)
        return raga_combine(attention_weights(beta, w), t)

    # -- batched table ----------------------------------------------------
    def raga_all(self) -> torch.Tensor:
        """Semantic embeddings for every (snapshot, entity): (T, E, D)."""
        p = self.store
        E, T = self.graph.num_entities, len(self.graph.snapshots)
        ent, rel = p["emb.entity"], p["emb.relation"]
        W1, W2 = p["mfar.raga.W1"], p["mfar.raga.W2"]
        M, d = W2.shape
        iso = torch.sigmoid(ent @ p["mfar.raga.W_iso"].T)  # (E, D)
        out = iso.unsqueeze(0).expand(T, E, -1).reshape(T * E, -1)
        if len(self._seg):
            rel_vecs = (rel[self._paths] * self._mask[..., None]).sum(1)
            x = torch.cat([ent[self._src], rel_vecs, ent[self._dst]], dim=1)
            t = torch.einsum("nc,mdc->nmd", x, W1)
            beta = F.leaky_relu(torch.einsum("nmd,md->nm", t, W2), self.cfg.leaky_slope)
            logits = self._w[:, None] * beta
            seg_max = logits.new_full((T * E, M), float("-inf")).scatter_reduce(
                0, self._seg[:, None].expand(-1, M), logits, reduce="amax")
            ex = torch.exp(logits - seg_max[self._seg])
            denom = logits.new_zeros(T * E, M).index_add(0, self._seg, ex)
            alpha = ex / denom[self._seg]
            agg = t.new_zeros(T * E, M, d).index_add(0, self._seg, alpha[..., None] * t)
            raga = torch.sigmoid(agg).reshape(T * E, M * d)
            out = torch.where(self._present[:, None], raga, out)
        return out.reshape(T, E, -1)

    def compute_table(self) -> torch.Tensor:
        p = self.store
        cfg = self.cfg
        E, T = self.graph.num_entities, len(self.graph.snapshots)
        ent = p["emb.entity"]
        if cfg.no_mfar:
            return ent[:, None, :].expand(E, T + 1, -1)
        Wq, Wk, Wv = p["mfar.tsan.Wq"], p["mfar.tsan.Wk"], p["mfar.tsan.Wv"]
        if cfg.no_raga:
            xs = ent[:, None, :].expand(E, T, -1)
            cold_in = ent
        else:
            xs = self.raga_all().transpose(0, 1)  # (E, T, D)
            cold_in = torch.sigmoid(ent @ p["mfar.raga.W_iso"].T)
        if cfg.no_tsan:
            return torch.cat([xs, cold_in[:, None, :]], dim=1)
        cold = torch.einsum("ec,hcd->ehd", cold_in, Wv).reshape(E, -1)
        z = tsan_sequence(xs, Wq, Wk, Wv, cfg.window) if T else xs.new_zeros(E, 0, cold.shape[1])
        return torch.cat([z, cold[:, None, :]], dim=1)

    def table(self, grad: bool = False) -> torch.Tensor:
        """Representation table; the no-grad variant is memoized per parameter version."""
        if grad:
            return self.compute_table()
        with self._lock:
            if self._cache is not None and self._cache[0] == self.store.version:
                return self._cache[1]
            with torch.no_grad():
                table = self.compute_table()
            self._cache = (self.store.version, table)
            return table

    def column(self, t: int) -> int:
        return self.graph.snapshot_index_before(t)

    def represent(self, entity: int, t: int, table: torch.Tensor | None = None) -> torch.Tensor:
        """``Z`` of ``entity`` using snapshots with timestamp <= t (latest snapshot for future t)."""
        table = self.table() if table is None else table
        return table[entity, self.column(t)]
