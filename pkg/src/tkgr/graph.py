"""Temporal knowledge graph: parsing, vocabularies, snapshots and neighbor lookup.

Facts are ``(subject, relation, object, timestamp)`` quadruples. Every stored
fact is mirrored by its inverse ``(object, relation + |R|, subject, timestamp)``
so that subject prediction can reuse the object-prediction machinery.
"""

from __future__ import annotations

import bisect
import datetime as dt
import hashlib
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from .errors import ParseError, SplitOrderError, VocabError


class Quadruple(NamedTuple):
    subject: int
    relation: int
    object: int
    timestamp: int


class Vocab:
    """Dense bidirectional ``name <-> id`` map."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self.ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self.ids.get(name)
        if idx is None:
            idx = len(self.names)
            self.ids[name] = idx
            self.names.append(name)
        return idx

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.ids

    def __getitem__(self, name: str) -> int:
        return self.ids[name]

    def name(self, idx: int) -> str:
        return self.names[idx]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.names == other.names

    def dump(self, fh: TextIO):
        for i, name in enumerate(self.names):
            fh.write(f"{i}\t{name}\n")

    @classmethod
    def load(cls, fh: TextIO) -> "Vocab":
        vocab = cls()
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            idx, _, name = line.partition("\t")
            if int(idx) != len(vocab):
                raise ParseError(f"vocabulary ids must be dense, got {idx}", line_no)
            vocab.add(name)
        return vocab


def _parse_time(raw: str, line_no: int) -> int:
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return dt.date.fromisoformat(raw[:10]).toordinal()
    except ValueError:
        raise ParseError(f"timestamp {raw!r} is neither an integer nor an ISO date", line_no) from None


def parse_quadruples(stream: Iterable[str], entity_vocab: Vocab | None = None,
                     relation_vocab: Vocab | None = None, mode: str = "build"):
    """Parse tab-separated facts.

    In ``build`` mode unseen names are appended to the vocabularies; in
    ``frozen`` mode they raise :class:`VocabError`. Timestamps are returned raw
    (integers, or proleptic ordinal days for ISO dates); see
    :class:`TimeNormalizer` for mapping them onto consecutive units.
    """
    if mode not in ("build", "frozen"):
        raise ValueError(f"unknown vocab mode {mode!r}")
    entity_vocab = Vocab() if entity_vocab is None else entity_vocab
    relation_vocab = Vocab() if relation_vocab is None else relation_vocab
    quads = []
    for line_no, line in enumerate(stream, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(fields)}", line_no)
        s, r, o, t = (f.strip() for f in fields[:4])
        if mode == "frozen":
            for name, vocab, kind in ((s, entity_vocab, "entity"), (r, relation_vocab, "relation"),
                                      (o, entity_vocab, "entity")):
                if name not in vocab:
                    raise VocabError(f"line {line_no}: unseen {kind} {name!r} in frozen vocabulary")
        quads.append(Quadruple(entity_vocab.add(s), relation_vocab.add(r), entity_vocab.add(o),
                               _parse_time(t, line_no)))
    return quads, entity_vocab, relation_vocab


@dataclass
class TimeNormalizer:
    """Maps raw timestamps onto ``0, 1, 2, ...`` units of the dataset granularity."""

    origin: int
    unit: int

    @classmethod
    def fit(cls, timestamps: Iterable[int]) -> "TimeNormalizer":
        ts = sorted(set(timestamps))
        if not ts:
            return cls(0, 1)
        diffs = [b - a for a, b in zip(ts, ts[1:])]
        unit = reduce(math.gcd, diffs, 0) or 1
        return cls(ts[0], unit)

    def __call__(self, t: int) -> int:
        return (t - self.origin) // self.unit

    def apply(self, quads):
        return [Quadruple(q.subject, q.relation, q.object, self(q.timestamp)) for q in quads]


@dataclass
class DatasetSplit:
    train: list
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def validate(self):
        """Check max(train) < min(valid) <= max(valid) < min(test)."""
        parts = [("train", self.train), ("valid", self.valid), ("test", self.test)]
        prev_name, prev_max = None, None
        for name, quads in parts:
            if not quads:
                continue
            lo = min(q.timestamp for q in quads)
            hi = max(q.timestamp for q in quads)
            if prev_max is not None and not prev_max < lo:
                raise SplitOrderError(
                    f"{name} starts at timestamp {lo} but {prev_name} ends at {prev_max}")
            prev_name, prev_max = name, hi

    def all(self):
        return list(self.train) + list(self.valid) + list(self.test)


def inverse_relation(rel: int, num_relations: int) -> int:
    """Inverse id under the ``r -> r + |R|`` scheme (an involution on ``[0, 2|R|)``)."""
    return rel + num_relations if rel < num_relations else rel - num_relations


class Snapshot:
    """All edges sharing one timestamp, with per-entity adjacency."""

    def __init__(self, timestamp: int, edges: np.ndarray):
        self.timestamp = timestamp
        self.edges = edges  # (n, 3): subject, relation, object
        adj = defaultdict(list)
        for s, r, o in edges.tolist():
            adj[s].append((r, o))
        self.adjacency = dict(adj)

    def out_edges(self, entity: int):
        return self.adjacency.get(entity, [])

    @property
    def entities(self):
        return sorted(self.adjacency)


class TemporalKG:
    """Immutable temporal KG built from (deduplicated) facts plus materialized inverses."""

    def __init__(self, quads: Iterable[Quadruple], num_entities: int, num_relations: int,
                 entity_vocab: Vocab | None = None, relation_vocab: Vocab | None = None,
                 known_quads: Iterable[Quadruple] | None = None):
        self.num_entities = num_entities
        self.num_relations = num_relations
        self.entity_vocab = entity_vocab
        self.relation_vocab = relation_vocab

        raw = [Quadruple(*q) for q in quads]
        for q in raw:
            if not (0 <= q.subject < num_entities and 0 <= q.object < num_entities):
                raise VocabError(f"entity id out of range in {tuple(q)}")
            if not 0 <= q.relation < num_relations:
                raise VocabError(f"relation id out of range in {tuple(q)}")
            if q.timestamp < 0:
                raise ValueError(f"negative timestamp in {tuple(q)}")
        unique = sorted(set(raw), key=lambda q: (q.timestamp, q.subject, q.relation, q.object))
        self.duplicates_removed = len(raw) - len(unique)
        self.facts = unique

        edges = []
        for s, r, o, t in unique:
            edges.append((s, r, o, t))
            edges.append((o, r + num_relations, s, t))
        # a fact and the inverse of another fact may coincide (symmetric facts)
        edges = sorted(set(edges), key=lambda e: (e[3], e[0], e[1], e[2]))
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 4)
        self.edge_set = frozenset(map(tuple, self.edges.tolist()))

        self.timestamps: list[int] = sorted({int(t) for t in self.edges[:, 3]})
        self.snapshots: list[Snapshot] = []
        for t in self.timestamps:
            mask = self.edges[:, 3] == t
            self.snapshots.append(Snapshot(t, self.edges[mask, :3]))
        self._snap_index = {t: i for i, t in enumerate(self.timestamps)}

        # per-entity out-edges sorted by (-t, r, o) for time-directional lookup
        per_entity = defaultdict(list)
        for s, r, o, t in self.edges.tolist():
            per_entity[s].append((-t, r, o))
        self._prior: dict[int, tuple[list[int], list[tuple[int, int, int]]]] = {}
        for e, lst in per_entity.items():
            lst.sort()
            self._prior[e] = ([k[0] for k in lst], [(r, o, -nt) for nt, r, o in lst])

        known = self.facts if known_quads is None else [Quadruple(*q) for q in known_quads]
        full = set()
        for s, r, o, t in known:
            full.add((s, r, o, t))
            full.add((o, inverse_relation(r, num_relations), s, t))
        for e in self.edges.tolist():
            full.add(tuple(e))
        self.full_quadruple_set = frozenset(full)
        self._answers = None

    # -- relation ids -------------------------------------------------
    @property
    def stop_relation(self) -> int:
        return 2 * self.num_relations

    @property
    def start_relation(self) -> int:
        return 2 * self.num_relations + 1

    @property
    def num_relation_ids(self) -> int:
        """Size of the relation embedding table: originals, inverses, STOP, START."""
        return 2 * self.num_relations + 2

    def inverse(self, rel: int) -> int:
        return inverse_relation(rel, self.num_relations)

    def relation_name(self, rel: int) -> str:
        if rel == self.stop_relation:
            return "STOP"
        if rel == self.start_relation:
            return "START"
        base = rel if rel < self.num_relations else rel - self.num_relations
        name = self.relation_vocab.name(base) if self.relation_vocab else str(base)
        return name if rel < self.num_relations else name + "^-1"

    def entity_name(self, ent: int) -> str:
        return self.entity_vocab.name(ent) if self.entity_vocab else str(ent)

    # -- lookups ------------------------------------------------------
    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def last_timestamp(self) -> int | None:
        return self.timestamps[-1] if self.timestamps else None

    def snapshot_at(self, t: int) -> Snapshot | None:
        idx = self._snap_index.get(t)
        return None if idx is None else self.snapshots[idx]

    def snapshot_index_before(self, t: int) -> int:
        """Index of the latest snapshot with timestamp <= t, or -1."""
        return bisect.bisect_right(self.timestamps, t) - 1

    def neighbors_before(self, entity: int, t: int, inclusive: bool = False):
        """Out-edges ``(relation, neighbor, t')`` with ``t' < t`` (``<=`` when inclusive).

        Sorted by ``t'`` descending, then relation id, then neighbor id.
        """
        entry = self._prior.get(entity)
        if entry is None:
            return []
        neg_times, items = entry
        start = bisect.bisect_left(neg_times, -t) if inclusive else bisect.bisect_right(neg_times, -t)
        return items[start:]

    def out_edges(self, entity: int):
        entry = self._prior.get(entity)
        return [] if entry is None else list(entry[1])

    def answers(self, subject: int, relation: int, t: int) -> set[int]:
        """All ``o`` with ``(subject, relation, o, t)`` in the full quadruple set."""
        if self._answers is None:
            idx = defaultdict(set)
            for s, r, o, tt in self.full_quadruple_set:
                idx[(s, r, tt)].add(o)
            self._answers = dict(idx)
        return self._answers.get((subject, relation, t), set())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.num_entities},{self.num_relations};".encode())
        h.update(self.edges.tobytes())
        return h.hexdigest()[:16]

    # -- serialization ------------------------------------------------
    def to_tsv(self, fh: TextIO):
        """Write original (non-inverse) facts as name-resolved TSV."""
        for s, r, o, t in self.facts:
            fh.write(f"{self.entity_name(s)}\t{self.relation_name(r)}\t{self.entity_name(o)}\t{t}\n")

    def edge_multiset(self):
        return sorted(map(tuple, self.edges.tolist()))


def build_graph(quads, entity_vocab: Vocab | int, relation_vocab: Vocab | int,
                known_quads=None) -> TemporalKG:
    """Build a :class:`TemporalKG` from facts; vocabularies may be given as sizes."""
    ev = entity_vocab if isinstance(entity_vocab, Vocab) else None
    rv = relation_vocab if isinstance(relation_vocab, Vocab) else None
    n_ent = len(entity_vocab) if ev is not None else int(entity_vocab)
    n_rel = len(relation_vocab) if rv is not None else int(relation_vocab)
    return TemporalKG(quads, n_ent, n_rel, ev, rv, known_quads=known_quads)


def shortest_relation_path(snapshot: Snapshot, source: int, target: int, max_k: int,
                           rng: np.random.Generator):
    """Uniformly drawn shortest relation path from ``source`` to ``target`` in one snapshot.

    Returns ``None`` when the target is further than ``max_k`` hops. Parallel
    edges with different relations count as distinct paths.
    """
    if source == target:
        raise ValueError("source and target must differ")
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    dist = {source: 0}
    count = {source: 1}
    preds = defaultdict(list)  # node -> [(prev_node, relation)]
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if dist[u] >= max_k or (target in dist and dist[u] >= dist[target]):
            continue
        for r, v in snapshot.out_edges(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                count[v] = 0
                queue.append(v)
            if dist[v] == dist[u] + 1:
                count[v] += count[u]
                preds[v].append((u, r))
    if target not in dist:
        return None
    path = []
    node = target
    while node != source:
        options = preds[node]
        weights = np.array([count[u] for u, _ in options], dtype=float)
        u, r = options[rng.choice(len(options), p=weights / weights.sum())]
        path.append(r)
        node = u
    return path[::-1]


def hop_neighbors(snapshot: Snapshot, source: int, max_k: int) -> dict[int, int]:
    """BFS hop distance from ``source`` to every entity within ``max_k`` hops."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if dist[u] == max_k:
            continue
        for _, v in snapshot.out_edges(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    del dist[source]
    return dist
