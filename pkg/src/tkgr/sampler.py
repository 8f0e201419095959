"""Time-constrained expert demonstrations via bidirectional BFS.

Both frontiers prefer edges close in time to their reference timestamp,
with probability proportional to ``exp(-|t' - t_ref|)``; for the forward
frontier this is exactly ``exp(t' - t) / sum exp(t'' - t)`` over prior edges.
Returned paths replay action-for-action in :class:`~tkgr.env.Environment`.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import Action, Environment, QueryTask, State, initial_state
from .errors import ContractViolation, ParseError
from .graph import TemporalKG


@dataclass(frozen=True)
class Demonstration:
    query: QueryTask
    edges: tuple  # ((s, r, o, t), ...) from query subject to gold

    @property
    def hops(self) -> int:
        return len(self.edges)


def _softmax(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=float)
    x = np.exp(x - x.max())
    return x / x.sum()


def prior_sampling_weights(entity: int, t: int, graph: TemporalKG):
    """``[((relation, neighbor, t'), prob), ...]`` over edges strictly before ``t``."""
    edges = graph.neighbors_before(entity, t, inclusive=False)
    if not edges:
        return []
    probs = _softmax([tp - t for _, _, tp in edges])
    return list(zip(edges, probs.tolist()))


def draw_prior_neighbor(entity: int, t: int, graph: TemporalKG, rng: np.random.Generator):
    weighted = prior_sampling_weights(entity, t, graph)
    if not weighted:
        return None
    probs = np.array([p for _, p in weighted])
    return weighted[rng.choice(len(weighted), p=probs)][0]


def _subsample(keys, weights, cap, rng):
    if len(keys) <= cap:
        return list(keys)
    probs = np.asarray(weights, dtype=float)
    probs = probs / probs.sum()
    picked = rng.choice(len(keys), size=cap, replace=False, p=probs)
    return [keys[i] for i in sorted(picked)]


def replay(demo: Demonstration, env: Environment) -> State:
    """Step the environment along ``demo``; raises ContractViolation on an illegal edge."""
    state = initial_state(demo.query)
    for s, r, o, t in demo.edges:
        if s != state.entity:
            raise ContractViolation(f"edge {(s, r, o, t)} does not start at {state.entity}")
        state = env.step(state, Action(r, o, t))
    return state


def sample_demonstrations(query: QueryTask, env: Environment, max_hops: int, count: int,
                          rng: np.random.Generator, frontier_cap: int = 64) -> list[Demonstration]:
    """Up to ``count`` distinct shortest legal paths from the query subject to its gold."""
    if query.gold is None:
        raise ContractViolation("demonstrations need a gold entity")
    graph = env.graph
    tq = query.time
    mode = env.time_constraint
    max_hops = min(max_hops, env.max_steps)

    def base_state(entity, time, step):
        return State(entity, time, query.subject, tq, query.relation, step)

    # forward levels: (entity, time) -> [(prefix edges, weight)]
    forward = [{(query.subject, tq): [((), 1.0)]}]
    # backward levels: entity -> [(suffix edges, weight)]
    backward = [{query.gold: [((), 1.0)]}]

    def grow_forward():
        level = forward[-1]
        nxt = defaultdict(list)
        node_weight = defaultdict(float)
        for (v, tl), prefixes in level.items():
            state = base_state(v, tl, len(next(iter(prefixes))[0]))
            cands = env.valid_actions(state)[1:]
            if not cands:
                continue
            t_ref = tq if mode == "history" else tl
            probs = _softmax([-abs(a.time - t_ref) for a in cands])
            for a, p in zip(cands, probs):
                for prefix, w in prefixes:
                    nxt[(a.entity, a.time)].append((prefix + ((v, a.relation, a.entity, a.time),), w * p))
                    node_weight[(a.entity, a.time)] = max(node_weight[(a.entity, a.time)], w * p)
        keys = sorted(nxt)
        kept = _subsample(keys, [node_weight[k] for k in keys], frontier_cap, rng)
        forward.append({k: nxt[k] for k in kept})

    def admissible_before(t_prev, t_next):
        # may an edge at t_next follow arrival at time t_prev?
        if mode == "strict":
            return t_next < t_prev
        if mode == "inclusive":
            return t_next <= t_prev
        return True

    def grow_backward():
        level = backward[-1]
        nxt = defaultdict(list)
        node_weight = defaultdict(float)
        for u, suffixes in level.items():
            in_edges = [(graph.inverse(r), w, tp) for r, w, tp in graph.out_edges(u)
                        if (tp <= tq if mode == "inclusive" else tp < tq)]
            for suffix, wt in suffixes:
                tau = suffix[0][3] if suffix else None
                ok = [(r, w, tp) for r, w, tp in in_edges
                      if tau is None or admissible_before(tp, tau)]
                if not ok:
                    continue
                t_ref = tq if (tau is None or mode == "history") else tau
                probs = _softmax([-abs(tp - t_ref) for _, _, tp in ok])
                for (r, w, tp), p in zip(ok, probs):
                    nxt[w].append((((w, r, u, tp),) + suffix, wt * p))
                    node_weight[w] = max(node_weight[w], wt * p)
        keys = sorted(nxt)
        kept = _subsample(keys, [node_weight[k] for k in keys], frontier_cap, rng)
        backward.append({k: nxt[k] for k in kept})

    for k in range(1, max_hops + 1):
        a = (k + 1) // 2
        b = k - a
        while len(forward) <= a:
            grow_forward()
        while len(backward) <= b:
            grow_backward()
        found = {}
        for (v, tl), prefixes in forward[a].items():
            for suffix, ws in backward[b].get(v, []):
                for prefix, wp in prefixes:
                    edges = prefix + suffix
                    demo = Demonstration(query, edges)
                    if edges in found:
                        continue
                    try:
                        replay(demo, env)
                    except ContractViolation:
                        continue
                    found[edges] = wp * ws
        if found:
            keys = sorted(found)
            picked = _subsample(keys, [found[e] for e in keys], count, rng)
            order = sorted(picked, key=lambda e: (-found[e], e))
            return [Demonstration(query, e) for e in order]
    return []


# -- demonstration cache -------------------------------------------------
_TUPLE = re.compile(r"\((-?\d+),(-?\d+),(-?\d+),(-?\d+)\)")


def config_hash(settings: dict) -> str:
    return hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:16]


def write_demo_cache(path, demos: list[Demonstration], graph_hash: str, cfg_hash: str):
    """One demonstration per line: ``query<TAB>edges`` with ``(s,r,o,t)`` tuples."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# graph={graph_hash} config={cfg_hash}\n")
        for d in demos:
            q = d.query
            head = f"({q.subject},{q.relation},{q.gold},{q.time})"
            body = ",".join(f"({s},{r},{o},{t})" for s, r, o, t in d.edges)
            fh.write(f"{head}\t{body}\n")


def read_demo_cache(path, graph_hash: str | None = None, cfg_hash: str | None = None):
    """Demonstrations from a cache file, or ``None`` when its header hashes are stale."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        m = re.fullmatch(r"# graph=(\S+) config=(\S+)", header)
        if not m:
            raise ParseError("missing demonstration cache header", 1)
        if (graph_hash and m.group(1) != graph_hash) or (cfg_hash and m.group(2) != cfg_hash):
            return None
        demos = []
        for line_no, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            head, _, body = line.partition("\t")
            q = _TUPLE.fullmatch(head)
            if q is None:
                raise ParseError(f"bad query tuple {head!r}", line_no)
            edges = tuple(tuple(map(int, m.groups())) for m in _TUPLE.finditer(body))
            demos.append(Demonstration(QueryTask(*map(int, q.groups())), edges))
        return demos
