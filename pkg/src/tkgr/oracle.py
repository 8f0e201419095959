"""Slow, loop-based reference implementations used by the test-suite.

Nothing here imports from the rest of the package: every formula is written
out again with plain Python floats and explicit loops so that agreement with
the vectorised code is evidence rather than tautology. Inputs may be numpy
arrays or nested lists; everything is converted to Python floats (64-bit).
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

MAX_ENUMERATED_PATHS = 10_000


@dataclass
class OracleResult:
    values: object
    instance: str = ""
    tolerance: float = 1e-8
    extra: dict = field(default_factory=dict)


class PathOverflow(RuntimeError):
    """The instance has more constrained paths than the enumerator accepts."""


# -- scalar helpers ---------------------------------------------------------
def _f(x):
    """Nested lists of Python floats from arrays, tensors or lists."""
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    if hasattr(x, "tolist"):
        x = x.tolist()
    if isinstance(x, (list, tuple)):
        return [_f(v) for v in x]
    return float(x)


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _dot(a, b):
    total = 0.0
    for i in range(len(a)):
        total += a[i] * b[i]
    return total


def _matvec(M, v):
    return [_dot(row, v) for row in M]


def _softmax(xs):
    finite = [x for x in xs if x != -math.inf]
    m = max(finite)
    ex = [0.0 if x == -math.inf else math.exp(x - m) for x in xs]
    s = sum(ex)
    return [e / s for e in ex]


# -- representation stage ---------------------------------------------------
def oracle_raga(W1, W2, e_i, neighbors, bandwidth, slope=0.2, W_iso=None):
    """Attenuated relation-aware attention update of one entity in one snapshot.

    ``neighbors``: list of ``(relation vectors along the path, neighbor vector, hops)``.
    With no neighbors the isolated fallback ``sigmoid(W_iso e_i)`` is returned.
    """
    W1, W2, e_i = _f(W1), _f(W2), _f(e_i)
    if not neighbors:
        if W_iso is None:
            raise ValueError("isolated entity needs W_iso")
        return [_sigmoid(v) for v in _matvec(_f(W_iso), e_i)]
    heads = len(W1)
    out = []
    for m in range(heads):
        triples, scores = [], []
        for rel_path, e_j, k in neighbors:
            rel_path = _f(rel_path)
            rel = [0.0] * len(rel_path[0])
            for vec in rel_path:
                for c in range(len(rel)):
                    rel[c] += vec[c]
            x = e_i + rel + _f(e_j)
            t = _matvec(W1[m], x)
            raw = _dot(W2[m], t)
            beta = raw if raw > 0 else slope * raw
            w = math.exp(-(k * k) / (2.0 * bandwidth * bandwidth))
            triples.append(t)
            scores.append(w * beta)
        alpha = _softmax(scores)
        d = len(triples[0])
        for c in range(d):
            acc = 0.0
            for j in range(len(triples)):
                acc += alpha[j] * triples[j][c]
            out.append(_sigmoid(acc))
    return out


def oracle_tsan(history, Wq, Wk, Wv, window=None):
    """Self-attention output at the last snapshot of ``history`` (T rows)."""
    history = _f(history)
    Wq, Wk, Wv = _f(Wq), _f(Wk), _f(Wv)
    if not history:
        raise ValueError("empty history")
    T = len(history)
    first = 0 if window is None else max(0, T - window)
    rows = history[first:]
    last = rows[-1]
    out = []
    for h in range(len(Wq)):
        def project(W, x):
            cols = len(W[0])
            return [sum(x[c] * W[c][j] for c in range(len(x))) for j in range(cols)]
        q = project(Wq[h], last)
        scores = [_dot(q, project(Wk[h], r)) for r in rows]
        weights = _softmax(scores)
        vs = [project(Wv[h], r) for r in rows]
        for j in range(len(vs[0])):
            out.append(sum(weights[i] * vs[i][j] for i in range(len(rows))))
    return out


# -- policy -------------------------------------------------------------------
def oracle_gated_cell(h, c, x, W_ih, W_hh, b):
    """LSTM step with gates stacked as input, forget, candidate, output."""
    h, c, x = _f(h), _f(c), _f(x)
    W_ih, W_hh, b = _f(W_ih), _f(W_hh), _f(b)
    H = len(h)
    pre = [_dot(W_ih[k], x) + _dot(W_hh[k], h) + b[k] for k in range(4 * H)]
    h_new, c_new = [], []
    for j in range(H):
        i_g = _sigmoid(pre[j])
        f_g = _sigmoid(pre[H + j])
        g_g = math.tanh(pre[2 * H + j])
        o_g = _sigmoid(pre[3 * H + j])
        cj = f_g * c[j] + i_g * g_g
        c_new.append(cj)
        h_new.append(o_g * math.tanh(cj))
    return h_new, c_new


def oracle_policy_eq10(z_cur, h, r_q, candidates, W1, W2):
    """Softmax over ``a_i . W2 ReLU(W1 [z ⊕ h ⊕ r_q])`` for candidate rows ``a_i``."""
    x = _f(z_cur) + _f(h) + _f(r_q)
    hidden = [max(0.0, v) for v in _matvec(_f(W1), x)]
    query = _matvec(_f(W2), hidden)
    return _softmax([_dot(a, query) for a in _f(candidates)])


# -- discriminators -----------------------------------------------------------
def oracle_conv(P, kernel):
    """Valid stride-1 cross-correlation of each filter over P: (filters, out_h, out_w)."""
    P, kernel = _f(P), _f(kernel)
    rows, cols = len(P), len(P[0])
    maps = []
    for K in kernel:
        kr, kc = len(K), len(K[0])
        fmap = []
        for i in range(rows - kr + 1):
            line = []
            for j in range(cols - kc + 1):
                acc = 0.0
                for a in range(kr):
                    for bcol in range(kc):
                        acc += K[a][bcol] * P[i + a][j + bcol]
                line.append(acc)
            fmap.append(line)
        maps.append(fmap)
    return maps


def oracle_semantic(P, kernel, bias, W_s):
    maps = oracle_conv(P, kernel)
    bias = _f(bias)
    flat = []
    for f, fmap in enumerate(maps):
        for line in fmap:
            for v in line:
                flat.append(max(0.0, v + bias[f]))
    return _sigmoid(_dot(_f(W_s)[0], flat))


def oracle_quad_truth(z_s, rel, z_o, W_r):
    x = _f(z_s) + _f(rel) + _f(z_o)
    return _sigmoid(_dot(_f(W_r)[0], [math.tanh(v) for v in x]))


def oracle_rule_score(body, head):
    prod = 1.0
    for v in _f(body):
        prod *= v
    return prod * float(head) - prod + 1.0


# -- environment re-derivation --------------------------------------------------
class OracleActions:
    """Action sets found by scanning every edge, for checking the environment.

    ``edges`` are (s, r, o, t) rows including inverse edges. Self-loops come
    first and carry ``stop_relation``; real edges follow ordered by time
    descending, then relation, then object, cut to ``action_cap - 1``.
    """

    def __init__(self, edges, stop_relation, action_cap, time_constraint):
        self.edges = [tuple(int(v) for v in e) for e in _f(edges)] if edges is not None else []
        self.stop = stop_relation
        self.cap = action_cap
        self.mode = time_constraint

    def allowed(self, t_edge, t_state, t_query):
        if self.mode == "strict":
            return t_edge < t_state
        if self.mode == "inclusive":
            return t_edge <= min(t_state, t_query)
        if self.mode == "history":
            return t_edge < t_query
        raise ValueError(self.mode)

    def actions(self, entity, t_state, t_query):
        found = set()
        for s, r, o, t in self.edges:
            if s == entity and self.allowed(t, t_state, t_query):
                found.add((r, o, t))
        ordered = sorted(found, key=lambda a: (-a[2], a[0], a[1]))
        return [(self.stop, entity, t_state)] + ordered[: self.cap - 1]


def oracle_shortest_hops(edges, subject, gold, t_query, max_hops, time_constraint):
    """Fewest real edges from subject to gold under the time rule (no action cap), or None."""
    acts = OracleActions(edges, -1, 10 ** 9, time_constraint)
    start = (subject, t_query)
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        (e, t), d = frontier.popleft()
        if d == max_hops:
            continue
        for r, o, tp in acts.actions(e, t, t_query)[1:]:
            if o == gold:
                return d + 1
            if (o, tp) not in seen:
                seen.add((o, tp))
                frontier.append(((o, tp), d + 1))
    return None


def oracle_shortest_hops_capped(edges, subject, gold, t_query, max_hops, time_constraint,
                                action_cap):
    """Same as :func:`oracle_shortest_hops` but honouring the per-state action cap."""
    acts = OracleActions(edges, -1, action_cap, time_constraint)
    layer = {(subject, t_query)}
    for d in range(1, max_hops + 1):
        nxt = set()
        for e, t in layer:
            for r, o, tp in acts.actions(e, t, t_query)[1:]:
                if o == gold:
                    return d
                nxt.add((o, tp))
        layer = nxt
    return None


# -- policy enumeration ------------------------------------------------------------
class OraclePolicy:
    """Per-step action probabilities recomputed from raw parameter arrays.

    ``table`` is the entity-by-column representation array whose last column
    is the cold-start value; ``timestamps`` are the snapshot times in order.
    """

    def __init__(self, table, timestamps, params: dict, start_relation, window,
                 time_encoding=True):
        self.table = _f(table)
        self.timestamps = list(timestamps)
        self.p = {k: _f(v) for k, v in params.items()}
        self.start = start_relation
        self.window = window
        self.time_encoding = time_encoding and "policy.time" in self.p

    def column(self, t, t_query):
        bound = min(t, t_query - 1)
        col = -1
        for i, ts in enumerate(self.timestamps):
            if ts <= bound:
                col = i
        return col if col >= 0 else len(self.table[0]) - 1

    def z(self, e, t, t_query):
        return self.table[e][self.column(t, t_query)]

    def rel(self, r, delta=None):
        vec = list(self.p["emb.relation"][r])
        if self.time_encoding and delta is not None:
            d = min(max(delta, 0), self.window)
            vec = [a + b for a, b in zip(vec, self.p["policy.time"][d])]
        return vec

    def step_input(self, r, e, t, t_query):
        return self.rel(r, t_query - t) + self.z(e, t, t_query)

    def initial(self):
        H0 = self.p["policy.H0"]
        return list(H0), [0.0] * len(H0)

    def advance(self, h, c, r, e, t, t_query):
        return oracle_gated_cell(h, c, self.step_input(r, e, t, t_query), self.p["policy.lstm.W_ih"],
                                 self.p["policy.lstm.W_hh"], self.p["policy.lstm.b"])

    def probs(self, h, entity, t, t_query, r_query, actions):
        cands = [self.rel(r, t_query - tp) + self.z(o, tp, t_query) for r, o, tp in actions]
        return oracle_policy_eq10(self.z(entity, t, t_query), h, self.rel(r_query), cands,
                                  self.p["policy.W1"], self.p["policy.W2"])


def oracle_enumerate_paths(actions: OracleActions, policy: OraclePolicy, subject, r_query,
                           t_query, max_steps, limit=MAX_ENUMERATED_PATHS):
    """Exact marginal probability of ending at each entity after ``max_steps`` decisions.

    Choosing the self-loop ends the episode (later steps are forced with
    probability one). Returns ``(marginals, paths)`` where ``paths`` lists
    ``(actions taken, probability)`` for every complete path.
    """
    marginals = defaultdict(float)
    paths = []

    def visit(entity, t, h, c, arrival, step, prob, taken):
        h, c = policy.advance(h, c, arrival[0], arrival[1], arrival[2], t_query)
        acts = actions.actions(entity, t, t_query)
        probs = policy.probs(h, entity, t, t_query, r_query, acts)
        for k, (act, p) in enumerate(zip(acts, probs)):
            path = taken + [act]
            if k == 0 or step + 1 == max_steps:
                paths.append((path, prob * p))
                if len(paths) > limit:
                    raise PathOverflow(f"more than {limit} constrained paths")
                marginals[act[1]] += prob * p
            else:
                visit(act[1], act[2], h, c, act, step + 1, prob * p, path)

    h0, c0 = policy.initial()
    visit(subject, t_query, h0, c0, (policy.start, subject, t_query), 0, 1.0, [])
    return dict(marginals), paths


# -- evaluation ------------------------------------------------------------------------
def oracle_filtered_rank(scores: dict, gold, true_answers):
    """Linear scan: 1 + number of non-filtered entities ranked ahead of gold.

    Entities are ordered by descending score, ties and unscored entities by id;
    ``true_answers`` other than gold are skipped.
    """
    gold_score = scores.get(gold, None)
    rank = 1
    for e in range(max(list(scores) + [gold]) + 1):
        if e == gold or e in true_answers:
            continue
        s = scores.get(e, None)
        if gold_score is None:
            ahead = s is not None or e < gold
        elif s is None:
            ahead = False
        else:
            ahead = s > gold_score or (s == gold_score and e < gold)
        if ahead:
            rank += 1
    return rank


def oracle_metrics(ranks):
    n = len(ranks)
    out = {"mrr": sum(1.0 / r for r in ranks) / n}
    for k in (1, 3, 10):
        out[f"hits@{k}"] = sum(1 for r in ranks if r <= k) / n
    return out


def oracle_true_answers(facts, num_relations, subject, relation, t):
    """Co-temporal answers scanning original facts and their inverses."""
    found = set()
    for s, r, o, tt in facts:
        if tt != t:
            continue
        if r == relation and s == subject:
            found.add(o)
        if r + num_relations == relation and o == subject:
            found.add(s)
    return found


# -- finite differences ----------------------------------------------------------------
def central_difference(fn, array, step=1e-4):
    """Numerical gradient of scalar ``fn()`` w.r.t. every entry of ``array`` (mutated in place)."""
    flat = array.reshape(-1)
    grad = [0.0] * flat.shape[0]
    for i in range(flat.shape[0]):
        old = float(flat[i])
        flat[i] = old + step
        up = float(fn())
        flat[i] = old - step
        down = float(fn())
        flat[i] = old
        grad[i] = (up - down) / (2 * step)
    return grad
