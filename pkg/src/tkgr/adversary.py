"""Rule-aware discrimination of reasoning paths and the noise-gated adaptive reward.

Two discriminators share the path representation used by the policy:

* a semantic one (convolution over the zero-padded path matrix, ReLU,
  linear, sigmoid);
* a temporal-logic one scoring a path read as a rule instance with product
  t-norm: ``D(r) = prod(I_body) * I_head - prod(I_body) + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .env import QueryTask
from .params import ParameterStore, glorot


@dataclass(frozen=True)
class TemporalRuleInstance:
    body: tuple  # ((s, r, o, t), ...) with ascending timestamps
    head: tuple  # (subject, query relation, answer, query time)
    degenerate: bool = False


def sem_input_rows(cfg: TrainConfig) -> int:
    return max(cfg.max_steps, cfg.kernel_rows)


def init_adversary_params(store: ParameterStore, cfg: TrainConfig, rng: np.random.Generator):
    rows, cols = sem_input_rows(cfg), 2 * cfg.dim_relation
    out_h, out_w = rows - cfg.kernel_rows + 1, cols - cfg.kernel_cols + 1
    if out_w < 1:
        raise ValueError("kernel wider than the path matrix")
    store.add("adv.sem.kernel", glorot(rng, (cfg.conv_filters, cfg.kernel_rows, cfg.kernel_cols)))
    store.add("adv.sem.bias", np.zeros(cfg.conv_filters))
    store.add("adv.sem.W_s", glorot(rng, (1, cfg.conv_filters * out_h * out_w)))
    store.add("adv.logic.W_r", glorot(rng, (1, 3 * cfg.dim_relation)))


def pad_rows(rows: torch.Tensor, n_rows: int) -> torch.Tensor:
    """Zero-pad a (steps, width) path matrix to ``n_rows`` rows."""
    if rows.shape[0] == 0:
        raise ValueError("path must contain at least one step")
    if rows.shape[0] > n_rows:
        raise ValueError(f"path has {rows.shape[0]} steps, more than {n_rows}")
    return F.pad(rows, (0, 0, 0, n_rows - rows.shape[0]))


def semantic_score(P: torch.Tensor, kernel, bias, W_s) -> torch.Tensor:
    """``sigmoid(W_s ReLU(conv(P, w) + b_s))`` for P of shape (rows, cols) or (B, rows, cols)."""
    single = P.dim() == 2
    if single:
        P = P[None]
    feat = F.conv2d(P[:, None], kernel[:, None]) + bias[None, :, None, None]
    out = torch.sigmoid(F.relu(feat).flatten(1) @ W_s.T).squeeze(-1)
    return out[0] if single else out


def quad_truth(z_subject, relation, z_object, W_r) -> torch.Tensor:
    """``sigmoid(W_r tanh([Z_s ⊕ R ⊕ Z_o]))``."""
    x = torch.cat([z_subject, relation, z_object], dim=-1)
    return torch.sigmoid(torch.tanh(x) @ W_r.T).squeeze(-1)


def rule_score(body_truths, head_truth):
    """Product t-norm implication; ``body_truths`` along the last axis (pad with 1)."""
    prod = body_truths.prod(-1) if isinstance(body_truths, torch.Tensor) else np.prod(body_truths)
    return prod * head_truth - prod + 1


def noise_scores(rng: np.random.Generator) -> tuple[float, float]:
    """Two independent Uniform(0, 1) draws (zero is redrawn)."""
    out = []
    while len(out) < 2:
        u = rng.random()
        if u > 0.0:
            out.append(float(u))
    return out[0], out[1]


def gated_rewards(d_sem, d_rule, noise_sem, noise_rule):
    return max(d_sem - noise_sem, 0.0), max(d_rule - noise_rule, 0.0)


def adaptive_reward(terminal, r_sem, r_rule, alpha):
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    return terminal + alpha * r_sem + (1 - alpha) * r_rule


def semantic_disc_loss(P_gen, P_demo, lam, rng: np.random.Generator, kernel, bias, W_s):
    """Generated minus demonstration score plus a gradient-norm penalty.

    Each generated path matrix is paired with a demonstration (cycled when the
    batches differ in size) and the penalty is taken at a uniformly drawn
    point on the segment between them.
    """
    n = P_gen.shape[0]
    demo_idx = torch.arange(n) % P_demo.shape[0]
    eps = torch.as_tensor(rng.random(n))[:, None, None]
    p_hat = (eps * P_gen + (1 - eps) * P_demo[demo_idx]).detach().requires_grad_(True)
    d_hat = semantic_score(p_hat, kernel, bias, W_s)
    (grad,) = torch.autograd.grad(d_hat.sum(), p_hat, create_graph=True)
    penalty = ((grad.flatten(1).norm(dim=1) - 1) ** 2).mean()
    d_gen = semantic_score(P_gen, kernel, bias, W_s).mean()
    d_demo = semantic_score(P_demo, kernel, bias, W_s).mean()
    return d_gen - d_demo + lam * penalty


def logic_disc_loss(d_demo: torch.Tensor, d_gen: torch.Tensor) -> torch.Tensor:
    return -(torch.log(d_demo).mean() + torch.log1p(-d_gen).mean())


def path_to_rule(edges, query: QueryTask, final_entity: int, stop_relation: int,
                 num_relations: int) -> TemporalRuleInstance:
    """Read a path as a rule instance whose body timestamps ascend.

    Self-loops are dropped; a path traversed backwards in time is reversed
    using inverse relations.
    """
    real = [tuple(e) for e in edges if e[1] != stop_relation]
    head = (query.subject, query.relation, final_entity, query.time)
    if not real:
        return TemporalRuleInstance(((query.subject, stop_relation, query.subject, query.time),),
                                    head, degenerate=True)
    if real[0][3] > real[-1][3]:
        inv = lambda r: r + num_relations if r < num_relations else r - num_relations
        real = [(o, inv(r), s, t) for s, r, o, t in reversed(real)]
    return TemporalRuleInstance(tuple(real), head)


class Adversary:
    """Batched discriminator scoring over path steps from a :class:`~tkgr.policy.Policy`."""

    def __init__(self, store: ParameterStore, cfg: TrainConfig, policy):
        self.store = store
        self.cfg = cfg
        self.policy = policy
        self.graph = policy.graph

    @property
    def semantic_params(self):
        return [self.store[n] for n in ("adv.sem.kernel", "adv.sem.bias", "adv.sem.W_s")]

    @property
    def logic_params(self):
        return [self.store["adv.logic.W_r"]]

    def matrices_for(self, items, table) -> torch.Tensor:
        """``items``: list of (edges, query). Returns zero-padded (B, rows, 2F') path matrices.

        Row ``l`` is ``[R ⊕ Z]`` of step ``l`` with the query relation vector
        added to its relation half, so the same relation sequence reads
        differently under a query and under its inverse. A path without real
        edges is a single STOP row at the query subject.
        """
        n_rows = sem_input_rows(self.cfg)
        stop = self.graph.stop_relation
        rels, ents, times, tqs, rqs, slots = [], [], [], [], [], []
        for b, (edges, query) in enumerate(items):
            real = [e for e in edges if e[1] != stop]
            if len(real) > n_rows:
                raise ValueError(f"path has {len(real)} steps, more than {n_rows}")
            if not real:
                real = [(query.subject, stop, query.subject, query.time)]
            for j, (_, r, o, t) in enumerate(real):
                rels.append(r); ents.append(o); times.append(t)
                tqs.append(query.time); rqs.append(query.relation)
                slots.append((b, j))
        rows = self.policy.path_step_embedding(table, rels, ents, times, tqs)
        Fr = self.cfg.dim_relation
        rows = torch.cat([rows[:, :Fr] + self.policy.rel_vec(rqs), rows[:, Fr:]], dim=1)
        out = rows.new_zeros(len(items), n_rows, rows.shape[1])
        bi = torch.as_tensor([b for b, _ in slots])
        ji = torch.as_tensor([j for _, j in slots])
        return out.index_put((bi, ji), rows)

    def semantic(self, P: torch.Tensor) -> torch.Tensor:
        return semantic_score(P, *self.semantic_params)

    def rule_features(self, rules: list[TemporalRuleInstance], table):
        """Detached ``(Z_s, R, Z_o)`` rows for every body and head quadruple, plus layout."""
        quads, layout = [], []
        for rule in rules:
            start = len(quads)
            quads.extend(rule.body)
            quads.append(rule.head)
            layout.append((start, len(rule.body)))
        arr = np.asarray(quads, dtype=np.int64)
        tq = np.repeat([r.head[3] for r in rules], [len(r.body) + 1 for r in rules])
        with torch.no_grad():
            z_s = self.policy.z(table, arr[:, 0], arr[:, 3], tq)
            z_o = self.policy.z(table, arr[:, 2], arr[:, 3], tq)
            rel = self.policy.rel_vec(arr[:, 1], tq - arr[:, 3])
        return (z_s, rel, z_o), layout

    def rule_scores(self, rules: list[TemporalRuleInstance], table) -> torch.Tensor:
        (z_s, rel, z_o), layout = self.rule_features(rules, table)
        truths = quad_truth(z_s, rel, z_o, self.store["adv.logic.W_r"])
        Lmax = max(n for _, n in layout)
        rows, cols, idx = [], [], []
        for i, (start, n) in enumerate(layout):
            for j in range(n):
                rows.append(i); cols.append(j); idx.append(start + j)
        body = torch.ones(len(rules), Lmax).index_put(
            (torch.as_tensor(rows), torch.as_tensor(cols)), truths[idx])
        heads = torch.as_tensor([start + n for start, n in layout])
        return rule_score(body, truths[heads])
