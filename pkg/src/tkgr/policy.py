"""History-conditioned policy: LSTM path encoder, action scoring, rollouts and beam search.

Action embeddings are ``[relation ⊕ Z_{t'}^{e'}]``; when ``time_encoding`` is
on, a learned vector indexed by ``t_q - t'`` is added to the relation part so
the agent can tell recent edges from old ones.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .env import Action, Environment, QueryTask, State, Trajectory, initial_state
from .mfar import MFAR
from .params import ParameterStore, glorot


def init_policy_params(store: ParameterStore, cfg: TrainConfig, rng: np.random.Generator):
    Fr, H = cfg.dim_relation, cfg.hidden
    store.add("policy.lstm.W_ih", glorot(rng, (4 * H, 2 * Fr)))
    store.add("policy.lstm.W_hh", glorot(rng, (4 * H, H)))
    store.add("policy.lstm.b", np.zeros(4 * H))
    store.add("policy.H0", np.zeros(H))
    store.add("policy.W1", glorot(rng, (H, 2 * Fr + H)))
    store.add("policy.W2", glorot(rng, (2 * Fr, H)))
    if cfg.time_encoding:
        store.add("policy.time", glorot(rng, (cfg.window + 1, Fr)))


def encode_history(h, c, x, W_ih, W_hh, b):
    """One LSTM cell step (gate order: input, forget, candidate, output)."""
    gates = x @ W_ih.T + h @ W_hh.T + b
    i, f, g, o = gates.chunk(4, dim=-1)
    c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h_new = torch.sigmoid(o) * torch.tanh(c_new)
    return h_new, c_new


def action_scores(z_cur, h, r_q, cand, W1, W2):
    """Unnormalised scores ``A (W'' ReLU(W' [Z ⊕ H ⊕ R_q]))``; ``cand`` is (..., N, 2F')."""
    q = F.relu(torch.cat([z_cur, h, r_q], dim=-1) @ W1.T) @ W2.T
    return (cand @ q.unsqueeze(-1)).squeeze(-1)


def action_distribution(z_cur, h, r_q, cand, W1, W2):
    return torch.softmax(action_scores(z_cur, h, r_q, cand, W1, W2), dim=-1)


@dataclass
class BeamPath:
    actions: list
    log_prob: float

    @property
    def prob(self) -> float:
        return float(np.exp(self.log_prob))


class Policy:
    def __init__(self, store: ParameterStore, cfg: TrainConfig, env: Environment, mfar: MFAR):
        self.store = store
        self.cfg = cfg
        self.env = env
        self.mfar = mfar
        self.graph = env.graph
        self._times = np.asarray(self.graph.timestamps, dtype=np.int64)

    # -- embeddings -----------------------------------------------------
    def _columns(self, times, query_times) -> np.ndarray:
        t = np.minimum(np.asarray(times), np.asarray(query_times) - 1)
        return np.searchsorted(self._times, t, side="right") - 1

    def z(self, table, entities, times, query_times):
        cols = self._columns(times, query_times)
        return table[torch.as_tensor(np.asarray(entities)), torch.as_tensor(cols)]

    def rel_vec(self, relations, deltas=None):
        rel = self.store["emb.relation"][torch.as_tensor(np.asarray(relations))]
        if self.cfg.time_encoding and deltas is not None:
            d = np.clip(np.asarray(deltas), 0, self.cfg.window)
            rel = rel + self.store["policy.time"][torch.as_tensor(d)]
        return rel

    def path_step_embedding(self, table, relations, entities, times, query_times):
        """``P = [R ⊕ Z]`` for the step that arrived at (entity, time) via relation."""
        deltas = np.asarray(query_times) - np.asarray(times)
        return torch.cat([self.rel_vec(relations, deltas),
                          self.z(table, entities, times, query_times)], dim=-1)

    def initial_hidden(self, batch: int):
        H0 = self.store["policy.H0"]
        return H0.expand(batch, -1), H0.new_zeros(batch, H0.shape[0])

    # -- one decision step for a batch of rows --------------------------
    def _step(self, table, rows, h, c):
        """``rows``: list of (State, arrival relation). Returns candidates, log-probs, h, c."""
        p = self.store
        ents = [s.entity for s, _ in rows]
        times = [s.time for s, _ in rows]
        tq = [s.query_time for s, _ in rows]
        x = self.path_step_embedding(table, [r for _, r in rows], ents, times, tq)
        h, c = encode_history(h, c, x, p["policy.lstm.W_ih"], p["policy.lstm.W_hh"],
                              p["policy.lstm.b"])
        cands = [self.env.valid_actions(s) for s, _ in rows]
        n_max = max(len(cs) for cs in cands)
        B = len(rows)
        c_rel = np.full((B, n_max), self.graph.stop_relation, dtype=np.int64)
        c_ent = np.zeros((B, n_max), dtype=np.int64)
        c_time = np.zeros((B, n_max), dtype=np.int64)
        mask = np.zeros((B, n_max), dtype=bool)
        for b, cs in enumerate(cands):
            n = len(cs)
            arr = np.asarray(cs, dtype=np.int64)
            c_rel[b, :n], c_ent[b, :n], c_time[b, :n] = arr[:, 0], arr[:, 1], arr[:, 2]
            mask[b, :n] = True
        tq_col = np.asarray(tq)[:, None]
        c_time_eff = np.where(mask, c_time, tq_col - 1)
        a_emb = torch.cat([self.rel_vec(c_rel, tq_col - c_time_eff),
                           self.z(table, c_ent, c_time_eff, np.broadcast_to(tq_col, c_ent.shape))],
                          dim=-1)
        z_cur = self.z(table, ents, times, tq)
        r_q = self.rel_vec([s.query_relation for s, _ in rows])
        scores = action_scores(z_cur, h, r_q, a_emb, p["policy.W1"], p["policy.W2"])
        scores = scores.masked_fill(~torch.as_tensor(mask), float("-inf"))
        return cands, torch.log_softmax(scores, dim=-1), h, c

    def distribution(self, state: State, arrival_relation: int, h=None, c=None, table=None):
        """Action list and probabilities for one state (h/c default to the learned initial state)."""
        table = self.mfar.table() if table is None else table
        if h is None:
            h, c = self.initial_hidden(1)
        cands, logp, h, c = self._step(table, [(state, arrival_relation)], h, c)
        return cands[0], logp[0].exp(), h, c

    # -- rollouts -------------------------------------------------------
    def rollout(self, queries: list[QueryTask], mode: str = "sample",
                rng: np.random.Generator | None = None, table=None) -> list[Trajectory]:
        """Run ``max_steps`` decisions per query; after STOP the agent self-loops with prob 1."""
        if mode not in ("sample", "greedy"):
            raise ValueError(f"unknown rollout mode {mode!r}")
        if mode == "sample" and rng is None:
            raise ValueError("sample mode needs an rng")
        table = self.mfar.table() if table is None else table
        trajs = [Trajectory(q) for q in queries]
        states = [initial_state(q) for q in queries]
        arrival = [self.graph.start_relation] * len(queries)
        stopped = [False] * len(queries)
        h, c = self.initial_hidden(len(queries))
        with torch.no_grad():
            for _ in range(self.env.max_steps):
                live = [b for b in range(len(queries)) if not stopped[b]]
                choice = {}
                if live:
                    idx = torch.as_tensor(live)
                    cands, logp, h_new, c_new = self._step(
                        table, [(states[b], arrival[b]) for b in live], h[idx], c[idx])
                    h, c = h.clone(), c.clone()
                    h[idx], c[idx] = h_new, c_new
                    probs = logp.exp().numpy()
                    for k, b in enumerate(live):
                        n = len(cands[k])
                        if mode == "greedy":
                            j = int(np.argmax(probs[k, :n]))
                        else:
                            pk = probs[k, :n] / probs[k, :n].sum()
                            j = int(rng.choice(n, p=pk))
                        choice[b] = (cands[k][j], j, float(logp[k, j]))
                for b, traj in enumerate(trajs):
                    st = states[b]
                    traj.states.append(st)
                    if b in choice:
                        act, j, lp = choice[b]
                        traj.active.append(True)
                    else:
                        act, j, lp = self.env.self_loop(st), 0, 0.0
                        traj.active.append(False)
                    traj.actions.append(act)
                    traj.choices.append(j)
                    traj.log_probs.append(lp)
                    if b in choice and j == 0:
                        stopped[b] = True
                    states[b] = st._replace(entity=act.entity, time=act.time, step=st.step + 1)
                    arrival[b] = act.relation
        return trajs

    def log_probs(self, trajs: list[Trajectory], table=None) -> torch.Tensor:
        """Differentiable log-probs of recorded choices: (batch, steps), zero on padded steps."""
        table = self.mfar.table(grad=True) if table is None else table
        B, L = len(trajs), self.env.max_steps
        out = []
        h, c = self.initial_hidden(B)
        for l in range(L):
            live = [b for b in range(B) if trajs[b].active[l]]
            col = table.new_zeros(B)
            if live:
                idx = torch.as_tensor(live)
                rows = [(trajs[b].states[l],
                         trajs[b].actions[l - 1].relation if l else self.graph.start_relation)
                        for b in live]
                _, logp, h_new, c_new = self._step(table, rows, h[idx], c[idx])
                picks = torch.as_tensor([trajs[b].choices[l] for b in live])
                chosen = logp.gather(1, picks[:, None]).squeeze(1)
                col = col.index_put((idx,), chosen)
                h = h.index_put((idx,), h_new)
                c = c.index_put((idx,), c_new)
            out.append(col)
        return torch.stack(out, dim=1)

    # -- beam search ----------------------------------------------------
    def beam_search(self, query: QueryTask, beam_width: int | None = None, table=None):
        """Top paths after ``max_steps`` decisions; stopped beams carry over with prob 1."""
        B = self.cfg.beam_width if beam_width is None else beam_width
        if B < 1:
            raise ValueError("beam width must be >= 1")
        table = self.mfar.table() if table is None else table
        h, c = self.initial_hidden(1)
        # beam: (log_prob, order, state, arrival, stopped, actions, row in h/c)
        beams = [(0.0, 0, initial_state(query), self.graph.start_relation, False, [], 0)]
        with torch.no_grad():
            for _ in range(self.env.max_steps):
                live = [bm for bm in beams if not bm[4]]
                expanded = [bm for bm in beams if bm[4]]
                if live:
                    rows_idx = torch.as_tensor([bm[6] for bm in live])
                    cands, logp, h_new, c_new = self._step(
                        table, [(bm[2], bm[3]) for bm in live], h[rows_idx], c[rows_idx])
                    lp = logp.numpy()
                    for k, bm in enumerate(live):
                        for j, act in enumerate(cands[k]):
                            st = bm[2]._replace(entity=act.entity, time=act.time, step=bm[2].step + 1)
                            expanded.append((bm[0] + float(lp[k, j]), 0, st, act.relation, j == 0,
                                             bm[5] + [(bm[2].entity, *act)], k))
                    h, c = h_new, c_new
                else:
                    break
                order = sorted(range(len(expanded)), key=lambda i: (-expanded[i][0], i))[:B]
                beams = []
                for i in order:
                    bm = expanded[i]
                    beams.append(bm)
                # stopped beams do not need a recurrent row; live rows index into h_new
        return [BeamPath(bm[5], bm[0]) for bm in sorted(beams, key=lambda b: -b[0])]

    def beam_inference(self, query: QueryTask, beam_width: int | None = None, table=None):
        """Ranked ``(entity, score)``: score sums the probabilities of beam paths ending there."""
        paths = self.beam_search(query, beam_width, table)
        scores = defaultdict(float)
        for p in paths:
            end = p.actions[-1][2] if p.actions else query.subject
            scores[end] += p.prob
        return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
