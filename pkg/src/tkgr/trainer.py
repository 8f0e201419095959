"""Alternating adversarial-imitation training.

Per batch: sample rollouts, sample demonstrations, update both
discriminators, score every step of every rollout, then take one REINFORCE
step on the policy and representation parameters.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from .adversary import (adaptive_reward, gated_rewards, logic_disc_loss, noise_scores,
                        path_to_rule, semantic_disc_loss)
from .config import TrainConfig
from .env import query_from_fact, terminal_reward
from .evaluation import evaluate
from .graph import TemporalKG
from .model import Reasoner
from .sampler import sample_demonstrations

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,mean_reward,mean_terminal,loss_sem,loss_logic,valid_mrr,seconds"


@dataclass
class EpochMetrics:
    epoch: int
    mean_reward: float
    mean_terminal: float
    loss_sem: float
    loss_logic: float
    valid_mrr: float
    seconds: float
    updates: int = 0

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.mean_reward:.10f},{self.mean_terminal:.10f},"
                f"{self.loss_sem:.10f},{self.loss_logic:.10f},{self.valid_mrr:.10f},"
                f"{self.seconds:.3f}")


def discounted_returns(rewards: torch.Tensor, gamma: float) -> torch.Tensor:
    """Reward-to-go along the last axis."""
    out = torch.zeros_like(rewards)
    running = torch.zeros_like(rewards[..., 0])
    for l in range(rewards.shape[-1] - 1, -1, -1):
        running = rewards[..., l] + gamma * running
        out[..., l] = running
    return out


def policy_loss(log_probs: torch.Tensor, rewards: torch.Tensor, active: torch.Tensor,
                gamma: float, baseline) -> torch.Tensor:
    """REINFORCE surrogate ``-mean_b sum_l log pi * (G_l - baseline_l)`` over active steps.

    ``baseline`` broadcasts against the (batch, steps) returns: a scalar, one
    value per step, or one row per trajectory.
    """
    adv = (discounted_returns(rewards, gamma) - baseline) * active
    return -(log_probs * adv).sum(1).mean()


class Trainer:
    def __init__(self, reasoner: Reasoner, train_facts, valid_facts=(),
                 eval_graph: TemporalKG | None = None):
        self.model = reasoner
        self.cfg: TrainConfig = reasoner.cfg
        self.train_facts = list(train_facts)
        self.valid_facts = list(valid_facts)
        self.eval_model = reasoner.on(eval_graph) if eval_graph is not None else reasoner
        store = reasoner.store
        self.policy_params = [store[n] for n in reasoner.policy_param_names]
        self.opt_policy = torch.optim.Adam(self.policy_params, lr=self.cfg.lr_policy)
        self.opt_sem = torch.optim.Adam(reasoner.adversary.semantic_params, lr=self.cfg.lr_disc)
        self.opt_logic = torch.optim.Adam(reasoner.adversary.logic_params, lr=self.cfg.lr_disc)
        # moving average of returns per (query relation, step)
        self.baselines: dict[int, torch.Tensor] = {}
        self.epoch = 0
        self.updates = 0

    # -- policy step -----------------------------------------------------
    def policy_update(self, trajs) -> float:
        if not trajs:
            warnings.warn("empty batch; skipping policy update")
            return 0.0
        cfg = self.cfg
        rewards = torch.as_tensor([t.rewards for t in trajs], dtype=torch.float64)
        active = torch.as_tensor([t.active for t in trajs], dtype=torch.float64)
        self.opt_policy.zero_grad()
        logp = self.model.policy.log_probs(trajs)
        zero = torch.zeros(cfg.max_steps)
        base = torch.stack([self.baselines.get(t.query.relation, zero) for t in trajs])
        loss = policy_loss(logp, rewards, active, cfg.gamma, base)
        loss.backward()
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(self.policy_params, cfg.grad_clip)
        self.opt_policy.step()
        self.model.store.bump()
        returns = discounted_returns(rewards, cfg.gamma)
        for rel in sorted({t.query.relation for t in trajs}):
            rows = [b for b, t in enumerate(trajs) if t.query.relation == rel]
            ret = returns[rows].mean(0)
            old = self.baselines.get(rel, zero)
            self.baselines[rel] = cfg.baseline_decay * old + (1 - cfg.baseline_decay) * ret
        self.updates += 1
        return float(loss.detach())

    # -- adversary -------------------------------------------------------
    def _demos(self, queries, rng):
        env = self.model.env
        return [sample_demonstrations(q, env, self.cfg.max_steps, self.cfg.n_demos, rng,
                                      self.cfg.frontier_cap) for q in queries]

    def discriminator_update(self, trajs, demos, rng):
        adv = self.model.adversary
        graph = self.model.graph
        table = self.model.mfar.table()
        stop = graph.stop_relation
        gen_items = [(t.edges(stop), t.query) for t in trajs]
        flat_demos = [d for ds in demos for d in ds]
        demo_items = [(d.edges, d.query) for d in flat_demos]
        with torch.no_grad():
            P_gen = adv.matrices_for(gen_items, table)
            P_demo = adv.matrices_for(demo_items, table)
        self.opt_sem.zero_grad()
        loss_sem = semantic_disc_loss(P_gen, P_demo, self.cfg.gp_lambda, rng, *adv.semantic_params)
        loss_sem.backward()
        self.opt_sem.step()

        rules_gen = [path_to_rule(t.edges(stop), t.query, t.final_entity, stop, graph.num_relations)
                     for t in trajs]
        rules_demo = [path_to_rule(d.edges, d.query, d.query.gold, stop, graph.num_relations)
                      for d in flat_demos]
        self.opt_logic.zero_grad()
        loss_logic = logic_disc_loss(adv.rule_scores(rules_demo, table),
                                     adv.rule_scores(rules_gen, table))
        loss_logic.backward()
        self.opt_logic.step()
        self.model.store.bump()
        return float(loss_sem.detach()), float(loss_logic.detach())

    def assign_rewards(self, trajs, has_demo, rng):
        """Per-step rewards: terminal reward on the last active step plus, for queries
        with demonstrations in adaptive mode, noise-gated discriminator rewards on each prefix."""
        cfg = self.cfg
        adv = self.model.adversary
        graph = self.model.graph
        stop = graph.stop_relation
        table = self.model.mfar.table()
        prefixes = []  # (traj index, step)
        for b, t in enumerate(trajs):
            if cfg.reward_mode == "adaptive" and has_demo[b]:
                prefixes.extend((b, l) for l in range(len(t.actions)) if t.active[l])
        d_sem = d_rule = None
        if prefixes:
            items, rules = [], []
            for b, l in prefixes:
                t = trajs[b]
                sub = type(t)(t.query, t.states[:l + 1], t.actions[:l + 1])
                edges = sub.edges(stop)
                items.append((edges, t.query))
                rules.append(path_to_rule(edges, t.query, t.actions[l].entity, stop,
                                          graph.num_relations))
            with torch.no_grad():
                d_sem = adv.semantic(adv.matrices_for(items, table)).numpy()
                d_rule = adv.rule_scores(rules, table).numpy()
        extra = {}
        for k, (b, l) in enumerate(prefixes):
            n_s, n_r = noise_scores(rng)
            r_s, r_r = gated_rewards(float(d_sem[k]), float(d_rule[k]), n_s, n_r)
            extra[(b, l)] = (r_s, r_r)
        terminals = []
        for b, t in enumerate(trajs):
            r_t = terminal_reward(t, t.query.gold)
            terminals.append(r_t)
            last = max(l for l in range(len(t.actions)) if t.active[l])
            t.rewards = []
            for l in range(len(t.actions)):
                rt = r_t if l == last else 0.0
                if (b, l) in extra:
                    t.rewards.append(adaptive_reward(rt, *extra[(b, l)], cfg.alpha))
                else:
                    t.rewards.append(rt)
        return terminals

    # -- epochs ----------------------------------------------------------
    def epoch_queries(self, facts):
        R = self.model.graph.num_relations
        qr = self.cfg.query_relations
        out = []
        for f in facts:
            if qr is not None and f[1] not in qr:
                continue
            out.append(query_from_fact(f, R, "object"))
            out.append(query_from_fact(f, R, "subject"))
        return out

    def train_epoch(self, validate: bool = True) -> EpochMetrics:
        cfg = self.cfg
        start = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, self.epoch])
        facts = [f for f in self.train_facts
                 if cfg.query_relations is None or f[1] in cfg.query_relations]
        order = rng.permutation(len(facts))
        step_rewards, terminals, sem_losses, logic_losses = [], [], [], []
        updates = 0
        for start_i in range(0, len(order), cfg.batch_size):
            batch = [facts[i] for i in order[start_i:start_i + cfg.batch_size]]
            unique = self.epoch_queries(batch)
            queries = [q for q in unique for _ in range(cfg.rollouts)]
            trajs = self.model.policy.rollout(queries, "sample", rng)
            has_demo = [False] * len(trajs)
            if cfg.reward_mode == "adaptive":
                demos = self._demos(unique, rng)
                has_demo = [bool(d) for d in demos for _ in range(cfg.rollouts)]
                if any(has_demo):
                    ls, ll = self.discriminator_update(trajs, demos, rng)
                    sem_losses.append(ls)
                    logic_losses.append(ll)
            terminals.extend(self.assign_rewards(trajs, has_demo, rng))
            for t in trajs:
                step_rewards.extend(r for r, a in zip(t.rewards, t.active) if a)
            self.policy_update(trajs)
            updates += 1
        valid_mrr = 0.0
        if validate and self.valid_facts:
            valid_mrr = self.evaluate(self.valid_facts).mrr
        metrics = EpochMetrics(
            epoch=self.epoch,
            mean_reward=float(np.mean(step_rewards)) if step_rewards else 0.0,
            mean_terminal=float(np.mean(terminals)) if terminals else 0.0,
            loss_sem=float(np.mean(sem_losses)) if sem_losses else 0.0,
            loss_logic=float(np.mean(logic_losses)) if logic_losses else 0.0,
            valid_mrr=valid_mrr,
            seconds=time.perf_counter() - start,
            updates=updates,
        )
        for name in ("mean_reward", "mean_terminal", "loss_sem", "loss_logic", "valid_mrr"):
            if not math.isfinite(getattr(metrics, name)):
                raise FloatingPointError(f"non-finite {name} at epoch {self.epoch}")
        log.info("epoch %d reward %.4f terminal %.4f mrr %.4f", self.epoch, metrics.mean_reward,
                 metrics.mean_terminal, metrics.valid_mrr)
        self.epoch += 1
        return metrics

    def evaluate(self, facts, model: Reasoner | None = None):
        model = self.eval_model if model is None else model
        report, _ = evaluate(model.policy, facts, model.graph, self.cfg.query_relations)
        return report


def metrics_fields():
    return [f.name for f in fields(EpochMetrics)]


def metrics_dict(m: EpochMetrics):
    return asdict(m)
