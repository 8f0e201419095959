"""Reference recipe for the synthetic planted-rule dataset.

Shared by the runnable scripts and the acceptance tests so both exercise
exactly the same settings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .config import TrainConfig
from .data import Dataset, from_synthetic
from .env import QueryTask
from .model import Reasoner
from .synthetic import REL_A, REL_B, REL_Q, SyntheticDataset, generate, planted_test_queries
from .trainer import Trainer

# Small dimensions keep an epoch around a second on one core. The planted
# chain runs forward in time (t, then t+1), so the "history" constraint is
# needed for object queries to reach their answer.
TOY_SETTINGS = dict(
    dim_entity=16, dim_relation=16, hidden=16, heads_raga=2, heads_tsan=2, window=10,
    time_constraint="history", batch_size=8, rollouts=4, beam_width=10, action_cap=30,
    lr_policy=0.003, lr_disc=0.01, conv_filters=8, alpha=0.9,
)


def toy_data(seed: int = 0) -> tuple[SyntheticDataset, Dataset]:
    data = generate(num_entities=50, num_relations=5, num_timestamps=40, num_patterns=200,
                    seed=seed)
    return data, from_synthetic(data)


def toy_config(ds: Dataset, seed: int = 0, **overrides) -> TrainConfig:
    settings = {**TOY_SETTINGS, "query_relations": [ds.relation_vocab[REL_Q]], "seed": seed}
    settings.update(overrides)
    return TrainConfig(**settings)


@dataclass
class ToyRun:
    trainer: Trainer
    curve: list  # mean terminal reward per epoch
    seconds: float
    reached_at: int | None  # first epoch (1-based) whose mean terminal reward hit the target


def train_toy(ds: Dataset, cfg: TrainConfig, max_epochs: int, target: float | None = None,
              patience: int = 0) -> ToyRun:
    """Train on the toy split; with ``target`` set, stop ``patience`` epochs after reaching it."""
    model = Reasoner(ds.train_graph(), cfg)
    trainer = Trainer(model, ds.split.train, ds.split.valid, ds.history_graph("valid"))
    curve, reached = [], None
    start = time.perf_counter()
    for epoch in range(1, max_epochs + 1):
        curve.append(trainer.train_epoch(validate=False).mean_terminal)
        if target is not None and reached is None and curve[-1] >= target:
            reached = epoch
        if reached is not None and epoch >= reached + patience:
            break
    return ToyRun(trainer, curve, time.perf_counter() - start, reached)


def planted_chain_queries(data: SyntheticDataset, ds: Dataset):
    """Planted test heads as object queries with their expected chain of entity ids."""
    ev, rv = ds.entity_vocab, ds.relation_vocab
    out = []
    for x, y, z, t in planted_test_queries(data):
        tq = ds.normalizer(t + 2)
        chain = [(ev[x], rv[REL_A], ev[y], ds.normalizer(t)),
                 (ev[y], rv[REL_B], ev[z], ds.normalizer(t + 1))]
        out.append((QueryTask(ev[x], rv[REL_Q], ev[z], tq), chain))
    return out


def top_path_edges(model: Reasoner, query: QueryTask, beam_width: int | None = None):
    """Real edges ``(s, r, o, t)`` of the most probable beam path."""
    best = model.policy.beam_search(query, beam_width)[0]
    stop = model.graph.stop_relation
    return [tuple(a) for a in best.actions if a[1] != stop]


def planted_chain_share(model: Reasoner, data: SyntheticDataset, ds: Dataset) -> float:
    """Fraction of planted test queries whose top path is exactly the planted chain."""
    cases = planted_chain_queries(data, ds)
    hits = sum(top_path_edges(model, q) == chain for q, chain in cases)
    return hits / len(cases)
