"""Bundle of parameters and the graph-bound components that use them."""

from __future__ import annotations

import numpy as np

from .adversary import Adversary, init_adversary_params
from .config import TrainConfig
from .env import Environment
from .graph import TemporalKG
from .mfar import MFAR, init_embedding_params, init_mfar_params
from .params import ParameterStore
from .policy import Policy, init_policy_params


def init_parameters(cfg: TrainConfig, num_entities: int, num_relation_ids: int) -> ParameterStore:
    rng = np.random.default_rng(cfg.seed)
    store = ParameterStore()
    init_embedding_params(store, cfg, num_entities, num_relation_ids, rng)
    init_mfar_params(store, cfg, rng)
    init_policy_params(store, cfg, rng)
    init_adversary_params(store, cfg, rng)
    return store


class Reasoner:
    """Parameters plus env/MFAR/policy/adversary views over one graph.

    :meth:`on` rebinds the same parameters to another graph, e.g. the
    train+valid+test history used at evaluation time.
    """

    def __init__(self, graph: TemporalKG, cfg: TrainConfig, store: ParameterStore | None = None):
        self.graph = graph
        self.cfg = cfg
        self.store = store if store is not None else init_parameters(
            cfg, graph.num_entities, graph.num_relation_ids)
        self.env = Environment(graph, cfg.action_cap, cfg.max_steps, cfg.time_constraint)
        self.mfar = MFAR(graph, self.store, cfg)
        self.policy = Policy(self.store, cfg, self.env, self.mfar)
        self.adversary = Adversary(self.store, cfg, self.policy)

    def on(self, graph: TemporalKG) -> "Reasoner":
        if graph is self.graph:
            return self
        return Reasoner(graph, self.cfg, self.store)

    @property
    def policy_param_names(self):
        return [n for n in self.store if not n.startswith("adv.")]
