"""The reasoning MDP: states, time-constrained actions, transitions, terminal reward."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import ContractViolation
from .graph import TemporalKG


class QueryTask(NamedTuple):
    subject: int
    relation: int
    gold: int | None
    time: int


class State(NamedTuple):
    entity: int
    time: int
    subject: int
    query_time: int
    query_relation: int
    step: int = 0


class Action(NamedTuple):
    relation: int
    entity: int
    time: int


def query_from_fact(fact, num_relations: int, direction: str = "object") -> QueryTask:
    """Object query ``(s, r, ?, t)`` or subject query rewritten as ``(o, r^-1, ?, t)``."""
    s, r, o, t = fact
    if direction == "object":
        return QueryTask(s, r, o, t)
    inv = r + num_relations if r < num_relations else r - num_relations
    return QueryTask(o, inv, s, t)


def initial_state(query: QueryTask) -> State:
    return State(query.subject, query.time, query.subject, query.time, query.relation, 0)


class Environment:
    """Immutable view over a graph; action sets are cached per (entity, time bound)."""

    def __init__(self, graph: TemporalKG, action_cap: int = 50, max_steps: int = 3,
                 time_constraint: str = "strict"):
        if time_constraint not in ("strict", "inclusive", "history"):
            raise ValueError(f"unknown time constraint {time_constraint!r}")
        self.graph = graph
        self.action_cap = action_cap
        self.max_steps = max_steps
        self.time_constraint = time_constraint
        self._cache: dict[tuple[int, int], tuple[Action, ...]] = {}

    def _bound(self, state: State) -> tuple[int, bool]:
        # strict: t' < t_l (t_l <= t_q, so the queried fact is never reachable)
        if self.time_constraint == "strict":
            return state.time, False
        if self.time_constraint == "inclusive":
            return min(state.time, state.query_time), True
        return state.query_time, False

    def edge_candidates(self, entity: int, bound: int, inclusive: bool) -> tuple[Action, ...]:
        key = (entity, bound, inclusive)
        hit = self._cache.get(key)
        if hit is None:
            edges = self.graph.neighbors_before(entity, bound, inclusive)[: self.action_cap - 1]
            hit = tuple(Action(r, o, t) for r, o, t in edges)
            self._cache[key] = hit
        return hit

    def self_loop(self, state: State) -> Action:
        return Action(self.graph.stop_relation, state.entity, state.time)

    def valid_actions(self, state: State) -> list[Action]:
        bound, inclusive = self._bound(state)
        return [self.self_loop(state), *self.edge_candidates(state.entity, bound, inclusive)]

    def is_valid(self, state: State, action: Action) -> bool:
        if action == self.self_loop(state):
            return True
        bound, inclusive = self._bound(state)
        return action in self.edge_candidates(state.entity, bound, inclusive)

    def step(self, state: State, action: Action) -> State:
        if state.step >= self.max_steps:
            raise ContractViolation("episode already at the maximum step")
        if not self.is_valid(state, action):
            raise ContractViolation(f"action {tuple(action)} is not valid in state {tuple(state)}")
        return state._replace(entity=action.entity, time=action.time, step=state.step + 1)


@dataclass
class Trajectory:
    query: QueryTask
    states: list[State] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    # a step counts for the gradient unless it is forced padding after STOP
    active: list[bool] = field(default_factory=list)
    choices: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    @property
    def final_entity(self) -> int:
        if not self.actions:
            return self.query.subject
        return self.actions[-1].entity

    def edges(self, stop_relation: int):
        """Real edges ``(s, r, o, t)`` in traversal order, self-loops removed."""
        out = []
        for st, act in zip(self.states, self.actions):
            if act.relation != stop_relation:
                out.append((st.entity, act.relation, act.entity, act.time))
        return out

    def dump(self, graph: TemporalKG) -> str:
        lines = []
        for st, act, lp in zip(self.states, self.actions, self.log_probs):
            lines.append("\t".join([graph.entity_name(st.entity), graph.relation_name(act.relation),
                                    graph.entity_name(act.entity), str(act.time),
                                    f"{math.exp(lp):.6f}"]))
        return "\n".join(lines)


def terminal_reward(trajectory: Trajectory, gold: int | None) -> float:
    if gold is None:
        raise ContractViolation("terminal reward needs a gold entity")
    return 1.0 if trajectory.final_entity == gold else 0.0
