"""Synthetic temporal KGs with a planted two-hop temporal rule.

Each planted instance is ``(X, r_a, Y, t) ∧ (Y, r_b, Z, t+1) ⇒ (X, r_q, Z, t+2)``.
Background facts use separate relations, so every ``r_q`` fact is explained
by exactly one planted chain. Within one start time ``t`` no entity plays the
same role twice, which keeps each chain the unique recent support of its head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REL_A, REL_B, REL_Q = "r_a", "r_b", "r_q"


@dataclass
class SyntheticDataset:
    train: list
    valid: list
    test: list
    planted: list = field(default_factory=list)  # (X, Y, Z, t) name tuples
    query_relation: str = REL_Q

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("train", "valid", "test"):
            with open(out / f"{name}.txt", "w", encoding="utf-8") as fh:
                for s, r, o, t in getattr(self, name):
                    fh.write(f"{s}\t{r}\t{o}\t{t}\n")
        with open(out / "planted.tsv", "w", encoding="utf-8") as fh:
            fh.write("# X\tY\tZ\tt\n")
            for x, y, z, t in self.planted:
                fh.write(f"{x}\t{y}\t{z}\t{t}\n")
        (out / "meta.json").write_text(json.dumps(
            {"query_relation": self.query_relation, "rule": [REL_A, REL_B, REL_Q],
             "counts": {k: len(getattr(self, k)) for k in ("train", "valid", "test")}}, indent=2))


def split_bounds(num_timestamps: int, frac: float = 0.1):
    n_hold = max(1, round(frac * num_timestamps))
    test_start = num_timestamps - n_hold
    valid_start = test_start - n_hold
    return valid_start, test_start


def generate(num_entities=50, num_relations=5, num_timestamps=40, num_patterns=200,
             num_background=300, seed=0) -> SyntheticDataset:
    if min(num_entities, num_relations, num_timestamps) <= 0 or num_patterns < 0:
        raise ValueError("sizes must be positive")
    if num_entities < 3 or num_timestamps < 3 or num_relations < 3:
        raise ValueError("need at least 3 entities, 3 relations and 3 timestamps")
    rng = np.random.default_rng(seed)
    ent = [f"e{i:03d}" for i in range(num_entities)]
    background_rels = [f"bg_{i}" for i in range(num_relations - 3)]
    facts = set()
    planted = []
    used = {}  # (t, role) -> set of entities
    attempts = 0
    while len(planted) < num_patterns:
        attempts += 1
        if attempts > 1000 * max(num_patterns, 1):
            raise RuntimeError("could not place planted patterns; too few entities")
        t = int(rng.integers(0, num_timestamps - 2))
        x, y, z = (int(v) for v in rng.choice(num_entities, size=3, replace=False))
        roles = [(t, "X", x), (t, "Y", y), (t, "Z", z)]
        if any(e in used.get((tt, role), ()) for tt, role, e in roles):
            continue
        for tt, role, e in roles:
            used.setdefault((tt, role), set()).add(e)
        planted.append((ent[x], ent[y], ent[z], t))
        facts.add((ent[x], REL_A, ent[y], t))
        facts.add((ent[y], REL_B, ent[z], t + 1))
        facts.add((ent[x], REL_Q, ent[z], t + 2))
    if background_rels:
        for _ in range(num_background):
            s, o = (int(v) for v in rng.choice(num_entities, size=2, replace=False))
            r = background_rels[int(rng.integers(len(background_rels)))]
            facts.add((ent[s], r, ent[o], int(rng.integers(0, num_timestamps))))
    facts = sorted(facts, key=lambda f: (f[3], f[0], f[1], f[2]))
    valid_start, test_start = split_bounds(num_timestamps)
    data = SyntheticDataset(
        train=[f for f in facts if f[3] < valid_start],
        valid=[f for f in facts if valid_start <= f[3] < test_start],
        test=[f for f in facts if f[3] >= test_start],
        planted=planted,
    )
    verify(data)
    return data


def verify(data: SyntheticDataset):
    """Every planted head in the test split has its two-hop support among earlier facts."""
    observed = set(data.train) | set(data.valid) | set(data.test)
    for x, y, z, t in data.planted:
        head = (x, REL_Q, z, t + 2)
        if head not in set(data.test):
            continue
        for fact in ((x, REL_A, y, t), (y, REL_B, z, t + 1)):
            if fact not in observed or fact[3] >= head[3]:
                raise AssertionError(f"planted head {head} lacks support {fact}")


def planted_test_queries(data: SyntheticDataset):
    test = set(data.test)
    return [(x, y, z, t) for x, y, z, t in data.planted if (x, REL_Q, z, t + 2) in test]
