"""Configuration dataclasses shared by the trainer and the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError

TIME_CONSTRAINTS = ("strict", "inclusive", "history")
REWARD_MODES = ("adaptive", "terminal-only")


@dataclass
class TrainConfig:
    # representation
    dim_entity: int = 200
    dim_relation: int = 200
    heads_raga: int = 8
    heads_tsan: int = 8
    bandwidth: float = 1.0
    max_hop: int = 2
    hop_samples: int = 10
    window: int = 60
    leaky_slope: float = 0.2
    # reasoner
    hidden: int = 200
    max_steps: int = 3
    action_cap: int = 50
    beam_width: int = 40
    time_constraint: str = "strict"
    time_encoding: bool = True
    # adversary
    alpha: float = 0.5
    gp_lambda: float = 5.0
    conv_filters: int = 1
    kernel_rows: int = 3
    kernel_cols: int = 5
    n_demos: int = 8
    frontier_cap: int = 64
    reward_mode: str = "adaptive"
    # optimisation
    epochs: int = 400
    batch_size: int = 64
    rollouts: int = 1  # sampled rollouts per query per batch
    lr_policy: float = 1e-3
    lr_disc: float = 1e-4
    gamma: float = 0.95
    baseline_decay: float = 0.9
    grad_clip: float = 5.0
    seed: int = 0
    # ablations
    no_mfar: bool = False
    no_raga: bool = False
    no_tsan: bool = False
    # restrict training/evaluation queries to these original relation ids
    query_relations: list[int] | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.time_constraint not in TIME_CONSTRAINTS:
            raise ConfigError(f"time_constraint must be one of {TIME_CONSTRAINTS}")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
        for name in ("lr_policy", "lr_disc", "bandwidth"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")
        if not 1 <= self.max_hop <= 3:
            raise ConfigError("max_hop must lie in [1, 3]")
        if self.dim_entity % self.heads_raga:
            raise ConfigError("heads_raga must divide dim_entity")
        if self.dim_relation % self.heads_tsan:
            raise ConfigError("heads_tsan must divide dim_relation")
        if (self.no_tsan or self.no_mfar) and self.dim_entity != self.dim_relation:
            raise ConfigError("no_tsan/no_mfar ablations need dim_entity == dim_relation")
        if self.rollouts < 1 or self.batch_size < 1:
            raise ConfigError("rollouts and batch_size must be >= 1")
        if self.action_cap < 1 or self.max_steps < 1 or self.beam_width < 1:
            raise ConfigError("action_cap, max_steps and beam_width must be >= 1")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunConfig:
    data_dir: str = ""
    out_dir: str = ""
    checkpoint_every: int = 10
    eval_every: int = 1
    resume: str = ""
    # write measured seconds to the metrics CSV; off gives byte-reproducible files
    wall_clock: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def keys(cls) -> dict[str, tuple[type, object]]:
        """Flat ``key -> (type, default)`` map over run and training keys."""
        out = {}
        for f in fields(cls):
            if f.name != "train":
                out[f.name] = (f.type, f.default)
        for f in fields(TrainConfig):
            out[f.name] = (f.type, f.default)
        return out

    @classmethod
    def from_flat(cls, data: dict) -> "RunConfig":
        run_keys = {f.name for f in fields(cls)} - {"train"}
        train_keys = {f.name for f in fields(TrainConfig)}
        unknown = set(data) - run_keys - train_keys
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        run = {k: v for k, v in data.items() if k in run_keys}
        train = TrainConfig.from_dict({k: v for k, v in data.items() if k in train_keys})
        return cls(train=train, **run)

    def to_flat(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        out.update(self.train.to_dict())
        return out


KEY_HELP = {
    "data_dir": "prepared dataset directory (output of `prepare`)",
    "out_dir": "run directory for checkpoints, metrics and the echoed config",
    "checkpoint_every": "write a checkpoint every k epochs (0 disables periodic checkpoints)",
    "eval_every": "compute validation MRR every k epochs",
    "resume": "checkpoint to initialise parameters from",
    "wall_clock": "record elapsed seconds in metrics.csv (false writes 0 for byte-stable files)",
    "dim_entity": "entity embedding size D",
    "dim_relation": "relation embedding and representation size F'",
    "heads_raga": "graph-attention heads",
    "heads_tsan": "temporal self-attention heads",
    "bandwidth": "Gaussian hop-decay bandwidth b",
    "max_hop": "largest neighbor distance K used by graph attention (1-3)",
    "hop_samples": "neighbors sampled per hop distance >= 2",
    "window": "temporal attention window in snapshots; also caps the relative-time index",
    "leaky_slope": "negative slope of the attention LeakyReLU",
    "hidden": "LSTM hidden size",
    "max_steps": "reasoning path length L",
    "action_cap": "maximum actions per state including the self-loop",
    "beam_width": "beam size at inference",
    "time_constraint": "edge time rule: strict (t' < t_l), inclusive (t' <= min(t_l, t_q)) or history (t' < t_q)",
    "time_encoding": "add a learned relative-time vector to relation embeddings in actions",
    "alpha": "balance between semantic and temporal-logic rewards",
    "gp_lambda": "gradient-penalty weight of the semantic discriminator",
    "conv_filters": "semantic discriminator convolution filters",
    "kernel_rows": "convolution kernel height",
    "kernel_cols": "convolution kernel width",
    "n_demos": "demonstrations sampled per query",
    "frontier_cap": "frontier size cap of the demonstration search",
    "reward_mode": "adaptive (terminal + discriminator rewards) or terminal-only",
    "epochs": "training epochs",
    "batch_size": "training facts per batch (each yields an object and a subject query)",
    "rollouts": "sampled rollouts per query per batch",
    "lr_policy": "Adam learning rate of policy and representation parameters",
    "lr_disc": "Adam learning rate of both discriminators",
    "gamma": "discount factor of the reward-to-go",
    "baseline_decay": "decay of the moving-average return baseline",
    "grad_clip": "gradient-norm clip on policy updates (0 disables)",
    "seed": "random seed for initialisation, sampling and noise",
    "no_mfar": "ablation: static embeddings instead of learned representations",
    "no_raga": "ablation: static embeddings fed to the temporal attention",
    "no_tsan": "ablation: latest graph-attention output without temporal attention",
    "query_relations": "restrict training and evaluation to facts of these relations (names or ids)",
}
