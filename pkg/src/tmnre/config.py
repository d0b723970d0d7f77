"""Run configuration: TOML parsing, validation, defaults.

Every unset key resolves to the library default and is logged, so a run
directory always carries the fully resolved configuration it ran with.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np

from .nn import TrainConfig
from .prior import FactorizablePrior
from .simulators import Simulator, make_simulator
from .truncation import TmnreConfig

__all__ = ["RunConfig", "ConfigError", "load_config"]

log = logging.getLogger("tmnre")


class ConfigError(ValueError):
    """Carries the full list of violated fields."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class RunConfig:
    simulator: str = "gaussian_diag"
    simulator_params: dict = field(default_factory=dict)
    prior_spec: list | None = None           # None -> simulator default prior
    x_o: list | str = "noiseless"            # explicit vector or "noiseless"
    algorithm: str = "tmnre"
    seed: int = 0
    out_dir: str = "runs/run"
    workers: int = 1
    tmnre: TmnreConfig = field(default_factory=TmnreConfig)

    def build_simulator(self) -> Simulator:
        return make_simulator(self.simulator, **self.simulator_params)

    def build_prior(self, sim: Simulator) -> FactorizablePrior:
        if self.prior_spec is None:
            return sim.default_prior()
        return FactorizablePrior.from_spec(self.prior_spec)

    def resolve_x_o(self, sim: Simulator) -> np.ndarray:
        if isinstance(self.x_o, str):
            if self.x_o != "noiseless":
                raise ConfigError([f"x_o: expected a vector or 'noiseless', got {self.x_o!r}"])
            return sim.observation()
        return np.asarray(self.x_o, float)

    def to_json(self):
        data = {
            "simulator": self.simulator,
            "simulator_params": self.simulator_params,
            "prior": self.prior_spec,
            "x_o": self.x_o if isinstance(self.x_o, str) else list(self.x_o),
            "algorithm": self.algorithm,
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "workers": self.workers,
            "tmnre": {
                **{k: v for k, v in asdict(self.tmnre).items() if k != "train"},
                "train": asdict(self.tmnre.train),
            },
        }
        return data


_TMNRE_KEYS = {
    "budget", "epsilon", "beta", "max_rounds", "round_fraction",
    "round_targets", "grid_size",
}
_TRAIN_KEYS = {
    "learning_rate", "batch_size", "max_epochs", "early_stop_patience",
    "plateau_factor", "plateau_patience", "validation_fraction",
    "weight_decay", "hidden", "n_blocks",
}


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration.

    All violations are collected and reported together rather than failing
    on the first one.
    """
    raw = tomllib.loads(Path(path).read_text())
    errors = []

    def check(cond, msg):
        if not cond:
            errors.append(msg)
        return cond

    algorithm = raw.get("algorithm", "tmnre")
    check(algorithm in ("tmnre", "mnre"), f"algorithm: must be 'tmnre' or 'mnre', got {algorithm!r}")

    sim_table = raw.get("simulator", {})
    if isinstance(sim_table, str):
        sim_table = {"name": sim_table}
    sim_name = sim_table.get("name", "gaussian_diag")
    sim_params = {k: v for k, v in sim_table.items() if k != "name"}
    check(
        sim_name in ("torus", "eggbox", "rotated_eggbox", "gaussian_diag"),
        f"simulator.name: unknown simulator {sim_name!r}",
    )

    seed = raw.get("seed", 0)
    check(isinstance(seed, int) and seed >= 0, f"seed: must be a non-negative integer, got {seed!r}")

    tmnre_raw = dict(raw.get("tmnre", {}))
    train_raw = dict(raw.get("train", {}))
    for key in tmnre_raw:
        check(key in _TMNRE_KEYS, f"tmnre.{key}: unknown key")
    for key in train_raw:
        check(key in _TRAIN_KEYS, f"train.{key}: unknown key")
    eps = tmnre_raw.get("epsilon")
    if eps is not None:
        check(0 < eps < 1, f"tmnre.epsilon: must be in (0, 1), got {eps}")
    beta = tmnre_raw.get("beta")
    if beta is not None:
        check(0 < beta <= 1, f"tmnre.beta: must be in (0, 1], got {beta}")
    for key in ("budget", "max_rounds", "grid_size"):
        val = tmnre_raw.get(key)
        if val is not None:
            check(isinstance(val, int) and val >= 1, f"tmnre.{key}: must be a positive integer, got {val!r}")

    x_o = raw.get("x_o", "noiseless")
    if not isinstance(x_o, str):
        check(
            isinstance(x_o, list) and all(isinstance(v, (int, float)) for v in x_o),
            f"x_o: must be a number list or 'noiseless', got {x_o!r}",
        )
    else:
        check(x_o == "noiseless", f"x_o: string form must be 'noiseless', got {x_o!r}")

    prior_spec = raw.get("prior")
    if prior_spec is not None:
        check(isinstance(prior_spec, list), "prior: must be a list of component tables")

    if errors:
        raise ConfigError(errors)

    defaults = RunConfig()
    for key in sorted(_TMNRE_KEYS - set(tmnre_raw)):
        log.info("config: tmnre.%s not set, using default %r", key, getattr(defaults.tmnre, key))
    for key in sorted(_TRAIN_KEYS - set(train_raw)):
        log.info("config: train.%s not set, using default %r", key, getattr(defaults.tmnre.train, key))

    train_cfg = TrainConfig(**train_raw)
    tmnre_cfg = TmnreConfig(**tmnre_raw, train=train_cfg)
    return RunConfig(
        simulator=sim_name,
        simulator_params=sim_params,
        prior_spec=prior_spec,
        x_o=x_o,
        algorithm=algorithm,
        seed=seed,
        out_dir=raw.get("out_dir", "runs/run"),
        workers=int(raw.get("workers", 1)),
        tmnre=tmnre_cfg,
    )


def write_resolved_config(cfg: RunConfig, run_dir) -> None:
    Path(run_dir, "config.json").write_text(json.dumps(cfg.to_json(), indent=1))
