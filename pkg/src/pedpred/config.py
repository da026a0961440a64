"""Run configuration with lossless JSON round-tripping.

Precedence: command-line flags override config file values, which
override the defaults below.
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidDocument


@dataclass
class RunConfig:
    # map and shared model rate
    map: str = "builtin:intersection"
    t_s: float = 0.1
    seed: int = 0
    method: str = "both"  # lqr | rl | both

    # belief predictor
    q: float = 0.02
    r: float = 1.0
    process_noise: list | None = None  # 4 diagonal entries or 16 row-major
    d: float = 0.5  # switch distance for edges that do not carry one
    horizon: int = 200
    max_branches: int = 64
    allow_uturn: bool = False
    dare_tol: float = 1e-10
    dare_max_iter: int = 10000

    # grid baseline
    cell_size: float = 0.2
    gamma: float = 0.99
    alpha: float = 100.0
    reward_road: float = -3.0
    reward_sidewalk: float = -1.0
    reward_crosswalk: float = -1.0
    reward_goal: float = 0.0
    n_samples: int = 100
    sidewalk_width: float = 2.0
    crosswalk_width: float = 3.0
    margin: float = 2.0
    vi_tol: float = 1e-6

    # evaluation and benchmark
    taus: list = field(default_factory=lambda: [50, 100, 150, 200])
    stride: int = 1
    smooth_window: int = 5
    iterations: int = 1000
    rl_iterations: int | None = None  # None: iterations // 50, at least 3

    # synthesis
    n_trajectories: int = 46
    n_crossing: int = 29
    noise_scale: float = 1.0
    duration: float = 22.0
    sensor_hz: float = 52.0

    def replace(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **overrides)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidDocument(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=1)
            handle.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def resolved_process_noise(self):
        """None (predictor default) or a (4, 4) covariance."""
        if self.process_noise is None:
            return None
        values = np.asarray(self.process_noise, dtype=float).ravel()
        if values.size == 4:
            return np.diag(values)
        if values.size == 16:
            return values.reshape(4, 4)
        raise InvalidDocument("process_noise must have 4 or 16 entries")

    def effective_rl_iterations(self):
        if self.rl_iterations is not None:
            return max(1, int(self.rl_iterations))
        return max(3, self.iterations // 50)
