"""Declarative experiment configuration (JSON file + dotted-key overrides)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .kernels import PotentialParams
from .particles import default_epsilon

__all__ = ["ExperimentConfig", "load_config", "apply_overrides"]


@dataclass
class ExperimentConfig:
    seed: int = 1234
    output_dir: str = "out"
    gamma: float = 0.0
    epsilon: float = None          # None -> scheme default by gamma and N
    scheme: str = "kac"
    n_particles: int = 64
    particle_dt: float = 0.01
    T: float = 0.5
    projection: bool = False
    pde_half_width: float = 6.0
    pde_points: int = 32
    pde_dt: float = None           # None -> 90% of the stability bound
    pde_scheme: str = "euler"
    replicas: int = 8
    checkpoints: list = field(default_factory=lambda: [0.0, 0.5])
    initial: dict = field(default_factory=lambda: {"kind": "gaussian_iso"})
    diagnostics: dict = field(default_factory=lambda: {
        "entropy": True, "fisher": True, "second_fisher": False,
        "dissipation": False, "vf": False,
        "chaos_k": [1], "chaos_phi": ["gauss"], "w2_method": "auto",
    })

    def potential(self, n: int = None) -> PotentialParams:
        eps = self.epsilon
        if eps is None:
            eps = default_epsilon(self.gamma, n if n else self.n_particles)
        return PotentialParams(self.gamma, eps)

    def validate(self):
        if not -3.0 <= self.gamma <= 1.0:
            raise ValueError("gamma out of range [-3, 1]")
        if self.n_particles < 2 or self.replicas < 1:
            raise ValueError("need N >= 2 and replicas >= 1")
        if self.particle_dt <= 0 or self.T <= 0:
            raise ValueError("particle_dt and T must be positive")
        if any(t < 0 or t > self.T + 1e-12 for t in self.checkpoints):
            raise ValueError("checkpoints must lie in [0, T]")
        if self.scheme not in ("kac", "fgm", "nanbu"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.pde_scheme not in ("euler", "rk2"):
            raise ValueError(f"unknown pde scheme {self.pde_scheme!r}")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


def load_config(path: str = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _coerce(current, text):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(text)
    if isinstance(current, float) or current is None:
        return float(text)
    if isinstance(current, (list, dict)):
        return json.loads(text)
    return text


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply ``--set key=value`` pairs; dotted keys reach into dict fields."""
    data = asdict(cfg)
    for pair in pairs or ():
        key, _, text = pair.partition("=")
        if not _:
            raise ValueError(f"override {pair!r} is not key=value")
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target[part]
        leaf = parts[-1]
        if leaf not in target:
            raise ValueError(f"unknown config key {key!r}")
        target[leaf] = _coerce(target[leaf], text)
    return ExperimentConfig.from_dict(data)
