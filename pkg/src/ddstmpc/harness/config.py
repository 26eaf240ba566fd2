"""Experiment configuration: JSON schema, validation and the reference setup.

Schema (``schema_version`` 1)::

    {
      "schema_version": 1,
      "seed": 0,
      "plant": {"A": [[..]], "B": [[..]],
                "X": {"lower": [..], "upper": [..]} | {"C": [[..]], "d": [..]},
                "U": same as X,
                "W": {"center": [..], "generators": [[..], ..]}},
      "data": {"num_trajectories": 2, "samples": 10,
               "init_lower": [..], "init_upper": [..], "max_retries": 100},
      "identification": {"max_generators": 8},
      "offline": {"levels": 15, "template_policy": "preimage", "weights": null,
                  "terminal": {"kind": "ellipse", "scale": 0.6, "generators": 6},
                  "oracle_levels": 5},
      "online": {"x0": [..], "horizon": 30, "R": [[..]], "terminal_mode": "qp_level1",
                 "K": null, "disturbance": "uniform"},
      "audit": {"runs": 50, "compare": true}
    }

Zonotope generators are listed as vectors (columns of G).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..rosc import TEMPLATE_POLICIES
from ..setgeom import HPolytope, Zonotope

SCHEMA_VERSION = 1
TERMINAL_KINDS = ("ellipse", "box")
DISTURBANCE_MODES = ("uniform", "vertex", "zero")


class ConfigError(ValueError):
    pass


def _matrix(value, name, ndim=2):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{name}: not numeric") from err
    if ndim == 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != ndim or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: expected a finite {ndim}-d array")
    return arr


def _polytope(value, name) -> HPolytope:
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    try:
        if "lower" in value:
            return HPolytope.box(value["lower"], value["upper"])
        return HPolytope(_matrix(value["C"], f"{name}.C"), _matrix(value["d"], f"{name}.d", 1))
    except (KeyError, ValueError) as err:
        raise ConfigError(f"{name}: {err}") from err


def _polytope_dict(P: HPolytope) -> dict:
    """Boxes are written back as bounds, anything else as rows."""
    n = P.dim
    if P.num_rows == 2 * n and np.array_equal(P.C, HPolytope.box(np.zeros(n), np.ones(n)).C):
        return {"lower": (-P.d[n:]).tolist(), "upper": P.d[:n].tolist()}
    return P.to_dict()


@dataclass(frozen=True)
class PlantConfig:
    A: np.ndarray
    B: np.ndarray
    X: HPolytope
    U: HPolytope
    W: Zonotope
    seed: int = 0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        B = B[:, None] if B.ndim == 1 else B
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n:
            raise ConfigError("A must be n x n and B must have n rows")
        if self.X.dim != n or self.W.dim != n:
            raise ConfigError("X and W must live in the state space")
        if self.U.dim != B.shape[1]:
            raise ConfigError("U must live in the input space")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "X": _polytope_dict(self.X),
                "U": _polytope_dict(self.U), "W": self.W.to_dict()}


@dataclass(frozen=True)
class DataConfig:
    num_trajectories: int = 2
    samples: int = 10
    init_lower: Optional[list] = None  # default: half of the X bounding box
    init_upper: Optional[list] = None
    max_retries: int = 100


@dataclass(frozen=True)
class TerminalConfig:
    kind: str = "ellipse"
    scale: float = 0.6
    generators: int = 6


@dataclass(frozen=True)
class OfflineConfig:
    levels: int = 15
    template_policy: str = "preimage"
    weights: Optional[list] = None
    terminal: TerminalConfig = field(default_factory=TerminalConfig)
    oracle_levels: int = 5


@dataclass(frozen=True)
class OnlineConfig:
    x0: list = field(default_factory=lambda: [-2.0, 1.1])
    horizon: int = 30
    R: list = field(default_factory=lambda: [[1.0]])
    terminal_mode: str = "qp_level1"
    K: Optional[list] = None
    disturbance: str = "uniform"


@dataclass(frozen=True)
class AuditConfig:
    runs: int = 50
    compare: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantConfig
    data: DataConfig = field(default_factory=DataConfig)
    max_generators: int = 8
    offline: OfflineConfig = field(default_factory=OfflineConfig)
    online: OnlineConfig = field(default_factory=OnlineConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)

    def __post_init__(self):
        self.validate()

    @property
    def seed(self) -> int:
        return self.plant.seed

    def validate(self) -> None:
        n, m = self.plant.state_dim, self.plant.input_dim
        counts = {
            "data.num_trajectories": self.data.num_trajectories,
            "data.samples": self.data.samples,
            "data.max_retries": self.data.max_retries,
            "identification.max_generators": self.max_generators,
            "offline.levels": self.offline.levels,
            "offline.oracle_levels": self.offline.oracle_levels,
            "offline.terminal.generators": self.offline.terminal.generators,
            "online.horizon": self.online.horizon,
            "audit.runs": self.audit.runs,
        }
        for name, value in counts.items():
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.offline.template_policy not in TEMPLATE_POLICIES:
            raise ConfigError(f"offline.template_policy must be one of {TEMPLATE_POLICIES}")
        if self.offline.terminal.kind not in TERMINAL_KINDS:
            raise ConfigError(f"offline.terminal.kind must be one of {TERMINAL_KINDS}")
        if not self.offline.terminal.scale > 0:
            raise ConfigError("offline.terminal.scale must be positive")
        if self.online.disturbance not in DISTURBANCE_MODES:
            raise ConfigError(f"online.disturbance must be one of {DISTURBANCE_MODES}")
        if self.online.terminal_mode not in ("gain", "qp_level1"):
            raise ConfigError("online.terminal_mode must be 'gain' or 'qp_level1'")
        x0 = _matrix(self.online.x0, "online.x0", 1)
        if x0.shape != (n,):
            raise ConfigError(f"online.x0 must have {n} entries")
        R = _matrix(self.online.R, "online.R")
        if R.shape != (m, m) or not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ConfigError("online.R must be symmetric positive definite")
        if self.online.K is not None:
            K = _matrix(self.online.K, "online.K")
            if K.shape != (m, n):
                raise ConfigError(f"online.K must be {m}x{n}")
            rho = np.abs(np.linalg.eigvals(self.plant.A - self.plant.B @ K)).max()
            if rho >= 1:
                raise ConfigError(f"A - B K is not Schur stable (spectral radius {rho:.4f})")
        elif self.online.terminal_mode == "gain":
            raise ConfigError("online.terminal_mode 'gain' needs online.K")
        if self.offline.weights is not None and len(self.offline.weights) == 0:
            raise ConfigError("offline.weights must be null or non-empty")
        for key in ("init_lower", "init_upper"):
            value = getattr(self.data, key)
            if value is not None and _matrix(value, f"data.{key}", 1).shape != (n,):
                raise ConfigError(f"data.{key} must have {n} entries")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "plant": self.plant.to_dict(),
            "data": asdict(self.data),
            "identification": {"max_generators": self.max_generators},
            "offline": asdict(self.offline),
            "online": asdict(self.online),
            "audit": asdict(self.audit),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            p = raw["plant"]
            W = p["W"]
            if not isinstance(W, dict):
                raise ConfigError("plant.W: expected an object")
            plant = PlantConfig(
                A=_matrix(p["A"], "plant.A"),
                B=_matrix(p["B"], "plant.B"),
                X=_polytope(p["X"], "plant.X"),
                U=_polytope(p["U"], "plant.U"),
                W=Zonotope.from_dict(W),
                seed=int(raw.get("seed", 0)),
            )
            offline = dict(raw.get("offline", {}))
            terminal = TerminalConfig(**offline.pop("terminal", {}))
            return cls(
                plant=plant,
                data=DataConfig(**raw.get("data", {})),
                max_generators=raw.get("identification", {}).get("max_generators", 8),
                offline=OfflineConfig(terminal=terminal, **offline),
                online=OnlineConfig(**raw.get("online", {})),
                audit=AuditConfig(**raw.get("audit", {})),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid config: {err!r}") from err

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, plant=replace(self.plant, seed=int(seed)))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file is not valid JSON: {err}") from err
    return ExperimentConfig.from_dict(raw)


def reference_config(seed: int = 0) -> ExperimentConfig:
    """Second-order plant with |x_i| <= 10, |u| <= 3 and a 0.005 disturbance box."""
    plant = PlantConfig(
        A=np.array([[0.7969, -0.2247], [0.1798, 0.9767]]),
        B=np.array([[0.1271], [0.0132]]),
        X=HPolytope.box([-10.0, -10.0], [10.0, 10.0]),
        U=HPolytope.box([-3.0], [3.0]),
        W=Zonotope(np.zeros(2), 0.005 * np.eye(2)),
        seed=seed,
    )
    return ExperimentConfig(plant=plant)
