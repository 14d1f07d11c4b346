"""
Run configuration: defaults, JSON settings files and validated run configs.

Settings travel as plain nested dicts (what lives in settings.json and what
the CLI writes next to its outputs). `RunConfig.from_settings` validates a
dict before any compute happens.
"""

import copy
import json
import os
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from durations import DurationFamily, make_duration_family
from errors import InvalidConfigError
from observations import make_observation_family

MODELS = ("hdp-hsmm-weak-limit", "hdp-hsmm-direct", "hdp-hmm-equivalent")
THREADS_ENV = "HSMM_NPB_THREADS"

DEFAULT_SETTINGS = {
    "model": "hdp-hsmm-weak-limit",
    "duration": {
        "family": "poisson",
        "a": None,
        "b": None,
        "prior_shape": None,
        "prior_rate": None,
        "r_support": None,
        "wait_support": None,
    },
    "observation": {
        "emission": "gaussian",
        "components": 2,
        "weight_concentration": 1.0,
        "niw": {"mean": None, "scale": None, "dof": None, "scatter": None},
    },
    "sampler": {
        "L": 10,
        "d_max": None,  # None = exact messages (d_max = T)
        "gamma": 1.0,
        "alpha": 1.0,
        "init": "kmeans",  # or "blocks": uniform blocks of init_segment_length frames
        "init_segment_length": 25,
        "censoring": True,
    },
    "chains": 1,
    "iterations": 100,
    "seed": 0,
    "dataset": None,
    "output": None,
    "sequence": None,  # pin every chain to one sequence; None = chain c fits sequence c mod n
    "used_state_threshold": 0.01,
    "verbose": False,
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NIWOverrides(_Strict):
    mean: Optional[List[float]] = None
    scale: Optional[float] = Field(default=None, gt=0)
    dof: Optional[float] = Field(default=None, gt=0)
    scatter: Optional[List[List[float]]] = None

    def check_dim(self, dim: int):
        """Overrides that cannot work with `dim`-dimensional frames raise InvalidConfigError."""
        problems = []
        if self.dof is not None and self.dof <= dim - 1:
            problems.append(f"observation.niw.dof: must exceed dim - 1 = {dim - 1}, got {self.dof}")
        if self.mean is not None and len(self.mean) != dim:
            problems.append(f"observation.niw.mean: expected {dim} entries, got {len(self.mean)}")
        if self.scatter is not None and (len(self.scatter) != dim or any(len(r) != dim for r in self.scatter)):
            problems.append(f"observation.niw.scatter: expected a {dim} x {dim} matrix")
        if problems:
            raise InvalidConfigError("invalid config: " + "; ".join(problems))


class DurationConfig(_Strict):
    family: Literal["geometric", "poisson", "negbin", "delayed-geometric"] = "poisson"
    a: Optional[float] = Field(default=None, gt=0)
    b: Optional[float] = Field(default=None, gt=0)
    prior_shape: Optional[float] = Field(default=None, gt=0)
    prior_rate: Optional[float] = Field(default=None, gt=0)
    r_support: Optional[List[int]] = None
    wait_support: Optional[List[int]] = None

    def build(self, family: Optional[str] = None) -> DurationFamily:
        """Prior template for this family (or `family`, when a model forces one)."""
        kind = family or self.family
        prior = {"a": self.a, "b": self.b}
        if kind == "poisson":
            prior = {"prior_shape": self.prior_shape, "prior_rate": self.prior_rate}
        elif kind == "negbin":
            prior["r_support"] = self.r_support
        elif kind == "delayed-geometric":
            prior["wait_support"] = self.wait_support
        return make_duration_family(kind, **prior)


class ObservationConfig(_Strict):
    emission: Literal["gaussian", "mixture"] = "gaussian"
    components: int = Field(default=2, ge=1)
    weight_concentration: float = Field(default=1.0, gt=0)
    niw: NIWOverrides = NIWOverrides()

    def build(self, data):
        if data is not None:
            X = np.asarray(data, dtype=np.float64)
            self.niw.check_dim(1 if X.ndim == 1 else X.shape[1])
        return make_observation_family(self.emission, data, components=self.components,
                                       weight_concentration=self.weight_concentration,
                                       niw=self.niw.model_dump())


class SamplerConfig(_Strict):
    L: int = Field(default=10, ge=2)
    d_max: Optional[int] = Field(default=None, ge=1)
    gamma: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=1.0, gt=0)
    init: Literal["kmeans", "blocks"] = "kmeans"
    init_segment_length: int = Field(default=25, ge=1)
    censoring: bool = True


class RunConfig(_Strict):
    model: Literal["hdp-hsmm-weak-limit", "hdp-hsmm-direct", "hdp-hmm-equivalent"] = "hdp-hsmm-weak-limit"
    duration: DurationConfig = DurationConfig()
    observation: ObservationConfig = ObservationConfig()
    sampler: SamplerConfig = SamplerConfig()
    chains: int = Field(default=1, ge=1)
    iterations: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    dataset: Optional[str] = None
    output: Optional[str] = None
    sequence: Optional[int] = Field(default=None, ge=0)
    used_state_threshold: float = Field(default=0.01, ge=0.0, lt=1.0)
    verbose: bool = False

    @classmethod
    def from_settings(cls, settings: dict) -> "RunConfig":
        try:
            config = cls.model_validate(settings)
        except ValidationError as e:
            raise InvalidConfigError(_describe(e))
        if config.model == "hdp-hsmm-direct" and config.observation.emission != "gaussian":
            raise InvalidConfigError("the direct-assignment sampler needs gaussian emissions")
        return config

    def duration_template(self) -> DurationFamily:
        """The HDP-HMM equivalent is the HSMM with geometric durations."""
        if self.model == "hdp-hmm-equivalent":
            return self.duration.build("geometric")
        return self.duration.build()

    def to_settings(self) -> dict:
        return self.model_dump(mode="json")


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{where}: {item['msg']}")
    return "invalid config: " + "; ".join(parts)


def merge_settings(base: dict, loaded: dict) -> dict:
    """Key-wise merge of `loaded` over `base`; nested blocks merge recursively."""
    merged = copy.deepcopy(base)
    for k, v in loaded.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = merge_settings(merged[k], v)
        else:
            merged[k] = v
    return merged


def load_settings(path=None) -> dict:
    """Defaults merged with the JSON file at `path` (defaults alone when path is None)."""
    settings = copy.deepcopy(DEFAULT_SETTINGS)
    if path is None:
        return settings
    path = Path(path)
    if not path.exists():
        raise InvalidConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            loaded = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(loaded, dict):
        raise InvalidConfigError(f"config file {path} must hold a JSON object")
    return merge_settings(settings, loaded)


def save_settings(settings: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(settings, f, indent=4)
    return path


def apply_overrides(settings: dict, overrides: dict, skip_none: bool = True) -> dict:
    """
    Set dotted keys (e.g. "sampler.L"); returns a new dict. None values are
    skipped unless `skip_none` is False.
    """
    out = copy.deepcopy(settings)
    for dotted, value in overrides.items():
        if value is None and skip_none:
            continue
        node = out
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise InvalidConfigError(f"cannot set {dotted}: {p} is not a settings block")
        node[leaf] = value
    return out


def worker_count() -> int:
    """Chain worker pool size: HSMM_NPB_THREADS if set, else the CPU count."""
    raw = os.getenv(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise InvalidConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n
