"""
Duration distributions D(omega) for explicit-duration segments.

Every family lives on d >= 1 (a segment covers at least one frame) and is an
immutable value: `posterior_resample` returns a new instance. Censored final
segments enter the update as lower bounds (D >= bound); they are imputed from
the conditional tail under the current parameters and then treated as
complete, which keeps every update conjugate or enumerable.

Families:
- GeometricDur:     pmf(d) = p (1-p)^(d-1), p is the per-frame end probability
- PoissonDur:       d - 1 ~ Poisson(rate)
- NegBinDur:        d - 1 ~ NegBin(r, p) (failures before the r-th success)
- DelayedGeomDur:   d = wait + g, g ~ Geometric(p) on {1, 2, ...}
"""

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, replace
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import betaln, gammaln, xlog1py
from scipy.stats import nbinom, poisson

from distributions import beta_sample, categorical_sample, gamma_sample
from errors import DegeneratePosteriorError, DomainError, InvalidConfigError, InvalidParameterError

TAIL_COVERAGE = 1.0 - 1e-12
TAIL_CHUNK = 1024
TAIL_MAX = 100_000


def _as_durations(d, minimum: int, what: str):
    arr = np.asarray(d)
    if arr.dtype.kind not in "iu":
        if np.any(arr != np.floor(arr)):
            raise DomainError(f"{what} must be integers, got {d!r}")
        arr = arr.astype(np.int64)
    if np.any(arr < minimum):
        raise DomainError(f"{what} must be >= {minimum}, got {d!r}")
    return arr


class DurationFamily(ABC):
    """Contract shared by every duration family."""
    name = "duration"

    # --- family specific pieces ---------------------------------------------

    @abstractmethod
    def _log_pmf(self, d: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def _log_sf(self, d: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> int:
        pass

    @abstractmethod
    def _resample_complete(self, durations: np.ndarray, rng: np.random.Generator) -> "DurationFamily":
        """Posterior draw given fully observed, sorted durations."""

    @property
    @abstractmethod
    def mean(self) -> float:
        pass

    # --- shared behaviour ---------------------------------------------------

    def log_pmf(self, d):
        """log P(D = d) for d >= 1 (scalar or array)."""
        arr = _as_durations(d, 1, "duration")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._log_pmf(arr)
        return float(out) if np.ndim(out) == 0 else out

    def log_sf(self, d):
        """log P(D > d) for d >= 0 (scalar or array)."""
        arr = _as_durations(d, 0, "survival argument")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(arr == 0, 0.0, self._log_sf(arr))
        return float(out) if np.ndim(out) == 0 else out

    def log_pmf_table(self, d_max: int) -> np.ndarray:
        return self.log_pmf(np.arange(1, d_max + 1))

    def log_sf_table(self, n: int) -> np.ndarray:
        """log_sf(0), ..., log_sf(n)."""
        return self.log_sf(np.arange(0, n + 1))

    def sample_given_at_least(self, bound: int, rng: np.random.Generator) -> int:
        """
        Draw D conditioned on D >= bound by inverse-CDF over the truncated tail.
        Falls back to (bound - 1) + an untruncated draw when the tail is too heavy
        to enumerate.
        """
        if bound <= 1:
            return self.sample(rng)
        log_tail = self.log_sf(bound - 1)
        if not np.isfinite(log_tail):
            raise DegeneratePosteriorError(
                f"{self.name}: no mass at durations >= {bound} under {self.describe()}")
        u = rng.random()
        covered = 0.0
        start = bound
        while start - bound < TAIL_MAX:
            ds = np.arange(start, start + TAIL_CHUNK)
            cum = covered + np.cumsum(np.exp(self.log_pmf(ds) - log_tail))
            if u <= cum[-1]:
                return int(ds[np.searchsorted(cum, u, side="left")])
            if cum[-1] >= TAIL_COVERAGE:
                return int(ds[-1])
            covered = cum[-1]
            start += TAIL_CHUNK
        return int(bound - 1 + self.sample(rng))

    def posterior_resample(self, complete: Iterable[int], censored: Iterable[int],
                           rng: np.random.Generator) -> "DurationFamily":
        """
        Conditional posterior draw of the parameters. `complete` are observed
        durations; `censored` are lower bounds (true duration >= bound).
        """
        complete = sorted(int(d) for d in complete)
        censored = sorted(int(b) for b in censored)
        _as_durations(np.asarray(complete, dtype=np.int64), 1, "complete duration")
        _as_durations(np.asarray(censored, dtype=np.int64), 1, "censored bound")
        imputed = [self.sample_given_at_least(b, rng) for b in censored]
        return self._resample_complete(np.asarray(complete + imputed, dtype=np.int64), rng)

    def sample_prior(self, rng: np.random.Generator) -> "DurationFamily":
        return self._resample_complete(np.empty(0, dtype=np.int64), rng)

    def describe(self) -> str:
        return f"{type(self).__name__}({self.params_dict()})"

    def params_dict(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        out = {"family": self.name}
        for k, v in asdict(self).items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class GeometricDur(DurationFamily):
    """Geometric durations with a Beta(a, b) prior on p."""
    p: float = 0.5
    a: float = 1.0
    b: float = 1.0
    name = "geometric"

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise InvalidParameterError(f"geometric p must be in (0, 1], got {self.p}")

    def _log_pmf(self, d):
        return np.log(self.p) + xlog1py(d - 1, -self.p)

    def _log_sf(self, d):
        return xlog1py(d, -self.p)

    def sample(self, rng):
        return int(rng.geometric(self.p))

    def _resample_complete(self, durations, rng):
        n = durations.shape[0]
        failures = float(np.sum(durations - 1))
        return replace(self, p=beta_sample(self.a + n, self.b + failures, rng))

    @property
    def mean(self):
        return 1.0 / self.p

    def params_dict(self):
        return {"p": self.p}


@dataclass(frozen=True)
class PoissonDur(DurationFamily):
    """Shifted Poisson durations (d - 1 ~ Poisson(rate)) with a Gamma(shape, rate) prior."""
    rate: float = 5.0
    prior_shape: float = 2.0
    prior_rate: float = 0.2
    name = "poisson"

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise InvalidParameterError(f"poisson rate must be > 0, got {self.rate}")

    def _log_pmf(self, d):
        return poisson.logpmf(d - 1, self.rate)

    def _log_sf(self, d):
        return poisson.logsf(d - 1, self.rate)

    def sample(self, rng):
        return int(1 + rng.poisson(self.rate))

    def _resample_complete(self, durations, rng):
        n = durations.shape[0]
        total = float(np.sum(durations - 1))
        return replace(self, rate=gamma_sample(self.prior_shape + total, self.prior_rate + n, rng))

    @property
    def mean(self):
        return 1.0 + self.rate

    def params_dict(self):
        return {"rate": self.rate}


@dataclass(frozen=True)
class NegBinDur(DurationFamily):
    """
    Shifted negative binomial durations. r is enumerated over `r_support`
    under a uniform prior; p has a Beta(a, b) prior and is integrated out
    while r is drawn.
    """
    r: int = 1
    p: float = 0.5
    r_support: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    a: float = 1.0
    b: float = 1.0
    name = "negbin"

    def __post_init__(self):
        if self.r not in self.r_support:
            raise InvalidParameterError(f"negbin r={self.r} not in support {self.r_support}")
        if not (0.0 < self.p <= 1.0):
            raise InvalidParameterError(f"negbin p must be in (0, 1], got {self.p}")

    def _log_pmf(self, d):
        return nbinom.logpmf(d - 1, self.r, self.p)

    def _log_sf(self, d):
        return nbinom.logsf(d - 1, self.r, self.p)

    def sample(self, rng):
        return int(1 + rng.negative_binomial(self.r, self.p))

    def _resample_complete(self, durations, rng):
        k = durations - 1
        n = k.shape[0]
        total = float(np.sum(k))
        rs = np.asarray(self.r_support)
        log_marg = np.array([
            np.sum(gammaln(k + r) - gammaln(r) - gammaln(k + 1))
            + betaln(self.a + n * r, self.b + total) - betaln(self.a, self.b)
            for r in rs
        ])
        r = int(rs[categorical_sample(log_marg, rng)])
        return replace(self, r=r, p=beta_sample(self.a + n * r, self.b + total, rng))

    @property
    def mean(self):
        return 1.0 + self.r * (1.0 - self.p) / self.p

    def params_dict(self):
        return {"r": self.r, "p": self.p}


@dataclass(frozen=True)
class DelayedGeomDur(DurationFamily):
    """
    Delayed geometric durations: wait `wait` frames, then a geometric number
    of frames, so the minimum duration is wait + 1. wait is enumerated over
    `wait_support` under a uniform prior; p has a Beta(a, b) prior.
    """
    wait: int = 0
    p: float = 0.5
    wait_support: Tuple[int, ...] = tuple(range(0, 21))
    a: float = 1.0
    b: float = 1.0
    name = "delayed-geometric"

    def __post_init__(self):
        if self.wait not in self.wait_support:
            raise InvalidParameterError(f"wait={self.wait} not in support")
        if not (0.0 < self.p <= 1.0):
            raise InvalidParameterError(f"delayed-geometric p must be in (0, 1], got {self.p}")

    def _log_pmf(self, d):
        return np.where(d > self.wait, np.log(self.p) + xlog1py(d - self.wait - 1, -self.p), -np.inf)

    def _log_sf(self, d):
        return np.where(d > self.wait, xlog1py(d - self.wait, -self.p), 0.0)

    def sample(self, rng):
        return int(self.wait + rng.geometric(self.p))

    def _resample_complete(self, durations, rng):
        n = durations.shape[0]
        waits = np.asarray(self.wait_support)
        shortest = durations.min() if n else np.inf
        log_marg = np.full(waits.shape[0], -np.inf)
        for idx, w in enumerate(waits):
            if w < shortest:
                log_marg[idx] = betaln(self.a + n, self.b + float(np.sum(durations - w - 1))) \
                    - betaln(self.a, self.b)
        if not np.any(np.isfinite(log_marg)):
            raise DegeneratePosteriorError(
                f"no wait in {self.wait_support} is compatible with a duration of {int(shortest)}")
        w = int(waits[categorical_sample(log_marg, rng)])
        failures = float(np.sum(durations - w - 1))
        return replace(self, wait=w, p=beta_sample(self.a + n, self.b + failures, rng))

    @property
    def mean(self):
        return self.wait + 1.0 / self.p

    def params_dict(self):
        return {"wait": self.wait, "p": self.p}


DURATION_FAMILIES = {
    "geometric": GeometricDur,
    "poisson": PoissonDur,
    "negbin": NegBinDur,
    "delayed-geometric": DelayedGeomDur,
}


def make_duration_family(kind: str, **prior) -> DurationFamily:
    """
    Template family for `kind` carrying the prior hyperparameters. Parameters
    are placeholders until `sample_prior` or `posterior_resample` is called.
    """
    if kind not in DURATION_FAMILIES:
        raise InvalidConfigError(
            f"unknown duration family '{kind}' (expected one of {', '.join(DURATION_FAMILIES)})")
    prior = {k: v for k, v in prior.items() if v is not None}
    try:
        if kind == "negbin":
            support = tuple(int(r) for r in prior.pop("r_support", (1, 2, 3, 4, 5, 6)))
            if not support or min(support) < 1:
                raise InvalidConfigError("negbin r support must be non-empty positive integers")
            return NegBinDur(r=support[0], r_support=support, **prior)
        if kind == "delayed-geometric":
            support = tuple(int(w) for w in prior.pop("wait_support", range(0, 21)))
            if not support or min(support) < 0:
                raise InvalidConfigError("wait support must be non-empty non-negative integers")
            return DelayedGeomDur(wait=support[0], wait_support=support, **prior)
        return DURATION_FAMILIES[kind](**prior)
    except TypeError as e:
        raise InvalidConfigError(f"bad prior settings for {kind} durations: {e}")


def durations_from_dict(spec: dict) -> DurationFamily:
    """Inverse of `DurationFamily.to_dict`."""
    spec = dict(spec)
    cls = DURATION_FAMILIES[spec.pop("family")]
    for key in ("r_support", "wait_support"):
        if key in spec:
            spec[key] = tuple(spec[key])
    return cls(**spec)
