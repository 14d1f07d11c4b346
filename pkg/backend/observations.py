"""
Emission families: per-frame log-likelihood, conjugate parameter resampling,
and (for plain Gaussians) the marginal block likelihood used by the
direct-assignment sampler.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from distributions import (
    GaussianParams,
    NIWParams,
    default_niw_prior,
    dirichlet_sample,
    niw_marginal_loglike,
    niw_posterior,
    niw_sample,
)
from errors import InvalidConfigError, InvalidParameterError


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Per-state Gaussian mixture: component weights and components."""
    weights: np.ndarray
    components: Tuple[GaussianParams, ...]

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def component_loglikes(self, X: np.ndarray) -> np.ndarray:
        """(n, K) table of log w_k + log N(x | theta_k)."""
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return np.column_stack([c.log_likelihood(X) for c in self.components]) + log_w

    def log_likelihood(self, X: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_loglikes(X), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        which = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, comp in enumerate(self.components):
            idx = np.flatnonzero(which == k)
            if idx.size:
                out[idx] = comp.sample(idx.size, rng)
        return out

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "components": [c.to_dict() for c in self.components]}


class GaussianObservation:
    """Gaussian emissions with a conjugate NIW prior."""
    name = "gaussian"
    supports_marginal = True

    def __init__(self, prior: NIWParams):
        self.prior = prior

    @property
    def dim(self) -> int:
        return self.prior.dim

    def log_likelihood(self, params: GaussianParams, X: np.ndarray) -> np.ndarray:
        return params.log_likelihood(X)

    def sample_prior(self, rng: np.random.Generator) -> GaussianParams:
        return niw_sample(self.prior, rng)

    def resample(self, X: np.ndarray, rng: np.random.Generator,
                 current: Optional[GaussianParams] = None) -> GaussianParams:
        """Draw from the NIW posterior given the frames X assigned to a state."""
        return niw_sample(niw_posterior(self.prior, X), rng)

    def marginal_loglike(self, X: np.ndarray, prior: Optional[NIWParams] = None) -> float:
        return niw_marginal_loglike(self.prior if prior is None else prior, X)

    def sample_frames(self, params: GaussianParams, n: int, rng: np.random.Generator) -> np.ndarray:
        return params.sample(n, rng)


class GaussianMixtureObservation:
    """
    Each state emits from its own mixture of `components` Gaussians. The
    components share the NIW prior; weights get a symmetric Dirichlet prior.
    Inference augments every frame with a component indicator.
    """
    name = "mixture"
    supports_marginal = False

    def __init__(self, prior: NIWParams, components: int = 2, weight_concentration: float = 1.0):
        if components < 1:
            raise InvalidParameterError(f"mixture needs >= 1 component, got {components}")
        if weight_concentration <= 0:
            raise InvalidParameterError("mixture weight concentration must be > 0")
        self.prior = prior
        self.components = components
        self.weight_concentration = weight_concentration

    @property
    def dim(self) -> int:
        return self.prior.dim

    def log_likelihood(self, params: MixtureParams, X: np.ndarray) -> np.ndarray:
        return params.log_likelihood(X)

    def sample_prior(self, rng: np.random.Generator) -> MixtureParams:
        weights = dirichlet_sample(np.full(self.components, self.weight_concentration), rng)
        comps = tuple(niw_sample(self.prior, rng) for _ in range(self.components))
        return MixtureParams(weights=weights, components=comps)

    def sample_indicators(self, params: MixtureParams, X: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
        """Component indicator per frame, drawn from its responsibility."""
        logits = params.component_loglikes(X)
        logits -= logits.max(axis=1, keepdims=True)
        cum = np.cumsum(np.exp(logits), axis=1)
        u = rng.random(X.shape[0]) * cum[:, -1]
        return np.minimum((cum <= u[:, None]).sum(axis=1), self.components - 1)

    def resample(self, X: np.ndarray, rng: np.random.Generator,
                 current: Optional[MixtureParams] = None) -> MixtureParams:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        if current is None:
            current = self.sample_prior(rng)
        if X.shape[0] == 0:
            return self.sample_prior(rng)
        z = self.sample_indicators(current, X, rng)
        counts = np.bincount(z, minlength=self.components)
        weights = dirichlet_sample(self.weight_concentration + counts, rng)
        comps = tuple(niw_sample(niw_posterior(self.prior, X[z == k]), rng)
                      for k in range(self.components))
        return MixtureParams(weights=weights, components=comps)

    def marginal_loglike(self, X: np.ndarray, prior: Optional[NIWParams] = None) -> float:
        raise InvalidConfigError("mixture emissions have no closed-form block marginal; "
                                 "use gaussian emissions with the direct-assignment sampler")

    def sample_frames(self, params: MixtureParams, n: int, rng: np.random.Generator) -> np.ndarray:
        return params.sample(n, rng)


def make_observation_family(kind: str, data: np.ndarray, components: int = 2,
                            weight_concentration: float = 1.0, niw: Optional[dict] = None):
    """
    Build an emission family. The NIW prior defaults to `default_niw_prior(data)`;
    any of mean / scale / dof / scatter in `niw` overrides the default.
    """
    niw = niw or {}
    if data is None:
        if niw.get("mean") is None or niw.get("scatter") is None:
            raise InvalidConfigError("without data the NIW prior needs explicit mean and scatter")
        X = np.atleast_2d(np.asarray(niw["mean"], dtype=np.float64))
    else:
        X = np.asarray(data, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
    base = default_niw_prior(X, scale=niw.get("scale") or 0.1, dof=niw.get("dof"))
    prior = NIWParams(
        mean=niw["mean"] if niw.get("mean") is not None else base.mean,
        scale=base.scale,
        dof=base.dof,
        scatter=niw["scatter"] if niw.get("scatter") is not None else base.scatter,
    )
    if kind == "gaussian":
        return GaussianObservation(prior)
    if kind == "mixture":
        return GaussianMixtureObservation(prior, components=components,
                                          weight_concentration=weight_concentration)
    raise InvalidConfigError(f"unknown emission family '{kind}' (expected gaussian or mixture)")
