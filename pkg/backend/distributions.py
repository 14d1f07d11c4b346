"""
Conjugate distribution primitives shared by every sampler.

Everything here is a pure function of its arguments and a numpy Generator:
the same parameters and the same generator state always give the same draw.

Probability vectors are plain 1-D float arrays; `check_prob_vector` enforces
the simplex invariant where a caller hands one in from outside.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import logsumexp, multigammaln
from scipy.stats import invwishart

from errors import EmptySupportError, InvalidParameterError

SIMPLEX_TOL = 1e-12
PD_JITTER = 1e-8
LOG_2PI = np.log(2.0 * np.pi)

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]


# =============================================================================
# Positive-definite helpers
# =============================================================================

def checked_cholesky(matrix: np.ndarray, what: str = "matrix") -> tuple:
    """
    Lower Cholesky factor of a symmetric PD matrix.

    A matrix that fails factorization but is within PD_JITTER of PD (smallest
    eigenvalue >= -PD_JITTER) is jittered by PD_JITTER * I once. Anything else
    is rejected. Returns (possibly repaired matrix, cholesky factor).
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidParameterError(f"{what} must be square, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidParameterError(f"{what} has non-finite entries")
    if not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-12):
        raise InvalidParameterError(f"{what} is not symmetric")
    matrix = 0.5 * (matrix + matrix.T)
    try:
        return matrix, np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        pass
    if np.linalg.eigvalsh(matrix).min() < -PD_JITTER:
        raise InvalidParameterError(f"{what} is not positive definite")
    repaired = matrix + PD_JITTER * np.eye(matrix.shape[0])
    try:
        return repaired, np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError:
        raise InvalidParameterError(f"{what} is not positive definite (jitter failed)")


def _logdet_from_cholesky(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


# =============================================================================
# Parameter types
# =============================================================================

@dataclass(frozen=True, eq=False)
class NIWParams:
    """Normal-Inverse-Wishart hyperparameters (mean, scale, dof, scatter)."""
    mean: np.ndarray
    scale: float
    dof: float
    scatter: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        dim = mean.shape[0]
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise InvalidParameterError("NIW mean must be a finite vector")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidParameterError(f"NIW scale must be > 0, got {self.scale}")
        if not (np.isfinite(self.dof) and self.dof > dim - 1):
            raise InvalidParameterError(f"NIW dof must be > dim - 1 = {dim - 1}, got {self.dof}")
        scatter, chol = checked_cholesky(self.scatter, "NIW scatter")
        if scatter.shape != (dim, dim):
            raise InvalidParameterError(f"NIW scatter shape {scatter.shape} does not match dim {dim}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "scatter", scatter)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def logdet_scatter(self) -> float:
        return _logdet_from_cholesky(self._chol)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale,
            "dof": self.dof,
            "scatter": self.scatter.tolist(),
        }


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean and covariance of a multivariate Gaussian emission."""
    mean: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        covariance, chol = checked_cholesky(self.covariance, "Gaussian covariance")
        if covariance.shape != (mean.shape[0], mean.shape[0]):
            raise InvalidParameterError("Gaussian mean and covariance dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_likelihood(self, X: np.ndarray) -> np.ndarray:
        """Per-row log density of X (n x dim)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        diff = (X - self.mean).T
        z = linalg.solve_triangular(self._chol, diff, lower=True, check_finite=False)
        maha = np.sum(z * z, axis=0)
        return -0.5 * (self.dim * LOG_2PI + _logdet_from_cholesky(self._chol) + maha)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}


# =============================================================================
# Probability vectors
# =============================================================================

def check_prob_vector(weights: ArrayLike) -> np.ndarray:
    """Validate the simplex invariant and return the weights as an array."""
    w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if w.ndim != 1 or w.shape[0] < 1:
        raise InvalidParameterError("probability vector must be 1-D and non-empty")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidParameterError("probability vector entries must be finite and >= 0")
    if abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidParameterError(f"probability vector sums to {w.sum()!r}, not 1")
    return w


def dirichlet_sample(alpha: ArrayLike, rng: np.random.Generator) -> np.ndarray:
    """
    Draw from Dirichlet(alpha).

    Gamma variates are drawn in log space (G = G' * U^(1/a) with G' ~ Gamma(a+1))
    so that very small concentrations like gamma/L do not underflow to an
    all-zero vector.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    if alpha.ndim != 1 or alpha.shape[0] < 1:
        raise InvalidParameterError("Dirichlet concentration must be a non-empty vector")
    if np.any(~np.isfinite(alpha)) or np.any(alpha <= 0):
        raise InvalidParameterError(f"Dirichlet concentration must be finite and > 0, got {alpha}")
    if alpha.shape[0] == 1:
        return np.ones(1)
    log_g = np.log(rng.gamma(alpha + 1.0)) + np.log(rng.random(alpha.shape[0])) / alpha
    w = np.exp(log_g - logsumexp(log_g))
    # keep every weight strictly positive so it can seed another Dirichlet
    w = np.maximum(w, np.finfo(np.float64).tiny)
    return w / w.sum()


def gem_sample(gamma: float, K: int, rng: np.random.Generator) -> np.ndarray:
    """
    Truncated stick-breaking draw: K stick weights followed by the remainder
    mass, so the returned vector has length K + 1 and sums to one.
    """
    if not (np.isfinite(gamma) and gamma > 0):
        raise InvalidParameterError(f"GEM concentration must be > 0, got {gamma}")
    weights = np.empty(K + 1)
    remaining = 1.0
    for k in range(K):
        b = beta_sample(1.0, gamma, rng)
        weights[k] = remaining * b
        remaining *= 1.0 - b
    weights[K] = remaining
    return weights / weights.sum()


def categorical_sample(logits: ArrayLike, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to exp(logits)."""
    logits = np.atleast_1d(np.asarray(logits, dtype=np.float64))
    if np.any(np.isnan(logits)):
        raise InvalidParameterError("categorical logits contain NaN")
    top = logits.max()
    if not np.isfinite(top):
        if top == np.inf:
            raise InvalidParameterError("categorical logits contain +inf")
        raise EmptySupportError("all categorical logits are -inf")
    cum = np.cumsum(np.exp(logits - top))
    u = rng.random() * cum[-1]
    return int(min(np.searchsorted(cum, u, side="right"), logits.shape[0] - 1))


def beta_sample(a: float, b: float, rng: np.random.Generator) -> float:
    """Beta(a, b) draw kept strictly inside (0, 1)."""
    if not (np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0):
        raise InvalidParameterError(f"Beta parameters must be > 0, got ({a}, {b})")
    x = rng.beta(a, b)
    return float(np.clip(x, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg))


def gamma_sample(shape: float, rate: float, rng: np.random.Generator) -> float:
    """Gamma draw parameterized by shape and rate."""
    if not (np.isfinite(shape) and np.isfinite(rate) and shape > 0 and rate > 0):
        raise InvalidParameterError(f"Gamma parameters must be > 0, got ({shape}, {rate})")
    return float(max(rng.gamma(shape, 1.0 / rate), np.finfo(np.float64).tiny))


# =============================================================================
# Normal-Inverse-Wishart
# =============================================================================

def _as_data(prior: NIWParams, data) -> np.ndarray:
    if data is None:
        return np.empty((0, prior.dim))
    X = np.asarray(data, dtype=np.float64)
    if X.size == 0:
        return np.empty((0, prior.dim))
    if X.ndim == 1:
        X = X.reshape(-1, 1) if prior.dim == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != prior.dim:
        raise InvalidParameterError(
            f"data dimension {X.shape[-1] if X.ndim else 0} does not match prior dimension {prior.dim}")
    return X


def niw_sample(prior: NIWParams, rng: np.random.Generator) -> GaussianParams:
    """Draw (mean, covariance) from NIW(prior)."""
    covariance = np.atleast_2d(invwishart.rvs(df=prior.dof, scale=prior.scatter, random_state=rng))
    covariance = 0.5 * (covariance + covariance.T)
    _, chol = checked_cholesky(covariance / prior.scale, "sampled covariance")
    mean = prior.mean + chol @ rng.standard_normal(prior.dim)
    return GaussianParams(mean=mean, covariance=covariance)


def niw_posterior_from_stats(prior: NIWParams, n: float, total: np.ndarray,
                             outer: np.ndarray) -> NIWParams:
    """
    Posterior hyperparameters from sufficient statistics: count n, sum of
    vectors `total`, and sum of outer products `outer`.
    """
    if n <= 0:
        return prior
    xbar = total / n
    centered = outer - n * np.outer(xbar, xbar)
    scale_n = prior.scale + n
    mean_n = (prior.scale * prior.mean + total) / scale_n
    delta = xbar - prior.mean
    scatter_n = prior.scatter + centered + (prior.scale * n / scale_n) * np.outer(delta, delta)
    return NIWParams(mean=mean_n, scale=scale_n, dof=prior.dof + n,
                     scatter=0.5 * (scatter_n + scatter_n.T))


def sufficient_stats(X: np.ndarray) -> tuple:
    """(count, sum, sum of outer products) of the rows of X."""
    if X.shape[0] == 0:
        dim = X.shape[1]
        return 0, np.zeros(dim), np.zeros((dim, dim))
    # rows are summed in a canonical order so the result is order independent
    X = X[np.lexsort(X.T[::-1])]
    return X.shape[0], X.sum(axis=0), X.T @ X


def niw_posterior(prior: NIWParams, data) -> NIWParams:
    """Exact conjugate NIW update."""
    X = _as_data(prior, data)
    return niw_posterior_from_stats(prior, *sufficient_stats(X))


def niw_marginal_loglike(prior: NIWParams, data) -> float:
    """log of the marginal likelihood of data with the Gaussian parameters integrated out."""
    X = _as_data(prior, data)
    n, dim = X.shape
    if n == 0:
        return 0.0
    post = niw_posterior(prior, X)
    return float(
        -0.5 * n * dim * np.log(np.pi)
        + multigammaln(0.5 * post.dof, dim) - multigammaln(0.5 * prior.dof, dim)
        + 0.5 * prior.dof * prior.logdet_scatter - 0.5 * post.dof * post.logdet_scatter
        + 0.5 * dim * (np.log(prior.scale) - np.log(post.scale))
    )


def default_niw_prior(data: np.ndarray, scale: float = 0.1, dof: Optional[float] = None) -> NIWParams:
    """
    Weakly informative NIW prior built from the data: mean = empirical mean,
    scale = 0.1, dof = dim + 2, scatter = empirical covariance * dof.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    dim = X.shape[1]
    dof = float(dim + 2) if dof is None else float(dof)
    cov = np.atleast_2d(np.cov(X.T)) if X.shape[0] > 1 else np.eye(dim)
    cov = 0.5 * (cov + cov.T) + PD_JITTER * np.eye(dim)
    return NIWParams(mean=X.mean(axis=0), scale=scale, dof=dof, scatter=cov * dof)
