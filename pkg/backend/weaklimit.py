"""
Weak-limit HDP-HSMM Gibbs sampler.

The HDP is replaced by its L-state Dirichlet approximation

    beta  ~ Dir(gamma/L, ..., gamma/L)
    pi_j  ~ Dir(alpha * beta)

so the transition matrix is instantiated and the whole label sequence can be
block sampled through HSMM messages. Self-transitions are outlawed in the
HSMM, which breaks Dirichlet conjugacy for pi_j; each transition out of j is
completed with a geometric number of dummy self-transitions, after which
the usual table-count and Dirichlet updates apply.

One sweep, in this order:
    1. messages + block-sample the segmentation
    2. dummy self-transition counts
    3. tables m, beta, rows pi
    4. observation and duration parameters
"""

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import digamma

from blocksampler import SegmentSequence, sample_segmentation
from distributions import dirichlet_sample
from errors import DegenerateAugmentationError, InvalidConfigError
from genmodel import HSMMParams, generate_hsmm
from messages import (
    backward_messages,
    cum_seg_loglikes,
    frame_loglikes,
    log_kernel_without_self,
    total_loglike,
)

EXACT_CUSTOMERS = 10_000
MAX_DUMMIES = 1e15


@dataclass(frozen=True)
class SweepDiagnostics:
    loglike: float          # log p(y | current parameters) before the segmentation draw
    used_states: int
    num_segments: int


@dataclass(eq=False)
class WeakLimitState:
    L: int
    beta: np.ndarray
    rows: np.ndarray
    obs_params: List
    dur_params: List
    seg: SegmentSequence
    gamma: float
    alpha: float
    obs_family: object
    dur_template: object
    counts: np.ndarray
    tables: np.ndarray
    d_max: Optional[int] = None
    censoring: bool = True
    iteration: int = 0
    diagnostics: Optional[SweepDiagnostics] = field(default=None)

    @property
    def init(self) -> np.ndarray:
        return np.full(self.L, 1.0 / self.L)

    def hsmm_params(self) -> HSMMParams:
        """The current instantiated model as an HSMM (kernel pi~)."""
        return HSMMParams(init=self.init, kernel=np.exp(log_kernel_without_self(self.rows)),
                          durations=tuple(self.dur_params), obs_family=self.obs_family,
                          obs_params=tuple(self.obs_params))

    def to_dict(self) -> dict:
        return {
            "sampler": "weak-limit",
            "iteration": self.iteration,
            "L": self.L,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "beta": self.beta.tolist(),
            "rows": self.rows.tolist(),
            "obs_params": [p.to_dict() for p in self.obs_params],
            "dur_params": [d.to_dict() for d in self.dur_params],
            "seg": self.seg.to_dict(),
        }


def initial_segmentation(T: int, L: int, block: int, rng: np.random.Generator) -> SegmentSequence:
    """Uniform blocks of `block` frames, labels uniform with no adjacent repeats."""
    n_blocks = -(-T // block)
    durations = [block] * (n_blocks - 1) + [T - block * (n_blocks - 1)]
    labels = [int(rng.integers(L))]
    for _ in range(n_blocks - 1):
        k = int(rng.integers(L - 1))
        labels.append(k if k < labels[-1] else k + 1)
    return SegmentSequence(labels=tuple(labels), durations=tuple(durations), censored_last=False)


def kmeans_segmentation(X: np.ndarray, L: int, rng: np.random.Generator) -> SegmentSequence:
    """Runs of equal k-means cluster labels (k = L, or fewer for data with fewer distinct frames)."""
    X = _as_frames(X)
    k = min(L, np.unique(X, axis=0).shape[0])
    if k < 2:
        return SegmentSequence(labels=(0,), durations=(X.shape[0],))
    with warnings.catch_warnings():
        # empty clusters just leave labels unused
        warnings.simplefilter("ignore")
        _, labels = kmeans2(X, k, minit="++", seed=int(rng.integers(2 ** 32)))
    return SegmentSequence.from_frame_labels(labels)


def starting_segmentation(X: np.ndarray, sampler, rng: np.random.Generator) -> SegmentSequence:
    """The segmentation a chain starts from, per `sampler.init` (a SamplerConfig)."""
    if sampler.init == "kmeans":
        return kmeans_segmentation(X, sampler.L, rng)
    return initial_segmentation(_as_frames(X).shape[0], sampler.L, sampler.init_segment_length, rng)


def _prior_draws(L, gamma, alpha, obs_family, dur_template, rng):
    beta = dirichlet_sample(np.full(L, gamma / L), rng)
    rows = np.vstack([dirichlet_sample(alpha * beta, rng) for _ in range(L)])
    obs_params = [obs_family.sample_prior(rng) for _ in range(L)]
    dur_params = [dur_template.sample_prior(rng) for _ in range(L)]
    return beta, rows, obs_params, dur_params


def init_state(config, data: np.ndarray, rng: np.random.Generator,
               obs_family=None, dur_template=None) -> WeakLimitState:
    """
    Fresh chain state. The starting segmentation comes from
    `starting_segmentation`; tables, beta and rows are then updated from its
    transition counts (no dummy self-transitions yet) and observation
    parameters are drawn from their posterior given it. Duration parameters
    stay prior draws. `config` is a RunConfig.
    """
    sampler = config.sampler
    if sampler.L < 2:
        raise InvalidConfigError(f"weak-limit truncation L must be >= 2, got {sampler.L}")
    X = _as_frames(data)
    obs_family = obs_family or config.observation.build(X)
    dur_template = dur_template or config.duration_template()
    L = sampler.L
    beta, rows, obs_params, dur_params = _prior_draws(L, sampler.gamma, sampler.alpha,
                                                      obs_family, dur_template, rng)
    seg = starting_segmentation(X, sampler, rng)
    counts = seg.transition_counts(L)
    tables = sample_tables(counts, sampler.alpha, beta, rng)
    beta = sample_beta(tables, sampler.gamma, rng)
    rows = sample_rows(counts, sampler.alpha, beta, rng)
    obs_params = _resample_obs_params(obs_family, seg, X, obs_params, rng)
    return WeakLimitState(L=L, beta=beta, rows=rows, obs_params=obs_params, dur_params=dur_params,
                          seg=seg, gamma=sampler.gamma, alpha=sampler.alpha,
                          obs_family=obs_family, dur_template=dur_template,
                          counts=counts, tables=tables,
                          d_max=sampler.d_max, censoring=sampler.censoring)


def sample_prior_state(config, T: int, rng: np.random.Generator, obs_family,
                       dur_template=None):
    """
    Joint draw from the weak-limit prior: parameters, then a segmentation and
    T frames of data from the HSMM they define. Returns (state, data).
    """
    sampler = config.sampler
    dur_template = dur_template or config.duration_template()
    L = sampler.L
    beta, rows, obs_params, dur_params = _prior_draws(L, sampler.gamma, sampler.alpha,
                                                      obs_family, dur_template, rng)
    state = WeakLimitState(L=L, beta=beta, rows=rows, obs_params=obs_params, dur_params=dur_params,
                           seg=SegmentSequence(labels=(0,), durations=(T,)),
                           gamma=sampler.gamma, alpha=sampler.alpha,
                           obs_family=obs_family, dur_template=dur_template,
                           counts=np.zeros((L, L), dtype=np.int64),
                           tables=np.zeros((L, L), dtype=np.int64),
                           d_max=sampler.d_max, censoring=sampler.censoring)
    truth, data = generate_hsmm(state.hsmm_params(), T, rng)
    state.seg = truth.seg
    state.counts = truth.seg.transition_counts(L)
    return state, data


def augment_self_transitions(seg: SegmentSequence, rows: np.ndarray,
                             rng: np.random.Generator) -> np.ndarray:
    """
    Super-state transition counts completed with dummy self-transitions: every
    segment with a successor adds G ~ Geometric(1 - pi_jj) - 1 (failures
    before the first success) to n[j, j].
    """
    rows = np.asarray(rows, dtype=np.float64)
    L = rows.shape[0]
    n = seg.transition_counts(L)
    if seg.num_segments < 2:
        return n
    js = np.asarray(seg.labels[:-1], dtype=np.int64)
    stay = rows[js, js]
    leave = np.where(np.eye(L, dtype=bool), 0.0, rows).sum(axis=1)[js]
    if np.any(leave <= 0.0):
        bad = sorted(set(js[leave <= 0.0].tolist()))
        raise DegenerateAugmentationError(f"pi_jj == 1 for states {bad}; cannot leave them")
    np.add.at(n, (js, js), geometric_dummies(stay, leave, rng))
    return n


def geometric_dummies(stay: np.ndarray, leave: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Failures before the first success, one draw per entry, when each trial
    stays with weight `stay` and leaves with weight `leave` (> 0). Capped at
    MAX_DUMMIES.
    """
    stay = np.asarray(stay, dtype=np.float64)
    # floor(E / -log P(stay)) with E ~ Exp(1)
    with np.errstate(divide="ignore"):
        rate = np.log1p(np.asarray(leave, dtype=np.float64) / stay)
    dummies = np.floor(rng.standard_exponential(stay.shape) / rate)
    return np.minimum(dummies, MAX_DUMMIES).astype(np.int64)


def sample_tables(n: np.ndarray, alpha: float, beta: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """
    m[j, k] = number of tables opened by n[j, k] customers in a CRP with mass
    alpha * beta_k. The first EXACT_CUSTOMERS customers are simulated one by
    one; the rest (only reached through large dummy counts) contribute a
    Poisson draw with the matching mean.
    """
    n = np.asarray(n, dtype=np.int64)
    m = np.zeros_like(n)
    conc = alpha * np.asarray(beta, dtype=np.float64)
    for j, k in zip(*np.nonzero(n)):
        c, total = conc[k], int(n[j, k])
        head = min(total, EXACT_CUSTOMERS)
        opened = np.count_nonzero(rng.random(head) < c / (c + np.arange(head)))
        if total > head:
            opened += rng.poisson(c * (digamma(c + total) - digamma(c + head)))
        m[j, k] = min(opened, total)
    return m


def sample_beta(m: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    L = m.shape[1]
    return dirichlet_sample(gamma / L + np.asarray(m).sum(axis=0), rng)


def sample_rows(n: np.ndarray, alpha: float, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.vstack([dirichlet_sample(alpha * beta + n[j], rng) for j in range(n.shape[0])])


def _resample_obs_params(obs_family, seg: SegmentSequence, X: np.ndarray, current: List,
                         rng: np.random.Generator) -> List:
    x = seg.to_frame_labels()
    return [obs_family.resample(X[x == j], rng, current=current[j]) for j in range(len(current))]


def resample_params(state: WeakLimitState, data: np.ndarray, rng: np.random.Generator):
    """New (obs_params, dur_params) given the segmentation; unused states draw from the prior."""
    X = _as_frames(data)
    obs_params = _resample_obs_params(state.obs_family, state.seg, X, state.obs_params, rng)
    dur_params = []
    for j in range(state.L):
        complete, censored = state.seg.durations_for(j)
        dur_params.append(state.dur_params[j].posterior_resample(complete, censored, rng))
    return obs_params, dur_params


def gibbs_sweep(state: WeakLimitState, data: np.ndarray, rng: np.random.Generator,
                verbose: bool = False) -> WeakLimitState:
    X = _as_frames(data)
    cum = cum_seg_loglikes(frame_loglikes(X, state.obs_family, state.obs_params))
    log_kernel = log_kernel_without_self(state.rows)
    msgs = backward_messages(cum, state.dur_params, log_kernel,
                             d_max=state.d_max, censoring=state.censoring)
    loglike = total_loglike(msgs, state.init)
    seg = sample_segmentation(msgs, cum, state.dur_params, log_kernel, state.init, rng)

    n = augment_self_transitions(seg, state.rows, rng)
    m = sample_tables(n, state.alpha, state.beta, rng)
    beta = sample_beta(m, state.gamma, rng)
    rows = sample_rows(n, state.alpha, beta, rng)

    new = replace(state, seg=seg, counts=n, tables=m, beta=beta, rows=rows,
                  iteration=state.iteration + 1)
    new.obs_params, new.dur_params = resample_params(new, X, rng)
    new.diagnostics = SweepDiagnostics(loglike=loglike, used_states=len(set(seg.labels)),
                                       num_segments=seg.num_segments)
    if verbose:
        print(f"[WeakLimit] iter {new.iteration}: loglike={loglike:.3f} "
              f"states={new.diagnostics.used_states} segments={seg.num_segments}")
    return new


def _as_frames(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    return X.reshape(-1, 1) if X.ndim == 1 else X
