"""
Direct-assignment HDP-HSMM sampler.

Transition rows and Gaussian parameters are integrated out. A sweep has two
passes:

1. Super-state labels. Each segment's label is resampled from the Chinese
   restaurant franchise predictive (into the label from its predecessor, out
   of it to its successor) times the block marginal likelihood of the
   segment's frames and the duration pmf. Labels equal to either neighbour
   are excluded. Self-transitions never happen, so row k's predictive over
   the other states is Dir(alpha * beta_{-k}) with mass alpha * (1 - beta_k).
   A new state is an auxiliary stick broken off the remainder; a singleton
   that gives up its segment offers its own stick and durations instead.
   Once the labels are fixed, every exit out of k is completed with a
   geometric number of dummy self-transitions and beta is resampled from
   table counts.
2. Boundaries. Per-state parameters are drawn from their posteriors and the
   segment boundaries are resampled with the labels fixed, by block sampling
   an S-state left-to-right HSMM whose state s emits from theta_{z_s}.

The global weights are kept for the instantiated states plus one remainder
stick.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from blocksampler import SegmentSequence, sample_segmentation
from distributions import (
    beta_sample,
    categorical_sample,
    dirichlet_sample,
    gem_sample,
    niw_marginal_loglike,
    niw_posterior_from_stats,
    niw_sample,
    sufficient_stats,
)
from errors import InvalidConfigError
from messages import backward_messages, cum_seg_loglikes, total_loglike
from weaklimit import (
    MAX_DUMMIES,
    SweepDiagnostics,
    geometric_dummies,
    sample_tables,
    starting_segmentation,
)

_TINY = np.finfo(np.float64).tiny
_EPSNEG = np.finfo(np.float64).epsneg


@dataclass(eq=False)
class CrfState:
    seg: SegmentSequence
    beta: np.ndarray            # K instantiated weights followed by the remainder
    n: np.ndarray               # K x K transition counts; dummy self-transitions on the diagonal
    dur_params: List
    obs_params: List
    stat_count: np.ndarray      # per-state NIW sufficient statistics
    stat_sum: np.ndarray
    stat_outer: np.ndarray
    gamma: float
    alpha: float
    obs_family: object
    dur_template: object
    d_max: Optional[int] = None
    censoring: bool = True
    iteration: int = 0
    diagnostics: Optional[SweepDiagnostics] = field(default=None)

    @property
    def K(self) -> int:
        return len(self.dur_params)

    @property
    def beta_rem(self) -> float:
        return float(self.beta[-1])

    def copy(self) -> "CrfState":
        return CrfState(seg=self.seg, beta=self.beta.copy(), n=self.n.copy(),
                        dur_params=list(self.dur_params), obs_params=list(self.obs_params),
                        stat_count=self.stat_count.copy(), stat_sum=self.stat_sum.copy(),
                        stat_outer=self.stat_outer.copy(), gamma=self.gamma, alpha=self.alpha,
                        obs_family=self.obs_family, dur_template=self.dur_template,
                        d_max=self.d_max, censoring=self.censoring, iteration=self.iteration,
                        diagnostics=self.diagnostics)

    def to_dict(self) -> dict:
        return {
            "sampler": "direct-assignment",
            "iteration": self.iteration,
            "K": self.K,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "beta": self.beta.tolist(),
            "n": self.n.tolist(),
            "obs_params": [p.to_dict() for p in self.obs_params],
            "dur_params": [d.to_dict() for d in self.dur_params],
            "seg": self.seg.to_dict(),
        }


def _as_frames(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def _compact(seg: SegmentSequence) -> SegmentSequence:
    """Relabel to 0..K-1 in order of first appearance."""
    mapping = np.zeros(max(seg.labels) + 1, dtype=np.int64)
    seen = list(dict.fromkeys(seg.labels))
    mapping[seen] = np.arange(len(seen))
    return seg.relabel(mapping)


def _recompute_stats(state: CrfState, X: np.ndarray):
    K, dim = state.K, X.shape[1]
    state.stat_count = np.zeros(K)
    state.stat_sum = np.zeros((K, dim))
    state.stat_outer = np.zeros((K, dim, dim))
    x = state.seg.to_frame_labels()
    for k in range(K):
        cnt, tot, outer = sufficient_stats(X[x == k])
        state.stat_count[k], state.stat_sum[k], state.stat_outer[k] = cnt, tot, outer


def init_state(config, data: np.ndarray, rng: np.random.Generator,
               obs_family=None, dur_template=None) -> CrfState:
    """Starting segmentation over up to L labels, compacted to the labels actually used."""
    X = _as_frames(data)
    obs_family = obs_family or config.observation.build(X)
    if not getattr(obs_family, "supports_marginal", False):
        raise InvalidConfigError("the direct-assignment sampler needs gaussian emissions")
    dur_template = dur_template or config.duration_template()
    sampler = config.sampler
    seg = _compact(starting_segmentation(X, sampler, rng))
    K = len(set(seg.labels))
    state = CrfState(seg=seg, beta=gem_sample(sampler.gamma, K, rng),
                     n=seg.transition_counts(K),
                     dur_params=[dur_template.sample_prior(rng) for _ in range(K)],
                     obs_params=[obs_family.sample_prior(rng) for _ in range(K)],
                     stat_count=np.zeros(0), stat_sum=np.zeros(0), stat_outer=np.zeros(0),
                     gamma=sampler.gamma, alpha=sampler.alpha,
                     obs_family=obs_family, dur_template=dur_template,
                     d_max=sampler.d_max, censoring=sampler.censoring)
    _recompute_stats(state, X)
    return state


# =============================================================================
# State bookkeeping
# =============================================================================

def _drop_state(state: CrfState, k: int):
    """Fold an empty state's weight back into the remainder stick."""
    beta = np.delete(state.beta, k)
    beta[-1] += state.beta[k]
    state.beta = beta / beta.sum()
    state.n = np.delete(np.delete(state.n, k, axis=0), k, axis=1)
    state.stat_count = np.delete(state.stat_count, k)
    state.stat_sum = np.delete(state.stat_sum, k, axis=0)
    state.stat_outer = np.delete(state.stat_outer, k, axis=0)
    del state.dur_params[k]
    if k < len(state.obs_params):
        del state.obs_params[k]


def _add_state(state: CrfState, dur, obs, fraction: float):
    """Split the remainder stick; `fraction` of it becomes the new state's weight."""
    b = float(np.clip(fraction, _TINY, 1.0 - _EPSNEG))
    rem = state.beta[-1]
    beta = np.concatenate([state.beta[:-1], [b * rem, (1.0 - b) * rem]])
    state.beta = beta / beta.sum()
    K = state.K + 1
    n = np.zeros((K, K), dtype=state.n.dtype)
    n[:K - 1, :K - 1] = state.n
    state.n = n
    dim = state.stat_sum.shape[1]
    state.stat_count = np.append(state.stat_count, 0.0)
    state.stat_sum = np.vstack([state.stat_sum, np.zeros((1, dim))])
    state.stat_outer = np.concatenate([state.stat_outer, np.zeros((1, dim, dim))])
    state.dur_params.append(dur)
    state.obs_params.append(obs)


# =============================================================================
# Pass 1: super-state labels
# =============================================================================

def label_log_weights(state: CrfState, labels: List[int], s: int, X_seg: np.ndarray,
                      duration: int, censored: bool, new_dur,
                      new_weight: float) -> Tuple[List[int], np.ndarray]:
    """
    Candidate labels for segment s (segment s already removed from the
    counts) and their unnormalized log weights. Candidate `state.K` is a new
    state with duration parameters `new_dur` and global weight `new_weight`,
    a stick taken from the remainder; it is entered with the whole remainder
    mass. Diagonal entries of `state.n` are ignored.
    """
    K = state.K
    S = len(labels)
    prev = labels[s - 1] if s > 0 else None
    nxt = labels[s + 1] if s < S - 1 else None
    ab = state.alpha * state.beta
    exits = state.n.sum(axis=1) - np.diag(state.n)
    prior = state.obs_family.prior
    cands = [k for k in range(K) if k != prev and k != nxt] + [K]
    logits = np.empty(len(cands))
    for idx, k in enumerate(cands):
        if k < K:
            block_prior = niw_posterior_from_stats(prior, state.stat_count[k],
                                                   state.stat_sum[k], state.stat_outer[k])
            dur = state.dur_params[k]
        else:
            block_prior, dur = prior, new_dur
        lw = niw_marginal_loglike(block_prior, X_seg)
        lw += dur.log_sf(duration) if censored else dur.log_pmf(duration)
        if prev is None:
            lw += np.log(state.beta[k])
        elif k < K:
            lw += np.log(state.n[prev, k] + ab[k])
        else:
            lw += np.log(ab[K])
        if nxt is not None:
            if k < K:
                lw += np.log(state.n[k, nxt] + ab[nxt])
                lw -= np.log(exits[k] + state.alpha * (1.0 - state.beta[k]))
            else:
                lw += np.log(state.beta[nxt]) - np.log1p(-new_weight)
        logits[idx] = lw
    return cands, logits


def resample_superstate_label(state: CrfState, s: int, data: np.ndarray,
                              rng: np.random.Generator) -> CrfState:
    """Gibbs update of segment s's label; updates `state` in place and returns it."""
    X = _as_frames(data)
    seg = state.seg
    labels = list(seg.labels)
    S = len(labels)
    start = int(seg.starts[s])
    d = seg.durations[s]
    X_seg = X[start:start + d]
    cnt, tot, outer = sufficient_stats(X_seg)
    censored = state.censoring and seg.censored_last and s == S - 1

    old = labels[s]
    prev = labels[s - 1] if s > 0 else None
    nxt = labels[s + 1] if s < S - 1 else None
    if prev is not None:
        state.n[prev, old] -= 1
    if nxt is not None:
        state.n[old, nxt] -= 1
    state.stat_count[old] -= cnt
    state.stat_sum[old] -= tot
    state.stat_outer[old] -= outer

    if old in labels[:s] + labels[s + 1:]:
        new_dur = state.dur_template.sample_prior(rng)
        fraction = beta_sample(1.0, state.gamma, rng)
    else:
        # the emptied state is the auxiliary candidate
        new_dur, weight = state.dur_params[old], float(state.beta[old])
        _drop_state(state, old)
        fraction = weight / state.beta_rem
        labels = [z - 1 if z > old else z for z in labels]
        labels[s] = -1

    new_weight = min(fraction, 1.0) * state.beta_rem
    cands, logits = label_log_weights(state, labels, s, X_seg, d, censored, new_dur, new_weight)
    k = cands[categorical_sample(logits, rng)]
    if k == state.K:
        _add_state(state, new_dur, state.obs_family.sample_prior(rng), fraction)
    labels[s] = k

    state.stat_count[k] += cnt
    state.stat_sum[k] += tot
    state.stat_outer[k] += outer
    if prev is not None:
        state.n[labels[s - 1], k] += 1
    if nxt is not None:
        state.n[k, labels[s + 1]] += 1

    state.seg = SegmentSequence(labels=tuple(labels), durations=seg.durations,
                                censored_last=seg.censored_last)
    return state


def augment_crf_counts(state: CrfState, rng: np.random.Generator) -> np.ndarray:
    """
    Transition counts of the current labels with dummy self-transitions on
    the diagonal. The exits out of k say nothing about pi_kk, so it is drawn
    from Beta(alpha * beta_k, alpha * (1 - beta_k)); each exit then adds the
    failures of a Geometric(1 - pi_kk).
    """
    n = state.seg.transition_counts(state.K)
    exits = n.sum(axis=1)
    for k in np.flatnonzero(exits):
        b = float(state.beta[k])
        stay, leave = dirichlet_sample([state.alpha * b, state.alpha * (1.0 - b)], rng)
        dummies = geometric_dummies(np.full(exits[k], stay), np.full(exits[k], leave), rng)
        n[k, k] = min(int(dummies.sum()), int(MAX_DUMMIES))
    return n


def resample_beta(state: CrfState, rng: np.random.Generator) -> np.ndarray:
    """beta | tables: Dir(m_.1, ..., m_.K, gamma), plus one table for the first segment's label."""
    m = sample_tables(state.n, state.alpha, state.beta[:-1], rng)
    cols = m.sum(axis=0).astype(np.float64)
    cols[state.seg.labels[0]] += 1.0
    return dirichlet_sample(np.append(cols, state.gamma), rng)


def resample_superstates(state: CrfState, data: np.ndarray, rng: np.random.Generator) -> CrfState:
    """Pass 1 in place: every segment's label in turn, then dummy counts and beta."""
    X = _as_frames(data)
    state.n = state.seg.transition_counts(state.K)
    for s in range(state.seg.num_segments):
        resample_superstate_label(state, s, X, rng)
    state.n = augment_crf_counts(state, rng)
    state.beta = resample_beta(state, rng)
    return state


# =============================================================================
# Pass 2: boundaries given labels
# =============================================================================

def resample_state_params(state: CrfState, data: np.ndarray, rng: np.random.Generator):
    """Posterior draws of every instantiated state's Gaussian and duration parameters."""
    X = _as_frames(data)
    _recompute_stats(state, X)
    prior = state.obs_family.prior
    obs_params, dur_params = [], []
    for k in range(state.K):
        post = niw_posterior_from_stats(prior, state.stat_count[k], state.stat_sum[k], state.stat_outer[k])
        obs_params.append(niw_sample(post, rng))
        complete, censored = state.seg.durations_for(k)
        dur_params.append(state.dur_params[k].posterior_resample(complete, censored, rng))
    state.obs_params, state.dur_params = obs_params, dur_params


def left_to_right_model(S: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(log kernel, init, final-state mask) of an S-state chain that must visit every state in order."""
    log_kernel = np.full((S, S), -np.inf)
    log_kernel[np.arange(S - 1), np.arange(1, S)] = 0.0
    init = np.zeros(S)
    init[0] = 1.0
    final = np.zeros(S, dtype=bool)
    final[-1] = True
    return log_kernel, init, final


def _resample_boundaries(state: CrfState, X: np.ndarray,
                         rng: np.random.Generator) -> Tuple[SegmentSequence, float]:
    labels = np.asarray(state.seg.labels, dtype=np.int64)
    S = labels.shape[0]
    per_state = np.column_stack([state.obs_family.log_likelihood(p, X) for p in state.obs_params])
    cum = cum_seg_loglikes(per_state[:, labels])
    durations = [state.dur_params[z] for z in labels]
    log_kernel, init, final = left_to_right_model(S)
    msgs = backward_messages(cum, durations, log_kernel, d_max=state.d_max,
                             censoring=state.censoring, final_states=final)
    chain = sample_segmentation(msgs, cum, durations, log_kernel, init, rng)
    seg = SegmentSequence(labels=tuple(int(labels[s]) for s in chain.labels),
                          durations=chain.durations, censored_last=chain.censored_last)
    return seg, total_loglike(msgs, init)


def resample_segmentation_given_superstates(state: CrfState, data: np.ndarray,
                                            rng: np.random.Generator) -> SegmentSequence:
    """New boundaries for the current label order under the current per-state parameters."""
    return _resample_boundaries(state, _as_frames(data), rng)[0]


def direct_sweep(state: CrfState, data: np.ndarray, rng: np.random.Generator,
                 verbose: bool = False) -> CrfState:
    X = _as_frames(data)
    new = state.copy()
    _recompute_stats(new, X)
    resample_superstates(new, X, rng)

    resample_state_params(new, X, rng)
    new.seg, loglike = _resample_boundaries(new, X, rng)
    new.n = new.seg.transition_counts(new.K)
    _recompute_stats(new, X)
    new.iteration += 1
    new.diagnostics = SweepDiagnostics(loglike=loglike, used_states=new.K,
                                       num_segments=new.seg.num_segments)
    if verbose:
        print(f"[Direct] iter {new.iteration}: loglike={loglike:.3f} "
              f"states={new.K} segments={new.seg.num_segments}")
    return new
