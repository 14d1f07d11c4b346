"""
HSMM backward message passing.

    beta_t(i)  = sum_j beta*_t(j) p(x_{t+1} = j | x_t = i)
    beta*_t(i) = sum_{d=1}^{min(d_max, T-t)} beta_{t+d}(i) pmf_i(d) lik(y_{t+1:t+d} | i)
                 + [censoring, T-t <= d_max] sf_i(T-t) lik(y_{t+1:T} | i)
    beta_T(i)  = 1

All messages are kept in log space. Segment likelihoods are O(1) lookups into
prefix sums of the per-frame log-likelihoods, so one pass costs
O(T * d_max * N^2). The recursion itself is compiled with numba; the
summation order inside each (t, i) cell is fixed, so results are
reproducible bit for bit.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numba as nb
import numpy as np
from scipy.special import logsumexp

from errors import DomainError, InvalidParameterError

LOGLIKE_FLOOR = -1e200


@dataclass(frozen=True, eq=False)
class MessageTable:
    """log beta (T+1 x N), log beta* (T x N) and the duration tables used to build them."""
    logB: np.ndarray
    logBstar: np.ndarray
    d_max: int
    censoring: bool
    log_pmf: np.ndarray       # (d_max x N): log pmf_i(d) for d = 1..d_max
    log_sf: np.ndarray        # (d_max + 1 x N): log sf_i(l) for l = 0..d_max
    final_states: np.ndarray  # states allowed to end the sequence

    @property
    def T(self) -> int:
        return self.logBstar.shape[0]

    @property
    def num_states(self) -> int:
        return self.logBstar.shape[1]


def cum_seg_loglikes(frames: np.ndarray) -> np.ndarray:
    """
    Prefix sums C[t] = sum_{t' <= t} L[t'] with C[0] = 0, so the log-likelihood
    of frames a..b (1-based, inclusive) under state i is C[b, i] - C[a-1, i].
    -inf frame entries are floored at LOGLIKE_FLOOR so differences stay defined.
    """
    L = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if np.any(np.isnan(L)):
        raise InvalidParameterError("frame log-likelihoods contain NaN")
    L = np.maximum(L, LOGLIKE_FLOOR)
    cum = np.zeros((L.shape[0] + 1, L.shape[1]))
    np.cumsum(L, axis=0, out=cum[1:])
    return cum


def frame_loglikes(data: np.ndarray, obs_family, obs_params: Sequence) -> np.ndarray:
    """(T x N) table of log f(y_t | theta_i)."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    out = np.empty((X.shape[0], len(obs_params)))
    for i, params in enumerate(obs_params):
        out[:, i] = obs_family.log_likelihood(params, X)
    return out


def log_kernel_without_self(rows: np.ndarray) -> np.ndarray:
    """
    log pi~: each row with its diagonal atom removed and renormalized. A row
    with no off-diagonal mass falls back to uniform over the other states.
    """
    P = np.array(rows, dtype=np.float64, copy=True)
    N = P.shape[0]
    np.fill_diagonal(P, 0.0)
    totals = P.sum(axis=1)
    empty = totals <= 0
    if np.any(empty):
        P[empty] = 1.0
        P[empty, np.flatnonzero(empty)] = 0.0
        totals = P.sum(axis=1)
    P /= totals[:, None]
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    logP[np.arange(N), np.arange(N)] = -np.inf
    return logP


def check_log_kernel(log_kernel: np.ndarray) -> np.ndarray:
    """
    Validate that every row of a log transition kernel normalizes. A row of
    all -inf is a state with no successors, which may only end the sequence.
    """
    K = np.asarray(log_kernel, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidParameterError(f"transition kernel must be square, got {K.shape}")
    if np.any(np.isnan(K)) or np.any(K == np.inf):
        raise InvalidParameterError("transition kernel contains NaN or +inf")
    live = ~np.all(np.isneginf(K), axis=1)
    sums = np.exp(logsumexp(K[live], axis=1))
    if np.any(np.abs(sums - 1.0) > 1e-12):
        raise InvalidParameterError(f"transition kernel rows do not sum to 1: {sums}")
    return K


@nb.njit(cache=True, nogil=True)
def _backward_recursion(cum, log_pmf, log_sf, log_kernel, final_mask, d_max, censoring):
    T = cum.shape[0] - 1
    N = cum.shape[1]
    logB = np.empty((T + 1, N))
    logBstar = np.empty((T, N))
    terms = np.empty(d_max + 1)
    row = np.empty(N)
    for i in range(N):
        logB[T, i] = 0.0 if final_mask[i] else -np.inf

    for t in range(T - 1, -1, -1):
        D = min(d_max, T - t)
        for i in range(N):
            top = -np.inf
            for d in range(1, D + 1):
                v = logB[t + d, i] + log_pmf[d - 1, i] + (cum[t + d, i] - cum[t, i])
                terms[d - 1] = v
                if v > top:
                    top = v
            n_terms = D
            if censoring and T - t <= d_max and final_mask[i]:
                v = log_sf[T - t, i] + (cum[T, i] - cum[t, i])
                terms[D] = v
                n_terms = D + 1
                if v > top:
                    top = v
            if top == -np.inf:
                logBstar[t, i] = -np.inf
                continue
            s = 0.0
            for k in range(n_terms):
                s += np.exp(terms[k] - top)
            logBstar[t, i] = top + np.log(s)

        for i in range(N):
            top = -np.inf
            for j in range(N):
                v = logBstar[t, j] + log_kernel[i, j]
                row[j] = v
                if v > top:
                    top = v
            if top == -np.inf:
                logB[t, i] = -np.inf
                continue
            s = 0.0
            for j in range(N):
                s += np.exp(row[j] - top)
            logB[t, i] = top + np.log(s)
    return logB, logBstar


def duration_tables(durations: Sequence, d_max: int) -> tuple:
    """(log pmf table d_max x N, log sf table d_max+1 x N) for per-state families."""
    log_pmf = np.column_stack([fam.log_pmf_table(d_max) for fam in durations])
    log_sf = np.column_stack([fam.log_sf_table(d_max) for fam in durations])
    return log_pmf, log_sf


def backward_messages(cum: np.ndarray, durations: Sequence, log_kernel: np.ndarray,
                      d_max: Optional[int] = None, censoring: bool = True,
                      final_states: Optional[np.ndarray] = None) -> MessageTable:
    """
    Compute log beta and log beta* for a T-frame sequence.

    `durations` holds one DurationFamily per state and `log_kernel` is the
    (N x N) log transition matrix with self-transitions already removed.
    `d_max` truncates the duration sum (the pmf is not renormalized);
    None means exact (d_max = T). `final_states` optionally restricts which
    states may end the sequence.
    """
    cum = np.ascontiguousarray(cum, dtype=np.float64)
    T = cum.shape[0] - 1
    N = cum.shape[1]
    if d_max is None:
        d_max = T
    if int(d_max) < 1:
        raise DomainError(f"d_max must be >= 1, got {d_max}")
    if len(durations) != N:
        raise InvalidParameterError(f"{len(durations)} duration families for {N} states")
    log_kernel = np.ascontiguousarray(check_log_kernel(log_kernel))
    if log_kernel.shape != (N, N):
        raise InvalidParameterError(f"kernel shape {log_kernel.shape} does not match {N} states")
    d_eff = int(min(d_max, max(T, 1)))
    log_pmf, log_sf = duration_tables(durations, d_eff)
    mask = np.ones(N, dtype=np.bool_) if final_states is None else np.asarray(final_states, dtype=np.bool_)
    logB, logBstar = _backward_recursion(cum, np.ascontiguousarray(log_pmf),
                                         np.ascontiguousarray(log_sf), log_kernel,
                                         mask, d_eff, bool(censoring))
    return MessageTable(logB=logB, logBstar=logBstar, d_max=d_eff, censoring=bool(censoring),
                        log_pmf=log_pmf, log_sf=log_sf, final_states=mask)


def total_loglike(msgs: MessageTable, init: np.ndarray) -> float:
    """log sum_i p(x_1 = i) beta*_0(i): the evidence of the observations."""
    init = np.asarray(init, dtype=np.float64)
    if init.shape[0] != msgs.num_states:
        raise InvalidParameterError(f"init has {init.shape[0]} entries for {msgs.num_states} states")
    with np.errstate(divide="ignore"):
        return float(logsumexp(np.log(init) + msgs.logBstar[0]))
