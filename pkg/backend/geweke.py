"""
Geweke test for the weak-limit sampler.

The marginal-conditional simulator draws (parameters, segmentation, data)
straight from the prior. The successive-conditional simulator alternates a
Gibbs sweep with regenerating the data from the current parameters. Both
target the same joint distribution, so the test statistics recorded from
each must agree; disagreement is reported as batch-means z-scores.
"""

from typing import Dict, Optional

import numpy as np

from blocksampler import SegmentSequence
from config import DurationConfig, NIWOverrides, ObservationConfig, RunConfig, SamplerConfig
from genmodel import generate_hsmm
from weaklimit import gibbs_sweep, sample_prior_state

STATISTICS = ("first_frame", "num_segments", "mean_duration")


def tiny_config(T: int = 20, L: int = 4) -> RunConfig:
    """1-D Gaussian emissions, geometric durations, exact messages with censoring."""
    return RunConfig(
        duration=DurationConfig(family="geometric", a=1.0, b=1.0),
        observation=ObservationConfig(
            emission="gaussian",
            niw=NIWOverrides(mean=[0.0], scale=1.0, dof=4.0, scatter=[[4.0]]),
        ),
        sampler=SamplerConfig(L=L, d_max=T, gamma=float(L), alpha=float(L), censoring=True),
    )


def statistics(seg: SegmentSequence, data: np.ndarray) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64).reshape(seg.T, -1)
    return np.array([X[0, 0], float(seg.num_segments), float(np.mean(seg.durations))])


def marginal_conditional(config: RunConfig, T: int, n: int, rng: np.random.Generator,
                         obs_family=None) -> np.ndarray:
    """(n x 3) statistics of independent prior draws."""
    obs_family = obs_family or config.observation.build(None)
    out = np.empty((n, len(STATISTICS)))
    for i in range(n):
        state, data = sample_prior_state(config, T, rng, obs_family)
        out[i] = statistics(state.seg, data)
    return out


def successive_conditional(config: RunConfig, T: int, n: int, rng: np.random.Generator,
                           obs_family=None, progress_every: Optional[int] = None) -> np.ndarray:
    """(n x 3) statistics along a chain alternating gibbs_sweep and data regeneration."""
    obs_family = obs_family or config.observation.build(None)
    state, data = sample_prior_state(config, T, rng, obs_family)
    out = np.empty((n, len(STATISTICS)))
    for i in range(n):
        state = gibbs_sweep(state, data, rng)
        truth, data = generate_hsmm(state.hsmm_params(), T, rng)
        state.seg = truth.seg
        out[i] = statistics(state.seg, data)
        if progress_every and (i + 1) % progress_every == 0:
            print(f"[Geweke] {i + 1}/{n} successive-conditional sweeps")
    return out


def _mean_and_se(x: np.ndarray, batches: int):
    n = x.shape[0]
    if batches <= 1 or n < 2 * batches:
        return x.mean(), x.std(ddof=1) / np.sqrt(n)
    size = n // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return x.mean(), means.std(ddof=1) / np.sqrt(batches)


def geweke_z_scores(marginal: np.ndarray, successive: np.ndarray, batches: int = 50) -> Dict[str, float]:
    """
    z = (mean_mc - mean_sc) / sqrt(se_mc^2 + se_sc^2); the marginal draws are
    iid, the successive ones are autocorrelated and use batch means.
    """
    out = {}
    for idx, name in enumerate(STATISTICS):
        m_a, se_a = _mean_and_se(marginal[:, idx], 1)
        m_b, se_b = _mean_and_se(successive[:, idx], batches)
        se = np.sqrt(se_a ** 2 + se_b ** 2)
        out[name] = 0.0 if se == 0 and m_a == m_b else float((m_a - m_b) / se)
    return out
