"""
Forward simulation of explicit-duration HSMMs and the synthetic datasets
used by the experiments.

    tau = 0, s = 1
    while tau < T:
        z_s ~ pi~[z_{s-1}]      (init for s = 1)
        D_s ~ D(omega_{z_s})
        y[tau:tau+D_s] iid f(theta_{z_s})
        tau += D_s
    cut y to exactly T frames

Dataset bundles are written as data.csv (one frame per row, all sequences
stacked), truth.csv (one integer label per row) and meta.json (sequence
lengths, generating settings and the per-sequence segmentations).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from blocksampler import SegmentSequence
from distributions import (
    GaussianParams,
    NIWParams,
    categorical_sample,
    check_prob_vector,
    dirichlet_sample,
    niw_sample,
)
from durations import DelayedGeomDur, GeometricDur, PoissonDur
from errors import InvalidParameterError, UnknownExperimentError
from observations import GaussianMixtureObservation, GaussianObservation, MixtureParams

EXPERIMENTS = ("poisson-hsmm", "hmm-10d", "morse-synth")


@dataclass(frozen=True, eq=False)
class HSMMParams:
    """Everything needed to run the generative process."""
    init: np.ndarray
    kernel: np.ndarray          # pi~: zero diagonal, rows sum to one
    durations: Tuple
    obs_family: object
    obs_params: Tuple

    @property
    def num_states(self) -> int:
        return self.init.shape[0]

    def to_dict(self) -> dict:
        return {
            "init": self.init.tolist(),
            "kernel": self.kernel.tolist(),
            "durations": [d.to_dict() for d in self.durations],
            "emission": self.obs_family.name,
            "obs_params": [p.to_dict() for p in self.obs_params],
        }


@dataclass(frozen=True, eq=False)
class GroundTruth:
    seg: SegmentSequence
    frame_labels: np.ndarray
    params: HSMMParams


@dataclass(eq=False)
class DatasetBundle:
    spec: str
    seed: int
    sequences: List[np.ndarray]
    truths: List[GroundTruth]
    params: HSMMParams
    settings: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.sequences[0].shape[1]

    def meta(self) -> dict:
        return {
            "spec": self.spec,
            "seed": self.seed,
            "dim": self.dim,
            "num_states": self.params.num_states,
            "lengths": [int(x.shape[0]) for x in self.sequences],
            "settings": self.settings,
            "truth_segments": [t.seg.to_dict() for t in self.truths],
            "params": self.params.to_dict(),
        }


def _check_kernel(kernel: np.ndarray) -> np.ndarray:
    K = np.asarray(kernel, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidParameterError(f"kernel must be square, got {K.shape}")
    if np.any(np.diag(K) != 0):
        raise InvalidParameterError("kernel must have a zero diagonal (self-transitions are outlawed)")
    for row in K[K.sum(axis=1) > 0]:
        check_prob_vector(row)
    return K


def generate_hsmm(params: HSMMParams, T: int, rng: np.random.Generator) -> Tuple[GroundTruth, np.ndarray]:
    """Run the super-state loop for T frames; the last segment is censored if it overruns."""
    if T < 1:
        raise InvalidParameterError(f"T must be >= 1, got {T}")
    kernel = _check_kernel(params.kernel)
    init = check_prob_vector(params.init)
    if init.shape[0] != kernel.shape[0]:
        raise InvalidParameterError(f"init has {init.shape[0]} entries for {kernel.shape[0]} states")
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
        log_kernel = np.log(kernel)
    labels, durations, chunks = [], [], []
    censored = False
    tau = 0
    state = categorical_sample(log_init, rng)
    while tau < T:
        d = params.durations[state].sample(rng)
        take = min(d, T - tau)
        censored = d > take
        chunks.append(params.obs_family.sample_frames(params.obs_params[state], take, rng))
        labels.append(state)
        durations.append(take)
        tau += take
        if tau < T:
            if kernel[state].sum() <= 0:
                raise InvalidParameterError(f"state {state} has no outgoing transitions")
            state = categorical_sample(log_kernel[state], rng)
    seg = SegmentSequence(labels=tuple(labels), durations=tuple(durations), censored_last=censored)
    data = np.vstack(chunks)
    return GroundTruth(seg=seg, frame_labels=seg.to_frame_labels(), params=params), data


def _random_kernel(N: int, rng: np.random.Generator) -> np.ndarray:
    K = np.zeros((N, N))
    for i in range(N):
        others = [j for j in range(N) if j != i]
        K[i, others] = dirichlet_sample(np.ones(N - 1), rng)
    return K


def _poisson_hsmm(rng, rates=(2.0, 4.0, 6.0, 8.0), separation=3.0, spread=1.0, components=2) -> HSMMParams:
    """
    Shifted-Poisson durations and overlapping 2-D Gaussian mixtures. State
    centers sit on a circle of radius `separation`; each state's component
    means scatter around its center with scale `spread`.
    """
    N, dim, dof = len(rates), 2, 5.0
    angles = 2.0 * np.pi * np.arange(N) / N
    centers = separation * np.column_stack([np.cos(angles), np.sin(angles)])
    obs = []
    for center in centers:
        prior = NIWParams(mean=center, scale=1.0 / spread ** 2, dof=dof, scatter=np.eye(dim) * (dof - dim - 1))
        obs.append(MixtureParams(weights=dirichlet_sample(np.full(components, 2.0), rng),
                                 components=tuple(niw_sample(prior, rng) for _ in range(components))))
    family = GaussianMixtureObservation(
        NIWParams(mean=np.zeros(dim), scale=1.0 / spread ** 2, dof=dof, scatter=np.eye(dim) * (dof - dim - 1)),
        components=components)
    return HSMMParams(init=np.full(N, 1.0 / N), kernel=_random_kernel(N, rng),
                      durations=tuple(PoissonDur(rate=float(r)) for r in rates),
                      obs_family=family, obs_params=tuple(obs))


def _hmm_10d(rng, num_states=4, dim=10) -> HSMMParams:
    """4-state HMM (geometric durations) with 10-D Gaussian emissions."""
    dof = dim + 2.0
    prior = NIWParams(mean=np.zeros(dim), scale=0.2, dof=dof, scatter=np.eye(dim) * (dof - dim - 1))
    family = GaussianObservation(prior)
    obs = tuple(niw_sample(prior, rng) for _ in range(num_states))
    p = rng.uniform(0.05, 0.2, size=num_states)
    return HSMMParams(init=np.full(num_states, 1.0 / num_states), kernel=_random_kernel(num_states, rng),
                      durations=tuple(GeometricDur(p=float(x)) for x in p),
                      obs_family=family, obs_params=obs)


def _morse_synth(rng, short_wait=4, long_wait=14, tone_p=0.95) -> HSMMParams:
    """
    Silence, short tone and long tone over 4 spectral bands. Both tones share
    one emission distribution (energy in band 2); only their durations differ.
    """
    dim = 4
    tone = GaussianParams(mean=np.array([0.2, 0.3, 3.0, 0.3]), covariance=0.1 * np.eye(dim))
    silence = GaussianParams(mean=np.full(dim, 0.2), covariance=0.1 * np.eye(dim))
    family = GaussianObservation(NIWParams(mean=np.zeros(dim), scale=1.0, dof=dim + 2.0, scatter=np.eye(dim)))
    kernel = np.array([[0.0, 0.5, 0.5],
                       [1.0, 0.0, 0.0],
                       [1.0, 0.0, 0.0]])
    durations = (DelayedGeomDur(wait=2, p=0.25),
                 DelayedGeomDur(wait=short_wait, p=tone_p),
                 DelayedGeomDur(wait=long_wait, p=tone_p))
    return HSMMParams(init=np.full(3, 1.0 / 3), kernel=kernel, durations=durations,
                      obs_family=family, obs_params=(silence, tone, tone))


def make_experiment(spec: str, seed: int, n_sequences: int = 5, T: int = 500, **knobs) -> DatasetBundle:
    """
    Build one of the synthetic datasets: poisson-hsmm, hmm-10d or morse-synth.
    `knobs` reach the builder (e.g. rates=..., separation=..., spread=... for poisson-hsmm).
    """
    builders = {"poisson-hsmm": _poisson_hsmm, "hmm-10d": _hmm_10d, "morse-synth": _morse_synth}
    if spec not in builders:
        raise UnknownExperimentError(f"unknown experiment '{spec}' (valid: {', '.join(EXPERIMENTS)})")
    if n_sequences < 1 or T < 1:
        raise InvalidParameterError("n_sequences and T must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    try:
        params = builders[spec](rng, **knobs)
    except TypeError as e:
        raise InvalidParameterError(f"bad settings for {spec}: {e}")
    truths, sequences = [], []
    for _ in range(n_sequences):
        truth, data = generate_hsmm(params, T, rng)
        truths.append(truth)
        sequences.append(data)
    settings = {"n_sequences": n_sequences, "T": T}
    settings.update({k: list(v) if isinstance(v, tuple) else v for k, v in knobs.items()})
    return DatasetBundle(spec=spec, seed=seed, sequences=sequences, truths=truths,
                         params=params, settings=settings)


def write_bundle(bundle: DatasetBundle, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "data.csv", np.vstack(bundle.sequences), delimiter=",", fmt="%.17g")
    np.savetxt(out / "truth.csv", np.concatenate([t.frame_labels for t in bundle.truths]),
               delimiter=",", fmt="%d")
    with open(out / "meta.json", "w", encoding="utf-8") as f:
        json.dump(bundle.meta(), f, indent=2, sort_keys=True)
    return out


def load_dataset(path) -> Tuple[List[np.ndarray], Optional[List[np.ndarray]], dict]:
    """
    Read a dataset directory. Returns (sequences, truth label sequences or
    None when truth.csv is absent, meta). Without meta.json the whole file is
    one sequence.
    """
    path = Path(path)
    data_file = path / "data.csv"
    if not data_file.exists():
        raise FileNotFoundError(f"no data.csv in {path}")
    data = np.loadtxt(data_file, delimiter=",", ndmin=2)
    meta = {}
    if (path / "meta.json").exists():
        with open(path / "meta.json", "r", encoding="utf-8") as f:
            meta = json.load(f)
    lengths = meta.get("lengths") or [data.shape[0]]
    if sum(lengths) != data.shape[0]:
        raise InvalidParameterError(f"meta.json lengths sum to {sum(lengths)} but data.csv has {data.shape[0]} rows")
    bounds = np.cumsum([0] + list(lengths))
    sequences = [data[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    truths = None
    if (path / "truth.csv").exists():
        labels = np.loadtxt(path / "truth.csv", delimiter=",", dtype=np.int64, ndmin=1)
        truths = [labels[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    return sequences, truths, meta
