"""
Tests for HSMM forward simulation and the synthetic experiment datasets.
"""
import json
from dataclasses import replace

import numpy as np
import pytest

from distributions import GaussianParams
from durations import DelayedGeomDur, GeometricDur, PoissonDur
from errors import InvalidParameterError, UnknownExperimentError
from genmodel import EXPERIMENTS, HSMMParams, generate_hsmm, load_dataset, make_experiment, write_bundle


def simple_params(gaussian_1d, durations, kernel=None):
    N = len(durations)
    if kernel is None:
        kernel = np.zeros((N, N)) if N == 1 else (np.ones((N, N)) - np.eye(N)) / (N - 1)
    obs = tuple(GaussianParams(mean=[float(i)], covariance=[[0.1]]) for i in range(N))
    return HSMMParams(init=np.full(N, 1.0 / N), kernel=np.asarray(kernel, dtype=np.float64),
                      durations=tuple(durations), obs_family=gaussian_1d, obs_params=obs)


class TestGenerate:
    """Test the generative process."""

    def test_single_state(self, gaussian_1d, rng):
        """One state with durations >= T gives one censored segment."""
        params = simple_params(gaussian_1d, [DelayedGeomDur(wait=20, p=0.5)])
        truth, data = generate_hsmm(params, 10, rng)
        assert truth.seg.labels == (0,) and truth.seg.durations == (10,)
        assert truth.seg.censored_last
        assert data.shape == (10, 1)

    def test_unit_durations_alternate(self, gaussian_1d, rng):
        params = simple_params(gaussian_1d, [GeometricDur(p=1.0)] * 2)
        truth, _ = generate_hsmm(params, 9, rng)
        assert truth.seg.durations == (1,) * 9
        assert truth.frame_labels.tolist() in ([0, 1] * 4 + [0], [1, 0] * 4 + [1])
        assert not truth.seg.censored_last

    def test_segments_valid(self, gaussian_1d, rng):
        params = simple_params(gaussian_1d, [PoissonDur(rate=3.0), GeometricDur(p=0.2), PoissonDur(rate=9.0)])
        for _ in range(50):
            truth, data = generate_hsmm(params, 100, rng)
            truth.seg.validate(T=100)
            assert data.shape == (100, 1)
            assert np.array_equal(truth.frame_labels, truth.seg.to_frame_labels())

    def test_rejects_self_transitions(self, gaussian_1d, rng):
        params = simple_params(gaussian_1d, [GeometricDur()] * 2, kernel=[[0.5, 0.5], [1.0, 0.0]])
        with pytest.raises(InvalidParameterError):
            generate_hsmm(params, 10, rng)

    def test_rejects_bad_init(self, gaussian_1d, rng):
        params = simple_params(gaussian_1d, [GeometricDur()] * 2)
        with pytest.raises(InvalidParameterError):
            generate_hsmm(replace(params, init=np.array([0.7, 0.7])), 10, rng)
        with pytest.raises(InvalidParameterError):
            generate_hsmm(replace(params, init=np.array([1.0])), 10, rng)

    def test_rejects_unnormalized_rows(self, gaussian_1d, rng):
        params = simple_params(gaussian_1d, [GeometricDur()] * 2, kernel=[[0.0, 0.5], [1.0, 0.0]])
        with pytest.raises(InvalidParameterError):
            generate_hsmm(params, 10, rng)

    def test_rejects_empty(self, gaussian_1d, rng):
        with pytest.raises(InvalidParameterError):
            generate_hsmm(simple_params(gaussian_1d, [GeometricDur()]), 0, rng)

    @pytest.mark.slow
    def test_duration_histogram(self, gaussian_1d, rng):
        """Complete segment lengths follow the state's pmf."""
        fam = PoissonDur(rate=4.0)
        params = simple_params(gaussian_1d, [fam, fam])
        lengths = []
        for _ in range(400):
            truth, _ = generate_hsmm(params, 1000, rng)
            lengths.extend(truth.seg.durations[:-1])
        lengths = np.asarray(lengths)
        for d in range(1, 12):
            assert np.mean(lengths == d) == pytest.approx(np.exp(fam.log_pmf(d)), abs=0.01)


class TestExperiments:
    """Test the built-in synthetic datasets."""

    @pytest.mark.parametrize("spec", EXPERIMENTS)
    def test_shapes(self, spec):
        bundle = make_experiment(spec, seed=1, n_sequences=3, T=80)
        assert len(bundle.sequences) == len(bundle.truths) == 3
        for data, truth in zip(bundle.sequences, bundle.truths):
            assert data.shape[0] == 80
            truth.seg.validate(T=80)

    def test_dimensions(self):
        assert make_experiment("hmm-10d", seed=0, n_sequences=1, T=20).dim == 10
        assert make_experiment("poisson-hsmm", seed=0, n_sequences=1, T=20).dim == 2
        assert make_experiment("morse-synth", seed=0, n_sequences=1, T=20).dim == 4

    def test_morse_tones_share_emissions(self):
        bundle = make_experiment("morse-synth", seed=0, n_sequences=1, T=50)
        silence, short, long_ = bundle.params.obs_params
        assert np.array_equal(short.mean, long_.mean)
        assert np.array_equal(short.covariance, long_.covariance)
        assert not np.array_equal(silence.mean, short.mean)
        assert bundle.params.durations[1].wait < bundle.params.durations[2].wait

    def test_poisson_states_around_centers(self):
        bundle = make_experiment("poisson-hsmm", seed=0, n_sequences=1, T=20, separation=20.0, spread=0.5)
        centers = [[20.0, 0.0], [0.0, 20.0], [-20.0, 0.0], [0.0, -20.0]]
        for center, mixture in zip(centers, bundle.params.obs_params):
            for component in mixture.components:
                assert np.linalg.norm(component.mean - center) < 5.0

    def test_hmm_has_geometric_durations(self):
        bundle = make_experiment("hmm-10d", seed=0, n_sequences=1, T=20)
        assert all(d.name == "geometric" for d in bundle.params.durations)

    def test_knobs_recorded(self):
        bundle = make_experiment("poisson-hsmm", seed=0, n_sequences=1, T=30, rates=(3.0, 5.0))
        assert bundle.params.num_states == 2
        assert bundle.meta()["settings"]["rates"] == [3.0, 5.0]

    def test_same_seed_same_data(self):
        a = make_experiment("poisson-hsmm", seed=9, n_sequences=2, T=50)
        b = make_experiment("poisson-hsmm", seed=9, n_sequences=2, T=50)
        assert all(np.array_equal(x, y) for x, y in zip(a.sequences, b.sequences))
        c = make_experiment("poisson-hsmm", seed=10, n_sequences=2, T=50)
        assert not np.array_equal(a.sequences[0], c.sequences[0])

    def test_unknown_spec(self):
        with pytest.raises(UnknownExperimentError):
            make_experiment("speech", seed=0)

    def test_bad_knob(self):
        with pytest.raises(InvalidParameterError):
            make_experiment("hmm-10d", seed=0, rates=(1.0,))


class TestBundleFiles:
    """Test writing and reading dataset directories."""

    def test_round_trip(self, temp_dir):
        bundle = make_experiment("morse-synth", seed=4, n_sequences=2, T=40)
        write_bundle(bundle, temp_dir / "morse")
        sequences, truths, meta = load_dataset(temp_dir / "morse")
        assert meta["lengths"] == [40, 40] and meta["spec"] == "morse-synth"
        for a, b in zip(sequences, bundle.sequences):
            assert np.array_equal(a, b)
        for a, b in zip(truths, bundle.truths):
            assert np.array_equal(a, b.frame_labels)

    def test_byte_identical(self, temp_dir):
        for name in ("a", "b"):
            write_bundle(make_experiment("poisson-hsmm", seed=2, n_sequences=2, T=30), temp_dir / name)
        for f in ("data.csv", "truth.csv", "meta.json"):
            assert (temp_dir / "a" / f).read_bytes() == (temp_dir / "b" / f).read_bytes()

    def test_meta_is_json(self, tiny_dataset):
        with open(tiny_dataset / "meta.json") as f:
            meta = json.load(f)
        assert meta["num_states"] == 4
        assert len(meta["truth_segments"]) == 2

    def test_without_truth_or_meta(self, temp_dir):
        (temp_dir / "plain").mkdir()
        np.savetxt(temp_dir / "plain" / "data.csv", np.arange(12.0).reshape(6, 2), delimiter=",")
        sequences, truths, meta = load_dataset(temp_dir / "plain")
        assert truths is None and meta == {}
        assert len(sequences) == 1 and sequences[0].shape == (6, 2)

    def test_missing_data(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load_dataset(temp_dir)

    def test_inconsistent_lengths(self, tiny_dataset):
        meta = json.loads((tiny_dataset / "meta.json").read_text())
        meta["lengths"] = [60, 61]
        (tiny_dataset / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(InvalidParameterError):
            load_dataset(tiny_dataset)
