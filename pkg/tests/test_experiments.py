"""
Experiment-scale checks on the synthetic datasets.

Every test here runs full chains on the worker pool and belongs to the slow
tier (pytest -m slow).
"""
from collections import Counter

import numpy as np
import pytest

from blocksampler import SegmentSequence
from chain_runner import ChainRunner
from config import DEFAULT_SETTINGS, RunConfig, merge_settings
from evaluation import duration_summary, nearest_rank_percentile, used_states
from genmodel import make_experiment
from run_manager import RunManager, read_finals

pytestmark = pytest.mark.slow


async def fit(bundle, out, **patch):
    """Run chains on `bundle`; returns (chain results, final states in chain order)."""
    config = RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, patch))
    manager = RunManager(out)
    truths = [t.frame_labels for t in bundle.truths]
    results = await ChainRunner(config, bundle.sequences, truths, manager, workers=4).run()
    failed = [r for r in results if isinstance(r, BaseException)]
    assert not failed, failed
    finals = sorted(read_finals(manager.final_dir), key=lambda f: f["chain"])
    return results, finals


def modal_used_states(results) -> int:
    return Counter(r.used_states for r in results).most_common(1)[0][0]


def tone_waits(final: dict, threshold: float) -> list:
    """Learned waits of the used states whose emission mean puts energy in band 2."""
    seg = SegmentSequence.from_dict(final["seg"])
    x = seg.to_frame_labels()
    waits = []
    for z in sorted(set(seg.labels)):
        if np.mean(x == z) < threshold:
            continue
        if final["obs_params"][z]["mean"][2] > 1.5:
            waits.append(final["dur_params"][z]["wait"])
    return waits


class TestPoissonHSMM:
    """Poisson-duration HDP-HSMM against the geometric baseline on mixture data."""

    async def test_hsmm_beats_geometric_baseline(self, temp_dir):
        bundle = make_experiment("poisson-hsmm", seed=0, n_sequences=5, T=500)
        common = {"chains": 25, "iterations": 200, "seed": 1,
                  "observation": {"emission": "mixture", "components": 2}}
        hsmm, _ = await fit(bundle, temp_dir / "hsmm", model="hdp-hsmm-weak-limit",
                            duration={"family": "poisson"}, **common)
        hmm, _ = await fit(bundle, temp_dir / "hmm", model="hdp-hmm-equivalent", **common)

        def median_error(results):
            return nearest_rank_percentile([r.hamming_error for r in results], 50)

        assert median_error(hsmm) < median_error(hmm)
        assert sum(r.used_states == 4 for r in hsmm) > len(hsmm) / 2
        assert modal_used_states(hmm) != 4


class TestNegBinDurations:
    """NegBin durations fitted to geometric-duration data."""

    async def test_r_concentrates_at_one(self, temp_dir):
        bundle = make_experiment("hmm-10d", seed=0, n_sequences=5, T=500)
        _, finals = await fit(bundle, temp_dir / "negbin", chains=10, iterations=100, seed=2,
                              duration={"family": "negbin", "r_support": [1, 2, 3, 4, 5, 6]})
        assert duration_summary(finals, threshold=0.05)["negbin_r1_fraction"] >= 0.7


class TestMorse:
    """Tone states that share emissions and differ only in duration."""

    THRESHOLD = 0.05

    async def test_delayed_geometric_separates_tones(self, temp_dir):
        bundle = make_experiment("morse-synth", seed=7, n_sequences=9, T=500)
        results, finals = await fit(bundle, temp_dir / "hsmm", chains=9, iterations=200, seed=3,
                                    duration={"family": "delayed-geometric"},
                                    used_state_threshold=self.THRESHOLD)
        separated = 0
        for result, final in zip(results, finals):
            waits = tone_waits(final, self.THRESHOLD)
            if result.used_states == 3 and len(waits) == 2 and waits[0] != waits[1]:
                separated += 1
        assert separated >= 5

    async def test_geometric_baseline_merges_tones(self, temp_dir):
        bundle = make_experiment("morse-synth", seed=7, n_sequences=9, T=500)
        results, finals = await fit(bundle, temp_dir / "hmm", model="hdp-hmm-equivalent", chains=9,
                                    iterations=200, seed=3, used_state_threshold=self.THRESHOLD)
        assert modal_used_states(results) == 2
        labels = SegmentSequence.from_dict(finals[0]["seg"]).to_frame_labels()
        assert used_states(labels, self.THRESHOLD) == results[0].used_states
