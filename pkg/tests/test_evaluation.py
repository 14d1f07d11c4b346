"""
Tests for segmentation metrics and trace summaries.
"""
import numpy as np
import pytest

from errors import InvalidParameterError
from evaluation import (
    duration_summary,
    greedy_match,
    hamming_error,
    nearest_rank_percentile,
    summarize_traces,
    used_states,
)


class TestHamming:
    """Test the greedy-matched Hamming error."""

    def test_identical(self):
        assert hamming_error([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 0.0

    def test_half_wrong(self):
        assert hamming_error([0, 0, 1, 1], [0, 0, 0, 0]) == 0.5

    def test_label_permutation(self):
        assert hamming_error([5, 5, 3, 3, 9], [0, 0, 1, 1, 2]) == 0.0

    def test_permutation_invariant(self, rng):
        truth = rng.integers(0, 4, size=200)
        inferred = rng.integers(0, 6, size=200)
        perm = rng.permutation(6)
        assert hamming_error(perm[inferred], truth) == hamming_error(inferred, truth)

    def test_extra_states_unmatched(self):
        match = greedy_match([0, 0, 1, 2, 2, 3], [7, 7, 7, 8, 8, 8])
        assert match.mapping == {0: 7, 2: 8}
        assert match.unmatched == (1, 3)
        assert match.error == pytest.approx(2 / 6)

    def test_tie_break(self):
        """Equal overlaps go to the smallest inferred label first."""
        match = greedy_match([0, 1], [5, 5])
        assert match.mapping == {0: 5}

    def test_bounded(self, rng):
        for _ in range(50):
            err = hamming_error(rng.integers(0, 3, size=30), rng.integers(0, 3, size=30))
            assert 0.0 <= err < 1.0

    @pytest.mark.parametrize("a,b", [([0, 1], [0]), ([], [])])
    def test_rejects(self, a, b):
        with pytest.raises(InvalidParameterError):
            hamming_error(a, b)


class TestUsedStates:
    """Test thresholded state counts."""

    def test_threshold_boundary(self):
        labels = [0] * 95 + [1] * 5
        assert used_states(labels, 0.05) == 2
        assert used_states(labels, 0.051) == 1

    def test_zero_threshold_counts_all(self):
        assert used_states([3, 1, 4, 1, 5], 0.0) == 4

    def test_bad_threshold(self):
        with pytest.raises(InvalidParameterError):
            used_states([0, 1], 1.0)


class TestPercentile:
    """Test nearest-rank percentiles."""

    def test_twenty_five_chains(self):
        values = list(range(100, 125))
        rng = np.random.default_rng(0)
        rng.shuffle(values)
        assert nearest_rank_percentile(values, 10) == 102
        assert nearest_rank_percentile(values, 50) == 112
        assert nearest_rank_percentile(values, 90) == 122

    def test_extremes(self):
        assert nearest_rank_percentile([4.0, 2.0, 9.0], 0) == 2.0
        assert nearest_rank_percentile([4.0, 2.0, 9.0], 100) == 9.0

    def test_rejects(self):
        with pytest.raises(InvalidParameterError):
            nearest_rank_percentile([], 50)
        with pytest.raises(InvalidParameterError):
            nearest_rank_percentile([1.0], 101)


class TestSummaries:
    """Test trace and duration summaries."""

    def records(self):
        out = []
        for chain in range(4):
            for it in (1, 2):
                out.append({"chain": chain, "iteration": it, "hamming_error": 0.1 * chain + 0.5 * (2 - it),
                            "used_states": 3 + chain % 2})
        return out

    def test_summary_rows(self):
        summary, hist = summarize_traces(self.records())
        assert [row["iteration"] for row in summary] == [1, 2]
        last = summary[1]
        assert last["chains"] == 4
        assert last["median"] == pytest.approx(0.1)
        assert last["p10"] == pytest.approx(0.0)
        assert last["p90"] == pytest.approx(0.3)
        assert hist == [{"used_states": 3, "chains": 2, "frequency": 0.5},
                        {"used_states": 4, "chains": 2, "frequency": 0.5}]

    def test_records_without_truth(self, capsys):
        recs = [{"chain": 0, "iteration": 1, "hamming_error": None, "used_states": 2}]
        summary, hist = summarize_traces(recs)
        assert summary == []
        assert hist[0]["used_states"] == 2
        assert "[WARN]" in capsys.readouterr().out

    def test_duration_summary(self):
        finals = [
            {"seg": {"labels": [0, 1, 0], "durations": [40, 50, 10]},
             "dur_params": [{"family": "negbin", "r": 1, "p": 0.2}, {"family": "negbin", "r": 3, "p": 0.5}]},
            {"seg": {"labels": [0, 1], "durations": [99, 1]},
             "dur_params": [{"family": "negbin", "r": 1, "p": 0.2}, {"family": "negbin", "r": 2, "p": 0.5}]},
        ]
        out = duration_summary(finals, threshold=0.05)
        assert out["families"] == {"negbin": 3}
        assert out["negbin_r1_fraction"] == pytest.approx(2 / 3)

    def test_duration_summary_waits(self):
        finals = [{"seg": {"labels": [0], "durations": [30]},
                   "dur_params": [{"family": "delayed-geometric", "wait": 12, "p": 0.5}]}]
        out = duration_summary(finals)
        assert out["waits"] == [12]
        assert "negbin_r1_fraction" not in out
