"""
Evaluation metrics for fitted segmentations: normalized Hamming error under
greedy label matching, used-state counts, and trace summaries.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from durations import DelayedGeomDur, NegBinDur, durations_from_dict
from errors import InvalidParameterError


@dataclass(frozen=True)
class LabelMatch:
    """Injective map from inferred labels to true labels, built greedily."""
    mapping: Dict[int, int]
    unmatched: Tuple[int, ...]
    matched_frames: int
    total_frames: int

    @property
    def error(self) -> float:
        return 1.0 - self.matched_frames / self.total_frames


def _check_pair(inferred, truth) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(inferred, dtype=np.int64).ravel()
    b = np.asarray(truth, dtype=np.int64).ravel()
    if a.shape != b.shape:
        raise InvalidParameterError(f"label sequences differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidParameterError("label sequences are empty")
    return a, b


def greedy_match(inferred: Sequence[int], truth: Sequence[int]) -> LabelMatch:
    """
    Repeatedly pair the (inferred, true) labels with the largest frame
    overlap and remove both. Ties go to the smallest inferred label, then
    the smallest true label.
    """
    a, b = _check_pair(inferred, truth)
    inf_labels, a_idx = np.unique(a, return_inverse=True)
    true_labels, b_idx = np.unique(b, return_inverse=True)
    overlap = np.zeros((inf_labels.size, true_labels.size), dtype=np.int64)
    np.add.at(overlap, (a_idx, b_idx), 1)

    work = overlap.copy()
    mapping, matched = {}, 0
    for _ in range(min(work.shape)):
        # argmax scans row-major, which is the tie-break order
        i, j = np.unravel_index(np.argmax(work), work.shape)
        mapping[int(inf_labels[i])] = int(true_labels[j])
        matched += int(overlap[i, j])
        work[i, :] = -1
        work[:, j] = -1
    unmatched = tuple(int(z) for z in inf_labels if int(z) not in mapping)
    return LabelMatch(mapping=mapping, unmatched=unmatched, matched_frames=matched, total_frames=a.size)


def hamming_error(inferred: Sequence[int], truth: Sequence[int]) -> float:
    """Fraction of frames left unexplained by the greedy label matching."""
    return greedy_match(inferred, truth).error


def used_states(frame_labels: Sequence[int], threshold: float) -> int:
    """Number of labels covering at least `threshold` of the frames."""
    if not (0.0 <= threshold < 1.0):
        raise InvalidParameterError(f"threshold must be in [0, 1), got {threshold}")
    x = np.asarray(frame_labels, dtype=np.int64).ravel()
    if x.size == 0:
        return 0
    _, counts = np.unique(x, return_counts=True)
    return int(np.count_nonzero(counts / x.size >= threshold))


def nearest_rank_percentile(values: Iterable[float], q: float) -> float:
    """The ceil(q/100 * n)-th smallest value (rank at least 1)."""
    v = sorted(float(x) for x in values)
    if not v:
        raise InvalidParameterError("percentile of an empty list")
    if not (0.0 <= q <= 100.0):
        raise InvalidParameterError(f"percentile must be in [0, 100], got {q}")
    rank = max(1, math.ceil(q / 100.0 * len(v)))
    return v[rank - 1]


def summarize_traces(records: Iterable[dict]) -> Tuple[List[dict], List[dict]]:
    """
    Per-iteration (median, p10, p90) of the normalized Hamming error across
    chains, and the histogram of used-state counts at each chain's final
    iteration. Returns (summary rows, histogram rows).
    """
    by_iter: Dict[int, List[float]] = {}
    final: Dict[int, dict] = {}
    missing_truth = False
    for rec in records:
        chain, it = int(rec["chain"]), int(rec["iteration"])
        if chain not in final or it >= final[chain]["iteration"]:
            final[chain] = rec
        err = rec.get("hamming_error")
        if err is None:
            missing_truth = True
            continue
        by_iter.setdefault(it, []).append(float(err))
    if missing_truth:
        print("[EVAL] [WARN] some trace records carry no Hamming error (no truth); error columns omitted for them")

    summary = [
        {
            "iteration": it,
            "chains": len(errs),
            "median": nearest_rank_percentile(errs, 50),
            "p10": nearest_rank_percentile(errs, 10),
            "p90": nearest_rank_percentile(errs, 90),
        }
        for it, errs in sorted(by_iter.items())
    ]
    hist = Counter(int(rec["used_states"]) for rec in final.values())
    total = sum(hist.values())
    histogram = [{"used_states": k, "chains": c, "frequency": c / total} for k, c in sorted(hist.items())]
    return summary, histogram


def duration_summary(final_states: Iterable[dict], threshold: float = 0.0) -> dict:
    """
    Learned duration distributions of the used states in serialized final
    states: family counts, the fraction of negative-binomial states with
    r = 1, and the delayed-geometric waits.
    """
    families = Counter()
    r_values, waits = [], []
    for state in final_states:
        labels = state["seg"]["labels"]
        durations = state["seg"]["durations"]
        frames = Counter()
        for z, d in zip(labels, durations):
            frames[z] += d
        T = sum(durations)
        for z, count in sorted(frames.items()):
            if count / T < threshold:
                continue
            dur = durations_from_dict(state["dur_params"][z])
            families[dur.name] += 1
            if isinstance(dur, NegBinDur):
                r_values.append(dur.r)
            elif isinstance(dur, DelayedGeomDur):
                waits.append(dur.wait)
    out = {"families": dict(families), "waits": waits}
    if r_values:
        out["negbin_r1_fraction"] = sum(r == 1 for r in r_values) / len(r_values)
    return out

