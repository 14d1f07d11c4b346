"""
Messages-backwards, sample-forwards block sampling of a whole segmentation.

Given backward messages for a fixed model, the first label is drawn from
p(x_1 = i | y) ∝ init[i] beta*_0(i); each segment length from
p(D = d | ...) ∝ pmf(d) lik(segment) beta_{t+d}(i) (or the censored outcome);
each following label from pi~[i, j] beta*_t(j). The draw is an exact sample
from the joint posterior over labels and durations.
"""

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from distributions import categorical_sample
from errors import EmptySupportError, ImpossibleEvidenceError, InvalidParameterError
from messages import MessageTable


@dataclass(frozen=True, eq=False)
class SegmentSequence:
    """
    Ordered (label, duration) segments covering frames 0..T-1.

    Durations are observed lengths, so they always sum to T. When
    `censored_last` is set the final segment ran past the window and its
    stored duration is only the observed part.
    """
    labels: Tuple[int, ...]
    durations: Tuple[int, ...]
    censored_last: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(z) for z in self.labels))
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))

    @property
    def num_segments(self) -> int:
        return len(self.labels)

    @property
    def T(self) -> int:
        return int(sum(self.durations))

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.durations)[:-1]]).astype(np.int64)

    def validate(self, T: int = None) -> "SegmentSequence":
        if len(self.labels) != len(self.durations) or not self.labels:
            raise InvalidParameterError("segment sequence needs matching, non-empty labels and durations")
        if min(self.durations) < 1:
            raise InvalidParameterError(f"segment durations must be >= 1, got {self.durations}")
        if min(self.labels) < 0:
            raise InvalidParameterError("segment labels must be non-negative")
        if any(a == b for a, b in zip(self.labels, self.labels[1:])):
            raise InvalidParameterError(f"adjacent segments share a label: {self.labels}")
        if T is not None and self.T != T:
            raise InvalidParameterError(f"segments cover {self.T} frames, expected {T}")
        return self

    def to_frame_labels(self) -> np.ndarray:
        return np.repeat(np.asarray(self.labels, dtype=np.int64), self.durations)

    @classmethod
    def from_frame_labels(cls, frame_labels: Iterable[int], censored_last: bool = False) -> "SegmentSequence":
        x = np.asarray(list(frame_labels), dtype=np.int64)
        if x.size == 0:
            raise InvalidParameterError("cannot segment an empty label sequence")
        edges = np.flatnonzero(np.diff(x)) + 1
        starts = np.concatenate([[0], edges])
        ends = np.concatenate([edges, [x.size]])
        return cls(labels=tuple(x[starts]), durations=tuple(ends - starts), censored_last=censored_last)

    def durations_for(self, state: int) -> Tuple[List[int], List[int]]:
        """
        (complete durations, censored lower bounds) of the segments labelled
        `state`. A censored segment of observed length l enters as D >= l + 1.
        """
        complete, censored = [], []
        last = self.num_segments - 1
        for s, (z, d) in enumerate(zip(self.labels, self.durations)):
            if z != state:
                continue
            if s == last and self.censored_last:
                censored.append(d + 1)
            else:
                complete.append(d)
        return complete, censored

    def transition_counts(self, num_states: int) -> np.ndarray:
        """n[j, k]: number of observed j -> k super-state transitions."""
        n = np.zeros((num_states, num_states), dtype=np.int64)
        z = np.asarray(self.labels, dtype=np.int64)
        if z.size > 1:
            np.add.at(n, (z[:-1], z[1:]), 1)
        return n

    def relabel(self, mapping: Sequence[int]) -> "SegmentSequence":
        return SegmentSequence(labels=tuple(int(mapping[z]) for z in self.labels),
                               durations=self.durations, censored_last=self.censored_last)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "durations": list(self.durations),
                "censored_last": self.censored_last}

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentSequence":
        return cls(labels=tuple(d["labels"]), durations=tuple(d["durations"]),
                   censored_last=bool(d.get("censored_last", False)))


def _draw(logits: np.ndarray, rng: np.random.Generator, what: str) -> int:
    try:
        return categorical_sample(logits, rng)
    except EmptySupportError:
        raise ImpossibleEvidenceError(f"{what}: the observations have zero probability under the model")


def sample_first_state(msgs: MessageTable, init: np.ndarray, rng: np.random.Generator) -> int:
    init = np.asarray(init, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logits = np.log(init) + msgs.logBstar[0]
    return _draw(logits, rng, "first state")


def sample_segment_duration(msgs: MessageTable, cum: np.ndarray, family, state: int,
                            start: int, rng: np.random.Generator) -> Tuple[int, bool]:
    """
    Draw the length of a segment in `state` whose first frame is `start`
    (0-based, so frames start..start+d-1). Returns (duration, censored);
    a censored draw covers every remaining frame.
    """
    T = msgs.T
    if not (0 <= start < T):
        raise InvalidParameterError(f"segment start {start} outside 0..{T - 1}")
    remaining = T - start
    D = min(msgs.d_max, remaining)
    ds = np.arange(1, D + 1)
    logits = (family.log_pmf(ds)
              + (cum[start + 1:start + D + 1, state] - cum[start, state])
              + msgs.logB[start + 1:start + D + 1, state])
    if msgs.censoring and remaining <= msgs.d_max and msgs.final_states[state]:
        tail = family.log_sf(remaining) + cum[T, state] - cum[start, state]
        logits = np.append(logits, tail)
    k = _draw(logits, rng, f"duration of state {state} at frame {start}")
    if k == D:
        return remaining, True
    return int(ds[k]), False


def sample_segmentation(msgs: MessageTable, cum: np.ndarray, families: Sequence,
                        log_kernel: np.ndarray, init: np.ndarray,
                        rng: np.random.Generator) -> SegmentSequence:
    """Exact joint posterior draw of labels and durations given the model."""
    T = msgs.T
    labels, durations = [], []
    censored = False
    t = 0
    state = sample_first_state(msgs, init, rng)
    while True:
        d, censored = sample_segment_duration(msgs, cum, families[state], state, t, rng)
        labels.append(state)
        durations.append(d)
        t += d
        if censored or t >= T:
            break
        state = _draw(log_kernel[state] + msgs.logBstar[t], rng, f"transition out of state {state}")
    return SegmentSequence(labels=tuple(labels), durations=tuple(durations), censored_last=censored)
