"""Piecewise trajectories of impulsive evolution: segments plus hit records.

The state convention is left-continuity: the value stored at a segment's
final node is the pre-jump limit u(T_j) = u(T_j - 0); the next segment opens
at the same time with the post-jump state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Segment", "HitRecord", "PiecewiseTrajectory"]


@dataclass(frozen=True)
class Segment:
    t: np.ndarray  # strictly increasing node times
    states: np.ndarray  # shape (len(t), N)

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))

    def interp(self, t) -> np.ndarray:
        """Linear interpolation of the coefficients inside the segment."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.states.shape[1]))
        for j in range(self.states.shape[1]):
            out[:, j] = np.interp(t, self.t, self.states[:, j])
        return out


@dataclass(frozen=True)
class HitRecord:
    time: float
    surface: int
    pre: np.ndarray
    post: np.ndarray


@dataclass
class PiecewiseTrajectory:
    segments: list
    hits: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def t_start(self) -> float:
        return float(self.segments[0].t[0])

    @property
    def t_end(self) -> float:
        return float(self.segments[-1].t[-1])

    def hit_times(self) -> np.ndarray:
        return np.array([h.time for h in self.hits])

    def segment_containing(self, t: float) -> Segment:
        """Segment whose half-open span (start, end] contains t (left-continuous)."""
        for seg in self.segments:
            if seg.t[0] < t <= seg.t[-1]:
                return seg
        if t <= self.segments[0].t[0]:
            return self.segments[0]
        return self.segments[-1]

    def eval(self, t: float) -> np.ndarray:
        return self.segment_containing(t).interp(t)[0]

    def eval_many(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.stack([self.eval(t) for t in times])

    def all_nodes(self):
        """Concatenated (t, states) over all segments, duplicating jump times."""
        t = np.concatenate([seg.t for seg in self.segments])
        s = np.concatenate([seg.states for seg in self.segments])
        return t, s

    def final_state(self) -> np.ndarray:
        return self.segments[-1].states[-1]
