"""Detection and certification of almost periodicity on finite windows.

Infinite sequences and functions are realized on finite symmetric windows;
every supremum below is a supremum over the scanned window and each report
states the range that was scanned.  Three objects are handled:

* windowed sequences ``x_k`` (values in R^d, optionally with a weighted
  Euclidean norm such as the fractional-power norm),
* strongly almost periodic point sets ``tau_k = a k + c_k``,
* left-continuous piecewise sampled functions with listed discontinuities.

``harmonize`` finds a common pair (integer shift q, real shift r) for a
sequence, a point set and a piecewise function via the tent-smoothed saw
functions ``F1(t) = sum phi(t - tau_j) B_j`` and ``F2(t) = sum phi(t - tau_j)``
with ``phi(t) = max(0, 1 - |t|/theta')``, scanning candidate r on the grid
and re-verifying all three deviation bounds directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trig import SeqGen

__all__ = [
    "StronglyAPSet",
    "PiecewiseSampledFunction",
    "EpsPeriodReport",
    "WindowTooShortError",
    "eps_almost_periods",
    "wexler_deviation",
    "harmonize",
]


class WindowTooShortError(ValueError):
    """Not enough data for the requested shift range."""


def _value_norms(diff, weights=None):
    """Norms of an array of value differences, last axis = value dimension."""
    diff = np.asarray(diff, dtype=float)
    if diff.ndim == 1:
        return np.abs(diff if weights is None else weights * diff)
    if weights is not None:
        diff = diff * weights
    return np.sqrt(np.sum(diff**2, axis=-1))


@dataclass(frozen=True)
class StronglyAPSet:
    """Point set tau_k = a k + c_k on an integer window [j_min, j_max]."""

    a: float
    c: object  # SeqGen or explicit array over the window
    window: tuple  # (j_min, j_max), inclusive

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError("mean gap a must be positive")
        taus = self.taus()
        gaps = np.diff(taus)
        if np.any(gaps <= 0.0):
            raise ValueError("tau_k must be strictly increasing on the window")

    def indices(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    def offsets(self) -> np.ndarray:
        j = self.indices()
        if isinstance(self.c, SeqGen) or callable(self.c):
            return np.asarray(self.c(j), dtype=float)
        c = np.asarray(self.c, dtype=float)
        if c.size != j.size:
            raise ValueError("explicit offset window does not match the index window")
        return c

    def taus(self) -> np.ndarray:
        return self.a * self.indices() + self.offsets()

    @property
    def theta(self) -> float:
        """Minimal separation min_k (tau_{k+1} - tau_k) on the window."""
        return float(np.min(np.diff(self.taus())))


@dataclass(frozen=True)
class PiecewiseSampledFunction:
    """Left-continuous function sampled on a uniform time grid.

    values has shape (T,) or (T, d); discontinuities is a sorted list of
    jump locations (those outside the grid span are dropped).
    """

    t0: float
    h_t: float
    values: np.ndarray
    discontinuities: np.ndarray = field(default_factory=lambda: np.empty(0))
    weights: np.ndarray | None = None  # value-space norm weights

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        d = np.sort(np.asarray(self.discontinuities, dtype=float))
        d = d[(d >= self.t0) & (d <= self.t_end)]
        object.__setattr__(self, "discontinuities", d)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def t_end(self) -> float:
        return self.t0 + self.h_t * (np.asarray(self.values).shape[0] - 1)

    def grid(self) -> np.ndarray:
        return self.t0 + self.h_t * np.arange(self.n_samples)

    def dist_to_discontinuities(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.discontinuities.size == 0:
            return np.full(t.shape, np.inf)
        return np.min(np.abs(t[:, None] - self.discontinuities[None, :]), axis=1)


def eps_almost_periods(seq, eps, p_range, k_min=0, weights=None) -> "EpsPeriodReport":
    """All integer shifts p in p_range with sup_k |x_{k+p} - x_k| < eps.

    ``seq`` is the windowed value array (first axis = index k, starting at
    ``k_min``); the supremum runs over the overlap of the window with its
    shift.  Requires the window to be at least three times longer than the
    largest requested |p| so overlaps stay meaningful.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    seq = np.asarray(seq, dtype=float)
    n = seq.shape[0]
    p_lo, p_hi = int(p_range[0]), int(p_range[1])
    max_abs_p = max(abs(p_lo), abs(p_hi))
    if max_abs_p > 0 and n < 3 * max_abs_p:
        raise WindowTooShortError(
            "window too short: %d samples for |p| up to %d" % (n, max_abs_p)
        )
    periods = []
    for p in range(p_lo, p_hi + 1):
        if p >= 0:
            a, b = seq[p:], seq[: n - p]
        else:
            a, b = seq[: n + p], seq[-p:]
        if a.shape[0] == 0:
            raise WindowTooShortError("window too short: empty overlap at p=%d" % p)
        if float(np.max(_value_norms(a - b, weights))) < eps:
            periods.append(p)
    return EpsPeriodReport.from_periods(eps, periods, (p_lo, p_hi), (k_min, k_min + n - 1))


@dataclass(frozen=True)
class EpsPeriodReport:
    epsilon: float
    periods: tuple
    max_gap: float | None
    relatively_dense: bool
    p_range: tuple = (0, 0)
    k_range: tuple = (0, 0)

    @staticmethod
    def from_periods(eps, periods, p_range, k_range):
        periods = tuple(sorted(periods))
        if len(periods) >= 2:
            max_gap = float(np.max(np.diff(periods)))
        else:
            max_gap = None
        return EpsPeriodReport(
            epsilon=eps,
            periods=periods,
            max_gap=max_gap,
            relatively_dense=max_gap is not None and np.isfinite(max_gap),
            p_range=tuple(p_range),
            k_range=tuple(k_range),
        )

    def as_record(self) -> dict:
        rec = {
            "epsilon": self.epsilon,
            "n_periods": len(self.periods),
            "max_gap": self.max_gap if self.max_gap is not None else "none",
            "relatively_dense": self.relatively_dense,
            "p_range": "%d..%d" % self.p_range,
            "k_range": "%d..%d" % self.k_range,
        }
        rec["periods"] = " ".join(str(p) for p in self.periods)
        return rec


def wexler_deviation(f: PiecewiseSampledFunction, r, eps_guard) -> float:
    """sup over guarded grid points of |f(t + r) - f(t)|.

    Grid points within ``eps_guard`` of a recorded discontinuity are skipped
    (the Wexler definition excludes eps-neighborhoods of the jumps).  The
    shift is evaluated on the grid, with linear interpolation when r is not
    a grid multiple.
    """
    if eps_guard <= 0.0:
        raise ValueError("eps_guard must be positive")
    n = f.n_samples
    steps = r / f.h_t
    n_floor = int(np.floor(steps))
    frac = steps - n_floor
    if frac < 1e-12 or frac > 1.0 - 1e-12:
        n_shift = int(round(steps))
        frac = 0.0
    else:
        n_shift = n_floor
    need = n_shift + (1 if frac > 0.0 else 0)
    if need >= n or need <= -n:
        raise WindowTooShortError("insufficient window for shift r=%g" % r)
    if n_shift >= 0:
        base = np.arange(0, n - need)
    else:
        base = np.arange(-n_shift, n)
    shifted = f.values[base + n_shift]
    if frac > 0.0:
        shifted = (1.0 - frac) * shifted + frac * f.values[base + n_shift + 1]
    t = f.t0 + f.h_t * base
    mask = f.dist_to_discontinuities(t) >= eps_guard
    if not np.any(mask):
        return 0.0
    diff = shifted[mask] - f.values[base[mask]]
    return float(np.max(_value_norms(diff, f.weights)))


def _tent(t, half_width):
    return np.maximum(0.0, 1.0 - np.abs(t) / half_width)


def _saw_functions(taus, B, t_grid, half_width):
    """F1(t) = sum phi(t - tau_j) B_j and F2(t) = sum phi(t - tau_j)."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    F1 = np.zeros((t_grid.size, B.shape[1]))
    F2 = np.zeros(t_grid.size)
    t0 = t_grid[0]
    h = t_grid[1] - t_grid[0] if t_grid.size > 1 else 1.0
    for tau, b in zip(taus, B):
        i0 = max(0, int(np.floor((tau - half_width - t0) / h)))
        i1 = min(t_grid.size, int(np.ceil((tau + half_width - t0) / h)) + 1)
        if i0 >= i1:
            continue
        phi = _tent(t_grid[i0:i1] - tau, half_width)
        F1[i0:i1] += phi[:, None] * b
        F2[i0:i1] += phi
    return F1, F2


def harmonize(B, taus: StronglyAPSet, f: PiecewiseSampledFunction, eps,
              weights=None, q_range=None, r_refine=None):
    """Common almost-period pair (q, r) for a sequence, a point set and a function.

    Returns (q, r) with, on the scanned window,
    ``sup_k |B_{k+q} - B_k| < eps``, ``sup_k |(tau_{k+q} - tau_k) - r| < eps``
    and ``wexler_deviation(f, r, eps) < eps``; or None when no candidate in
    the scan range passes (the scan range is visible via ``q_range``).

    Candidate construction follows the saw-function proof device: for each
    integer q the tent-smoothed set function F2 is aligned with its shift to
    pick r on the grid, and the three bounds are then re-checked directly.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    tau_vals = taus.taus()
    theta = taus.theta
    half_width = theta / 4.0 * (1.0 - 1e-9)
    if theta <= 0.0:
        raise ValueError("point set must be separated")
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    if tau_vals.size != n:
        raise ValueError("sequence window and point-set window must agree")
    if q_range is None:
        q_max = max(1, n // 3)
        q_range = (1, q_max)
    t_grid = f.grid()
    F1, F2 = _saw_functions(tau_vals, B, t_grid, half_width)

    best = None
    for q in range(q_range[0], q_range[1] + 1):
        if q <= 0 or q >= n:
            continue
        # bound 1: sequence shift
        dev_B = float(np.max(_value_norms(B[q:] - B[:-q], weights)))
        if dev_B >= eps:
            continue
        # bound 2: point-set shift; r scanned on the grid near the gap values
        gaps = tau_vals[q:] - tau_vals[:-q]
        r_center = 0.5 * (np.min(gaps) + np.max(gaps))
        if np.max(gaps) - np.min(gaps) >= 2.0 * eps:
            continue
        # cover the full admissible band r in (max gaps - eps, min gaps + eps)
        n_r = r_refine if r_refine is not None else min(400, int(np.ceil(eps / f.h_t)) + 1)
        r_candidates = r_center + f.h_t * np.arange(-n_r, n_r + 1)
        for r in r_candidates:
            dev_tau = float(np.max(np.abs(gaps - r)))
            if dev_tau >= eps:
                continue
            # saw-function screening: shifted F2 must align before the
            # (more expensive) direct function check
            n_shift = int(round(r / f.h_t))
            if abs(n_shift) >= t_grid.size - 1:
                continue
            if n_shift >= 0:
                base = np.arange(0, t_grid.size - n_shift)
            else:
                base = np.arange(-n_shift, t_grid.size)
            # compare only where both t and t + r lie inside the tent-covered
            # span of the point set (the function window may extend past it)
            lo = tau_vals[0] + half_width
            hi = tau_vals[-1] - half_width
            tb = t_grid[base]
            ts = t_grid[base + n_shift]
            cov = (tb >= lo) & (tb <= hi) & (ts >= lo) & (ts <= hi)
            if np.any(cov):
                idx = base[cov]
                saw_dev = float(np.max(np.abs(F2[idx + n_shift] - F2[idx])))
            else:
                saw_dev = 0.0
            if saw_dev >= min(1.0, eps / half_width + 1e-12) and dev_tau >= f.h_t:
                continue
            try:
                dev_f = wexler_deviation(f, r, eps)
            except WindowTooShortError:
                continue
            if dev_f < eps:
                best = (q, float(r))
                break
        if best is not None:
            break
    return best
