"""Hybrid simulation of the semilinear system with state-dependent impulses.

The flow between impulses solves ``u' + (A + A_1(t))u = f(t, u)`` per mode
with an exponential trapezoid integrator (exact nonautonomous linear
propagation, two-point variation-of-constants weights, step doubling).  The
impulse surfaces are ``tau_j(x) = t_j + b_j Q(x)`` with the energy functional
``Q(x) = int_0^l u^2 = sum_k x_k^2``; crossings of ``zeta_j(t) =
t - tau_j(u(t))`` are bracketed on the dense output and bisected to
``event_tol``, with grazing contacts classified as no-hit.

``beating_certificate`` checks the two repeated-hit exclusion hypotheses on
sampled non-negative states: ``theta_j(x) = tau_j(x + g_j(x)) - tau_j(x) <= 0``
and the explicit functional

    P(u) = -2 b_j int u_xi^2 + 2 b_j a(tau) int u^2 (1 - b(tau) u) < 1,

together with the threshold ``beta_0 = 0.5 ((1 + sup[ab])(rho^2 +
sqrt(l) rho^3))^{-1}`` under which the bound holds automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .ap_analysis import StronglyAPSet
from .evolution import LinearCoefficient
from .spectral import DirichletLaplacian
from .trajectory import HitRecord, PiecewiseTrajectory, Segment
from .trig import SeqGen, TrigSum

__all__ = [
    "ImpulseSurfaceSpec",
    "JumpSpec",
    "ImpulseSystemSpec",
    "BeatingCertificate",
    "BallExitError",
    "EventResolutionError",
    "BeatingError",
    "SeparationError",
    "JUMP_MAP_CATALOGUE",
    "step_segment",
    "detect_crossing",
    "apply_jump",
    "simulate",
    "beating_certificate",
    "segment_residual",
]


class BallExitError(RuntimeError):
    """The state left the admissible ball U^alpha_rho."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class EventResolutionError(RuntimeError):
    """More than one surface crossing inside one integration step."""


class BeatingError(RuntimeError):
    """Repeated hit on a surface whose beating certificate passed."""


class SeparationError(ValueError):
    """Surface time intervals over the ball overlap: hypothesis (H3) fails."""


# scalar Lipschitz maps I with I(0) = 0, as (callable, Lipschitz constant)
JUMP_MAP_CATALOGUE = {
    "zero": (lambda u: np.zeros_like(u), 0.0),
    "identity": (lambda u: u, 1.0),
    "relu": (lambda u: np.maximum(u, 0.0), 1.0),
    "tanh": (np.tanh, 1.0),
}


@dataclass(frozen=True)
class ImpulseSurfaceSpec:
    """Surfaces tau_j(x) = t_j + b_j Q(x) over the base set's index window."""

    base: StronglyAPSet
    slopes: object = field(default_factory=lambda: SeqGen.constant(0.0))

    def indices(self) -> np.ndarray:
        return self.base.indices()

    def base_times(self) -> np.ndarray:
        return self.base.taus()

    def slope_window(self) -> np.ndarray:
        j = self.indices()
        if isinstance(self.slopes, SeqGen) or callable(self.slopes):
            return np.asarray(self.slopes(j), dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        if s.size != j.size:
            raise ValueError("explicit slope window does not match the index window")
        return s

    def slope(self, j) -> float:
        pos = int(j) - self.base.window[0]
        return float(self.slope_window()[pos])

    def base_time(self, j) -> float:
        pos = int(j) - self.base.window[0]
        return float(self.base_times()[pos])

    @staticmethod
    def q_functional(x) -> float | np.ndarray:
        """Q(x) = int_0^l u^2 = sum_k x_k^2 (Parseval)."""
        x = np.asarray(x, dtype=float)
        val = np.sum(x * x, axis=-1)
        return float(val) if val.ndim == 0 else val

    def tau(self, j, x) -> float:
        return self.base_time(j) + self.slope(j) * self.q_functional(x)

    @staticmethod
    def ball_q_sup(lap: DirichletLaplacian, alpha: float, rho: float) -> float:
        """sup of Q over |x|_alpha <= rho (extremized by the first mode)."""
        return rho**2 / lap.eigenvalues[0] ** (2.0 * alpha)

    def intervals(self, lap, alpha, rho):
        """Per-surface interval [tau'_j, tau''_j] of tau_j over the ball."""
        rho_q = self.ball_q_sup(lap, alpha, rho)
        t = self.base_times()
        b = self.slope_window()
        lo = t + np.minimum(0.0, b * rho_q)
        hi = t + np.maximum(0.0, b * rho_q)
        return lo, hi

    def separation(self, lap, alpha, rho) -> float:
        """theta = inf_j (tau'_{j+1} - tau''_j) over the window; must be > 0."""
        lo, hi = self.intervals(lap, alpha, rho)
        theta = float(np.min(lo[1:] - hi[:-1]))
        if theta <= 0.0:
            raise SeparationError(
                "surface intervals overlap over the ball (theta = %g <= 0)" % theta
            )
        return theta

    def gap_constant(self, lap, alpha, rho) -> dict:
        """The (H3) triple-gap constant, by formula and by direct measurement.

        The formula value is ``sup_j (c_{j+3} - c_j) + 3a - 2 theta``; the
        measured value is ``sup_j (tau''_{j+1} - tau'_j)``.  Both are
        reported; downstream estimates use the larger.
        """
        theta = self.separation(lap, alpha, rho)
        c = self.base.offsets()
        formula = float(np.max(c[3:] - c[:-3])) + 3.0 * self.base.a - 2.0 * theta
        lo, hi = self.intervals(lap, alpha, rho)
        measured = float(np.max(hi[1:] - lo[:-1]))
        return {"formula": formula, "measured": measured, "value": max(formula, measured)}


@dataclass(frozen=True)
class JumpSpec:
    """Jump maps g_j(x) = amp_j * sum_r K_left[r] <K_right[r], I(u)> + d_j.

    The kernel K_j(xi, zeta) = amp_j sum_r phi_r(xi) chi_r(zeta) is a
    separable low-rank sine expansion; ``left``/``right`` hold the spectral
    coefficients of phi_r / chi_r as (R, N) arrays.  ``nonlinearity`` names a
    catalogue map I with I(0) = 0; ``d`` generates the additive offsets d_j
    (SeqGen with vector values, a fixed array, or None).
    """

    left: np.ndarray | None = None
    right: np.ndarray | None = None
    nonlinearity: str = "zero"
    amp: object = field(default_factory=lambda: SeqGen.constant(1.0))
    d: object = None

    def __post_init__(self):
        if self.nonlinearity not in JUMP_MAP_CATALOGUE:
            raise ValueError(
                "unknown jump nonlinearity %r (catalogue: %s)"
                % (self.nonlinearity, sorted(JUMP_MAP_CATALOGUE))
            )

    @property
    def i_map(self):
        return JUMP_MAP_CATALOGUE[self.nonlinearity][0]

    @property
    def i_lipschitz(self) -> float:
        return JUMP_MAP_CATALOGUE[self.nonlinearity][1]

    def amp_at(self, j) -> float:
        if isinstance(self.amp, SeqGen) or callable(self.amp):
            return float(self.amp(int(j)))
        return float(self.amp)

    def offset(self, j, n_modes) -> np.ndarray:
        if self.d is None:
            return np.zeros(n_modes)
        if isinstance(self.d, SeqGen) or callable(self.d):
            return np.asarray(self.d(int(j)), dtype=float)
        return np.asarray(self.d, dtype=float)

    def g(self, j, x, lap: DirichletLaplacian, xi_grid) -> np.ndarray:
        out = self.offset(j, lap.n_modes)
        if self.left is not None and self.nonlinearity != "zero":
            image = lap.nonlinear_image(x, self.i_map, xi_grid)
            # <chi_r, I(u)> by Parseval on the projected image
            inner = np.asarray(self.right, dtype=float) @ image
            out = out + self.amp_at(j) * (inner @ np.asarray(self.left, dtype=float))
        return out


@dataclass(frozen=True)
class ImpulseSystemSpec:
    """Full problem instance in the diagonal realization.

    The reaction-diffusion form u_t = u_xixi + a(t) u (1 - b(t) u) with
    confinement radius rho splits into the linear coefficient
    m(t) = -a(t) + rho (a b)(t) and the nonlinearity
    f(t, u) = (a b)(t) (rho - u) u; both a and b are trig sums so the split
    is exact.  ``f_override`` freezes f to a state-independent time profile
    (used by linear oracles).
    """

    lap: DirichletLaplacian
    alpha: float
    rho: float
    a: TrigSum
    b: TrigSum
    surfaces: ImpulseSurfaceSpec
    jumps: JumpSpec
    n_xi: int = 256
    f_override: object = None

    @cached_property
    def coeff(self) -> LinearCoefficient:
        return LinearCoefficient(m=(-1.0) * self.a + self.rho * (self.a * self.b))

    @cached_property
    def ab(self) -> TrigSum:
        return self.a * self.b

    @cached_property
    def _xi_grid(self) -> np.ndarray:
        return self.lap.uniform_grid(self.n_xi)

    def xi_grid(self) -> np.ndarray:
        return self._xi_grid

    def f_image(self, x) -> np.ndarray:
        """State part of the nonlinearity: project((rho - u) u)."""
        rho = self.rho
        return self.lap.nonlinear_image(x, lambda u: (rho - u) * u, self.xi_grid())

    def f(self, t, x) -> np.ndarray:
        if self.f_override is not None:
            return np.asarray(self.f_override(t), dtype=float)
        return self.ab(t) * self.f_image(x)

    def tau(self, j, x) -> float:
        return self.surfaces.tau(j, x)

    def g(self, j, x) -> np.ndarray:
        return self.jumps.g(j, x, self.lap, self.xi_grid())

    def in_ball(self, x, slack=1e-9) -> bool:
        return self.lap.frac_norm(x, self.alpha) <= self.rho * (1.0 + slack)


def apply_jump(system: ImpulseSystemSpec, j, x) -> np.ndarray:
    """x + g_j(x), with a hard post-state ball check."""
    if not system.in_ball(x):
        raise BallExitError("pre-jump state outside the admissible ball")
    post = np.asarray(x, dtype=float) + system.g(j, x)
    if not system.in_ball(post):
        raise BallExitError("jump exits ball at surface %d" % int(j))
    return post


# ---------------------------------------------------------------------------
# exponential trapezoid stepper with step doubling
# ---------------------------------------------------------------------------


def _phi_weights(z):
    """(e^{-z}, phi1, A, B) with the two-point variation-of-constants weights.

    A = (1 - (1+z)e^{-z})/z^2 and B = (z - 1 + e^{-z})/z^2 integrate the
    linear interpolant of the nonlinearity against the decay kernel exactly;
    series expansions take over for small z.
    """
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.clip(z, -700.0, 700.0))
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1.0 - z / 2.0 + z**2 / 6.0, (1.0 - ez) / zs)
    A = np.where(small, 0.5 - z / 3.0 + z**2 / 8.0, (1.0 - (1.0 + z) * ez) / zs**2)
    B = np.where(small, 0.5 - z / 6.0 + z**2 / 24.0, (z - 1.0 + ez) / zs**2)
    return ez, phi1, A, B


def _etd2_step(system, t, h, x):
    """One exponential trapezoid step from (t, x) to t + h."""
    rates = system.coeff.rates(system.lap)
    m = system.coeff.m
    z = rates * h + m.integral(t, t + h)
    ez, phi1, A, B = _phi_weights(z)
    f0 = system.f(t, x)
    pred = ez * x + h * phi1 * f0
    f1 = system.f(t + h, pred)
    return ez * x + h * (A * f0 + B * f1)


def step_segment(
    system: ImpulseSystemSpec,
    x0,
    t0: float,
    t1: float,
    seg_tol: float = 1e-8,
    h_max: float = np.inf,
    ball_check: bool = True,
) -> Segment:
    """Integrate the flow on [t0, t1]; adaptive steps by step doubling.

    Each trial step compares one step of size h with two of h/2; the halved
    solution is kept (local extrapolation), and h adapts to keep the
    difference below ``seg_tol``.  Node times of accepted steps form the
    dense output grid.
    """
    if t1 <= t0:
        raise ValueError("segment needs t1 > t0")
    x = np.asarray(x0, dtype=float)
    if ball_check and not system.in_ball(x):
        raise BallExitError("initial state outside the admissible ball", time=t0)
    t = t0
    h = min(h_max, t1 - t0, 0.05)
    nodes = [t0]
    states = [x]
    while t < t1 - 1e-13 * max(1.0, abs(t1)):
        h = min(h, t1 - t, h_max)
        while True:
            coarse = _etd2_step(system, t, h, x)
            half = _etd2_step(system, t, h / 2.0, x)
            fine = _etd2_step(system, t + h / 2.0, h / 2.0, half)
            err = float(np.linalg.norm(fine - coarse)) / 3.0
            if err < seg_tol or h < 1e-12:
                break
            h *= max(0.25, 0.9 * (seg_tol / max(err, 1e-300)) ** (1.0 / 3.0))
        t = t + h
        x = fine
        nodes.append(t)
        states.append(x)
        if ball_check and not system.in_ball(x):
            raise BallExitError("left admissible ball at t = %g" % t, time=t)
        h = h * min(4.0, max(0.25, 0.9 * (seg_tol / max(err, 1e-300)) ** (1.0 / 3.0)))
    return Segment(t=np.asarray(nodes), states=np.stack(states))


def segment_residual(system: ImpulseSystemSpec, seg: Segment, probe: float = 1e-5) -> float:
    """max over interior nodes of |du/dt + (A + A_1(t))u - f(t, u)|_0.

    du/dt is a centered difference over a refined probe step: the dense
    output is locally re-integrated +-probe around each node, because the
    accepted node spacing (chosen by the nonlinearity error only; the stiff
    linear part propagates exactly) is far too coarse to differentiate the
    fast modes directly.
    """
    t, u = seg.t, seg.states
    if t.size < 3:
        return 0.0
    rates = system.coeff.rates(system.lap)
    m = system.coeff.m
    best = 0.0
    for i in range(1, t.size - 1):
        fwd = _etd2_step(system, t[i], probe, u[i])
        bwd = _etd2_step(system, t[i], -probe, u[i])
        du = (fwd - bwd) / (2.0 * probe)
        res = du + (rates + m(t[i])) * u[i] - system.f(t[i], u[i])
        best = max(best, float(np.linalg.norm(res)))
    return best


# ---------------------------------------------------------------------------
# event detection
# ---------------------------------------------------------------------------


def detect_crossing(system: ImpulseSystemSpec, seg: Segment, j, event_tol: float = 1e-10):
    """Earliest upward crossing of zeta(t) = t - tau_j(u(t)) on the segment.

    Returns the hit time, or None when zeta has no sign change (including
    tangential grazing).  Raises EventResolutionError when zeta changes sign
    more than once inside one integration step.
    """
    q = ImpulseSurfaceSpec.q_functional(seg.states)
    zeta = seg.t - (system.surfaces.base_time(j) + system.surfaces.slope(j) * q)

    def zeta_at(t):
        u = seg.interp(t)[0]
        return t - system.tau(j, u)

    for i in range(seg.t.size - 1):
        if not (zeta[i] < 0.0 <= zeta[i + 1]):
            continue
        # reject steps hiding several roots
        probe = np.linspace(seg.t[i], seg.t[i + 1], 10)
        signs = np.sign([zeta_at(tp) for tp in probe])
        flips = int(np.sum(np.abs(np.diff(signs[signs != 0.0])) > 0.0))
        if flips > 1:
            raise EventResolutionError(
                "event resolution too coarse; reduce step (surface %d)" % int(j)
            )
        lo, hi = seg.t[i], seg.t[i + 1]
        while hi - lo > event_tol:
            mid = 0.5 * (lo + hi)
            if zeta_at(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    return None


def simulate(
    system: ImpulseSystemSpec,
    u0,
    t0: float,
    t_end: float,
    seg_tol: float = 1e-8,
    event_tol: float = 1e-10,
    certified_surfaces=(),
) -> PiecewiseTrajectory:
    """Alternate flow segments, crossing detection and jumps on [t0, t_end].

    ``certified_surfaces`` lists surface indices with a passing beating
    certificate; a second hit on such a surface raises BeatingError, while
    uncertified repeats are only counted in ``meta['hit_counts']``.
    """
    theta = system.surfaces.separation(system.lap, system.alpha, system.rho)
    lo, hi = system.surfaces.intervals(system.lap, system.alpha, system.rho)
    idx = system.surfaces.indices()
    certified = set(int(j) for j in certified_surfaces)

    x = np.asarray(u0, dtype=float)
    t = float(t0)
    horizon = max(theta / 2.0, 1e-3)
    segments, hits = [], []
    hit_counts: dict = {}
    last_hit = None  # (surface, time): suppress re-detecting the jump just taken

    while t < t_end - 1e-12:
        t1 = min(t_end, t + horizon)
        seg = step_segment(system, x, t, t1, seg_tol, h_max=horizon / 4.0)
        cand = idx[(hi >= t - event_tol) & (lo <= t1 + event_tol)]
        best = None
        for j in cand:
            th = detect_crossing(system, seg, j, event_tol)
            if th is None or th < t:
                continue
            if last_hit is not None and int(j) == last_hit[0] and th <= last_hit[1] + 10.0 * event_tol:
                continue
            if best is None or th < best[0]:
                best = (th, int(j))
        if best is None:
            segments.append(seg)
            t, x = t1, seg.states[-1]
            continue
        th, j = best
        # sharpen the hit time on re-integrated (not interpolated) states
        pre = x
        for _ in range(12):
            if th - t <= 1e-12:
                th, seg2, pre = t, None, x
                break
            seg2 = step_segment(system, x, t, th, seg_tol, h_max=horizon / 4.0)
            pre = seg2.states[-1]
            zeta = th - system.tau(j, pre)
            if abs(zeta) < event_tol:
                break
            th = th - zeta
        if seg2 is not None:
            segments.append(seg2)
        post = apply_jump(system, j, pre)
        last_hit = (j, th)
        hits.append(HitRecord(time=th, surface=j, pre=pre, post=post))
        hit_counts[j] = hit_counts.get(j, 0) + 1
        if hit_counts[j] > 1 and j in certified:
            raise BeatingError(
                "repeated hit on certified surface %d at t = %g" % (j, th)
            )
        t, x = th, post

    traj = PiecewiseTrajectory(segments=segments, hits=hits)
    traj.meta.update({"hit_counts": hit_counts, "theta": theta, "seg_tol": seg_tol})
    return traj


# ---------------------------------------------------------------------------
# beating exclusion certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BeatingCertificate:
    surface: int
    theta_check: float
    p_check: float
    beta0: float
    n_samples: int
    verdict: bool

    def as_record(self) -> dict:
        return {
            "surface": self.surface,
            "theta_check": self.theta_check,
            "P_check": self.p_check,
            "beta0": self.beta0,
            "n_samples": self.n_samples,
            "verdict": "pass" if self.verdict else "fail",
        }


def _nonnegative_samples(system, n_samples, rng):
    """Non-negative states in the ball: sums of squared sines, rescaled.

    Low-discrepancy weights drive u = sum_m w_m sin^2(m pi xi / l); half the
    samples are pushed to the ball boundary |x|_alpha = rho (the functionals
    in P are extremized there), the rest fill the interior.
    """
    lap, alpha, rho = system.lap, system.alpha, system.rho
    xi = system.xi_grid()
    sob = qmc.Sobol(d=5, seed=rng.integers(2**31))
    raw = sob.random(n_samples)
    out = []
    attempts = 0
    for row in raw:
        attempts += 1
        if attempts > 20 * n_samples:
            raise RuntimeError("sample generation failed to stay in the ball")
        w = row[:4]
        if np.sum(w) < 1e-8:
            continue
        u = np.zeros(xi.size)
        for m, wm in enumerate(w, start=1):
            u += wm * np.sin(m * np.pi * xi / lap.l) ** 2
        x = lap.project(u, xi)
        nrm = lap.frac_norm(x, alpha)
        if nrm < 1e-12:
            continue
        scale = rho / nrm if row[4] < 0.5 else rho * (0.1 + 1.8 * (row[4] - 0.5)) / nrm
        scale = min(scale, rho / nrm)
        out.append(scale * x)
    return out


def beating_certificate(
    system: ImpulseSystemSpec, j, n_samples: int = 512, rng=None
) -> BeatingCertificate:
    """Check the repeated-hit exclusion hypotheses on surface j by sampling.

    theta_j(x) <= 0 and P(u) < 1 must hold on every sampled non-negative
    state in the ball; beta_0 is the slope threshold below which the bound
    chain for P closes automatically.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lap = system.lap
    b_j = system.surfaces.slope(j)
    xi = system.xi_grid()
    w_quad = lap.quad_weights(xi)

    sup_ab = system.ab.sup_bound()
    rho, l = system.rho, lap.l
    beta0 = 0.5 / ((1.0 + sup_ab) * (rho**2 + np.sqrt(l) * rho**3))

    theta_check = -np.inf
    p_check = -np.inf
    samples = _nonnegative_samples(system, n_samples, rng)
    for x in samples:
        q = ImpulseSurfaceSpec.q_functional(x)
        tau = system.surfaces.base_time(j) + b_j * q
        theta_j = b_j * (ImpulseSurfaceSpec.q_functional(x + system.g(j, x)) - q)
        theta_check = max(theta_check, theta_j)
        u = lap.eval_physical(x, xi)
        cubic = float(np.sum(w_quad * u**3))
        grad_sq = float(np.sum(lap.eigenvalues * x * x))
        p_val = -2.0 * b_j * grad_sq + 2.0 * b_j * system.a(tau) * (
            q - system.b(tau) * cubic
        )
        p_check = max(p_check, p_val)
    verdict = bool(theta_check <= 1e-10 and p_check < 1.0)
    return BeatingCertificate(
        surface=int(j),
        theta_check=float(theta_check),
        p_check=float(p_check),
        beta0=float(beta0),
        n_samples=len(samples),
        verdict=verdict,
    )
