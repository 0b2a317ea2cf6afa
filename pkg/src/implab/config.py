"""Problem-instance files: flat INI sections, parsed into system objects.

A config file fully determines one problem instance: geometry, the trig-sum
coefficients a(t) and b(t), the confinement ball (rho, alpha), the impulse
surface lattice, the jump maps, solver tolerances, the reporting window and
the sampling seed.  All generator functions are lists of
``amplitude frequency phase`` triples, so no expression parsing is needed
and instances are reproducible byte for byte.

``validate_instance`` enforces the checkable hypothesis parts at load time:
surface slopes have the admissible sign (b_j <= 0), the surface time
intervals over the ball are separated (theta > 0, by interval arithmetic),
the jump offsets d_j have finite X^1 norm, and the catalogue map I
satisfies I(0) = 0.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .ap_analysis import StronglyAPSet
from .impulsive import (
    JUMP_MAP_CATALOGUE,
    ImpulseSurfaceSpec,
    ImpulseSystemSpec,
    JumpSpec,
    SeparationError,
)
from .solver import SolverConfig
from .spectral import DirichletLaplacian
from .trig import SeqGen, TrigSum

__all__ = ["ConfigError", "InstanceConfig", "load_instance", "validate_instance"]


class ConfigError(ValueError):
    """The instance file is malformed or violates a checkable hypothesis."""


def _floats(text) -> list:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_triples(text) -> tuple:
    """'amp freq phase; amp freq phase; ...' -> ((amp, freq, phase), ...)."""
    out = []
    for chunk in text.split(";"):
        vals = _floats(chunk)
        if not vals:
            continue
        if len(vals) != 3:
            raise ConfigError("term %r is not an 'amp freq phase' triple" % chunk)
        out.append(tuple(vals))
    return tuple(out)


def _parse_vector(text, n_modes) -> np.ndarray:
    vals = _floats(text)
    if len(vals) > n_modes:
        raise ConfigError("vector has %d coefficients for %d modes" % (len(vals), n_modes))
    out = np.zeros(n_modes)
    out[: len(vals)] = vals
    return out


def _parse_rows(text, n_modes):
    rows = [
        _parse_vector(chunk, n_modes) for chunk in text.split(";") if chunk.strip()
    ]
    return np.stack(rows) if rows else None


def _trig_sum(sec, offset_key="offset", terms_key="terms") -> TrigSum:
    return TrigSum(
        offset=sec.getfloat(offset_key, 0.0),
        terms=_parse_triples(sec.get(terms_key, "")),
    )


def _seq_gen(sec, prefix) -> SeqGen:
    triples = _parse_triples(sec.get(prefix + "_terms", ""))
    offset = sec.getfloat(prefix + "_constant", 0.0)
    if not triples:
        return SeqGen.constant(offset)
    amps, freqs, phases = zip(*triples)
    return SeqGen(freqs=freqs, amps=amps, phases=phases, offset=offset)


@dataclass(frozen=True)
class InstanceConfig:
    """One loaded problem instance plus run parameters."""

    system: ImpulseSystemSpec
    solver: SolverConfig
    time_window: tuple
    seed: int
    n_samples: int
    eps_list: tuple
    u0: np.ndarray
    t_range: tuple
    overrides: dict = field(default_factory=dict)

    def rng(self, seed=None) -> np.random.Generator:
        return np.random.default_rng(self.seed if seed is None else int(seed))


def load_instance(path) -> InstanceConfig:
    """Parse an instance file; raises ConfigError on malformed input."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (M1 vs m1 in [overrides])
    read = parser.read(str(path))
    if not read:
        raise ConfigError("cannot read config file %s" % path)
    try:
        geo = parser["geometry"]
        lap = DirichletLaplacian(
            l=geo.getfloat("l", 1.0), n_modes=geo.getint("n_modes", 16)
        )
        n_xi = geo.getint("n_xi", 256)

        prob = parser["problem"]
        alpha = prob.getfloat("alpha", 0.5)
        rho = prob.getfloat("rho", 1.0)

        a = _trig_sum(parser["coefficient_a"]) if "coefficient_a" in parser else TrigSum()
        b = _trig_sum(parser["coefficient_b"]) if "coefficient_b" in parser else TrigSum()

        surf = parser["surfaces"]
        j_lo, j_hi = (int(v) for v in surf.get("window", "0 30").split())
        base = StronglyAPSet(
            a=surf.getfloat("gap", 1.0),
            c=_seq_gen(surf, "offset"),
            window=(j_lo, j_hi),
        )
        surfaces = ImpulseSurfaceSpec(base=base, slopes=_seq_gen(surf, "slope"))

        jsec = parser["jumps"] if "jumps" in parser else {}
        if jsec:
            left = _parse_rows(jsec.get("kernel_left", ""), lap.n_modes)
            right = _parse_rows(jsec.get("kernel_right", ""), lap.n_modes)
            if (left is None) != (right is None):
                raise ConfigError("kernel_left and kernel_right must come together")
            if left is not None and left.shape != right.shape:
                raise ConfigError("kernel rank mismatch between left and right")
            d_text = jsec.get("d", "")
            jumps = JumpSpec(
                left=left,
                right=right,
                nonlinearity=jsec.get("nonlinearity", "zero"),
                amp=_seq_gen(jsec, "amp"),
                d=_parse_vector(d_text, lap.n_modes) if d_text.strip() else None,
            )
        else:
            jumps = JumpSpec()

        system = ImpulseSystemSpec(
            lap=lap, alpha=alpha, rho=rho, a=a, b=b,
            surfaces=surfaces, jumps=jumps, n_xi=n_xi,
        )

        ssec = parser["solver"] if "solver" in parser else {}
        kwargs = {}
        for key in ("h_t", "inner_tol", "outer_tol", "residual_tol",
                    "event_tol", "tail_tol", "seg_tol", "buffer"):
            if ssec and ssec.get(key, "").strip():
                kwargs[key] = float(ssec[key])
        for key in ("max_inner", "max_outer"):
            if ssec and ssec.get(key, "").strip():
                kwargs[key] = int(ssec[key])
        solver = SolverConfig(**kwargs)
        t_window = tuple(
            float(v) for v in (ssec.get("window", "0 10") if ssec else "0 10").split()
        )
        if len(t_window) != 2 or t_window[1] <= t_window[0]:
            raise ConfigError("solver window must be 't_lo t_hi' with t_lo < t_hi")

        samp = parser["sampling"] if "sampling" in parser else {}
        seed = int(samp.get("seed", 0)) if samp else 0
        n_samples = int(samp.get("n_samples", 512)) if samp else 512

        asec = parser["analysis"] if "analysis" in parser else {}
        eps_list = tuple(_floats(asec.get("eps", "1e-2"))) if asec else (1e-2,)

        sim = parser["simulate"] if "simulate" in parser else {}
        u0_text = sim.get("u0", "") if sim else ""
        u0 = _parse_vector(u0_text, lap.n_modes) if u0_text.strip() else np.zeros(lap.n_modes)
        t_range = tuple(
            float(v)
            for v in (sim.get("t_range", "%g %g" % t_window) if sim else "%g %g" % t_window).split()
        )

        osec = parser["overrides"] if "overrides" in parser else {}
        overrides = {k: float(v) for k, v in osec.items()} if osec else {}
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError("malformed config: %s" % exc) from exc

    return InstanceConfig(
        system=system, solver=solver, time_window=t_window, seed=seed,
        n_samples=n_samples, eps_list=eps_list, u0=u0, t_range=t_range,
        overrides=overrides,
    )


def validate_instance(cfg: InstanceConfig) -> dict:
    """Checkable hypothesis parts; raises ConfigError on the first failure.

    Returns a record of the checked quantities (slope range, separation
    theta, sup_j |d_j|_1, I(0)).
    """
    system = cfg.system
    lap, alpha, rho = system.lap, system.alpha, system.rho
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if rho <= 0.0:
        raise ConfigError("rho must be positive")

    slopes = system.surfaces.slope_window()
    if np.any(slopes > 0.0):
        raise ConfigError("surface slopes b_j must be <= 0 (beating hypothesis)")

    try:
        theta = system.surfaces.separation(lap, alpha, rho)
    except SeparationError as exc:
        raise ConfigError(str(exc)) from exc

    d_norm = 0.0
    for j in system.surfaces.indices()[:: max(1, slopes.size // 8)]:
        d = system.jumps.offset(j, lap.n_modes)
        if not np.all(np.isfinite(d)):
            raise ConfigError("jump offset d_%d is not finite" % j)
        d_norm = max(d_norm, float(lap.frac_norm(d, 1.0)))

    i_map = JUMP_MAP_CATALOGUE[system.jumps.nonlinearity][0]
    i_zero = float(np.asarray(i_map(np.zeros(1)))[0])
    if abs(i_zero) > 0.0:
        raise ConfigError("jump nonlinearity must satisfy I(0) = 0")

    return {
        "slope_min": float(np.min(slopes)),
        "slope_max": float(np.max(slopes)),
        "theta": theta,
        "d_norm_x1": d_norm,
        "i_zero": i_zero,
        "validation": "pass",
    }
