import numpy as np
import pytest

from implab.ap_analysis import StronglyAPSet
from implab.evolution import bounded_solution, fit_dichotomy, k_bundle
from implab.impulsive import ImpulseSurfaceSpec, ImpulseSystemSpec, JumpSpec
from implab.solver import (
    APSequencePoint,
    ProblemBounds,
    SolverConfig,
    certify_almost_periodicity,
    inner_solve,
    integral_residual,
    measure_lipschitz,
    outer_solve,
    poincare_map,
    verify_smallness,
)
from implab.trig import SeqGen, TrigSum


def make_system(
    n_modes=8,
    rho=1.0,
    a=TrigSum(0.5, ((0.2, 1.0, 0.0),)),
    b=TrigSum(),
    slopes=SeqGen.constant(0.0),
    base_gap=1.0,
    window=(0, 8),
    jumps=None,
    f_override=None,
):
    from implab.spectral import DirichletLaplacian

    lap = DirichletLaplacian(l=1.0, n_modes=n_modes)
    base = StronglyAPSet(a=base_gap, c=SeqGen.constant(0.0), window=window)
    surfaces = ImpulseSurfaceSpec(base=base, slopes=slopes)
    if jumps is None:
        jumps = JumpSpec()
    return ImpulseSystemSpec(
        lap=lap, alpha=0.5, rho=rho, a=a, b=b, surfaces=surfaces, jumps=jumps,
        n_xi=8 * n_modes, f_override=f_override,
    )


def const_d(n, c=0.02):
    d = np.zeros(n)
    d[0] = c
    return d


CFG = SolverConfig(h_t=0.005)


def test_inner_solve_zero_data():
    sys0 = make_system()
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(40))
    y = APSequencePoint.zero((0, 8), 8)
    traj, info = inner_solve(sys0, dich, y, (0.0, 8.0), CFG)
    assert info["iterations"] <= 2
    _, states = traj.all_nodes()
    assert np.max(np.abs(states)) == 0.0


def test_inner_solve_matches_bounded_solution():
    # frozen forcing + constant jumps: the recursion route must agree with
    # the direct Simpson route of evolution.bounded_solution
    n = 8
    d = const_d(n, 0.02)

    def profile(t):
        out = np.zeros(n)
        out[0] = 0.3 * np.cos(0.7 * t)
        out[1] = 0.1 * np.sin(1.3 * t)
        return out

    sys0 = make_system(jumps=JumpSpec(d=d), f_override=profile, window=(0, 6))
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(41))
    y = APSequencePoint.zero((0, 6), n)
    cfg = SolverConfig(h_t=0.002)
    traj, info = inner_solve(sys0, dich, y, (0.0, 6.0), cfg)

    jumps = [(float(t), d) for t in info["frozen_times"]]
    ref = bounded_solution(sys0.lap, sys0.coeff, dich, profile, jumps,
                           window=(0.0, 6.0), h_t=0.002)
    probe = np.linspace(0.05, 5.95, 41)
    disc = max(
        sys0.lap.frac_norm(traj.eval(t) - ref.eval(t), 0.5) for t in probe
    )
    assert disc < 1e-6
    # both satisfy the jump condition
    assert ref.meta["jump_defect"] < 1e-10
    for tj, g in jumps:
        pre = traj.eval(tj)
        post = traj.eval(tj + 1e-12)  # right-limit node opens the next piece
        seg_start = [s for s in traj.segments if abs(s.t[0] - tj) < 1e-9]
        assert seg_start
        assert np.max(np.abs(seg_start[0].states[0] - pre - g)) < 1e-10


def test_inner_solve_unstable_mode_closed_form():
    # constant a with mean above lambda_1: mode 1 unstable, f identically 0
    n = 4
    d = const_d(n, 0.05)
    sys0 = make_system(n_modes=n, a=TrigSum(11.0), window=(0, 2), base_gap=3.0,
                       jumps=JumpSpec(d=d))
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(42))
    assert dich.has_unstable
    y = APSequencePoint.zero((0, 2), n)
    traj, info = inner_solve(sys0, dich, y, (0.0, 6.0), CFG)
    mu1 = sys0.lap.eigenvalues[0] - 11.0  # < 0
    # bounded branch: u_1(t) = -sum_{tau >= t} e^{-mu1 (t - tau)} d_1
    for t in (0.5, 2.0, 4.0):
        ref = -sum(0.05 * np.exp(-mu1 * (t - tau)) for tau in info["frozen_times"]
                   if tau >= t)
        assert abs(traj.eval(t)[0] - ref) < 1e-7


def test_integral_residual_small():
    n = 8
    left = np.zeros((1, n))
    left[0, 0] = 1.0
    jumps = JumpSpec(left=left, right=left.copy(), nonlinearity="tanh",
                     amp=SeqGen.constant(0.02), d=const_d(n, 0.02))
    sys0 = make_system(b=TrigSum(0.1, ((0.05, np.sqrt(2.0), 0.0),)),
                       jumps=jumps, window=(0, 6))
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(43))
    y = APSequencePoint.zero((0, 6), n)
    cfg = SolverConfig(h_t=0.002)
    traj, info = inner_solve(sys0, dich, y, (0.0, 6.0), cfg)
    res = integral_residual(sys0, dich, traj, y, times=(1.5, 3.5, 5.5), h_t=0.002)
    assert res < 1e-6


def test_poincare_zero_map():
    sys0 = make_system()
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(44))
    rng = np.random.default_rng(45)
    w = sys0.lap.frac_weights(0.5)
    vals = rng.standard_normal((9, 8)) / w * 0.1
    y = APSequencePoint(window=(0, 8), values=vals)
    s_y, _, _ = poincare_map(sys0, dich, y, (0.0, 8.0), CFG)
    assert np.max(np.abs(s_y.values)) == 0.0  # f == 0 and g == 0


def test_outer_solve_zero_data():
    sys0 = make_system(window=(0, 6))
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(46))
    res = outer_solve(sys0, dich, (0.0, 6.0), cfg=CFG)
    assert np.max(np.abs(res.y_star.values)) == 0.0
    _, states = res.trajectory.all_nodes()
    assert np.max(np.abs(states)) == 0.0


def periodic_system(q=4, window=(0, 24)):
    # every ingredient shares the time period 2: a, b have frequency pi, the
    # impulse lattice has gap 1/2 (so q = 4 surfaces per period) and the jump
    # modulation amp_j has period q in the index
    n = 8
    left = np.zeros((1, n))
    left[0, 0] = 1.0
    amp = SeqGen(freqs=(2.0 * np.pi / q,), amps=(0.3,), phases=(0.0,), offset=1.0)
    jumps = JumpSpec(left=left, right=left.copy(), nonlinearity="tanh",
                     amp=amp, d=const_d(n, 0.2))
    return make_system(
        a=TrigSum(0.5, ((0.2, np.pi, 0.0),)),
        b=TrigSum(0.1, ((0.05, np.pi, 0.2),)),
        base_gap=0.5,
        window=window,
        jumps=jumps,
    )


def test_outer_solve_periodic_reduction():
    q = 4
    sys0 = periodic_system(q=q)
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(47))
    res = outer_solve(sys0, dich, (2.0, 10.0), cfg=CFG)
    yv = res.y_star.values
    # pre-jump values are genuinely nonzero here
    assert np.max(np.abs(yv)) > 1e-4
    shift_dev = np.max(np.abs(yv[q:] - yv[:-q]))
    assert shift_dev < 1e-7
    assert res.steps[-1] < CFG.outer_tol
    assert res.meta["hit_consistency"] < 1e-10  # slopes are zero here


def test_verify_smallness_linear_instance():
    # b == 0 (f == 0), constant jumps, fixed moments: N1 = 0
    n = 8
    sys0 = make_system(jumps=JumpSpec(d=const_d(n, 0.02)))
    dich = fit_dichotomy(sys0.lap, sys0.coeff, alpha=0.5,
                         rng=np.random.default_rng(48))
    theta = sys0.surfaces.separation(sys0.lap, 0.5, 1.0)
    gc = sys0.surfaces.gap_constant(sys0.lap, 0.5, 1.0)
    kb = k_bundle(0.5, dich, theta, gc["value"], g_star=0.1)
    measured = measure_lipschitz(sys0, rng=np.random.default_rng(49))
    assert measured["N1"] < 1e-12
    bounds = ProblemBounds(alpha=0.5, rho=1.0, theta=theta, a=1.0, Q=gc["value"],
                           N1=measured["N1"], H1=0.0, M0=measured["M0"],
                           g_star=measured["g_star"])
    rep = verify_smallness(sys0, bounds, kb, rng=np.random.default_rng(50))
    assert rep.all_pass
    assert rep.L_dprime == pytest.approx(kb.K4)


def test_verify_smallness_overloaded():
    n = 8
    sys0 = make_system(jumps=JumpSpec(d=const_d(n, 5.0)))
    dich = fit_dichotomy(sys0.lap, sys0.coeff, alpha=0.5,
                         rng=np.random.default_rng(51))
    theta = sys0.surfaces.separation(sys0.lap, 0.5, 1.0)
    kb = k_bundle(0.5, dich, theta, 2.0)
    measured = measure_lipschitz(sys0, rng=np.random.default_rng(52))
    bounds = ProblemBounds(alpha=0.5, rho=1.0, theta=theta, a=1.0, Q=2.0,
                           N1=measured["N1"], H1=0.0, M0=measured["M0"],
                           g_star=measured["g_star"])
    rep = verify_smallness(sys0, bounds, kb, rng=np.random.default_rng(53))
    assert not rep.check_KM0


def test_certify_almost_periodicity_periodic():
    q = 4
    sys0 = periodic_system(q=q)
    dich = fit_dichotomy(sys0.lap, sys0.coeff, rng=np.random.default_rng(54))
    res = outer_solve(sys0, dich, (2.0, 10.0), cfg=CFG)
    report = certify_almost_periodicity(sys0, res, eps_list=(1e-4,), h_t=0.004)
    entry = report[1e-4]
    periods = [int(p) for p in entry["sequence"]["periods"].split()]
    assert 0 in periods and q in periods
    assert all(p % q == 0 for p in periods)
    assert entry["q"] != "none"
    assert entry["wexler_deviation"] < 1e-4


def test_sequence_point_validation():
    with pytest.raises(ValueError):
        APSequencePoint(window=(0, 3), values=np.zeros((3, 5)))
    y = APSequencePoint.zero((0, 3), 5)
    z = APSequencePoint(window=(0, 3), values=np.ones((4, 5)))
    from implab.spectral import DirichletLaplacian

    lap = DirichletLaplacian(n_modes=5)
    assert y.dist(z, lap, 0.0) == pytest.approx(np.sqrt(5.0))
