import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greencr.errors import DomainError, PreconditionError
from greencr.model import Allocation, PrimaryUser, evaluate_constraints, feasible_interval, sum_rate
from greencr.oracle import constrained_grid_solve, grid_theta_optimum
from greencr.scenario import ScenarioConfig, generate_scenario
from greencr.structopt import (DualState, SolverConfig, StepSchedule, closed_form_theta,
                               concavity_certificate, constraint_convexity_probe,
                               dual_subgradient_solve, dual_update, guarded_interval,
                               lagrangian_value, objective_derivative, per_su_theta_optimize,
                               solve_closed_form, stationarity_residual)

from conftest import PARAMS, make_scenario, make_user

LN2 = math.log(2.0)


def _single_rate(su, H, theta, params=PARAMS):
    T = params.slot_duration
    a = T - theta * T - su.sensing_time
    b = su.harvest_rate * theta * T - su.sensing_energy
    return (a / T) * math.log1p(H * b / a) / LN2


def _golden(f, lo, hi, tol=1e-13):
    g = (math.sqrt(5) - 1) / 2
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    while hi - lo > tol:
        if f(c) > f(d):
            hi, d = d, c
            c = hi - g * (hi - lo)
        else:
            lo, c = c, d
            d = lo + g * (hi - lo)
    return 0.5 * (lo + hi)


def test_closed_form_matches_golden_section():
    su = make_user()
    lo, hi = feasible_interval(su, PARAMS)
    ref = _golden(lambda t: _single_rate(su, 10.0, t), lo, hi)
    assert closed_form_theta(su, 10.0, PARAMS) == pytest.approx(ref, abs=1e-7)


def test_closed_form_precondition():
    su = make_user()
    with pytest.raises(PreconditionError):
        closed_form_theta(su, 0.1, PARAMS)


def test_closed_form_near_branch_point():
    su = make_user()
    lo, hi = feasible_interval(su, PARAMS)
    prev = None
    for excess in (1e-2, 1e-5, 1e-8, 1e-12):
        th = closed_form_theta(su, (1.0 + excess) / su.harvest_rate, PARAMS)
        assert math.isfinite(th) and lo < th < hi
        if prev is not None:
            assert abs(th - prev) < 1e-2
        prev = th


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 50), st.floats(1e-5, 3e-3), st.floats(1e-6, 1e-4), st.floats(1.01, 1e4))
def test_closed_form_matches_grid(chi, eps, tau, hchi):
    su = make_user(H=hchi / chi, chi=chi, eps=eps, tau=tau)
    lo, hi = feasible_interval(su, PARAMS)
    if not hi - lo > 1e-3:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        th = closed_form_theta(su, hchi / chi, PARAMS)
    ref = grid_theta_optimum(su, [0], PARAMS)
    assert abs(th - ref) / ref <= 1e-4


def test_stationarity_residual():
    su = make_user()
    th = closed_form_theta(su, 10.0, PARAMS)
    assert abs(stationarity_residual(su, 10.0, th, PARAMS)) <= 1e-8
    lo, hi = guarded_interval(su, PARAMS)
    grid = np.linspace(lo, hi, 400)
    res = np.array([stationarity_residual(su, 10.0, t, PARAMS) for t in grid])
    assert np.all(np.diff(res) < 0)
    assert res[0] > 0 > res[-1]
    # sign near the lower end agrees with a finite-difference slope
    t = lo + 1e-3
    slope = (_single_rate(su, 10.0, t + 1e-7) - _single_rate(su, 10.0, t - 1e-7)) / 2e-7
    assert np.sign(stationarity_residual(su, 10.0, t, PARAMS)) == np.sign(slope)


def test_gradient_matches_finite_differences(rng):
    for _ in range(100):
        H = float(rng.uniform(0.5, 50))
        su = make_user(H=H, chi=float(rng.uniform(1, 20)))
        lo, hi = feasible_interval(su, PARAMS)
        t = float(rng.uniform(lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo)))
        h = 1e-6 * (hi - lo)
        fd = (_single_rate(su, H, t + h) - _single_rate(su, H, t - h)) / (2 * h)
        an = objective_derivative(su, H, t, PARAMS)
        assert an == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_per_user_reductions():
    su = make_user(H=[10.0])
    assert per_su_theta_optimize(su, [0], PARAMS) == pytest.approx(
        closed_form_theta(su, 10.0, PARAMS), abs=1e-8)
    su3 = make_user(H=[7.0, 7.0, 7.0])
    assert per_su_theta_optimize(su3, [0, 1, 2], PARAMS) == pytest.approx(
        closed_form_theta(su3, 7.0, PARAMS), abs=1e-8)


def test_per_user_heterogeneous_vs_grid(rng):
    for _ in range(10):
        su = make_user(H=rng.uniform(0.3, 40, 5), chi=float(rng.uniform(1, 10)))
        th = per_su_theta_optimize(su, range(5), PARAMS)
        assert th == pytest.approx(grid_theta_optimum(su, range(5), PARAMS), abs=1e-6)


def test_argmax_scale_invariance():
    su = make_user(H=[3.0, 12.0, 3.0, 12.0])
    assert per_su_theta_optimize(su, [0, 1], PARAMS) == pytest.approx(
        per_su_theta_optimize(su, [0, 1, 2, 3], PARAMS), abs=1e-8)


def test_concavity_certificate():
    su = make_user(H=1.0)
    assert concavity_certificate(su, 1.0, PARAMS)  # H chi = 5
    assert concavity_certificate(su, 1.0, PARAMS, grid_size=3)
    with pytest.warns(RuntimeWarning):
        concavity_certificate(su, 0.1, PARAMS)


def test_power_is_convex_so_probe_is_false():
    # the transmit power b/a has second derivative 2 T^2 c / a^3 > 0
    assert not constraint_convexity_probe(make_user(), PARAMS)
    assert not constraint_convexity_probe(make_user(eps=1e-12, tau=1e-12), PARAMS)
    assert constraint_convexity_probe(make_user(), PARAMS, grid_size=1)


# ---------------------------------------------------------------- duals


def _two_user():
    cross = np.full((4, 1), 1e-14)
    users = [make_user(H=[10.0, 6.0, 0.5, 0.5], uid=0, rt=True, req=2.0, cross=cross),
             make_user(H=[0.5, 0.5, 4.0, 9.0], uid=1, req=1.5, chi=3.0, cross=cross)]
    pus = (PrimaryUser(0, 2e-13, available={0, 1}, unavailable={2, 3}),)
    return make_scenario(users, pus, n=4), Allocation(((0, 1), (2, 3)))


def test_lagrangian_zero_multipliers_is_negated_sum_rate():
    sc, alloc = _two_user()
    theta = np.array([0.5, 0.6])
    d = DualState.zeros(2, 1)
    assert lagrangian_value(theta, d, sc, alloc) == pytest.approx(-sum_rate(sc, alloc, theta))


def test_lagrangian_single_lambda_term():
    sc, alloc = _two_user()
    theta = np.array([0.5, 0.6])
    d = DualState([0.7, 0.0], [0, 0], [0], [0, 0], [0, 0])
    su = sc.users[0]
    expected = -sum_rate(sc, alloc, theta) + 0.7 * (su.sensing_energy - su.harvest_rate * 0.5e-3)
    assert lagrangian_value(theta, d, sc, alloc) == pytest.approx(expected, rel=1e-12)


def test_lagrangian_term_by_term(rng):
    sc, alloc = _two_user()
    theta = np.array([0.45, 0.7])
    lam, mu, rho = rng.uniform(0, 2, 2), rng.uniform(0, 2, 2), rng.uniform(0, 2, 2)
    nu = rng.uniform(0, 1e12, 1)
    d = DualState(lam, mu, nu, [rho[0], 0], [0, rho[1]])
    s = evaluate_constraints(sc, alloc, theta)
    expected = (-sum_rate(sc, alloc, theta) - lam @ s.energy - mu @ s.time
                - nu @ s.interference - rho @ s.rate)
    assert lagrangian_value(theta, d, sc, alloc) == pytest.approx(expected, rel=1e-10)


def test_dual_update_fixed_point_and_projection():
    sc, alloc = _two_user()
    theta = np.array([0.5, 0.6])
    s = evaluate_constraints(sc, alloc, theta)
    assert np.all(s.energy > 0) and np.all(s.time > 0) and np.all(s.interference > 0)
    assert np.all(s.rate > 0)
    d = dual_update(DualState.zeros(2, 1), theta, sc, alloc)
    for name, arr in d.as_dict().items():
        assert arr == [0.0] * len(arr), name
    assert d.iteration == 1


def test_dual_update_hand_computed():
    sc, alloc = _two_user()
    theta = np.array([0.3, 0.95])
    sched = StepSchedule(lam=0.5, mu=2.0, nu=1e10, rho_rt=0.3, rho_nrt=0.2)
    d0 = DualState([0.1, 0.1], [0.2, 0.2], [5.0], [0.4, 0.0], [0.0, 0.4], iteration=1,
                   schedule=sched)
    d1 = dual_update(d0, theta, sc, alloc)
    s = evaluate_constraints(sc, alloc, theta)
    step = 1.0 / 2  # t = 2
    pos = lambda x: max(x, 0.0)
    for i in range(2):
        assert d1.lam[i] == pytest.approx(pos(0.1 - 0.5 * step * s.energy[i]), rel=1e-12)
        assert d1.mu[i] == pytest.approx(pos(0.2 - 2.0 * step * s.time[i]), rel=1e-12)
    assert d1.nu[0] == pytest.approx(pos(5.0 - 1e10 * step * s.interference[0]), rel=1e-9)
    assert d1.rho_rt[0] == pytest.approx(pos(0.4 - 0.3 * step * s.rate[0]), rel=1e-12)
    assert d1.rho_nrt[1] == pytest.approx(pos(0.4 - 0.2 * step * s.rate[1]), rel=1e-12)
    assert d1.rho_rt[1] == 0.0 and d1.rho_nrt[0] == 0.0
    assert d1.iteration == 2


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 0.98), min_size=2, max_size=2),
       st.lists(st.floats(0, 10), min_size=7, max_size=7))
def test_multipliers_stay_nonnegative(theta, m):
    sc, alloc = _two_user()
    d = DualState(m[0:2], m[2:4], [m[4]], [m[5], 0], [0, m[6]])
    for _ in range(3):
        d = dual_update(d, np.array(theta), sc, alloc)
        for arr in d.as_dict().values():
            assert min(arr) >= 0.0


def test_negative_multiplier_rejected():
    with pytest.raises(DomainError):
        DualState([-1.0], [0], [], [0], [0])


# ---------------------------------------------------------------- solvers


def _generated(seed, threshold, K=4, n=16, num_rt=0, req=0.0):
    cfg = ScenarioConfig(seed=seed, num_users=K, num_rt=num_rt, num_pus=4, num_subchannels=n,
                         num_available=n, rate_requirement=(req,), interference_threshold=threshold)
    sc = generate_scenario(cfg)
    from greencr.experiments import fixed_blocks
    return sc, fixed_blocks(K, n // K)


def test_dual_without_active_constraints_matches_per_user():
    sc, alloc = _generated(3, 1.0)
    rep = dual_subgradient_solve(sc, alloc)
    assert rep.converged and rep.feasible
    for i in alloc.allocated_users:
        ref = per_su_theta_optimize(sc.users[i], alloc[i], sc.params)
        assert rep.theta[i] == pytest.approx(ref, abs=1e-4)


def test_dual_unreachable_requirement():
    sc, alloc = _generated(3, 1.0, num_rt=4, req=1e3)
    rep = dual_subgradient_solve(sc, alloc, SolverConfig(max_iter=200))
    assert not rep.converged and not rep.feasible
    s = evaluate_constraints(sc, alloc, rep.theta)
    assert np.min(s.rate) < 0


def test_dual_binding_interference_close_to_oracle():
    sc, alloc = _generated(1, 1e-13)
    free = solve_closed_form(sc, alloc)
    assert free.fallback  # the interference limit binds
    rep = dual_subgradient_solve(sc, alloc, SolverConfig(max_iter=3000))
    ref = constrained_grid_solve(sc, alloc)
    assert rep.feasible and ref.feasible
    assert rep.max_constraint_violation <= 1e-6
    assert rep.objective >= (1 - 0.035) * ref.objective
    assert rep.objective <= ref.objective * (1 + 1e-6)


def test_closed_form_pipeline_uses_exact_formula_when_slack():
    sc, alloc = _generated(2, 1.0)
    rep = solve_closed_form(sc, alloc)
    assert not rep.fallback and rep.converged and rep.iterations == 1


def test_report_invariant_converged_implies_small_violation():
    for thr in (1e-14, 1e-13, 1.0):
        sc, alloc = _generated(4, thr)
        cfg = SolverConfig(max_iter=500)
        for rep in (dual_subgradient_solve(sc, alloc, cfg), solve_closed_form(sc, alloc, cfg)):
            if rep.converged:
                assert rep.max_constraint_violation <= cfg.tol_primal
