import math

import numpy as np
import pytest

from biharm import geometry as geo
from biharm import problem as prob
from biharm.minimizer import (
    SolverOptions,
    first_solution,
    minimize_on_ball,
    minimize_on_sphere,
    trace_mu_curve,
)
from biharm.problem import ProblemData

TWO_PI = 2.0 * math.pi


def _three_mode_oracle(problem, q, k, n_grid=61):
    """Brute-force minimum of F_q on the sphere within a 3-mode subspace."""
    g = problem.geometry
    x = g.coordinates()[0]
    basis = [
        np.ones_like(x),
        math.sqrt(2.0) * np.cos(TWO_PI * x),
        math.sqrt(2.0) * np.sin(TWO_PI * x),
    ]
    best = math.inf
    grid = np.linspace(-1.0, 1.0, n_grid)
    for c0 in grid:
        for c1 in grid:
            for c2 in grid:
                v = c0 * basis[0] + c1 * basis[1] + c2 * basis[2]
                nrm = (np.mean(np.abs(v) ** q)) ** (1.0 / q)
                if nrm < 1e-9:
                    continue
                u = g.field(v * (k ** (1.0 / q) / nrm))
                best = min(best, prob.eval_F(u, problem, q))
    return best


def test_sphere_minimizer_flat_problem_vs_oracle(geom64, opts):
    # f = 0, a = 0, h = -1: constants win with value -k^(2/q)
    p = ProblemData.from_expressions(geom64, "0", "-1", "0")
    q, k = 2.5, 3.0
    res = minimize_on_sphere(p, q, k, opts=opts)
    assert res.converged
    assert res.mu <= -(k ** (2.0 / q)) + 1e-10
    oracle = _three_mode_oracle(p, q, k)
    assert res.mu <= oracle + 1e-4
    assert res.mu == pytest.approx(-(k ** (2.0 / q)), rel=1e-9)


def test_sphere_retraction_exact(bundled64, opts):
    q = 2.5
    for k in (0.7, 12.0, 4000.0):
        res = minimize_on_sphere(bundled64, q, k, opts=opts)
        assert geo.lp_mass(res.v, q) == pytest.approx(k, rel=1e-12)


def test_sphere_rejects_bad_mass(bundled64, opts):
    with pytest.raises(ValueError):
        minimize_on_sphere(bundled64, 2.5, -1.0, opts=opts)


def test_euler_lagrange_residual_postcondition(bundled64, opts):
    q = 2.5
    for k in (10.0, 335.0):
        res = minimize_on_sphere(bundled64, q, k, opts=opts)
        assert res.converged
        el = prob.el_residual(res.v, bundled64, q, res.lagrange)
        assert el <= 1e-6 * (1.0 + abs(res.mu))


def test_sphere_multistart_deterministic(bundled64):
    q, k = 2.5, 50.0
    r1 = minimize_on_sphere(bundled64, q, k, opts=SolverOptions(seed=0))
    r2 = minimize_on_sphere(bundled64, q, k, opts=SolverOptions(seed=0))
    assert r1.mu == r2.mu
    assert np.array_equal(r1.v.samples, r2.v.samples)


def test_curve_upper_bound_by_constants(toy64, opts):
    q = 4.0
    curve = trace_mu_curve(toy64, q, 0.05, 500.0, n_points=24, opts=opts)
    for k, mu in zip(curve.ks, curve.mus):
        cap = k ** (2.0 / q) * toy64.int_h - k * toy64.int_f
        assert mu <= cap + 1e-9 * (1.0 + abs(cap))


def test_curve_small_k_negative(toy64, opts):
    q = 4.0
    curve = trace_mu_curve(toy64, q, 0.01, 1.0, n_points=10, opts=opts)
    # mu_k <= k^(2/q)(int h - k^(1-2/q) int f) < 0 near zero
    for k, mu in zip(curve.ks[:5], curve.mus[:5]):
        bound = k ** (2.0 / q) * (toy64.int_h - k ** (1.0 - 2.0 / q) * toy64.int_f)
        assert mu <= bound + 1e-12
        assert mu < 0.0


def test_curve_shape_and_annotations(toy64, opts):
    q = 4.0
    curve = trace_mu_curve(toy64, q, 0.05, 500.0, n_points=36, opts=opts)
    ann = curve.annotations
    assert ann["shape"] == "neg-min/hump/neg-tail"
    assert 0.05 < ann["k_neg_min"] < ann["l1"] < ann["l_o"] < ann["l2"] < 500.0
    assert ann["mu_neg_min"] < 0.0 < ann["mu_lo"]
    # crossings sit within the bisection width and near zero energy
    assert abs(ann["mu_at_l1"]) <= 1e-3 * (1.0 + ann["mu_lo"])
    assert abs(ann["mu_at_l2"]) <= 1e-3 * (1.0 + ann["mu_lo"])


def test_curve_large_k_decreasing(toy64, opts):
    # sup f > 0 drives the curve to minus infinity
    q = 4.0
    curve = trace_mu_curve(toy64, q, 100.0, 5000.0, n_points=12, opts=opts)
    assert curve.mus[-1] < -10.0
    assert curve.mus[-1] < curve.mus[0]


def test_curve_continuity_refinement(toy64, opts):
    # doubling the k resolution roughly halves the largest jump
    q = 4.0
    coarse = trace_mu_curve(toy64, q, 0.5, 40.0, n_points=12, opts=opts)
    fine = trace_mu_curve(toy64, q, 0.5, 40.0, n_points=24, opts=opts)
    jump_c = np.max(np.abs(np.diff(coarse.mus)))
    jump_f = np.max(np.abs(np.diff(fine.mus)))
    assert jump_f <= 0.75 * jump_c


def test_curve_deterministic(toy64):
    q = 4.0
    c1 = trace_mu_curve(toy64, q, 0.5, 40.0, n_points=10, opts=SolverOptions(seed=3))
    c2 = trace_mu_curve(toy64, q, 0.5, 40.0, n_points=10, opts=SolverOptions(seed=3))
    assert np.array_equal(c1.mus, c2.mus)


def test_certified_window_bound(geom64, opts):
    # on a ratio-passing instance the traced curve clears the floor
    from biharm.certifier import certify

    p = ProblemData.from_expressions(geom64, "0", "-1", "cos(2*pi*x1) - 0.999")
    q = 2.5
    rep = certify(p, q, opts)
    assert rep.passed_subcritical and rep.k_low < rep.k_high_certified
    curve = trace_mu_curve(
        p, q, rep.k_low * 0.5, rep.k_high_certified * 2.0, n_points=14,
        opts=opts, certificate=rep,
    )
    assert curve.annotations["certified_bound_ok"] is True
    inside = (curve.ks >= rep.k_low) & (curve.ks <= rep.k_high_certified)
    assert inside.any()
    floor = 0.5 * rep.mu_floor * curve.ks[inside] ** (2.0 / q)
    assert np.all(curve.mus[inside] >= floor - 1e-8)


def test_small_ball_energy_negative(toy64, geom64):
    # constant direction: F(t) <= t^2 (max h - t^(q-2) int f) < 0 for small t
    q = 4.0
    for t in (1e-3, 1e-2, 0.1):
        c = geom64.constant(t)
        F = prob.eval_F(c, toy64, q)
        bound = t * t * (toy64.h_max - t ** (q - 2.0) * toy64.int_f)
        assert F <= bound + 1e-12 * (1.0 + abs(bound))
        assert F < 0.0


def test_first_solution_toy(toy64, opts):
    q = 4.0
    rep = first_solution(toy64, q, opts, force=True, ball_cap=1.3)
    assert rep.energy < 0.0
    assert rep.mass < 1.3 * (1.0 - 1e-9)          # interior minimum
    assert rep.identity_gap_rel <= 1e-6
    assert rep.residual_equation <= 1e-6 * (1.0 + abs(rep.energy))
    # sign chain: negative energy forces int f |v|^q < 0
    assert rep.f_weight < 0.0
    # mass bound for the equation-normalized field
    assert geo.lp_mass(rep.field, q) <= (0.5 * q) ** (q / (q - 2.0)) * 1.3 + 1e-9


def test_first_solution_gate(bundled64, opts):
    from biharm.errors import HypothesisViolated

    with pytest.raises(HypothesisViolated):
        first_solution(bundled64, 2.5, opts)      # bundled fails the ratio cond


def test_first_solution_degenerate_f_zero(geom64, opts):
    # with f = 0 the f-term vanishes and the minimum sits on the ball
    # boundary at the constant that minimizes the h-term: flagged
    p = ProblemData.from_expressions(geom64, "0", "-1", "0")
    rep = first_solution(p, 2.5, opts, force=True, ball_cap=1.0)
    assert rep.energy < 0.0
    assert rep.flags.get("degenerate_boundary", False)
    assert rep.mass == pytest.approx(1.0, rel=1e-9)
    # minimizer is the boundary constant
    assert np.ptp(rep.variational.samples) <= 1e-8


def test_ball_minimizer_matches_sphere_envelope(toy64, opts):
    # ball minimum equals the lowest sphere value over masses <= cap
    q, cap = 4.0, 1.3
    ball = minimize_on_ball(toy64, q, cap, opts=opts)
    curve = trace_mu_curve(toy64, q, 0.02, cap, n_points=16, opts=opts)
    assert ball.mu <= curve.mus.min() + 1e-8 * (1.0 + abs(ball.mu))


def test_sphere_minimizer_2d(geom2d):
    # two effective coordinates: the machinery is dimension-generic
    p = ProblemData.from_expressions(
        geom2d, "0.1", "-1", "cos(2*pi*x1)*cos(2*pi*x2) - 0.25"
    )
    q, k = 3.0, 2.0
    res = minimize_on_sphere(p, q, k, opts=SolverOptions(seed=0, battery_iter=300))
    assert res.converged
    assert geo.lp_mass(res.v, q) == pytest.approx(k, rel=1e-12)
    cap = k ** (2.0 / q) * p.int_h - k * p.int_f
    assert res.mu <= cap + 1e-9 * (1.0 + abs(cap))
    el = prob.el_residual(res.v, p, q, res.lagrange)
    assert el <= 1e-6 * (1.0 + abs(res.mu))
