import math

import numpy as np
import pytest

from biharm import geometry as geo
from biharm import problem as prob
from biharm.problem import (
    ExponentPair,
    ProblemData,
    einstein_preset,
    eval_F,
    eval_G,
    el_residual,
    grad_F,
)

TWO_PI = 2.0 * math.pi


def test_exponent_pair():
    e = ExponentPair(2.5, 6)
    assert e.critical == pytest.approx(6.0)
    assert e.subcritical
    assert not ExponentPair(6.0, 6).subcritical
    with pytest.raises(ValueError):
        ExponentPair(2.0, 6)
    with pytest.raises(ValueError):
        ExponentPair(6.5, 6)


def test_problem_data_splits(bundled64):
    p = bundled64
    assert np.all(p.f_plus_fine * p.f_minus_fine == 0.0)
    assert np.allclose(p.f_fine, p.f_plus_fine - p.f_minus_fine, atol=1e-14)
    assert p.h_negative
    assert p.f_minus_positive
    assert p.int_f_minus > 0.4
    assert p.a_plus_sup == pytest.approx(0.2, rel=1e-12)
    assert p.h_sup == pytest.approx(1.0, rel=1e-12)


def test_eval_F_zero_and_constant(bundled64, geom64):
    q = 2.5
    assert eval_F(geom64.zero(), bundled64, q) == 0.0
    for k in (0.5, 3.3, 40.0):
        c = geom64.constant(k ** (1.0 / q))
        want = k ** (2.0 / q) * bundled64.int_h - k * bundled64.int_f
        assert eval_F(c, bundled64, q) == pytest.approx(want, rel=1e-12)


def test_eval_F_single_mode(geom64):
    p = ProblemData.from_expressions(geom64, "0", "-1", "0")
    x = geom64.coordinates()[0]
    u = geom64.field(math.sqrt(2.0) * np.sin(TWO_PI * x))
    for q in (2.3, 3.0, 6.0):
        assert eval_F(u, p, q) == pytest.approx(TWO_PI**4 - 1.0, rel=1e-12)


def test_eval_G_decomposition(bundled64, geom64, rng):
    q = 2.5
    for _ in range(10):
        u = geom64.random_smooth(rng)
        F = eval_F(u, bundled64, q)
        G = eval_G(u, bundled64, q)
        fplus = geom64.integrate_fine(
            bundled64.f_plus_fine * np.abs(u.fine_values) ** q
        )
        assert F == pytest.approx(G - fplus, rel=1e-10, abs=1e-12)


def test_eval_G_nonnegative_f(geom64, rng):
    p = ProblemData.from_expressions(geom64, "0.1", "-1", "1 + 0.5*cos(2*pi*x1)")
    u = geom64.random_smooth(rng)
    assert eval_G(u, p, 2.5) == pytest.approx(prob.quadratic_part(u, p), rel=1e-12)


def test_eval_G_constant_one(bundled64, geom64):
    got = eval_G(geom64.constant(1.0), bundled64, 2.5)
    want = bundled64.int_h + bundled64.int_f_minus_grid
    assert got == pytest.approx(want, rel=1e-10)


def test_grad_zero_field(bundled64, geom64):
    g = grad_F(geom64.zero(), bundled64, 2.5)
    assert np.max(np.abs(g.samples)) == 0.0


def test_grad_constant_field(geom64):
    p = ProblemData.from_expressions(geom64, "0.7", "-2", "3")
    q, c = 2.5, 1.3
    g = grad_F(geom64.constant(c), p, q)
    want = 2.0 * (-2.0) * c - q * 3.0 * c * abs(c) ** (q - 2.0)
    assert np.allclose(g.samples, want, atol=1e-10)


@pytest.mark.parametrize("q", [2.3, 2.5, 3.0, 6.0])
def test_gradient_matches_finite_differences(bundled64, geom64, q, rng):
    worst = 0.0
    for _ in range(25):
        u = geom64.random_smooth(rng, decay=2.5)
        phi = geom64.random_smooth(rng, decay=2.5)
        lhs = geo.inner(grad_F(u, bundled64, q), phi)
        t = 1e-5
        fd = (
            eval_F(geo.add(u, phi, t), bundled64, q)
            - eval_F(geo.add(u, phi, -t), bundled64, q)
        ) / (2.0 * t)
        worst = max(worst, abs(lhs - fd) / max(1.0, abs(fd)))
    assert worst <= 1e-5


def test_evenness_and_scaling(bundled64, geom64, rng):
    q = 2.5
    for _ in range(5):
        u = geom64.random_smooth(rng)
        F = eval_F(u, bundled64, q)
        assert eval_F(geo.scale(u, -1.0), bundled64, q) == pytest.approx(F, rel=1e-12)
        Q = prob.quadratic_part(u, bundled64)
        fw = prob.f_weighted_mass(u, bundled64, q)
        for t in (-1.7, 0.3, 2.4):
            want = t * t * Q - abs(t) ** q * fw
            assert eval_F(geo.scale(u, t), bundled64, q) == pytest.approx(
                want, rel=1e-11, abs=1e-12
            )


def test_lower_bound_inequality(bundled64, geom64, rng):
    # F >= (1 - 2 s A+) |Du|^2 + (min h - 2 C(s) A+) k^(2/q) - k max f
    from biharm.certifier import grad_interp_constant

    q = 2.5
    a_plus = bundled64.a_plus_sup
    sigma = 0.25 / a_plus
    C = grad_interp_constant(sigma, geom64)
    for _ in range(25):
        u = geom64.random_smooth(rng, decay=2.0, amplitude=rng.uniform(0.2, 5.0))
        k = geo.lp_mass(u, q)
        F = eval_F(u, bundled64, q)
        rhs = (
            (1.0 - 2.0 * sigma * a_plus) * geo.bilap_energy(u)
            + (bundled64.h_min - 2.0 * C * a_plus) * k ** (2.0 / q)
            - k * bundled64.f_max
        )
        assert F >= rhs - 1e-9 * (1.0 + abs(rhs))


def test_el_residual_zero_field(bundled64, geom64):
    assert el_residual(geom64.zero(), bundled64, 2.5, 0.0) == 0.0


def _manufactured(geom, q):
    """Exact-coefficient positive profile and the f that balances it."""
    coeffs = np.zeros(geom.shape, dtype=np.complex128)
    coeffs[(0,) * geom.d_eff] = 2.0
    idx = (1,) + (0,) * (geom.d_eff - 1)
    coeffs[idx] = 0.25
    coeffs[tuple(-i for i in idx)] = 0.25
    u = geom.field_from_coeffs(coeffs)
    a = geom.constant(0.2)
    h = geom.constant(-1.0)
    lhs = geo.add(
        geo.add(geo.bilaplacian(u), geo.div_a_grad(a, u)), geo.scale(u, -1.0)
    )
    f = geom.field(lhs.samples / prob.signed_power(u.samples, q - 1.0))
    return u, ProblemData.from_fields(geom, a, h, f)


@pytest.mark.parametrize("q", [2.5, 4.0])
def test_el_residual_manufactured(geom64, q):
    u, p = _manufactured(geom64, q)
    assert el_residual(u, p, q, 0.0, equation_normalized=True) <= 1e-10


def test_el_residual_variational_weighting(geom64):
    # residual with the q/2 weighting vanishes for f scaled by 2/q
    q = 2.5
    u, p = _manufactured(geom64, q)
    f_var = geom64.field((2.0 / q) * p.f.samples)
    p_var = ProblemData.from_fields(geom64, p.a, p.h, f_var)
    assert el_residual(u, p_var, q, 0.0) <= 1e-10


def test_variational_to_equation_rescaling(geom64):
    q = 2.5
    u, p = _manufactured(geom64, q)
    # v solves the q/2-weighted form; u = (q/2)^(1/(q-2)) v the plain one
    v = geo.scale(u, (0.5 * q) ** (-1.0 / (q - 2.0)))
    assert el_residual(v, p, q, 0.0) <= 1e-10
    u_back = prob.variational_to_equation(v, q)
    assert np.allclose(u_back.samples, u.samples, rtol=1e-12)


def test_einstein_preset_values():
    assert einstein_preset(6, 0.0) == (0.0, 0.0)
    alpha, a0 = einstein_preset(6, -1.0)
    assert alpha == pytest.approx(-1.0 / 3.0, rel=1e-14)
    assert a0 == pytest.approx(2.0 * 32.0 / (16.0 * 6.0 * 25.0), rel=1e-14)
    for R in (-2.0, 0.5, 3.0):
        assert einstein_preset(7, R)[1] >= 0.0
    with pytest.raises(ValueError):
        einstein_preset(4, 1.0)


def test_einstein_preset_operator_reproduction(geom64):
    # with a = -alpha the middle term equals alpha * laplacian exactly
    alpha, a0 = einstein_preset(6, -1.0)
    a = geom64.constant(-alpha)
    x = geom64.coordinates()[0]
    u = geom64.field(np.cos(TWO_PI * 3 * x))
    lhs = geo.add(
        geo.add(geo.bilaplacian(u), geo.div_a_grad(a, u)), geo.scale(u, a0)
    )
    lam = (TWO_PI * 3) ** 2
    want = (lam**2 + alpha * lam + a0) * u.samples
    assert np.allclose(lhs.samples, want, rtol=1e-10, atol=1e-6)
    h = geom64.constant(a0)
    p = ProblemData.from_fields(geom64, a, h, geom64.constant(1.0))
    assert not p.h_negative   # preset violates the h < 0 hypothesis: flagged
