"""Constrained minimization of F_q on L^q spheres and balls.

The workhorse is a Riemannian projected-gradient iteration with
Barzilai-Borwein steps: search directions are preconditioned by the
spectral-diagonal metric (s + |2 pi m|^4)^(-1) (which tames the 10^10
conditioning of the bilaplacian), the component along the constraint
direction psi = P(|u|^(q-2) u) is removed, and the exact radial
retraction u -> k^(1/q) u / |u|_q restores the sphere after every step.
The metric choice does not move critical points; the reported Lagrange
multiplier is the L2 Riesz coefficient

    lambda = <grad F(v), psi> / (2 <psi, psi>),

so converged iterates satisfy the multiplier form of the stationarity
equation to the gradient tolerance.

``trace_mu_curve`` sweeps a geometric k-grid in both directions with
warm starts plus a fixed multistart battery per point and annotates the
curve with the negative minimum, bisection-refined zero crossings and
the certified coercivity window when a certificate is supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import geometry as geo
from . import problem as prob
from .errors import HypothesisViolated, NonConvergence
from .geometry import SpectralField
from .problem import ProblemData

_EPS = np.finfo(np.float64).eps


@dataclass
class SolverOptions:
    """Knobs shared by every iterative solve; deterministic given seed."""

    seed: int = 0
    max_iter: int = 5000
    tol_scale: float = 1e-8        # gradient tolerance: tol_scale * (1 + |F|)
    battery_iter: int = 600        # iteration cap for multistart probes
    multistart: bool = True
    n_random_starts: int = 3
    memory: int = 12               # nonmonotone line-search window
    verbose: bool = False

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, stream]))


@dataclass
class SphereResult:
    v: SpectralField
    mu: float
    lagrange: float
    residual: float
    iterations: int
    converged: bool
    seed_tag: str = ""


@dataclass
class CriticalPointReport:
    """A converged candidate solution with its checkable identities.

    ``field`` is the equation-normalized solution u = (q/2)^(1/(q-2)) v;
    energy and the critical-point identity refer to the variational
    representative v.
    """

    q: float
    field: SpectralField
    variational: SpectralField
    energy: float
    mass: float                    # |v|_q^q
    f_weight: float                # int f |v|^q
    identity_gap_rel: float        # |F(v) - (q/2 - 1) int f|v|^q| / (1 + |F|)
    residual_equation: float
    residual_variational: float
    grad_norm: float
    h2_norm: float
    q_norm: float
    converged: bool
    flags: dict = dataclass_field(default_factory=dict)

    @property
    def f_weight_sign(self) -> int:
        return int(np.sign(self.f_weight))


@dataclass
class MuCurve:
    """Sampled map k -> inf of F_q on the sphere |u|_q^q = k."""

    q: float
    ks: np.ndarray
    mus: np.ndarray
    lagranges: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    flags: list
    minimizers: list
    annotations: dict = dataclass_field(default_factory=dict)

    def ok(self) -> np.ndarray:
        return np.array([f == "ok" for f in self.flags])


# ----------------------------------------------------------------------
# core iteration


def _precond_shift(problem: ProblemData, q: float, k: float) -> float:
    """Scale estimate of the zeroth-order Hessian block at mass k."""
    amp = max(k, _EPS) ** (1.0 / q)
    nl = q * (q - 1.0) * problem.f_sup * amp ** (q - 2.0)
    return max(1.0, problem.h_sup + nl)


def _retract_sphere(u: SpectralField, q: float, k: float) -> SpectralField:
    nrm = geo.lp_norm(u, q)
    if nrm == 0.0:
        raise ValueError("cannot retract the zero field onto the sphere")
    return geo.scale(u, k ** (1.0 / q) / nrm)


def _project_span(u: SpectralField, basis) -> SpectralField:
    """L2-orthogonal projection onto the span of an orthonormal basis."""
    return geo.combination(basis, [geo.inner(u, e) for e in basis])


def _bb_minimize(
    problem: ProblemData,
    q: float,
    u0: SpectralField,
    opts: SolverOptions,
    max_iter: int,
    sphere_k: float | None = None,
    ball_cap: float | None = None,
    subspace=None,
):
    """Preconditioned BB descent on a sphere (sphere_k) or ball (ball_cap).

    Returns (u, F, lagrange, residual, iterations, converged).  The
    residual is the L2 norm of the gradient with its multiplier
    component removed (sphere/active boundary) or of the raw gradient
    (ball interior).
    """
    g = problem.geometry
    scale_k = sphere_k if sphere_k is not None else (ball_cap or 1.0)
    P = 1.0 / (_precond_shift(problem, q, scale_k) + g.lam_sq)

    def retract(w):
        if sphere_k is not None:
            return _retract_sphere(w, q, sphere_k)
        if ball_cap is not None and geo.lp_mass(w, q) > ball_cap:
            return _retract_sphere(w, q, ball_cap)
        return w

    u = retract(u0 if subspace is None else _project_span(u0, subspace))
    F, grad = prob.energy_and_grad(u, problem, q)
    hist = [F]
    tau = 1.0
    prev_coeffs = None
    prev_pg = None
    best = (F, u, 0.0, math.inf)
    lam = 0.0
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        on_boundary = sphere_k is not None or (
            ball_cap is not None
            and geo.lp_mass(u, q) >= ball_cap * (1.0 - 1e-12)
        )
        if on_boundary:
            psi = prob.constraint_direction(u, q)
            psi_sq = geo.inner(psi, psi)
            lam = geo.inner(grad, psi) / (2.0 * psi_sq)
            res_field = geo.add(grad, psi, -2.0 * lam)
            residual = geo.l2_norm(res_field)
            beta = float(
                np.vdot(psi.coeffs, P * grad.coeffs).real
                / max(np.vdot(psi.coeffs, P * psi.coeffs).real, _EPS)
            )
            d_coeffs = -P * (grad.coeffs - beta * psi.coeffs)
        else:
            lam = 0.0
            residual = geo.l2_norm(grad)
            d_coeffs = -P * grad.coeffs
        if F <= best[0]:
            best = (F, u, lam, residual)
        if residual <= opts.tol_scale * (1.0 + abs(F)):
            return u, F, lam, residual, it, True

        d = g.field_from_coeffs(d_coeffs)
        if subspace is not None:
            d = _project_span(d, subspace)
        d_sq = geo.inner(d, d)
        if d_sq <= 0.0:
            break

        # BB step from the previous accepted move, safeguarded
        if prev_coeffs is not None:
            s = u.coeffs - prev_coeffs
            y = (-d_coeffs) - prev_pg
            sy = float(np.vdot(s, y).real)
            if it % 2 == 0:
                ss = float(np.vdot(s, s).real)
                tau_bb = ss / sy if sy > 0 else tau * 2.0
            else:
                yy = float(np.vdot(y, y).real)
                tau_bb = sy / yy if sy > 0 and yy > 0 else tau * 2.0
            tau = min(max(tau_bb, 1e-10), 1e12)
        prev_coeffs = u.coeffs
        prev_pg = -d_coeffs

        f_ref = max(hist[-opts.memory:])
        accepted = False
        t = tau
        for _ in range(40):
            trial = retract(geo.add(u, d, t))
            try:
                F_t, grad_t = prob.energy_and_grad(trial, problem, q)
            except ValueError:
                t *= 0.25
                continue
            if F_t <= f_ref - 1e-6 * t * d_sq or F_t < best[0]:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # descent exhausted at line-search resolution
            break
        u, F, grad = trial, F_t, grad_t
        hist.append(F)

    F_b, u_b, lam_b, res_b = best
    return u_b, F_b, lam_b, res_b, it, res_b <= opts.tol_scale * (1.0 + abs(F_b))


# ----------------------------------------------------------------------
# multistart seeds


def default_seeds(problem: ProblemData, q: float, k: float, opts: SolverOptions):
    """Deterministic multistart battery for the sphere of mass k.

    Constant, +/- a smooth bump centered in the positivity set of f,
    +/- the lowest nonconstant mode, and fixed-seed random smooth
    fields; every seed is retracted onto the sphere.
    """
    g = problem.geometry
    seeds = [("const", g.constant(1.0))]
    idx = np.unravel_index(int(np.argmax(problem.f.samples)), g.shape)
    center = [i / g.grid_size for i in idx]
    bump = g.bump(center, width=0.08)
    seeds.append(("bump+", bump))
    seeds.append(("bump-", geo.scale(bump, -1.0)))
    mode = g.mode((1,) * g.d_eff)
    seeds.append(("mode+", mode))
    seeds.append(("mode-", geo.scale(mode, -1.0)))
    rng = opts.rng(stream=101)
    for i in range(opts.n_random_starts):
        seeds.append((f"rand{i}", g.random_smooth(rng, decay=2.5)))
    return [(tag, _retract_sphere(s, q, k)) for tag, s in seeds]


# ----------------------------------------------------------------------
# public solvers


def minimize_on_sphere(
    problem: ProblemData,
    q: float,
    k: float,
    init: SpectralField | None = None,
    opts: SolverOptions | None = None,
    subspace=None,
) -> SphereResult:
    """Minimize F_q over the sphere |u|_q^q = k.

    Runs the warm start (if given) to full tolerance and, when
    multistart is enabled, a capped battery of standard seeds whose
    winner is polished to full tolerance; ties break toward the lowest
    energy, then the earlier seed.  The output always satisfies the
    constraint exactly by retraction.
    """
    if k <= 0.0:
        raise ValueError(f"sphere mass k must be positive, got {k}")
    opts = opts or SolverOptions()
    problem.exponents(q)

    candidates = []
    if init is not None:
        u, F, lam, res, its, conv = _bb_minimize(
            problem, q, init, opts, opts.max_iter, sphere_k=k, subspace=subspace
        )
        candidates.append((F, 0, SphereResult(u, F, lam, res, its, conv, "warm")))
    if opts.multistart or init is None:
        for i, (tag, s) in enumerate(default_seeds(problem, q, k, opts), start=1):
            u, F, lam, res, its, conv = _bb_minimize(
                problem, q, s, opts, opts.battery_iter, sphere_k=k, subspace=subspace
            )
            candidates.append((F, i, SphereResult(u, F, lam, res, its, conv, tag)))
    candidates.sort(key=lambda c: (c[0], c[1]))
    winner = candidates[0][2]
    if not winner.converged:
        u, F, lam, res, its, conv = _bb_minimize(
            problem, q, winner.v, opts, opts.max_iter, sphere_k=k, subspace=subspace
        )
        winner = SphereResult(u, F, lam, res, winner.iterations + its, conv, winner.seed_tag)
    return winner


def minimize_on_ball(
    problem: ProblemData,
    q: float,
    cap: float,
    init: SpectralField | None = None,
    opts: SolverOptions | None = None,
) -> SphereResult:
    """Minimize F_q over the ball |u|_q^q <= cap (inequality retraction)."""
    if cap <= 0.0:
        raise ValueError(f"ball cap must be positive, got {cap}")
    opts = opts or SolverOptions()
    problem.exponents(q)

    # constant branch F(c) = c^2 int h - |c|^q int f seeds the h-dominated well
    g = problem.geometry
    cs = np.linspace(-(cap ** (1.0 / q)), cap ** (1.0 / q), 101)
    cs = cs[np.abs(cs) > 1e-9]
    vals = cs**2 * problem.int_h - np.abs(cs) ** q * problem.int_f
    c_best = float(cs[int(np.argmin(vals))])

    candidates = []
    starts = [("const-scan", g.constant(c_best))]
    if init is not None:
        starts.insert(0, ("warm", init))
    if opts.multistart:
        small = 0.05 * cap
        for tag, s in default_seeds(problem, q, small, opts):
            starts.append((tag, s))
    for i, (tag, s) in enumerate(starts):
        cap_iter = opts.max_iter if tag in ("warm", "const-scan") else opts.battery_iter
        u, F, lam, res, its, conv = _bb_minimize(
            problem, q, s, opts, cap_iter, ball_cap=cap
        )
        candidates.append((F, i, SphereResult(u, F, lam, res, its, conv, tag)))
    candidates.sort(key=lambda c: (c[0], c[1]))
    winner = candidates[0][2]
    if not winner.converged:
        u, F, lam, res, its, conv = _bb_minimize(
            problem, q, winner.v, opts, opts.max_iter, ball_cap=cap
        )
        winner = SphereResult(u, F, lam, res, winner.iterations + its, conv, winner.seed_tag)
    return winner


def make_report(
    problem: ProblemData,
    q: float,
    v: SpectralField,
    lagrange: float,
    converged: bool,
    flags: dict | None = None,
) -> CriticalPointReport:
    """Assemble the identity checks for a critical-point candidate v."""
    F = prob.eval_F(v, problem, q)
    fw = prob.f_weighted_mass(v, problem, q)
    gap = abs(F - (0.5 * q - 1.0) * fw) / (1.0 + abs(F))
    u_eq = prob.variational_to_equation(v, q)
    grad = prob.grad_F(v, problem, q)
    return CriticalPointReport(
        q=q,
        field=u_eq,
        variational=v,
        energy=F,
        mass=geo.lp_mass(v, q),
        f_weight=fw,
        identity_gap_rel=gap,
        residual_equation=prob.el_residual(u_eq, problem, q, 0.0, equation_normalized=True),
        residual_variational=prob.el_residual(v, problem, q, lagrange),
        grad_norm=geo.l2_norm(grad),
        h2_norm=geo.h2_norm(u_eq),
        q_norm=geo.lp_norm(u_eq, q),
        converged=converged,
        flags=dict(flags or {}),
    )


def first_solution(
    problem: ProblemData,
    q: float,
    opts: SolverOptions | None = None,
    certificate=None,
    force: bool = False,
    ball_cap: float | None = None,
    init: SpectralField | None = None,
) -> CriticalPointReport:
    """Negative-energy solution from minimization over the ball |u|_q^q <= l_q.

    The ball radius l_q comes from the certificate's coercivity window
    (its lower edge) unless given explicitly.  Unless ``force`` is set,
    the certificate's spectral and ratio conditions must hold.  The
    minimum is expected in the interior (so the candidate is a free
    critical point); a boundary-active minimum is flagged as degenerate.
    """
    opts = opts or SolverOptions()
    if ball_cap is None or (certificate is None and not force):
        from .certifier import certify

        if certificate is None:
            certificate = certify(problem, q, opts)
        if not force and not (certificate.cond_spectral and certificate.cond_ratio):
            raise HypothesisViolated(
                "certificate conditions (1)-(2) fail; pass force=True to override"
            )
        if ball_cap is None:
            ball_cap = certificate.k_low
    res = minimize_on_ball(problem, q, ball_cap, init=init, opts=opts)
    v = res.v
    if init is not None and geo.inner(v, init) < 0.0:
        # the energy is even; report the representative aligned with the seed
        v = geo.scale(v, -1.0)
        res = SphereResult(
            v, res.mu, res.lagrange, res.residual, res.iterations,
            res.converged, res.seed_tag,
        )
    flags = {"ball_cap": ball_cap, "seed": res.seed_tag}
    mass = geo.lp_mass(res.v, q)
    interior = mass < ball_cap * (1.0 - 1e-9)
    if not interior:
        flags["degenerate_boundary"] = True
    if not res.converged:
        flags["nonconverged"] = True
    report = make_report(problem, q, res.v, 0.0 if interior else res.lagrange,
                         res.converged, flags)
    if report.energy >= 0.0:
        raise NonConvergence(
            f"ball minimization did not reach negative energy (F={report.energy})",
            best=report,
        )
    return report


# ----------------------------------------------------------------------
# the mu-curve tracer


def _curve_point(problem, q, k, warm, opts):
    """Best sphere minimization at one mass, warm start plus battery."""
    init = _retract_sphere(warm, q, k) if warm is not None else None
    return minimize_on_sphere(problem, q, k, init=init, opts=opts)


def trace_mu_curve(
    problem: ProblemData,
    q: float,
    k_min: float,
    k_max: float,
    n_points: int = 48,
    opts: SolverOptions | None = None,
    certificate=None,
) -> MuCurve:
    """Sample k -> mu_k over a geometric grid with warm-started sweeps.

    Two sweeps (upward and downward in k) are run with warm starts from
    the neighbor's minimizer plus the multistart battery at every point;
    the pointwise minimum is kept.  Non-converged points are flagged and
    skipped by the annotation pass, never fatal.  Annotations:

    - ``k_neg_min`` / ``mu_neg_min``: the interior negative minimum
      (argmin over the leading negative segment),
    - ``l1`` / ``l2``: zero crossings refined by bisection in k to a
      relative width of 1e-4,
    - ``l_o`` / ``mu_lo``: the in-between maximum,
    - ``certified_window`` and ``certified_bound_ok`` when a certificate
      with a nonempty coercivity window is supplied.
    """
    if not (0.0 < k_min < k_max):
        raise ValueError("need 0 < k_min < k_max")
    opts = opts or SolverOptions()
    ks = np.geomspace(k_min, k_max, n_points)
    results: list[SphereResult | None] = [None] * n_points

    warm = None
    for i in range(n_points):
        res = _curve_point(problem, q, ks[i], warm, opts)
        results[i] = res
        warm = res.v
    warm = None
    for i in range(n_points - 1, -1, -1):
        res = _curve_point(problem, q, ks[i], warm, opts)
        if res.mu < results[i].mu:
            results[i] = res
        warm = results[i].v

    curve = MuCurve(
        q=q,
        ks=ks,
        mus=np.array([r.mu for r in results]),
        lagranges=np.array([r.lagrange for r in results]),
        residuals=np.array([r.residual for r in results]),
        iterations=np.array([r.iterations for r in results]),
        flags=["ok" if r.converged else "nonconverged" for r in results],
        minimizers=[r.v for r in results],
    )
    _annotate(curve, problem, q, opts, certificate)
    return curve


def _refine_zero(problem, q, k_lo, mu_lo, k_hi, warm, opts, rel_tol=1e-4):
    """Bisect a sign change of mu(k); returns (k, mu_at_k)."""
    sign_lo = mu_lo > 0
    while (k_hi - k_lo) / k_hi > rel_tol:
        k_mid = math.sqrt(k_lo * k_hi)
        res = _curve_point(problem, q, k_mid, warm, opts)
        warm = res.v
        if (res.mu > 0) == sign_lo:
            k_lo = k_mid
        else:
            k_hi = k_mid
    k_star = math.sqrt(k_lo * k_hi)
    res = _curve_point(problem, q, k_star, warm, opts)
    return k_star, res.mu


def _annotate(curve: MuCurve, problem, q, opts, certificate):
    ks, mus = curve.ks, curve.mus
    ok = curve.ok()
    ann: dict = {}
    pos = mus > 0.0

    # leading negative run / positive hump / trailing negative run
    first_pos = int(np.argmax(pos)) if pos.any() else None
    if first_pos is not None and first_pos > 0:
        lead = slice(0, first_pos)
        i_min = int(np.argmin(np.where(ok[lead], mus[lead], np.inf)))
        ann["k_neg_min"] = float(ks[i_min])
        ann["mu_neg_min"] = float(mus[i_min])
        # zero crossing l1 between the leading run and the hump
        warm = curve.minimizers[first_pos - 1]
        l1, mu_l1 = _refine_zero(
            problem, q, ks[first_pos - 1], mus[first_pos - 1], ks[first_pos], warm, opts
        )
        ann["l1"] = l1
        ann["mu_at_l1"] = mu_l1
        after = np.nonzero(~pos[first_pos:])[0]
        if after.size:
            j = first_pos + int(after[0])
            warm = curve.minimizers[j - 1]
            l2, mu_l2 = _refine_zero(
                problem, q, ks[j - 1], mus[j - 1], ks[j], warm, opts
            )
            ann["l2"] = l2
            ann["mu_at_l2"] = mu_l2
            hump = slice(first_pos, j)
            i_max = first_pos + int(np.argmax(mus[hump]))
            ann["l_o"] = float(ks[i_max])
            ann["mu_lo"] = float(mus[i_max])
    ann["shape"] = (
        "neg-min/hump/neg-tail"
        if {"k_neg_min", "l1", "l2"} <= ann.keys()
        else "incomplete"
    )

    if certificate is not None:
        lo, hi = certificate.k_low, certificate.k_high_certified
        ann["certified_window"] = [lo, hi]
        inside = (ks >= lo) & (ks <= hi) & ok
        if hi > lo and inside.any():
            bound = 0.5 * certificate.mu_floor * ks[inside] ** (2.0 / q)
            ann["certified_bound_ok"] = bool(np.all(mus[inside] >= bound - 1e-8))
            ann["certified_bound_margin"] = float(np.min(mus[inside] - bound))
        else:
            ann["certified_bound_ok"] = None
    curve.annotations = ann
