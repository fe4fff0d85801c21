"""Subcritical-to-critical continuation of the negative-energy branch.

The negative-energy solutions exist for every subcritical exponent; as
q -> N = 2n/(n-4) their masses stay below the window edge l_q and their
H2 norms below an explicit bound, which is what lets the family converge
to a solution of the critical equation.  On a fixed grid the limit is
replaced by warm-started direct solves along the geometric schedule

    q_j = N - (N - q0) 2^(-j),     q0 = (2 + N) / 2,

finishing with a solve at q = N exactly; every checkable identity of the
limit argument (mass bound, bilaplacian bound, negative energies, the
sign of int f |v|^N and the limiting level bound) is verified along the
way.  The splitting parameters (eta, sigma) are frozen from one
certificate so the bounds are comparable across the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

from . import geometry as geo
from . import problem as prob
from .errors import DivergingNorms, HypothesisViolated, NonConvergence
from .geometry import SpectralField
from .minimizer import CriticalPointReport, SolverOptions, first_solution
from .problem import ProblemData


@dataclass
class ContinuationTrace:
    """Per-exponent records of the continued negative-energy family."""

    schedule: list
    records: list                  # dict per q
    reports: list                  # CriticalPointReport per q
    final: CriticalPointReport
    eta: float
    sigma: float
    checks: dict = dataclass_field(default_factory=dict)


def window_edge(problem: ProblemData, q: float, eta: float, sigma: float) -> float:
    """Lower window edge l_q = [2 (sup|h| + 2 sup(a+) C(sigma)) / (eta int f^-)]^(q/(q-2))."""
    from .certifier import grad_interp_constant

    cap = problem.h_sup + 2.0 * problem.a_plus_sup * grad_interp_constant(
        sigma, problem.geometry
    )
    if problem.int_f_minus <= 0.0:
        return math.inf
    base = 2.0 * cap / (eta * problem.int_f_minus)
    return base ** (q / (q - 2.0))


def critical_residual(u: SpectralField, problem: ProblemData) -> float:
    """Strong-form residual of the critical equation at the rescaled field u."""
    N = problem.geometry.critical_exponent
    return prob.el_residual(u, problem, N, 0.0, equation_normalized=True)


def continue_to_critical(
    problem: ProblemData,
    opts: SolverOptions | None = None,
    certificate=None,
    force: bool = False,
    steps: int = 8,
    retry_multistart: bool = True,
) -> ContinuationTrace:
    """Drive the negative-energy branch to the critical exponent.

    Aborts with DivergingNorms when the explicit bilaplacian bound

        (1 - 2 sigma sup(a+)) |Delta v|^2
            <= (2 sup(a+) C(sigma) + sup|h|) l_q^(2/q) + sup|f| l_q

    fails at some step (the discrete family cannot be bounded), and with
    NonConvergence when a step fails even after a fresh multistart.
    """
    opts = opts or SolverOptions()
    g = problem.geometry
    N = g.critical_exponent
    q0 = 0.5 * (2.0 + N)
    schedule = [N - (N - q0) * 2.0 ** (-j) for j in range(steps)] + [N]

    from .certifier import certify, grad_interp_constant

    if certificate is None:
        certificate = certify(problem, q0, opts)
    if not force and not certificate.passed:
        raise HypothesisViolated(
            "certificate conditions (1)-(2) fail; pass force=True to override"
        )
    eta, sigma = certificate.eta, certificate.sigma
    if not (math.isfinite(eta) and math.isfinite(sigma)):
        if force:
            eta, sigma = 0.5, (
                0.25 / problem.a_plus_sup if problem.a_plus_sup > 0 else 1.0
            )
        else:
            raise HypothesisViolated("certificate carries no usable (eta, sigma)")

    c_sigma = grad_interp_constant(sigma, g)
    cap = problem.h_sup + 2.0 * problem.a_plus_sup * c_sigma
    shrink = 1.0 - 2.0 * sigma * problem.a_plus_sup

    records = []
    reports = []
    warm = None
    for q in schedule:
        l_q = window_edge(problem, q, eta, sigma)
        try:
            rep = first_solution(
                problem, q, opts, ball_cap=l_q, init=warm, force=True
            )
        except NonConvergence:
            if not retry_multistart:
                raise
            retry_opts = SolverOptions(
                seed=opts.seed + 1,
                max_iter=2 * opts.max_iter,
                tol_scale=opts.tol_scale,
                battery_iter=2 * opts.battery_iter,
            )
            rep = first_solution(
                problem, q, retry_opts, ball_cap=l_q, init=None, force=True
            )
        v = rep.variational
        mass = rep.mass
        delta_sq = geo.bilap_energy(v)
        bound_rhs = cap * l_q ** (2.0 / q) + problem.f_sup * l_q
        if shrink * delta_sq > bound_rhs * (1.0 + 1e-9) + 1e-12:
            raise DivergingNorms(
                f"bilaplacian bound failed at q={q}: "
                f"{shrink * delta_sq} > {bound_rhs}"
            )
        u_eq = rep.field
        rec = {
            "q": q,
            "l_q": l_q,
            "mass": mass,
            "mass_ok": mass <= l_q + 1e-8,
            "energy": rep.energy,
            "energy_negative": rep.energy < 0.0,
            "delta_sq": delta_sq,
            "delta_bound_lhs": shrink * delta_sq,
            "delta_bound_rhs": bound_rhs,
            "h2_norm_eq": rep.h2_norm,
            "mass_eq": geo.lp_mass(u_eq, q),
            "mass_eq_bound": (0.5 * q) ** (q / (q - 2.0)) * l_q,
            "identity_gap_rel": rep.identity_gap_rel,
            "residual_eq": rep.residual_equation,
            "f_weight": rep.f_weight,
        }
        if problem.a_fine.max() <= 0.0:
            rec["energy_floor"] = (problem.h_min - problem.f_plus_sup) * max(l_q, 1.0)
            rec["energy_floor_ok"] = rep.energy >= rec["energy_floor"] - 1e-9
        records.append(rec)
        reports.append(rep)
        warm = v

    final = reports[-1]
    l_N = records[-1]["l_q"]
    k_lim = min(
        l_N,
        (abs(problem.int_h) / (2.0 * problem.int_f_minus)) ** (N / (N - 2.0)),
    )
    level_bound = 0.5 * k_lim ** (2.0 / N) * problem.int_h
    tail = [r.variational for r in reports[-4:-1]]
    drift = [geo.l2_norm(geo.add(v, final.variational, -1.0)) for v in tail]
    checks = {
        "all_energies_negative": all(r["energy_negative"] for r in records),
        "all_masses_bounded": all(r["mass_ok"] for r in records),
        "final_f_weight": final.f_weight,
        "final_f_weight_negative": final.f_weight < 0.0,
        "nontrivial": final.f_weight < 0.0 and geo.l2_norm(final.field) > 0.0,
        "level_bound_k": k_lim,
        "level_bound_rhs": level_bound,
        "level_bound_ok": final.energy <= level_bound + 1e-9,
        "critical_residual": critical_residual(final.field, problem),
        "weak_limit_drift": drift,
        "weak_limit_monotone": all(
            drift[i] >= drift[i + 1] - 1e-12 for i in range(len(drift) - 1)
        ),
    }
    return ContinuationTrace(
        schedule=schedule,
        records=records,
        reports=reports,
        final=final,
        eta=eta,
        sigma=sigma,
        checks=checks,
    )
