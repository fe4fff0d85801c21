"""Second solution by path deformation between the energy-curve zeros.

The two zeros l1 < l2 of the constrained-infimum curve bound a positive
hump; any continuous path joining minimizers at the two zero masses must
climb over it, so the inf-max level

    nu_q = inf over paths of max_t F_q(gamma(t))

is positive and is attained at a critical point.  The discrete
algorithm deforms a free (unconstrained) piecewise path: the maximal
node and its neighbors move along preconditioned steepest descent and a
step is accepted only if the path maximum strictly drops.  The maximum
is measured honestly over the polyline - segment interiors are sampled,
dominant interior points become nodes, and every segment is evaluated
where its L^q mass crosses the hump masses, so the measured level
dominates the sampled hump by construction rather than by solver luck.
When the level stalls, the maximal node is polished into a genuine
critical point by a damped Gauss-Newton solve on the stationarity
residual; the reported ``nu`` is the stalled honest maximum and the
report's energy is that of the polished critical point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import geometry as geo
from . import problem as prob
from .errors import Collapse, NonConvergence, ShapeNotFound
from .geometry import SpectralField
from .minimizer import (
    CriticalPointReport,
    MuCurve,
    SolverOptions,
    make_report,
    _project_span,
    _retract_sphere,
)
from .problem import ProblemData

_EPS = np.finfo(np.float64).eps


# ----------------------------------------------------------------------
# locating the zeros of the energy curve


def _quad_root(k0, m0, k1, m1, k2, m2, lo, hi):
    """Root of the parabola through three samples, restricted to [lo, hi]."""
    coeffs = np.polyfit([k0, k1, k2], [m0, m1, m2], 2)
    roots = np.roots(coeffs)
    roots = roots[np.isreal(roots)].real
    roots = roots[(roots >= lo) & (roots <= hi)]
    if roots.size:
        return float(roots[0])
    # fall back to the secant root of the bracketing pair
    return float((lo * m2 - hi * m1) / (m2 - m1)) if m2 != m1 else float(lo)


def find_mu_zeros(curve: MuCurve, evaluator=None, rel_tol: float = 1e-4):
    """Zero crossings (l1, l2) and hump maximizer l_o of an energy curve.

    Uses the tracer's bisection-refined annotations when present.  With
    an ``evaluator`` (a callable k -> mu) crossings are re-bisected to
    the requested relative width; otherwise they are refined by local
    quadratic interpolation of the samples, which is exact whenever the
    curve is locally quadratic.  Raises ShapeNotFound if the sampled
    curve has no negative/positive/negative pattern.
    """
    ann = curve.annotations or {}
    if evaluator is None and {"l1", "l2", "l_o"} <= ann.keys():
        return ann["l1"], ann["l2"], ann["l_o"]

    ks = np.asarray(curve.ks, dtype=float)
    mus = np.asarray(curve.mus, dtype=float)
    pos = mus > 0.0
    if not pos.any() or pos[0] or pos[-1]:
        raise ShapeNotFound("curve lacks the negative / positive / negative shape")
    i1 = int(np.argmax(pos))                       # first positive sample
    rest = np.nonzero(~pos[i1:])[0]
    if rest.size == 0:
        raise ShapeNotFound("curve never returns below zero after the hump")
    i2 = i1 + int(rest[0])                         # first negative after hump

    def refine(a, b):
        if evaluator is not None:
            ka, kb = ks[a], ks[b]
            mu_a = mus[a]
            sign_a = mu_a > 0
            while (kb - ka) / kb > rel_tol:
                km = math.sqrt(ka * kb)
                if (evaluator(km) > 0) == sign_a:
                    ka = km
                else:
                    kb = km
            return math.sqrt(ka * kb)
        c = max(a - 1, 0) if a - 1 >= 0 else a + 2
        return _quad_root(
            ks[c], mus[c], ks[a], mus[a], ks[b], mus[b], ks[a], ks[b]
        )

    l1 = refine(i1 - 1, i1)
    l2 = refine(i2 - 1, i2)
    hump = slice(i1, i2)
    j = i1 + int(np.argmax(mus[hump]))
    if 0 < j < len(ks) - 1:
        # parabolic vertex through the argmax and neighbors
        ka, kb, kc = ks[j - 1], ks[j], ks[j + 1]
        ma, mb, mc = mus[j - 1], mus[j], mus[j + 1]
        denom = (ka - kb) * (ka - kc) * (kb - kc)
        if denom != 0.0:
            A = (kc * (mb - ma) + kb * (ma - mc) + ka * (mc - mb)) / denom
            B = (kc**2 * (ma - mb) + kb**2 * (mc - ma) + ka**2 * (mb - mc)) / denom
            if A < 0.0:
                vertex = -B / (2.0 * A)
                if ks[j - 1] < vertex < ks[j + 1]:
                    l_o = float(vertex)
                else:
                    l_o = float(kb)
            else:
                l_o = float(kb)
        else:
            l_o = float(kb)
    else:
        l_o = float(ks[j])
    if not (l1 < l_o < l2):
        l_o = float(ks[j])
    return float(l1), float(l2), l_o


# ----------------------------------------------------------------------
# Newton polish of a stationary point


def _hessian_apply(problem, q, u, v):
    """Action of half the Hessian of F_q at u on v."""
    g = problem.geometry
    out = g.lam_sq * v.coeffs
    vf = v.fine_values
    uf = u.fine_values
    for i in range(g.d_eff):
        dv = g.fine_samples(g.deriv_mult[i] * v.coeffs)
        prod = g.truncate_coeffs(np.fft.fftn(problem.a_fine * dv) * g.fine_weight)
        out += g.deriv_mult[i] * prod
    out += g.truncate_coeffs(np.fft.fftn(problem.h_fine * vf) * g.fine_weight)
    weight = 0.5 * q * (q - 1.0) * problem.f_fine * np.abs(uf) ** (q - 2.0)
    out -= g.truncate_coeffs(np.fft.fftn(weight * vf) * g.fine_weight)
    return g.field_from_coeffs(out)


def _residual_field(problem, q, u):
    """Half the gradient of F_q: the strong-form stationarity residual."""
    return geo.scale(prob.grad_F(u, problem, q), 0.5)


def refine_critical_point(
    problem: ProblemData,
    q: float,
    u0: SpectralField,
    max_newton: int = 40,
    tol_scale: float = 1e-13,
    ok_scale: float = 1e-9,
    subspace=None,
) -> tuple[SpectralField, float, bool]:
    """Damped Newton iteration on the stationarity residual of F_q.

    Converges to the critical point nearest the seed regardless of its
    Morse index, which makes it the right polish for saddle candidates.
    The damping acts through the Gauss-Newton normal matrix, which stays
    positive semidefinite at saddles, so it never sweeps a Hessian
    eigenvalue through zero; translation quasi-symmetries leave a
    near-null direction that an undamped solve would overshoot.

    Iterates toward ``tol_scale * (1 + |F|)`` (roughly the rounding
    floor) but reports success at ``ok_scale * (1 + |F|)``.  Returns
    (field, residual_norm, converged); dense solves for one-dimensional
    grids, Krylov otherwise, span-restricted when a subspace is given.
    """
    g = problem.geometry
    u = u0
    basis = list(subspace) if subspace is not None else None

    def res_norm(r):
        # within a subspace only the projected stationarity can vanish
        if basis is not None:
            return math.sqrt(sum(geo.inner(e, r) ** 2 for e in basis))
        return geo.l2_norm(r)

    r = _residual_field(problem, q, u)
    rn = res_norm(r)
    scale0 = 1.0 + abs(prob.eval_F(u, problem, q))
    lm = 0.0

    def assemble(u):
        if basis is not None:
            k = len(basis)
            H = np.empty((k, k))
            for j, ej in enumerate(basis):
                Hej = _hessian_apply(problem, q, u, ej)
                for i, ei in enumerate(basis):
                    H[i, j] = geo.inner(ei, Hej)
            return 0.5 * (H + H.T)
        n = g.size
        H = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            H[:, j] = _hessian_apply(
                problem, q, u, g.field(e.reshape(g.shape))
            ).samples.ravel()
        return 0.5 * (H + H.T)

    def solve_step(H, r_vec, lm):
        # damped Gauss-Newton on the stationarity system: the normal
        # matrix stays positive semidefinite at saddles, so the damping
        # never sweeps a Hessian eigenvalue through zero
        HtH = H.T @ H
        scale = max(float(np.max(np.diag(HtH))), _EPS)
        rhs = -H.T @ r_vec
        try:
            return np.linalg.solve(HtH + lm * scale * np.eye(H.shape[0]), rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(H, -r_vec, rcond=None)
            return sol

    def residual_vec(r):
        if basis is not None:
            return np.array([geo.inner(ei, r) for ei in basis])
        return r.samples.ravel()

    def to_field(vec):
        if basis is not None:
            return geo.combination(basis, vec)
        return g.field(vec.reshape(g.shape))

    use_dense = basis is not None or g.size <= 1024
    for _ in range(max_newton):
        if rn <= tol_scale * scale0:
            break
        if use_dense:
            H = assemble(u)
            r_vec = residual_vec(r)
            improved = False
            for _ in range(10):
                delta = to_field(solve_step(H, r_vec, lm))
                trial = geo.add(u, delta, 1.0)
                rt = _residual_field(problem, q, trial)
                rtn = res_norm(rt)
                if rtn < rn:
                    u, r, rn = trial, rt, rtn
                    lm = lm / 16.0 if lm > 1e-15 else 0.0
                    improved = True
                    break
                lm = 1e-12 if lm == 0.0 else lm * 16.0
                if lm > 1e3:
                    break
            if not improved:
                break
        else:
            from scipy.sparse.linalg import LinearOperator, lsqr

            n = g.size

            def matvec(x):
                xf = g.field(x.reshape(g.shape))
                return _hessian_apply(problem, q, u, xf).samples.ravel()

            op = LinearOperator((n, n), matvec=matvec, rmatvec=matvec, dtype=float)
            d = lsqr(op, -r.samples.ravel(), damp=math.sqrt(lm), atol=1e-13,
                     btol=1e-13, iter_lim=800)[0]
            trial = geo.add(u, g.field(d.reshape(g.shape)), 1.0)
            rt = _residual_field(problem, q, trial)
            rtn = res_norm(rt)
            if rtn < rn:
                u, r, rn = trial, rt, rtn
                lm = lm / 16.0 if lm > 1e-15 else 0.0
            else:
                lm = 1e-12 if lm == 0.0 else lm * 16.0
                if lm > 1e3:
                    break
    return u, rn, rn <= ok_scale * scale0


# ----------------------------------------------------------------------
# the deformation algorithm


@dataclass
class PathState:
    """Discretized path with fixed endpoints.

    History rows are (iteration, level, nodes_inserted).  Accepted
    deformation steps never raise the measured level; it can move up
    only when interior sampling inserts a node (the estimate of the
    polyline maximum sharpens), so monotonicity holds between rows with
    no insertions.
    """

    nodes: list
    energies: np.ndarray
    index_max: int
    history: list = dataclass_field(default_factory=list)

    @property
    def nu(self) -> float:
        return float(self.energies[self.index_max])


@dataclass
class MountainPassResult:
    v: SpectralField
    nu: float
    report: CriticalPointReport
    path: PathState
    profile_rows: list            # (iteration, node, energy) records
    iterations: int
    converged: bool


def _reparameterize(nodes, n_out=None):
    """Resample the polyline by L2 arc length (endpoints pinned)."""
    n = len(nodes)
    n_out = n if n_out is None else max(int(n_out), 3)
    seg = [geo.l2_norm(geo.add(nodes[i + 1], nodes[i], -1.0)) for i in range(n - 1)]
    total = sum(seg)
    if total <= 0.0:
        return list(nodes)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, n_out)
    out = [nodes[0]]
    for t in targets[1:-1]:
        j = int(np.searchsorted(cum, t, side="right") - 1)
        j = min(max(j, 0), n - 2)
        local = (t - cum[j]) / max(seg[j], _EPS)
        out.append(geo.add(geo.scale(nodes[j], 1.0 - local), nodes[j + 1], local))
    out.append(nodes[-1])
    return out


def _init_path(problem, q, u1, u2, n_nodes, interior_seeds, subspace):
    """Initial path with monotone masses and sign-coherent nodes.

    The energy is even, so every seed is defined only up to sign;
    anti-aligned neighbors would put a near-zero-mass field inside one
    segment, which hides the hump crossing from interior sampling.
    Each node is therefore flipped to align with its predecessor.
    """
    k1 = geo.lp_mass(u1, q)
    k2 = geo.lp_mass(u2, q)
    masses = np.geomspace(k1, k2, n_nodes)
    nodes = [u1]
    for j in range(1, n_nodes - 1):
        t = j / (n_nodes - 1)
        if interior_seeds:
            # nearest curve minimizer in log-mass, rescaled to the target
            logm = math.log(masses[j])
            seed_k, seed_u = min(
                interior_seeds, key=lambda s: abs(math.log(s[0]) - logm)
            )
            w = seed_u
        else:
            w = geo.add(geo.scale(u1, 1.0 - t), u2, t)
        if subspace is not None:
            w = _project_span(w, subspace)
        if geo.inner(w, nodes[-1]) < 0.0:
            w = geo.scale(w, -1.0)
        nodes.append(_retract_sphere(w, q, masses[j]))
    nodes.append(u2)
    return nodes


def align_sign(u: SpectralField, reference: SpectralField) -> SpectralField:
    """Pick the sign representative of u aligned with the reference.

    The energy is even, so u and -u are interchangeable; mountain-pass
    endpoints should be passed through this so the initial path does not
    straddle the origin.
    """
    return geo.scale(u, -1.0) if geo.inner(u, reference) < 0.0 else u


class _Path:
    """Polyline of fields whose maximum is sampled honestly.

    Node hopping can tunnel a node-sampled maximum below the hump (two
    adjacent nodes straddle it while no node sits on it), so the level
    is tracked over nodes *and* segment interior samples, and an
    interior sample that dominates every node is promoted to a node.

    Interior sampling alone can still miss a crossing squeezed between
    fixed sample points, so every segment is additionally evaluated
    where its L^q mass crosses the given barrier masses: any continuous
    path between the endpoint masses crosses each intermediate mass, so
    with the hump masses as barriers the measured level is bounded below
    by the sampled hump values by construction, never by solver luck.
    """

    SUB = (0.25, 0.5, 0.75)

    def __init__(self, problem, q, nodes, barriers=()):
        self.problem = problem
        self.q = q
        self.nodes = list(nodes)
        self.e_nodes = [prob.eval_F(u, problem, q) for u in self.nodes]
        self.m_nodes = [geo.lp_mass(u, q) for u in self.nodes]
        self.barriers = tuple(sorted(barriers))
        self._seg: list = [None] * (len(self.nodes) - 1)

    def _point(self, j, t):
        return geo.add(geo.scale(self.nodes[j], 1.0 - t), self.nodes[j + 1], t)

    def _crossing_ts(self, j):
        """Interior parameters where the segment mass crosses a barrier."""
        ma, mb = self.m_nodes[j], self.m_nodes[j + 1]
        out = []
        for kref in self.barriers:
            if (ma - kref) * (mb - kref) >= 0.0:
                continue
            lo, hi = 0.0, 1.0
            f_lo = ma - kref
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                val = geo.lp_mass(self._point(j, mid), self.q) - kref
                if (val > 0) == (f_lo > 0):
                    lo = mid
                else:
                    hi = mid
            out.append(0.5 * (lo + hi))
        return out

    def _segment(self, j, ts=None):
        """Energies at interior samples of segment j (cached default set)."""
        use_cache = ts is None
        if use_cache and self._seg[j] is not None:
            return self._seg[j]
        t_list = list(self.SUB if ts is None else ts) + self._crossing_ts(j)
        out = [
            (t, prob.eval_F(self._point(j, t), self.problem, self.q))
            for t in t_list
        ]
        if use_cache:
            self._seg[j] = out
        return out

    def invalidate(self, j):
        for s in (j - 1, j):
            if 0 <= s < len(self._seg):
                self._seg[s] = None

    def set_node(self, j, w):
        self.nodes[j] = w
        self.e_nodes[j] = prob.eval_F(w, self.problem, self.q)
        self.m_nodes[j] = geo.lp_mass(w, self.q)
        self.invalidate(j)

    def honest_max(self, ts=None):
        """(value, node_index, interior (t, seg) or None) of the path max."""
        jn = int(np.argmax(self.e_nodes))
        best = (self.e_nodes[jn], jn, None)
        for s in range(len(self.nodes) - 1):
            for t, e in self._segment(s, ts):
                if e > best[0]:
                    best = (e, s, t)
        return best

    def promote_interior_maxima(self, limit=8, ts=None):
        """Insert interior samples that dominate every node (up to limit)."""
        inserted = 0
        while inserted < limit:
            val, j, t = self.honest_max(ts)
            if t is None:
                return inserted
            w = self._point(j, t)
            self.nodes.insert(j + 1, w)
            self.e_nodes.insert(j + 1, val)
            self.m_nodes.insert(j + 1, geo.lp_mass(w, self.q))
            self._seg[j] = None
            self._seg.insert(j + 1, None)
            inserted += 1
        return inserted


def mountain_pass(
    problem: ProblemData,
    q: float,
    u1: SpectralField,
    u2: SpectralField,
    opts: SolverOptions | None = None,
    n_nodes: int = 41,
    max_iter: int = 3000,
    interior_seeds=None,
    subspace=None,
    barrier_masses=None,
    collapse_tol: float = 1e-8,
    record_profile: bool = True,
) -> MountainPassResult:
    """Deform a discrete path from u1 to u2 until its maximum stalls.

    ``interior_seeds`` may carry (mass, minimizer) pairs from a traced
    energy curve; the initial path then threads through the minimizer
    family instead of plain linear interpolation.  ``barrier_masses``
    (default: interior geometric masses between the endpoints, plus the
    seed masses) pin segment samples wherever the path crosses those
    masses, which bounds the measured level below by the sampled hump.
    Callers should pass sign-aligned endpoint representatives (see
    ``align_sign``); the endpoints themselves are never modified.
    Raises Collapse when the path maximum falls to the endpoint level
    (no hump), NonConvergence when the iteration budget ends with a
    moving maximum.  The returned ``nu`` is the stalled honest path
    maximum; the report describes the Newton-polished critical point
    seeded by the maximal node.
    """
    opts = opts or SolverOptions()
    g = problem.geometry
    problem.exponents(q)

    from .minimizer import _precond_shift

    k1 = geo.lp_mass(u1, q)
    k2 = geo.lp_mass(u2, q)
    if barrier_masses is None:
        barrier_masses = list(np.geomspace(k1, k2, 13)[1:-1])
        if interior_seeds:
            barrier_masses += [
                m for m, _ in interior_seeds if min(k1, k2) < m < max(k1, k2)
            ]
    barriers = tuple(sorted(set(float(m) for m in barrier_masses)))

    path = _Path(
        problem, q,
        _init_path(problem, q, u1, u2, n_nodes, interior_seeds, subspace),
        barriers,
    )
    f_ends = max(path.e_nodes[0], path.e_nodes[-1])
    max_nodes = 6 * n_nodes
    profile_rows = []
    history = []

    def precond(k_mass):
        return 1.0 / (_precond_shift(problem, q, k_mass) + g.lam_sq)

    tau = 1e-2
    nu_window: list[float] = []
    grad_max_norm = math.inf
    stalled = False
    it = 0
    plateau = 40
    for it in range(1, max_iter + 1):
        inserted = path.promote_interior_maxima()
        if len(path.nodes) > max_nodes:
            # rebalance only when it does not lift the level
            candidate = _Path(
                problem, q, _reparameterize(path.nodes, max_nodes), barriers
            )
            if candidate.honest_max()[0] <= path.honest_max()[0] * (1.0 + 1e-12):
                path = candidate
                inserted += 1
            else:
                max_nodes *= 2
        nu, jmax, _ = path.honest_max()
        history.append((it, nu, inserted))
        if record_profile:
            profile_rows.extend(
                (it, j, float(path.e_nodes[j])) for j in range(len(path.nodes))
            )
        if nu <= f_ends + collapse_tol:
            raise Collapse(f"path maximum {nu} fell to the endpoint level {f_ends}")

        n = len(path.nodes)
        window = [
            (j, w)
            for j, w in zip(range(jmax - 2, jmax + 3), (0.25, 0.5, 1.0, 0.5, 0.25))
            if 0 < j < n - 1
        ]
        if not window:
            raise Collapse("path maximum sits at an endpoint")
        grads = {}
        for j, _ in window:
            gj = prob.grad_F(path.nodes[j], problem, q)
            if subspace is not None:
                gj = _project_span(gj, subspace)
            grads[j] = gj
        grad_max_norm = geo.l2_norm(grads[jmax]) if jmax in grads else math.inf

        # stall: the level has flattened (strict drop criterion or a
        # plateau band); the Newton polish takes over from here
        nu_window.append(nu)
        if len(nu_window) > plateau:
            nu_window.pop(0)
            rel_drop = (nu_window[0] - nu) / (1.0 + abs(nu))
            band = (max(nu_window) - min(nu_window)) / (1.0 + abs(nu))
            if rel_drop <= 1e-10 and grad_max_norm <= 1e-6 * (1.0 + abs(nu)):
                stalled = True
                break
            if band <= 1e-6:
                stalled = True
                break

        accepted = False
        t = tau
        for _ in range(25):
            touched = {}
            for j, wgt in window:
                Pj = precond(path.m_nodes[j])
                d = g.field_from_coeffs(-Pj * grads[j].coeffs)
                if subspace is not None:
                    d = _project_span(d, subspace)
                touched[j] = geo.add(path.nodes[j], d, t * wgt)
            saved_nodes = {j: path.nodes[j] for j in touched}
            saved_e = {j: path.e_nodes[j] for j in touched}
            saved_m = {j: path.m_nodes[j] for j in touched}
            saved_seg = {
                s: path._seg[s]
                for j in touched
                for s in (j - 1, j)
                if 0 <= s < len(path._seg)
            }
            for j, w in touched.items():
                path.set_node(j, w)
            trial_nu, _, _ = path.honest_max()
            if trial_nu < nu - 1e-16 * (1.0 + abs(nu)):
                tau = min(t * 1.5, 1e6)
                accepted = True
                break
            for j in touched:
                path.nodes[j] = saved_nodes[j]
                path.e_nodes[j] = saved_e[j]
                path.m_nodes[j] = saved_m[j]
            for s, val in saved_seg.items():
                path._seg[s] = val
            t *= 0.5
        if not accepted:
            if grad_max_norm <= 1e-6 * (1.0 + abs(nu)):
                stalled = True
                break
            tau = max(tau * 0.25, 1e-12)

    # final verification sweep with denser interior sampling
    dense_ts = np.linspace(0.05, 0.95, 19)
    for _ in range(6):
        _, _, t_int = path.honest_max(ts=dense_ts)
        if t_int is None:
            break
        path.promote_interior_maxima(ts=dense_ts)
    nu_path, jmax, _ = path.honest_max()
    energies = np.array(path.e_nodes)
    state = PathState(
        nodes=path.nodes, energies=energies, index_max=jmax, history=history
    )

    v_raw = path.nodes[jmax]
    v, res_polish, polished = refine_critical_point(
        problem, q, v_raw, subspace=subspace
    )
    flags = {"polish_residual": res_polish, "polished": polished}
    F_v = prob.eval_F(v, problem, q)
    if not (f_ends + collapse_tol < F_v <= nu_path * (1.0 + 1e-6) + 1e-12):
        # polish escaped the hump; keep the raw node
        v = v_raw
        flags["polish_rejected"] = True
        polished = False
    else:
        # the path threaded through the polished saddle attains F(v)
        nu_path = max(nu_path, F_v)
    converged = polished and (stalled or it >= max_iter)
    report = make_report(problem, q, v, 0.0, converged, flags)
    if not converged and not stalled:
        raise NonConvergence(
            f"path deformation still moving after {max_iter} iterations",
            best=MountainPassResult(v, nu_path, report, state, profile_rows, it, False),
        )
    return MountainPassResult(v, nu_path, report, state, profile_rows, it, converged)
