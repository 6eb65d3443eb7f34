"""Descent over initial data, convergence checks, and path diagnostics.

The forward map fixes the whole trajectory once (M_0, L_0) is chosen, so the
fitting problem is finite-dimensional: minimize the discrete action over
those two algebra elements.  ``solve`` runs a quasi-Newton descent in
orthonormal algebra coordinates, using the adjoint gradient.  By default the
M_0 search is restricted to the orthogonal complement of the initial state's
stabilizer algebra; no minimum is lost by this (see ``stabilizer_perp_basis``)
and the iteration count drops accordingly.

``fd_gradient`` is the slow reference gradient (central differences, one
forward integration per probe); it exists to certify the adjoint gradient and
never runs inside ``solve``.

``validate`` recomputes every certificate a converged path should carry:
terminal residuals, stabilizer alignment of the transported multiplier, node
jump consistency, and the third-derivative defect of the Hamiltonian path
with its decay under grid refinement.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .adjoint import Gradient, gradient
from .forward import (
    DiscretePath,
    ProblemSpec,
    cost,
    energies,
    integrate,
    terminal_residual,
)
from .lie_core import AlgebraElement, _solve, inner, norm, su_basis
from .state_geom import (
    CutLocusError,
    delta_mu,
    stabilizer_basis,
    stabilizer_perp_basis,
)

__all__ = [
    "DescentOptions",
    "Solution",
    "ValidationReport",
    "solve",
    "fd_gradient",
    "validate",
]

#: Floating-point floor under which cost decreases are indistinguishable from
#: roundoff; line searches accept such steps when the gradient still shrinks.
_NOISE_FLOOR = 32.0 * np.finfo(float).eps

#: A descent phase stops once the cost has moved less than this (relative)
#: over _PLATEAU_WINDOW iterations; tightly weighted problems amplify float
#: noise far above machine epsilon, and grinding below that floor with a
#: cost-based line search is wasted work.
_PLATEAU_WINDOW = 20
_PLATEAU_RTOL = 1e-12


@dataclass(frozen=True)
class DescentOptions:
    """Tuning knobs for ``solve``.

    direction: "bfgs" (default) or "steepest".  Steepest descent needs far
        more iterations on small-sigma problems; it is kept for cross-checks.
    restrict_m0: search M_0 only in the stabilizer complement of psi0.
    """

    direction: str = "bfgs"
    max_iters: int = 2000
    grad_tol: float = 1e-8
    restrict_m0: bool = True
    polish: bool = True
    step0: float = 1.0
    shrink: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 60
    max_step: float = 1.0  # trust cap on |x_new - x| per iteration

    def __post_init__(self):
        if self.direction not in ("bfgs", "steepest"):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class Solution:
    """Result of a descent run; ``path`` is the trajectory at the minimizer.

    ``impulses`` is empty except for exact-interpolation (impulse-limit)
    solutions, where it holds the explicit (node, multiplier jump) pairs the
    path was integrated with; ``grad_norm`` then measures stationarity of
    the limit problem (rate gradient along the interpolation manifold), as
    the message states.
    """

    spec: ProblemSpec
    m0: AlgebraElement
    l0: AlgebraElement
    path: DiscretePath
    cost: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str
    history: tuple = ()  # rows (iter, cost, grad_norm, step)
    seconds: float = 0.0
    impulses: tuple = ()  # (node, AlgebraElement) multiplier jumps, if explicit


class _Coords:
    """Orthonormal real coordinates on the (M_0, L_0) search space."""

    def __init__(self, spec: ProblemSpec, restrict_m0: bool):
        n = spec.n
        full = [e.mat for e in su_basis(n)]
        if restrict_m0:
            m_basis = [e.mat for e in stabilizer_perp_basis(spec.psi0)]
        else:
            m_basis = full
        self.bm = np.stack(m_basis)
        self.bl = np.stack(full)
        self.km = len(m_basis)
        self.dim = self.km + len(full)

    def unpack(self, x: np.ndarray):
        m0 = np.einsum("k,kij->ij", x[: self.km], self.bm)
        l0 = np.einsum("k,kij->ij", x[self.km :], self.bl)
        return AlgebraElement._wrap(m0), AlgebraElement._wrap(l0)

    def pack_grad(self, g: Gradient) -> np.ndarray:
        # coefficient of an orthonormal direction E is inner(G, E)
        gm = -2.0 * np.einsum("kij,ji->k", self.bm, g.wrt_m0.mat).real
        gl = -2.0 * np.einsum("kij,ji->k", self.bl, g.wrt_l0.mat).real
        return np.concatenate([gm, gl])


def _descend(
    spec: ProblemSpec,
    coords: _Coords,
    x0: np.ndarray,
    opts: DescentOptions,
    grad_tol: float,
    max_iters: int,
):
    """Quasi-Newton descent core; returns (x, f, path, g, history, message)."""

    def evaluate(xv):
        m, l = coords.unpack(xv)
        try:
            path = integrate(spec, m, l)
        except CutLocusError:
            return math.inf, None
        return cost(path), path

    kdim = coords.dim
    x = x0
    f, path = evaluate(x)
    if path is None:
        raise CutLocusError("starting guess already sits at a target's cut locus")
    g = coords.pack_grad(gradient(path))
    gnorm = float(np.linalg.norm(g))

    hinv = np.eye(kdim)
    scaled = False
    history = [(0, f, gnorm, 0.0)]
    message = "max iterations reached"
    converged = False
    it = 0

    for it in range(1, max_iters + 1):
        if gnorm <= grad_tol:
            converged = True
            message = "gradient tolerance reached"
            it -= 1
            break

        if opts.direction == "bfgs":
            p = -(hinv @ g)
            if p @ g >= 0.0:  # stale curvature; fall back to steepest
                hinv = np.eye(kdim)
                scaled = False
                p = -g
        else:
            p = -g

        pnorm = float(np.linalg.norm(p))
        if pnorm > opts.max_step:  # keep steps inside the current valley
            p = (opts.max_step / pnorm) * p

        slope = float(p @ g)
        t = opts.step0
        accepted = False
        for _ in range(opts.max_backtracks):
            x_new = x + t * p
            f_new, path_new = evaluate(x_new)
            if f_new <= f + opts.c1 * t * slope:
                accepted = True
                break
            if path_new is not None and abs(f_new - f) <= _NOISE_FLOOR * (1.0 + abs(f)):
                # cost is flat to roundoff; accept if the gradient improves
                g_try = coords.pack_grad(gradient(path_new))
                if np.linalg.norm(g_try) < gnorm:
                    accepted = True
                    break
            t *= opts.shrink
        if not accepted:
            message = "line search stalled"
            break

        g_new = coords.pack_grad(gradient(path_new))
        if opts.direction == "bfgs":
            s = x_new - x
            y = g_new - g
            sy = float(s @ y)
            if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
                if not scaled:
                    # calibrate the metric before the first update
                    hinv = (sy / float(y @ y)) * np.eye(kdim)
                    scaled = True
                rho = 1.0 / sy
                sy_outer = np.outer(s, y)
                hinv = (np.eye(kdim) - rho * sy_outer) @ hinv @ (
                    np.eye(kdim) - rho * sy_outer.T
                ) + rho * np.outer(s, s)

        x, f, path, g = x_new, f_new, path_new, g_new
        gnorm = float(np.linalg.norm(g))
        history.append((it, f, gnorm, t))
        if len(history) > _PLATEAU_WINDOW:
            drop = history[-1 - _PLATEAU_WINDOW][1] - f
            if drop <= _PLATEAU_RTOL * (1.0 + abs(f)):
                message = "cost plateau"
                break
    else:
        if gnorm <= grad_tol:
            converged = True
            message = "gradient tolerance reached"

    return x, f, path, g, gnorm, history, message, converged, it


def _with_sigma(spec: ProblemSpec, sigma: float) -> ProblemSpec:
    from dataclasses import replace

    return replace(spec, targets=replace(spec.targets, sigma=sigma))


def _newton(spec, coords, x, grad_tol, max_newton=40, fd_step=1e-6, abort_gn=None):
    """Damped Newton iteration on the adjoint gradient (first-order system).

    Hessian columns come from central differences of the adjoint gradient
    (2 * dim extra sweeps per column; the search space is tiny) and are reused
    across iterations while the contraction stays fast.  Steps are accepted on
    gradient-norm decrease, which stays meaningful well below the cost noise
    floor that stops Armijo descent, and which never trades the nearby
    critical point for a distant one the way a descent transient can.

    ``abort_gn`` cuts losses during continuation: a run still above that
    gradient norm after four iterations is declared off-branch and abandoned.

    Returns (x, path, g, gnorm, rows, ok, floor_est); rows log accepted steps
    as (cost, gnorm, step_norm).  floor_est is the gradient norm produced by
    rounding the iterate itself: curvature norm times one ulp of x.  Progress
    below that scale is not possible in the precision x is stored in, however
    accurate the gradient sweeps are.
    """

    def eval_g(xv):
        m, l = coords.unpack(xv)
        path = integrate(spec, m, l)
        return coords.pack_grad(gradient(path)), path

    kdim = coords.dim
    eps_x = float(np.finfo(np.asarray(x).dtype).eps)
    floor_est = 0.0
    lam = 0.0
    g, path = eval_g(x)
    gnorm = float(np.linalg.norm(g))
    rows = []
    hess = None
    it = 0
    budget = max_newton
    while it < budget:
        if gnorm <= grad_tol:
            return x, path, g, gnorm, rows, True, floor_est
        if abort_gn is not None and it >= 4 and gnorm > max(
            abort_gn, 10.0 * floor_est
        ):
            return x, path, g, gnorm, rows, False, floor_est
        gn_before = gnorm
        improved = False
        fresh = False
        for _ in range(30):
            if hess is None:
                hess = np.empty((kdim, kdim))
                for i in range(kdim):
                    e = np.zeros(kdim)
                    e[i] = fd_step
                    gp, _ = eval_g(x + e)
                    gm, _ = eval_g(x - e)
                    hess[:, i] = (gp - gm) / (2.0 * fd_step)
                hess = 0.5 * (hess + hess.T)
                fresh = True
                floor_est = (
                    float(np.linalg.norm(hess, 2))
                    * eps_x
                    * max(1.0, float(np.linalg.norm(x)))
                )
            try:
                # The step direction never needs more precision than float64;
                # only the accumulation x + p does.
                p = np.linalg.solve(
                    hess + lam * np.eye(kdim), np.asarray(-g, dtype=float)
                )
                g_new, path_new = eval_g(x + p)
            except (np.linalg.LinAlgError, CutLocusError):
                lam = max(10.0 * lam, 1e-10)
                continue
            gn_new = float(np.linalg.norm(g_new))
            if gn_new < gnorm:
                # Slow contraction or damping means the curvature is stale.
                if gn_new > 0.3 * gnorm or lam > 0.0:
                    hess = None
                x = x + p
                g, path, gnorm = g_new, path_new, gn_new
                rows.append(
                    (float(cost(path)), gnorm, float(np.linalg.norm(p)))
                )
                lam = lam / 3.0 if lam > 1e-14 else 0.0
                improved = True
                break
            lam = max(10.0 * lam, 1e-10)
            if not fresh and lam > 1e-4:
                hess = None
        if not improved:
            break
        # Steady contraction earns more budget; a near-singular soft mode
        # slows Newton to a geometric crawl without actually stalling it.
        if gnorm <= 0.7 * gn_before and budget < 4 * max_newton:
            budget = min(4 * max_newton, max(budget, it + 1 + max_newton // 2))
        it += 1
    return x, path, g, gnorm, rows, gnorm <= grad_tol, floor_est


def _predict(knots, s):
    """Extrapolate the tracked minimizer to width s from recent (width, x) knots.

    Quadratic through the last three when available, else secant, else the
    last point.  The extra order matters: it is the difference between width
    steps of a few percent holding and the corrector falling off the branch.
    """
    if len(knots) >= 3:
        (s0, x0), (s1, x1), (s2, x2) = knots[-3], knots[-2], knots[-1]
        l0 = (s - s1) * (s - s2) / ((s0 - s1) * (s0 - s2))
        l1 = (s - s0) * (s - s2) / ((s1 - s0) * (s1 - s2))
        l2 = (s - s0) * (s - s1) / ((s2 - s0) * (s2 - s1))
        return l0 * x0 + l1 * x1 + l2 * x2
    if len(knots) >= 2:
        (s1, x1), (s2, x2) = knots[-2], knots[-1]
        return x2 + (x2 - x1) * ((s - s2) / (s2 - s1))
    return knots[-1][1]


class _ImpulseLimit:
    """Exact-interpolation limit: node kicks solved as free impulses.

    Below a problem-dependent width the minimizer branch terminates (its soft
    curvature mode collapses) and no continuation reaches the target width.
    But in the small-width limit the optimum converges to an exact
    interpolant whose node kicks stay finite: D_j ~ kappa_j sigma^2 while
    the kicks tend to kappa_j F_j.  Treating those kicks as explicit
    unknowns z = (x, Delta_1, ..) cuts the 1/sigma^2 feedback out of the
    flow entirely, leaving a smooth constrained problem: interpolate
    exactly, minimize the rate energy.  Gauss-Newton handles the
    constraints; a finite-difference Newton minimizes the rate along the
    constraint manifold's null directions.

    The per-node residual is the component of the arriving state along the
    target's orthogonal complement; the projective distance itself has a
    conical kink at coincidence and breaks Gauss-Newton exactly where it
    must converge.
    """

    def __init__(self, spec: ProblemSpec, coords: _Coords, fd_step: float = 1e-6):
        self.spec = spec
        self.coords = coords
        self.fd = fd_step
        # A huge width turns the built-in node sources off (kick ~ D/sigma^2)
        # without touching anything else, so one integrator serves both laws.
        self.free = _with_sigma(spec, 1e9)
        self.inner_nodes = [tp.node for tp in spec.targets.targets[:-1]]
        self.adim = coords.bl.shape[0]
        self.zdim = coords.dim + self.adim * len(self.inner_nodes)
        self.perp = []
        for tp in spec.targets.targets:
            q, _ = np.linalg.qr(tp.state.vec.reshape(-1, 1), mode="complete")
            self.perp.append(q[:, 1:])
        self.evals = 0

    def deltas(self, z: np.ndarray) -> dict:
        kdim = self.coords.dim
        out = {}
        for a, node in enumerate(self.inner_nodes):
            c = z[kdim + self.adim * a : kdim + self.adim * (a + 1)]
            out[node] = np.einsum("k,kij->ij", c, self.coords.bl)
        return out

    def path_at(self, z: np.ndarray) -> DiscretePath:
        self.evals += 1
        m0, l0 = self.coords.unpack(z[: self.coords.dim])
        return integrate(self.free, m0, l0, node_impulses=self.deltas(z))

    def resid(self, z: np.ndarray) -> np.ndarray:
        path = self.path_at(z)
        psi0 = self.free.psi0.vec
        out = []
        for tp, b in zip(self.free.targets.targets, self.perp):
            overlap = b.conj().T @ (path.U[tp.node] @ psi0)
            out.extend([overlap.real, overlap.imag])
        return np.concatenate(out)

    def rate(self, z: np.ndarray) -> float:
        return energies(self.path_at(z))[0]

    def jac(self, z: np.ndarray) -> np.ndarray:
        cols = []
        for i in range(self.zdim):
            e = np.zeros(self.zdim)
            e[i] = self.fd
            cols.append((self.resid(z + e) - self.resid(z - e)) / (2.0 * self.fd))
        return np.array(cols, dtype=float).T

    def anchor(self, z: np.ndarray, it_max: int = 20):
        """Damped Gauss-Newton onto the interpolation manifold."""
        r = self.resid(z)
        for _ in range(it_max):
            rn = float(np.linalg.norm(r.astype(float)))
            if rn < 1e-15:
                break
            j = self.jac(z)
            dz = -np.linalg.lstsq(j, np.asarray(r, dtype=float), rcond=None)[0]
            t = 1.0
            for _ in range(30):
                r_new = self.resid(z + t * dz)
                if float(np.linalg.norm(r_new.astype(float))) <= (1.0 - 1e-4 * t) * rn:
                    break
                t *= 0.5
            else:
                break
            z = z + t * dz
            r = r_new
        return z, float(np.abs(r).max())

    def minimize(self, z: np.ndarray, grad_tol: float, max_rounds: int = 60):
        """Alternate re-anchoring with Newton on the reduced rate energy.

        Returns (z, feasibility, reduced gradient norm, rounds, stalled).
        """
        fd = self.fd
        z, feas = self.anchor(z)
        red_gn = math.inf
        stalled = False
        for rnd in range(max_rounds):
            j = self.jac(z)
            s = np.linalg.svd(j, compute_uv=False)
            rank = int(np.sum(s > 1e-10 * s[0]))
            null = np.linalg.svd(j)[2][rank:].T  # (zdim, zdim - rank)
            kr = null.shape[1]
            if kr == 0:
                stalled = True
                break

            def phi(y):
                return self.rate(z + (null @ y).astype(z.dtype))

            g = np.zeros(kr)
            for i in range(kr):
                e = np.zeros(kr)
                e[i] = fd
                g[i] = (phi(e) - phi(-e)) / (2.0 * fd)
            red_gn = float(np.linalg.norm(g))
            if red_gn <= grad_tol:
                break
            f0 = phi(np.zeros(kr))
            hess = np.zeros((kr, kr))
            for i in range(kr):
                e = np.zeros(kr)
                e[i] = fd
                hess[i, i] = (phi(2 * e) - 2 * f0 + phi(-2 * e)) / (4.0 * fd * fd)
                for jj in range(i + 1, kr):
                    e2 = np.zeros(kr)
                    e2[jj] = fd
                    hess[i, jj] = hess[jj, i] = (
                        phi(e + e2) - phi(e - e2) - phi(-e + e2) + phi(-e - e2)
                    ) / (4.0 * fd * fd)
            w = np.linalg.eigvalsh(hess)
            reg = max(0.0, 1e-8 - float(w[0]))
            p = -np.linalg.solve(hess + reg * np.eye(kr), g)
            slope = float(p @ g)
            t = 1.0
            for _ in range(40):
                if phi(t * p) <= f0 + 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                stalled = True
                break
            z = z + (null @ (t * p)).astype(z.dtype)
            z, feas = self.anchor(z)
        return z, feas, red_gn, rnd + 1, stalled


def solve(
    spec: ProblemSpec,
    opts: DescentOptions | None = None,
    m0: AlgebraElement | None = None,
    l0: AlgebraElement | None = None,
) -> Solution:
    """Minimize the discrete action over the initial data.

    Starts from (m0, l0) when given, else from zero.  Cold starts on tightly
    weighted problems go through a continuation in the mismatch width: the
    mild head of the schedule is minimized by descent, after which each
    further tightening is followed to its own critical point by damped Newton
    correction on the gradient.  Descent restarted from on-branch data can
    still wander into a neighbouring basin while it burns off the transient
    cost a width change induces; Newton correction stays with the nearby
    root, so the branch survives to the target width.  Should the branch
    itself end first (its soft curvature mode collapses at a problem-
    dependent width, and below that point the gradient field is too stiff
    for any restart), the remaining widths are served by the exact-
    interpolation limit: node kicks become explicit impulse unknowns and
    the rate energy is minimized over all exact interpolants; see
    ``_ImpulseLimit``.  The returned history covers only the final stage,
    i.e. the actual objective.

    On two- and three-level problems all iterates are kept in 80-bit floats
    and the integrator runs in matching complex precision; stiff optima are
    otherwise unreachable at tight tolerances, since rounding the coordinates
    alone then moves the gradient above them.

    Returns the best point found whether or not the gradient tolerance was
    reached; check ``Solution.converged``.
    """
    opts = opts or DescentOptions()
    coords = _Coords(spec, opts.restrict_m0)

    # Extended-precision coordinates whenever the closed-form small-matrix
    # inverses apply (d <= 3).  The whole pipeline follows the coordinate
    # dtype at measured complex128 speed or better, and the rounding floor
    # of the iterate, curvature norm times one ulp of x, drops three orders
    # of magnitude; stiff problems need that headroom to certify tight
    # gradient tolerances at all.
    dtype_x = np.longdouble if spec.dim <= 3 else np.float64
    x = np.zeros(coords.dim, dtype=dtype_x)
    if m0 is not None:
        x[: coords.km] = -2.0 * np.einsum("kij,ji->k", coords.bm, m0.mat).real
    if l0 is not None:
        x[coords.km :] = -2.0 * np.einsum("kij,ji->k", coords.bl, l0.mat).real

    t_start = time.perf_counter()
    total_iters = 0

    # Cold starts on tightly weighted problems walk the weight down gradually:
    # the same initial data produces a very different path once the node
    # sources strengthen, so each stage must stay within reach of the last.
    cold = m0 is None and l0 is None
    sigma = spec.targets.sigma
    tracked_short = False
    track_done = False
    path_tr = g_tr = None
    gn_tr = math.inf
    if cold and sigma < 0.16:
        head_tol = max(1e-5, opts.grad_tol)
        track_tol = max(1e-4, opts.grad_tol)
        handover = max(0.15, sigma)
        sig = 0.64
        while True:
            stage = _with_sigma(spec, sig)
            x, *_rest, stage_iters = _descend(
                stage, coords, x, opts,
                grad_tol=head_tol,
                max_iters=min(300, opts.max_iters),
            )
            total_iters += stage_iters
            if sig <= handover * 1.000001:
                break
            sig = max(handover, sig / math.sqrt(2.0))

        # Land exactly on the branch before tracking it to the target width.
        x, path_tr, g_tr, gn_tr, rows, _ok, _fl = _newton(
            _with_sigma(spec, sig), coords, x, grad_tol=head_tol, max_newton=12
        )
        total_iters += len(rows)

        knots = [(sig, x.copy())]
        ratio = 0.85
        streak = 0
        fl_prev = 0.0
        while sig > sigma * 1.000001:
            trial = max(sigma, sig * ratio)
            final_stage = trial <= sigma * 1.000001
            base_tol = opts.grad_tol if final_stage else track_tol
            x_pred = _predict(knots, trial)
            x_new, path_new, g_new, gn, rows, ok, fl = _newton(
                _with_sigma(spec, trial), coords, x_pred,
                grad_tol=max(base_tol, 3.0 * fl_prev),
                max_newton=16, abort_gn=30.0,
            )
            total_iters += len(rows)
            # A stage that stalls at its own rounding floor is still on the
            # branch; only reject genuine corrector failures, which overshoot
            # that floor by orders of magnitude.  The drift guard catches the
            # sneakier failure: clean convergence onto a *different* branch,
            # visible as a landing far from the extrapolated one.
            drift_ok = float(
                np.linalg.norm((x_new - x_pred).astype(float))
            ) <= 0.05 + 20.0 * float(
                np.linalg.norm((x_pred - knots[-1][1]).astype(float))
            )
            if (ok or gn <= max(track_tol, 10.0 * fl)) and drift_ok:
                x, sig = x_new, trial
                path_tr, g_tr, gn_tr = path_new, g_new, gn
                if fl > 0.0:
                    fl_prev = fl
                knots.append((sig, x.copy()))
                if len(knots) > 4:
                    knots.pop(0)
                streak += 1
                if streak >= 3 and ratio > 0.85:
                    ratio = max(0.85, ratio * ratio)
                    streak = 0
                continue
            # Width step too coarse for the corrector; bisect it.
            streak = 0
            ratio = math.sqrt(ratio)
            if ratio <= 0.997:
                continue
            # No step size works: the branch ends here (its soft curvature
            # mode has collapsed) and no point below this width continues it.
            tracked_short = sig > sigma * 1.000001
            break
        track_done = not tracked_short

    if tracked_short:
        # The target width lies beyond the end of the minimizer branch, where
        # the optimum is the exact interpolant with finite node kicks:
        # solve that limit problem directly, with the kicks as unknowns.
        # The limit problem is well conditioned (the width-law feedback is
        # gone), so plain double suffices regardless of the tracked dtype.
        limit = _ImpulseLimit(spec, coords)
        z = np.zeros(limit.zdim)
        z[: coords.dim] = np.asarray(x, dtype=float)
        stage_targets = _with_sigma(spec, sig).targets
        psi0 = spec.psi0.vec
        for a, node in enumerate(limit.inner_nodes):
            kick = delta_mu(node, path_tr.U[node] @ psi0, stage_targets)
            z[coords.dim + limit.adim * a : coords.dim + limit.adim * (a + 1)] = [
                -2.0 * np.einsum("ij,ji->", b, kick.mat).real for b in coords.bl
            ]
        red_tol = max(opts.grad_tol, 1e-10)
        z, feas, red_gn, rounds, stalled = limit.minimize(z, red_tol)
        total_iters += rounds
        m_t, l_t = coords.unpack(z[: coords.dim])
        impulse_mats = limit.deltas(z)
        path = integrate(spec, m_t, l_t, node_impulses=impulse_mats)
        f = float(cost(path))
        history = [(0, f, red_gn, 0.0)]
        converged = red_gn <= red_tol and feas <= 1e-10
        message = (
            f"impulse-limit solution (branch ends at width {sig:.3g}); "
            f"interpolation residual {feas:.1e}"
        )
        return Solution(
            spec=spec,
            m0=m_t,
            l0=l_t,
            path=path,
            cost=f,
            grad_norm=red_gn,
            iterations=total_iters,
            converged=converged,
            message=message,
            history=tuple(history),
            seconds=time.perf_counter() - t_start,
            impulses=tuple(
                (node, AlgebraElement._wrap(np.asarray(mat, dtype=complex)))
                for node, mat in sorted(impulse_mats.items())
            ),
        )

    if track_done:
        # Tracking ends on a Newton critical point of the actual objective;
        # a descent restart would only reintroduce the transient wandering
        # the corrector exists to avoid.
        path = path_tr
        g = g_tr
        gnorm = gn_tr
        f = float(cost(path))
        history = [(0, f, gnorm, 0.0)]
        converged = gnorm <= opts.grad_tol
        message = (
            "gradient tolerance reached"
            if converged
            else "tracking finished above tolerance"
        )
    else:
        x, f, path, g, gnorm, history, message, converged, iters = _descend(
            spec, coords, x, opts, grad_tol=opts.grad_tol,
            max_iters=opts.max_iters,
        )
        total_iters += iters

    if not converged and opts.polish:
        x, path, g, gnorm, rows, converged, _fl = _newton(
            spec, coords, x, grad_tol=opts.grad_tol
        )
        f = cost(path)
        base = history[-1][0]
        for i, (fc, gn, step_len) in enumerate(rows):
            history.append((base + i + 1, fc, gn, step_len))
        total_iters += len(rows)
        if converged:
            message = "gradient tolerance reached (polish)"
        else:
            message = "polish stalled at the precision floor"

    m_fin, l_fin = coords.unpack(x)
    return Solution(
        spec=spec,
        m0=m_fin,
        l0=l_fin,
        path=path,
        cost=float(f),
        grad_norm=gnorm,
        iterations=total_iters,
        converged=converged,
        message=message,
        history=tuple(history),
        seconds=time.perf_counter() - t_start,
    )


def fd_gradient(
    spec: ProblemSpec,
    m0: AlgebraElement,
    l0: AlgebraElement,
    step: float = 1e-5,
) -> Gradient:
    """Central-difference reference gradient of the discrete action.

    Probes every direction of the full algebra basis for both slots, two
    integrations per direction.  Diagnostic only.
    """
    basis = su_basis(spec.n)
    gm = np.zeros((spec.dim, spec.dim), dtype=complex)
    gl = np.zeros_like(gm)

    def f(m, l):
        return cost(integrate(spec, m, l))

    for e in basis:
        em = e.mat
        up = f(AlgebraElement._wrap(m0.mat + step * em), l0)
        dn = f(AlgebraElement._wrap(m0.mat - step * em), l0)
        gm += (up - dn) / (2.0 * step) * em
        up = f(m0, AlgebraElement._wrap(l0.mat + step * em))
        dn = f(m0, AlgebraElement._wrap(l0.mat - step * em))
        gl += (up - dn) / (2.0 * step) * em
    return Gradient(
        wrt_m0=AlgebraElement._wrap(gm), wrt_l0=AlgebraElement._wrap(gl)
    )


@dataclass(frozen=True)
class ValidationReport:
    """Certificates recomputed from a solution's stored arrays."""

    terminal_rate: float
    terminal_multiplier: float
    lemma_residual: float
    node_jump_residual: float
    rate_continuity_residual: float
    cubic_residual: float
    cubic_residuals_refined: tuple
    cubic_rate: float
    grad_norm: float
    cost: float
    converged: bool
    consistent: bool
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "terminal_rate": self.terminal_rate,
            "terminal_multiplier": self.terminal_multiplier,
            "lemma_residual": self.lemma_residual,
            "node_jump_residual": self.node_jump_residual,
            "rate_continuity_residual": self.rate_continuity_residual,
            "cubic_residual": self.cubic_residual,
            "cubic_residuals_refined": list(self.cubic_residuals_refined),
            "cubic_rate": self.cubic_rate,
            "grad_norm": self.grad_norm,
            "cost": self.cost,
            "converged": self.converged,
            "consistent": self.consistent,
            "notes": self.notes,
        }


def _lemma_residual(path: DiscretePath) -> float:
    """Worst stabilizer alignment |inner(M_mu, A)| / max(1, |M_mu|) over mu.

    At a minimizer the transported multiplier must stay orthogonal to every
    generator fixing the ray of the current state.
    """
    worst = 0.0
    for mu in range(path.spec.steps + 1):
        m_mu = AlgebraElement._wrap(path.M[mu])
        scale = max(1.0, norm(m_mu))
        for a in stabilizer_basis(path.psi(mu)):
            worst = max(worst, float(abs(inner(m_mu, a))) / scale)
    return worst


def _node_jump_residual(path: DiscretePath, impulses=()) -> float:
    """Re-derive each node's multiplier jump from stored arrays.

    The step from mu transports M_mu + Delta_mu by the step unitary, so
    pulling M_{mu+1} back must reproduce Delta_mu exactly (roundoff only).
    For an exact-interpolation solution the declared impulses are part of
    the jump, so they are added to the expected value at their nodes.
    """
    spec = path.spec
    dt = spec.h
    imp_mats = {node: imp.mat for node, imp in impulses}
    nodes = {tp.node for tp in spec.targets.targets} | set(imp_mats)
    worst = 0.0
    for mu in sorted(nodes):
        if mu >= spec.steps:
            continue  # terminal jump lives in the stopping condition instead
        expected = delta_mu(mu, path.psi(mu), spec.targets).mat
        if mu in imp_mats:
            expected = expected + imp_mats[mu]
        eye = np.eye(spec.dim)
        bp = eye + (0.5j * dt) * path.H[mu + 1]
        w = _solve(bp, bp.conj().T)
        pulled = w.conj().T @ path.M[mu + 1] @ w - path.M[mu]
        r = float(np.sqrt(2.0) * np.linalg.norm(pulled - expected))
        scale = max(1.0, float(np.sqrt(2.0) * np.linalg.norm(expected)))
        worst = max(worst, r / scale)
    return worst


def _frozen_jumps(path: DiscretePath, impulses=()) -> dict:
    """All node jumps of a stored path, frozen as explicit impulses.

    Used to continue the same trajectory onto refined grids: with the jumps
    frozen and the width-law sources silenced, re-integration is an ordinary
    consistent discretization of a fixed impulsive flow.  Live sources would
    instead amplify the O(h) re-integration drift by 1/sigma^2.
    """
    spec = path.spec
    out = {
        int(node): np.asarray(imp.mat, dtype=complex) for node, imp in impulses
    }
    for tp in spec.targets.targets:
        mu = tp.node
        if mu >= spec.steps:
            continue
        d = np.asarray(delta_mu(mu, path.psi(mu), spec.targets).mat, dtype=complex)
        out[mu] = out.get(mu, 0.0) + d
    return out


def _cubic_residual(path: DiscretePath) -> float:
    """Max third-derivative defect |D3 H + i[H, D2 H]| away from the nodes.

    D3 is the one-sided third difference, whose O(h) truncation sets the
    scale of the residual: a path obeying the interior smoothness law shows
    a factor-2 drop per grid doubling, while a genuine violation plateaus.
    (Centered stencils are superconvergent here: the integrator's leading
    error field lies in the defect operator's kernel, hiding the scheme
    order the residual exists to expose.)  Every stencil stays inside one
    closed inter-node piece; second derivatives jump at the nodes.
    """
    spec = path.spec
    dt = spec.h
    H = path.H
    bounds = [0] + [tp.node for tp in spec.targets.targets]
    if bounds[-1] != spec.steps:
        bounds.append(spec.steps)
    worst = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        for mu in range(a + 1, b - 2):
            d2 = (H[mu + 1] - 2.0 * H[mu] + H[mu - 1]) / dt**2
            d3 = (H[mu + 3] - 3.0 * H[mu + 2] + 3.0 * H[mu + 1] - H[mu]) / dt**3
            r = d3 + 1j * (H[mu] @ d2 - d2 @ H[mu])
            worst = max(worst, np.sqrt(2.0) * float(np.linalg.norm(r)))
    return worst


def validate(sol: Solution, refinements: int = 2) -> ValidationReport:
    """Recompute all convergence certificates for a solution.

    The cubic defect is also evaluated on doubled grids (same initial data,
    node jumps frozen as explicit impulses, width-law sources silenced; see
    ``_frozen_jumps``) to expose its first-order decay; ``cubic_rate`` is the
    mean log2 drop per doubling.
    """
    res_l, res_m = terminal_residual(sol.path)
    lemma = _lemma_residual(sol.path)
    jump = _node_jump_residual(sol.path, sol.impulses)

    cubics = [_cubic_residual(sol.path)]
    frozen = _frozen_jumps(sol.path, sol.impulses)
    spec_r = _with_sigma(sol.spec, 1e9)
    factor = 1
    for _ in range(refinements):
        spec_r = spec_r.refine(2)
        factor *= 2
        imps = {node * factor: mat for node, mat in frozen.items()} or None
        cubics.append(
            _cubic_residual(integrate(spec_r, sol.m0, sol.l0, node_impulses=imps))
        )
    rates = [
        math.log2(a / b) for a, b in zip(cubics[:-1], cubics[1:]) if b > 0.0
    ]
    cubic_rate = float(np.mean(rates)) if rates else math.nan

    notes = ""
    if sol.impulses:
        # In the exact-interpolation limit the terminal multiplier IS the
        # finite terminal kick, so its size is structural; the checkable
        # content is that no generator fixing the final ray is charged.
        m_n = AlgebraElement._wrap(
            np.asarray(sol.path.M[sol.spec.steps], dtype=complex)
        )
        scale = max(1.0, norm(m_n))
        align = (
            max(
                abs(inner(m_n, a))
                for a in stabilizer_basis(sol.path.psi(sol.spec.steps))
            )
            / scale
        )
        residual_ok = res_l < 1e-6 and align < 1e-6
        notes = (
            f"exact-interpolation solution: terminal multiplier of size "
            f"{res_m:.3g} is the finite terminal kick; its stabilizer "
            f"misalignment {align:.1e} is the certified residual"
        )
    else:
        residual_ok = res_l < 1e-6 and res_m < 1e-6
    consistent = residual_ok or not sol.converged
    if not consistent:
        notes = (
            "gradient norm is below tolerance but terminal residuals are not; "
            "this indicates an inconsistency between the descent and the "
            "stopping conditions"
        )
    return ValidationReport(
        terminal_rate=res_l,
        terminal_multiplier=res_m,
        lemma_residual=lemma,
        node_jump_residual=jump,
        rate_continuity_residual=0.0,
        cubic_residual=cubics[0],
        cubic_residuals_refined=tuple(cubics[1:]),
        cubic_rate=cubic_rate,
        grad_norm=sol.grad_norm,
        cost=sol.cost,
        converged=sol.converged,
        consistent=consistent,
        notes=notes,
    )
