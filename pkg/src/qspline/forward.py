"""Forward integration of the discrete interpolation dynamics.

One step of size dt advances (U, H, M, L), in this order:

1. generator update        H' = H + i dt L
2. node source             Delta = delta_mu(mu, U psi0, targets)
3. multiplier transport    M' = dl_tau_inverse(i dt H', dl_tau(-i dt H', M + Delta))
4. rate update             L' = L - dt * dl_tau(i dt H', M')
5. group update            U' = cayley(-i dt H') U

The ordering is forced by the data dependencies (H' feeds every later stage)
and the composite in stage 3 collapses to conjugation by the step unitary, so
M is transported isometrically.  States along the path are always read off as
U_mu psi0, never integrated separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie_core import (
    AlgebraElement,
    HermitianOperator,
    UnitaryOperator,
    _inv,
    _project_su,
)
from .state_geom import (
    CutLocusError,
    PureState,
    TargetList,
    TargetPoint,
    _delta_mu,
    distance,
    geodesic_hamiltonian,
)

__all__ = [
    "ProblemSpec",
    "make_problem",
    "DiscretePath",
    "step",
    "integrate",
    "cost",
    "energies",
    "terminal_residual",
]

NODE_ALIGN_TOL = 1e-9


def _as_mat(x) -> np.ndarray:
    a = np.asarray(x)
    return a.astype(np.result_type(a.dtype, np.complex128), copy=False)


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable description of one interpolation problem on the time grid.

    The grid is t0 + mu * h for mu = 0..steps with h = (t_final - t0)/steps;
    every target must sit exactly on a grid node and the last target defines
    the final node.
    """

    psi0: PureState
    targets: TargetList
    t0: float
    t_final: float
    steps: int
    h0: HermitianOperator

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.t_final > self.t0:
            raise ValueError(
                f"t_final must exceed t0, got t0={self.t0}, t_final={self.t_final}"
            )
        d = self.psi0.dim
        if self.h0.dim != d:
            raise ValueError(
                f"h0 dimension {self.h0.dim} does not match state dimension {d}"
            )
        if self.targets.targets[0].state.dim != d:
            raise ValueError("target dimension does not match psi0")
        if self.targets.final_node != self.steps:
            raise ValueError(
                f"last target node {self.targets.final_node} must equal steps={self.steps}"
            )
        h = self.h
        for tp in self.targets.targets:
            if not 1 <= tp.node <= self.steps:
                raise ValueError(f"target node {tp.node} outside 1..{self.steps}")
            t_grid = self.t0 + tp.node * h
            if abs(tp.time - t_grid) > NODE_ALIGN_TOL:
                raise ValueError(
                    f"target time {tp.time!r} misaligned with grid node "
                    f"{tp.node} (t = {t_grid!r}, tolerance {NODE_ALIGN_TOL:.1e})"
                )

    @property
    def h(self) -> float:
        return (self.t_final - self.t0) / self.steps

    @property
    def dim(self) -> int:
        return self.psi0.dim

    @property
    def n(self) -> int:
        return self.psi0.dim - 1

    @property
    def sigma(self) -> float:
        return self.targets.sigma

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.steps + 1)

    def refine(self, factor: int) -> "ProblemSpec":
        """Same continuous data on a factor-times finer grid."""
        if factor < 1:
            raise ValueError(f"refinement factor must be >= 1, got {factor}")
        targets = TargetList(
            targets=tuple(
                TargetPoint(state=tp.state, time=tp.time, node=tp.node * factor)
                for tp in self.targets.targets
            ),
            sigma=self.targets.sigma,
        )
        return ProblemSpec(
            psi0=self.psi0,
            targets=targets,
            t0=self.t0,
            t_final=self.t_final,
            steps=self.steps * factor,
            h0=self.h0,
        )


def make_problem(
    psi0,
    targets,
    sigma: float,
    steps: int,
    t0: float = 0.0,
    t_final: float | None = None,
    h0=None,
) -> ProblemSpec:
    """Assemble a ProblemSpec from plain data.

    Args:
        psi0: initial state (PureState or amplitudes).
        targets: sequence of (state, time) pairs, times strictly increasing.
        sigma: mismatch weight.
        steps: grid step count N.
        t0: initial time.
        t_final: final time; defaults to the last target time, and the last
            target must land on the final node either way.
        h0: initial Hamiltonian; defaults to the geodesic generator toward the
            first target.

    Raises:
        ValueError: misaligned target times, bad ordering, dimension mixups.
    """
    psi0 = psi0 if isinstance(psi0, PureState) else PureState(psi0)
    pairs = [(s if isinstance(s, PureState) else PureState(s), float(t)) for s, t in targets]
    if not pairs:
        raise ValueError("at least one target is required")
    if t_final is None:
        t_final = pairs[-1][1]
    if not t_final > t0:
        raise ValueError(f"t_final must exceed t0, got t0={t0}, t_final={t_final}")
    h = (t_final - t0) / steps
    points = []
    for state, t in pairs:
        node = int(round((t - t0) / h))
        points.append(TargetPoint(state=state, time=t, node=node))
    tl = TargetList(targets=tuple(points), sigma=float(sigma))
    if h0 is None:
        first = pairs[0]
        h0 = geodesic_hamiltonian(psi0, first[0], first[1] - t0)
    elif not isinstance(h0, HermitianOperator):
        h0 = HermitianOperator(h0)
    return ProblemSpec(
        psi0=psi0, targets=tl, t0=t0, t_final=float(t_final), steps=int(steps), h0=h0
    )


@dataclass(frozen=True)
class DiscretePath:
    """Discrete trajectory: stacked (steps+1, d, d) arrays indexed by node.

    Slots hold, at node mu: the accumulated unitary U, the Hamiltonian H, the
    transported multiplier M, and the generator rate L.  Each slot satisfies
    its structural invariant (unitarity, Hermitian/skew-Hermitian trace-free)
    to integration roundoff.
    """

    spec: ProblemSpec
    U: np.ndarray
    H: np.ndarray
    M: np.ndarray
    L: np.ndarray

    def psi(self, mu: int) -> PureState:
        return PureState._wrap(self.U[mu] @ self.spec.psi0.vec)

    def states(self) -> np.ndarray:
        """All states U_mu psi0 as a (steps+1, d) array."""
        return np.einsum("mij,j->mi", self.U, self.spec.psi0.vec)

    def structure_drift(self) -> dict:
        """Worst-case invariant violations across all slots (for diagnostics)."""
        d = self.spec.dim
        eye = np.eye(d)
        gram = np.einsum("mji,mjk->mik", self.U.conj(), self.U)
        herm = self.H - np.conj(np.transpose(self.H, (0, 2, 1)))
        mskew = self.M + np.conj(np.transpose(self.M, (0, 2, 1)))
        lskew = self.L + np.conj(np.transpose(self.L, (0, 2, 1)))
        return {
            "unitarity": float(np.abs(gram - eye).max()),
            "h_hermitian": float(np.abs(herm).max()),
            "h_trace": float(np.abs(np.trace(self.H, axis1=1, axis2=2)).max()),
            "m_skew": float(np.abs(mskew).max()),
            "m_trace": float(np.abs(np.trace(self.M, axis1=1, axis2=2)).max()),
            "l_skew": float(np.abs(lskew).max()),
            "l_trace": float(np.abs(np.trace(self.L, axis1=1, axis2=2)).max()),
        }


def _step_kernel(mu, u, ham, m, l, psi0, targets, dt, eye):
    """One step of the scheme on raw arrays; returns (u', H', m', l')."""
    h_next = ham + (1j * dt) * l
    if mu != 0 and targets.at_node(mu) is not None:
        delta = _delta_mu(mu, u @ psi0, targets)
        m = m + delta
    bp = eye + (0.5j * dt) * h_next
    bp_inv = _inv(bp)
    w = bp_inv @ bp.conj().T  # cayley(-i dt H') since (I + X/2)|_{X=-i dt H'} = bp^dagger
    m_next = w @ m @ w.conj().T
    m_next = 0.5 * (m_next - m_next.conj().T)
    bm_inv = bp_inv.conj().T
    l_next = l - dt * _project_su(bm_inv @ m_next @ bp_inv)
    u_next = w @ u
    return u_next, h_next, m_next, l_next


def step(mu: int, u, ham, m, l, spec: ProblemSpec):
    """Advance one node; returns wrapped (U', H', M', L').

    Inputs may be wrapped types or raw matrices.  mu is the *source* node,
    so the final step has mu = steps - 1 and the terminal node never
    contributes a source term here.
    """
    if not 0 <= mu < spec.steps:
        raise ValueError(f"step index {mu} outside 0..{spec.steps - 1}")
    raw = lambda x: x.mat if hasattr(x, "mat") else _as_mat(x)
    d = spec.dim
    u1, h1, m1, l1 = _step_kernel(
        mu,
        raw(u),
        raw(ham),
        raw(m),
        raw(l),
        spec.psi0.vec,
        spec.targets,
        spec.h,
        np.eye(d),
    )
    return (
        UnitaryOperator._wrap(u1),
        HermitianOperator._wrap(h1),
        AlgebraElement._wrap(m1),
        AlgebraElement._wrap(l1),
    )


def integrate(spec: ProblemSpec, m0, l0, node_impulses=None) -> DiscretePath:
    """Integrate the full grid from initial data (M_0, L_0).

    Args:
        spec: problem description.
        m0, l0: initial multiplier and rate (AlgebraElement or raw).
        node_impulses: optional {node: algebra element} of explicit multiplier
            jumps, added at the named source nodes on top of the built-in
            mismatch sources.  This is the small-width limit of the node
            kicks (finite impulses at vanishing distance), used by the
            solver's exact-interpolation endgame.

    Returns:
        DiscretePath with steps+1 slots.  Deterministic: identical inputs
        produce bit-identical paths.

    Raises:
        CutLocusError: if the trajectory meets a target at the cut locus; the
            exception carries the offending node index.
    """
    d = spec.dim
    nsteps = spec.steps
    dt = spec.h
    psi0 = spec.psi0.vec
    targets = spec.targets
    eye = np.eye(d)

    m0r = m0.mat if hasattr(m0, "mat") else _as_mat(m0)
    l0r = l0.mat if hasattr(l0, "mat") else _as_mat(l0)
    impulses = {}
    if node_impulses:
        for node, imp in node_impulses.items():
            if not 1 <= node < nsteps:
                raise ValueError(
                    f"impulse node {node} outside the interior 1..{nsteps - 1}"
                )
            impulses[int(node)] = imp.mat if hasattr(imp, "mat") else _as_mat(imp)
    dtype = np.result_type(m0r, l0r, np.complex128)
    U = np.empty((nsteps + 1, d, d), dtype=dtype)
    H = np.empty_like(U)
    M = np.empty_like(U)
    L = np.empty_like(U)
    U[0] = eye
    H[0] = spec.h0.mat
    M[0] = m0r
    L[0] = l0r

    u, ham, m, l = U[0], H[0], m0r, l0r
    for mu in range(nsteps):
        imp = impulses.get(mu)
        if imp is not None:
            m = m + imp
        u, ham, m, l = _step_kernel(mu, u, ham, m, l, psi0, targets, dt, eye)
        U[mu + 1] = u
        H[mu + 1] = ham
        M[mu + 1] = m
        L[mu + 1] = l
    for arr in (U, H, M, L):
        arr.setflags(write=False)
    return DiscretePath(spec=spec, U=U, H=H, M=M, L=L)


def energies(path: DiscretePath) -> tuple[float, float]:
    """(rate energy, raw mismatch sum) of a path.

    The rate term is ``sum_{mu<N} (h/2) <L_mu, L_mu>``; the mismatch sum is
    ``sum_j D^2(psi_nj, phi_j)`` before its ``1/(2 sigma^2)`` weight, so the
    two can be compared across widths on equal footing.
    """
    spec = path.spec
    # <L, L> = 2 ||L||_F^2 for skew-Hermitian L
    rate_term = spec.h * np.sum(np.abs(path.L[: spec.steps]) ** 2)
    psi0 = spec.psi0.vec
    mis = 0.0
    for tp in spec.targets.targets:
        dval = distance(path.U[tp.node] @ psi0, tp.state)
        mis += dval * dval
    return float(rate_term), float(mis)


def cost(path: DiscretePath) -> float:
    """Discrete action: rate energy plus weighted squared node mismatches.

    ``sum_{mu<N} (h/2) <L_mu, L_mu>  +  (1/2 sigma^2) sum_j D^2(psi_nj, phi_j)``
    """
    rate_term, mis = energies(path)
    return rate_term + mis / (2.0 * path.spec.sigma**2)


def terminal_residual(path: DiscretePath) -> tuple[float, float]:
    """Norms of the two terminal optimality defects (L_N, M_N + Delta_N)."""
    spec = path.spec
    nsteps = spec.steps
    l_res = float(np.sqrt(2.0) * np.linalg.norm(path.L[nsteps]))
    psi_n = path.U[nsteps] @ spec.psi0.vec
    dn = _delta_mu(nsteps, psi_n, spec.targets)
    m_res = float(np.sqrt(2.0) * np.linalg.norm(path.M[nsteps] + dn))
    return l_res, m_res
