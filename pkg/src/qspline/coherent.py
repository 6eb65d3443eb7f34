"""Symmetric-subspace embedding of spline trajectories.

A product of k identical single-particle states lives in the symmetric
k-particle subspace, and the map ``psi -> psi^{(k)}`` (the Veronese embedding)
sends rays to rays while raising overlaps to the k-th power:
``|<psi^{(k)}|phi^{(k)}>| = |<psi|phi>|^k``.  One-body dynamics lifts
accordingly: ``lift_hamiltonian`` assembles ``sum_a 1x..xHx..x1`` restricted
to the symmetric subspace directly in the occupation basis, so its flow
satisfies ``exp(-i lift(H) t) psi^{(k)} = (exp(-iHt) psi)^{(k)}``.  A spline
for k identical particles is therefore the embedded single-particle spline,
which is how ``coherent_spline`` produces it.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .forward import DiscretePath, ProblemSpec
from .lie_core import HermitianOperator
from .state_geom import PureState

__all__ = [
    "SymmetricState",
    "occupation_basis",
    "veronese",
    "lift_hamiltonian",
    "embed_path",
    "coherent_spline",
    "lifted_propagation",
    "metric_scale",
]


def _check_order(k) -> int:
    if not isinstance(k, (int, np.integer)):
        raise TypeError(f"particle count k must be an integer, got {type(k).__name__}")
    if k < 1:
        raise ValueError(f"particle count k must be >= 1, got {k}")
    return int(k)


@lru_cache(maxsize=None)
def occupation_basis(n: int, k: int) -> tuple:
    """Occupation vectors (k_0, ..., k_n) with sum k, lexicographically decreasing.

    This fixed ordering defines the meaning of every symmetric amplitude
    array in this module and in file outputs.  For n = 1, k = 2 it reads
    (2,0), (1,1), (0,2); the length is C(n+k, k).
    """
    if n < 1:
        raise ValueError(f"need at least a two-level system, got n = {n}")
    k = _check_order(k)
    out = []

    def fill(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for c in range(remaining, -1, -1):
            fill(prefix + (c,), remaining - c, slots - 1)

    fill((), k, n + 1)
    return tuple(out)


class SymmetricState:
    """Normalized amplitudes over the symmetric k-particle occupation basis.

    Ordering follows ``occupation_basis(n, k)``.  Construction normalizes
    (zero vectors are rejected) and the stored vector is read-only.
    """

    __slots__ = ("vec", "n", "k")

    def __init__(self, amplitudes, n: int, k: int):
        k = _check_order(k)
        vec = np.asarray(amplitudes)
        vec = vec.astype(np.result_type(vec.dtype, np.complex128)).reshape(-1)
        want = math.comb(n + k, k)
        if vec.size != want:
            raise ValueError(
                f"symmetric (n={n}, k={k}) amplitudes need length {want}, got {vec.size}"
            )
        nrm = np.linalg.norm(vec)
        if nrm < 1e-12:
            raise ValueError("cannot normalize a (numerically) zero symmetric state")
        vec = vec / nrm
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "k", k)

    @classmethod
    def _wrap(cls, vec: np.ndarray, n: int, k: int) -> "SymmetricState":
        obj = object.__new__(cls)
        vec.setflags(write=False)
        object.__setattr__(obj, "vec", vec)
        object.__setattr__(obj, "n", n)
        object.__setattr__(obj, "k", k)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("SymmetricState is immutable")

    @property
    def dim(self) -> int:
        return self.vec.size

    def __repr__(self) -> str:
        return f"SymmetricState(n={self.n}, k={self.k}, dim={self.dim})"


def _state_vec(psi) -> np.ndarray:
    if isinstance(psi, PureState):
        return psi.vec
    return PureState(psi).vec


@lru_cache(maxsize=None)
def _multinomial_roots(n: int, k: int) -> np.ndarray:
    fact_k = math.factorial(k)
    return np.array(
        [
            math.sqrt(fact_k / math.prod(math.factorial(c) for c in occ))
            for occ in occupation_basis(n, k)
        ]
    )


def veronese(psi, k) -> SymmetricState:
    """Embed a state as a k-fold symmetric product of itself.

    The amplitude on occupation vector (k_0, ..., k_n) is
    ``sqrt(k!/(k_0!...k_n!)) * prod_i psi_i^{k_i}``.  The result is exactly
    normalized when psi is (multinomial theorem), and overlaps obey
    ``|<veronese(psi)|veronese(phi)>| = |<psi|phi>|^k``.

    Raises:
        ValueError: k < 1.
    """
    k = _check_order(k)
    v = _state_vec(psi)
    n = v.size - 1
    basis = occupation_basis(n, k)
    amps = np.array(
        [math.prod(v[i] ** c for i, c in enumerate(occ) if c) for occ in basis],
        dtype=v.dtype,
    )
    amps = amps * _multinomial_roots(n, k)
    return SymmetricState._wrap(amps, n, k)


def lift_hamiltonian(h, k) -> HermitianOperator:
    """One-body Hamiltonian acting on all k particles, in the occupation basis.

    Assembles the restriction of ``sum_{a=1}^k 1x..xHx..x1`` to the symmetric
    subspace without forming any tensor product: the diagonal entry at
    occupation (k_0,...,k_n) is ``sum_i H_ii k_i`` and the entry connecting
    occupations that differ by moving one particle from level j to level i is
    ``H_ij sqrt((k_i + 1) k_j)``.  Linear in H, Hermitian, and its flow
    commutes with the embedding.
    """
    k = _check_order(k)
    mat = h.mat if isinstance(h, HermitianOperator) else np.asarray(h, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {mat.shape}")
    n = mat.shape[0] - 1
    basis = occupation_basis(n, k)
    index = {occ: a for a, occ in enumerate(basis)}
    dim = len(basis)
    out = np.zeros((dim, dim), dtype=complex)
    for a, occ in enumerate(basis):
        out[a, a] = sum(mat[i, i] * c for i, c in enumerate(occ))
        for j, kj in enumerate(occ):
            if kj == 0:
                continue
            for i in range(n + 1):
                if i == j:
                    continue
                moved = list(occ)
                moved[j] -= 1
                moved[i] += 1
                b = index[tuple(moved)]
                out[b, a] = mat[i, j] * math.sqrt((occ[i] + 1) * kj)
    return HermitianOperator(out)


def embed_path(path: DiscretePath, k) -> list:
    """Veronese images of the trajectory states, one per grid node."""
    k = _check_order(k)
    psi0 = path.spec.psi0.vec
    return [veronese(PureState._wrap(u @ psi0), k) for u in path.U]


def coherent_spline(spec: ProblemSpec, k, options=None) -> list:
    """Spline for k identical particles: solve downstairs, embed the result.

    Runs ``optimizer.solve`` on the single-particle problem, then returns the
    embedded trajectory ``veronese(U_mu psi0, k)`` at every grid node.  The
    embedded states follow the flow of the lifted Hamiltonian path to the
    one-step map's own accuracy (see ``lifted_propagation``).
    """
    from .optimizer import DescentOptions, solve

    k = _check_order(k)
    sol = solve(spec, options if options is not None else DescentOptions())
    return embed_path(sol.path, k)


def lifted_propagation(path: DiscretePath, k) -> list:
    """Propagate veronese(psi0) with the lifted generators of a stored path.

    Applies, upstairs, the same one-step map the integrator used downstairs:
    the step into node mu is ``w = bp^{-1} bp*`` with
    ``bp = 1 + (i dt / 2) lift(H_mu)``.  Lifting the generator and lifting
    the step unitary agree only to the one-step map's accuracy, so this
    trajectory matches ``embed_path`` to O(dt^2) over the grid, not to
    roundoff; the gap shrinks quadratically under refinement.
    """
    k = _check_order(k)
    spec = path.spec
    dt = spec.h
    dim = math.comb(spec.n + k, k)
    eye = np.eye(dim)
    v = veronese(spec.psi0, k).vec.astype(complex)
    out = [SymmetricState._wrap(v, spec.n, k)]
    for mu in range(1, spec.steps + 1):
        hk = lift_hamiltonian(np.asarray(path.H[mu], dtype=complex), k)
        bp = eye + (0.5j * dt) * hk.mat
        w = np.linalg.solve(bp, bp.conj().T)
        v = w @ v
        out.append(SymmetricState._wrap(v, spec.n, k))
    return out


def metric_scale(k) -> float:
    """Factor by which the embedding multiplies the infinitesimal metric.

    Nearby overlaps obey ``cos(D_k/2) = cos^k(D/2)``, so squared distances
    (and the pulled-back metric) scale by k in the small-separation limit.
    Reported for interpretation of embedded distances; the optimization
    itself always runs downstairs.
    """
    return float(_check_order(k))
