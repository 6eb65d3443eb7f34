"""Geometry of pure states: projective distance, mismatch forces, stabilizers.

The distance between rays is ``D = 2 arccos |<psi|phi>|`` for normalized
states (insensitive to global phase).  ``mismatch_force`` is the algebra-valued
gradient direction of ``D^2/2`` under left actions ``psi -> e^{eps A} psi``;
``delta_mu`` attaches it to interpolation nodes, and ``mismatch_adjoint`` is
its exact state-derivative, paired the same way.  The stabilizer helpers split
su(n+1) at a state into the subalgebra fixing the ray and its 2n-dimensional
orthogonal complement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie_core import AlgebraElement, HermitianOperator, _inner, _project_su

__all__ = [
    "EPS_NEAR",
    "CUT_TOL",
    "CutLocusError",
    "PureState",
    "TargetPoint",
    "TargetList",
    "distance",
    "mismatch_force",
    "delta_mu",
    "mismatch_adjoint",
    "stabilizer_perp_basis",
    "stabilizer_basis",
    "geodesic_hamiltonian",
    "bloch_coords",
    "FieldDecomposition",
    "field_decomposition",
]

# Below EPS_NEAR the mismatch force is exactly zero (the 0/0 limit); within
# CUT_TOL of the antipode the force direction is undefined and we refuse to
# guess.
EPS_NEAR = 1e-9
CUT_TOL = 1e-6


class CutLocusError(ValueError):
    """Mismatch force requested at (or numerically at) the cut locus."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class PureState:
    """A normalized state vector; global phase carries no meaning here.

    Construction normalizes the amplitudes (a zero vector is rejected) and the
    stored vector is read-only.
    """

    __slots__ = ("vec",)

    def __init__(self, amplitudes):
        vec = np.asarray(amplitudes)
        vec = vec.astype(np.result_type(vec.dtype, np.complex128)).reshape(-1)
        if vec.size < 2:
            raise ValueError(f"state needs at least 2 amplitudes, got {vec.size}")
        nrm = np.linalg.norm(vec)
        if nrm < 1e-12:
            raise ValueError("cannot normalize a (numerically) zero state vector")
        vec = vec / nrm
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)

    @classmethod
    def _wrap(cls, vec: np.ndarray) -> "PureState":
        obj = object.__new__(cls)
        vec.setflags(write=False)
        object.__setattr__(obj, "vec", vec)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("PureState is immutable")

    @property
    def dim(self) -> int:
        return self.vec.size

    def __repr__(self) -> str:
        return f"PureState(dim={self.dim})"


@dataclass(frozen=True)
class TargetPoint:
    """One interpolation constraint: a target ray at a grid node."""

    state: PureState
    time: float
    node: int

    def __post_init__(self):
        if self.node < 1:
            raise ValueError(f"target node must be >= 1, got {self.node}")


@dataclass(frozen=True)
class TargetList:
    """Ordered target constraints sharing one mismatch weight sigma."""

    targets: tuple
    sigma: float
    _by_node: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        targets = tuple(self.targets)
        object.__setattr__(self, "targets", targets)
        if not targets:
            raise ValueError("TargetList needs at least one target")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        times = [t.time for t in targets]
        nodes = [t.node for t in targets]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError(f"target times must be strictly increasing, got {times}")
        if any(n2 <= n1 for n1, n2 in zip(nodes, nodes[1:])):
            raise ValueError(f"target nodes must be strictly increasing, got {nodes}")
        dims = {t.state.dim for t in targets}
        if len(dims) != 1:
            raise ValueError(f"targets mix state dimensions: {sorted(dims)}")
        object.__setattr__(self, "_by_node", {t.node: t for t in targets})

    def at_node(self, mu: int) -> TargetPoint | None:
        return self._by_node.get(mu)

    @property
    def final_node(self) -> int:
        return self.targets[-1].node

    def __len__(self) -> int:
        return len(self.targets)


def _vec(x) -> np.ndarray:
    if isinstance(x, PureState):
        return x.vec
    v = np.asarray(x)
    v = v.astype(np.result_type(v.dtype, np.complex128), copy=False).reshape(-1)
    nrm = np.linalg.norm(v)
    if nrm < 1e-12:
        raise ValueError("cannot measure a zero state vector")
    return v / nrm


def distance(psi, phi) -> float:
    """Projective distance ``D = 2 arccos |<psi|phi>|`` in [0, pi].

    Accepts PureState or raw amplitude vectors (normalized internally).
    Symmetric, phase-invariant, and zero exactly on equal rays.
    """
    c = np.vdot(_vec(psi), _vec(phi))
    x = np.clip(c.real * c.real + c.imag * c.imag, 0.0, 1.0)
    return 2.0 * np.arccos(np.sqrt(x))


def _force_kernel(psi: np.ndarray, phi: np.ndarray):
    """Shared core: returns (D, c, raw outer structure) or raises at the cut."""
    c = np.vdot(psi, phi)
    x = np.clip(c.real * c.real + c.imag * c.imag, 0.0, 1.0)
    d = 2.0 * np.arccos(np.sqrt(x))
    if d >= np.pi - CUT_TOL:
        raise CutLocusError(
            f"target at cut locus: distance {d:.12g} is within {CUT_TOL:.1e} of pi, "
            "mismatch force direction is undefined"
        )
    return d, c


def _mismatch_force(psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    d, c = _force_kernel(psi, phi)
    dim = psi.size
    if d < EPS_NEAR:
        return np.zeros((dim, dim), dtype=np.result_type(psi.dtype, np.complex128))
    # D * F with F = (c |psi><phi| - conj(c) |phi><psi|) / sin D; the D/sin D
    # prefactor is well-conditioned down to the EPS_NEAR cutoff.
    pref = d / np.sin(d)
    num = c * np.outer(psi, phi.conj())
    num -= num.conj().T
    return pref * num


def mismatch_force(psi, phi) -> AlgebraElement:
    """Scaled mismatch force ``D * F`` driving a state toward a target ray.

    F is the unit-speed gradient of the projective distance, so for every
    algebra element A::

        d/deps D^2(e^{eps A} psi, phi) |_0  ==  2 * inner(mismatch_force, A)

    Returns:
        Algebra element (trace-free skew-Hermitian, rank <= 2).  Exactly zero
        when the rays coincide to within ``EPS_NEAR``.

    Raises:
        CutLocusError: when D is within ``CUT_TOL`` of pi.
    """
    return AlgebraElement._wrap(_mismatch_force(_vec(psi), _vec(phi)))


def _delta_mu(mu: int, psi: np.ndarray, targets: TargetList) -> np.ndarray:
    tp = targets.at_node(mu) if mu != 0 else None
    if tp is None:
        dim = psi.size
        return np.zeros((dim, dim), dtype=np.result_type(psi.dtype, np.complex128))
    try:
        return _mismatch_force(psi, tp.state.vec) / (targets.sigma**2)
    except CutLocusError as err:
        raise CutLocusError(f"node {mu}: {err}", node=mu) from None


def delta_mu(mu: int, psi, targets: TargetList) -> AlgebraElement:
    """Node source term: ``mismatch_force / sigma^2`` at target nodes, else 0.

    By convention the value at mu = 0 is zero regardless of targets.
    Cut-locus failures carry the offending node index on the exception.
    """
    return AlgebraElement._wrap(_delta_mu(mu, _vec(psi), targets))


def _mismatch_adjoint_kernel(
    psi: np.ndarray, phi: np.ndarray, v: np.ndarray, sigma: float
) -> np.ndarray:
    """State-derivative adjoint of psi -> mismatch_force(psi, phi)/sigma^2.

    Defining relation, for all algebra elements A and V::

        d/deps < delta(e^{eps A} psi), V > |_0  ==  < adjoint(psi, V), A >

    Derived by the chain rule: the distance prefactor differentiates through
    the first-variation identity of D, the outer-product structure
    differentiates term by term, and the raw matrix derivative is projected
    onto su(n+1) (projection is pairing-invisible).
    """
    d, c = _force_kernel(psi, phi)
    s2 = sigma * sigma
    w = np.vdot(phi, v @ psi)  # <phi|V|psi>
    # R = c |psi><phi| V - w |phi><psi|
    r = c * np.outer(psi, phi.conj()) @ v - w * np.outer(phi, psi.conj())
    if d < EPS_NEAR:
        return _project_su((2.0 / s2) * r)
    sin_d = np.sin(d)
    g = d / (s2 * sin_d)
    if d < 1e-3:
        # series for (sin D - D cos D)/sin^2 D, avoiding cancellation
        gp = (d / 3.0) * (1.0 + 7.0 * d * d / 30.0) / s2
    else:
        gp = (sin_d - d * np.cos(d)) / (s2 * sin_d * sin_d)
    num = c * np.outer(psi, phi.conj())
    num -= num.conj().T
    f = num / sin_d
    p = -4.0 * (c * w).real
    return _project_su(p * gp * f + 2.0 * g * r)


def mismatch_adjoint(mu: int, psi, v, targets: TargetList) -> AlgebraElement:
    """Adjoint of the node source term with respect to state perturbations.

    Zero off-node (sparse); see ``_mismatch_adjoint_kernel`` for the pairing
    that defines it.
    """
    pv = _vec(psi)
    tp = targets.at_node(mu) if mu != 0 else None
    if tp is None:
        dim = pv.size
        zdt = np.result_type(pv.dtype, np.complex128)
        return AlgebraElement._wrap(np.zeros((dim, dim), dtype=zdt))
    raw = v.mat if isinstance(v, AlgebraElement) else np.asarray(v, dtype=complex)
    try:
        return AlgebraElement._wrap(
            _mismatch_adjoint_kernel(pv, tp.state.vec, raw, targets.sigma)
        )
    except CutLocusError as err:
        raise CutLocusError(f"node {mu}: {err}", node=mu) from None


# ---------------------------------------------------------------------------
# stabilizer split of su(n+1) at a state
# ---------------------------------------------------------------------------


def _completion(psi: np.ndarray) -> np.ndarray:
    """Orthonormal completion {chi_1..chi_n} of psi, deterministic."""
    # LAPACK has no extended-precision kernels; double suffices for a basis.
    q, _ = np.linalg.qr(np.asarray(psi, dtype=complex).reshape(-1, 1), mode="complete")
    return q[:, 1:]


def stabilizer_perp_basis(psi) -> list:
    """Orthonormal basis of the complement of the ray stabilizer at psi.

    The 2n elements are the normalized pairs
    ``(|chi_k><psi| - |psi><chi_k|)/2`` and ``i(|chi_k><psi| + |psi><chi_k|)/2``
    over an orthonormal completion {chi_k}.  Their span is the set of algebra
    directions that actually move the ray; it depends only on the ray of psi,
    not on its phase or on the completion choice.
    """
    pv = _vec(psi)
    chis = _completion(pv)
    out = []
    for k in range(chis.shape[1]):
        cp = np.outer(chis[:, k], pv.conj())
        out.append(AlgebraElement._wrap(0.5 * (cp - cp.conj().T)))
        out.append(AlgebraElement._wrap(0.5j * (cp + cp.conj().T)))
    return out


def stabilizer_basis(psi) -> list:
    """Orthonormal basis of the subalgebra whose flows fix the ray of psi.

    n^2 elements: the traceless phase generator along |psi><psi|, plus a full
    su-type basis acting inside the orthogonal complement of psi.
    """
    pv = _vec(psi)
    d = pv.size
    n = d - 1
    chis = _completion(pv)
    proj = np.outer(pv, pv.conj())
    out = [
        AlgebraElement._wrap(
            1j * (proj - np.eye(d) / d) / np.sqrt(2.0 * n / d)
        )
    ]
    for k in range(n):
        for l in range(k + 1, n):
            kl = np.outer(chis[:, k], chis[:, l].conj())
            out.append(AlgebraElement._wrap(0.5 * (kl - kl.conj().T)))
            out.append(AlgebraElement._wrap(0.5j * (kl + kl.conj().T)))
    for r in range(1, n):
        m = np.zeros((d, d), dtype=complex)
        for k in range(r):
            m += np.outer(chis[:, k], chis[:, k].conj())
        m -= r * np.outer(chis[:, r], chis[:, r].conj())
        out.append(AlgebraElement._wrap(1j * m / np.sqrt(2.0 * r * (r + 1))))
    return out


# ---------------------------------------------------------------------------
# geodesic generator, two-level helpers
# ---------------------------------------------------------------------------


def geodesic_hamiltonian(psi0, phi1, t1: float) -> HermitianOperator:
    """Constant Hamiltonian whose flow carries psi0 to the ray of phi1 at t1.

    The generator rotates in the plane spanned by psi0 and the phase-aligned
    component of phi1 orthogonal to psi0, at angular rate D/(2 t1), so
    ``exp(-i H0 t1) psi0`` lands on the target ray (the residual global phase
    is immaterial for the projective distance).  Returns zero when the rays
    already coincide.
    """
    if t1 <= 0:
        raise ValueError(f"geodesic duration must be positive, got {t1}")
    p0 = _vec(psi0)
    p1 = _vec(phi1)
    c = np.vdot(p0, p1)
    mod = min(float(abs(c)), 1.0)
    theta = float(np.arccos(mod))
    d = p0.size
    if theta < 1e-12:
        return HermitianOperator._wrap(np.zeros((d, d), dtype=complex))
    # align the target phase so the plane rotation ends on the ray
    phase = c / mod if mod > 0 else 1.0
    aligned = np.conj(phase) * p1
    chi = aligned - mod * p0
    chi = chi / np.linalg.norm(chi)
    gen = np.outer(chi, p0.conj())
    h0 = (theta / t1) * 1j * (gen - gen.conj().T)
    return HermitianOperator._wrap(h0)


def bloch_coords(psi) -> np.ndarray:
    """Expectation values (<sx>, <sy>, <sz>) of a two-level state."""
    v = _vec(psi)
    if v.size != 2:
        raise ValueError(f"Bloch coordinates need a two-level state, got dim {v.size}")
    a, b = v[0], v[1]
    return np.array(
        [
            2.0 * (np.conj(a) * b).real,
            2.0 * (np.conj(a) * b).imag,
            float(abs(a) ** 2 - abs(b) ** 2),
        ]
    )


@dataclass(frozen=True)
class FieldDecomposition:
    """Two-level Hamiltonian as field strength and rotation axis."""

    omega: float
    axis: np.ndarray
    degenerate: bool


def field_decomposition(h) -> FieldDecomposition:
    """Split a traceless two-level Hamiltonian as ``H = omega * (axis . sigma)/...``.

    Components ``h_i = Re tr(H sigma_i)/2``; omega is the Euclidean norm of
    that field vector.  Near-zero fields (omega < 1e-14) report the
    conventional axis (0, 0, 1) with the degenerate flag set.
    """
    mat = h.mat if isinstance(h, HermitianOperator) else np.asarray(h, dtype=complex)
    if mat.shape != (2, 2):
        raise ValueError(f"field decomposition needs a 2x2 matrix, got {mat.shape}")
    hx = float(mat[0, 1].real + mat[1, 0].real) / 2.0
    hy = float(mat[1, 0].imag - mat[0, 1].imag) / 2.0
    hz = float(mat[0, 0].real - mat[1, 1].real) / 2.0
    vec = np.array([hx, hy, hz])
    omega = float(np.linalg.norm(vec))
    if omega < 1e-14:
        return FieldDecomposition(omega=omega, axis=np.array([0.0, 0.0, 1.0]), degenerate=True)
    return FieldDecomposition(omega=omega, axis=vec / omega, degenerate=False)
