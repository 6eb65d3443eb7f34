"""Primitives for the special-unitary algebra su(n+1) and the Cayley transform.

Conventions used throughout the package:

* Algebra elements are trace-free skew-Hermitian complex matrices X, paired by
  the real inner product ``<A, B> = -2 Re tr(A B)``, under which the bases
  produced by :func:`su_basis` are orthonormal.
* The Cayley transform ``tau(X) = (I - X/2)^{-1} (I + X/2)`` maps the algebra
  into the unitary group and is defined for every algebra element (the
  denominator ``I - X/2`` has spectrum bounded away from zero when X is
  skew-Hermitian).
* ``dl_tau`` / ``dr_tau`` are the left/right trivialized differentials of tau,
  orthogonally projected back onto su(n+1).  Their inverses are exact inverses
  of the projected maps on the algebra, so the round trips are identities to
  machine precision for every n.  For 2x2 matrices the projection and the
  inverse-correction terms vanish identically and the maps reduce to the plain
  sandwich formulas ``(I -/+ X/2)^{-1} Y (I +/- X/2)^{-1}`` and their reversals.

Linear systems with ``I -/+ X/2`` are solved directly (LU) rather than through
explicit inverse formulas.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ALGEBRA_TOL",
    "REPAIR_TOL",
    "UNITARY_TOL",
    "CayleyChartError",
    "AlgebraElement",
    "HermitianOperator",
    "UnitaryOperator",
    "inner",
    "norm",
    "project_su",
    "cayley",
    "cayley_inverse",
    "dl_tau",
    "dl_tau_inverse",
    "dr_tau",
    "dr_tau_inverse",
    "adjoint_action",
    "su_basis",
]

# Structure drift below ALGEBRA_TOL is accepted as-is, drift in
# (ALGEBRA_TOL, REPAIR_TOL) is repaired by re-projection, anything larger is
# rejected: silent repair of a genuinely wrong matrix would mask caller bugs.
ALGEBRA_TOL = 1e-12
REPAIR_TOL = 1e-8
UNITARY_TOL = 1e-10


class CayleyChartError(ValueError):
    """Raised when a unitary sits outside the Cayley chart (-1 in spectrum)."""


def _as_square(entries, label: str) -> np.ndarray:
    mat = np.asarray(entries)
    # Promote to at least complex128 but keep extended precision if given.
    mat = mat.astype(np.result_type(mat.dtype, np.complex128))
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{label} expects a square matrix, got shape {mat.shape}")
    if mat.shape[0] < 2:
        raise ValueError(f"{label} expects dimension >= 2, got {mat.shape[0]}")
    return mat


def _project_su(mat: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an arbitrary matrix onto su(d).

    Satisfies <project(A), Y> = -2 Re tr(A Y) for every Y in su(d), i.e. the
    projection is invisible inside pairings with algebra elements.
    """
    skew = 0.5 * (mat - mat.conj().T)
    d = mat.shape[0]
    return skew - (np.trace(skew) / d) * np.eye(d)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return -2.0 * float(np.einsum("ij,ji->", a, b).real)


class AlgebraElement:
    """A trace-free skew-Hermitian matrix, element of su(n+1).

    Construction validates the structure: drift up to ``ALGEBRA_TOL`` passes
    unchanged, drift below ``REPAIR_TOL`` is repaired by projection, larger
    drift raises ``ValueError``.  The stored matrix is read-only.
    """

    __slots__ = ("mat",)

    def __init__(self, entries):
        mat = _as_square(entries, "AlgebraElement")
        drift = float(np.abs(mat - _project_su(mat)).max())
        if drift > REPAIR_TOL:
            raise ValueError(
                "matrix is not skew-Hermitian trace-free: structure drift "
                f"{drift:.3e} exceeds {REPAIR_TOL:.1e}"
            )
        if drift > ALGEBRA_TOL:
            mat = _project_su(mat)
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @classmethod
    def _wrap(cls, mat: np.ndarray) -> "AlgebraElement":
        # Trusted fast path for matrices produced by structure-preserving maps.
        obj = object.__new__(cls)
        mat.setflags(write=False)
        object.__setattr__(obj, "mat", mat)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("AlgebraElement is immutable")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def norm(self) -> float:
        return norm(self)

    def __repr__(self) -> str:
        return f"AlgebraElement(dim={self.dim}, norm={self.norm():.6g})"


class HermitianOperator:
    """A trace-free Hermitian matrix (a Hamiltonian up to an energy offset).

    ``i * H.mat`` is an algebra element; the same drift policy as
    :class:`AlgebraElement` applies, with the Hermitian projection
    ``(A + A^dagger)/2`` minus the trace part.
    """

    __slots__ = ("mat",)

    def __init__(self, entries):
        mat = _as_square(entries, "HermitianOperator")
        d = mat.shape[0]
        herm = 0.5 * (mat + mat.conj().T)
        herm = herm - (np.trace(herm).real / d) * np.eye(d)
        drift = float(np.abs(mat - herm).max())
        if drift > REPAIR_TOL:
            raise ValueError(
                "matrix is not Hermitian trace-free: structure drift "
                f"{drift:.3e} exceeds {REPAIR_TOL:.1e}"
            )
        if drift > ALGEBRA_TOL:
            mat = herm
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @classmethod
    def _wrap(cls, mat: np.ndarray) -> "HermitianOperator":
        obj = object.__new__(cls)
        mat.setflags(write=False)
        object.__setattr__(obj, "mat", mat)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("HermitianOperator is immutable")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim})"


class UnitaryOperator:
    """A unitary matrix with unit-modulus determinant.

    The Cayley transform of a trace-free generator keeps ``|det| = 1`` but not
    ``det = 1`` for n >= 2, so only the determinant modulus is enforced.
    """

    __slots__ = ("mat",)

    def __init__(self, entries):
        mat = _as_square(entries, "UnitaryOperator")
        d = mat.shape[0]
        gram_drift = float(np.abs(mat.conj().T @ mat - np.eye(d)).max())
        if gram_drift > UNITARY_TOL:
            raise ValueError(
                f"matrix is not unitary: ||U^dag U - I||_max = {gram_drift:.3e} "
                f"exceeds {UNITARY_TOL:.1e}"
            )
        det_drift = abs(abs(np.linalg.det(mat)) - 1.0)
        if det_drift > UNITARY_TOL:
            raise ValueError(
                f"determinant modulus deviates from 1 by {det_drift:.3e}"
            )
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @classmethod
    def _wrap(cls, mat: np.ndarray) -> "UnitaryOperator":
        obj = object.__new__(cls)
        mat.setflags(write=False)
        object.__setattr__(obj, "mat", mat)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("UnitaryOperator is immutable")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __repr__(self) -> str:
        return f"UnitaryOperator(dim={self.dim})"


def _raw(x) -> np.ndarray:
    if isinstance(x, (AlgebraElement, HermitianOperator, UnitaryOperator)):
        return x.mat
    a = np.asarray(x)
    return a.astype(np.result_type(a.dtype, np.complex128), copy=False)


# ---------------------------------------------------------------------------
# algebra operations
# ---------------------------------------------------------------------------


def inner(a, b) -> float:
    """Real inner product ``<A, B> = -2 Re tr(A B)`` on su(n+1).

    Args:
        a, b: algebra elements (or raw matrices).

    Returns:
        The pairing as a float.  Positive-definite on skew-Hermitian
        matrices: ``inner(A, A) = 2 ||A||_F^2``.
    """
    return _inner(_raw(a), _raw(b))


def norm(a) -> float:
    """Norm induced by :func:`inner`; clamps the tiny negative roundoff case."""
    return float(np.sqrt(max(_inner(_raw(a), _raw(a)), 0.0)))


def project_su(a) -> AlgebraElement:
    """Project an arbitrary matrix onto su(n+1) (skew part minus trace part).

    The projection is the pairing-adjoint identity map: for every algebra
    element Y, ``inner(project_su(A), Y) == -2 Re tr(A Y)``.
    """
    return AlgebraElement._wrap(_project_su(_raw(a)))


# ---------------------------------------------------------------------------
# small-matrix linear algebra, extended-precision capable
# ---------------------------------------------------------------------------
# LAPACK only speaks 64-bit floats, so inverses fall back to closed forms when
# operands carry extended precision (the optimizer's last-mile polish).  The
# matrices here are d <= 3 and within O(h) of the identity, where the
# adjugate route is as accurate as elimination.


def _det_small(a: np.ndarray):
    d = a.shape[-1]
    if d == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def _det(a: np.ndarray):
    if a.dtype.char != "G" or a.shape[-1] > 3:
        return np.linalg.det(a)
    return _det_small(a)


def _inv(a: np.ndarray) -> np.ndarray:
    if a.dtype.char != "G":
        return np.linalg.inv(a)
    d = a.shape[-1]
    if d > 3:
        raise NotImplementedError(
            "extended-precision inverse is implemented for dimensions 2 and 3"
        )
    out = np.empty_like(a)
    if d == 2:
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 1, 1] = a[..., 0, 0]
        out[..., 0, 1] = -a[..., 0, 1]
        out[..., 1, 0] = -a[..., 1, 0]
    else:
        out[..., 0, 0] = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
        out[..., 0, 1] = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
        out[..., 0, 2] = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
        out[..., 1, 0] = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
        out[..., 1, 1] = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
        out[..., 1, 2] = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
        out[..., 2, 0] = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
        out[..., 2, 1] = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
        out[..., 2, 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    return out / _det_small(a)[..., None, None]


def _solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if np.result_type(a, b).char != "G":
        return np.linalg.solve(a, b)
    return _inv(a.astype(np.clongdouble, copy=False)) @ b


# ---------------------------------------------------------------------------
# Cayley transform and trivialized differentials
# ---------------------------------------------------------------------------


def _half_factors(x: np.ndarray):
    d = x.shape[0]
    eye = np.eye(d)
    return eye - 0.5 * x, eye + 0.5 * x


def _cayley(x: np.ndarray) -> np.ndarray:
    a, b = _half_factors(x)
    return _solve(a, b)


def cayley(x) -> UnitaryOperator:
    """Cayley transform ``tau(X) = (I - X/2)^{-1} (I + X/2)``.

    Defined for every skew-Hermitian X; the result is unitary with
    unit-modulus determinant.  First-order agreement with the matrix
    exponential: ``tau(X) = exp(X) + O(X^3)``.
    """
    return UnitaryOperator._wrap(_cayley(_raw(x)))


def _cayley_inverse(v: np.ndarray) -> np.ndarray:
    d = v.shape[0]
    vp = v + np.eye(d)
    if abs(_det(vp)) < 1e-12:
        raise CayleyChartError(
            "unitary lies on the Cayley chart boundary: V + I is singular "
            "(-1 in the spectrum)"
        )
    return 2.0 * _solve(vp, v - np.eye(d))


def cayley_inverse(v) -> AlgebraElement:
    """Inverse Cayley transform ``2 (V - I)(V + I)^{-1}``.

    Raises:
        CayleyChartError: when -1 lies in the spectrum of V, where the chart
            is undefined.
    """
    return AlgebraElement(_cayley_inverse(_raw(v)))


def _dl_tau(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a, b = _half_factors(x)
    t = _solve(a, y)
    s = _solve(b.T, t.T).T
    return _project_su(s)


def _dl_tau_inv(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Exact inverse of the projected left differential on su(n+1): the raw
    # sandwich (I - X/2) W (I + X/2) re-acquires the trace component that the
    # projection removed, and the ab-term restores trace-freeness without
    # touching pairings against algebra elements (ab is Hermitian).
    a, b = _half_factors(x)
    awb = a @ w @ b
    ab = a @ b
    return awb - (np.trace(awb) / np.trace(ab)) * ab


def _dr_tau(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a, b = _half_factors(x)
    t = _solve(b, y)
    s = _solve(a.T, t.T).T
    return _project_su(s)


def _dr_tau_inv(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    a, b = _half_factors(x)
    bwa = b @ w @ a
    ab = a @ b
    return bwa - (np.trace(bwa) / np.trace(ab)) * ab


def dl_tau(x, y) -> AlgebraElement:
    """Left-trivialized differential of the Cayley map, projected onto su(n+1).

    ``dl_tau(X, Y) = proj (I - X/2)^{-1} Y (I + X/2)^{-1}``.

    Args:
        x: chart point (algebra element).
        y: tangent direction (algebra element).

    Returns:
        Algebra element; at X = 0 this is the identity map.
    """
    return AlgebraElement._wrap(_dl_tau(_raw(x), _raw(y)))


def dl_tau_inverse(x, w) -> AlgebraElement:
    """Exact inverse of ``dl_tau(x, .)`` on su(n+1).

    For 2x2 matrices this coincides with the sandwich
    ``(I - X/2) W (I + X/2)``; in higher dimension a trace correction along
    ``(I - X/2)(I + X/2)`` makes the round trip with :func:`dl_tau` exact.
    """
    return AlgebraElement._wrap(_dl_tau_inv(_raw(x), _raw(w)))


def dr_tau(x, y) -> AlgebraElement:
    """Right-trivialized differential of the Cayley map, projected onto su(n+1).

    ``dr_tau(X, Y) = proj (I + X/2)^{-1} Y (I - X/2)^{-1}``.
    """
    return AlgebraElement._wrap(_dr_tau(_raw(x), _raw(y)))


def dr_tau_inverse(x, w) -> AlgebraElement:
    """Exact inverse of ``dr_tau(x, .)`` on su(n+1)."""
    return AlgebraElement._wrap(_dr_tau_inv(_raw(x), _raw(w)))


def adjoint_action(u, x) -> AlgebraElement:
    """Conjugation ``Ad_U X = U X U^{-1}`` of an algebra element by a unitary.

    Preserves the inner product: ``inner(Ad_U A, Ad_U B) == inner(A, B)``.
    """
    um = _raw(u)
    return AlgebraElement._wrap(um @ _raw(x) @ um.conj().T)


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


def _su_basis_mats(n: int) -> np.ndarray:
    """Stacked orthonormal basis matrices of su(n+1), deterministic order.

    Ordering: for each index pair p < q (lexicographic) the real rotation
    ``(E_pq - E_qp)/2`` then the imaginary pair ``i (E_pq + E_qp)/2``;
    afterwards the n diagonal elements ``i diag(1, .., 1, -r, 0, ..) /
    sqrt(2 r (r+1))``.
    """
    if n < 1:
        raise ValueError(f"su(n+1) basis needs n >= 1, got n={n}")
    d = n + 1
    mats = []
    for p in range(d):
        for q in range(p + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[p, q] = 0.5
            m[q, p] = -0.5
            mats.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[p, q] = 0.5j
            m[q, p] = 0.5j
            mats.append(m)
    for r in range(1, d):
        diag = np.zeros(d)
        diag[:r] = 1.0
        diag[r] = -r
        m = np.diag(1j * diag / np.sqrt(2.0 * r * (r + 1)))
        mats.append(m)
    return np.array(mats)

_BASIS_CACHE: dict = {}


def su_basis(n: int) -> list:
    """Orthonormal basis of su(n+1) under :func:`inner`.

    Returns:
        List of ``n (n + 2)`` algebra elements with identity Gram matrix.
        For n = 1 the list spans {i sigma_x/2, i sigma_y/2, i sigma_z/2}.
    """
    if n not in _BASIS_CACHE:
        _BASIS_CACHE[n] = [AlgebraElement._wrap(m) for m in _su_basis_mats(n)]
    return list(_BASIS_CACHE[n])
