"""Dense complex linear algebra for small spin Hamiltonians.

Operators are plain ``numpy`` complex arrays. The eigensolver is a cyclic
Jacobi method for Hermitian matrices, which is deterministic and fast enough
for the 6-, 9- and 18-dimensional problems handled here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MAX_DIM = 1024
HERMITIAN_RTOL = 1e-9


class DimensionError(ValueError):
    """Raised when an operator would exceed :data:`MAX_DIM`."""


class NotHermitianError(ValueError):
    """Raised when a Hermitian routine receives a non-Hermitian matrix."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigen-decomposition of a Hermitian operator.

    ``values`` are ascending, ``vectors[:, k]`` is the eigenvector belonging
    to ``values[k]``. ``basis_labels`` optionally tags each basis index.
    """

    values: np.ndarray
    vectors: np.ndarray
    basis_labels: Optional[tuple] = field(default=None)

    def __len__(self):
        return len(self.values)

    def weights(self) -> np.ndarray:
        """Squared amplitudes, shape (basis, state)."""
        return np.abs(self.vectors) ** 2


def as_operator(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"operator must be square, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise DimensionError(f"dimension {a.shape[0]} exceeds {MAX_DIM}")
    return a


def kron(*ops) -> np.ndarray:
    """Tensor product, first factor is the slowest-varying index."""
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        op = as_operator(op)
        if out.shape[0] * op.shape[0] > MAX_DIM:
            raise DimensionError(
                f"kron dimension {out.shape[0] * op.shape[0]} exceeds {MAX_DIM}"
            )
        out = np.kron(out, op)
    return out


def dagger(a) -> np.ndarray:
    return np.conjugate(np.transpose(a))


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def hermiticity_error(h) -> float:
    """max|H - H^dagger| relative to max|H| (0 for the zero matrix)."""
    h = np.asarray(h)
    scale = np.max(np.abs(h)) if h.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(h - dagger(h))) / scale)


def is_hermitian(h, rtol: float = HERMITIAN_RTOL) -> bool:
    return hermiticity_error(h) <= rtol


def spin1_operators():
    """Spin-1 matrices in the (m=+1, 0, -1) basis.

    Returns ``(Sx, Sy, Sz, Splus, Sminus)``.
    """
    r = 1 / np.sqrt(2)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]])
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz, sx + 1j * sy, sx - 1j * sy


def pauli():
    """Pauli matrices ``(sigma_x, sigma_y, sigma_z)``."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return sx, sy, sz


def _jacobi_kernel(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    norm_f = np.sqrt(np.sum(np.abs(a) ** 2))
    target = tol * norm_f
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * abs(a[i, j]) ** 2
        if np.sqrt(off) <= target:
            return np.real(np.diag(a)).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r < 1e-300 or r < 1e-18 * norm_f:
                    continue
                # U = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                pc = np.conj(apq / r)
                tau = (a[q, q].real - a[p, p].real) / (2.0 * r)
                sign = 1.0 if tau >= 0 else -1.0
                t = sign / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                u10 = -s * pc
                u11 = c * pc
                for k in range(n):
                    x = a[k, p]
                    y = a[k, q]
                    a[k, p] = c * x + u10 * y
                    a[k, q] = s * x + u11 * y
                for k in range(n):
                    x = a[p, k]
                    y = a[q, k]
                    a[p, k] = c * x + np.conj(u10) * y
                    a[q, k] = s * x + np.conj(u11) * y
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                for k in range(n):
                    x = v[k, p]
                    y = v[k, q]
                    v[k, p] = c * x + u10 * y
                    v[k, q] = s * x + u11 * y
    return np.real(np.diag(a)).copy(), v, -1


try:
    import numba

    _jacobi_compiled = numba.njit(cache=True)(_jacobi_kernel)
except ImportError:  # pragma: no cover - numba is a declared dependency
    _jacobi_compiled = _jacobi_kernel


def _jacobi(a: np.ndarray, tol: float, max_sweeps: int):
    if np.linalg.norm(a) == 0.0:
        return np.zeros(a.shape[0]), np.eye(a.shape[0], dtype=complex)
    values, vectors, sweeps = _jacobi_compiled(
        np.ascontiguousarray(a, dtype=np.complex128), float(tol), int(max_sweeps)
    )
    if sweeps < 0:
        raise np.linalg.LinAlgError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return values, vectors


def _normalize_phase(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    for k in range(v.shape[1]):
        col = mags[:, k]
        i = int(np.argmax(col >= col.max() - 1e-12))
        v[:, k] *= np.conjugate(v[i, k]) / abs(v[i, k])
    return v


def _order(values, vectors, degen_tol):
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    out = list(range(len(values)))
    i = 0
    while i < len(values):
        j = i + 1
        while j < len(values) and values[j] - values[j - 1] <= degen_tol:
            j += 1
        if j - i > 1:
            def key(k):
                col = np.round(vectors[:, k], 9)
                return tuple(-col.real) + tuple(-col.imag)
            out[i:j] = sorted(range(i, j), key=key)
        i = j
    return values[out], vectors[:, out]


def eigh(h, basis_labels: Optional[Sequence] = None, tol: float = 1e-12,
         max_sweeps: int = 100) -> EigenSystem:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Eigenvalues are returned in ascending order. Each eigenvector is scaled so
    that its largest-magnitude component is real and positive; eigenvectors
    of degenerate eigenvalues are ordered lexicographically.

    Raises
    ------
    NotHermitianError
        If ``h`` is not Hermitian to within 1e-9 relative tolerance.
    """
    h = as_operator(h)
    if not is_hermitian(h):
        raise NotHermitianError(
            f"matrix is not Hermitian (relative error {hermiticity_error(h):.2e})"
        )
    a = 0.5 * (h + dagger(h))
    values, vectors = _jacobi(a.copy(), tol, max_sweeps)
    vectors = _normalize_phase(vectors)
    scale = max(np.max(np.abs(values)), 1e-300)
    values, vectors = _order(values, vectors, 1e-10 * scale)
    labels = tuple(basis_labels) if basis_labels is not None else None
    if labels is not None and len(labels) != h.shape[0]:
        raise DimensionError("basis_labels length does not match dimension")
    return EigenSystem(values=values, vectors=vectors, basis_labels=labels)
