"""Dense complex matrix core.

Operators are plain ``numpy`` arrays of dtype ``complex128``.  Density
operators are validated (and tiny negative eigenvalues clamped) by
:func:`density_operator`; everything else in the package assumes its inputs
went through it.
"""

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidState, NonHermitian

HERMITIAN_TOL = 1e-10
PSD_CLAMP_TOL = 1e-10
TRACE_TOL = 1e-10
CLUSTER_TOL = 1e-8


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite 2-d complex array."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidState("matrix has non-finite entries")
    return a


def _check_square(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")


def hermitian_defect(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def density_operator(m, tol: float = PSD_CLAMP_TOL) -> np.ndarray:
    """Validate ``m`` as a density operator and return a cleaned copy.

    The result is exactly Hermitian; eigenvalues in ``[-tol, 0)`` are set to
    zero.  More negative eigenvalues, a trace off by more than ``1e-10`` or
    an asymmetry above ``1e-10`` raise.
    """
    a = as_matrix(m)
    _check_square(a)
    if hermitian_defect(a) > HERMITIAN_TOL:
        raise NonHermitian(f"matrix is not Hermitian (defect {hermitian_defect(a):.3g})")
    a = (a + a.conj().T) / 2
    if abs(np.trace(a).real - 1.0) > TRACE_TOL:
        raise InvalidState(f"trace is {np.trace(a).real!r}, expected 1")
    w, v = np.linalg.eigh(a)
    if w[0] < -tol:
        raise InvalidState(f"negative eigenvalue {w[0]:.3g}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        a = (v * w) @ v.conj().T
        a = (a + a.conj().T) / 2
    return a


def is_density_operator(m, tol: float = PSD_CLAMP_TOL) -> bool:
    try:
        density_operator(m, tol)
    except (InvalidState, NonHermitian, DimensionMismatch):
        return False
    return True


@dataclass(frozen=True)
class HermitianEigensystem:
    """Spectral data of a Hermitian matrix with numerically equal eigenvalues grouped."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clusters: tuple
    projectors: tuple

    @property
    def nu(self) -> int:
        """Number of distinct eigenvalues."""
        return len(self.clusters)

    @property
    def cluster_values(self) -> np.ndarray:
        return np.array([self.eigenvalues[c].mean() for c in self.clusters])

    def reconstruct(self) -> np.ndarray:
        return sum(lam * p for lam, p in zip(self.cluster_values, self.projectors))


def _fix_phases(v: np.ndarray) -> np.ndarray:
    # first entry with non-negligible modulus made real positive, column by column
    v = v.copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            z = col[idx[0]]
            v[:, k] = col * (abs(z) / z)
    return v


def cluster_indices(values: np.ndarray, cluster_tol: float = CLUSTER_TOL) -> tuple:
    """Group sorted ``values`` whose consecutive gaps are within tolerance."""
    if values.size == 0:
        return ()
    scale = max(1.0, float(np.max(np.abs(values))))
    groups, start = [], 0
    for i in range(1, values.size):
        if values[i] - values[i - 1] > cluster_tol * scale:
            groups.append(np.arange(start, i))
            start = i
    groups.append(np.arange(start, values.size))
    return tuple(groups)


def eig_hermitian(m, cluster_tol: float = CLUSTER_TOL) -> HermitianEigensystem:
    """Eigendecomposition of a Hermitian matrix with eigenvalue clustering.

    Args:
        m: Hermitian matrix (asymmetry at most ``1e-10``).
        cluster_tol: eigenvalues whose gap is at most
            ``cluster_tol * max(1, max|lambda|)`` share a cluster.

    Returns:
        HermitianEigensystem with ascending eigenvalues, orthonormal
        eigenvectors (first non-zero component real positive) and one
        orthogonal projector per cluster.

    Raises:
        NonHermitian: if the symmetry check fails.
    """
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    a = as_matrix(m)
    _check_square(a)
    if hermitian_defect(a) > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(a)))):
        raise NonHermitian("matrix is not Hermitian")
    a = (a + a.conj().T) / 2
    w, v = np.linalg.eigh(a)
    v = _fix_phases(v)
    clusters = cluster_indices(w, cluster_tol)
    projectors = tuple(v[:, c] @ v[:, c].conj().T for c in clusters)
    return HermitianEigensystem(w, v, clusters, projectors)


def spectral_apply(rho, func) -> np.ndarray:
    """Apply ``func`` to the eigenvalues of a Hermitian matrix."""
    w, v = np.linalg.eigh(as_matrix(rho))
    return (v * func(w)) @ v.conj().T


def mat_power(rho, s: float, zero_tol: float = 1e-14) -> np.ndarray:
    """Matrix power of a PSD operator for ``0 <= s <= 1``.

    Zero eigenvalues stay zero (``0**s = 0`` for ``s > 0``) and ``rho**0`` is
    the support projector rather than the identity.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"exponent {s} outside [0, 1]")
    if s == 1.0:
        return as_matrix(rho).copy()
    w, v = np.linalg.eigh(as_matrix(rho))
    pos = w > zero_tol
    lam = np.zeros_like(w)
    lam[pos] = w[pos] ** s
    return (v * lam) @ v.conj().T


def support_projector(rho, zero_tol: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(as_matrix(rho))
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    keep = v[:, w > zero_tol * scale]
    return keep @ keep.conj().T


def trace_norm(m) -> float:
    """Sum of singular values."""
    a = as_matrix(m)
    _check_square(a)
    if hermitian_defect(a) <= 1e-12 * max(1.0, float(np.max(np.abs(a)))):
        return float(np.sum(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2))))
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(as_matrix(m)))


def tensor(*ops) -> np.ndarray:
    """Kronecker product of any number of operators (or kets)."""
    if len(ops) == 1 and not isinstance(ops[0], np.ndarray) and isinstance(ops[0], (list, tuple)):
        ops = tuple(ops[0])
    if not ops:
        raise DimensionMismatch("tensor of nothing")
    return reduce(np.kron, (np.asarray(o, dtype=np.complex128) for o in ops))


def kron_power(op, n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("negative tensor power")
    if n == 0:
        return np.ones((1, 1), dtype=np.complex128)
    return tensor(*([op] * n))


def partial_trace(m, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Args:
        m: operator on the tensor product of subsystems of sizes ``dims``.
        dims: subsystem dimensions, in tensor order.
        keep: index or iterable of indices of subsystems to keep.
    """
    a = as_matrix(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if a.shape != (total, total):
        raise DimensionMismatch(f"dims {dims} do not match operator shape {a.shape}")
    keep = sorted({keep} if isinstance(keep, (int, np.integer)) else set(keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionMismatch(f"keep={keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = a.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace highest index first so remaining axis numbers stay valid
    for i in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + cur)
    kd = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kd, kd)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.complex128).reshape(-1)
    return np.outer(v, v.conj())


def lambda_min(rho) -> float:
    return float(np.linalg.eigvalsh(as_matrix(rho))[0])


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unit ket."""
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density(dim: int, rng: np.random.Generator, rank=None) -> np.ndarray:
    """Random density operator from the induced (Ginibre) measure."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def unitary_to_first_basis_vector(vec) -> np.ndarray:
    """Unitary ``W`` with ``W @ vec = e_1`` (``vec`` normalised first)."""
    v = np.asarray(vec, dtype=np.complex128).reshape(-1)
    v = v / np.linalg.norm(v)
    d = v.size
    # complete v to an orthonormal basis; columns of q are that basis
    m = np.eye(d, dtype=np.complex128)
    m[:, 0] = v
    k = int(np.argmax(np.abs(v)))
    if k != 0:
        m[:, k] = np.eye(d)[:, 0]
    q, r = np.linalg.qr(m)
    q[:, 0] *= r[0, 0] / abs(r[0, 0])
    return q.conj().T
