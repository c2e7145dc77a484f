"""Scalar divergences and exponent kernels.

All logarithms are natural.  Infinite values (disjoint supports, orthogonal
states) are returned as ``math.inf`` deliberately, never produced by
overflow; :data:`INF` is that sentinel.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DimensionMismatch, SupportViolation, UnknownParameter, UnknownSymbol
from .qmat import CLUSTER_TOL, as_matrix, eig_hermitian, trace_norm

INF = math.inf

EIG_ZERO = 1e-12
OVERLAP_TOL = 1e-10
S_TOL = 1e-10
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _same_shape(rho, sigma):
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def _spectrum(a):
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return np.clip(w, 0.0, None), v


def _support_leak(p, u, q, v) -> bool:
    """True when some eigenvector of rho (weight > 1e-12) overlaps ker(sigma)."""
    ker = v[:, q <= EIG_ZERO]
    if ker.shape[1] == 0:
        return False
    ov = np.abs(ker.conj().T @ u[:, p > EIG_ZERO]) ** 2
    return bool(np.any(ov.sum(axis=0) > OVERLAP_TOL))


def binary_entropy(x: float) -> float:
    """Binary entropy in nats, ``0 log 0 = 0``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument {x} outside [0, 1]")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log(x) - (1.0 - x) * math.log1p(-x)


def von_neumann_entropy(rho) -> float:
    p, _ = _spectrum(as_matrix(rho))
    p = p[p > EIG_ZERO]
    return float(-np.sum(p * np.log(p)))


def rel_entropy(rho, sigma) -> float:
    """Quantum relative entropy ``tr rho (log rho - log sigma)`` in nats.

    Returns :data:`INF` when the support of ``rho`` is not contained in the
    support of ``sigma``.
    """
    a, b = _same_shape(rho, sigma)
    p, u = _spectrum(a)
    q, v = _spectrum(b)
    if _support_leak(p, u, q, v):
        return INF
    keep_p = p > EIG_ZERO
    keep_q = q > EIG_ZERO
    pp = p[keep_p]
    overlap = np.abs(v[:, keep_q].conj().T @ u[:, keep_p]) ** 2  # (b, a)
    cross = float(np.sum(overlap * np.log(q[keep_q])[:, None] * pp[None, :]))
    val = float(np.sum(pp * np.log(pp))) - cross
    return max(val, 0.0)


def rel_entropy_to_power(rho, sigma, n: int) -> float:
    """``D(rho || sigma^{(x)n})`` for ``rho`` on ``n`` copies of ``sigma``'s space.

    Uses ``tr(rho log sigma^{(x)n}) = sum_i tr(rho_i log sigma)`` over the
    single-site marginals, so only the entropy of ``rho`` needs a large
    eigen-solve.  Falls back to the dense formula when ``sigma`` is singular.
    """
    from .qmat import kron_power, partial_trace

    a = as_matrix(rho)
    b = as_matrix(sigma)
    d = b.shape[0]
    if a.shape != (d ** n, d ** n):
        raise DimensionMismatch(f"operator of shape {a.shape} is not on {n} copies of dim {d}")
    q, v = _spectrum(b)
    if np.any(q <= EIG_ZERO):
        return rel_entropy(a, kron_power(b, n))
    log_b = (v * np.log(q)) @ v.conj().T
    cross = 0.0
    for i in range(n):
        marg = partial_trace(a, [d] * n, i)
        cross += float(np.real(np.trace(marg @ log_b)))
    p = np.clip(np.linalg.eigvalsh((a + a.conj().T) / 2), 0.0, None)
    p = p[p > EIG_ZERO]
    return max(float(np.sum(p * np.log(p))) - cross, 0.0)


def chi2(rho, sigma) -> float:
    """Chi-squared divergence ``tr(rho^2 sigma^{-1}) - 1`` (pseudo-inverse on supp sigma)."""
    a, b = _same_shape(rho, sigma)
    p, u = _spectrum(a)
    q, v = _spectrum(b)
    if _support_leak(p, u, q, v):
        raise SupportViolation("supp(rho) is not contained in supp(sigma)")
    keep = q > EIG_ZERO
    vk = v[:, keep]
    r = vk.conj().T @ a @ vk
    val = float(np.real(np.sum(np.abs(r) ** 2 / q[keep][None, :]))) - 1.0
    return max(val, 0.0)


def _log_quotient(li: float, lj: float) -> float:
    if li == lj:
        return 1.0 / li
    return (math.log(li) - math.log(lj)) / (li - lj)


def eta(rho, sigma, cluster_tol: float = CLUSTER_TOL) -> float:
    """Second-order coefficient of ``D(alpha rho + (1 - alpha) sigma || sigma)``.

    Uses the spectral projectors ``P_i`` of ``sigma`` (numerically equal
    eigenvalues merged first) with weights ``(log l_i - log l_j)/(l_i - l_j)``
    across clusters and ``1/l_i`` within a cluster.

    Raises:
        SupportViolation: if ``sigma`` has a zero eigenvalue cluster.
    """
    a, b = _same_shape(rho, sigma)
    es = eig_hermitian(b, cluster_tol)
    lam = es.cluster_values
    if np.any(lam <= EIG_ZERO):
        raise SupportViolation("eta needs a full-rank reference state")
    delta = es.eigenvectors.conj().T @ (a - b) @ es.eigenvectors
    mass = np.abs(delta) ** 2
    total = 0.0
    for i, ci in enumerate(es.clusters):
        for j, cj in enumerate(es.clusters):
            w = float(np.sum(mass[np.ix_(ci, cj)]))
            if w:
                total += _log_quotient(lam[i], lam[j]) * w
    return float(total)


def fidelity(rho, sigma) -> float:
    """``|| sqrt(rho) sqrt(sigma) ||_1 ** 2``."""
    a, b = _same_shape(rho, sigma)
    p, u = _spectrum(a)
    q, v = _spectrum(b)
    sa = (u * np.sqrt(p)) @ u.conj().T
    sb = (v * np.sqrt(q)) @ v.conj().T
    return float(np.sum(np.linalg.svd(sa @ sb, compute_uv=False)) ** 2)


@dataclass(frozen=True)
class ChernoffKernel:
    """Precomputed spectra giving ``tr(rho^s sigma^(1-s))`` for any ``s``.

    ``tr(rho^s sigma^(1-s)) = sum_ab w_ab p_a^s q_b^(1-s)`` over positive
    eigenvalues only, which also realises the support-projector convention
    at ``s = 0`` and ``s = 1``.
    """

    log_p: np.ndarray
    log_q: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_states(cls, rho, sigma) -> "ChernoffKernel":
        a, b = _same_shape(rho, sigma)
        p, u = _spectrum(a)
        q, v = _spectrum(b)
        kp, kq = p > EIG_ZERO, q > EIG_ZERO
        w = np.abs(u[:, kp].conj().T @ v[:, kq]) ** 2
        w[w < 1e-300] = 0.0
        return cls(np.log(p[kp]), np.log(q[kq]), w)

    @property
    def orthogonal(self) -> bool:
        return not np.any(self.weights > 1e-14)

    def trace(self, s):
        s = np.asarray(s, dtype=float)
        expo = s[..., None, None] * self.log_p[:, None] + (1.0 - s[..., None, None]) * self.log_q[None, :]
        return np.sum(self.weights * np.exp(expo), axis=(-2, -1))

    def log_trace(self, s):
        return np.log(self.trace(s))


@dataclass(frozen=True)
class ChernoffResult:
    """Outcome of a single-``s`` supremum.

    ``value`` is in nats and may be :data:`INF`; ``s_star`` attains it.
    """

    value: float
    s_star: float
    curve_samples: tuple = field(default=())

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def _maximize_concave(fun, tol: float = S_TOL):
    """Golden-section search on [0, 1] followed by one bounded Brent pass."""
    lo, hi = 0.0, 1.0
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = fun(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = fun(x1)
    s = (lo + hi) / 2
    best_s, best_f = s, fun(s)
    width = 1e-6
    res = minimize_scalar(lambda x: -fun(x), bounds=(max(0.0, s - width), min(1.0, s + width)),
                          method="bounded", options={"xatol": 1e-13})
    if res.success and -res.fun > best_f:
        best_s, best_f = float(res.x), float(-res.fun)
    for end in (0.0, 1.0):
        fe = fun(end)
        if fe > best_f:
            best_s, best_f = end, fe
    return best_s, best_f


def chernoff_sum(terms: Sequence, curve_points: int = 0) -> ChernoffResult:
    """Maximise ``s -> -sum_k w_k log tr(rho_k^s sigma_k^(1-s))`` over ``[0, 1]``.

    ``terms`` is a sequence of ``(weight, ChernoffKernel)``; zero weights are
    ignored.  The objective is concave in ``s``.
    """
    active = [(float(w), k) for w, k in terms if w > 0]
    if any(k.orthogonal for _, k in active):
        return ChernoffResult(INF, 0.5)
    if not active:
        return ChernoffResult(0.0, 0.5)

    def objective(s):
        return float(-sum(w * k.log_trace(s) for w, k in active))

    s_star, val = _maximize_concave(objective)
    samples = ()
    if curve_points:
        grid = np.linspace(0.0, 1.0, curve_points)
        samples = tuple((float(s), objective(s)) for s in grid)
    return ChernoffResult(max(val, 0.0), s_star, samples)


def chernoff_objective(rho, sigma, s: float) -> float:
    return float(-ChernoffKernel.from_states(rho, sigma).log_trace(s))


def chernoff(rho, sigma, curve_points: int = 0) -> ChernoffResult:
    """Chernoff information ``sup_s -log tr(rho^s sigma^(1-s))``."""
    return chernoff_sum([(1.0, ChernoffKernel.from_states(rho, sigma))], curve_points)


def min_chernoff_trace(rho, sigma) -> float:
    """``inf_s tr(rho^s sigma^(1-s))``, i.e. ``exp(-chernoff)``."""
    res = chernoff(rho, sigma)
    return 0.0 if res.is_infinite else math.exp(-res.value)


def conditional_chernoff(theta, theta_prime, P: Mapping, scen, curve_points: int = 0) -> ChernoffResult:
    """Conditional Chernoff information of two parameters under input law ``P``.

    One common ``s`` is optimised for the whole ``P``-weighted sum; this is
    not the ``P``-average of per-symbol Chernoff informations.

    Args:
        theta, theta_prime: parameter ids of ``scen``.
        P: mapping symbol -> probability over ``scen.alphabet``.
        scen: object exposing ``params``, ``alphabet`` and
            ``chernoff_kernel(theta, theta_prime, u)`` (see ``CqScenario``).
    """
    for t in (theta, theta_prime):
        if t not in scen.params:
            raise UnknownParameter(t)
    for u in P:
        if u not in scen.alphabet:
            raise UnknownSymbol(u)
    total = sum(P.values())
    if any(p < -1e-12 for p in P.values()) or abs(total - 1.0) > 1e-9:
        raise ValueError("P is not a probability mass function")
    terms = [(p, scen.chernoff_kernel(theta, theta_prime, u)) for u, p in P.items() if p > 0]
    return chernoff_sum(terms, curve_points)


def continuity_bound(epsilon: float, n: int, dimB: int, lambda_min_innocent: float) -> float:
    """Bound on ``|D(rho||sigma0^n) - D(sigma||sigma0^n)|`` when half the trace distance is ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if not 0.0 < lambda_min_innocent <= 1.0:
        raise ValueError("lambda_min must lie in (0, 1]")
    return epsilon * math.log(dimB / lambda_min_innocent ** 2) * n + binary_entropy(epsilon)


def expansion_check(rho1, rho0, alphas: Sequence[float]) -> list:
    """Rows ``(alpha, D(alpha rho1 + (1-alpha) rho0 || rho0), alpha^2 eta / 2, residual)``."""
    a1, a0 = _same_shape(rho1, rho0)
    e = eta(a1, a0)
    rows = []
    for alpha in alphas:
        if not 0.0 <= alpha <= 0.5:
            raise ValueError(f"alpha={alpha} outside [0, 0.5]")
        d = rel_entropy(alpha * a1 + (1.0 - alpha) * a0, a0) if alpha > 0 else 0.0
        quad = alpha ** 2 * e / 2.0
        rows.append((float(alpha), d, quad, abs(d - quad)))
    return rows


@dataclass(frozen=True)
class NSEmbedding:
    """Classical pair distribution over eigen-index pairs ``(y, y')``.

    ``probs[y, y']`` with ``y`` indexing the eigenbasis of the first state
    and ``y'`` that of the second.
    """

    probs: np.ndarray

    def __post_init__(self):
        if np.any(self.probs < -1e-12) or abs(float(self.probs.sum()) - 1.0) > 1e-10:
            raise ValueError("embedding is not a probability mass function")


def ns_embed(rho, sigma):
    """Nussbaum-Szkola pair distributions of two states.

    Returns ``(q_rho_sigma, q_sigma_rho)`` with
    ``q_rho_sigma[y, y'] = p(y) |<e_y|f_y'>|^2`` and
    ``q_sigma_rho[y, y'] = q(y') |<e_y|f_y'>|^2`` on the same index grid, so
    that ``sum min(q_rho_sigma, q_sigma_rho)`` is their overlap.
    """
    a, b = _same_shape(rho, sigma)
    p, u = _spectrum(a)
    q, v = _spectrum(b)
    p, q = p / p.sum(), q / q.sum()
    w = np.abs(u.conj().T @ v) ** 2
    return NSEmbedding(p[:, None] * w), NSEmbedding(q[None, :] * w)


def ns_inequality_sides(rho, sigma):
    """``(1 - ||rho - sigma||_1 / 2, (1 - ||q - q'||_1 / 2) / 2)``; the first dominates."""
    q1, q2 = ns_embed(rho, sigma)
    lhs = 1.0 - 0.5 * trace_norm(as_matrix(rho) - as_matrix(sigma))
    rhs = 0.5 * (1.0 - 0.5 * float(np.abs(q1.probs - q2.probs).sum()))
    return lhs, rhs
