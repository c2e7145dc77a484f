"""Real embedding of operators, channel matrices and the tangent-space boundedness test.

Operators on ``A`` (dimension ``d``) are embedded into ``R^(2 d^2)`` row-major
over ``(i, j)`` with the real part of each entry immediately followed by its
imaginary part.  The tangent space of the pure-state manifold at the first
basis vector is spanned by ``f(E_j1 + E_1j)`` and ``f(i E_j1 - i E_1j)`` for
``j = 2..d``.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionMismatch, InvalidState
from .qmat import as_matrix, projector, random_density, random_pure_state, random_unitary, trace_norm
from .qmat import unitary_to_first_basis_vector

NULL_TOL = 1e-10
KRAUS_TOL = 1e-9
COLLISION_TOL = 1e-8


@dataclass(frozen=True)
class KrausChannel:
    """Channel ``X -> sum_k K_k X K_k^dagger``; every ``K_k`` has shape ``(d_out, d_in)``."""

    kraus_ops: tuple

    def __post_init__(self):
        ops = tuple(as_matrix(k) for k in self.kraus_ops)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        if len({k.shape for k in ops}) != 1:
            raise DimensionMismatch("Kraus operators have different shapes")
        object.__setattr__(self, "kraus_ops", ops)
        gram = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(gram - np.eye(gram.shape[0]))) > KRAUS_TOL:
            raise InvalidState("Kraus operators are not trace preserving")

    @property
    def d_in(self) -> int:
        return self.kraus_ops[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.kraus_ops[0].shape[0]

    def __call__(self, x) -> np.ndarray:
        x = as_matrix(x)
        return sum(k @ x @ k.conj().T for k in self.kraus_ops)

    def then(self, other: "KrausChannel") -> "KrausChannel":
        """``other`` applied after ``self``."""
        return KrausChannel(tuple(b @ a for b in other.kraus_ops for a in self.kraus_ops))

    def apply_on(self, rho, dims: Sequence[int], site: int) -> np.ndarray:
        """Apply the channel to tensor factor ``site`` of ``rho`` (other factors untouched)."""
        dims = list(dims)
        if dims[site] != self.d_in:
            raise DimensionMismatch(f"factor {site} has dimension {dims[site]}, channel expects {self.d_in}")
        n = len(dims)
        t = as_matrix(rho).reshape(dims + dims)
        out_dims = dims.copy()
        out_dims[site] = self.d_out
        res = 0
        for k in self.kraus_ops:
            y = np.moveaxis(np.tensordot(k, t, axes=([1], [site])), 0, site)
            y = np.moveaxis(np.tensordot(y, k.conj(), axes=([n + site], [1])), -1, n + site)
            res = res + y
        size = int(np.prod(out_dims))
        return res.reshape(size, size)

    def tensor_power_apply(self, rho, m: int) -> np.ndarray:
        """``E^(x)m (rho)`` for ``rho`` on ``A^(x)m``, one factor at a time."""
        dims = [self.d_in] * m
        out = as_matrix(rho)
        for i in range(m):
            out = self.apply_on(out, dims, i)
            dims[i] = self.d_out
        return out


def identity_channel(d: int) -> KrausChannel:
    return KrausChannel((np.eye(d),))


def unitary_channel(u) -> KrausChannel:
    return KrausChannel((as_matrix(u),))


def dephasing_channel(d: int) -> KrausChannel:
    """Complete dephasing ``X -> diag(X)``."""
    return KrausChannel(tuple(projector(np.eye(d)[i]) for i in range(d)))


def amplitude_damping(gamma: float) -> KrausChannel:
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]])
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel((k0, k1))


def depolarizing(p: float, d: int = 2) -> KrausChannel:
    """``X -> (1 - p) X + p tr(X) I / d`` via the Weyl (clock-shift) Kraus set."""
    omega = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(omega ** np.arange(d))
    ops = []
    for a in range(d):
        for b in range(d):
            w = np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            coef = 1.0 - p + p / d ** 2 if a == 0 and b == 0 else p / d ** 2
            if coef > 0:
                ops.append(math.sqrt(coef) * w)
    return KrausChannel(tuple(ops))


def embed(x) -> np.ndarray:
    """``f(X)``: row-major entries, real part then imaginary part."""
    x = as_matrix(x)
    return np.stack([x.real, x.imag], axis=-1).ravel()


def unembed(vec, d: int) -> np.ndarray:
    v = np.asarray(vec, dtype=float).reshape(d, d, 2)
    return v[..., 0] + 1j * v[..., 1]


def tangent_basis(d: int) -> np.ndarray:
    """``2d - 2`` vectors (rows) spanning the tangent space at the first basis vector."""
    rows = []
    for j in range(1, d):
        x = np.zeros((d, d), dtype=np.complex128)
        x[j, 0], x[0, j] = 1.0, 1.0
        y = np.zeros((d, d), dtype=np.complex128)
        y[j, 0], y[0, j] = 1j, -1j
        rows += [embed(x), embed(y)]
    return np.array(rows).reshape(2 * d - 2, 2 * d * d)


def tangent_coordinates(v) -> np.ndarray:
    """Coefficients of ``v e_1^dagger + e_1 v^dagger`` in :func:`tangent_basis` for ``v`` orthogonal to ``e_1``."""
    v = np.asarray(v, dtype=np.complex128)
    return np.stack([v[1:].real, v[1:].imag], axis=-1).ravel()


def channel_real_matrix(E: KrausChannel, d: int = None, d_w: int = None) -> np.ndarray:
    """Real matrix ``M`` (``2 d_w^2 x 2 d^2``) with ``M f(X) = f(E(X))``."""
    d = E.d_in if d is None else d
    d_w = E.d_out if d_w is None else d_w
    if (d, d_w) != (E.d_in, E.d_out):
        raise DimensionMismatch(f"channel maps {E.d_in} -> {E.d_out}, asked for {d} -> {d_w}")
    cols = [embed(E(unembed(e, d))) for e in np.eye(2 * d * d)]
    return np.array(cols).T


def kernel_basis(M, tol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal null-space basis (columns); singular values at most ``tol * sigma_max`` count as zero."""
    M = np.asarray(M, dtype=float)
    if tol <= 0:
        raise ValueError("tol must be positive")
    _, s, vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return vt[rank:].T.copy()


def numerical_rank(M, tol: float = NULL_TOL) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0


def conjugated(E: KrausChannel, w) -> KrausChannel:
    """``X -> E(W^dagger X W)``: the channel seen in the basis where ``W`` maps the innocent state to ``e_1``."""
    w = as_matrix(w)
    return KrausChannel(tuple(k @ w.conj().T for k in E.kraus_ops))


@dataclass(frozen=True)
class PreconditionReport:
    """Randomised search for ``E(rho) = E(|0><0|)`` with ``rho`` away from ``|0><0|``."""

    min_ratio: float
    collision: bool
    samples: int


@dataclass(frozen=True)
class BoundednessVerdict:
    """Outcome of the tangent-space test.

    ``witness`` is ``f`` of a nonzero Hermitian tangent operator in the
    kernel (original basis); ``witness_direction`` is the ket ``v``
    orthogonal to the innocent state generating it.
    """

    verdict: str
    kernel_dim: int
    intersection_dim: int
    witness: np.ndarray = None
    witness_direction: np.ndarray = None
    precondition: PreconditionReport = None


def _trace_dist_ratio(E, rho, zero, e_zero) -> float:
    den = trace_norm(rho - zero)
    return trace_norm(E(rho) - e_zero) / den if den > 0 else math.inf


def check_precondition(E: KrausChannel, innocent, samples: int = 10_000, seed: int = 0,
                       refine: int = 5, max_overlap: float = 0.99) -> PreconditionReport:
    """Search for states ``rho`` with ``<0|rho|0> <= max_overlap`` and ``E(rho) ~ E(|0><0|)``.

    Random pure and mixed states are scored by
    ``||E(rho) - E(0)||_1 / ||rho - 0||_1``; the best few are refined with
    Nelder-Mead.  A minimum below ``1e-8`` is reported as a collision.
    """
    rng = np.random.default_rng(seed)
    d = E.d_in
    zero = projector(innocent)
    e_zero = E(zero)
    psi0 = np.asarray(innocent, dtype=np.complex128)
    psi0 = psi0 / np.linalg.norm(psi0)

    def score(rho):
        if np.real(psi0.conj() @ rho @ psi0) > max_overlap:
            return math.inf
        return _trace_dist_ratio(E, rho, zero, e_zero)

    cands = []
    for i in range(samples):
        if i % 2:
            rho = random_density(d, rng)
        else:
            rho = projector(random_pure_state(d, rng))
        cands.append((score(rho), rho))
    cands.sort(key=lambda c: c[0])
    best = cands[0][0]

    def from_params(z):
        g = (z[: d * d] + 1j * z[d * d:]).reshape(d, d)
        r = g @ g.conj().T
        return r / np.real(np.trace(r))

    for _, rho in cands[:refine]:
        w, v = np.linalg.eigh(rho)
        g = v * np.sqrt(np.clip(w, 0.0, None))
        z0 = np.concatenate([g.real.ravel(), g.imag.ravel()])
        res = minimize(lambda z: score(from_params(z)) if np.linalg.norm(z) > 1e-9 else math.inf,
                       z0, method="Nelder-Mead", options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-14})
        best = min(best, float(res.fun))
    return PreconditionReport(best, best < COLLISION_TOL, samples)


def lemma5_check(E: KrausChannel, innocent=None, tol: float = NULL_TOL,
                 precondition_samples: int = 10_000, seed: int = 0) -> BoundednessVerdict:
    """Decide whether the trace-distance ratio near the innocent state is bounded.

    The channel is first re-expressed in a basis whose first vector is the
    innocent state.  With ``K`` a null-space basis of the channel matrix and
    ``T`` the tangent basis, the ratio is unbounded iff
    ``dim K + (2d - 2) - rank [K | T] > 0``.
    """
    d = E.d_in
    innocent = np.eye(d)[0] if innocent is None else np.asarray(innocent, dtype=np.complex128)
    w = unitary_to_first_basis_vector(innocent)
    M = channel_real_matrix(conjugated(E, w))
    K = kernel_basis(M, tol)
    T = tangent_basis(d).T
    kd = K.shape[1]
    inter = kd + T.shape[1] - numerical_rank(np.hstack([K, T]), tol) if kd else 0
    pre = check_precondition(E, innocent, precondition_samples, seed) if precondition_samples else None
    if inter <= 0:
        return BoundednessVerdict("bounded", kd, 0, precondition=pre)
    # K c = T b  <=>  [K | -T] (c, b) = 0
    null = kernel_basis(np.hstack([K, -T]), tol)
    b = null[kd:, 0]
    x_rot = unembed(T @ b, d)
    x = w.conj().T @ x_rot @ w
    v_rot = np.zeros(d, dtype=np.complex128)
    v_rot[1:] = b[0::2] + 1j * b[1::2]
    v = w.conj().T @ v_rot
    return BoundednessVerdict("unbounded", kd, int(inter), embed(x), v / np.linalg.norm(v), pre)


@dataclass(frozen=True)
class ProbeResult:
    """Ratio samples ``||rho - 0||_1 / ||E(rho) - E(0)||_1`` at distances ``t = 10^-k``.

    ``rows`` are ``(k, t, max over random directions, witness ratio or nan)``.
    """

    rows: tuple
    running_max: float
    growth_per_decade: tuple
    signature: str
    columns: tuple = field(default=("k", "t", "max_random_ratio", "witness_ratio"))


def _delta_along(innocent, v, s):
    # |phi><phi| - |0><0| for phi = cos(a)|0> + sin(a) v, sin(a) = s, without cancellation
    c = math.sqrt(1.0 - s * s)
    zero, vv = projector(innocent), projector(v)
    cross = np.outer(innocent, v.conj())
    return s * s * (vv - zero) + s * c * (cross + cross.conj().T)


GROWTH_RTOL = 1e-6


def ratio_probe(E: KrausChannel, innocent=None, samples: int = 16, seed: int = 0,
                witness_direction=None, decades: int = 6) -> ProbeResult:
    """Empirical trace-distance ratio along pure states approaching the innocent state.

    At scale ``k`` the state is ``cos(a)|0> + sin(a)|v>`` with trace distance
    ``sin(a) = 10^-k`` from the innocent state.  Directions are fixed per call (random unit kets orthogonal to the
    innocent state, plus ``witness_direction``) and reused at every scale.
    The signature is ``unbounded`` when the tracked ratio grows at least
    tenfold per decade (relative slack ``1e-6`` for rounding), ``bounded`` when its max/min over decades is at most
    2, else ``inconclusive``.  The tracked series is the witness ratio when a
    witness is given, otherwise the per-scale maximum.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d = E.d_in
    innocent = np.eye(d)[0].astype(np.complex128) if innocent is None else np.asarray(innocent, dtype=np.complex128)
    innocent = innocent / np.linalg.norm(innocent)
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(samples):
        v = random_pure_state(d, rng)
        v = v - innocent * (innocent.conj() @ v)
        dirs.append(v / np.linalg.norm(v))
    rows, tracked = [], []
    for k in range(1, decades + 1):
        t = 10.0 ** (-k)
        rand = max(_inv_ratio(E, _delta_along(innocent, v, t)) for v in dirs)
        wit = math.nan
        if witness_direction is not None:
            w = np.asarray(witness_direction, dtype=np.complex128)
            w = w - innocent * (innocent.conj() @ w)
            wit = _inv_ratio(E, _delta_along(innocent, w / np.linalg.norm(w), t))
        rows.append((k, t, rand, wit))
        tracked.append(wit if witness_direction is not None else rand)
    tracked = np.array(tracked)
    growth = tuple(float(tracked[i + 1] / tracked[i]) for i in range(len(tracked) - 1))
    if all(g >= 10.0 * (1.0 - GROWTH_RTOL) for g in growth):
        sig = "unbounded"
    elif np.max(tracked) <= 2.0 * np.min(tracked):
        sig = "bounded"
    else:
        sig = "inconclusive"
    running = float(max(max(r[2], r[3] if not math.isnan(r[3]) else 0.0) for r in rows))
    return ProbeResult(tuple(rows), running, growth, sig)


def _inv_ratio(E, delta) -> float:
    num = trace_norm(delta)
    den = trace_norm(E(delta))
    return num / den if den > 0 else math.inf


def random_channel(d_in: int, d_out: int, n_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Random channel from an isometry ``A -> W (x) C`` cut into Kraus blocks."""
    u = random_unitary(d_out * n_kraus, rng)
    iso = u[:, :d_in]
    return KrausChannel(tuple(iso[i * d_out:(i + 1) * d_out] for i in range(n_kraus)))
