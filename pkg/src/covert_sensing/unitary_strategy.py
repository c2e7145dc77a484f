"""Zero-error block strategies for sensing unitaries, covertness certificates and converse probes."""

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import schur

from .discriminate import pgm
from .divergence import chi2, rel_entropy, rel_entropy_to_power
from .errors import AssumptionViolated, BlockTooLong, IdentityUnitary, MNotFound, ScaleExceeded
from .geometry import KrausChannel, lemma5_check, ratio_probe
from .qmat import as_matrix, kron_power, lambda_min, projector, support_projector, tensor, trace_norm

UNITARY_TOL = 1e-10
PHASE_TOL = 1e-9
OVERLAP_TOL = 1e-10
SUPPORT_TOL = 1e-9
MAX_DIM = 4096
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class UnitaryScenario:
    """Unitaries ``U_theta`` on ``A``, Willie's channel ``E: A -> W`` and the innocent ket."""

    params: tuple
    unitaries: Mapping
    willie: KrausChannel
    innocent: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        us = {}
        for t in self.params:
            u = as_matrix(self.unitaries[t])
            if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > UNITARY_TOL:
                raise ValueError(f"U[{t!r}] is not unitary")
            us[t] = u
        object.__setattr__(self, "unitaries", us)
        if len({u.shape for u in us.values()}) != 1:
            raise ValueError("unitaries have different dimensions")
        d = us[self.params[0]].shape[0]
        if self.willie.d_in != d:
            raise ValueError(f"Willie channel acts on dimension {self.willie.d_in}, unitaries on {d}")
        ket = np.eye(d, dtype=np.complex128)[0] if self.innocent is None else np.asarray(self.innocent, dtype=np.complex128)
        object.__setattr__(self, "innocent", ket / np.linalg.norm(ket))

    @property
    def d(self) -> int:
        return self.unitaries[self.params[0]].shape[0]

    @property
    def d_w(self) -> int:
        return self.willie.d_out

    def pairs(self) -> list:
        """Unordered pairs in ``params`` order."""
        return list(itertools.combinations(self.params, 2))

    def relative(self, a, b) -> np.ndarray:
        """``V = U_a^dagger U_b``."""
        return self.unitaries[a].conj().T @ self.unitaries[b]

    def innocent_output(self) -> np.ndarray:
        return self.willie(projector(self.innocent))


def _wrap(x):
    return np.mod(x, TWO_PI)


def eigenphases(V):
    """Eigenphases in ``[0, 2 pi)`` and orthonormal eigenvectors (columns) via the complex Schur form."""
    T, Z = schur(as_matrix(V), output="complex")
    return _wrap(np.angle(np.diag(T))), Z


def phase_spread(V) -> float:
    """Largest chord between eigenvalues; zero iff ``V`` is a multiple of the identity."""
    lam = np.exp(1j * eigenphases(V)[0])
    return float(np.max(np.abs(lam[:, None] - lam[None, :])))


def origin_in_hull(phases, tol: float = PHASE_TOL) -> bool:
    """True iff the unit-circle points ``exp(i phases)`` do not lie in an open half-plane."""
    p = np.sort(_wrap(np.asarray(phases, dtype=float)))
    if p.size == 0:
        return False
    gaps = np.diff(np.concatenate([p, [p[0] + TWO_PI]]))
    return bool(np.max(gaps) <= math.pi + tol)


def phase_sums(phases, m: int):
    """Distinct ``m``-fold eigenphase sums (mod 2 pi) with one representative multi-index each."""
    d = len(phases)
    out = []
    for combo in itertools.combinations_with_replacement(range(d), m):
        out.append((float(_wrap(sum(phases[i] for i in combo))), combo))
    return out


def _probe_weights(sums, tol: float = PHASE_TOL):
    """Convex weights on at most three phases whose unit vectors average to zero."""
    ph = np.array([s for s, _ in sums])
    n = ph.size
    for i in range(n):
        for j in range(i + 1, n):
            gap = abs(_wrap(ph[i] - ph[j] + math.pi) - math.pi)
            if abs(gap - math.pi) <= tol:
                return [i, j], np.array([0.5, 0.5])
    z = np.exp(1j * ph)
    for i, j, k in itertools.combinations(range(n), 3):
        a = np.array([[(z[i] - z[k]).real, (z[j] - z[k]).real], [(z[i] - z[k]).imag, (z[j] - z[k]).imag]])
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        w12 = np.linalg.solve(a, [-z[k].real, -z[k].imag])
        w = np.array([w12[0], w12[1], 1.0 - w12.sum()])
        if np.all(w >= -1e-12):
            w = np.clip(w, 0.0, None)
            return [i, j, k], w / w.sum()
    return None


@dataclass(frozen=True)
class Orthogonalizer:
    """Probe ``sum_k sqrt(w_k) |z_{k_1}> (x) ... (x) |z_{k_m}>`` on ``A^(x)m``.

    ``eigvecs`` holds the eigenvectors ``z`` of ``V`` as columns;
    ``indices`` are the multi-indices and ``phases`` the matching eigenphase
    sums.
    """

    m: int
    phases: tuple
    weights: tuple
    indices: tuple
    eigvecs: np.ndarray

    @property
    def d(self) -> int:
        return self.eigvecs.shape[0]

    def state(self, max_dim: int = MAX_DIM) -> np.ndarray:
        if self.d ** self.m > max_dim:
            raise ScaleExceeded(f"probe dimension {self.d}^{self.m} exceeds {max_dim}")
        return sum(math.sqrt(w) * tensor(*[self.eigvecs[:, i] for i in idx])
                   for w, idx in zip(self.weights, self.indices))

    def overlap(self, W) -> complex:
        """``<nu| W^(x)m |nu>`` from single-copy matrix elements only."""
        g = self.eigvecs.conj().T @ as_matrix(W) @ self.eigvecs
        total = 0j
        for wa, ia in zip(self.weights, self.indices):
            for wb, ib in zip(self.weights, self.indices):
                total += math.sqrt(wa * wb) * np.prod([g[p, q] for p, q in zip(ia, ib)])
        return complex(total)


def find_orthogonalizer(V, m_max: int = 64) -> Orthogonalizer:
    """Smallest ``m`` and a probe with ``<nu|V^(x)m|nu> = 0``.

    ``m`` is the least block length whose ``m``-fold eigenphase sums are not
    confined to an open half-plane.

    Raises:
        IdentityUnitary: ``V`` is a global phase times the identity.
        MNotFound: no ``m <= m_max`` works.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    phases, Z = eigenphases(V)
    if phase_spread(V) <= 1e-10:
        raise IdentityUnitary("V is proportional to the identity")
    for m in range(1, m_max + 1):
        sums = phase_sums(phases, m)
        if not origin_in_hull([s for s, _ in sums]):
            continue
        found = _probe_weights(sums)
        if found is None:
            continue
        idx, w = found
        orth = Orthogonalizer(m, tuple(sums[i][0] for i in idx), tuple(float(x) for x in w),
                              tuple(sums[i][1] for i in idx), Z)
        if abs(orth.overlap(V)) > OVERLAP_TOL:
            continue
        return orth
    raise MNotFound(f"no orthogonalizer with m <= {m_max}")


@dataclass(frozen=True)
class BlockStrategy:
    """Composite probe over all unordered pairs, repeated in ``ell`` sub-blocks.

    ``m_pairs`` maps each pair to its orthogonalizer, tensored in the order
    of ``pair_order``.
    """

    m_pairs: dict
    pair_order: tuple
    m: int
    n: int
    ell: int
    d: int

    def nu(self, max_dim: int = MAX_DIM) -> np.ndarray:
        if self.d ** self.m > max_dim:
            raise ScaleExceeded(f"probe dimension {self.d}^{self.m} exceeds {max_dim}")
        return tensor(*[self.m_pairs[p].state(max_dim) for p in self.pair_order])

    def document(self) -> dict:
        rows = []
        for p in self.pair_order:
            o = self.m_pairs[p]
            rows.append({"pair": [str(p[0]), str(p[1])], "m": o.m, "phases": list(o.phases),
                         "weights": list(o.weights), "eigenvector_indices": [list(i) for i in o.indices]})
        return {"m": self.m, "n": self.n, "ell": self.ell, "pairs": rows}


def check_support_condition(scen: UnitaryScenario, tol: float = SUPPORT_TOL) -> float:
    """Largest ``|tr((I - Pi_0) E(|i><j|))|`` over the matrix-unit basis of ``L(A)``."""
    pi0 = support_projector(scen.innocent_output())
    comp = np.eye(pi0.shape[0]) - pi0
    d = scen.d
    worst = 0.0
    for i in range(d):
        for j in range(d):
            x = np.zeros((d, d), dtype=np.complex128)
            x[i, j] = 1.0
            worst = max(worst, abs(np.trace(comp @ scen.willie(x))))
    return float(worst)


def build_block_strategy(scen: UnitaryScenario, n: int, m_max: int = 64) -> BlockStrategy:
    """Orthogonalizers for every unordered pair, combined into one block of length ``m``.

    Raises:
        AssumptionViolated: two unitaries agree up to phase, or Willie's
            outputs leave the support of the innocent output.
        BlockTooLong: ``m > n``.
    """
    leak = check_support_condition(scen)
    if leak > SUPPORT_TOL:
        raise AssumptionViolated(f"Willie outputs leave the innocent support (leak {leak:.3g})")
    orth = {}
    order = tuple(scen.pairs())
    for a, b in order:
        try:
            orth[(a, b)] = find_orthogonalizer(scen.relative(a, b), m_max)
        except IdentityUnitary as exc:
            raise IdentityUnitary(f"U[{a!r}] and U[{b!r}] coincide up to phase") from exc
    m = sum(o.m for o in orth.values())
    if m > n:
        raise BlockTooLong(f"block length {m} exceeds n = {n}")
    return BlockStrategy(orth, order, m, n, n // m, scen.d)


def strategy_zero_error_check(strategy: BlockStrategy, scen: UnitaryScenario) -> dict:
    """``|<nu| (U_a^dagger U_b)^(x)m |nu>|`` for every unordered pair.

    The overlap factorises over the pair blocks of the probe; the block
    belonging to ``(a, b)`` itself contributes zero.
    """
    out = {}
    for a, b in scen.pairs():
        V = scen.relative(a, b)
        val = 1.0
        for p in strategy.pair_order:
            val *= abs(strategy.m_pairs[p].overlap(V))
        out[(a, b)] = float(val)
    return out


def _block_mixture(block_state: np.ndarray, base: np.ndarray, m: int, n: int, ell: int):
    """``(1/ell) sum_i base^(x)(i-1)m (x) block_state (x) base^(x)(n-im)``."""
    total = 0
    for i in range(ell):
        total = total + tensor(kron_power(base, i * m), block_state, kron_power(base, n - (i + 1) * m))
    return total / ell


def strategy_input_state(strategy: BlockStrategy, scen: UnitaryScenario, max_dim: int = MAX_DIM) -> np.ndarray:
    """Alice's ``n``-use input: the probe in a uniformly chosen sub-block, innocent elsewhere."""
    if scen.d ** strategy.n > max_dim:
        raise ScaleExceeded(f"dim A^n = {scen.d}^{strategy.n} exceeds {max_dim}")
    nu = projector(strategy.nu(max_dim))
    return _block_mixture(nu, projector(scen.innocent), strategy.m, strategy.n, strategy.ell)


@dataclass(frozen=True)
class CovertnessCertificate:
    """Covertness bounds in nats: ``chi2 / ell``, the coarse chain value, and the exact metric if computed."""

    chi2_bound: float
    coarse_bound: float
    exact: float = None


def covertness_certificate(strategy: BlockStrategy, scen: UnitaryScenario, exact=None,
                           max_dim: int = MAX_DIM) -> CovertnessCertificate:
    """Certify the covertness of a block strategy.

    Args:
        exact: ``True`` forces the exact ``D(E^n(phi) || E(0)^n)`` (raising
            ``ScaleExceeded`` when ``dim W ** n > max_dim``), ``False`` skips
            it and ``None`` computes it only when within budget.
    """
    E = scen.willie
    sigma0 = scen.innocent_output()
    m, n, ell = strategy.m, strategy.n, strategy.ell
    lam = lambda_min(sigma0)
    coarse = m / ((n - m) * lam ** m) if n > m and lam > 0 else math.inf
    if scen.d ** m > max_dim or scen.d_w ** m > max_dim:
        raise ScaleExceeded(f"block dimension exceeds {max_dim}")
    out_block = E.tensor_power_apply(projector(strategy.nu(max_dim)), m)
    chi = chi2(out_block, kron_power(sigma0, m)) / ell
    value = None
    within = scen.d_w ** n <= max_dim
    if exact or (exact is None and within):
        if not within:
            raise ScaleExceeded(f"dim W^n = {scen.d_w}^{n} exceeds {max_dim}")
        mix = _block_mixture(out_block, sigma0, m, n, ell)
        value = rel_entropy_to_power(mix, sigma0, n)
    return CovertnessCertificate(float(chi), float(coarse), value)


def global_states(strategy: BlockStrategy, scen: UnitaryScenario, max_dim: int = MAX_DIM) -> dict:
    """Bob's received states with Alice's sub-block choice kept in a classical register.

    ``rho_theta = (1/ell) sum_i |i><i| (x) U_theta^(x)n psi_i U_theta^(x)n dagger``
    where ``psi_i`` carries the probe in sub-block ``i``.
    """
    d, m, n, ell = scen.d, strategy.m, strategy.n, strategy.ell
    if ell * d ** n > max_dim:
        raise ScaleExceeded(f"register dimension {ell} * {d}^{n} exceeds {max_dim}")
    nu = strategy.nu(max_dim)
    zero = scen.innocent
    out = {}
    for t in scen.params:
        un = scen.unitaries[t]
        blocks = []
        for i in range(ell):
            psi = tensor(*([zero] * (i * m) + [nu] + [zero] * (n - (i + 1) * m)))
            psi = kron_power(un, n) @ psi
            blocks.append(projector(psi) / ell)
        rho = np.zeros((ell * d ** n, ell * d ** n), dtype=np.complex128)
        for i, b in enumerate(blocks):
            s = slice(i * d ** n, (i + 1) * d ** n)
            rho[s, s] = b
        out[t] = rho
    return out


def global_pgm_error(strategy: BlockStrategy, scen: UnitaryScenario, max_dim: int = MAX_DIM) -> float:
    _, res = pgm(global_states(strategy, scen, max_dim))
    return res.error


@dataclass(frozen=True)
class ConverseProbe:
    """Computable quantities of the unitary converse chain (nats where applicable).

    ``delta_floor`` is ``(1 - 2 eps)^4 / (8 B^2 n)``: the covertness any
    strategy with worst-case error ``eps < 1/2`` must pay.
    """

    step3_sum: float
    step2_value: float
    B: float
    delta_floor: float = None
    violation: bool = None


def converse_probes(phi_marginals: Sequence, scen: UnitaryScenario, epsilon_claim: float = None,
                    delta_claim: float = None, B: float = None, probe_samples: int = 16,
                    seed: int = 0) -> ConverseProbe:
    """Evaluate the converse chain on single-use input marginals.

    ``step3_sum = sum_i D(E(phi_i) || E(0))`` lower-bounds the covertness of
    any input with these marginals, and
    ``step2_value = sqrt(sum_i ||0 - phi_i||_1)`` upper-bounds
    ``||phi - 0^n||_1 / sqrt(2)``.  ``B`` defaults to the geometry probe's
    running maximum (``inf`` for an unbounded verdict).
    """
    E = scen.willie
    zero = projector(scen.innocent)
    sigma0 = E(zero)
    n = len(phi_marginals)
    step3 = sum(rel_entropy(E(as_matrix(p)), sigma0) for p in phi_marginals)
    step2 = math.sqrt(sum(trace_norm(zero - as_matrix(p)) for p in phi_marginals))
    if B is None:
        verdict = lemma5_check(E, scen.innocent, precondition_samples=0)
        if verdict.verdict == "unbounded":
            B = math.inf
        else:
            B = ratio_probe(E, scen.innocent, probe_samples, seed).running_max
    floor, violation = None, None
    if epsilon_claim is not None:
        has_pair = any(trace_norm(projector(scen.unitaries[a] @ scen.innocent)
                                  - projector(scen.unitaries[b] @ scen.innocent)) <= 1e-9
                       for a, b in scen.pairs())
        if epsilon_claim < 0.5 and has_pair and math.isfinite(B) and n > 0:
            floor = (1.0 - 2.0 * epsilon_claim) ** 4 / (8.0 * B ** 2 * n)
        else:
            floor = 0.0
        if delta_claim is not None:
            violation = delta_claim < floor
    return ConverseProbe(float(step3), step2, float(B), floor, violation)


def perturbed(orth: Orthogonalizer, weights: Sequence[float]) -> Orthogonalizer:
    """Same eigenvectors with different (normalised) weights."""
    w = np.asarray(weights, dtype=float)
    return replace(orth, weights=tuple(float(x) for x in w / w.sum()))
