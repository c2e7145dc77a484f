"""Achievable covert exponent for cq scenarios, constrained input laws and bound kernels.

The additive slack terms of the underlying bounds carry unknown constants;
reports expose only the computable "kernel" values and describe the slack
symbolically in :data:`SLACK_TERMS`.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp

from .divergence import INF, binary_entropy, chernoff_sum, eta, rel_entropy, rel_entropy_to_power
from .errors import (
    AssumptionViolated,
    DegenerateAlpha,
    EmptyTypeBall,
    NoZeroEquivalentPair,
    ScaleExceeded,
    SupportViolation,
)
from .qmat import lambda_min, tensor
from .scenario import CqScenario, check_assumptions, zero_equivalent_pairs
from .simplex import simplex_grid, softmax

MAX_TYPES = 200_000
MAX_EXACT_DIM = 4096

SLACK_TERMS = {
    "achievability_error": "+ O(log n)  [constant depends on dim B, |U|, |Theta|]",
    "type_ball_exponent": "- O(n alpha zeta |U|)",
    "converse_error": "- O(log n / n)",
    "converse_covertness": "+ O(alpha_n^3)",
}


def _as_pmf(P: Mapping, alphabet: Sequence) -> dict:
    out = {u: float(P.get(u, 0.0)) for u in alphabet}
    extra = set(P) - set(alphabet)
    if extra:
        raise KeyError(f"symbols {sorted(map(str, extra))} not in alphabet")
    if any(v < -1e-12 for v in out.values()) or abs(sum(out.values()) - 1.0) > 1e-9:
        raise ValueError(f"not a probability mass function: {out}")
    return {u: max(v, 0.0) for u, v in out.items()}


@dataclass(frozen=True)
class ConstrainedInputLaw:
    """i.i.d. law ``P^n`` conditioned on a ball of input types.

    ``types_Q`` holds the admissible types as count vectors (ordered like
    ``alphabet``) that carry positive ``P^n`` mass; ``log_type_mass[k]`` is
    ``log P^n(T_Q)`` for ``types_Q[k]``.
    """

    P: dict
    alpha: float
    zeta: float
    n: int
    alphabet: tuple
    innocent: object
    types_Q: tuple
    log_type_mass: np.ndarray
    mass_A: float
    log_mass_A: float

    @property
    def type_probs(self) -> np.ndarray:
        """``P_U(T_Q)`` for each admissible type."""
        return np.exp(self.log_type_mass - self.log_mass_A)

    def type_pmf(self, k: int) -> dict:
        return {u: c / self.n for u, c in zip(self.alphabet, self.types_Q[k])}

    def sequence_prob(self, seq) -> float:
        """``P_U(u)``: ``P^n(u) / P^n(A)`` on ``A`` and zero elsewhere."""
        if len(seq) != self.n:
            return 0.0
        counts = tuple(sum(1 for s in seq if s == u) for u in self.alphabet)
        if counts not in set(self.types_Q):
            return 0.0
        return math.exp(sum(math.log(self.P[s]) for s in seq) - self.log_mass_A)

    def type_size(self, k: int) -> float:
        c = np.array(self.types_Q[k])
        return float(np.exp(gammaln(self.n + 1) - gammaln(c + 1).sum()))

    def representative(self, k: int) -> tuple:
        """One sequence of type ``k`` (symbols in alphabet order)."""
        return tuple(u for u, c in zip(self.alphabet, self.types_Q[k]) for _ in range(c))


def _ball_ranges(P, alpha, zeta, n, alphabet, innocent):
    slack = 1e-12
    ranges = []
    for u in alphabet:
        if u == innocent:
            continue
        lo = max(0, math.ceil(n * (P[u] - alpha * zeta) - slack))
        hi = min(n, math.floor(n * (P[u] + alpha * zeta) + slack))
        if P[u] == 0.0:
            hi = 0
        ranges.append(range(lo, hi + 1))
    return ranges


def build_input_law(P: Mapping, alpha: float, zeta: float, n: int, innocent=0,
                    max_types: int = MAX_TYPES) -> ConstrainedInputLaw:
    """Enumerate the type ball around ``P`` and normalise ``P^n`` on its union.

    Args:
        P: PMF over the alphabet (its keys), with ``P[innocent] = 1 - alpha``.
        alpha: off-innocent weight; checked against ``P``.
        zeta: relative ball radius; a type ``Q`` is admissible when
            ``|Q(u) - P(u)| <= alpha * zeta`` for every active symbol.
        n: sequence length.

    Raises:
        EmptyTypeBall: no admissible type carries positive mass.
        ScaleExceeded: more than ``max_types`` candidate types.
    """
    alphabet = tuple(P)
    if innocent not in P:
        raise KeyError(f"innocent symbol {innocent!r} missing from P")
    P = _as_pmf(P, alphabet)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha={alpha} must lie in [0, 1)")
    if abs((1.0 - P[innocent]) - alpha) > 1e-9:
        raise ValueError(f"alpha={alpha} inconsistent with P[innocent]={P[innocent]}")
    if zeta <= 0 or n < 1:
        raise ValueError("zeta must be positive and n >= 1")
    ranges = _ball_ranges(P, alpha, zeta, n, alphabet, innocent)
    n_cand = math.prod(len(r) for r in ranges)
    if n_cand > max_types:
        raise ScaleExceeded(f"{n_cand} candidate types exceed the budget of {max_types}")
    active = [u for u in alphabet if u != innocent]
    logp = {u: (math.log(P[u]) if P[u] > 0 else -math.inf) for u in alphabet}
    types, masses = [], []
    grids = np.meshgrid(*[np.arange(r.start, r.stop) for r in ranges], indexing="ij") if ranges else []
    flat = [g.ravel() for g in grids]
    count = flat[0].size if flat else 1
    for idx in range(count):
        ks = {u: int(flat[j][idx]) for j, u in enumerate(active)}
        k0 = n - sum(ks.values())
        if k0 < 0:
            continue
        ks[innocent] = k0
        if any(ks[u] > 0 and P[u] == 0.0 for u in alphabet):
            continue
        counts = tuple(ks[u] for u in alphabet)
        lm = gammaln(n + 1) - sum(gammaln(c + 1) for c in counts)
        lm += sum(c * logp[u] for u, c in zip(alphabet, counts) if c)
        types.append(counts)
        masses.append(float(lm))
    if not types:
        raise EmptyTypeBall(f"no admissible type for n={n}, alpha={alpha}, zeta={zeta}")
    masses = np.array(masses)
    log_mass_a = float(logsumexp(masses))
    return ConstrainedInputLaw(P, float(alpha), float(zeta), int(n), alphabet, innocent,
                               tuple(types), masses, math.exp(log_mass_a), log_mass_a)


def sample_types(law: ConstrainedInputLaw, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices into ``law.types_Q`` drawn with probabilities ``P_U(T_Q)``."""
    p = law.type_probs
    return rng.choice(len(p), size=size, p=p / p.sum())


def sample_input(law: ConstrainedInputLaw, seed) -> tuple:
    """Draw one input sequence exactly from ``P_U``.

    A type is drawn with probability ``P_U(T_Q)``, then its symbol multiset
    is uniformly permuted.  ``seed`` may be an int or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = int(sample_types(law, 1, rng)[0])
    seq = np.array(law.representative(k), dtype=object)
    return tuple(seq[rng.permutation(law.n)])


def dcc(scen: CqScenario, theta, theta_prime, P: Mapping):
    """Conditional Chernoff information with kernels cached on the scenario."""
    terms = [(p, scen.chernoff_kernel(theta, theta_prime, u)) for u, p in P.items() if p > 0]
    return chernoff_sum(terms)


def all_pairs(scen: CqScenario) -> list:
    ps = scen.params
    return [(ps[i], ps[j]) for i in range(len(ps)) for j in range(i + 1, len(ps))]


def achievability_kernel(scen: CqScenario, law: ConstrainedInputLaw, pairs=None) -> dict:
    """``log sum_Q P_U(T_Q) exp(-n D_cc(theta, theta'|Q))`` for each pair.

    The ``O(log n)`` additive term of the achievability bound is not
    included; the values are kernels.
    """
    pairs = all_pairs(scen) if pairs is None else pairs
    logw = law.log_type_mass - law.log_mass_A
    out = {}
    for a, b in pairs:
        expo = []
        for k in range(len(law.types_Q)):
            d = dcc(scen, a, b, law.type_pmf(k)).value
            expo.append(-math.inf if math.isinf(d) else -law.n * d)
        out[(a, b)] = float(logsumexp(logw + np.array(expo))) if np.isfinite(expo).any() else -math.inf
    return out


def _hb_clamped(x: float) -> float:
    return binary_entropy(min(max(x, 0.0), 0.5))


def covertness_bound(scen: CqScenario, law: ConstrainedInputLaw) -> float:
    """Upper bound on the covertness metric of ``P_U``.

    ``max_theta [n D(sum_u P(u) rho_W^u || rho_W^0) + e log(dim W / lambda_min) n
    + Hb(e)]`` with ``e = 2 |U| exp(-alpha n zeta^2 / 3)``; the ``Hb``
    argument is clamped to ``[0, 1/2]``.
    """
    n = law.n
    dev = 2 * len(scen.alphabet) * math.exp(-law.alpha * n * law.zeta ** 2 / 3.0)
    best = 0.0
    for t in scen.params:
        rho0 = scen.willie[(t, scen.innocent)]
        lam = lambda_min(rho0)
        if lam <= 1e-12:
            raise SupportViolation(f"innocent Willie state for {t!r} is singular")
        d = rel_entropy(scen.willie_mixture(t, law.P), rho0)
        if math.isinf(d):
            raise SupportViolation(f"mixture for {t!r} leaves the innocent support")
        val = n * d + dev * math.log(scen.dim_w / lam) * n + _hb_clamped(dev)
        best = max(best, val)
    return best


def law_mixture(scen: CqScenario, law: ConstrainedInputLaw, theta) -> np.ndarray:
    """``sum_u P_U(u) rho_W|theta^{u_1} (x) ... (x) rho_W|theta^{u_n}`` built exactly.

    Dynamic programme over prefixes keyed by partial counts; prefixes that
    already overshoot the ball are dropped.
    """
    idx = {u: i for i, u in enumerate(law.alphabet)}
    upper = np.max(np.array(law.types_Q), axis=0)
    allowed = set(law.types_Q)
    states = {tuple([0] * len(law.alphabet)): np.ones((1, 1), dtype=np.complex128)}
    for _ in range(law.n):
        nxt = {}
        for counts, m in states.items():
            for u in law.alphabet:
                p = law.P[u]
                if p == 0.0:
                    continue
                c = list(counts)
                c[idx[u]] += 1
                if c[idx[u]] > upper[idx[u]]:
                    continue
                key = tuple(c)
                term = p * np.kron(m, scen.willie[(theta, u)])
                if key in nxt:
                    nxt[key] += term
                else:
                    nxt[key] = term
        states = nxt
    total = sum(m for c, m in states.items() if c in allowed)
    return total / law.mass_A


def exact_covertness(scen: CqScenario, law: ConstrainedInputLaw, max_dim: int = MAX_EXACT_DIM) -> float:
    """``max_theta D(sum_u P_U(u) rho_W|theta^u || (rho_W|theta^0)^n)`` by direct construction.

    Raises:
        ScaleExceeded: if ``dim W ** n > max_dim``.
    """
    if scen.dim_w ** law.n > max_dim:
        raise ScaleExceeded(f"dim W^n = {scen.dim_w}^{law.n} exceeds {max_dim}")
    best = 0.0
    for t in scen.params:
        mix = law_mixture(scen, law, t)
        best = max(best, rel_entropy_to_power(mix, scen.willie[(t, scen.innocent)], law.n))
    return best


def max_eta(scen: CqScenario, P: Mapping):
    """``(max_theta eta(sum_u P(u) rho_W^u || rho_W^0), argmax)``."""
    vals = {t: eta(scen.willie_mixture(t, P), scen.willie[(t, scen.innocent)]) for t in scen.params}
    worst = max(vals, key=lambda t: vals[t])
    return vals[worst], worst


def _full_pmf(scen: CqScenario, weights: Mapping) -> dict:
    out = {u: 0.0 for u in scen.alphabet}
    out.update({u: float(w) for u, w in weights.items()})
    return out


def ratio_objective(scen: CqScenario, P_active: Mapping, pairs) -> float:
    """``sqrt(2) min_pairs D_cc(P) / sqrt(max_theta eta(P))`` for ``P`` on active symbols."""
    P = _full_pmf(scen, P_active)
    dmin = min(dcc(scen, a, b, P).value for a, b in pairs)
    e, _ = max_eta(scen, P)
    if e <= 0.0:
        return INF if dmin > 0 else 0.0
    if math.isinf(dmin):
        return INF
    return math.sqrt(2.0) * dmin / math.sqrt(e)


@dataclass(frozen=True)
class ExponentReport:
    """Outcome of :func:`optimize_exponent`.

    ``achievable_rate`` is in nats per ``sqrt(n delta)`` with ``delta`` in
    nats, i.e. unit ``sqrt(nats)``.
    """

    achievable_rate: float
    P_star: dict
    per_pair_dcc: dict
    worst_eta: float
    worst_eta_theta: object
    zero_equiv_pairs: tuple
    converse_rate: float = None
    slack: dict = field(default_factory=lambda: dict(SLACK_TERMS))


def _restart(scen, active, pairs, z0):
    def neg(z):
        v = ratio_objective(scen, dict(zip(active, softmax(z))), pairs)
        return -v if math.isfinite(v) else -1e300

    res = minimize(neg, z0, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
    p = softmax(res.x)
    return p, -float(res.fun)


def optimize_exponent(scen: CqScenario, restarts: int = 20, seed: int = 0, grid_steps=None,
                      threads: int = 1, tol: float = 1e-9, strategy_marginals=None) -> ExponentReport:
    """Maximise the covert exponent ratio over input laws on the active symbols.

    Softmax-parametrised Nelder-Mead from ``restarts`` random starts; with at
    most three active symbols a dense simplex grid is scanned and the best
    grid point polished as well.

    Raises:
        NoZeroEquivalentPair: no pair shares the innocent Bob output.
        AssumptionViolated: another admissibility assumption fails.
    """
    analysis = check_assumptions(scen, tol)
    pairs = list(analysis.zero_equiv_pairs)
    if not pairs:
        raise NoZeroEquivalentPair("no parameter pair shares the innocent Bob state")
    if not analysis.all_pass:
        raise AssumptionViolated(f"assumption flags {analysis.assumption_flags}")
    active = scen.active_symbols
    k = len(active)
    if k == 1:
        best_p = np.ones(1)
    else:
        rng = np.random.default_rng(seed)
        starts = [np.zeros(k)] + [rng.normal(scale=2.0, size=k) for _ in range(restarts - 1)]
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(lambda z: _restart(scen, active, pairs, z), starts))
        else:
            results = [_restart(scen, active, pairs, z) for z in starts]
        if k <= 3:
            steps = grid_steps or {2: 1000, 3: 100}[k]
            grid_best, grid_val = None, -math.inf
            for p in simplex_grid(k, steps):
                v = ratio_objective(scen, dict(zip(active, p)), pairs)
                if v > grid_val:
                    grid_best, grid_val = p, v
            results.append((grid_best, grid_val))
            z0 = np.log(np.clip(grid_best, 1e-12, None))
            results.append(_restart(scen, active, pairs, z0))
        best_p = max(results, key=lambda r: r[1])[0]
    P_star = dict(zip(active, [float(x) for x in best_p]))
    P_full = _full_pmf(scen, P_star)
    per_pair = {pr: dcc(scen, pr[0], pr[1], P_full).value for pr in pairs}
    worst, worst_t = max_eta(scen, P_full)
    dmin = min(per_pair.values())
    rate = INF if (worst <= 0 or math.isinf(dmin)) else math.sqrt(2.0) * dmin / math.sqrt(worst)
    conv = None
    if strategy_marginals is not None:
        cq = converse_quantities(strategy_marginals, scen, tol)
        conv = ratio_objective(scen, {u: cq.P_tilde[u] for u in active}, pairs)
    return ExponentReport(rate, P_star, per_pair, worst, worst_t, tuple(pairs), conv)


@dataclass(frozen=True)
class ConverseQuantities:
    alpha_n: float
    P_bar: dict
    P_tilde: dict
    kernel1: float
    kernel2: float
    n: int


def converse_quantities(marginals: Sequence[Mapping], scen: CqScenario, tol: float = 1e-9) -> ConverseQuantities:
    """Converse-side kernels from the per-position input marginals of a strategy.

    ``kernel1 = n alpha_n min_pairs D_cc(P_tilde)`` bounds ``-log epsilon``
    (up to ``O(log n / n)``); ``kernel2 = alpha_n^2 / 2 max_theta eta(P_tilde)``
    is the leading term of the lower bound on ``delta / n``.

    Raises:
        DegenerateAlpha: if every marginal is the point mass on the innocent symbol.
    """
    n = len(marginals)
    if n == 0:
        raise ValueError("need at least one marginal")
    pmfs = [_as_pmf(m, scen.alphabet) for m in marginals]
    P_bar = {u: sum(m[u] for m in pmfs) / n for u in scen.alphabet}
    alpha = 1.0 - P_bar[scen.innocent]
    if alpha <= 1e-15:
        raise DegenerateAlpha("all marginals are the innocent point mass")
    P_tilde = {u: (0.0 if u == scen.innocent else P_bar[u] / alpha) for u in scen.alphabet}
    pairs = zero_equivalent_pairs(scen, tol)
    if pairs:
        kernel1 = n * alpha * min(dcc(scen, a, b, P_tilde).value for a, b in pairs)
    else:
        kernel1 = INF
    e, _ = max_eta(scen, P_tilde)
    return ConverseQuantities(alpha, P_bar, P_tilde, kernel1, alpha ** 2 / 2.0 * e, n)


def design_alpha(scen: CqScenario, P_bar: Mapping, delta: float, n: int, lam: float = 0.0) -> float:
    """Off-innocent weight ``sqrt(2 delta (1 - lam) / (n max_theta eta(P_bar)))``."""
    P = _full_pmf(scen, P_bar)
    P[scen.innocent] = 0.0
    e, _ = max_eta(scen, P)
    return math.sqrt(2.0 * delta * (1.0 - lam) / (n * e))


def design_input_pmf(scen: CqScenario, P_bar: Mapping, alpha: float) -> dict:
    """``P(0) = 1 - alpha`` and ``P(u) = alpha P_bar(u)`` elsewhere."""
    P = {u: alpha * float(P_bar.get(u, 0.0)) for u in scen.alphabet}
    P[scen.innocent] = 1.0 - alpha
    return P
