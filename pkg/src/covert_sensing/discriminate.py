"""State discrimination: Helstrom, pretty-good measurement, exact strategy errors, exponent fits."""

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .covert_exponent import ConstrainedInputLaw, all_pairs, build_input_law, dcc, design_input_pmf, sample_types
from .divergence import chernoff, chernoff_sum
from .errors import DimensionMismatch, NotClassical, ScaleExceeded
from .qmat import as_matrix, cluster_indices, eig_hermitian, tensor
from .scenario import CqScenario

PINV_CUTOFF = 1e-12
COMMUTE_TOL = 1e-10
MAX_SEQUENCES = 100_000
MAX_DIM = 4096


@dataclass(frozen=True)
class Povm:
    """Measurement elements keyed by the hypothesis they announce."""

    elements: dict

    def check(self, psd_tol: float = 1e-9, sum_tol: float = 1e-8) -> bool:
        mats = list(self.elements.values())
        if any(np.linalg.eigvalsh((m + m.conj().T) / 2)[0] < -psd_tol for m in mats):
            return False
        total = sum(mats)
        return bool(np.max(np.abs(total - np.eye(total.shape[0]))) <= sum_tol)


@dataclass(frozen=True)
class DiscriminationResult:
    """Worst-case error ``max_theta P(theta_hat != theta)`` plus per-hypothesis errors."""

    error: float
    per_theta_error: dict
    method: str
    average_error: float = field(default=None)


def _labelled(states) -> dict:
    if isinstance(states, Mapping):
        return {k: as_matrix(v) for k, v in states.items()}
    return {i: as_matrix(s) for i, s in enumerate(states)}


def _result(povm: Povm, states: dict, method: str) -> DiscriminationResult:
    per = {t: float(np.clip(1.0 - np.real(np.trace(povm.elements[t] @ rho)), 0.0, 1.0))
           for t, rho in states.items()}
    return DiscriminationResult(max(per.values()), per, method, float(np.mean(list(per.values()))))


def helstrom(rho0, rho1, labels=(0, 1)):
    """Optimal equal-prior binary measurement.

    ``Gamma_0`` projects onto the positive part of ``rho0 - rho1``; the null
    space of the difference is split evenly so that identical states give
    per-hypothesis error 1/2.

    Returns:
        (Povm, DiscriminationResult) whose ``average_error`` equals
        ``(1 - ||rho0 - rho1||_1 / 2) / 2``.
    """
    a, b = as_matrix(rho0), as_matrix(rho1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    diff = a - b
    w, v = np.linalg.eigh((diff + diff.conj().T) / 2)
    scale = max(1.0, float(np.max(np.abs(w))))
    weight = np.where(w > 1e-14 * scale, 1.0, np.where(w < -1e-14 * scale, 0.0, 0.5))
    g0 = (v * weight) @ v.conj().T
    povm = Povm({labels[0]: g0, labels[1]: np.eye(a.shape[0]) - g0})
    return povm, _result(povm, {labels[0]: a, labels[1]: b}, "helstrom")


def pgm(states):
    """Pretty-good measurement ``S^(-1/2) rho_theta S^(-1/2)``, ``S = sum_theta rho_theta``.

    Eigenvalues of ``S`` at most ``1e-12 * lambda_max`` are treated as zero;
    the complement of the support of ``S`` is shared equally by all outcomes.

    Args:
        states: list (labels ``0..k-1``) or mapping label -> density operator.
    """
    st = _labelled(states)
    if len(st) < 2:
        raise ValueError("need at least two states")
    dims = {m.shape for m in st.values()}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed shapes {sorted(dims)}")
    S = sum(st.values())
    w, v = np.linalg.eigh((S + S.conj().T) / 2)
    keep = w > PINV_CUTOFF * max(float(w[-1]), 0.0)
    inv_sqrt = (v[:, keep] / np.sqrt(w[keep])) @ v[:, keep].conj().T
    d = S.shape[0]
    rest = (np.eye(d) - v[:, keep] @ v[:, keep].conj().T) / len(st)
    elems = {}
    for t, rho in st.items():
        g = inv_sqrt @ rho @ inv_sqrt + rest
        elems[t] = (g + g.conj().T) / 2
    povm = Povm(elems)
    return povm, _result(povm, st, "pgm")


def distinct_eigenvalue_count(rho) -> int:
    """``nu(rho)``: number of distinct eigenvalues (zero included when present)."""
    return eig_hermitian(rho).nu


def lemma6_bound(states) -> float:
    """``10 (k - 1)^2 max nu(rho) sum_{theta != theta'} exp(-C(rho_theta, rho_theta'))``.

    The sum runs over ordered pairs; values above 1 are returned as is.
    """
    st = list(_labelled(states).values())
    if len(st) < 2:
        raise ValueError("need at least two states")
    k = len(st)
    nu = max(distinct_eigenvalue_count(r) for r in st)
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            c = chernoff(st[i], st[j])
            total += 0.0 if c.is_infinite else 2.0 * math.exp(-c.value)
    return 10.0 * (k - 1) ** 2 * nu * total


def _product_nu(factors: Sequence[np.ndarray]) -> int:
    # distinct eigenvalues of a tensor product from its factors' spectra
    vals = np.ones(1)
    for rho in factors:
        vals = np.unique(np.round(np.outer(vals, np.linalg.eigvalsh(rho)).ravel(), 15))
    vals = np.sort(np.clip(vals, 0.0, None))
    return len(cluster_indices(vals))


def product_lemma6_bound(scen: CqScenario, seq: Sequence) -> float:
    """Discrimination-error bound for the product states ``rho_B|theta^{u_1} (x) ... (x) rho_B|theta^{u_n}``.

    Chernoff informations of product states are computed from per-symbol
    kernels, so no ``dim B ** n`` matrix is formed.
    """
    counts = {u: sum(1 for s in seq if s == u) for u in scen.alphabet}
    k = len(scen.params)
    nu = max(_product_nu([scen.bob[(t, u)] for u in seq]) for t in scen.params)
    total = 0.0
    for a, b in all_pairs(scen):
        c = chernoff_sum([(c_u, scen.chernoff_kernel(a, b, u)) for u, c_u in counts.items()])
        total += 0.0 if c.is_infinite else 2.0 * math.exp(-c.value)
    return 10.0 * (k - 1) ** 2 * nu * total


def _check_scale(scen: CqScenario, law: ConstrainedInputLaw, max_sequences: int, max_dim: int) -> None:
    if len(law.alphabet) ** law.n > max_sequences:
        raise ScaleExceeded(f"|U|^n = {len(law.alphabet)}^{law.n} exceeds {max_sequences}")
    if scen.dim_b ** law.n > max_dim:
        raise ScaleExceeded(f"dim B^n = {scen.dim_b}^{law.n} exceeds {max_dim}")


def strategy_error_exact(scen: CqScenario, law: ConstrainedInputLaw,
                         max_sequences: int = MAX_SEQUENCES, max_dim: int = MAX_DIM) -> DiscriminationResult:
    """Worst-case PGM error of the sampled-input strategy, averaged exactly under ``P_U``.

    Sequences of one type give unitarily equivalent product ensembles (a
    tensor-factor permutation), so one representative per type suffices.
    """
    _check_scale(scen, law, max_sequences, max_dim)
    probs = law.type_probs
    per = {t: 0.0 for t in scen.params}
    for k, w in enumerate(probs):
        seq = law.representative(k)
        states = {t: tensor(*[scen.bob[(t, u)] for u in seq]) for t in scen.params}
        _, res = pgm(states)
        for t in scen.params:
            per[t] += w * res.per_theta_error[t]
    return DiscriminationResult(max(per.values()), per, "pgm", float(np.mean(list(per.values()))))


def sequence_lemma6_bound(scen: CqScenario, law: ConstrainedInputLaw) -> float:
    """``sum_u P_U(u) * bound(product states of u)``, evaluated per type."""
    return float(sum(w * product_lemma6_bound(scen, law.representative(k))
                     for k, w in enumerate(law.type_probs)))


def classical_tables(scen: CqScenario, tol: float = COMMUTE_TOL) -> dict:
    """Diagonal Bob distributions in a common eigenbasis.

    Raises:
        NotClassical: if two Bob states fail to commute within ``tol``.
    """
    mats = list(scen.bob.values())
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            c = mats[i] @ mats[j] - mats[j] @ mats[i]
            if np.max(np.abs(c)) > tol:
                raise NotClassical("Bob states do not commute")
    # a generic combination of commuting Hermitian matrices has their joint eigenbasis
    coef = np.random.default_rng(12345).uniform(0.5, 1.5, size=len(mats))
    _, v = np.linalg.eigh(sum(c * m for c, m in zip(coef, mats)))
    return {key: np.clip(np.real(np.einsum("ij,jk,ki->i", v.conj().T, m, v)), 0.0, None)
            for key, m in scen.bob.items()}


def _count_vectors(k: int, d: int):
    if d == 1:
        yield (k,)
        return
    for c in range(k + 1):
        for rest in _count_vectors(k - c, d - 1):
            yield (c,) + rest


def _llr_law(p: np.ndarray, q: np.ndarray, k: int):
    """Distribution of ``sum log(p/q)`` over ``k`` i.i.d. outcomes, under ``p`` and under ``q``.

    Returns dicts keyed by rounded LLR value -> (log prob under p, log prob under q).
    Outcomes with ``p = q = 0`` never occur; an outcome with only one of them
    positive carries an infinite LLR.
    """
    with np.errstate(divide="ignore"):
        lp, lq = np.log(p), np.log(q)
    out = {}
    for c in _count_vectors(k, p.size):
        c = np.array(c)
        mult = gammaln(k + 1) - gammaln(c + 1).sum()
        used = c > 0
        a = mult + float(np.sum(c[used] * lp[used]))
        b = mult + float(np.sum(c[used] * lq[used]))
        if a == -np.inf and b == -np.inf:
            continue
        if a == -np.inf:
            key = -np.inf
        elif b == -np.inf:
            key = np.inf
        else:
            key = round(float(np.sum(c[used] * (lp[used] - lq[used]))), 10)
        if key in out:
            pa, pb = out[key]
            out[key] = (np.logaddexp(pa, a), np.logaddexp(pb, b))
        else:
            out[key] = (a, b)
    return out


def _convolve(x: dict, y: dict) -> dict:
    out = {}
    for k1, (a1, b1) in x.items():
        for k2, (a2, b2) in y.items():
            if {k1, k2} == {np.inf, -np.inf}:
                continue
            key = k1 + k2 if math.isinf(k1) or math.isinf(k2) else round(k1 + k2, 10)
            a, b = a1 + a2, b1 + b2
            if key in out:
                out[key] = (np.logaddexp(out[key][0], a), np.logaddexp(out[key][1], b))
            else:
                out[key] = (a, b)
    return out


def classical_ml_error(tables: dict, a, b, counts: Mapping) -> tuple:
    """Exact per-hypothesis errors of the ML test between ``a`` and ``b`` for given symbol counts.

    Ties are broken by a fair coin.  Symbols whose two output laws coincide
    carry no information and are skipped.
    """
    law = {0.0: (0.0, 0.0)}
    for u, k in counts.items():
        if k == 0:
            continue
        p, q = tables[(a, u)], tables[(b, u)]
        if np.allclose(p, q, atol=1e-15, rtol=0.0):
            continue
        law = _convolve(law, _llr_law(p, q, k))
    keys = np.array(list(law))
    la = np.array([v[0] for v in law.values()])
    lb = np.array([v[1] for v in law.values()])
    # error under a: LLR < 0 (plus half the ties); under b: LLR > 0
    err_a = np.exp(la[keys < 0]).sum() + 0.5 * np.exp(la[keys == 0]).sum()
    err_b = np.exp(lb[keys > 0]).sum() + 0.5 * np.exp(lb[keys == 0]).sum()
    return float(err_a), float(err_b)


@dataclass(frozen=True)
class RegressionResult:
    """Least-squares fit of ``-log(error)`` against ``n * alpha``.

    ``records`` rows are ``(alpha, n, trials, empirical_error, ci_low, ci_high)``;
    ``per_alpha`` maps alpha -> (slope vs n*alpha, stderr, slope vs n, stderr).
    """

    slope: float
    stderr: float
    intercept: float
    records: tuple
    per_alpha: dict
    columns: tuple = ("alpha", "n", "trials", "empirical_error", "ci_low", "ci_high")

    def to_columnar(self) -> str:
        lines = [",".join(self.columns)]
        for r in self.records:
            lines.append(",".join(f"{x:.12g}" for x in r))
        return "\n".join(lines) + "\n"


def _fit(x, y):
    res = stats.linregress(x, y) if len(x) > 2 else None
    if res is None:
        slope = (y[-1] - y[0]) / (x[-1] - x[0]) if len(x) == 2 else float("nan")
        return float(slope), float("nan"), float(y[0] - slope * x[0])
    return float(res.slope), float(res.stderr), float(res.intercept)


def exponent_regression(scen: CqScenario, P_bar: Mapping, alpha_schedule: Sequence[float],
                        n_list: Sequence[int], trials: int, seed: int, zeta: float = 0.1,
                        pairs=None) -> RegressionResult:
    """Estimate the error exponent of the sampled-input strategy on a classical scenario.

    For each ``(alpha, n)`` the input law is ``P(0) = 1 - alpha``,
    ``P(u) = alpha P_bar(u)`` conditioned on the type ball of radius
    ``alpha * zeta``.  Each trial draws an input sequence exactly from that
    law; its conditional ML error is computed exactly (so the Monte Carlo
    average has far lower variance than simulating outcomes).  The empirical
    error is the worst over parameters and pairs.

    Raises:
        NotClassical: if the Bob states are not simultaneously diagonal.
    """
    tables = classical_tables(scen)
    pairs = all_pairs(scen) if pairs is None else list(pairs)
    children = np.random.SeedSequence(seed).spawn(len(alpha_schedule) * len(n_list))
    records, xs, ys, per_alpha = [], [], [], {}
    idx = 0
    for alpha in alpha_schedule:
        ax, ay, an = [], [], []
        for n in n_list:
            rng = np.random.default_rng(children[idx])
            idx += 1
            law = build_input_law(design_input_pmf(scen, P_bar, alpha), alpha, zeta, n, scen.innocent)
            ks = sample_types(law, trials, rng)
            uniq, inv = np.unique(ks, return_inverse=True)
            cond = []
            for k in uniq:
                counts = dict(zip(law.alphabet, law.types_Q[k]))
                cond.append([classical_ml_error(tables, a, b, counts) for a, b in pairs])
            cond = np.array(cond)  # (types, pairs, 2)
            samples = cond[inv]
            per_hyp = samples.mean(axis=0)
            j = np.unravel_index(np.argmax(per_hyp), per_hyp.shape)
            err = float(per_hyp[j])
            se = float(samples[(slice(None),) + j].std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
            records.append((alpha, n, trials, err, max(err - 1.96 * se, 0.0), err + 1.96 * se))
            if err > 0:
                xs.append(n * alpha)
                ys.append(-math.log(err))
                ax.append(n * alpha)
                an.append(n)
                ay.append(-math.log(err))
        if len(ax) >= 2:
            s1, e1, _ = _fit(np.array(ax), np.array(ay))
            s2, e2, _ = _fit(np.array(an, dtype=float), np.array(ay))
            per_alpha[alpha] = (s1, e1, s2, e2)
    if len(xs) >= 2:
        slope, stderr, intercept = _fit(np.array(xs), np.array(ys))
    else:
        slope, stderr, intercept = 0.0, float("nan"), 0.0
    return RegressionResult(slope, stderr, intercept, tuple(records), per_alpha)


def expected_slope(scen: CqScenario, P_bar: Mapping, pairs=None) -> float:
    """``min_pairs D_cc(theta, theta' | P_bar)``: the predicted slope against ``n * alpha``."""
    pairs = all_pairs(scen) if pairs is None else pairs
    P = {u: float(P_bar.get(u, 0.0)) for u in scen.alphabet}
    return min(dcc(scen, a, b, P).value for a, b in pairs)
