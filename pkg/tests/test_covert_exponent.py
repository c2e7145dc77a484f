import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_sensing.covert_exponent import (
    ConstrainedInputLaw,
    achievability_kernel,
    build_input_law,
    converse_quantities,
    covertness_bound,
    dcc,
    design_alpha,
    design_input_pmf,
    exact_covertness,
    max_eta,
    optimize_exponent,
    ratio_objective,
    sample_input,
    sample_types,
)
from covert_sensing.divergence import binary_entropy, chernoff, rel_entropy
from covert_sensing.errors import (
    DegenerateAlpha,
    EmptyTypeBall,
    NoZeroEquivalentPair,
    ScaleExceeded,
)
from covert_sensing.fixture_builders import classical_cq, quantum_cq
from covert_sensing.qmat import lambda_min
from covert_sensing.scenario import CqScenario
from covert_sensing.simplex import simplex_grid

from conftest import bloch


def bern(p):
    return np.diag([1 - p, p])


def single_symbol():
    bob = {("a", "0"): bern(0.5), ("b", "0"): bern(0.5), ("a", "1"): bern(0.2), ("b", "1"): bern(0.7)}
    willie = {("a", "0"): bern(0.3), ("b", "0"): bern(0.3), ("a", "1"): bern(0.5), ("b", "1"): bern(0.6)}
    return CqScenario(("a", "b"), ("0", "1"), bob, willie, "0")


def swap_symmetric():
    x, y = bloch(0.6, 0, 0.2), bloch(-0.3, 0.5, -0.1)
    wx, wy = bloch(0.4, 0, 0.3), bloch(0, 0.3, -0.2)
    bob = {("a", "0"): bloch(0, 0, 0.5), ("b", "0"): bloch(0, 0, 0.5),
           ("a", "1"): x, ("b", "1"): y, ("a", "2"): y, ("b", "2"): x}
    willie = {("a", "0"): bloch(0, 0, 0.1), ("b", "0"): bloch(0, 0, 0.1),
              ("a", "1"): wx, ("b", "1"): wy, ("a", "2"): wy, ("b", "2"): wx}
    return CqScenario(("a", "b"), ("0", "1", "2"), bob, willie, "0")


@pytest.fixture(scope="module")
def reports():
    return {name: (sc, optimize_exponent(sc)) for name, sc in
            (("classical", classical_cq()), ("quantum", quantum_cq()))}


class TestOptimizeExponent:
    def test_single_active_symbol(self):
        sc = single_symbol()
        rep = optimize_exponent(sc)
        assert rep.P_star == {"1": 1.0}
        d = chernoff(bern(0.2), bern(0.7)).value
        e, _ = max_eta(sc, {"0": 0.0, "1": 1.0})
        assert rep.achievable_rate == pytest.approx(math.sqrt(2) * d / math.sqrt(e), rel=1e-10)

    def test_rate_invariant(self, reports):
        for sc, rep in reports.values():
            expect = math.sqrt(2) * min(rep.per_pair_dcc.values()) / math.sqrt(rep.worst_eta)
            assert rep.achievable_rate == pytest.approx(expect, abs=1e-8)

    def test_symmetric_scenario(self):
        sc = swap_symmetric()
        rep = optimize_exponent(sc)
        sym = ratio_objective(sc, {"1": 0.5, "2": 0.5}, rep.zero_equiv_pairs)
        assert rep.achievable_rate == pytest.approx(sym, rel=1e-6)

    def test_classical_grid_oracle(self, reports):
        sc, rep = reports["classical"]
        pairs = [("a", "b")]
        grid = max(ratio_objective(sc, dict(zip(("1", "2"), p)), pairs) for p in simplex_grid(2, 1000))
        assert rep.achievable_rate >= grid * (1 - 1e-4)
        assert rep.achievable_rate == pytest.approx(grid, rel=1e-4)

    def test_quantum_grid_oracle(self, reports):
        sc, rep = reports["quantum"]
        grid = max(ratio_objective(sc, dict(zip(("1", "2"), p)), [("a", "b")]) for p in simplex_grid(2, 1000))
        assert rep.achievable_rate == pytest.approx(grid, rel=1e-4)

    def test_permutation_invariance(self, reports):
        sc, rep = reports["quantum"]
        perm = sc.relabel(symbol_map={"1": "2", "2": "1"})
        assert optimize_exponent(perm).achievable_rate == pytest.approx(rep.achievable_rate, abs=1e-6)

    def test_dominates_random_points(self, rng, reports):
        for sc, rep in reports.values():
            for _ in range(100):
                p = rng.dirichlet(np.ones(2))
                assert rep.achievable_rate >= ratio_objective(sc, dict(zip(("1", "2"), p)), [("a", "b")]) - 1e-12

    def test_no_zero_equivalent_pair(self):
        bob = {("a", "0"): bern(0.0), ("b", "0"): bern(1.0), ("a", "1"): bern(0.2), ("b", "1"): bern(0.7)}
        willie = {(t, u): bern(0.3 + 0.2 * int(u)) for t in "ab" for u in "01"}
        sc = CqScenario(("a", "b"), ("0", "1"), bob, willie, "0")
        with pytest.raises(NoZeroEquivalentPair):
            optimize_exponent(sc)

    def test_threads_deterministic(self):
        sc = quantum_cq()
        a = optimize_exponent(sc, threads=1, restarts=6)
        b = optimize_exponent(sc, threads=3, restarts=6)
        assert a.achievable_rate == b.achievable_rate


def brute_mass(p1, n, radius):
    total = 0.0
    for seq in itertools.product([0, 1], repeat=n):
        k = sum(seq)
        if abs(k / n - p1) <= radius + 1e-12:
            total += p1 ** k * (1 - p1) ** (n - k)
    return total


class TestBuildInputLaw:
    def test_no_conditioning(self):
        law = build_input_law({"0": 0.7, "1": 0.3}, 0.3, 10.0, 6, "0")
        assert law.mass_A == pytest.approx(1.0, abs=1e-12)
        assert len(law.types_Q) == 7

    def test_single_type(self):
        law = build_input_law({"0": 0.5, "1": 0.5}, 0.5, 0.1, 2, "0")
        assert law.types_Q == ((1, 1),)
        assert law.sequence_prob(("0", "1")) == pytest.approx(0.5)
        assert law.sequence_prob(("1", "0")) == pytest.approx(0.5)
        assert law.sequence_prob(("1", "1")) == 0.0

    def test_brute_force_mass(self):
        law = build_input_law({"0": 0.75, "1": 0.25}, 0.25, 0.4, 8, "0")
        assert law.mass_A == pytest.approx(brute_mass(0.25, 8, 0.1), abs=1e-14)
        for counts in law.types_Q:
            assert abs(counts[1] / 8 - 0.25) <= 0.1 + 1e-12

    def test_law_normalised(self):
        law = build_input_law({"0": 0.6, "1": 0.25, "2": 0.15}, 0.4, 0.5, 7, "0")
        total = sum(law.sequence_prob(s) for s in itertools.product(law.alphabet, repeat=7))
        assert total == pytest.approx(1.0, abs=1e-12)
        assert 0 < law.mass_A <= 1

    def test_empty_ball(self):
        with pytest.raises(EmptyTypeBall):
            build_input_law({"0": 0.95, "1": 0.05}, 0.05, 0.1, 8, "0")

    def test_scale_budget(self):
        with pytest.raises(ScaleExceeded):
            build_input_law({"0": 0.4, "1": 0.3, "2": 0.3}, 0.6, 10.0, 2000, "0", max_types=1000)


class TestSampling:
    def test_point_mass_type(self, rng):
        law = build_input_law({"0": 0.5, "1": 0.5}, 0.5, 0.1, 4, "0")
        for s in range(20):
            assert sorted(sample_input(law, s)) == ["0", "0", "1", "1"]

    def test_deterministic(self):
        law = build_input_law({"0": 0.7, "1": 0.3}, 0.3, 1.0, 10, "0")
        assert sample_input(law, 5) == sample_input(law, 5)

    def test_type_frequencies(self, rng):
        law = build_input_law({"0": 0.7, "1": 0.3}, 0.3, 0.5, 12, "0")
        n = 100_000
        ks = sample_types(law, n, rng)
        freq = np.bincount(ks, minlength=len(law.types_Q)) / n
        p = law.type_probs
        sigma = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(freq - p) <= 3 * sigma + 1e-12)


class TestKernels:
    def test_single_type(self):
        sc = classical_cq()
        law = build_input_law({"0": 0.5, "1": 0.5, "2": 0.0}, 0.5, 0.1, 2, "0")
        q = {"0": 0.5, "1": 0.5, "2": 0.0}
        expect = -2 * dcc(sc, "a", "b", q).value
        assert achievability_kernel(sc, law)[("a", "b")] == pytest.approx(expect, abs=1e-12)

    def test_identical_channels(self):
        sc = single_symbol()
        same = CqScenario(sc.params, sc.alphabet, {k: bern(0.5) for k in sc.bob}, sc.willie, "0")
        law = build_input_law({"0": 0.7, "1": 0.3}, 0.3, 1.0, 6, "0")
        assert achievability_kernel(same, law)[("a", "b")] == pytest.approx(0.0, abs=1e-12)

    def test_two_type_hand_sum(self):
        sc = single_symbol()
        law = build_input_law({"0": 0.7, "1": 0.3}, 0.3, 0.35, 8, "0")
        assert len(law.types_Q) == 2
        terms = []
        for k, counts in enumerate(law.types_Q):
            q = {"0": counts[0] / 8, "1": counts[1] / 8}
            terms.append(law.type_probs[k] * math.exp(-8 * dcc(sc, "a", "b", q).value))
        assert achievability_kernel(sc, law)[("a", "b")] == pytest.approx(math.log(sum(terms)), abs=1e-12)

    def test_log_sum_sandwich(self):
        sc = quantum_cq()
        law = build_input_law({"0": 0.6, "1": 0.25, "2": 0.15}, 0.4, 0.5, 8, "0")
        vals = [dcc(sc, "a", "b", law.type_pmf(k)).value for k in range(len(law.types_Q))]
        kern = achievability_kernel(sc, law)[("a", "b")]
        assert kern <= -8 * min(vals) + 1e-12
        assert kern >= -8 * max(vals) + math.log(max(law.type_probs)) - 1e-12


class TestCovertness:
    def test_bound_vanishes(self):
        sc = single_symbol()
        law = ConstrainedInputLaw({"0": 1.0, "1": 0.0}, 0.9, 3.0, 100, ("0", "1"), "0",
                                  ((100, 0),), np.zeros(1), 1.0, 0.0)
        assert covertness_bound(sc, law) < 1e-100

    def test_bound_hand_evaluation(self):
        sc = single_symbol()
        P = {"0": 0.6, "1": 0.4}
        law = build_input_law(P, 0.4, 5.0, 1, "0")
        dev = min(2 * 2 * math.exp(-0.4 * 1 * 25 / 3), 1.0)
        vals = []
        for t in sc.params:
            rho0 = sc.willie[(t, "0")]
            d = rel_entropy(sc.willie_mixture(t, P), rho0)
            vals.append(d + dev * math.log(2 / lambda_min(rho0)) + binary_entropy(min(dev, 0.5)))
        assert covertness_bound(sc, law) == pytest.approx(max(vals), rel=1e-12)

    def test_bound_dominates_iid_term(self):
        sc = quantum_cq()
        for n in (2, 5, 9):
            P = design_input_pmf(sc, {"1": 0.5, "2": 0.5}, 0.3)
            law = build_input_law(P, 0.3, 1.0, n, "0")
            d = max(rel_entropy(sc.willie_mixture(t, P), sc.willie[(t, "0")]) for t in sc.params)
            assert covertness_bound(sc, law) >= n * d

    def test_exact_all_innocent(self):
        sc = quantum_cq()
        law = build_input_law({"0": 1.0, "1": 0.0, "2": 0.0}, 0.0, 1.0, 4, "0")
        assert exact_covertness(sc, law) == pytest.approx(0.0, abs=1e-12)

    def test_exact_single_letter(self):
        sc = quantum_cq()
        P = {"0": 0.7, "1": 0.2, "2": 0.1}
        law = build_input_law(P, 0.3, 10.0, 1, "0")
        expect = max(rel_entropy(sc.willie_mixture(t, P), sc.willie[(t, "0")]) for t in sc.params)
        assert exact_covertness(sc, law) == pytest.approx(expect, abs=1e-12)

    def test_exact_below_bound(self):
        sc = quantum_cq()
        P = design_input_pmf(sc, {"1": 0.5, "2": 0.5}, 0.25)
        law = build_input_law(P, 0.25, 2.0, 6, "0")
        assert exact_covertness(sc, law) <= covertness_bound(sc, law)

    def test_exact_budget(self):
        sc = quantum_cq()
        law = build_input_law({"0": 0.9, "1": 0.1, "2": 0.0}, 0.1, 1.0, 13, "0")
        with pytest.raises(ScaleExceeded):
            exact_covertness(sc, law)


class TestConverse:
    def test_degenerate(self):
        with pytest.raises(DegenerateAlpha):
            converse_quantities([{"0": 1.0}] * 4, classical_cq())

    def test_iid(self):
        P = {"0": 0.8, "1": 0.15, "2": 0.05}
        cq = converse_quantities([P] * 5, classical_cq())
        assert cq.alpha_n == pytest.approx(0.2)
        assert cq.P_bar == pytest.approx(P)
        assert cq.P_tilde == pytest.approx({"0": 0.0, "1": 0.75, "2": 0.25})

    def test_mixed_marginals(self):
        marg = [{"0": 0.8, "1": 0.2} if i % 2 else {"0": 1.0} for i in range(6)]
        cq = converse_quantities(marg, classical_cq())
        assert cq.P_bar["1"] == pytest.approx(0.1)

    def test_design_point_consistency(self):
        for sc in (classical_cq(), quantum_cq()):
            for delta, n, lam in ((0.1, 100, 0.0), (0.05, 1000, 0.2), (1.0, 64, 0.5)):
                pbar = {"1": 0.3, "2": 0.7}
                alpha = design_alpha(sc, pbar, delta, n, lam)
                cq = converse_quantities([design_input_pmf(sc, pbar, alpha)] * n, sc)
                assert n * cq.kernel2 == pytest.approx(delta * (1 - lam), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(p1=st.floats(0.05, 0.6), radius=st.floats(0.05, 0.5), n=st.integers(1, 10))
def test_mass_matches_enumeration(p1, radius, n):
    zeta = radius / p1
    try:
        law = build_input_law({"0": 1 - p1, "1": p1}, p1, zeta, n, "0")
    except EmptyTypeBall:
        assert brute_mass(p1, n, radius) == 0.0
        return
    assert law.mass_A == pytest.approx(brute_mass(p1, n, p1 * zeta), rel=1e-10)
