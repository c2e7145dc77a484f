import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_sensing.covert_exponent import build_input_law, design_input_pmf
from covert_sensing.discriminate import (
    Povm,
    classical_ml_error,
    classical_tables,
    distinct_eigenvalue_count,
    exponent_regression,
    expected_slope,
    helstrom,
    lemma6_bound,
    pgm,
    product_lemma6_bound,
    sequence_lemma6_bound,
    strategy_error_exact,
)
from covert_sensing.divergence import chernoff
from covert_sensing.errors import DimensionMismatch, NotClassical, ScaleExceeded
from covert_sensing.fixture_builders import classical_cq, quantum_cq
from covert_sensing.qmat import ket, projector, tensor, trace_norm
from covert_sensing.scenario import CqScenario

from conftest import bloch, full_rank_density, pure


def bern(p):
    return np.diag([1 - p, p])


def bsc(flip=0.1):
    bob = {("a", "0"): bern(0.5), ("b", "0"): bern(0.5), ("a", "1"): bern(flip), ("b", "1"): bern(1 - flip)}
    willie = {(t, u): bern(0.2 + 0.3 * int(u)) for t in "ab" for u in "01"}
    return CqScenario(("a", "b"), ("0", "1"), bob, willie, "0")


class TestHelstrom:
    def test_orthogonal(self):
        _, res = helstrom(projector(ket(0, 2)), projector(ket(1, 2)))
        assert res.error == pytest.approx(0.0, abs=1e-15)

    def test_identical(self, rng):
        rho = full_rank_density(3, rng)
        povm, res = helstrom(rho, rho)
        assert res.average_error == pytest.approx(0.5)
        assert res.per_theta_error == pytest.approx({0: 0.5, 1: 0.5})
        assert povm.check()

    def test_zero_plus(self):
        plus = np.array([1, 1]) / math.sqrt(2)
        _, res = helstrom(projector(ket(0, 2)), projector(plus))
        assert res.average_error == pytest.approx((1 - 1 / math.sqrt(2)) / 2, abs=1e-12)

    def test_labels(self, rng):
        povm, res = helstrom(pure(2, rng), pure(2, rng), labels=("x", "y"))
        assert set(povm.elements) == {"x", "y"}
        assert res.error == max(res.per_theta_error.values())

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            helstrom(np.eye(2) / 2, np.eye(3) / 3)

    def test_trace_norm_consistency(self, rng):
        for dim in (2, 3, 4):
            for _ in range(30):
                a, b = full_rank_density(dim, rng, 0.0), full_rank_density(dim, rng, 0.0)
                povm, res = helstrom(a, b)
                assert povm.check()
                assert res.average_error == pytest.approx((1 - trace_norm(a - b) / 2) / 2, abs=1e-10)


class TestPgm:
    def test_orthogonal(self):
        states = [projector(ket(i, 3)) for i in range(3)]
        povm, res = pgm(states)
        assert res.error == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(povm.elements[1], states[1], atol=1e-14)

    def test_identical(self, rng):
        rho = full_rank_density(2, rng)
        _, res = pgm([rho, rho])
        assert res.per_theta_error == pytest.approx({0: 0.5, 1: 0.5})

    def test_rank_deficient_completion(self):
        states = {"x": projector(ket(0, 3)), "y": projector(ket(1, 3))}
        povm, _ = pgm(states)
        assert povm.check()
        np.testing.assert_allclose(povm.elements["x"][2, 2], 0.5)

    def test_within_twice_helstrom(self, rng):
        for _ in range(1000):
            a, b = pure(2, rng), pure(2, rng)
            _, h = helstrom(a, b)
            povm, p = pgm([a, b])
            assert p.average_error <= 2 * h.average_error + 1e-12

    def test_requires_two(self):
        with pytest.raises(ValueError):
            pgm([np.eye(2) / 2])

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 4), dim=st.integers(2, 4))
    def test_povm_invariants(self, seed, k, dim):
        r = np.random.default_rng(seed)
        povm, res = pgm([full_rank_density(dim, r, 0.0) for _ in range(k)])
        assert povm.check()
        assert res.error == max(res.per_theta_error.values())
        assert 0.0 <= res.error <= 1.0


class TestErrorBound:
    def test_orthogonal(self):
        assert lemma6_bound([projector(ket(0, 2)), projector(ket(1, 2))]) == 0.0

    def test_identical(self, rng):
        rho = full_rank_density(3, rng)
        nu = distinct_eigenvalue_count(rho)
        assert lemma6_bound([rho, rho]) == pytest.approx(20 * nu, rel=1e-9)

    def test_random_pair(self, rng):
        a, b = full_rank_density(2, rng), full_rank_density(2, rng)
        t = math.exp(-chernoff(a, b).value)
        nu = max(distinct_eigenvalue_count(a), distinct_eigenvalue_count(b))
        assert lemma6_bound([a, b]) == pytest.approx(10 * nu * 2 * t, rel=1e-12)

    def test_product_matches_explicit(self):
        sc = quantum_cq()
        seq = ("1", "0", "2")
        states = [tensor(*[sc.bob[(t, u)] for u in seq]) for t in sc.params]
        assert product_lemma6_bound(sc, seq) == pytest.approx(lemma6_bound(states), rel=1e-7)


class TestStrategyErrorExact:
    def test_orthogonal_forced_symbol(self):
        bob = {("a", "0"): bern(0.5), ("b", "0"): bern(0.5), ("a", "1"): bern(0.0), ("b", "1"): bern(1.0)}
        willie = {(t, u): bern(0.3) for t in "ab" for u in "01"}
        sc = CqScenario(("a", "b"), ("0", "1"), bob, willie, "0")
        law = build_input_law({"0": 0.5, "1": 0.5}, 0.5, 0.5, 4, "0")
        assert strategy_error_exact(sc, law).error == pytest.approx(0.0, abs=1e-12)

    def test_innocent_point_mass(self):
        sc = quantum_cq()
        law = build_input_law({"0": 1.0, "1": 0.0, "2": 0.0}, 0.0, 1.0, 3, "0")
        res = strategy_error_exact(sc, law)
        assert res.error == pytest.approx(0.5, abs=1e-12)

    def test_classical_enumeration(self):
        sc = classical_cq()
        law = build_input_law({"0": 0.6, "1": 0.25, "2": 0.15}, 0.4, 1.0, 4, "0")
        tab = classical_tables(sc)
        err = {"a": 0.0, "b": 0.0}
        for seq in itertools.product(sc.alphabet, repeat=4):
            w = law.sequence_prob(seq)
            if w == 0:
                continue
            for ys in itertools.product(range(2), repeat=4):
                pa = math.prod(tab[("a", u)][y] for u, y in zip(seq, ys))
                pb = math.prod(tab[("b", u)][y] for u, y in zip(seq, ys))
                if pa + pb == 0:
                    continue
                # PGM on commuting states announces theta with posterior probability
                err["a"] += w * pa * pb / (pa + pb)
                err["b"] += w * pb * pa / (pa + pb)
        res = strategy_error_exact(sc, law)
        assert res.per_theta_error["a"] == pytest.approx(err["a"], abs=1e-12)
        assert res.per_theta_error["b"] == pytest.approx(err["b"], abs=1e-12)

    def test_below_sequence_bound(self):
        checked = 0
        cases = [(classical_cq(), {"1": 0.5, "2": 0.5}, 1.0), (quantum_cq(), {"1": 0.5, "2": 0.5}, 1.0),
                 (bsc(0.01), {"1": 1.0}, 0.3)]
        for sc, pbar, zeta in cases:
            for alpha in (0.5, 0.9):
                for n in (2, 4, 6, 8):
                    law = build_input_law(design_input_pmf(sc, pbar, alpha), alpha, zeta, n, "0")
                    bound = sequence_lemma6_bound(sc, law)
                    if bound <= 1:
                        checked += 1
                        assert strategy_error_exact(sc, law).error <= bound
        assert checked >= 4

    def test_scale(self):
        sc = quantum_cq()
        law = build_input_law({"0": 0.8, "1": 0.1, "2": 0.1}, 0.2, 1.0, 13, "0")
        with pytest.raises(ScaleExceeded):
            strategy_error_exact(sc, law)


class TestClassical:
    def test_not_classical(self):
        with pytest.raises(NotClassical):
            classical_tables(quantum_cq())

    def test_ml_error_enumeration(self):
        tab = classical_tables(bsc())
        counts = {"0": 2, "1": 3}
        seq = ["0"] * 2 + ["1"] * 3
        ea = eb = 0.0
        for ys in itertools.product(range(2), repeat=5):
            pa = math.prod(tab[("a", u)][y] for u, y in zip(seq, ys))
            pb = math.prod(tab[("b", u)][y] for u, y in zip(seq, ys))
            if pa < pb:
                ea += pa
            elif pa > pb:
                eb += pb
            else:
                ea += pa / 2
                eb += pb / 2
        got = classical_ml_error(tab, "a", "b", counts)
        assert got == pytest.approx((ea, eb), abs=1e-14)

    def test_ml_error_ternary_outputs(self, rng):
        p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        tab = {("a", "1"): p, ("b", "1"): q}
        ea = eb = 0.0
        for ys in itertools.product(range(3), repeat=4):
            pa, pb = math.prod(p[list(ys)]), math.prod(q[list(ys)])
            ea += pa if pa < pb else 0.0
            eb += pb if pb < pa else 0.0
        assert classical_ml_error(tab, "a", "b", {"1": 4}) == pytest.approx((ea, eb), abs=1e-14)


class TestRegression:
    def test_identical_channels(self):
        sc = bsc()
        same = CqScenario(sc.params, sc.alphabet, {k: bern(0.5) for k in sc.bob}, sc.willie, "0")
        res = exponent_regression(same, {"1": 1.0}, [0.1], [64, 128, 256], 200, seed=3)
        assert abs(res.slope) < 1e-9

    def test_slope_matches_dcc(self):
        sc = bsc()
        res = exponent_regression(sc, {"1": 1.0}, [0.05, 0.1], [64, 128, 256, 512], 100_000, seed=1)
        d = expected_slope(sc, {"1": 1.0})
        assert res.slope == pytest.approx(d, rel=0.15)

    def test_slope_linear_in_alpha(self):
        sc = bsc()
        res = exponent_regression(sc, {"1": 1.0}, [0.05, 0.1], [64, 128, 256, 512], 100_000, seed=2)
        s_small, s_big = res.per_alpha[0.05][2], res.per_alpha[0.1][2]
        assert s_big / s_small == pytest.approx(2.0, rel=0.15)

    def test_deterministic_and_columnar(self):
        sc = bsc()
        a = exponent_regression(sc, {"1": 1.0}, [0.1], [64, 128], 500, seed=9)
        b = exponent_regression(sc, {"1": 1.0}, [0.1], [64, 128], 500, seed=9)
        assert a.records == b.records
        lines = a.to_columnar().splitlines()
        assert lines[0] == ",".join(a.columns)
        assert len(lines) == 3
        for r in a.records:
            assert r[4] <= r[3] <= r[5]

    def test_not_classical(self):
        with pytest.raises(NotClassical):
            exponent_regression(quantum_cq(), {"1": 1.0}, [0.1], [8], 10, seed=0)


def test_povm_check_rejects():
    assert not Povm({0: np.eye(2), 1: np.eye(2)}).check()
    assert not Povm({0: np.diag([1.5, 0.5]), 1: np.diag([-0.5, 0.5])}).check()
