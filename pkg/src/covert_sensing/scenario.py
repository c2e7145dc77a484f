"""Classical-quantum covert sensing scenarios and their admissibility checks."""

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .divergence import ChernoffKernel
from .errors import DimensionMismatch, UnknownParameter, UnknownSymbol
from .qmat import density_operator, lambda_min, support_projector, trace_norm
from .simplex import simplex_least_squares

EQUALITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CqScenario:
    """Parameter set, input alphabet and Bob/Willie output tables.

    ``bob[(theta, u)]`` and ``willie[(theta, u)]`` are density operators;
    ``innocent`` is the symbol Willie expects when nothing happens.
    """

    params: tuple
    alphabet: tuple
    bob: Mapping
    willie: Mapping
    innocent: object = 0
    _kernels: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        if len(set(self.params)) != len(self.params) or not self.params:
            raise ValueError("parameter ids must be distinct and non-empty")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet symbols must be distinct")
        if self.innocent not in self.alphabet:
            raise UnknownSymbol(self.innocent)
        bob, willie = {}, {}
        for name, table, out in (("bob", self.bob, bob), ("willie", self.willie, willie)):
            dims = set()
            for t in self.params:
                for u in self.alphabet:
                    if (t, u) not in table:
                        raise KeyError(f"{name} table missing entry ({t!r}, {u!r})")
                    out[(t, u)] = density_operator(table[(t, u)])
                    dims.add(out[(t, u)].shape[0])
            if len(dims) != 1:
                raise DimensionMismatch(f"{name} states have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "bob", bob)
        object.__setattr__(self, "willie", willie)

    @property
    def dim_b(self) -> int:
        return self.bob[(self.params[0], self.innocent)].shape[0]

    @property
    def dim_w(self) -> int:
        return self.willie[(self.params[0], self.innocent)].shape[0]

    @property
    def active_symbols(self) -> tuple:
        """Alphabet without the innocent symbol."""
        return tuple(u for u in self.alphabet if u != self.innocent)

    def chernoff_kernel(self, theta, theta_prime, u) -> ChernoffKernel:
        for t in (theta, theta_prime):
            if t not in self.params:
                raise UnknownParameter(t)
        if u not in self.alphabet:
            raise UnknownSymbol(u)
        key = (theta, theta_prime, u)
        if key not in self._kernels:
            self._kernels[key] = ChernoffKernel.from_states(self.bob[(theta, u)], self.bob[(theta_prime, u)])
        return self._kernels[key]

    def willie_mixture(self, theta, P: Mapping) -> np.ndarray:
        """``sum_u P(u) rho_W|theta^u``."""
        return sum(p * self.willie[(theta, u)] for u, p in P.items() if p)

    def relabel(self, param_map: Mapping = None, symbol_map: Mapping = None) -> "CqScenario":
        """Copy with renamed parameters / symbols (maps old id -> new id)."""
        pm = dict(param_map or {})
        sm = dict(symbol_map or {})

        def t_(t):
            return pm.get(t, t)

        def u_(u):
            return sm.get(u, u)

        return CqScenario(
            params=tuple(t_(t) for t in self.params),
            alphabet=tuple(u_(u) for u in self.alphabet),
            bob={(t_(t), u_(u)): m for (t, u), m in self.bob.items()},
            willie={(t_(t), u_(u)): m for (t, u), m in self.willie.items()},
            innocent=u_(self.innocent),
        )


@dataclass(frozen=True)
class ScenarioAnalysis:
    theta_tilde: tuple
    zero_equiv_pairs: tuple
    assumption_flags: tuple
    diagnostics: dict
    lambda_min_table: dict

    @property
    def all_pass(self) -> bool:
        return all(self.assumption_flags)


def zero_equivalent_pairs(scen: CqScenario, tol: float = EQUALITY_TOL) -> list:
    """Unordered pairs whose innocent Bob outputs agree in trace norm within ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = scen.innocent
    return [
        (a, b)
        for a, b in itertools.combinations(scen.params, 2)
        if trace_norm(scen.bob[(a, z)] - scen.bob[(b, z)]) <= tol
    ]


def _real_vec(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m.real.ravel(), m.imag.ravel()])


def simulability_residual(scen: CqScenario, theta, restarts: int = 10, iters: int = 10_000):
    """Smallest ``||sum_u P(u) rho_W^u - rho_W^0||_2`` over PMFs on active symbols."""
    active = scen.active_symbols
    target = _real_vec(scen.willie[(theta, scen.innocent)])
    if not active:
        return None, float("inf")
    A = np.stack([_real_vec(scen.willie[(theta, u)]) for u in active], axis=1)
    p, r = simplex_least_squares(A, target, restarts=restarts, iters=iters, rng=np.random.default_rng(0))
    return dict(zip(active, p.tolist())), r


def check_assumptions(scen: CqScenario, tol: float = EQUALITY_TOL) -> ScenarioAnalysis:
    """Evaluate the three admissibility assumptions of a cq scenario.

    1. some pair of parameters shares the innocent Bob output;
    2. for some parameter, no mixture of active symbols reproduces Willie's
       innocent output (residual above ``tol``);
    3. every Willie output lives inside the support of the innocent output.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pairs = zero_equivalent_pairs(scen, tol)
    tilde = tuple(t for t in scen.params if any(t in p for p in pairs))
    residuals = {}
    for t in scen.params:
        _, r = simulability_residual(scen, t)
        residuals[t] = r
    leaks = {}
    for t in scen.params:
        pi0 = support_projector(scen.willie[(t, scen.innocent)])
        eye = np.eye(pi0.shape[0])
        for u in scen.alphabet:
            leaks[(t, u)] = float(np.real(np.trace((eye - pi0) @ scen.willie[(t, u)])))
    flag1 = bool(tilde)
    flag2 = any(r > tol for r in residuals.values())
    flag3 = all(v <= tol for v in leaks.values())
    diagnostics = {
        "simulability_residual": residuals,
        "support_leak": leaks,
        "non_simulable_params": tuple(t for t, r in residuals.items() if r > tol),
    }
    lam = {t: lambda_min(scen.willie[(t, scen.innocent)]) for t in scen.params}
    return ScenarioAnalysis(tilde, tuple(pairs), (flag1, flag2, flag3), diagnostics, lam)
