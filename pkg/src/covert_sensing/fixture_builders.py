"""Constructors for the bundled scenario fixtures (the JSON files are generated from these)."""

import numpy as np

from .geometry import depolarizing
from .qmat import projector
from .scenario import CqScenario
from .unitary_strategy import UnitaryScenario


def _bern(p: float) -> np.ndarray:
    return np.diag([1.0 - p, p])


def _bloch(x: float, y: float, z: float) -> np.ndarray:
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


def classical_cq() -> CqScenario:
    """Two parameters, diagonal qubit outputs; symbol 1 is a binary symmetric pair."""
    bob = {
        ("a", "0"): _bern(0.5), ("b", "0"): _bern(0.5),
        ("a", "1"): _bern(0.1), ("b", "1"): _bern(0.9),
        ("a", "2"): _bern(0.3), ("b", "2"): _bern(0.6),
    }
    willie = {}
    for t in ("a", "b"):
        willie[(t, "0")] = _bern(0.2)
        willie[(t, "1")] = _bern(0.6)
        willie[(t, "2")] = _bern(0.3)
    return CqScenario(("a", "b"), ("0", "1", "2"), bob, willie, "0")


def quantum_cq() -> CqScenario:
    """Two parameters with non-commuting qubit outputs for Bob and Willie."""
    zero = projector([1.0, 0.0])
    bob = {
        ("a", "0"): zero, ("b", "0"): zero,
        ("a", "1"): _bloch(0.8, 0.0, 0.3), ("b", "1"): _bloch(-0.8, 0.0, 0.3),
        ("a", "2"): _bloch(0.0, 0.6, -0.5), ("b", "2"): _bloch(0.3, -0.6, -0.5),
    }
    willie = {}
    for t, tilt in (("a", 0.1), ("b", -0.1)):
        willie[(t, "0")] = _bloch(0.0, 0.0, 0.6)
        willie[(t, "1")] = _bloch(0.5, tilt, 0.2)
        willie[(t, "2")] = _bloch(-0.3, 0.4, 0.1)
    return CqScenario(("a", "b"), ("0", "1", "2"), bob, willie, "0")


def unitary_qubit() -> UnitaryScenario:
    """Identity versus a quarter-phase gate, Willie behind a depolarizing channel (p = 0.5)."""
    return UnitaryScenario(("I", "S"), {"I": np.eye(2), "S": np.diag([1.0, 1j])}, depolarizing(0.5))


BUILDERS = {"classical_cq": classical_cq, "quantum_cq": quantum_cq, "unitary_qubit": unitary_qubit}
