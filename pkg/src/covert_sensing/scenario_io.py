"""JSON scenario documents: parsing with field diagnostics, emission, bundled fixtures.

Matrices are nested lists of ``[re, im]`` pairs, row by row.  A ``cq``
document carries ``params``, ``alphabet``, ``innocent`` and ``bob`` /
``willie`` tables keyed ``table[param][symbol]``.  A ``unitary`` document
carries ``params``, ``unitaries[param]``, ``willie_kraus`` (list of
matrices) and an optional ``innocent_state`` ket of ``[re, im]`` pairs.
Both may carry an ``options`` object that is passed through untouched.
"""

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CovertSensingError, ScenarioParseError
from .geometry import KrausChannel
from .scenario import CqScenario
from .unitary_strategy import UnitaryScenario

SCHEMA_VERSION = "1.0"
FIXTURES = ("classical_cq", "quantum_cq", "unitary_qubit")


def _matrix(obj, where: str) -> np.ndarray:
    try:
        a = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(f"not a numeric array ({exc})", where) from exc
    if a.ndim != 3 or a.shape[2] != 2:
        raise ScenarioParseError(f"expected rows of [re, im] pairs, got shape {a.shape}", where)
    return a[..., 0] + 1j * a[..., 1]


def _vector(obj, where: str) -> np.ndarray:
    a = np.asarray(obj, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ScenarioParseError(f"expected a list of [re, im] pairs, got shape {a.shape}", where)
    return a[:, 0] + 1j * a[:, 1]


def _emit_matrix(m) -> list:
    m = np.asarray(m, dtype=np.complex128)
    # adding 0.0 folds -0.0 into 0.0 so emitted documents are canonical
    return [[[float(z.real) + 0.0, float(z.imag) + 0.0] for z in row] for row in m]


def _require(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise ScenarioParseError("missing field", f"{where}{key}")
    return doc[key]


def parse_document(doc: dict):
    """Build a scenario from a decoded document.

    Returns:
        (scenario, options) where scenario is a ``CqScenario`` or
        ``UnitaryScenario``.

    Raises:
        ScenarioParseError: with ``where`` naming the offending field.
    """
    if not isinstance(doc, dict):
        raise ScenarioParseError("top level must be an object")
    version = _require(doc, "schema_version")
    if str(version).split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise ScenarioParseError(f"unsupported schema version {version!r}", "schema_version")
    kind = _require(doc, "kind")
    params = [str(p) for p in _require(doc, "params")]
    options = doc.get("options", {})
    try:
        if kind == "cq":
            alphabet = [str(u) for u in _require(doc, "alphabet")]
            innocent = str(_require(doc, "innocent"))
            tables = {}
            for name in ("bob", "willie"):
                raw = _require(doc, name)
                out = {}
                for t in params:
                    row = _require(raw, t, f"{name}.")
                    for u in alphabet:
                        out[(t, u)] = _matrix(_require(row, u, f"{name}.{t}."), f"{name}.{t}.{u}")
                tables[name] = out
            scen = CqScenario(tuple(params), tuple(alphabet), tables["bob"], tables["willie"], innocent)
        elif kind == "unitary":
            raw = _require(doc, "unitaries")
            us = {t: _matrix(_require(raw, t, "unitaries."), f"unitaries.{t}") for t in params}
            kraus = [_matrix(k, f"willie_kraus[{i}]") for i, k in enumerate(_require(doc, "willie_kraus"))]
            ket = doc.get("innocent_state")
            ket = None if ket is None else _vector(ket, "innocent_state")
            scen = UnitaryScenario(tuple(params), us, KrausChannel(tuple(kraus)), ket)
        else:
            raise ScenarioParseError(f"unknown kind {kind!r}", "kind")
    except ScenarioParseError:
        raise
    except (CovertSensingError, ValueError, KeyError) as exc:
        raise ScenarioParseError(str(exc), kind) from exc
    return scen, options


def emit_document(scen, options: dict = None) -> dict:
    """Inverse of :func:`parse_document`."""
    if isinstance(scen, CqScenario):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "cq",
            "params": [str(t) for t in scen.params],
            "alphabet": [str(u) for u in scen.alphabet],
            "innocent": str(scen.innocent),
            "dims": {"B": scen.dim_b, "W": scen.dim_w},
        }
        for name, table in (("bob", scen.bob), ("willie", scen.willie)):
            doc[name] = {str(t): {str(u): _emit_matrix(table[(t, u)]) for u in scen.alphabet} for t in scen.params}
    elif isinstance(scen, UnitaryScenario):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "unitary",
            "params": [str(t) for t in scen.params],
            "dims": {"A": scen.d, "W": scen.d_w},
            "unitaries": {str(t): _emit_matrix(scen.unitaries[t]) for t in scen.params},
            "willie_kraus": [_emit_matrix(k) for k in scen.willie.kraus_ops],
            "innocent_state": [[float(z.real) + 0.0, float(z.imag) + 0.0] for z in scen.innocent],
        }
    else:
        raise TypeError(f"cannot emit {type(scen).__name__}")
    if options:
        doc["options"] = options
    return doc


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return parse_document(doc)


def dumps(scen, options: dict = None) -> str:
    return json.dumps(emit_document(scen, options), indent=1, sort_keys=True) + "\n"


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return resources.files("covert_sensing").joinpath("fixtures", f"{name}.json").read_text()


def load(path_or_fixture):
    """Parse a scenario file, or a bundled fixture by name."""
    p = Path(path_or_fixture)
    if not p.exists() and str(path_or_fixture) in FIXTURES:
        return loads(fixture_text(str(path_or_fixture)))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioParseError(str(exc), str(path_or_fixture)) from exc
    return loads(text)
