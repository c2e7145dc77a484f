"""Command-line front end.

Exit codes: 0 success, 1 parse or usage error, 2 violated modelling
assumption, 3 request beyond the exact-computation budget.

Every numeric report field is a ``{"value", "unit"}`` pair; tables carry
``columns``, ``units`` and ``rows``.  The report body is deterministic; the
only varying content (a timestamp) sits in a leading ``#`` header line.
"""

import argparse
import datetime
import json
import math
import sys

import numpy as np

from . import __version__
from .covert_exponent import (
    SLACK_TERMS,
    achievability_kernel,
    build_input_law,
    covertness_bound,
    design_input_pmf,
    exact_covertness,
    optimize_exponent,
    sample_types,
)
from .discriminate import (
    classical_ml_error,
    classical_tables,
    pgm,
    sequence_lemma6_bound,
    strategy_error_exact,
)
from .divergence import expansion_check
from .errors import AssumptionViolated, CovertSensingError, NotClassical, ScaleExceeded, ScenarioParseError
from .geometry import lemma5_check, ratio_probe
from .qmat import projector, tensor
from .scenario import CqScenario, check_assumptions
from .scenario_io import load
from .unitary_strategy import (
    UnitaryScenario,
    build_block_strategy,
    check_support_condition,
    covertness_certificate,
    global_pgm_error,
    phase_spread,
    strategy_zero_error_check,
)

EXIT_OK, EXIT_PARSE, EXIT_ASSUMPTION, EXIT_SCALE = 0, 1, 2, 3
LN2 = math.log(2.0)
_BITS = {"nats": ("bits", 1.0 / LN2), "sqrt(nats)": ("sqrt(bits)", 1.0 / math.sqrt(LN2))}


def q(value, unit: str) -> dict:
    """Unit-labelled scalar; ``None`` stays ``None``."""
    if value is None:
        return {"value": None, "unit": unit}
    v = float(value)
    return {"value": v if math.isfinite(v) else str(v), "unit": unit}


def table(columns, units, rows) -> dict:
    return {"columns": list(columns), "units": list(units),
            "rows": [[_num(x) for x in r] for r in rows]}


def _num(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def to_bits(obj):
    """Convert every nats-valued quantity (scalars and table columns) to bits."""
    if isinstance(obj, dict):
        if set(obj) == {"value", "unit"} and obj["unit"] in _BITS:
            unit, f = _BITS[obj["unit"]]
            v = obj["value"]
            return {"value": v * f if isinstance(v, float) else v, "unit": unit}
        if set(obj) == {"columns", "units", "rows"}:
            factors = [(_BITS[u][1] if u in _BITS else 1.0) for u in obj["units"]]
            rows = [[x * f if isinstance(x, float) and f != 1.0 else x for x, f in zip(r, factors)]
                    for r in obj["rows"]]
            return {"columns": obj["columns"], "units": [_BITS[u][0] if u in _BITS else u for u in obj["units"]],
                    "rows": rows}
        return {k: to_bits(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [to_bits(v) for v in obj]
    return obj


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def render_text(report: dict) -> str:
    """Aligned ``key  value  unit`` lines; tables as aligned columns."""
    lines = []

    def walk(obj, prefix):
        if isinstance(obj, dict) and set(obj) == {"value", "unit"}:
            lines.append((prefix, _fmt_value(obj["value"]), obj["unit"]))
        elif isinstance(obj, dict) and set(obj) == {"columns", "units", "rows"}:
            lines.append((prefix, "", "table"))
            head = [f"{c} [{u}]" for c, u in zip(obj["columns"], obj["units"])]
            body = [[_fmt_value(x) for x in r] for r in obj["rows"]]
            widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(head)]
            for row in [head] + body:
                lines.append(("  " + "  ".join(c.rjust(w) for c, w in zip(row, widths)), None, None))
        elif isinstance(obj, dict):
            for k in obj:
                walk(obj[k], f"{prefix}.{k}" if prefix else str(k))
        elif isinstance(obj, list) and obj and all(isinstance(x, dict) for x in obj):
            for i, x in enumerate(obj):
                walk(x, f"{prefix}[{i}]")
        else:
            lines.append((prefix, _fmt_value(obj) if not isinstance(obj, list) else json.dumps(obj), ""))

    walk(report, "")
    width = max((len(k) for k, v, _ in lines if v is not None), default=0)
    out = []
    for k, v, u in lines:
        if v is None:
            out.append(k)
        else:
            out.append(f"{k.ljust(width)}  {v}  {u}".rstrip())
    return "\n".join(out) + "\n"


def _pmf_table(P: dict) -> dict:
    return {str(u): q(p, "probability") for u, p in P.items()}


def _opt(args, options, name, default=None):
    v = getattr(args, name, None)
    return v if v is not None else options.get(name, default)


def _need(kind, scen, cls):
    if not isinstance(scen, cls):
        raise ScenarioParseError(f"command needs a {kind} scenario", "kind")


def cmd_check(scen, options, args) -> dict:
    tol = _opt(args, options, "tol", 1e-9)
    if isinstance(scen, CqScenario):
        a = check_assumptions(scen, tol)
        d = a.diagnostics
        return {
            "kind": "cq",
            "assumption_flags": {"zero_equivalent_pair": a.assumption_flags[0],
                                 "not_simulable": a.assumption_flags[1],
                                 "support_contained": a.assumption_flags[2]},
            "all_pass": a.all_pass,
            "theta_tilde": [str(t) for t in a.theta_tilde],
            "zero_equivalent_pairs": [[str(x), str(y)] for x, y in a.zero_equiv_pairs],
            "simulability_residual": {str(t): q(r, "frobenius norm") for t, r in d["simulability_residual"].items()},
            "support_leak": table(["theta", "u", "leak"], ["id", "id", "probability"],
                                  [[str(t), str(u), v] for (t, u), v in d["support_leak"].items()]),
            "lambda_min": {str(t): q(v, "dimensionless") for t, v in a.lambda_min_table.items()},
        }
    leak = check_support_condition(scen)
    distinct = {f"{a}|{b}": phase_spread(scen.relative(a, b)) > 1e-10 for a, b in scen.pairs()}
    return {
        "kind": "unitary",
        "assumption_flags": {"pairwise_distinct": all(distinct.values()), "support_contained": leak <= 1e-9},
        "pairwise_distinct": distinct,
        "support_leak": q(leak, "probability"),
    }


def cmd_exponent(scen, options, args) -> dict:
    _need("cq", scen, CqScenario)
    tol = _opt(args, options, "tol", 1e-9)
    rep = optimize_exponent(scen, restarts=args.restarts, seed=_opt(args, options, "seed", 0),
                            threads=args.threads, tol=tol)
    return {
        "achievable_rate": q(rep.achievable_rate, "sqrt(nats)"),
        "P_star": _pmf_table(rep.P_star),
        "per_pair_dcc": table(["theta", "theta_prime", "dcc"], ["id", "id", "nats"],
                              [[str(a), str(b), v] for (a, b), v in rep.per_pair_dcc.items()]),
        "worst_eta": q(rep.worst_eta, "nats"),
        "worst_eta_theta": str(rep.worst_eta_theta),
        "slack": dict(SLACK_TERMS),
    }


def _pbar(scen, options, args):
    try:
        raw = json.loads(args.pbar) if args.pbar else options.get("pbar")
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, "--pbar") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ScenarioParseError("expected a JSON object", "--pbar")
    if raw is None:
        active = scen.active_symbols
        return {u: 1.0 / len(active) for u in active}
    return {str(u): float(p) for u, p in raw.items()}


def cmd_simulate(scen, options, args) -> dict:
    _need("cq", scen, CqScenario)
    n = int(_opt(args, options, "n", 8))
    alpha = float(_opt(args, options, "alpha", 0.1))
    zeta = float(_opt(args, options, "zeta", 1.0))
    seed = int(_opt(args, options, "seed", 0))
    P = design_input_pmf(scen, _pbar(scen, options, args), alpha)
    law = build_input_law(P, alpha, zeta, n, scen.innocent)
    kern = achievability_kernel(scen, law)
    exact = {
        "n": n,
        "input_pmf": _pmf_table(P),
        "admissible_types": len(law.types_Q),
        "mass_A": q(law.mass_A, "probability"),
        "achievability_kernel": table(["theta", "theta_prime", "log_error_kernel"], ["id", "id", "nats"],
                                      [[str(a), str(b), v] for (a, b), v in kern.items()]),
        "covertness_bound": q(covertness_bound(scen, law), "nats"),
    }
    for key, fn, unit in (("exact_covertness", lambda: exact_covertness(scen, law), "nats"),
                          ("strategy_error_exact", lambda: strategy_error_exact(scen, law).error, "probability"),
                          ("lemma6_bound_sequencewise", lambda: sequence_lemma6_bound(scen, law), "probability")):
        try:
            exact[key] = q(fn(), unit)
        except ScaleExceeded as exc:
            exact[key] = {"skipped": str(exc)}
    report = {"exact": exact}
    if args.trials > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        ks = sample_types(law, args.trials, rng)
        uniq, counts = np.unique(ks, return_counts=True)
        errs = []
        try:
            tables = classical_tables(scen)
            method = "classical-ml"
            pairs = [(a, b) for a, b in _pairs(scen)]
            for k in uniq:
                cnt = dict(zip(law.alphabet, law.types_Q[k]))
                e = [max(classical_ml_error(tables, a, b, cnt)) for a, b in pairs]
                errs.append(max(e))
        except NotClassical:
            method = "pgm"
            if scen.dim_b ** n > 4096:
                raise ScaleExceeded(f"dim B^n = {scen.dim_b}^{n} exceeds 4096")
            for k in uniq:
                seq = law.representative(k)
                _, res = pgm({t: tensor(*[scen.bob[(t, u)] for u in seq]) for t in scen.params})
                errs.append(res.error)
        samples = np.repeat(np.array(errs), counts)
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
        report["monte_carlo"] = {
            "method": method,
            "trials": args.trials,
            "records": table(["n", "trials", "empirical_error", "ci_low", "ci_high"],
                             ["count", "count", "probability", "probability", "probability"],
                             [[n, args.trials, mean, max(mean - 1.96 * se, 0.0), mean + 1.96 * se]]),
        }
    return report


def _pairs(scen):
    ps = scen.params
    return [(ps[i], ps[j]) for i in range(len(ps)) for j in range(i + 1, len(ps))]


def cmd_unitary(scen, options, args) -> dict:
    _need("unitary", scen, UnitaryScenario)
    n = int(_opt(args, options, "n", 6))
    m_max = int(_opt(args, options, "m_max", 64))
    st = build_block_strategy(scen, n, m_max)
    overlaps = strategy_zero_error_check(st, scen)
    cert = covertness_certificate(st, scen)
    doc = st.document()
    probe_rows = []
    for row in doc.pop("pairs"):
        for ph, w, idx in zip(row["phases"], row["weights"], row["eigenvector_indices"]):
            probe_rows.append([row["pair"][0], row["pair"][1], row["m"], ph, w, " ".join(map(str, idx))])
    doc["probe_components"] = table(["theta", "theta_prime", "m", "phase_sum", "weight", "eigenvector_indices"],
                                    ["id", "id", "count", "radians", "probability", "id"], probe_rows)
    out = {
        "strategy": doc,
        "overlaps": table(["theta", "theta_prime", "overlap"], ["id", "id", "dimensionless"],
                          [[str(a), str(b), v] for (a, b), v in overlaps.items()]),
        "certificate": {
            "chi2_over_ell": q(cert.chi2_bound, "nats"),
            "coarse_bound": q(cert.coarse_bound, "nats"),
            "exact_covertness": q(cert.exact, "nats"),
        },
    }
    try:
        out["global_pgm_error"] = q(global_pgm_error(st, scen), "probability")
    except ScaleExceeded as exc:
        out["global_pgm_error"] = {"skipped": str(exc)}
    return out


def cmd_geometry(scen, options, args) -> dict:
    _need("unitary", scen, UnitaryScenario)
    seed = int(_opt(args, options, "seed", 0))
    v = lemma5_check(scen.willie, scen.innocent, seed=seed)
    probe = ratio_probe(scen.willie, scen.innocent, args.samples, seed, v.witness_direction)
    return {
        "verdict": v.verdict,
        "kernel_dim": v.kernel_dim,
        "intersection_dim": v.intersection_dim,
        "witness": None if v.witness is None else [_num(x) for x in v.witness],
        "precondition": {"min_ratio": q(v.precondition.min_ratio, "dimensionless"),
                         "collision": v.precondition.collision,
                         "samples": v.precondition.samples},
        "probe": table(list(probe.columns), ["count", "trace distance", "dimensionless", "dimensionless"],
                       [list(r) for r in probe.rows]),
        "probe_signature": probe.signature,
        "probe_running_max": q(probe.running_max, "dimensionless"),
    }


def cmd_expand(scen, options, args) -> dict:
    alphas = [float(a) for a in args.alphas.split(",")]
    rows = []
    if isinstance(scen, CqScenario):
        for t in scen.params:
            for u in scen.active_symbols:
                for a, d, approx, res in expansion_check(scen.willie[(t, u)], scen.willie[(t, scen.innocent)], alphas):
                    rows.append([str(t), str(u), a, d, approx, res])
    else:
        rho0 = scen.innocent_output()
        basis = np.eye(scen.d)
        for k in range(scen.d):
            ket = basis[k]
            if abs(abs(np.vdot(ket, scen.innocent)) - 1.0) < 1e-12:
                continue
            for a, d, approx, res in expansion_check(scen.willie(projector(ket)), rho0, alphas):
                rows.append(["-", str(k), a, d, approx, res])
    return {"expansion": table(["theta", "u", "alpha", "divergence", "second_order", "residual"],
                               ["id", "id", "probability", "nats", "nats", "nats"], rows)}


COMMANDS = {"check": cmd_check, "exponent": cmd_exponent, "simulate": cmd_simulate,
            "unitary": cmd_unitary, "geometry": cmd_geometry, "expand": cmd_expand}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="equality tolerance for assumption checks")
    common.add_argument("--seed", type=int, default=None, help="64-bit master seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent tasks")
    common.add_argument("--bits", action="store_true", help="report information quantities in bits")
    common.add_argument("--format", choices=("text", "machine"), default="text")
    common.add_argument("--no-header", action="store_true", help="omit the timestamp header line")
    p = _Parser(prog="covert-sensing", description="Covert quantum sensing analyses.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("scenario", help="scenario JSON file or bundled fixture name")
        if name == "exponent":
            sp.add_argument("--restarts", type=int, default=20)
        if name == "simulate":
            sp.add_argument("--n", type=int)
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--zeta", type=float)
            sp.add_argument("--trials", type=int, default=0)
            sp.add_argument("--pbar", help='JSON object over active symbols, e.g. \'{"1": 1.0}\'')
        if name == "unitary":
            sp.add_argument("--n", type=int)
            sp.add_argument("--m-max", dest="m_max", type=int)
        if name == "geometry":
            sp.add_argument("--samples", type=int, default=16)
        if name == "expand":
            sp.add_argument("--alphas", default="0.1,0.05,0.02,0.01")
    return p


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        scen, options = load(args.scenario)
        body = COMMANDS[args.command](scen, options, args)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=stderr)
        return EXIT_PARSE
    except AssumptionViolated as exc:
        print(f"assumption violated: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_ASSUMPTION
    except ScaleExceeded as exc:
        print(f"scale exceeded: {exc}", file=stderr)
        return EXIT_SCALE
    except CovertSensingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_ASSUMPTION
    except ValueError as exc:
        print(f"invalid option: {exc}", file=stderr)
        return EXIT_PARSE
    report = {"command": args.command, "scenario": str(args.scenario), "results": body}
    if args.bits:
        report = to_bits(report)
    if not args.no_header:
        stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        stdout.write(f"# covert-sensing {__version__} {stamp}\n")
    if args.format == "machine":
        stdout.write(json.dumps(report, sort_keys=True, indent=1) + "\n")
    else:
        stdout.write(render_text(report))
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
