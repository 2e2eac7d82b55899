"""Command-line front end.

Subcommands mirror the library's analyses:

    incodim check-compat  --input pair.json
    incodim chi           --input pair.json
    incodim threshold     --tol 1e-3 --grid 64 [--plot]
    incodim witness       --input problem.json
    incodim sweep         --input sweep.json [--plot]

Inputs are JSON documents holding either Bloch-form qubit pairs
({"bloch": {"a": [..], "b": [..]}} or {"bloch": {"t": ..}} for the mutually
unbiased pair) or explicit observables/states with complex matrices encoded
as nested [re, im] pairs.  Reports echo the effective tolerances and seed.

Exit codes: 0 success, 2 parse error, 3 precondition violated, 4 search
exhausted, 5 numerical ambiguity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import (
    IncodimError,
    NotIncompatible,
    OracleAmbiguous,
    ParamOutOfRange,
    ParseError,
    PreconditionViolated,
)
from .feasibility import (
    FeasibilityProblem,
    SolverOptions,
    Status,
    binary_pair_compatible,
    busch_compatible,
    joint_feasible,
)
from .mub import SQRT2_INV, SearchOptions, chi_incomp_mub, find_threshold, sweep_rows
from .operators import BinaryQubitObservable, Effect, Observable, State
from .subsets import StateSubset, chi_bounds
from .witness import WitnessSearchOptions, search_witness, verify_witness

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_EXHAUSTED = 4
EXIT_AMBIGUOUS = 5

CSV_COLUMNS = ("t", "phi0", "psi0", "xi1_min", "xi1_max", "xi2_min", "xi2_max", "Z", "compatible")

log = logging.getLogger("incodim")


def _parse_matrix(obj, where: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a numeric array ({exc})")
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ParseError(f"{where}: expected a d x d array of [re, im] pairs, got shape {arr.shape}")
    return arr[:, :, 0] + 1j * arr[:, :, 1]


def _encode_matrix(m: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _parse_observables(doc: dict) -> list:
    observables = []
    for i, effect_list in enumerate(doc["observables"]):
        if not isinstance(effect_list, list) or len(effect_list) < 2:
            raise ParseError(f"observables[{i}]: need a list of at least two effects")
        effects = {}
        labels = []
        for x, raw in enumerate(effect_list):
            label = str(x)
            try:
                effects[label] = Effect(_parse_matrix(raw, f"observables[{i}][{x}]"))
            except IncodimError as exc:
                raise ParseError(f"observables[{i}][{x}]: {exc}")
            labels.append(label)
        try:
            observables.append(Observable(tuple(labels), effects))
        except IncodimError as exc:
            raise ParseError(f"observables[{i}]: {exc}")
    return observables


def _parse_states(doc: dict) -> list:
    states = []
    for i, raw in enumerate(doc.get("states", [])):
        try:
            states.append(State(_parse_matrix(raw, f"states[{i}]")))
        except IncodimError as exc:
            raise ParseError(f"states[{i}]: {exc}")
    return states


def _load_input(path) -> dict:
    if path is None:
        raise ParseError("this command requires --input")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    known = {"bloch", "observables", "states", "t"}
    unknown = set(doc) - known
    if unknown:
        raise ParseError(f"{path}: unknown keys {sorted(unknown)}")
    return doc


def _bloch_vector(obj, where: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (3,):
        raise ParseError(f"{where}: expected a 3-vector")
    if np.linalg.norm(arr) > 1.0 + 1e-12:
        raise ParseError(f"{where}: Bloch vector norm {np.linalg.norm(arr):.6f} exceeds 1")
    return arr


def _solver_options(args) -> SolverOptions:
    return SolverOptions(
        tol_marginal=args.tol_marginal,
        tol_psd=args.tol_psd,
        tol_gap=args.tol_gap,
    )


def _effective(args) -> dict:
    return {
        "tol_marginal": args.tol_marginal,
        "tol_psd": args.tol_psd,
        "tol_gap": args.tol_gap,
        "grid_n": args.grid,
        "threads": args.threads,
        "seed": args.seed,
    }


def _emit_report(report: dict, args) -> None:
    if args.format == "csv" and "rows" not in report:
        lines = ["key,value"]
        for key, value in sorted(report.items()):
            lines.append(f"{key},{json.dumps(value, sort_keys=True)}")
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_to_csv(rows: list) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        cells = []
        for col in CSV_COLUMNS:
            v = row[col]
            cells.append("true" if v is True else "false" if v is False else repr(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_check_compat(args) -> int:
    doc = _load_input(args.input)
    report = {"command": "check-compat", **_effective(args)}
    if "bloch" in doc:
        blk = doc["bloch"]
        unknown = set(blk) - {"a", "b", "t", "w1", "w2"}
        if unknown:
            raise ParseError(f"bloch: unknown keys {sorted(unknown)}")
        if "t" in blk and "a" not in blk:
            t = float(blk["t"])
            a = np.array([t, 0.0, 0.0])
            b = np.array([0.0, t, 0.0])
        else:
            a = _bloch_vector(blk.get("a"), "bloch.a")
            b = _bloch_vector(blk.get("b"), "bloch.b")
        w1 = float(blk.get("w1", 0.0))
        w2 = float(blk.get("w2", 0.0))
        if w1 == 0.0 and w2 == 0.0:
            compatible = busch_compatible(a, b)
            residual = 2.0 - float(np.linalg.norm(a + b) + np.linalg.norm(a - b))
            report.update(compatible=compatible, method="busch", residual=residual)
        else:
            try:
                pair = BinaryQubitObservable(w1, a), BinaryQubitObservable(w2, b)
            except IncodimError as exc:
                raise ParseError(f"bloch: {exc}")
            compatible = binary_pair_compatible(*pair)
            report.update(compatible=compatible, method="pair-criterion", residual=None)
    elif "observables" in doc:
        observables = _parse_observables(doc)
        states = _parse_states(doc)
        result = joint_feasible(
            FeasibilityProblem(tuple(observables), tuple(states)), _solver_options(args)
        )
        report.update(
            compatible=result.status.value if result.status is Status.AMBIGUOUS
            else result.status is Status.FEASIBLE,
            method="oracle",
            residual=result.residual,
            iterations=result.iterations,
        )
        if result.status is Status.AMBIGUOUS:
            _emit_report(report, args)
            return EXIT_AMBIGUOUS
    else:
        raise ParseError("input needs either a 'bloch' or an 'observables' section")
    _emit_report(report, args)
    return EXIT_OK


def cmd_chi(args) -> int:
    doc = _load_input(args.input)
    report = {"command": "chi", **_effective(args)}
    if "bloch" in doc or "t" in doc:
        t = float(doc["bloch"]["t"] if "bloch" in doc else doc["t"])
        if not 0.0 <= t <= 1.0:
            raise ParseError(f"t = {t!r} outside [0, 1]")
        report["t"] = t
        if t <= SQRT2_INV + 1e-9:
            report.update(chi_incomp="undefined", chi_comp="undefined",
                          note="pair is compatible at this noise level")
        else:
            opts = SearchOptions(grid_n=args.grid)
            report.update(chi_incomp=chi_incomp_mub(t, opts), chi_comp=3)
    elif "observables" in doc:
        observables = _parse_observables(doc)
        try:
            incomp, comp = chi_bounds(observables, _solver_options(args))
        except NotIncompatible:
            report.update(chi_incomp="undefined", chi_comp="undefined",
                          note="observables are compatible")
            _emit_report(report, args)
            return EXIT_OK
        report["chi_incomp"] = {
            "lower": incomp.lower, "upper": incomp.upper,
            "exact": incomp.exact, "certificate": incomp.certificate,
        }
        report["chi_comp"] = {
            "lower": comp.lower, "upper": comp.upper,
            "exact": comp.exact, "certificate": comp.certificate,
        }
    else:
        raise ParseError("input needs a 'bloch'/'t' entry or an 'observables' section")
    _emit_report(report, args)
    return EXIT_OK


def _sweep_to_files(rows: list, args, default_stem: str) -> tuple:
    stem = os.path.splitext(args.out)[0] if args.out else default_stem
    csv_path = stem + "_sweep.csv"
    with open(csv_path, "w") as fh:
        fh.write(_rows_to_csv(rows))
    figure_path = None
    if args.plot:
        from .plots import sweep_figure

        figure_path = sweep_figure(rows, stem + "_sweep.png")
    return csv_path, figure_path


def cmd_threshold(args) -> int:
    if args.tol < 1e-5:
        raise ParamOutOfRange(f"--tol {args.tol} < 1e-5")
    opts = SearchOptions(grid_n=args.grid)
    trace = []
    t0 = find_threshold(args.tol, opts, trace=trace)
    sample_ts = [t0 - args.tol, t0, t0 + args.tol]
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        row_chunks = list(pool.map(lambda t: sweep_rows(t, args.grid), sample_ts))
    rows = [row for chunk in row_chunks for row in chunk]
    csv_path, figure_path = _sweep_to_files(rows, args, "threshold")
    report = {
        "command": "threshold",
        "t0": t0,
        "tol": args.tol,
        "lower_bound": SQRT2_INV,
        "evaluations": [{"t": t, "chi_incomp": chi} for t, chi in trace],
        "sweep_artifact_path": csv_path,
        **_effective(args),
    }
    if args.plot:
        from .plots import threshold_figure

        report["figure_path"] = threshold_figure(
            trace, t0, (os.path.splitext(args.out)[0] if args.out else "threshold") + ".png"
        )
        report["sweep_figure_path"] = figure_path
    _emit_report(report, args)
    return EXIT_OK


def cmd_witness(args) -> int:
    doc = _load_input(args.input)
    if "observables" not in doc or "states" not in doc:
        raise ParseError("witness input needs 'observables' and 'states'")
    observables = _parse_observables(doc)
    states = _parse_states(doc)
    if not states:
        raise ParseError("witness input needs a nonempty 'states' list")
    subset = StateSubset(tuple(states))
    opts = WitnessSearchOptions(seed=args.seed)
    witness = search_witness(observables, subset, opts, _solver_options(args))
    report = {"command": "witness", **_effective(args)}
    if witness is None:
        report.update(found=False, note="search budget exhausted")
        _emit_report(report, args)
        return EXIT_EXHAUSTED
    check = verify_witness(witness, observables, opts)
    report.update(
        found=True,
        witness={
            "delta": witness.delta,
            "coeffs": [list(per) for per in witness.coeffs],
            "states": [[_encode_matrix(s.matrix) for s in per] for per in witness.states],
        },
        verification={
            "value_on_input": check.value_on_target,
            "max_value_on_probed_compatible": check.max_on_compatible,
            "n_starts": check.n_starts,
        },
    )
    _emit_report(report, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = _load_input(args.input)
    if "t" not in doc:
        raise ParseError("sweep input needs 't' (number or list of numbers)")
    raw_t = doc["t"]
    t_values = [float(t) for t in (raw_t if isinstance(raw_t, list) else [raw_t])]
    for t in t_values:
        if not 0.0 < t <= 1.0:
            raise ParseError(f"t = {t!r} outside (0, 1]")
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        chunks = list(pool.map(lambda t: sweep_rows(t, args.grid), t_values))
    rows = [row for chunk in chunks for row in chunk]
    if args.format == "json":
        report = {"command": "sweep", "rows": rows, **_effective(args)}
        _emit_report(report, args)
    else:
        text = _rows_to_csv(rows)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    if args.plot:
        from .plots import sweep_figure

        stem = os.path.splitext(args.out)[0] if args.out else "sweep"
        sweep_figure(rows, stem + ".png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incodim",
        description="State-restricted joint measurability: compatibility checks, "
        "incompatibility dimensions, noise thresholds and witnesses.",
    )
    parser.add_argument("--version", action="version", version=f"incodim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", help="path to a JSON input document")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default=None)
        p.add_argument("--seed", type=int, default=0, help="PRNG seed (default 0)")
        p.add_argument("--grid", type=int, default=64, help="search grid resolution (>= 16)")
        p.add_argument("--threads", type=int, default=1, help="sweep worker threads")
        p.add_argument("--tol-marginal", type=float, default=1e-9, dest="tol_marginal")
        p.add_argument("--tol-psd", type=float, default=1e-9, dest="tol_psd")
        p.add_argument("--tol-gap", type=float, default=1e-6, dest="tol_gap")
        p.add_argument("--plot", action="store_true", help="render figures next to the output")

    p = sub.add_parser("check-compat", help="decide compatibility of a pair or tuple")
    common(p)
    p.set_defaults(func=cmd_check_compat, format_default="json")

    p = sub.add_parser("chi", help="incompatibility/compatibility dimensions")
    common(p)
    p.set_defaults(func=cmd_chi, format_default="json")

    p = sub.add_parser("threshold", help="locate the noise threshold of the unbiased pair")
    common(p)
    p.add_argument("--tol", type=float, default=1e-3, help="bisection tolerance (>= 1e-5)")
    p.set_defaults(func=cmd_threshold, format_default="json")

    p = sub.add_parser("witness", help="search an incompatibility witness on a state subset")
    common(p)
    p.set_defaults(func=cmd_witness, format_default="json")

    p = sub.add_parser("sweep", help="chord-grid diagnostics at one or more noise levels")
    common(p)
    p.set_defaults(func=cmd_sweep, format_default="csv")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("INCODIM_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.format_default
    if args.grid < 16:
        parser.exit(EXIT_PARSE, "error: --grid must be at least 16\n")
    if args.threads < 1:
        parser.exit(EXIT_PARSE, "error: --threads must be at least 1\n")
    try:
        return args.func(args)
    except ParseError as exc:
        log.error("parse error: %s", exc)
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except PreconditionViolated as exc:
        sys.stderr.write(f"precondition violated: {exc}\n")
        return EXIT_PRECONDITION
    except OracleAmbiguous as exc:
        sys.stderr.write(f"numerical ambiguity: {exc}\n")
        return EXIT_AMBIGUOUS
    except IncodimError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
