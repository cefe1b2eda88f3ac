"""``maxent-phs`` command line: entropy reports, trajectory runs and invariant suites.

Exit codes: 0 success, 2 scenario or argument error, 3 solver failure,
4 invariant violation (failed check or ledger tolerance exceeded).
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import scenario as sc
from .ensembles import COUNT, ENERGY, VOLUME, ideal_gas_state, lambdas_from_intensives, microcanonical_entropy
from .errors import MaxentPhsError, ScenarioError, SolverError, UndefinedTemperature
from .maxent import (
    Distribution,
    EquilibriumSolution,
    boltzmann_distribution,
    intensive_quantities,
    log_partition,
    solve_multipliers,
    statistical_entropy,
)
from .sim import InputSignal, adiabat_column, couple_and_equilibrate, run
from .verify import SUITES, run_suite

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4

# ledger tolerances enforced by ``simulate``
BALANCE_RATIO_TOL = 1e-9
SIGMA_FLOOR = -1e-14
COUPLING_GAP_RTOL = 1e-6
COUPLING_DRIFT_TOL = 1e-8


class InvariantViolation(MaxentPhsError):
    """A ledger or suite check exceeded its tolerance."""


def _fmt(value) -> str:
    return f"{float(value):.16e}"


def _write_csv(stream, headers, rows):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool)
                         else v for v in row])


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


class Output:
    """Routes data to stdout and, when a directory is configured, to files."""

    def __init__(self, settings: dict, quiet: bool):
        self.dir = Path(settings["dir"]) if settings["dir"] else None
        self.format = settings["format"]
        self.settings = settings
        self.quiet = quiet
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def emit(self, text: str):
        if not self.quiet:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")

    def file(self, name: str, text: str):
        if self.dir is not None:
            _write_text(self.dir / name, text)

    def table(self, stem: str, headers, rows, to_stdout=True):
        rows = [list(r) for r in rows]
        if self.format == "json":
            text = json.dumps({"columns": list(headers), "rows": [[float(v) if not isinstance(v, str) else v
                                                                   for v in r] for r in rows]}) + "\n"
            name = f"{stem}.json"
        else:
            buf = io.StringIO()
            _write_csv(buf, headers, rows)
            text = buf.getvalue()
            name = f"{stem}.csv"
        self.file(name, text)
        if to_stdout:
            self.emit(text)


def _report_text(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["quantity", "value"])
    for key, value in _flatten(report):
        writer.writerow([key, _fmt(value) if isinstance(value, float) else value])
    return buf.getvalue()


def _flatten(report, prefix=""):
    for key, value in report.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{name}.")
        elif isinstance(value, (list, tuple)):
            continue
        else:
            yield name, value


# --------------------------------------------------------------------------
# entropy


def _fixed_multiplier_solution(aset, lambdas, k) -> EquilibriumSolution:
    p = boltzmann_distribution(aset, lambdas, k)
    targets = {lab: p.expectation(aset.column(lab)) for lab in lambdas}
    return EquilibriumSolution(dict(lambdas), log_partition(aset, lambdas, k), p, statistical_entropy(p, k),
                               targets, {lab: 0.0 for lab in lambdas}, k=k, method="fixed-intensives")


def _uniform_solution(aset, k) -> EquilibriumSolution:
    p = Distribution.uniform(aset.omega, aset)
    return EquilibriumSolution({}, microcanonical_entropy(aset.omega, k), p, statistical_entropy(p, k),
                               {}, {}, k=k, method="uniform")


def _solution_report(sol: EquilibriumSolution, settings) -> dict:
    report = sol.to_dict()
    report["entropy_legendre"] = sol.log_partition - sum(sol.lambdas[lab] * sol.targets[lab]
                                                         for lab in sol.targets)
    report["entropy_bits"] = sol.entropy / (sol.k * math.log(2.0))
    try:
        report["intensives"] = intensive_quantities(sol, ENERGY, COUNT, VOLUME)
    except UndefinedTemperature:
        pass
    return report


def _distribution_rows(sol: EquilibriumSolution):
    aset = sol.support
    probs = sol.distribution.probs
    labels = list(aset.labels)
    words = aset.microstates
    for i in range(aset.omega):
        word = " ".join(map(str, words[i].word)) if words is not None else str(i)
        yield [str(i), word, *(float(aset.column(lab)[i]) for lab in labels), float(probs[i])]


def _intensive_sweep(intensives):
    """Split intensives into scalars and the one list-valued sweep (if any)."""
    swept = {key: v for key, v in intensives.items() if isinstance(v, list)}
    if len(swept) > 1:
        raise ScenarioError("ensemble.intensives: at most one quantity may be a list")
    for key, v in intensives.items():
        values = v if isinstance(v, list) else [v]
        for x in values:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ScenarioError(f"ensemble.intensives.{key}: expected finite numbers")
    if not swept:
        return None, [dict(intensives)]
    key, values = next(iter(swept.items()))
    return key, [{**intensives, key: float(v)} for v in values]


def cmd_entropy(doc, args, out: Output) -> int:
    k = sc.info_constant(doc, args.k)
    system = sc.build_system(doc, args.budget, k, sc.planck(doc))
    kind, intensives = sc.ensemble(doc)
    if isinstance(system, sc.IdealGasSystem):
        if not intensives or "T" not in intensives:
            raise ScenarioError("ensemble.intensives.T: the ideal gas needs a temperature (number or list)")
        _, points = _intensive_sweep({"T": intensives["T"]})
        rows = []
        for point in points:
            if not point["T"] > 0:
                raise ScenarioError("ensemble.intensives.T: temperatures must be positive")
            st = ideal_gas_state(system.gas, point["T"])
            rows.append([st.T, st.E_bar, st.S, st.P, st.log_partition])
        out.table("ideal_gas", ["T", "E_bar", "S", "P", "log_partition"], rows)
        return EXIT_OK

    aset = system.aset
    free = dict(system.spec.free)
    sweep_key, points = None, [{}]
    if free:
        sols = [solve_multipliers(aset, free, k=k)]
    elif kind is not None and kind.thermal_contact:
        sweep_key, points = _intensive_sweep(intensives)
        for point in points:
            if "T" in point and not point["T"] > 0:
                raise ScenarioError("ensemble.intensives.T: temperatures must be positive")
        try:
            sols = [_fixed_multiplier_solution(aset, lambdas_from_intensives(kind, p), k) for p in points]
        except KeyError as exc:
            raise ScenarioError(f"ensemble.intensives: {exc}") from exc
        missing = {lab for s in sols for lab in s.lambdas} - set(aset.labels)
        if missing:
            raise ScenarioError(f"ensemble {kind.tag!r} needs functions {sorted(missing)}")
    else:
        sols = [_uniform_solution(aset, k)]

    if sweep_key is not None:
        labels = sorted({lab for s in sols for lab in s.lambdas})
        headers = [sweep_key, *(f"lambda_{lab}" for lab in labels), *(f"mean_{lab}" for lab in labels),
                   "log_partition", "entropy"]
        rows = [[p[sweep_key], *(s.lambdas[lab] for lab in labels), *(s.targets[lab] for lab in labels),
                 s.log_partition, s.entropy] for p, s in zip(points, sols)]
        out.table("sweep", headers, rows)
        return EXIT_OK

    sol = sols[0]
    report = _solution_report(sol, out.settings)
    if kind is not None:
        report["ensemble"] = kind.tag
    out.emit(_report_text(report, out.format))
    out.file("entropy.json", json.dumps(report, indent=2) + "\n")
    if out.dir is not None and aset.omega <= out.settings["max_probs"]:
        headers = ["index", "word", *aset.labels, "probability"]
        out.table("distribution", headers, _distribution_rows(sol), to_stdout=False)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def _initial_state(block, system, energy_fn, extras, storage, k, path) -> np.ndarray:
    if not isinstance(block, dict):
        raise ScenarioError(f"{path}: expected an object")
    values = block.get("extras", {})
    if not isinstance(values, dict):
        raise ScenarioError(f"{path}.extras: expected an object")
    extra_values = {}
    for lab in extras:
        if lab in values:
            extra_values[lab] = sc._number(values, lab, f"{path}.extras")
        elif isinstance(system, sc.IdealGasSystem) and lab in (COUNT, VOLUME):
            extra_values[lab] = system.gas.N if lab == COUNT else system.gas.V
        else:
            raise ScenarioError(f"{path}.extras.{lab}: required initial value is missing")
    given = [key for key in ("entropy", "energy", "T") if key in block]
    if len(given) != 1:
        raise ScenarioError(f"{path}: give exactly one of entropy, energy or T")
    if "entropy" in block:
        S = sc._number(block, "entropy", path)
    elif "energy" in block:
        S = energy_fn.entropy_of_energy(sc._number(block, "energy", path), extra_values)
    else:
        T = sc._number(block, "T", path, positive=True)
        if isinstance(system, sc.IdealGasSystem):
            E = system.gas.energy_at(T, extra_values.get(COUNT))
        elif extras:
            raise ScenarioError(f"{path}.T: a temperature start needs no extra storage; give entropy or energy")
        else:
            E = boltzmann_distribution(system.aset, {ENERGY: -1.0 / T}, k).expectation(system.aset.column(ENERGY))
        S = energy_fn.entropy_of_energy(E, extra_values)
    q = block.get("storage", [0.0] * len(storage))
    if not isinstance(q, list) or len(q) != len(storage):
        raise ScenarioError(f"{path}.storage: expected {len(storage)} numbers")
    return np.array([S, *(extra_values[lab] for lab in extras), *map(float, q)], dtype=float)


def _signal(block) -> InputSignal:
    spec = {}
    for label, value in block.items():
        if isinstance(value, dict):
            spec[label] = (value.get("times"), value.get("values"))
        else:
            spec[label] = value
    try:
        return InputSignal(spec)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"simulate.signal: {exc}") from exc


def _failures_run(ledger, checks, model) -> list[str]:
    failures = []
    ratio = ledger.max_balance_ratio()
    if ratio > BALANCE_RATIO_TOL:
        failures.append(f"power balance ratio {ratio:.3e} exceeds {BALANCE_RATIO_TOL:.0e}")
    min_sigma = float(np.min(ledger.sigma_i))
    if min_sigma < SIGMA_FLOOR:
        failures.append(f"entropy production {min_sigma:.3e} below {SIGMA_FLOOR:.0e}")
    if checks.get("insulated"):
        S = ledger.column("entropy")
        if np.any(np.diff(S) < -1e-12 * np.maximum(1.0, np.abs(S[1:]))):
            failures.append("entropy decreased on an insulated run")
    if "adiabat_rtol" in checks:
        tol = sc._number(checks, "adiabat_rtol", "simulate.checks", positive=True)
        col = adiabat_column(ledger)
        dev = float(np.max(np.abs(col / col[0] - 1.0)))
        if dev > tol:
            failures.append(f"T V^(2/3) deviation {dev:.3e} exceeds {tol:.1e}")
    return failures


def cmd_simulate(doc, args, out: Output) -> int:
    block = sc._get(doc, "simulate", "scenario", dict)
    t_end = sc._number(block, "t_end", "simulate", positive=True)
    dt = sc._number(block, "dt", "simulate", positive=True)
    mode = block.get("mode", "run")
    k = sc.info_constant(doc, args.k)
    system = sc.build_system(doc, args.budget, k, sc.planck(doc))
    phs_block = sc._get(doc, "phs", "scenario", dict)
    extras = tuple(phs_block.get("extras", ()))
    storage = tuple(phs_block.get("storage", ()))
    checks = block.get("checks", {})
    if not isinstance(checks, dict):
        raise ScenarioError("simulate.checks: expected an object")

    if mode == "run":
        model = sc.build_phs(doc, system, k)
        energy_fn = model.hamiltonian.parts[0].energy_fn if hasattr(model.hamiltonian, "parts") \
            else model.hamiltonian.energy_fn
        x0 = _initial_state(sc._get(block, "initial", "simulate"), system, energy_fn, extras, storage, k,
                            "simulate.initial")
        signal = _signal(block.get("signal", {}))
        ledger = run(model, signal, t_end, dt, x0)
        if "volume" in ledger.state_labels and isinstance(system, sc.IdealGasSystem):
            ledger.add_column("T_V_two_thirds", adiabat_column(ledger))
        summary = ledger.summary()
        failures = _failures_run(ledger, checks, model)
        headers, rows = ledger.headers(), list(ledger.rows())
        out.table("ledger", headers, rows, to_stdout=False)
    elif mode == "couple":
        if phs_block.get("kind") != "reversible":
            raise ScenarioError("simulate.mode=couple: phs.kind must be reversible")
        conductance = sc._number(block, "conductance", "simulate")
        if conductance < 0:
            raise ScenarioError("simulate.conductance: must be nonnegative")
        initial = sc._get(block, "initial", "simulate", list)
        if len(initial) != 2:
            raise ScenarioError("simulate.initial: coupling needs two initial states")
        model_a = sc.build_phs(doc, system, k)
        model_b = sc.build_phs(doc, system, k)
        x0 = [_initial_state(b, system, m.hamiltonian.energy_fn, extras, storage, k, f"simulate.initial[{i}]")
              for i, (b, m) in enumerate(zip(initial, (model_a, model_b)))]
        report = couple_and_equilibrate(model_a, model_b, conductance, t_end, dt, x0[0], x0[1])
        summary = report.summary()
        summary["terminal_temperatures"] = [float(report.ledger_a.efforts[-1][0]),
                                            float(report.ledger_b.efforts[-1][0])]
        failures = []
        gap_tol = float(checks.get("gap_rtol", COUPLING_GAP_RTOL))
        if summary["terminal_relative_gap"] > gap_tol:
            failures.append(f"terminal temperature gap {summary['terminal_relative_gap']:.3e} exceeds {gap_tol:.0e}")
        if summary["energy_drift"] > COUPLING_DRIFT_TOL:
            failures.append(f"energy drift {summary['energy_drift']:.3e} exceeds {COUPLING_DRIFT_TOL:.0e}")
        if not summary["hot_to_cold"]:
            failures.append("heat flowed from cold to hot")
        if not summary["entropy_nondecreasing"]:
            failures.append("total entropy decreased")
        Ta = report.ledger_a.effort_array[:, 0]
        Tb = report.ledger_b.effort_array[:, 0]
        rows = [[t, a, b, ea + eb, sa + sb] for t, a, b, ea, eb, sa, sb in zip(
            report.ledger_a.times, Ta, Tb, report.ledger_a.energies, report.ledger_b.energies,
            report.ledger_a.column("entropy"), report.ledger_b.column("entropy"))]
        out.table("coupling", ["time", "T_A", "T_B", "total_energy", "total_entropy"], rows, to_stdout=False)
    else:
        raise ScenarioError(f"simulate.mode: expected run or couple, got {mode!r}")

    summary["violations"] = failures
    text = json.dumps(summary, indent=2) + "\n"
    out.file("summary.json", text)
    out.emit(text)
    if failures:
        raise InvariantViolation("; ".join(failures))
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def cmd_verify(target, args, out: Output) -> int:
    path = Path(target)
    kwargs = {}
    seed = args.seed
    if path.is_file():
        doc = sc.load(path)
        block = doc.get("verify", {})
        names = block.get("suites", list(SUITES))
        seed = int(block.get("seed", seed))
        matrices = []
        phs_block = doc.get("phs", {})
        if phs_block.get("kind") == "matrix":
            matrices.append(("phs.entries", sc._matrix(phs_block.get("entries"), "phs.entries")))
        for name, entries in block.get("skew_matrices", {}).items():
            matrices.append((name, sc._matrix(entries, f"verify.skew_matrices.{name}")))
        if matrices:
            kwargs["skew"] = {"matrices": matrices}
    elif target == "all":
        names = list(SUITES)
    elif target in SUITES:
        names = [target]
    else:
        raise ScenarioError(f"{target!r} is neither a scenario file nor a suite; suites: {sorted(SUITES)}")
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ScenarioError(f"verify.suites: unknown suites {unknown}")
    reports = [run_suite(name, seed, **kwargs.get(name, {})) for name in names]
    lines = [line for r in reports for line in r.lines()]
    if out.format == "json":
        out.emit(json.dumps([{"suite": r.suite, "passed": r.passed,
                              "checks": [vars(c) for c in r.checks]} for r in reports], indent=2))
    else:
        out.emit("\n".join(lines))
    out.file("verify.txt", "\n".join(lines) + "\n")
    failed = [c.name for r in reports for c in r.checks if not c.passed]
    if failed:
        raise InvariantViolation(f"failed checks: {failed}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxent-phs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("entropy", "equilibrium distribution, multipliers and entropy"),
                            ("simulate", "integrate a port-Hamiltonian trajectory"),
                            ("verify", "run invariant suites (scenario file or suite name)")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("target", help="scenario JSON file" + (" or suite name / 'all'" if name == "verify" else ""))
        p.add_argument("--out", help="directory for output files")
        p.add_argument("--format", choices=("csv", "json"), help="table format (default csv)")
        p.add_argument("--k", type=float, help="override the information constant k")
        p.add_argument("--budget", type=int, help="maximum number of enumerated microstates")
        p.add_argument("--seed", type=int, default=0, help="seed for the verify suites")
        p.add_argument("--quiet", action="store_true", help="suppress stdout data")
        p.add_argument("--error-json", action="store_true", help="report errors as JSON on stderr")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, InvariantViolation):
        return EXIT_INVARIANT
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    return EXIT_USAGE


def _thread_limit():
    value = os.environ.get("MAXENT_PHS_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ScenarioError(f"MAXENT_PHS_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ScenarioError("MAXENT_PHS_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.k is not None and not (args.k > 0 and math.isfinite(args.k)):
            raise ScenarioError("--k must be positive and finite")
        if args.budget is not None and args.budget < 1:
            raise ScenarioError("--budget must be >= 1")
        with _thread_limit():
            if args.command == "verify":
                out = Output({"dir": args.out, "format": args.format or "csv", "max_probs": 0}, args.quiet)
                return cmd_verify(args.target, args, out)
            try:
                doc = sc.load(args.target)
            except OSError as exc:
                raise ScenarioError(f"{args.target}: {exc.strerror}") from exc
            out = Output(sc.output_settings(doc, args.out, args.format), args.quiet)
            command = cmd_entropy if args.command == "entropy" else cmd_simulate
            return command(doc, args, out)
    except (MaxentPhsError, ValueError, KeyError, TypeError) as exc:
        code = _exit_code(exc)
        message = str(exc) if not isinstance(exc, KeyError) else str(exc.args[0])
        if args.error_json:
            sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": message,
                                         "exit_code": code}) + "\n")
        else:
            sys.stderr.write(f"maxent-phs {args.command}: {type(exc).__name__}: {message}\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
