"""
Command Line
------------

The batch driver of the lab. Every subcommand validates its options with
:class:`~gaugelab.serializer.ExperimentConfigSchema`, writes JSON files
that any other subcommand can read back, and renders a CSV table plus a
short summary.

=====  ================================================
Exit   Meaning
=====  ================================================
0      success
1      bad options, files, or preconditions
2      a solver or inversion failed
3      a scientific check ran and did not hold
=====  ================================================

.. code-block:: bash

    gaugelab dataset --preset quadratic_bump --grid 33 --order 2 --count 8 --out runs/quad
    gaugelab reconstruct --dataset runs/quad/dataset.json --chain second --preset quadratic_bump --out runs/quad
"""

import argparse
import csv
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from marshmallow import ValidationError

from gaugelab import config, logger, presets
from gaugelab.exceptions import ConfigurationError, PropertyFailure, SolverError
from gaugelab.forward import Scenario, SolverEvent, check_eigenvalue, default_solver, solve
from gaugelab.gauge import GaugeFunction, InvariantViolation, boundary_family, gauge_refinement_study, gauge_twin
from gaugelab.grid import Field, GridMismatch, make_bump, normal_derivative
from gaugelab.linearize import ExtractionMethod, verify_linearization
from gaugelab.nonlinearity import NonlinearityKind
from gaugelab.reconstruct import (
    DNDataset, DatasetBuilder, DatasetEvent, InversionEvent, PotentialInversion, ReconstructionResult,
    break_gauge_exp_u, break_gauge_polynomial, fit_second_field, fit_third_field, recover_sine_gordon, select_alpha,
)
from gaugelab.serializer import (
    BoundaryFieldSchema, DNDatasetSchema, DatasetSummarySchema, ExperimentConfigSchema, FieldSchema,
    GaugeReportSchema, ReconstructionResultSchema, ScenarioSchema, SolveSummarySchema, dump, load, read_json,
)
from gaugelab.version import __version__, name

DEFAULT_BUMP = {"center": [0.5, 0.5], "radius": 0.25, "amplitude": 0.5}

CHAIN_ORDER = {"potential": 1, "second": 2, "third": 3, "exp_u": 2, "sine_gordon": 2, "polynomial": 2}
"""The lowest dataset order each inversion chain needs."""


class UsageError(ConfigurationError):
    """Raised when the command line itself cannot be parsed."""


class _Parser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scenario", help="a scenario file")
    common.add_argument("--preset", help=f"a named scenario: {', '.join(sorted(presets.PRESETS))}")
    common.add_argument("--grid", type=int, default=33, help="nodes per side for presets")
    common.add_argument("--seed", type=int, default=config.default_seed)
    common.add_argument("--workers", type=int, default=config.workers)
    common.add_argument("--out", required=True, help="the output directory")

    parser = _Parser(prog=name, description="Inverse source problems for semilinear elliptic equations.")
    parser.add_argument("--version", action="version", version=f"{name} {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("scenario", parents=[common], help="write a scenario file")

    forward = commands.add_parser("forward", parents=[common], help="solve and evaluate the DN map")
    forward.add_argument("--input", help="a boundary datum file; the base datum by default")

    dataset = commands.add_parser("dataset", parents=[common], help="generate a DN dataset")
    dataset.add_argument("--family", choices=["fourier", "hat"], default="fourier")
    dataset.add_argument("--count", type=int, default=8)
    dataset.add_argument("--order", type=int, default=2)
    dataset.add_argument("--method", choices=[m.value for m in ExtractionMethod],
                         default=ExtractionMethod.DIRECT_SOLVE.value)
    dataset.add_argument("--eps", type=float, default=config.default_epsilon)
    dataset.add_argument("--noise", type=float, default=0.0)
    dataset.add_argument("--third-inputs", type=int)

    gauge = commands.add_parser("gauge", parents=[common], help="check gauge invariance under refinement")
    gauge.add_argument("--refine", type=int, nargs="+")
    gauge.add_argument("--family", choices=["fourier", "hat"], default="fourier")
    gauge.add_argument("--count", type=int, default=8)
    gauge.add_argument("--bump", type=float, nargs=4, metavar=("X", "Y", "RADIUS", "AMPLITUDE"))
    gauge.add_argument("--perturb", type=float, default=0.0,
                       help="add a bump of this size to the twin source, which breaks the gauge")

    reconstruct = commands.add_parser("reconstruct", parents=[common], help="run an inversion chain")
    reconstruct.add_argument("--dataset", help="a dataset file")
    reconstruct.add_argument("--chain", choices=sorted(CHAIN_ORDER), default="potential")
    reconstruct.add_argument("--alpha-reg", type=float, help="fixed Tikhonov weight; chosen by grid search if missing")
    reconstruct.add_argument("--prior", help="a field file holding the known second highest coefficient")

    report = commands.add_parser("report", parents=[common], help="render a saved report as CSV")
    report.add_argument("--input", help="a JSON report written by another command")
    return parser


def parse_config(argv: Sequence[str] = None) -> Dict[str, Any]:
    """
    Parses and validates the command line.

    :raises UsageError:
    :raises ~marshmallow.ValidationError:
    """
    raw = {key: value for key, value in vars(build_parser().parse_args(argv)).items() if value is not None}
    if "bump" in raw:
        x, y, radius, amplitude = raw["bump"]
        raw["bump"] = {"center": [x, y], "radius": radius, "amplitude": amplitude}
    return ExperimentConfigSchema().load(raw)


def _scenario(options: Dict[str, Any], n: int = None) -> Scenario:
    if options.get("preset") is not None:
        return presets.build(options["preset"], n or options["grid"])
    return load(ScenarioSchema(), options["scenario"])


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    with path.open("w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _summarize(out: Path, lines: List[str]):
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")


def _output(options: Dict[str, Any]) -> Path:
    out = Path(options["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_scenario(options: Dict[str, Any]) -> int:
    s = _scenario(options)
    out = _output(options)
    dump(ScenarioSchema(), s, out / "scenario.json")
    _summarize(out, [f"scenario {s.name}: {s.a.kind.value} on {s.grid.nx}x{s.grid.ny} nodes"])
    return 0


def cmd_forward(options: Dict[str, Any]) -> int:
    """Solves at one datum and writes the solution, its DN trace and the solver report."""
    s = _scenario(options)
    f = s.f0 if options.get("input") is None else load(BoundaryFieldSchema(), options["input"])
    if f.grid != s.grid:
        raise GridMismatch(f"The datum lives on {f.grid}, the scenario on {s.grid}.")

    u, report = solve(s, f)
    trace = normal_derivative(u)
    eigenvalue = check_eigenvalue(s, u)
    truth_error = None if s.truth is None or options.get("input") is not None else (u - s.truth).max_norm()

    out = _output(options)
    dump(FieldSchema(), u, out / "solution.json")
    dump(BoundaryFieldSchema(), trace, out / "dn_trace.json")
    dump(SolveSummarySchema(), {
        "grid": s.grid, "scenario": s.name, "solution": u, "dn_trace": trace, "report": report,
        "eigenvalue": eigenvalue, "truth_error": truth_error,
    }, out / "forward.json")
    _write_csv(out / "residuals.csv", ["iteration", "residual"], enumerate(report.residual_history))

    lines = [
        f"scenario {s.name}: converged in {report.iterations} iterations, "
        f"residual {report.residual_history[-1]:.3e}, {report.damping_events} damped steps",
        f"eigenvalue of the linearization nearest 0: {eigenvalue:.6e}",
    ]
    if truth_error is not None:
        lines.append(f"max-norm error against the embedded solution: {truth_error:.3e}")
    _summarize(out, lines)
    return 0


def _check_indices(order: int, count: int):
    return tuple(sorted(i % count for i in range(order)))


def cmd_dataset(options: Dict[str, Any]) -> int:
    """
    Generates the dataset and, for divided differences, cross checks one form
    per order against the direct solve at ``ε`` and ``ε / 2``. Nothing is
    written if a solve fails.
    """
    s = _scenario(options)
    inputs = boundary_family(s.grid, options["family"], options["count"])
    method = options["method"]
    builder = DatasetBuilder(method, options["eps"], options["workers"], options.get("third_inputs"))

    def form_computed(order: int, index: tuple):
        logger.debug("Form %s of order %s done", index, order)

    builder.hub.subscribe(DatasetEvent.form_computed, form_computed)
    d = builder.generate(s, inputs, options["order"], options["noise"], options["seed"], options["family"])

    checks = []
    if method is ExtractionMethod.DIVIDED_DIFFERENCE:
        for order in range(1, d.order + 1):
            indices = _check_indices(order, len(inputs))
            report = verify_linearization(s, s.f0, [inputs[i] for i in indices], options["eps"], options["workers"])
            if report.failures:
                raise SolverError(f"Cross check of order {order} failed: {report.failures[0]}")
            checks.append({
                "order": order, "indices": list(indices), "epsilon": report.epsilon,
                "discrepancy": report.discrepancy, "half_step_discrepancy": report.half_step_discrepancy,
                "ratio": report.ratio,
            })

    forms = len(d.first) + len(d.second) + len(d.third)
    out = _output(options)
    dump(DNDatasetSchema(), d, out / "dataset.json")
    summary = {"scenario": s.name, "family": d.family, "order": d.order, "forms": forms, "checks": checks}
    dump(DatasetSummarySchema(), summary, out / "dataset_report.json")
    _render_dataset_summary(out, summary)
    return 0


def _render_dataset_summary(out: Path, summary: Dict[str, Any]):
    _write_csv(out / "linearization.csv", ["order", "indices", "epsilon", "discrepancy", "half_step", "ratio"], [
        (c["order"], " ".join(map(str, c["indices"])), c["epsilon"], c["discrepancy"],
         c["half_step_discrepancy"], c["ratio"]) for c in summary["checks"]
    ])
    lines = [f"dataset of {summary['scenario']}: {summary['forms']} forms up to order {summary['order']} "
             f"({summary['family']} family)"]
    lines += [f"order {c['order']}: gap {c['discrepancy']:.3e} at eps, {c['half_step_discrepancy']:.3e} at eps/2, "
              f"ratio {c['ratio']:.2f}" for c in summary["checks"]]
    _summarize(out, lines)


def cmd_gauge(options: Dict[str, Any]) -> int:
    """
    Builds the gauge twin of a scenario on every refinement size and checks
    that the DN discrepancy shrinks at second order.

    :raises InvariantViolation: After writing the report, if the check fails.
    """
    bump = options.get("bump") or DEFAULT_BUMP
    center, radius, amplitude = tuple(bump["center"]), bump["radius"], bump["amplitude"]
    perturb = options.get("perturb", 0.0)
    if options.get("preset") is not None:
        base = None
        sizes = options.get("refine") or [options["grid"]]
    else:
        base = _scenario(options)
        sizes = [base.grid.nx]
        if options.get("refine"):
            logger.warning("A scenario file fixes its grid; ignoring the refinement list")

    def factory(n: int):
        s = base or presets.build(options["preset"], n)
        psi = GaugeFunction.bump(s.grid, center, radius, amplitude)
        twin = gauge_twin(s, psi)
        if perturb > 0:
            twin = twin.replace(F=twin.F + make_bump(s.grid, center, radius, perturb))
        return twin, s, psi

    if len(sizes) < 2:
        logger.warning("A single grid size gives no refinement ratio; only discrepancies are reported")
    study = gauge_refinement_study(factory, sizes, options["count"], options["family"])
    label = options.get("preset") or base.name
    report = {
        "scenario": label, "sizes": study.sizes, "discrepancies": study.discrepancies,
        "ratios": study.ratios, "passed": study.passed(), "reports": study.reports,
    }
    out = _output(options)
    dump(GaugeReportSchema(), report, out / "gauge_report.json")
    _render_gauge_report(out, report)
    if not report["passed"]:
        raise InvariantViolation(f"The DN maps of {label} and its gauge twin do not converge together.")
    return 0


def _render_gauge_report(out: Path, report: Dict[str, Any]):
    ratios = [None] + list(report["ratios"])
    _write_csv(out / "gauge.csv", ["size", "discrepancy", "ratio"],
               zip(report["sizes"], report["discrepancies"], ratios))
    lines = [f"gauge study of {report['scenario']}: {'pass' if report['passed'] else 'FAIL'}"]
    lines += [f"{size:>5}  {discrepancy:.3e}" + ("" if ratio is None else f"  ratio {ratio:.2f}")
              for size, discrepancy, ratio in zip(report["sizes"], report["discrepancies"], ratios)]
    _summarize(out, lines)


def _truth(s: Scenario) -> Dict[str, Field]:
    """The fields an inversion of ``s`` should find, from a solve at the base datum."""
    u0, _ = solve(s, s.f0)
    fields = {"Q": s.a.derivative(u0, 1), "T2": s.a.derivative(u0, 2), "T3": s.a.derivative(u0, 3),
              "u0": u0, "F": s.F}
    if s.a.kind is NonlinearityKind.POLYNOMIAL:
        fields.update({f"a{k}": s.a.coefficient(k) for k in range(1, s.a.degree + 1)})
    else:
        fields["q"] = s.a.q
    return fields


def _run_chain(d: DNDataset, options: Dict[str, Any]) -> ReconstructionResult:
    chain = options["chain"]
    d.require(CHAIN_ORDER[chain])
    prior = None
    if chain == "polynomial":
        if options.get("prior") is None:
            raise ConfigurationError("The polynomial chain needs the known second highest coefficient (--prior).")
        prior = load(FieldSchema(), options["prior"])

    alpha_reg = options.get("alpha_reg")
    if alpha_reg is None:
        alpha_reg, result = select_alpha(d)
        logger.info("Selected alpha_reg %.1e", alpha_reg)
    else:
        inversion = PotentialInversion(d, alpha_reg)

        def gauss_newton_step(iteration: int, objective: float, relative_residual: float):
            logger.debug("Inversion step %s: relative residual %.3e", iteration, relative_residual)

        inversion.hub.subscribe(InversionEvent.gauss_newton_step, gauss_newton_step)
        result = inversion.run()
    if chain == "potential":
        return result

    Q = result.fields["Q"]
    taylor_alpha = options.get("alpha_reg") or config.default_alpha_reg
    second = fit_second_field(d, Q, taylor_alpha)
    result = result.merged(ReconstructionResult({"T2": second.field}, [], alpha_reg, coverage=second.coverage))
    T = [Q, second.field]
    if chain == "third" or (chain == "polynomial" and d.order >= 3):
        third = fit_third_field(d, Q, second.field, taylor_alpha)
        result = result.merged(ReconstructionResult({"T3": third.field}, [], alpha_reg, coverage=third.coverage))
        T.append(third.field)

    if chain == "polynomial":
        coefficients, u0, F = break_gauge_polynomial(T, prior, d.f0)
        fields = {f"a{k}": c for k, c in enumerate(coefficients, start=1)}
        fields.update({"u0": u0, "F": F})
    elif chain == "exp_u":
        q, u0, F = break_gauge_exp_u(Q, second.field, d.f0)
        fields = {"q": q, "u0": u0, "F": F}
    elif chain == "sine_gordon":
        q, u0, F = recover_sine_gordon(Q, second.field, d.f0)
        fields = {"q": q, "u0": u0, "F": F}
    else:
        return result
    return result.merged(ReconstructionResult(fields, [], alpha_reg))


def cmd_reconstruct(options: Dict[str, Any]) -> int:
    """Runs an inversion chain on a dataset; with a scenario or preset, also scores it against the truth."""
    d = load(DNDatasetSchema(), options["dataset"])
    result = _run_chain(d, options)
    if options.get("scenario") is not None or options.get("preset") is not None:
        s = _scenario(options, d.grid.nx)
        if s.grid != d.grid:
            raise GridMismatch(f"The truth scenario lives on {s.grid}, the dataset on {d.grid}.")
        result = result.compared_to(_truth(s))

    out = _output(options)
    dump(ReconstructionResultSchema(), result, out / "result.json")
    _render_result(out, ReconstructionResultSchema().dump(result))
    return 0


def _render_result(out: Path, result: Dict[str, Any]):
    errors = result.get("errors") or {}
    _write_csv(out / "errors.csv", ["field", "relative_l2_error"], sorted(errors.items()))
    _write_csv(out / "residuals.csv", ["iteration", "relative_residual"], enumerate(result["residual_history"]))
    lines = [f"recovered {', '.join(sorted(result['fields']))} with alpha_reg {result['alpha_reg']:.1e}"]
    lines += [f"{field:>4}: relative L2 error {error:.3e}" for field, error in sorted(errors.items())]
    _summarize(out, lines)


def _render_forward(out: Path, summary: Dict[str, Any]):
    report = summary["report"]
    _write_csv(out / "residuals.csv", ["iteration", "residual"], enumerate(report.residual_history))
    lines = [f"scenario {summary['scenario']}: converged in {report.iterations} iterations",
             f"eigenvalue of the linearization nearest 0: {summary['eigenvalue']:.6e}"]
    if summary.get("truth_error") is not None:
        lines.append(f"max-norm error against the embedded solution: {summary['truth_error']:.3e}")
    _summarize(out, lines)


def cmd_report(options: Dict[str, Any]) -> int:
    """Re-renders a saved report, recognized by its keys, as CSV and summary."""
    raw = read_json(options["input"])
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{options['input']} does not hold a report.")
    out = _output(options)
    if "sizes" in raw:
        _render_gauge_report(out, GaugeReportSchema().load(raw))
    elif "checks" in raw:
        _render_dataset_summary(out, DatasetSummarySchema().load(raw))
    elif "fields" in raw:
        _render_result(out, ReconstructionResultSchema().dump(ReconstructionResultSchema().load(raw)))
    elif "solution" in raw:
        _render_forward(out, SolveSummarySchema().load(raw))
    else:
        raise ConfigurationError(f"{options['input']} is not a gauge, dataset, forward or reconstruction report.")
    return 0


COMMANDS: Dict[str, Callable[[Dict[str, Any]], int]] = {
    "scenario": cmd_scenario,
    "forward": cmd_forward,
    "dataset": cmd_dataset,
    "gauge": cmd_gauge,
    "reconstruct": cmd_reconstruct,
    "report": cmd_report,
}


def _describe(messages, prefix: str = "") -> List[str]:
    if isinstance(messages, dict):
        return [line for key, value in messages.items() for line in _describe(value, f"{prefix}{key}.")]
    if isinstance(messages, list) and all(isinstance(m, str) for m in messages):
        return [f"{prefix.rstrip('.')}: {' '.join(messages)}"]
    if isinstance(messages, list):
        return [line for m in messages for line in _describe(m, prefix)]
    return [f"{prefix.rstrip('.')}: {messages}"]


def newton_step(iteration: int, residual: float, step: float):
    logger.debug("Newton step %s: residual %.3e, damping %.3g", iteration, residual, step)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one command and returns its exit code."""
    default_solver.hub.subscribe(SolverEvent.newton_step, newton_step)
    try:
        options = parse_config(argv)
        logger.info("Running %s %s", name, options["command"])
        return COMMANDS[options["command"]](options)
    except ValidationError as error:
        for line in _describe(error.normalized_messages()):
            logger.error("Invalid option or file: %s", line)
        return 1
    except (ConfigurationError, SolverError, PropertyFailure) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return error.exit_code
    finally:
        default_solver.hub.unsubscribe(SolverEvent.newton_step, newton_step)
