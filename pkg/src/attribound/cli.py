"""Command-line interface: estimators, simulator, and the QPB debug solver.

Every subcommand prints a JSON report to stdout (stable key order) and exits
0 on success, 2 on input validation errors (single-line diagnostic on
stderr), and 1 on internal errors.  Files are written only under ``--out``.
"""

import csv
import functools
import json
import math
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from attribound import __version__, _kernels
from attribound.basic import (
    full_treatment_bound,
    invert_aggregate,
    invert_from_counts,
    invert_monotone,
)
from attribound.model import (
    ValidationError,
    build_kernel,
    read_caps_csv,
    read_network_file,
    read_units_csv,
)
from attribound.qpb import QPBProblem, qpb_maximize
from attribound.sim import preset, run
from attribound.spill import SpillConfig, solve_relaxation
from attribound.ttest import (
    TIntervalInputs,
    bootstrap_check,
    conservative_lower_reversed,
    conservative_upper,
    heavy_tail_diagnostic,
)

THREAD_ENV = "INTERFERE_CI_THREADS"


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _emit(report: dict, config: dict, started: float, out_dir=None):
    envelope = {
        "tool_version": __version__,
        "backend": _kernels.BACKEND_NAME,
        "config_echo": config,
        "wall_time": time.perf_counter() - started,
        "report": report,
    }
    text = json.dumps(envelope, sort_keys=True, indent=2, default=_json_default)
    click.echo(text)
    if out_dir is not None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "report.json").write_text(
            json.dumps(report, sort_keys=True, indent=2, default=_json_default)
            + "\n")


def _guarded(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ValidationError, click.UsageError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except Exception as exc:  # internal fault
            click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _apply_threads(threads):
    """Resolve the worker cap from the flag or environment.

    The compiled kernels are single-threaded for determinism, so today the
    cap only bounds any library-internal pools and is echoed in the config.
    """
    if threads is None:
        threads = int(os.environ.get(THREAD_ENV, 0)) or (os.cpu_count() or 1)
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    return threads


@click.group()
@click.version_option(version=__version__)
@click.option("--threads", type=int, default=None,
              help=f"Worker cap (default: logical CPUs or ${THREAD_ENV}).")
@click.pass_context
def main(ctx, threads):
    """Conservative attributable-effect bounds under interference."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads


@main.command("ttest-ci")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--direction", type=click.Choice(["upper", "lower"]),
              default="upper", show_default=True)
@click.option("--units-file", required=True, type=click.Path())
@click.option("--caps-file", type=click.Path(),
              help="Per-unit ceilings CSV (unit_id,cap); required for lower.")
@click.option("--bootstrap-reps", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@_guarded
def ttest_ci(ctx, alpha, direction, units_file, caps_file, bootstrap_reps,
             seed, out):
    """Conservative t-interval bound for count outcomes."""
    started = time.perf_counter()
    threads = _apply_threads(ctx.obj.get("threads"))
    data = read_units_csv(units_file)
    untreated = data.untreated_outcomes()
    config = {
        "subcommand": "ttest-ci", "threads": threads,
        "alpha": alpha, "direction": direction,
        "units_file": str(units_file), "caps_file": caps_file,
        "bootstrap_reps": bootstrap_reps, "seed": seed,
    }
    if direction == "upper":
        inputs = TIntervalInputs(alpha=alpha, untreated_outcomes=untreated,
                                 n_units=data.n_units,
                                 treated_count=data.treated_count)
        bound = conservative_upper(inputs, total_outcome_sum=data.total_outcomes)
    else:
        if caps_file is None:
            raise ValidationError("--caps-file is required for --direction lower")
        caps_all = read_caps_csv(caps_file, data.unit_ids)
        inputs = TIntervalInputs(
            alpha=alpha, untreated_outcomes=untreated, n_units=data.n_units,
            treated_count=data.treated_count,
            upper_caps=caps_all[data.treatment == 0])
        bound = conservative_lower_reversed(inputs)
    try:
        heavy = heavy_tail_diagnostic(untreated)
    except ValidationError:
        heavy = None
    boot = bootstrap_check(untreated, alpha, data.n_units, data.treated_count,
                           reps=max(bootstrap_reps, 100), seed=seed)
    report = {
        "method": bound.method,
        "alpha": alpha,
        "direction": bound.direction,
        "theta_sum_bound": bound.theta_sum_bound,
        "theta_mean_bound": bound.diagnostics["theta_mean_bound"],
        "argmax_level_c": bound.diagnostics.get(
            "argmax_level_c", bound.diagnostics.get("argmin_level_c")),
        "diagnostics": {"heavy_tail_ratio": heavy, "bootstrap": boot},
    }
    if direction == "upper":
        report["attributable_lower"] = bound.attributable_lower
    _emit(report, config, started, out)


def _parse_counts(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError("--counts expects n11,n10,n01,n00")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ValidationError("--counts entries must be integers") from exc


@main.command("invert-basic")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--assumption", type=click.Choice(["monotone", "aggregate"]),
              default="monotone", show_default=True)
@click.option("--target", type=click.Choice(["control", "full-treatment"]),
              default="control", show_default=True)
@click.option("--units-file", type=click.Path(), default=None)
@click.option("--counts", type=str, default=None,
              help="Cell counts n11,n10,n01,n00 (sufficient statistics).")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@_guarded
def invert_basic(ctx, alpha, assumption, target, units_file, counts, out):
    """Exact test inversion for binary outcomes."""
    started = time.perf_counter()
    threads = _apply_threads(ctx.obj.get("threads"))
    if (units_file is None) == (counts is None):
        raise ValidationError("provide exactly one of --units-file or --counts")
    config = {
        "subcommand": "invert-basic", "threads": threads,
        "alpha": alpha, "assumption": assumption,
        "target": target, "units_file": units_file, "counts": counts,
    }
    if counts is not None:
        n11, n10, n01, n00 = _parse_counts(counts)
        if target == "full-treatment":
            # Complementing swaps both margins of the cell table.
            bound = invert_from_counts(n00, n01, n10, n11, alpha, "monotone")
            n_units = n11 + n10 + n01 + n00
            report = {
                "method": "w-basic-full-treatment",
                "alpha": alpha,
                "direction": "lower-on-theta",
                "theta_sum_bound": n_units - bound.theta_sum_bound,
                "transformed_upper_bound": bound.theta_sum_bound,
                "a_star": bound.diagnostics["a_star"],
                "b_star": bound.diagnostics["b_star"],
            }
            _emit(report, config, started, out)
            return
        bound = invert_from_counts(n11, n10, n01, n00, alpha, assumption)
        other = invert_from_counts(
            n11, n10, n01, n00, alpha,
            "aggregate" if assumption == "monotone" else "monotone")
    else:
        data = read_units_csv(units_file)
        if target == "full-treatment":
            if assumption != "monotone":
                raise ValidationError(
                    "full-treatment target supports the monotone assumption only")
            bound = full_treatment_bound(data, alpha)
            report = {
                "method": bound.method,
                "alpha": alpha,
                "direction": bound.direction,
                "theta_sum_bound": bound.theta_sum_bound,
                "transformed_upper_bound":
                    bound.diagnostics["transformed_upper_bound"],
                "a_star": bound.diagnostics["a_star"],
                "b_star": bound.diagnostics["b_star"],
            }
            _emit(report, config, started, out)
            return
        runner = invert_monotone if assumption == "monotone" else invert_aggregate
        other_runner = invert_aggregate if assumption == "monotone" else invert_monotone
        bound = runner(data, alpha)
        other = other_runner(data, alpha)
    report = {
        "method": bound.method,
        "alpha": alpha,
        "direction": bound.direction,
        "theta_sum_bound": bound.theta_sum_bound,
        "attributable_lower": bound.attributable_lower,
        "a_star": bound.diagnostics["a_star"],
        "b_star": bound.diagnostics["b_star"],
        "monotone_aggregate_equal":
            bound.theta_sum_bound == other.theta_sum_bound,
    }
    _emit(report, config, started, out)


@main.command("invert-spill")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--tail", type=click.Choice(["chebyshev", "normal"]),
              default="chebyshev", show_default=True)
@click.option("--sigma-k", type=float, required=True)
@click.option("--dmax-k", type=float, required=True)
@click.option("--n-lambda", type=int, default=500, show_default=True)
@click.option("--grid-steps", type=int, default=200, show_default=True)
@click.option("--refine", type=int, default=2, show_default=True)
@click.option("--units-file", required=True, type=click.Path())
@click.option("--network-file", required=True, type=click.Path())
@click.option("--network-mode", type=click.Choice(["coords", "edges", "matrix"]),
              required=True)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@_guarded
def invert_spill(ctx, alpha, tail, sigma_k, dmax_k, n_lambda, grid_steps,
                 refine, units_file, network_file, network_mode, out):
    """Kernel-smoothed statistic inverted via the polyhedral relaxation."""
    started = time.perf_counter()
    threads = _apply_threads(ctx.obj.get("threads"))
    data = read_units_csv(units_file)
    provider = read_network_file(network_file, network_mode, data.unit_ids)
    kernel = build_kernel(provider, sigma_k, dmax_k)
    config = {
        "subcommand": "invert-spill", "threads": threads,
        "alpha": alpha, "tail": tail,
        "sigma_k": sigma_k, "dmax_k": dmax_k, "n_lambda": n_lambda,
        "grid_steps": grid_steps, "refine": refine,
        "units_file": str(units_file), "network_file": str(network_file),
        "network_mode": network_mode,
    }
    spill_config = SpillConfig(alpha=alpha, tail_bound=tail, n_lambda=n_lambda,
                               grid_steps=grid_steps, refine_rounds=refine)
    bound = solve_relaxation(data, kernel, spill_config)
    report = {
        "method": bound.method,
        "alpha": alpha,
        "direction": bound.direction,
        "theta_sum_bound": bound.theta_sum_bound,
        "attributable_lower": bound.attributable_lower,
        "tail_bound": tail,
        "n_halfspaces": bound.diagnostics.get("n_halfspaces"),
        "grid_resolution_achieved":
            bound.diagnostics.get("grid_resolution_achieved"),
        "diagnostics": bound.diagnostics,
    }
    _emit(report, config, started, out)


@main.command("simulate")
@click.option("--preset", "preset_name",
              type=click.Choice(["fig1", "fig3", "fig4"]), required=True)
@click.option("--desk-scale", type=float, default=1.0, show_default=True)
@click.option("--reps", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_guarded
def simulate(ctx, preset_name, desk_scale, reps, seed, out):
    """Run a preset scenario grid; write per-rep CSVs and a summary JSON."""
    started = time.perf_counter()
    threads = _apply_threads(ctx.obj.get("threads"))
    config = {
        "subcommand": "simulate", "threads": threads, "preset": preset_name,
        "desk_scale": desk_scale, "reps": reps, "seed": seed,
    }
    scenarios = preset(preset_name, desk_scale=desk_scale, reps=reps, seed=seed)
    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)
    summaries = []
    for index, scenario in enumerate(scenarios):
        results, summary = run(scenario)
        csv_name = f"reps_{index:03d}.csv"
        with open(out_path / csv_name, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["rep", "true_A", "bound_A", "accuracy",
                             "covered", "runtime"])
            for r in results:
                writer.writerow([
                    r.rep, r.true_a, repr(r.bound_a),
                    "" if math.isnan(r.accuracy) else repr(r.accuracy),
                    int(r.covered), f"{r.runtime:.6f}",
                ])
        summary = dict(summary, csv_file=csv_name, scenario_index=index)
        summaries.append(summary)
    (out_path / "summary.json").write_text(
        json.dumps({"config": config, "scenarios": summaries}, sort_keys=True,
                   indent=2, default=_json_default) + "\n")
    _emit({"n_scenarios": len(scenarios), "summaries": summaries},
          config, started, out_dir=None)


@main.command("qpb-solve", hidden=True)
@click.argument("problem_file", type=click.Path())
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@_guarded
def qpb_solve(ctx, problem_file, out):
    """Debug solver: maximize a QPB problem given as JSON {M, b, c}."""
    started = time.perf_counter()
    threads = _apply_threads(ctx.obj.get("threads"))
    try:
        payload = json.loads(Path(problem_file).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read file: {problem_file}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {problem_file}: {exc}") from exc
    for key in ("M", "b"):
        if key not in payload:
            raise ValidationError(f"problem JSON missing key {key!r}")
    problem = QPBProblem.build(np.array(payload["M"], dtype=np.float64),
                               np.array(payload["b"], dtype=np.float64),
                               float(payload.get("c", 0.0)))
    value, argmax = qpb_maximize(problem)
    report = {"value": value, "argmax": argmax.tolist(), "dim": problem.dim}
    _emit(report, {"subcommand": "qpb-solve", "threads": threads,
                   "problem_file": str(problem_file)}, started, out)


if __name__ == "__main__":
    main()
