"""infopriv command line.

Commands:
- solve-avg: least average leakage under the distortion budgets (or a curve)
- solve-minmax: least distortion under a maximum-leakage cap, or the least cap
  fitting a distortion budget
- audit: DP, information privacy and leakage of a given mechanism
- demo-dp-leak: a differentially private counting query that leaks a lot
- serve: MCP server exposing the same tools

Exit codes: 0 success, 2 infeasible or invalid input, 3 no convergence.
"""

import logging
import sys

import click

from infopriv import counting_query
from infopriv import oracle
from infopriv import privacy_audit
from infopriv import serialization
from infopriv import settings
from infopriv import solver_avg
from infopriv import solver_core
from infopriv import solver_minmax
from infopriv.exceptions import InfeasibleBudgetError, InfoprivError
from infopriv.logging import init_logging, operation_logger


logger = logging.getLogger(__name__)

EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


def _fail(message: str, code: int = EXIT_INVALID) -> None:
    click.echo(f"Error: {message}", err=True)
    raise click.exceptions.Exit(code)


def _report_error(exc: InfoprivError) -> None:
    if isinstance(exc, InfeasibleBudgetError) and exc.min_distortion:
        minimum = ", ".join(f"{m:.12g}" for m in exc.min_distortion)
        _fail(f"{exc}\nminimal achievable distortion: {minimum}")
    _fail(str(exc))


def _solver_settings(tol: float | None) -> settings.SolverSettings:
    solver = settings.CONFIG.solver
    return solver if tol is None else solver.model_copy(update={"kkt_tol": tol})


def _parse_deltas(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma separated numbers, got {value!r}")


def _finish(converged: bool) -> None:
    if not converged:
        click.echo("Warning: solver did not converge", err=True)
        raise click.exceptions.Exit(EXIT_NOT_CONVERGED)


@click.group()
def cli() -> None:
    config = settings.load_config()
    init_logging(config)


@cli.command("solve-avg")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@click.option("--tol", default=None, type=float, help="KKT tolerance required for convergence")
@click.option("--curve", default=None, type=str, help="Comma separated budgets for the first distortion")
@click.option("--jobs", default=1, type=int, show_default=True, help="Worker processes for curve points")
@click.option("--trace", default=None, type=click.Path(dir_okay=False, writable=True),
              help="Write the iteration trace as CSV")
@click.option("--oracle", "use_oracle", is_flag=True, hidden=True)
@operation_logger
def solve_avg(instance_path: str, out: str, tol: float | None, curve: str | None, jobs: int, trace: str | None,
              use_oracle: bool) -> None:
    solver = _solver_settings(tol)
    try:
        instance = serialization.load_instance(instance_path)
        if curve is not None:
            points = solver_avg.tradeoff_curve(instance, _parse_deltas(curve), solver, jobs)
            serialization.write_curve_csv(points, out)
            _finish(all(p.result.converged for p in points if p.result is not None))
            return
        result = solver_avg.solve_min_avg_leakage(instance, solver)
        serialization.write_json(serialization.avg_result_document(instance, result), out)
        if trace:
            solver_core.write_trace_csv(result, trace)
        click.echo(f"leakage_bits: {result.objective_value:.12g}")
        if use_oracle:
            value, _ = oracle.brute_force_min_leakage(instance, cfg=oracle.OracleConfig.from_settings(
                settings.CONFIG.oracle), settings=settings.CONFIG.oracle)
            click.echo(f"oracle_leakage_bits: {value:.12g}")
    except InfoprivError as exc:
        _report_error(exc)
    _finish(result.converged)


@cli.command("solve-minmax")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@click.option("--delta", default=None, type=float, help="Distortion budget; searches for the least leakage cap")
@click.option("--epsilon", default=None, type=float, help="Leakage cap in bits; minimizes the distortion")
@click.option("--tol", default=None, type=float, help="KKT tolerance required for convergence")
@click.option("--grid", "grid_points", default=None, type=int, help="Epsilon grid solved before bisection")
@click.option("--jobs", default=1, type=int, show_default=True, help="Worker processes for the epsilon grid")
@click.option("--trace", default=None, type=click.Path(dir_okay=False, writable=True),
              help="Write the iteration trace as CSV")
@click.option("--oracle", "use_oracle", is_flag=True, hidden=True)
@operation_logger
def solve_minmax(instance_path: str, out: str, delta: float | None, epsilon: float | None, tol: float | None,
                 grid_points: int | None, jobs: int, trace: str | None, use_oracle: bool) -> None:
    if (delta is None) == (epsilon is None):
        raise click.UsageError("Pass exactly one of --delta and --epsilon")
    solver = _solver_settings(tol)
    try:
        instance = serialization.load_instance(instance_path)
        if delta is not None:
            result = solver_minmax.solve_minmax_leakage(instance, delta, solver, grid_points, jobs)
        else:
            result = solver_minmax.min_distortion_given_maxleak(instance, epsilon, solver)
        serialization.write_json(serialization.minmax_result_document(instance, result), out)
        if trace:
            solver_core.write_trace_csv(result.solver, trace)
        click.echo(f"epsilon_bits: {result.epsilon_bits:.12g}")
        click.echo(f"distortion: {result.distortion:.12g}")
        if use_oracle:
            cfg = oracle.OracleConfig.from_settings(settings.CONFIG.oracle)
            if delta is not None:
                value, _ = oracle.brute_force_minmax(instance, delta, cfg, settings.CONFIG.oracle)
                click.echo(f"oracle_epsilon_bits: {value:.12g}")
            else:
                value, _ = oracle.brute_force_min_distortion(instance, epsilon, cfg, settings.CONFIG.oracle)
                click.echo(f"oracle_distortion: {value:.12g}")
    except InfoprivError as exc:
        _report_error(exc)
    _finish(result.converged)


@cli.command("audit")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mechanism", "mechanism_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--adjacency", default="unit-step", show_default=True,
              help="'unit-step' or a JSON file with a list of adjacent label pairs")
@click.option("--out", default=None, type=click.Path(dir_okay=False, writable=True),
              help="Write the report here instead of stdout")
@operation_logger
def audit(instance_path: str, mechanism_path: str, adjacency: str, out: str | None) -> None:
    try:
        instance = serialization.load_instance(instance_path)
        mechanism = serialization.load_mechanism(mechanism_path, instance.s_alphabet)
        report = privacy_audit.audit(instance.prior_s, mechanism, serialization.parse_adjacency(adjacency))
    except InfoprivError as exc:
        _report_error(exc)
    document = serialization.audit_document(report)
    if out:
        serialization.write_json(document, out)
    else:
        click.echo(serialization.dumps(document), nl=False)


@cli.command("demo-dp-leak")
@click.option("--n", "n", required=True, type=int, help="Number of records")
@click.option("--k", "k", required=True, type=int, help="Spacing of the possible counts")
@click.option("--epsilon", required=True, type=float, help="Laplace privacy parameter")
@click.option("--samples", required=True, type=int, help="Monte-Carlo samples")
@click.option("--seed", required=True, type=int, help="Monte-Carlo seed")
@click.option("--jobs", default=1, type=int, show_default=True, help="Worker processes for sampling blocks")
@operation_logger
def demo_dp_leak(n: int, k: int, epsilon: float, samples: int, seed: int, jobs: int) -> None:
    try:
        report = counting_query.dp_leak_report(n, k, epsilon, samples, seed, jobs, settings.CONFIG.montecarlo)
    except InfoprivError as exc:
        _report_error(exc)
    click.echo(f"{'n':>8} {'k':>6} {'eps':>8} {'audited_eps':>12} {'bound_bits':>11} {'mc_bits':>22}")
    estimate = f"{report.estimate_bits:.4f} ± {report.stderr_bits:.4f}"
    click.echo(f"{n:>8} {k:>6} {epsilon:>8.4g} {report.audited_dp_epsilon:>12.6f} "
               f"{report.bound_bits:>11.4f} {estimate:>22}")
    if report.vacuous:
        click.echo("bound vacuous: the lower bound is not positive for these parameters")


@cli.command("serve")
def serve() -> None:
    """Run the MCP server."""
    from infopriv import server
    server.main()


def main() -> None:
    cli(prog_name="infopriv")


if __name__ == "__main__":
    sys.exit(main())
