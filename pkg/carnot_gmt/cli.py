"""
Command-Line Front End
Group and chart ingestion, experiment orchestration and report emission.

RESPONSIBILITIES:
1. argparse subcommands: group, degree, blowup, measure, dimension, charset
2. Flags -> ExperimentConfig (pydantic) with Settings defaults underneath
3. Console tables, <command>.json / <command>.csv under --out, JSON on stdout otherwise
4. Exit codes: 0 ok, 2 usage/config/precondition errors, 3 failed audits
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TextIO

import numpy as np
import pandas as pd
from pydantic import ValidationError

from carnot_gmt import __version__
from carnot_gmt.algebra import StratifiedAlgebra, load_algebra, validate
from carnot_gmt.config import ExperimentConfig, get_settings
from carnot_gmt.errors import AuditFailure, CarnotGMTError, StructuralError
from carnot_gmt.exterior import degree_profile, max_degree_bruteforce
from carnot_gmt.gmt import (
    blowup_trace,
    box_dimension,
    charset_covering_experiment,
    charset_dim_bound,
    intrinsic_measure,
    riemannian_measure,
)
from carnot_gmt.io import (
    dump_json,
    provenance,
    read_metric,
    read_points,
    scan_to_frame,
    series_frame,
    write_outputs,
)
from carnot_gmt.logging_setup import configure_logging
from carnot_gmt.manifold import PointClass, load_chart, parameter_grid, sample_characteristic_set
from carnot_gmt.metric import HomogeneousQuasiNorm, make_norm

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_AUDIT = 3

DEGREE_GRID = {1: 201, 2: 41}
DIMENSION_GRID = {1: 200001, 2: 401}
DEFAULT_BLOWUP_RADII = (1e-1, 10 ** -3.5)
DEFAULT_DIMENSION_SCALES = (10 ** -0.7, 10 ** -2.5)
DEFAULT_EPSILON = 0.5


class Console:
    """Banner and check-mark report lines"""

    def __init__(self, stream: TextIO):
        self.stream = stream

    def banner(self, title: str):
        print("=" * 80, file=self.stream)
        print(title.upper(), file=self.stream)
        print("=" * 80, file=self.stream)

    def ok(self, message: str):
        print(f"✓ {message}", file=self.stream)

    def line(self, message: str = ""):
        print(message, file=self.stream)


@dataclass
class CommandResult:
    report: Dict
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)


# ----------------------------------------------------------------------
# Shared loaders
# ----------------------------------------------------------------------

def _load_group(config: ExperimentConfig) -> StratifiedAlgebra:
    alg = load_algebra(config.group)
    report = validate(alg)
    if not report.is_valid:
        raise StructuralError(report.to_human_readable())
    return alg


def _norm(config: ExperimentConfig, alg: StratifiedAlgebra) -> HomogeneousQuasiNorm:
    return make_norm(alg, config.weights, config.layer_norm.value)


def _metric(config: ExperimentConfig, alg: StratifiedAlgebra) -> Optional[np.ndarray]:
    return None if config.metric is None else read_metric(Path(config.metric), alg.n)


def _base_report(config: ExperimentConfig) -> Dict:
    return {"provenance": provenance(config.model_dump(mode="json"))}


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_group(config: ExperimentConfig, console: Console) -> CommandResult:
    """n, step, layer dims, Q, D(p) table and the validation report"""
    alg = load_algebra(config.group)
    validation = validate(alg)
    console.banner(f"group {alg.name}")
    console.line(validation.to_human_readable())
    if not validation.is_valid:
        raise StructuralError(f"Group {alg.name} failed validation")

    rows, failures = [], []
    for p in range(1, alg.n + 1):
        profile = degree_profile(alg, p)
        brute = max_degree_bruteforce(alg, p)
        if brute != profile.D:
            failures.append(f"D({p}) = {profile.D} but exhaustive maximum is {brute}")
        rows.append({**profile.to_dict(), "D_bruteforce": brute})

    console.ok(f"n = {alg.n}, step = {alg.step}, layers = {list(alg.layer_dims)}")
    console.ok(f"homogeneous dimension Q = {alg.homogeneous_dimension}")
    console.line(f"\n{'p':>4} {'l(p)':>6} {'r_p':>5} {'D(p)':>6}  subdegrees")
    for row in rows:
        console.line(f"{row['p']:>4} {row['ell']:>6} {row['r_p']:>5} {row['D']:>6}  {row['subdegrees']}")

    report = _base_report(config)
    report.update({
        "group": alg.to_json(),
        "n": alg.n,
        "step": alg.step,
        "layer_dims": list(alg.layer_dims),
        "Q": alg.homogeneous_dimension,
        "D": [row["D"] for row in rows],
        "profiles": rows,
        "validation": validation.to_dict(),
    })
    return CommandResult(report, {"group": pd.DataFrame(rows).drop(columns=["subdegrees", "mu"])}, failures)


def cmd_degree(config: ExperimentConfig, console: Console) -> CommandResult:
    """Tagged grid samples of the chart; CSV t..., x..., degree, class"""
    alg = _load_group(config)
    chart = load_chart(config.chart, alg)
    resolution = config.grid or DEGREE_GRID.get(chart.p, 11)
    console.banner(f"degree scan of {chart.name} in {alg.name}")
    scan = sample_characteristic_set(
        alg, chart, resolution, rel_tol=config.tol, exact=config.exact, threads=config.threads
    )
    console.ok(scan.to_human_readable())
    report = _base_report(config)
    report.update({"scan": scan.to_dict(), "characteristic": len(scan.characteristic)})
    return CommandResult(report, {"degree": scan_to_frame(scan)})


def cmd_blowup(config: ExperimentConfig, console: Console) -> CommandResult:
    alg = _load_group(config)
    chart = load_chart(config.chart, alg)
    norm = _norm(config, alg)
    t0 = config.t0 if config.t0 is not None else list(chart.domain.mean(axis=1))
    radii = config.radius_list(DEFAULT_BLOWUP_RADII)
    console.banner(f"blow-up of {chart.name} at t0 = {t0}")
    trace = blowup_trace(
        alg, norm, chart, t0, radii,
        metric=_metric(config, alg),
        resolution=config.grid,
        rel_tol=config.tol,
        theta_samples=config.samples,
        seed=config.seed,
    )
    console.line(trace.to_human_readable())
    failures = trace.audit(config.audit_tol)
    if not failures:
        console.ok("density and set convergence within tolerance")
    report = _base_report(config)
    report.update({"trace": trace.to_dict(), "audit": failures})
    tables = {
        "blowup": series_frame(trace.radii, trace.densities),
        "distance": series_frame(trace.radii, trace.distances),
    }
    return CommandResult(report, tables, failures)


def cmd_measure(config: ExperimentConfig, console: Console) -> CommandResult:
    """Intrinsic and Riemannian measure of the chart (sub)domain"""
    alg = _load_group(config)
    chart = load_chart(config.chart, alg)
    console.banner(f"measure of {chart.name} in {alg.name}")
    common = dict(
        region=config.region,
        estimator=config.estimator,
        resolution=config.grid,
        samples=config.samples,
        seed=config.seed,
        mask=config.mask,
        threads=config.threads,
    )
    intrinsic = intrinsic_measure(alg, chart, D=config.D, **common)
    riemannian = riemannian_measure(alg, chart, metric=_metric(config, alg), **common)
    console.ok(intrinsic.to_human_readable())
    console.ok(riemannian.to_human_readable())

    failures = []
    if config.metric is None and intrinsic.value > riemannian.value * (1.0 + 1e-9) + 1e-12:
        failures.append(
            f"intrinsic measure {intrinsic.value:.6g} exceeds Riemannian measure {riemannian.value:.6g}"
        )
    report = _base_report(config)
    report.update({"intrinsic": intrinsic.to_dict(), "riemannian": riemannian.to_dict()})
    return CommandResult(report, {}, failures)


def _dimension_points(config: ExperimentConfig, alg: StratifiedAlgebra) -> np.ndarray:
    if config.points:
        return read_points(Path(config.points), alg.n)
    chart = load_chart(config.chart, alg)
    resolution = config.grid or DIMENSION_GRID.get(chart.p, 41)
    return chart.evaluate(parameter_grid(chart.domain, resolution))


def cmd_dimension(config: ExperimentConfig, console: Console) -> CommandResult:
    alg = _load_group(config)
    norm = _norm(config, alg)
    points = _dimension_points(config, alg)
    scales = config.scale_list(DEFAULT_DIMENSION_SCALES)
    console.banner(f"covering dimension of {config.points or config.chart} in {alg.name}")
    console.ok(f"{len(points):,} points, {len(scales)} scales")
    estimate = box_dimension(norm, points, scales, threads=config.threads)
    console.line(estimate.to_human_readable())
    report = _base_report(config)
    report.update({"dimension": estimate.to_dict()})
    return CommandResult(report, {"dimension": series_frame(estimate.scales, estimate.counts)})


def _charset_bound(config: ExperimentConfig, console: Console) -> CommandResult:
    alg = _load_group(config)
    p = config.p if config.p is not None else load_chart(config.chart, alg).p
    bound = charset_dim_bound(degree_profile(alg, p), config.lam or "1")
    console.banner(f"characteristic-set bound in {alg.name}")
    console.ok(bound.to_human_readable())
    report = _base_report(config)
    report.update({"bound": bound.to_dict()})
    return CommandResult(report)


def cmd_charset(config: ExperimentConfig, console: Console) -> CommandResult:
    """Bound calculator (--bound) or characteristic-set experiments on a chart"""
    if config.bound:
        return _charset_bound(config, console)

    alg = _load_group(config)
    chart = load_chart(config.chart, alg)
    norm = _norm(config, alg)
    profile = degree_profile(alg, chart.p)
    lam = config.lam or "1"
    bound = charset_dim_bound(profile, lam)
    epsilon = config.epsilon or DEFAULT_EPSILON
    resolution = config.grid or DEGREE_GRID.get(chart.p, 11)

    console.banner(f"characteristic set of {chart.name} in {alg.name}")
    scan = sample_characteristic_set(alg, chart, resolution, rel_tol=config.tol, threads=config.threads)
    console.ok(scan.to_human_readable())
    report = _base_report(config)
    report.update({"scan": scan.to_dict(), "bound": bound.to_dict()})
    tables = {"charset": scan_to_frame(scan)}

    points = scan.characteristic_points()
    if len(points) == 0:
        console.ok("no characteristic points: empty experiment")
        report.update({"empty": True, "exponent": None, "experiments": []})
        return CommandResult(report, tables)

    failures = []
    scales = config.scale_list(DEFAULT_DIMENSION_SCALES)
    exponent = box_dimension(norm, points, scales, threads=config.threads)
    console.line(exponent.to_human_readable())
    ceiling = profile.D - 0.5
    if exponent.slope > ceiling:
        failures.append(
            f"covering exponent {exponent.slope:.4f} of the characteristic set exceeds D(p) - 0.5 = {ceiling}"
        )

    experiments = []
    for point_class, power in ((PointClass.A, profile.ell), (PointClass.B, max(profile.ell - 1, 1))):
        top = min(epsilon ** power, 0.5)
        for r in config.radius_list((top, top * 1e-3)):
            result = charset_covering_experiment(
                alg, norm, chart, epsilon, min(r, top), point_class,
                resolution=resolution, max_points=config.max_points,
                rel_tol=config.tol, threads=config.threads,
            )
            experiments.append(result.to_dict())
            console.ok(f"r={r:.3g}  {result.to_human_readable()}")
            if result.empty:
                break
    report.update({"empty": False, "exponent": exponent.to_dict(), "experiments": experiments})
    tables["exponent"] = series_frame(exponent.scales, exponent.counts)
    return CommandResult(report, tables, failures)


HANDLERS: Dict[str, Callable[[ExperimentConfig, Console], CommandResult]] = {
    "group": cmd_group,
    "degree": cmd_degree,
    "blowup": cmd_blowup,
    "measure": cmd_measure,
    "dimension": cmd_dimension,
    "charset": cmd_charset,
}


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _region(text: str) -> List[List[float]]:
    """'lo:hi,lo:hi' per parameter axis"""
    try:
        return [[float(a), float(b)] for a, b in (part.split(":") for part in text.split(","))]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi[,lo:hi...], got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--group", "--builtin", dest="group", help="builtin group (heisenberg:1, engel, ...) or JSON file")
    common.add_argument("--chart", help="builtin chart name or chart JSON file")
    common.add_argument("--seed", type=int, help="random seed (default from settings, 0)")
    common.add_argument(
        "--radii",
        help="log-spaced range start:stop; blow-up radii, and the covering scales for dimension and charset",
    )
    common.add_argument("--radii-count", dest="radii_count", type=int, help="number of radii")
    common.add_argument("--scales", type=int, help="number of covering scales")
    common.add_argument("--grid", type=int, help="grid points per parameter axis")
    common.add_argument("--tol", type=float, help="relative degree threshold")
    common.add_argument("--audit-tol", dest="audit_tol", type=float, help="convergence audit tolerance")
    common.add_argument("--out", help="output directory for JSON/CSV")
    common.add_argument("--threads", type=int, help="worker cap")
    common.add_argument("--weights", type=_float_list, help="layer weights eps_1,...,eps_step")
    common.add_argument("--layer-norm", dest="layer_norm", choices=["sup", "euclidean"])
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ...")
    common.add_argument("-v", "--verbose", action="store_true", help="shorthand for --log-level DEBUG")

    parser = argparse.ArgumentParser(
        prog="carnot-gmt",
        description="Measure-theoretic experiments on submanifolds of Carnot groups",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="re-run from a config echo or a previous JSON report")
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("group", parents=[common], help="structure report and D(p) table")

    degree = sub.add_parser("degree", parents=[common], help="degree scan and characteristic samples")
    degree.add_argument("--exact", action="store_true", default=None, help="exact rational arithmetic")

    blowup = sub.add_parser("blowup", parents=[common], help="blow-up trace at a transversal point")
    blowup.add_argument("--t0", type=_float_list, help="chart parameter of the blow-up point")
    blowup.add_argument("--metric", help="constant SPD metric (JSON or CSV)")
    blowup.add_argument("--samples", type=int, help="metric-factor Monte Carlo samples")

    measure = sub.add_parser("measure", parents=[common], help="intrinsic and Riemannian measure")
    measure.add_argument("--D", dest="D", type=int, help="projection degree (default D(p))")
    measure.add_argument("--estimator", choices=["quadrature", "monte-carlo"])
    measure.add_argument("--samples", type=int, help="Monte Carlo samples")
    measure.add_argument("--metric", help="constant SPD metric (JSON or CSV)")
    measure.add_argument("--region", type=_region, help="sub-box lo:hi,lo:hi")
    measure.add_argument("--mask", help="named region mask (unit-disk)")

    dimension = sub.add_parser("dimension", parents=[common], help="covering-number dimension estimate")
    dimension.add_argument("--points", help="point cloud CSV with columns x1..xn")

    charset = sub.add_parser("charset", parents=[common], help="characteristic-set bounds and experiments")
    charset.add_argument("--bound", action="store_true", default=None, help="print the bound only")
    charset.add_argument("--lambda", dest="lam", help="lambda in (0, 1]")
    charset.add_argument("--epsilon", type=float, help="epsilon in (0, 1)")
    charset.add_argument("--p", type=int, help="grade (bound only)")
    charset.add_argument("--max-points", dest="max_points", type=int, help="characteristic points per experiment")
    return parser


def _config_from_file(path: str) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    if "provenance" in data:
        data = data["provenance"]["config"]
    return ExperimentConfig.model_validate(data)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Flags override settings, settings override model defaults"""
    settings = get_settings()
    data = {"seed": settings.seed, "threads": settings.threads, "tol": settings.rel_tol}
    skip = {"config", "log_level", "verbose"}
    data.update({k: v for k, v in vars(args).items() if v is not None and k not in skip})
    return ExperimentConfig.model_validate(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        configure_logging("DEBUG" if getattr(args, "verbose", False) else getattr(args, "log_level", None))
        if args.config:
            config = _config_from_file(args.config)
        elif args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        else:
            config = config_from_args(args)
    except ValidationError as e:
        print(f"Invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, CarnotGMTError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    console = Console(sys.stdout if config.out else sys.stderr)
    digits = get_settings().json_digits
    try:
        result = HANDLERS[config.command](config, console)
        if config.out:
            for path in write_outputs(Path(config.out), config.command, result.report, result.tables, digits):
                console.ok(f"saved {path}")
        else:
            print(dump_json(result.report, digits))
        if result.failures:
            raise AuditFailure("; ".join(result.failures), {"failures": result.failures})
    except AuditFailure as e:
        print(f"Audit failed: {e}", file=sys.stderr)
        return EXIT_AUDIT
    except CarnotGMTError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
