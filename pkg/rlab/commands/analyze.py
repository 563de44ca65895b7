import logging
import math
from pathlib import Path

from rlab.analysis.flatness import (
    beta1_square_sum,
    carleson_dyadic_sum,
    carleson_integral,
    check_alpha_hypothesis,
    check_dyadic_equivalence,
    flatness_profile,
)
from rlab.commands.common import add_run_arguments, config_from_args, load_surface
from rlab.geometry.measure import DiscreteSurface, ahlfors_audit, doubling_audit, draw_probes
from rlab.models.config import RunConfig
from rlab.models.reports import CarlesonRecord, CarlesonReport, MeasureReport
from rlab.utils.errors import ResolutionExceeded
from rlab.utils.io import write_report, write_table
from rlab.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

FLATNESS_COLUMNS = ["x", "r", "alpha", "beta1", "betainf"]


def measure_report(S: DiscreteSurface, cfg: RunConfig) -> MeasureReport:
    # the unit radius is outside the Ahlfors range
    radii = [r for r in cfg.ladder.levels() if r < 1]
    return MeasureReport(
        points=S.n_points,
        total_weight=S.total_weight,
        median_spacing=S.median_spacing,
        ahlfors=ahlfors_audit(S, radii, cfg.probes, cfg.seed),
        doubling=doubling_audit(S, radii, cfg.probes, cfg.seed),
    )


def flatness_rows(S: DiscreteSurface, probes, cfg: RunConfig) -> list:
    radii = cfg.ladder.levels()

    def rows_for(i: int):
        return [[i, rec.r, rec.alpha, rec.beta1, rec.beta_inf] for rec in flatness_profile(S, S.points[i], radii)]

    return [row for rows in parallel_map(rows_for, [int(i) for i in probes]) for row in rows]


def carleson_report(S: DiscreteSurface, probes, cfg: RunConfig) -> CarlesonReport:
    ladder = cfg.ladder

    def measure(i: int) -> CarlesonRecord:
        x = S.points[i]
        dyadic = carleson_dyadic_sum(S, x, ladder)
        try:
            integral = carleson_integral(S, x, ladder.r0, cfg.quad_points)
        except ResolutionExceeded:
            integral = None
        return CarlesonRecord(
            x_index=i,
            dyadic=dyadic.total,
            integral=integral,
            skipped_levels=dyadic.skipped_levels,
            beta1_square_sum=beta1_square_sum(S, x, ladder),
        )

    records = parallel_map(measure, [int(i) for i in probes])
    integrals = [rec.integral for rec in records if rec.integral is not None]
    try:
        equivalence = check_dyadic_equivalence(S, probes, ladder, cfg.quad_points)
    except ResolutionExceeded as e:
        logger.warning(f"dyadic/integral comparison skipped: {e.message}")
        equivalence = None
    return CarlesonReport(
        records=records,
        dyadic_max=max((rec.dyadic for rec in records), default=0.0),
        integral_max=max(integrals) if integrals else None,
        equivalence=equivalence,
        alpha_hypothesis=check_alpha_hypothesis(S, probes, ladder, cfg.eps0),
    )


def cmd_analyze(cfg: RunConfig) -> int:
    """Measure audit, flatness profile per probe and Carleson sums."""
    S = load_surface(cfg)
    out = Path(cfg.out_dir)
    write_report(out, "ahlfors.json", "analyze", cfg, measure_report(S, cfg))
    S.require_normals()
    probes = draw_probes(S, cfg.probes, cfg.seed)
    write_table(out / "flatness.csv", FLATNESS_COLUMNS, flatness_rows(S, probes, cfg),
                fmt=["%d"] + ["%.17g"] * (len(FLATNESS_COLUMNS) - 1))
    report = carleson_report(S, probes, cfg)
    write_report(out, "carleson.json", "analyze", cfg, report)
    if not math.isfinite(report.dyadic_max):
        logger.warning("dyadic Carleson sum is not finite")
    logger.info(f"analyze done: dyadic max {report.dyadic_max:.4g}, alpha max {report.alpha_hypothesis.alpha_max:.4g}")
    return 0


def run(args) -> int:
    return cmd_analyze(config_from_args(args))


def register(subparsers) -> None:
    parser = subparsers.add_parser("analyze", help="Ahlfors audit, flatness profile and Carleson sums")
    add_run_arguments(parser)
    parser.set_defaults(handler=run)
