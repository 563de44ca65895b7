import logging

from rlab.analysis.poincare import axis_steps, default_family, keith_form_audit, poincare_audit
from rlab.analysis.quasiconvexity import quasiconvexity_audit
from rlab.commands.common import add_run_arguments, config_from_args, load_surface
from rlab.geometry.measure import draw_probes
from rlab.models.config import RunConfig
from rlab.models.reports import PoincareCheck, QuasiconvexityReport
from rlab.utils.errors import Disconnected, InequalityViolated
from rlab.utils.io import write_report

logger = logging.getLogger(__name__)


def cmd_check_poincare(cfg: RunConfig) -> int:
    """Poincaré constant over the test family; exit 5 when some ball has oscillation but no gradient."""
    S = load_surface(cfg)
    S.require_normals()
    functions = default_family(S.ambient_dim, cfg.seed, cfg.functions) + axis_steps(S.ambient_dim)
    probes = draw_probes(S, cfg.probes, cfg.seed)
    radii = cfg.ladder.levels()
    report = poincare_audit(S, functions, probes, radii)
    check = PoincareCheck(poincare=report)
    if report.c_p_finite and report.worst is not None:
        f = next(g for g in functions if g.name == report.worst.function)
        balls = [(rec.x_index, rec.r) for rec in report.records if rec.function == f.name and not rec.skipped]
        check.keith = keith_form_audit(S, f.value(S.points), balls, report.c_p)
        check.keith_function = f.name
    write_report(cfg.out_dir, "poincare_report.json", "check poincare", cfg, check)
    if not report.c_p_finite:
        worst = report.worst
        raise InequalityViolated(
            f"{report.hard_failures} balls with mean oscillation but no tangential gradient",
            {"function": worst.function, "x_index": worst.x_index, "r": worst.r, "lhs": worst.lhs,
             "rhs_core": worst.rhs_core},
        )
    logger.info(f"Poincaré check done: C_P = {report.c_p:.4g} over {len(report.records)} balls")
    return 0


def cmd_check_quasiconvex(cfg: RunConfig) -> int:
    """Graph-geodesic over chord ratio; exit 5 when the sample graph falls apart."""
    S = load_surface(cfg)
    try:
        report = quasiconvexity_audit(S, cfg.connection_radius, cfg.pairs, cfg.seed, cfg.farthest)
    except Disconnected as e:
        h = cfg.connection_radius or 3.0 * S.median_spacing
        write_report(
            cfg.out_dir, "quasiconvexity_report.json", "check quasiconvex", cfg,
            QuasiconvexityReport(kappa=None, kappa_finite=False, pairs=0, h=h, components=e.components),
        )
        raise
    write_report(cfg.out_dir, "quasiconvexity_report.json", "check quasiconvex", cfg, report)
    logger.info(f"quasiconvexity check done: kappa = {report.kappa} over {report.pairs} pairs")
    return 0


def run(args) -> int:
    extra = {"functions": args.functions}
    if args.which == "quasiconvex":
        extra.update(connection_radius=args.connection_radius, pairs=args.pairs, farthest=args.farthest or None)
    cfg = config_from_args(args, **extra)
    if args.which == "poincare":
        return cmd_check_poincare(cfg)
    return cmd_check_quasiconvex(cfg)


def register(subparsers) -> None:
    parser = subparsers.add_parser("check", help="Poincaré and quasiconvexity checks")
    which = parser.add_subparsers(dest="which", required=True)
    for name, help_text in (("poincare", "Poincaré inequality audit"), ("quasiconvex", "intrinsic distance audit")):
        sub = which.add_parser(name, help=help_text)
        add_run_arguments(sub)
        sub.add_argument("--functions", type=int, default=None, help="size of the random test family")
        if name == "quasiconvex":
            sub.add_argument("--connection-radius", dest="connection_radius", type=float, default=None)
            sub.add_argument("--pairs", type=int, default=None)
            sub.add_argument("--farthest", action="store_true", help="pair each source with its farthest sample")
        sub.set_defaults(handler=run)
