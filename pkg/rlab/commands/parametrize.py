import logging
from pathlib import Path

from rlab.commands.common import add_run_arguments, config_from_args, load_surface, resolve_region
from rlab.construction.ccbp import build_ccbp, ccbp_to_document
from rlab.construction.flow import (
    FlowTrace,
    bilip_estimate,
    containment_audit,
    flow_summary,
    reifenberg_audit,
    run_flow,
    trace_columns,
    trace_rows,
)
from rlab.models.config import RunConfig
from rlab.utils.io import write_report, write_table

logger = logging.getLogger(__name__)


def audit_radii(trace: FlowTrace) -> list:
    radii = [r for r in trace.radii if trace.grid_spacing <= r <= trace.disk_radius / 2]
    return radii or [trace.disk_radius / 2]


def cmd_parametrize(cfg: RunConfig) -> int:
    """CCBP, flow on Σ₀, bi-Lipschitz estimate and flatness audit of the image."""
    S = load_surface(cfg)
    S.require_normals()
    center, radius = resolve_region(S, cfg)
    out = Path(cfg.out_dir)
    c = build_ccbp(S, center, radius, cfg.ladder, cfg.eps_target)
    write_report(out, "ccbp.json", "parametrize", cfg, ccbp_to_document(c))
    trace = run_flow(c, cfg.grid_spacing)
    write_table(out / "flow.csv", trace_columns(trace), trace_rows(trace))
    summary = flow_summary(trace, bilip_estimate(trace))
    write_report(out, "bilip.json", "parametrize", cfg, summary)
    radii = audit_radii(trace)
    inner = trace.interior(max(radii))
    reifenberg = reifenberg_audit(trace.final, radii, spacing=trace.grid_spacing, centers=inner)
    write_report(out, "reifenberg.json", "parametrize", cfg, reifenberg)
    containment = containment_audit(S, trace, center, radius)
    write_report(out, "containment.json", "parametrize", cfg, containment)
    if not containment.passed:
        logger.warning(f"{containment.violations} samples farther than {containment.bound:.4g} from the flow image")
    logger.info(
        f"parametrize done: eps {c.achieved_eps:.4g}, N {summary.n_criterion:.4g}, "
        f"K_lower {summary.k_lower:.6g}, Reifenberg {reifenberg.worst:.4g}"
    )
    return 0


def run(args) -> int:
    return cmd_parametrize(config_from_args(args))


def register(subparsers) -> None:
    parser = subparsers.add_parser("parametrize", help="build a CCBP and run the flow on its base plane")
    add_run_arguments(parser)
    parser.set_defaults(handler=run)
