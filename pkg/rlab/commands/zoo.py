import logging
from pathlib import Path

from rlab.commands.common import add_zoo_arguments, zoo_params
from rlab.utils import settings
from rlab.utils.io import write_surface
from rlab.zoo.generators import describe, generate, make_spec

logger = logging.getLogger(__name__)


def cmd_zoo_generate(args) -> int:
    """Sample a corpus surface to CSV, with its expected properties alongside as JSON."""
    spec = make_spec(**zoo_params(args))
    out = Path(args.out)
    write_surface(generate(spec), out)
    expected = out.with_suffix(".expected.json")
    expected.write_text(describe(spec).model_dump_json(indent=2) + "\n")
    spec_path = out.with_suffix(".spec.json")
    spec_path.write_text(spec.model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote {expected} and {spec_path}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("zoo", help="synthetic surface corpus")
    actions = parser.add_subparsers(dest="action", required=True)
    gen = actions.add_parser("generate", help="write a zoo surface as CSV")
    add_zoo_arguments(gen, required=True)
    gen.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    gen.add_argument("--out", required=True, help="surface CSV path")
    gen.set_defaults(handler=cmd_zoo_generate)
