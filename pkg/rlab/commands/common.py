import argparse
import logging
from typing import Tuple, get_args

import numpy as np

from rlab.geometry.measure import DiscreteSurface
from rlab.models.config import RegionConfig, RunConfig, ScaleLadder
from rlab.models.zoo_spec import Shape
from rlab.utils import settings
from rlab.utils.errors import ConfigError
from rlab.utils.io import read_surface
from rlab.utils.parallel import set_default_threads
from rlab.zoo.generators import generate, make_spec

logger = logging.getLogger(__name__)

SHAPES = list(get_args(Shape))

# zoo flag -> ZooSpec field
ZOO_FLAGS = {
    "n": int,
    "samples": int,
    "extent": float,
    "amplitude": float,
    "wavelength": float,
    "radius": float,
    "hole_radius": float,
    "lacunarity": float,
    "gamma": float,
    "levels": int,
    "separation": float,
}


def add_zoo_arguments(parser: argparse.ArgumentParser, required: bool = False) -> None:
    group = parser.add_argument_group("zoo surface")
    group.add_argument("--shape", choices=SHAPES, required=required)
    for name, kind in ZOO_FLAGS.items():
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"zoo_{name}", type=kind, default=None)
    group.add_argument("--hole-center", dest="zoo_hole_center", type=float, nargs="+", default=None)


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every command that reads a surface and writes reports."""
    parser.add_argument("--input", default=None, help="surface CSV (x0..,[nu0..],[w])")
    add_zoo_arguments(parser)
    parser.add_argument("--r-base", dest="r_base", type=float, default=None)
    parser.add_argument("--ratio", type=float, default=None)
    parser.add_argument("--depth", type=int, default=None)
    parser.add_argument("--region-center", dest="region_center", type=float, nargs="+", default=None)
    parser.add_argument("--region-radius", dest="region_radius", type=float, default=None)
    parser.add_argument("--eps-target", dest="eps_target", type=float, default=None)
    parser.add_argument("--eps0", type=float, default=None)
    parser.add_argument("--eps1-sq", dest="eps1_sq", type=float, default=None)
    parser.add_argument("--probes", type=int, default=None)
    parser.add_argument("--quad-points", dest="quad_points", type=int, default=None)
    parser.add_argument("--grid-spacing", dest="grid_spacing", type=float, default=None)
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--threads", type=int, default=settings.DEFAULT_THREADS)
    parser.add_argument("--out-dir", dest="out_dir", default=settings.DEFAULT_OUT_DIR)


def zoo_params(args: argparse.Namespace) -> dict:
    params = {"shape": args.shape, "seed": args.seed}
    for name in list(ZOO_FLAGS) + ["hole_center"]:
        value = getattr(args, f"zoo_{name}", None)
        if value is not None:
            params[name] = value
    return params


def _given(**values) -> dict:
    return {k: v for k, v in values.items() if v is not None}


def config_from_args(args: argparse.Namespace, **extra) -> RunConfig:
    """RunConfig from parsed flags; unset flags keep the model defaults."""
    zoo = make_spec(**zoo_params(args)) if args.shape else None
    ladder = ScaleLadder(**_given(r0=args.r_base, ratio=args.ratio, depth=args.depth))
    region = RegionConfig(**_given(center=args.region_center, radius=args.region_radius))
    fields = _given(
        eps_target=args.eps_target,
        eps0=args.eps0,
        eps1_sq=args.eps1_sq,
        probes=args.probes,
        quad_points=args.quad_points,
        grid_spacing=args.grid_spacing,
        **extra,
    )
    cfg = RunConfig(
        input=args.input, zoo=zoo, ladder=ladder, region=region, seed=args.seed,
        threads=args.threads, out_dir=args.out_dir, **fields,
    )
    set_default_threads(cfg.threads)
    return cfg


def load_surface(cfg: RunConfig) -> DiscreteSurface:
    if cfg.zoo is not None:
        return generate(cfg.zoo)
    return read_surface(cfg.input)


def resolve_region(S: DiscreteSurface, cfg: RunConfig) -> Tuple[np.ndarray, float]:
    """Configured region, or a ball around the sample point nearest to the centroid."""
    if cfg.region.center is None:
        centroid = np.average(S.points, axis=0, weights=S.weights)
        _, i = S.index.nearest(centroid)
        center = S.points[int(i)]
    else:
        center = np.asarray(cfg.region.center, dtype=float)
        if center.shape[0] != S.ambient_dim:
            raise ConfigError(
                f"region centre has {center.shape[0]} coordinates, surface lives in R^{S.ambient_dim}"
            )
    return center, cfg.region.radius
