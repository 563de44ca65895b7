import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from rlab import __version__
from rlab.geometry.measure import NORMAL_UNIT_TOL, DiscreteSurface
from rlab.models.config import RunConfig
from rlab.models.reports import ReportEnvelope
from rlab.utils.errors import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


# ==================== Surfaces ====================


def surface_header(d: int, with_normals: bool) -> List[str]:
    names = [f"x{i}" for i in range(d)]
    if with_normals:
        names += [f"nu{i}" for i in range(d)]
    return names + ["w"]


def write_surface(S: DiscreteSurface, path) -> Path:
    """CSV with columns x0..x_d, then nu0..nu_d when normals are present, then w."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [S.points]
    if S.has_normals:
        columns.append(S.normals)
    columns.append(S.weights[:, None])
    header = ",".join(surface_header(S.ambient_dim, S.has_normals))
    np.savetxt(path, np.hstack(columns), delimiter=",", header=header, comments="", fmt=FLOAT_FORMAT)
    logger.info(f"Wrote {S.n_points} samples to {path}")
    return path


def read_surface(path) -> DiscreteSurface:
    """Inverse of write_surface; a missing w column is estimated from k-NN balls."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}", {"path": str(path)})
    try:
        table = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    except ValueError as e:
        raise ConfigError(f"unreadable surface file {path}: {e}", {"path": str(path)})
    names = table.dtype.names or ()
    coords = sorted((n for n in names if n.startswith("x") and n[1:].isdigit()), key=lambda n: int(n[1:]))
    if not coords:
        raise ConfigError("surface file has no x0.. columns", {"path": str(path), "columns": list(names)})
    table = np.atleast_1d(table)
    points = np.column_stack([table[n] for n in coords])
    normals = None
    nu = [f"nu{i}" for i in range(len(coords))]
    if all(n in names for n in nu):
        normals = np.column_stack([table[n] for n in nu])
        drift = np.abs(np.linalg.norm(normals, axis=1) - 1.0)
        if np.any(drift > NORMAL_UNIT_TOL):
            row = int(np.argmax(drift))
            raise ConfigError(
                "surface file has normals that are not unit length",
                {"path": str(path), "row": row, "deviation": float(drift[row])},
            )
    elif any(n.startswith("nu") for n in names):
        raise ConfigError("surface file has an incomplete set of normal columns", {"path": str(path)})
    weights = table["w"] if "w" in names else None
    logger.info(f"Loaded {points.shape[0]} samples in R^{points.shape[1]} from {path}")
    return DiscreteSurface.from_points(points, normals=normals, weights=weights)


# ==================== Reports ====================


def envelope(command: str, cfg: RunConfig, result: BaseModel) -> ReportEnvelope:
    return ReportEnvelope(
        version=__version__,
        command=command,
        seed=cfg.seed,
        config=cfg.echo(),
        result=result.model_dump(mode="json"),
    )


def write_report(out_dir, name: str, command: str, cfg: RunConfig, result: BaseModel) -> Path:
    """JSON report wrapped with version, seed and the run configuration."""
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(envelope(command, cfg, result).model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote {path}")
    return path


def read_report(path) -> ReportEnvelope:
    return ReportEnvelope.model_validate_json(Path(path).read_text())


def write_table(path, header: Sequence[str], rows, fmt: Optional[Sequence[str]] = None) -> Path:
    """Plot-ready CSV stream; the header line carries no comment prefix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(rows, dtype=float).reshape(-1, len(header))
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=fmt or FLOAT_FORMAT)
    logger.info(f"Wrote {data.shape[0]} rows to {path}")
    return path


def read_table(path) -> np.ndarray:
    return np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True, dtype=float))
