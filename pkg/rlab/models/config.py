from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rlab.models.zoo_spec import ZooSpec


class ScaleLadder(BaseModel):
    """Geometric scale ladder r_j = r0 · ratio^(-j), j = 0..depth."""

    model_config = ConfigDict(frozen=True)

    r0: float = Field(0.5, gt=0, le=1)
    ratio: float = Field(10.0, gt=1)
    depth: int = Field(3, ge=1)

    def scale(self, j: int) -> float:
        return self.r0 * self.ratio ** (-j)

    def dyadic_radii(self) -> List[float]:
        """Radii r_1..r_J entering the dyadic sums."""
        return [self.scale(j) for j in range(1, self.depth + 1)]

    def levels(self) -> List[float]:
        """Radii r_0..r_J of the construction levels."""
        return [self.scale(k) for k in range(self.depth + 1)]

    @property
    def finest(self) -> float:
        return self.scale(self.depth)


class RegionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: Optional[List[float]] = None
    radius: float = Field(0.25, gt=0)


class RunConfig(BaseModel):
    """Everything one command run depends on; echoed into every report it writes."""

    input: Optional[str] = None
    zoo: Optional[ZooSpec] = None
    ladder: ScaleLadder = ScaleLadder()
    region: RegionConfig = RegionConfig()
    eps_target: float = Field(0.05, gt=0)
    eps0: float = Field(0.1, gt=0)
    eps1_sq: float = Field(0.01, gt=0)
    probes: int = Field(64, ge=1)
    quad_points: int = Field(32, ge=2)
    seed: int = 0
    threads: int = Field(0, ge=0)
    out_dir: str = "reports"
    grid_spacing: Optional[float] = Field(None, gt=0)
    connection_radius: Optional[float] = Field(None, gt=0)
    pairs: int = Field(200, ge=1)
    farthest: bool = False
    functions: int = Field(6, ge=1, le=32)

    @model_validator(mode="after")
    def one_source(self):
        if (self.input is None) == (self.zoo is None):
            raise ValueError("give exactly one of an input file or a zoo shape")
        return self

    def echo(self) -> dict:
        return self.model_dump(mode="json")
