from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel

from rlab.models.config import ScaleLadder


# ==================== Measure ====================


class AhlforsRecord(BaseModel):
    x_index: int
    r: float
    ratio: float
    empty: bool = False


class AhlforsAudit(BaseModel):
    """μ(B_r(x))/r^n over probes × radii; c_m is inf when some resolvable ball came out empty."""

    ratio_min: float
    ratio_max: float
    c_m: float
    records: List[AhlforsRecord]
    skipped_radii: List[float] = []
    h_min: float
    flagged: int = 0


class DoublingAudit(BaseModel):
    kappa0: float
    samples: int
    skipped_radii: List[float] = []
    h_min: float


class MeasureReport(BaseModel):
    points: int
    total_weight: float
    median_spacing: float
    ahlfors: AhlforsAudit
    doubling: DoublingAudit


# ==================== Flatness ====================


class CarlesonRecord(BaseModel):
    x_index: int
    dyadic: float
    integral: Optional[float] = None
    skipped_levels: int = 0
    beta1_square_sum: float = 0.0


class DyadicEquivalenceRecord(BaseModel):
    x_index: int
    dyadic: float
    integral: float
    ratio: float
    degenerate: bool = False


class DyadicEquivalenceReport(BaseModel):
    records: List[DyadicEquivalenceRecord]
    ratio_min: float
    ratio_max: float
    constant: float
    violations: List[int] = []


class NormalBoundRecord(BaseModel):
    x_index: int
    r: float
    norm: float
    carleson_integral: float


class NormalBoundReport(BaseModel):
    records: List[NormalBoundRecord]
    violations: List[NormalBoundRecord] = []
    in_regime: bool
    surface_integral: float
    eps1_sq: float
    min_norm: float
    out_of_regime_low: int = 0


class AlphaHypothesisReport(BaseModel):
    alpha_max: float
    dyadic_sum_max: float
    eps0: float
    holds: bool
    probes: int


class CarlesonReport(BaseModel):
    """Per-probe Carleson sums with the dyadic/integral comparison and the small-α check."""

    records: List[CarlesonRecord]
    dyadic_max: float
    integral_max: Optional[float] = None
    equivalence: Optional[DyadicEquivalenceReport] = None
    alpha_hypothesis: Optional[AlphaHypothesisReport] = None


# ==================== Span lemmas ====================


class CalibrationReport(BaseModel):
    c0: float
    found: bool
    grid: List[float]
    failures: List[int]
    cases: int


class EffectiveSpanCheck(BaseModel):
    separation_margins: List[float]
    contained: bool
    rank: int
    ok: bool


# ==================== CCBP ====================


class ConditionResult(BaseModel):
    name: str
    value: Optional[float] = None
    finite: bool = True
    threshold: float
    kind: Literal["max", "min"]
    passed: bool
    location: Optional[Dict[str, Any]] = None
    checked: int = 0
    excluded: int = 0


class CCBPVerification(BaseModel):
    conditions: List[ConditionResult]
    failures: List[str] = []
    passed: bool
    achieved_eps: Optional[float] = None
    worst: Optional[Dict[str, Any]] = None


class PlaneBoundRecord(BaseModel):
    level: int
    j: int
    lhs: float
    alpha: float
    bound: Optional[float] = None
    passed: bool
    resolution_flag: bool = False


class PlaneBoundReport(BaseModel):
    c_p: Optional[float] = None
    records: List[PlaneBoundRecord]
    fraction_passed: float
    unflagged_failures: int = 0


class PlaneDocument(BaseModel):
    base: List[float]
    normal: List[float]


class LevelDocument(BaseModel):
    k: int
    r: float
    net: List[int]
    refined_index: List[int]
    refined: List[List[float]]
    normals: List[List[float]]
    plane_radius: Optional[float] = None
    clamped: bool = False
    boundary: List[int] = []


class CCBPDocument(BaseModel):
    """On-disk form of a CCBP: every plane is (refined point, unit normal) per level."""

    ladder: ScaleLadder
    region_center: List[float]
    region_radius: float
    origin_index: int
    base_index: int = 0
    eps_target: float
    achieved_eps: Optional[float] = None
    sigma0: PlaneDocument
    levels: List[LevelDocument]


# ==================== Flow ====================


class SupportCheck(BaseModel):
    level: int
    probes: int
    outside: int
    moved_outside: int
    passed: bool


class BilipEstimate(BaseModel):
    k_lower: float
    worst_pair: Optional[List[int]] = None
    pairs: int
    sampled: bool = False


class FlowLevelRecord(BaseModel):
    level: int
    r: float
    step_ratio: Optional[float] = None
    eps_prime_max: float = 0.0
    n_cumulative: float = 0.0


class FlowSummary(BaseModel):
    n_criterion: float
    k_lower: float
    worst_pair: Optional[List[int]] = None
    pairs: int
    sampled: bool = False
    step_ratio: List[float]
    step_bound_ok: bool
    max_displacement: float
    c0_estimate: Optional[float] = None
    grid_points: int
    grid_spacing: float
    levels: List[FlowLevelRecord] = []


class ReifenbergRecord(BaseModel):
    x_index: int
    r: float
    flatness: float
    hole: float
    score: float


class ReifenbergReport(BaseModel):
    worst: float
    worst_record: Optional[ReifenbergRecord] = None
    records: List[ReifenbergRecord]
    spacing: float
    allowance: float


class ContainmentReport(BaseModel):
    points: int
    max_distance: float
    bound: float
    violations: int
    passed: bool


# ==================== Poincaré ====================


class PoincareRecord(BaseModel):
    function: str
    x_index: int
    r: float
    lhs: float
    rhs_core: float
    ratio: Optional[float] = None
    hard_failure: bool = False
    skipped: bool = False


class PoincareReport(BaseModel):
    """c_p is None with c_p_finite false when some ball had a positive mean oscillation and no gradient."""

    c_p: Optional[float] = None
    c_p_finite: bool = True
    worst: Optional[PoincareRecord] = None
    records: List[PoincareRecord]
    hard_failures: int = 0
    functions: List[str]


class KeithRecord(BaseModel):
    x_index: int
    r: float
    lhs: float
    rhs_core: float
    ratio: Optional[float] = None
    violated: bool = False


class KeithReport(BaseModel):
    kappa1: Optional[float] = None
    worst_ratio: Optional[float] = None
    records: List[KeithRecord]
    violations: int = 0


class PoincareCheck(BaseModel):
    poincare: PoincareReport
    keith: Optional[KeithReport] = None
    keith_function: Optional[str] = None


class GradientDominationReport(BaseModel):
    points: int
    violations: int
    max_gradient: float


class LipProfile(BaseModel):
    x_index: int
    radii: List[float]
    values: List[Optional[float]]
    value: Optional[float] = None


class TangentProfile(BaseModel):
    x_index: int
    h: List[float]
    distances: List[float]
    ratios: List[float]


# ==================== Quasiconvexity ====================


class QuasiconvexityReport(BaseModel):
    kappa: Optional[float] = None
    kappa_finite: bool = True
    worst_pair: Optional[List[int]] = None
    pairs: int
    h: float
    components: int
    mean_ratio: Optional[float] = None


# ==================== Envelope ====================


class ReportEnvelope(BaseModel):
    """Every JSON report: tool version, seed and the full configuration echo around the result."""

    version: str
    command: str
    seed: int
    config: Dict[str, Any]
    result: Dict[str, Any]
