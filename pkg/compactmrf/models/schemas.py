import math
from pydantic import BaseModel, ConfigDict, Field, BeforeValidator, model_validator
from typing import Optional, List, Annotated
from enum import Enum

# Energía +inf: restricción dura violada o diferencia fuera de dominio.
INFINITE_ENERGY = math.inf

def coerce_integral(v):
    """Acepta 3 o 3.0 (JSON), rechaza 2.5."""
    if isinstance(v, bool):
        raise ValueError(f"se esperaba un entero, no {v!r}")
    if isinstance(v, int):
        return v
    try:
        f = float(v)
    except (ValueError, TypeError):
        raise ValueError(f"se esperaba un entero, no {v!r}")
    if not math.isfinite(f) or f != int(f):
        raise ValueError(f"cota no entera: {v!r}")
    return int(f)

IntegralInt = Annotated[int, BeforeValidator(coerce_integral)]

class Method(str, Enum):
    LP_FULL = "lp-full"
    COMPACT = "compact"
    COMPACT_ISO = "compact-iso"
    COMPACT_ISO_B = "compact-iso-b"
    CONVEX_LP = "convex-lp"
    GRAPHCUT = "graphcut"
    MPLP = "mplp"
    BRUTE = "brute"

class CompactStyle(str, Enum):
    GENERAL = "general"
    L1_MIN = "l1_min"

class IsoVariant(str, Enum):
    JOINT_TERMS = "joint_terms"
    JOINT_BRANCH = "joint_branch"

class BlockKind(str, Enum):
    SIMPLEX = "simplex"
    NONNEG = "nonneg"
    BOX = "box"

class ProxClass(str, Enum):
    FREE = "free"
    INTERVAL = "interval"
    L2BALL = "l2ball"

class Termination(str, Enum):
    TOLERANCE = "tolerance"
    MAX_ITERS = "max_iters"

# --- Potenciales ---

class BoundedLinearPiece(BaseModel):
    """alpha*h + beta en el intervalo entero [h_lo, h_hi]."""
    model_config = ConfigDict(frozen=True)

    alpha: float
    beta: float
    h_lo: IntegralInt
    h_hi: IntegralInt

    @model_validator(mode="after")
    def _check_domain(self):
        if self.h_lo > self.h_hi:
            raise ValueError(f"h_lo={self.h_lo} > h_hi={self.h_hi}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha y beta deben ser finitos")
        return self

class PiecewiseLinearPotential(BaseModel):
    """Mínimo de K piezas lineales acotadas."""
    model_config = ConfigDict(frozen=True)

    pieces: List[BoundedLinearPiece] = Field(..., min_length=1)

    @property
    def K(self) -> int:
        return len(self.pieces)

class HingeTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(..., gt=0)
    delta: IntegralInt

class ConvexHingePotential(BaseModel):
    """alpha*h + beta + sum_k [gamma_k (h + delta_k)]_+ con paredes opcionales."""
    model_config = ConfigDict(frozen=True)

    alpha: float = 0.0
    beta: float = 0.0
    hinges: List[HingeTerm] = []
    h_lo: Optional[IntegralInt] = None
    h_hi: Optional[IntegralInt] = None

    @model_validator(mode="before")
    @classmethod
    def _fold_infinite_hinges(cls, data):
        # [inf * (h + delta)]_+ es la restricción h <= -delta
        if not isinstance(data, dict):
            return data
        hinges = data.get("hinges") or []
        finite, h_hi = [], data.get("h_hi")
        for term in hinges:
            gamma = term.gamma if isinstance(term, HingeTerm) else term["gamma"]
            delta = term.delta if isinstance(term, HingeTerm) else term["delta"]
            if gamma == math.inf:
                wall = -coerce_integral(delta)
                h_hi = wall if h_hi is None else min(coerce_integral(h_hi), wall)
            else:
                finite.append(term)
        return {**data, "hinges": finite, "h_hi": h_hi}

    @model_validator(mode="after")
    def _check(self):
        if self.h_lo is not None and self.h_hi is not None and self.h_lo > self.h_hi:
            raise ValueError(f"dominio vacío [{self.h_lo}, {self.h_hi}]")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha y beta deben ser finitos")
        return self

# --- Archivo de instancia ---

class HingeSpec(BaseModel):
    alpha: float = 0.0
    beta: float = 0.0
    terms: List[List[float]] = []  # [[gamma, delta], ...]
    h_lo: Optional[IntegralInt] = None
    h_hi: Optional[IntegralInt] = None

class PotentialSpec(BaseModel):
    pieces: Optional[List[List[float]]] = None  # [[alpha, beta, h_lo, h_hi], ...]
    hinges: Optional[HingeSpec] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.pieces is None) == (self.hinges is None):
            raise ValueError("cada potencial necesita exactamente uno de 'pieces' o 'hinges'")
        for row in self.pieces or []:
            if len(row) != 4:
                raise ValueError(f"pieza mal formada: {row}")
        return self

class InstanceFile(BaseModel):
    """Formato JSON de una instancia MRF."""
    labels: int = Field(..., ge=1)
    width: Optional[int] = Field(None, ge=1)
    height: Optional[int] = Field(None, ge=1)
    edges: Optional[List[List[int]]] = None
    unary: List[float]
    potentials: List[PotentialSpec] = []
    edge_potential: List[int] = []
    edge_weight: Optional[List[float]] = None

    @model_validator(mode="after")
    def _topology(self):
        if (self.width is None) != (self.height is None):
            raise ValueError("width y height van juntos")
        if self.width is None and self.edges is None:
            raise ValueError("se requiere 'edges' o metadatos de grilla")
        return self

# --- Solver ---

class SolverConfig(BaseModel):
    max_iters: int = Field(5000, ge=1)
    check_every: int = Field(50, ge=1)
    tol_gap: float = Field(1e-6, gt=0)
    overrelaxation: float = Field(1.0, ge=0, le=1)  # 1.0 -> x_bar = 2x - x_prev
    precondition_alpha: float = Field(1.0, gt=0, le=2)
    threads: int = Field(1, ge=1)

class TraceRow(BaseModel):
    iteration: int
    primal_energy: float
    dual_bound: float
    gap: float

class EnergyTrace(BaseModel):
    rows: List[TraceRow] = []
    iterations: int = 0
    termination: Optional[Termination] = None
    best_energy: float = INFINITE_ENERGY
    best_dual: float = -INFINITE_ENERGY
    best_labels: List[int] = []

    @property
    def gap(self) -> float:
        return self.rows[-1].gap if self.rows else INFINITE_ENERGY

    @model_validator(mode="after")
    def _increasing(self):
        its = [r.iteration for r in self.rows]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ValueError("las iteraciones del trace deben ser estrictamente crecientes")
        return self

class SizeReport(BaseModel):
    per_edge_primal: List[int]
    per_edge_rows: List[int]
    node_primal: int
    node_rows: int
    other_primal: int = 0
    other_rows: int = 0
    total_primal: int
    total_rows: int

    @model_validator(mode="after")
    def _totals(self):
        if self.total_primal != sum(self.per_edge_primal) + self.node_primal + self.other_primal:
            raise ValueError("total_primal inconsistente")
        if self.total_rows != sum(self.per_edge_rows) + self.node_rows + self.other_rows:
            raise ValueError("total_rows inconsistente")
        return self

# --- Reportes ---

class SolveReport(BaseModel):
    """Resumen de una resolución (salida de `solve`)."""
    method: Method
    energy: float
    dual_bound: Optional[float] = None
    iterations: Optional[int] = None
    termination: Optional[Termination] = None
    size_report: Optional[SizeReport] = None
    labels: List[int]

    # Resumen para consola
    energy_display: str  # "E=12.3400"

class EquivalenceRow(BaseModel):
    seed: int
    opt_full: float
    opt_compact: float
    rel_diff: float
    converged: bool

class EarlyStopRow(BaseModel):
    seed: int
    lp_optimum: float
    mplp_dual: float
    gap: float
    sweeps: int

class BenchRow(BaseModel):
    labels: int
    pieces: int
    reps: int
    fast_seconds: float
    naive_seconds: float
    equal: bool
