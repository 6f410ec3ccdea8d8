"""
Experimentos a escala de escritorio: denoising con prior min-|h|, prior Lipschitz
sobre una señal 1-D, estudio de early stopping de MPLP y benchmark de envolventes.
"""
import logging
import math
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from compactmrf.config import get_settings
from compactmrf.models.schemas import (
    BenchRow,
    BoundedLinearPiece,
    EarlyStopRow,
    PiecewiseLinearPotential,
)
from compactmrf.services import potentials as pot
from compactmrf.services.image_processor import ImageProcessor
from compactmrf.services.model import MrfInstance, gen_random_instance, make_grid
from compactmrf.services.mplp import lower_envelope, mplp_solve
from compactmrf.services.oracle import linprog_optimum, naive_envelope
from compactmrf.services.relaxations import build_compact

logger = logging.getLogger(__name__)

# --- denoising ---

def denoising_unary(image: np.ndarray, labels: int, lam: float = 1.0, sigma: float = 10.0,
                    outlier_rate: float = 0.05) -> np.ndarray:
    """θ_s^i = -λ log(r + (1 - r) φ(u_i - g_s; 0, σ)), u_i = i·255/(L-1)."""
    u = ImageProcessor.label_intensities(labels)
    g = np.asarray(image, dtype=float).ravel()
    density = norm.pdf(u[None, :] - g[:, None], loc=0.0, scale=sigma)
    return -lam * np.log(outlier_rate + (1.0 - outlier_rate) * density)

def denoising_prior(labels: int, pairs: Sequence[Tuple[float, float]]) -> PiecewiseLinearPotential:
    """min_k {α_k |h'| + β_k} con h' en unidades de intensidad."""
    step = ImageProcessor.MAXVAL / (labels - 1)
    return pot.l1_min([(alpha * step, beta) for alpha, beta in pairs], labels)

def denoising_instance(image: np.ndarray, labels: Optional[int] = None, lam: Optional[float] = None,
                       pairs: Optional[Sequence[Tuple[float, float]]] = None) -> MrfInstance:
    settings = get_settings()
    labels = labels or settings.denoise_labels
    lam = settings.denoise_lambda if lam is None else lam
    pairs = pairs or settings.denoise_pairs
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"se esperaba una imagen 2-D, forma {image.shape}")
    height, width = image.shape
    topo = make_grid(width, height)
    inst = MrfInstance(
        topology=topo,
        labels=labels,
        unary=denoising_unary(image, labels, lam, settings.denoise_sigma, settings.denoise_outlier_rate),
        potentials=[denoising_prior(labels, pairs)],
        edge_potential=np.zeros(topo.edge_count, dtype=np.int64),
        edge_weight=np.ones(topo.edge_count),
    )
    logger.info(f"Instancia de denoising {width}x{height}, L={labels}, λ={lam}, K={len(pairs)}")
    return inst

# --- prior Lipschitz ---

def lipschitz_bound(labels: int, eta: float) -> int:
    bound = int(math.floor(labels * eta + 1e-9))
    if bound < 0:
        raise ValueError(f"eta negativo: {eta}")
    return bound

def smooth_signal(nodes: int, labels: int, seed: int = 0, noise: float = 2.0) -> np.ndarray:
    """Seno con ruido en unidades de etiqueta, recortado a [0, L-1]."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 2.0 * np.pi, nodes)
    clean = (labels - 1) * (0.5 + 0.4 * np.sin(t))
    return np.clip(clean + rng.normal(0.0, noise, size=nodes), 0, labels - 1)

def lipschitz_instance(signal: Sequence[float], labels: int, eta: float, convex: bool = False) -> MrfInstance:
    """
    Cadena 1-D con unarios cuadráticos (i - f_s)² y ϑ^h = ı{|h| <= Lη}.
    `convex` elige la forma con paredes (graph cut) en vez de la pieza única.
    """
    f = np.asarray(signal, dtype=float).ravel()
    bound = lipschitz_bound(labels, eta)
    topo = make_grid(f.size, 1)
    potential = pot.lipschitz(bound) if convex else pot.lipschitz_pwl(bound)
    return MrfInstance(
        topology=topo,
        labels=labels,
        unary=(np.arange(labels)[None, :] - f[:, None]) ** 2,
        potentials=[potential],
        edge_potential=np.zeros(topo.edge_count, dtype=np.int64),
        edge_weight=np.ones(topo.edge_count),
    )

# --- early stopping de MPLP ---

GAP_BUCKETS = [0.0, 1e-6, 1e-4, 1e-3, 1e-2, 1e-1, math.inf]

def earlystop_study(instances: int, seed: int = 0, width: Optional[int] = None, height: Optional[int] = None,
                    labels: Optional[int] = None, sweeps: Optional[int] = None) -> List[EarlyStopRow]:
    """
    Por instancia: cota dual de MPLP contra el óptimo LP de la relajación compacta
    (HiGHS). gap = LP - dual de MPLP.
    """
    settings = get_settings()
    width = width or settings.gen_width
    height = height or settings.gen_height
    labels = labels or settings.gen_labels
    sweeps = sweeps or settings.mplp_sweeps
    rows = []
    for k in range(instances):
        inst = gen_random_instance(width, height, labels, seed + k)
        mplp_dual, _, state = mplp_solve(inst, sweeps, settings.mplp_tol)
        lp_opt, _ = linprog_optimum(build_compact(inst))
        gap = lp_opt - mplp_dual
        logger.info(f"Instancia {seed + k}: LP={lp_opt:.6f} MPLP={mplp_dual:.6f} gap={gap:.2e} ({state.sweeps} barridos)")
        rows.append(EarlyStopRow(seed=seed + k, lp_optimum=lp_opt, mplp_dual=mplp_dual, gap=gap, sweeps=state.sweeps))
    return rows

def gap_histogram(gaps: Sequence[float], buckets: Sequence[float] = GAP_BUCKETS) -> List[Tuple[str, int]]:
    """Conteos por intervalo [b_k, b_{k+1}); gaps negativos (ruido numérico) van al primero."""
    gaps = np.maximum(np.asarray(gaps, dtype=float), 0.0)
    out = []
    for lo, hi in zip(buckets[:-1], buckets[1:]):
        count = int(np.count_nonzero((gaps >= lo) & (gaps < hi)))
        out.append((f"[{lo:g},{hi:g})", count))
    return out

def gap_fraction(gaps: Sequence[float], threshold: float) -> float:
    gaps = np.asarray(gaps, dtype=float)
    return float(np.mean(gaps > threshold)) if gaps.size else 0.0

# --- benchmark de envolventes ---

def integer_potential(rng: np.random.Generator, labels: int, pieces: int) -> PiecewiseLinearPotential:
    """Piezas con coeficientes enteros; la última cubre todo el rango."""
    span = labels - 1
    out = []
    for _ in range(pieces - 1):
        lo, hi = sorted(rng.integers(-span, span + 1, size=2).tolist())
        out.append(BoundedLinearPiece(alpha=int(rng.integers(-3, 4)), beta=int(rng.integers(0, 10)), h_lo=lo, h_hi=hi))
    out.append(BoundedLinearPiece(alpha=int(rng.integers(-3, 4)), beta=int(rng.integers(0, 10)), h_lo=-span, h_hi=span))
    return PiecewiseLinearPotential(pieces=out)

def bench_envelope(labels: int, pieces: int, reps: int, seed: int = 0) -> BenchRow:
    """
    Cronometra lower_envelope y naive_envelope sobre entradas enteras (aritmética
    exacta en punto flotante) y verifica igualdad exacta en cada repetición.
    """
    rng = np.random.default_rng(seed)
    fast = naive = 0.0
    equal = True
    for _ in range(reps):
        theta = rng.integers(0, 100, size=labels).astype(float)
        p = integer_potential(rng, labels, pieces)
        w = float(rng.integers(1, 4))
        start = time.perf_counter()
        a = lower_envelope(theta, p, w)
        fast += time.perf_counter() - start
        start = time.perf_counter()
        b = naive_envelope(theta, p, w)
        naive += time.perf_counter() - start
        if not np.array_equal(a, b):
            logger.warning(f"Envolventes distintas con L={labels}, K={pieces}")
            equal = False
    row = BenchRow(labels=labels, pieces=pieces, reps=reps,
                   fast_seconds=fast / max(reps, 1), naive_seconds=naive / max(reps, 1), equal=equal)
    logger.info(f"Bench L={labels} K={pieces}: rápido {row.fast_seconds:.2e}s, ingenuo {row.naive_seconds:.2e}s")
    return row
