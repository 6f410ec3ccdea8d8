"""
Primal-dual precondicionado (diagonal, α = 1) sobre StructuredProgram.

    p <- proj_{dom g*}(p + σ ⊙ (K x̄ - b))
    x <- proj_C(x - τ ⊙ (c + Kᵀ p))
    x̄ = x + θ (x - x_prev)

Los átomos de suma prefija se aplican con una pasada acumulada por bloque
(forward) y una pasada de sufijos (adjoint), O(L) por arista.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from compactmrf.models.schemas import (
    INFINITE_ENERGY,
    BlockKind,
    EnergyTrace,
    SolverConfig,
    Termination,
    TraceRow,
)
from compactmrf.services.model import energy_of_labeling, round_superlevel_rows, LabelAssignment
from compactmrf.services.relaxations import (
    INTERVAL,
    L2BALL,
    StructuredProgram,
    objective_value,
)

logger = logging.getLogger(__name__)

STEP_FLOOR = 1e-12

class SolverError(RuntimeError):
    """Iterado no finito u otra falla numérica del solver."""

@dataclass
class SolverState:
    x: np.ndarray
    p: np.ndarray
    x_prev: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray

# --- operadores ---

def _check_dim(vec: np.ndarray, n: int, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n,):
        raise ValueError(f"dimensión de {what} {vec.shape}, se esperaba ({n},)")
    return vec

def _forward_plain(prog: StructuredProgram, x: np.ndarray) -> np.ndarray:
    return np.bincount(prog.atom_rows, weights=prog.atom_coef * x[prog.atom_vars], minlength=prog.n_rows).astype(float)

def _forward_group(prog: StructuredProgram, g, x: np.ndarray) -> np.ndarray:
    Y = np.zeros((g.offsets.size, g.length + 1))
    Y[:, 1:] = np.cumsum(x[g.offsets[:, None] + np.arange(g.length)], axis=1)
    return np.bincount(g.rows, weights=g.coef * Y[g.pos, g.cum], minlength=prog.n_rows)

def _adjoint_plain(prog: StructuredProgram, p: np.ndarray, coef: np.ndarray) -> np.ndarray:
    return np.bincount(prog.atom_vars, weights=coef * p[prog.atom_rows], minlength=prog.n_primal).astype(float)

def _adjoint_group(prog: StructuredProgram, g, p: np.ndarray, coef: np.ndarray) -> np.ndarray:
    width = g.length + 1
    gY = np.bincount(g.pos * width + g.cum, weights=coef * p[g.rows],
                     minlength=g.offsets.size * width).reshape(g.offsets.size, width)
    # ∂/∂y^j Σ_c gY_c Y^c = Σ_{c > j} gY_c
    suffix = np.cumsum(gY[:, ::-1], axis=1)[:, ::-1]
    idx = (g.offsets[:, None] + np.arange(g.length)).ravel()
    return np.bincount(idx, weights=suffix[:, 1:].ravel(), minlength=prog.n_primal)

def apply_forward(prog: StructuredProgram, x: np.ndarray, pool: Optional[ThreadPoolExecutor] = None) -> np.ndarray:
    """K x (sin restar b)."""
    x = _check_dim(x, prog.n_primal, "primal")
    if pool is None:
        out = _forward_plain(prog, x)
        for g in prog.prefix_groups:
            out += _forward_group(prog, g, x)
        return out
    futures = [pool.submit(_forward_plain, prog, x)]
    futures += [pool.submit(_forward_group, prog, g, x) for g in prog.prefix_groups]
    out = futures[0].result()
    for f in futures[1:]:
        out = out + f.result()
    return out

def apply_adjoint(prog: StructuredProgram, p: np.ndarray, pool: Optional[ThreadPoolExecutor] = None) -> np.ndarray:
    """Kᵀ p."""
    p = _check_dim(p, prog.n_rows, "dual")
    if pool is None:
        out = _adjoint_plain(prog, p, prog.atom_coef)
        for g in prog.prefix_groups:
            out += _adjoint_group(prog, g, p, g.coef)
        return out
    futures = [pool.submit(_adjoint_plain, prog, p, prog.atom_coef)]
    futures += [pool.submit(_adjoint_group, prog, g, p, g.coef) for g in prog.prefix_groups]
    out = futures[0].result()
    for f in futures[1:]:
        out = out + f.result()
    return out

def compute_preconditioners(prog: StructuredProgram, alpha: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    τ_j = 1 / Σ_i |K_ij|^{2-α},  σ_i = 1 / Σ_j |K_ij|^α.

    Un átomo prefijo Y^c con coef γ suma |γ| a cada una de las c variables que
    cubre. σ se iguala (mínimo) dentro de cada grupo l2 y τ dentro de cada bloque
    simplex, porque esas proyecciones no son separables.
    """
    row_sum = np.bincount(prog.atom_rows, weights=np.abs(prog.atom_coef) ** alpha, minlength=prog.n_rows).astype(float)
    col_sum = _adjoint_plain(prog, np.ones(prog.n_rows), np.abs(prog.atom_coef) ** (2 - alpha))
    for g in prog.prefix_groups:
        row_sum += np.bincount(g.rows, weights=np.abs(g.coef) ** alpha * g.cum, minlength=prog.n_rows)
        col_sum += _adjoint_group(prog, g, np.ones(prog.n_rows), np.abs(g.coef) ** (2 - alpha))

    empty_rows = int(np.count_nonzero(row_sum <= 0))
    empty_cols = int(np.count_nonzero(col_sum <= 0))
    if empty_rows or empty_cols:
        logger.warning(
            f"Preconditioner: {empty_rows} filas y {empty_cols} columnas vacías, paso acotado con piso {STEP_FLOOR:g}"
        )
    sigma = 1.0 / np.maximum(row_sum, STEP_FLOOR)
    tau = 1.0 / np.maximum(col_sum, STEP_FLOOR)

    grouped = prog.row_group >= 0
    if np.any(grouped):
        gmin = np.full(prog.group_radius.size, np.inf)
        np.minimum.at(gmin, prog.row_group[grouped], sigma[grouped])
        sigma[grouped] = gmin[prog.row_group[grouped]]
    for idx in prog.simplex_index.values():
        tau[idx] = tau[idx].min(axis=1, keepdims=True)
    return tau, sigma

# --- proximales ---

def prox_simplex(v: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """Proyección euclídea al simplex (por ordenamiento); acepta filas en 2D."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = v[None, :] if single else v
    if dim is not None and V.shape[1] != dim:
        raise ValueError(f"dimensión {V.shape[1]} distinta de {dim}")
    n = V.shape[1]
    u = -np.sort(-V, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    out = np.maximum(V - theta[:, None], 0.0)
    return out[0] if single else out

def prox_interval(v: np.ndarray, lo, hi) -> np.ndarray:
    return np.clip(v, lo, hi)

def prox_l2ball(v: np.ndarray, r: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm <= r:
        return v.copy()
    return v * (r / norm)

def project_primal(prog: StructuredProgram, x: np.ndarray) -> np.ndarray:
    out = np.clip(x, prog.var_lo, prog.var_hi)
    for idx in prog.simplex_index.values():
        out[idx] = prox_simplex(x[idx])
    return out

def project_dual(prog: StructuredProgram, p: np.ndarray) -> np.ndarray:
    out = p.copy()
    iv = prog.row_class == INTERVAL
    out[iv] = prox_interval(p[iv], prog.row_lo[iv], prog.row_hi[iv])
    l2 = prog.row_class == L2BALL
    if np.any(l2):
        groups = prog.row_group[l2]
        norms = np.sqrt(np.bincount(groups, weights=p[l2] ** 2, minlength=prog.group_radius.size))
        scale = np.ones_like(norms)
        over = norms > prog.group_radius
        scale[over] = prog.group_radius[over] / norms[over]
        out[l2] = p[l2] * scale[groups]
    return out

# --- cota dual ---

def dual_bound(prog: StructuredProgram, p: np.ndarray, pool: Optional[ThreadPoolExecutor] = None) -> float:
    """
    D(p) = const - b·p + Σ_B min_{x ∈ C_B} (c + Kᵀp)_B · x, con p factible para g*.
    """
    grad = prog.cost + apply_adjoint(prog, p, pool)
    value = prog.constant - float(np.dot(prog.rhs, p))
    for blk in prog.blocks:
        if blk.size == 0:
            continue
        gb = grad[blk.offset:blk.offset + blk.size]
        if blk.kind == BlockKind.SIMPLEX:
            value += float(gb.min())
        elif blk.kind == BlockKind.BOX:
            value += float(np.minimum(blk.lo * gb, blk.hi * gb).sum())
        elif np.any(gb < 0):
            return -INFINITE_ENERGY
    return value

def rounded_energy(prog: StructuredProgram, x: np.ndarray):
    """Energía real del etiquetado redondeado (isolínea 1/2)."""
    if prog.instance is None:
        return objective_value(prog, x), None
    labels = round_superlevel_rows(prog.node_matrix(x))
    return energy_of_labeling(prog.instance, LabelAssignment(labels)), labels

def relative_gap(energy: float, dual: float) -> float:
    if not (math.isfinite(energy) and math.isfinite(dual)):
        return INFINITE_ENERGY
    return (energy - dual) / (1.0 + abs(dual))

# --- loop ---

def solve(prog: StructuredProgram, config: Optional[SolverConfig] = None,
          state: Optional[SolverState] = None) -> Tuple[np.ndarray, np.ndarray, EnergyTrace]:
    """
    Itera el esquema primal-dual desde cero (o desde `state`) hasta gap <= tol_gap
    o max_iters. El trace se registra cada check_every iteraciones.
    """
    config = config or SolverConfig()
    if state is None:
        tau, sigma = compute_preconditioners(prog, config.precondition_alpha)
        state = SolverState(
            x=np.zeros(prog.n_primal), p=np.zeros(prog.n_rows), x_prev=np.zeros(prog.n_primal),
            tau=tau, sigma=sigma,
        )
    tau, sigma = state.tau, state.sigma
    theta = config.overrelaxation
    rows = []
    best_energy, best_dual, best_labels = INFINITE_ENERGY, -INFINITE_ENERGY, None
    termination = Termination.MAX_ITERS
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    x, p, x_prev = state.x, state.p, state.x_prev
    it = 0
    try:
        for it in range(1, config.max_iters + 1):
            x_bar = x + theta * (x - x_prev)
            p = project_dual(prog, p + sigma * (apply_forward(prog, x_bar, pool) - prog.rhs))
            x_prev = x
            x = project_primal(prog, x - tau * (prog.cost + apply_adjoint(prog, p, pool)))
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
                logger.error(f"Iterado no finito en la iteración {it} ({prog.name})")
                raise SolverError(f"iterado no finito en la iteración {it} del programa {prog.name}")

            if it % config.check_every == 0 or it == config.max_iters:
                energy, labels = rounded_energy(prog, x)
                dual = dual_bound(prog, p, pool)
                if energy < best_energy:
                    best_energy, best_labels = energy, labels
                best_dual = max(best_dual, dual)
                gap = relative_gap(best_energy, best_dual)
                rows.append(TraceRow(iteration=it, primal_energy=energy, dual_bound=dual, gap=gap))
                logger.debug(f"[{prog.name}] it={it} E={energy:.6f} D={dual:.6f} gap={gap:.3e}")
                if gap <= config.tol_gap:
                    termination = Termination.TOLERANCE
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    state.x, state.p, state.x_prev = x, p, x_prev
    trace = EnergyTrace(
        rows=rows,
        iterations=it,
        termination=termination,
        best_energy=best_energy,
        best_dual=best_dual,
        best_labels=[] if best_labels is None else [int(v) for v in best_labels],
    )
    level = logging.INFO if termination == Termination.TOLERANCE else logging.WARNING
    logger.log(level, f"Solver {prog.name}: {termination.value} tras {it} iteraciones, "
                      f"E={best_energy:.6f}, D={best_dual:.6f}, gap={trace.gap:.3e}")
    return x, p, trace

def write_trace_csv(trace: EnergyTrace, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "primal_energy", "dual_bound", "gap"])
        for row in trace.rows:
            writer.writerow([row.iteration, repr(row.primal_energy), repr(row.dual_bound), repr(row.gap)])
    logger.info(f"Trace escrito: {path}")
