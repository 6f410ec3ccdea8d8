"""
Referencias independientes: fuerza bruta, envolvente O(L²), operador denso,
LP exacto con HiGHS y el arnés de equivalencia full LP vs compacto.
"""
import csv
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from compactmrf.config import get_settings
from compactmrf.models.schemas import (
    INFINITE_ENERGY,
    BlockKind,
    BoundedLinearPiece,
    ConvexHingePotential,
    EquivalenceRow,
    HingeTerm,
    PiecewiseLinearPotential,
    SolverConfig,
    Termination,
)
from compactmrf.services import potentials as pot
from compactmrf.services.model import LabelAssignment, MrfInstance, make_grid
from compactmrf.services.pdsolver import SolverError, solve
from compactmrf.services.relaxations import (
    FREE,
    INTERVAL,
    L2BALL,
    StructuredProgram,
    build_compact,
    build_full_lp,
)

logger = logging.getLogger(__name__)

class SearchSpaceError(ValueError):
    """L^N supera el tope de la fuerza bruta."""

def brute_force_map(inst: MrfInstance, cap: Optional[int] = None, chunk: int = 1 << 16) -> Tuple[LabelAssignment, float]:
    """Enumeración exhaustiva; ante empates gana el etiquetado lexicográficamente menor."""
    cap = cap if cap is not None else get_settings().brute_force_cap
    N, L = inst.node_count, inst.labels
    total = L ** N
    if total > cap:
        raise SearchSpaceError(f"L^N = {L}^{N} supera el tope {cap}")
    weights = L ** np.arange(N - 1, -1, -1, dtype=np.int64)
    tables = np.stack([inst.table(int(k)) for k in inst.edge_potential]) if inst.topology.edge_count else None
    best_energy, best_index = INFINITE_ENERGY, 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        labels = (idx[:, None] // weights[None, :]) % L
        energy = inst.unary[np.arange(N)[None, :], labels].sum(axis=1)
        if tables is not None:
            s, t = inst.edges[:, 0], inst.edges[:, 1]
            h = labels[:, t] - labels[:, s] + L - 1
            vals = tables[np.arange(inst.topology.edge_count)[None, :], h]
            finite = np.isfinite(vals)
            pair = np.where(finite, inst.edge_weight[None, :] * np.where(finite, vals, 0.0), 0.0).sum(axis=1)
            energy = np.where(finite.all(axis=1), energy + pair, INFINITE_ENERGY)
        k = int(np.argmin(energy))
        if energy[k] < best_energy:
            best_energy, best_index = float(energy[k]), int(idx[k])
    labels = (best_index // weights) % L
    return LabelAssignment(labels), best_energy

def naive_envelope(theta_t: Sequence[float], p: PiecewiseLinearPotential, w: float = 1.0) -> np.ndarray:
    """out[i] = min_j theta_t[j] + w ϑ^{j-i}, doble loop directo."""
    L = len(theta_t)
    out = np.full(L, INFINITE_ENERGY)
    for i in range(L):
        for j in range(L):
            value = pot.evaluate_pwl(p, j - i)
            if value == INFINITE_ENERGY:
                continue
            out[i] = min(out[i], theta_t[j] + w * value)
    return out

def operator_matrix(prog: StructuredProgram, as_sparse: bool = False):
    """K materializada (átomos prefijos expandidos sobre sus variables)."""
    rows = [prog.atom_rows]
    cols = [prog.atom_vars]
    vals = [prog.atom_coef]
    for r, blk, c, coef in zip(prog.patom_rows, prog.patom_block, prog.patom_cum, prog.patom_coef):
        off = prog.prefix_offsets[blk]
        rows.append(np.full(c, r, dtype=np.int64))
        cols.append(off + np.arange(c, dtype=np.int64))
        vals.append(np.full(c, coef))
    K = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(prog.n_rows, prog.n_primal),
    ).tocsr()
    if as_sparse:
        return K
    if prog.n_rows * prog.n_primal > get_settings().dense_oracle_cap:
        raise ValueError(f"matriz densa {prog.n_rows}x{prog.n_primal} supera dense_oracle_cap")
    return K.toarray()

def naive_apply(prog: StructuredProgram, vector: np.ndarray, direction: str = "forward") -> np.ndarray:
    K = operator_matrix(prog)
    if direction == "forward":
        return K @ np.asarray(vector, dtype=float)
    if direction == "adjoint":
        return K.T @ np.asarray(vector, dtype=float)
    raise ValueError(f"dirección desconocida: {direction}")

def linprog_optimum(prog: StructuredProgram) -> Tuple[float, np.ndarray]:
    """
    Óptimo exacto del programa como LP estándar (HiGHS). Las filas intervalo
    acotadas se escriben con una variable epígrafe t_r >= max(lo·v, hi·v); los
    grupos l2 no son lineales y se rechazan.
    """
    if np.any(prog.row_class == L2BALL):
        raise ValueError("linprog_optimum no admite grupos l2")
    K = operator_matrix(prog, as_sparse=True)
    n = prog.n_primal
    b = prog.rhs
    lo, hi = prog.row_lo, prog.row_hi
    iv = prog.row_class == INTERVAL
    eq = (prog.row_class == FREE) | (iv & np.isinf(lo) & np.isinf(hi))
    upper = iv & np.isinf(hi) & np.isfinite(lo)  # v <= 0, costo lo·v
    lower = iv & np.isinf(lo) & np.isfinite(hi)  # v >= 0, costo hi·v
    epi = np.flatnonzero(iv & np.isfinite(lo) & np.isfinite(hi))
    n_epi = epi.size

    cost = prog.cost.copy()
    constant = prog.constant
    for mask, slope in ((upper, lo), (lower, hi)):
        if np.any(mask):
            cost += K[mask].T @ slope[mask]
            constant -= float(np.dot(slope[mask], b[mask]))
    c = np.concatenate([cost, np.ones(n_epi)])

    def widen(block, epi_part=None):
        tail = epi_part if epi_part is not None else sparse.csr_matrix((block.shape[0], n_epi))
        return sparse.hstack([block, tail]).tocsr()

    A_eq, b_eq = [], []
    if np.any(eq):
        A_eq.append(widen(K[eq]))
        b_eq.append(b[eq])
    simplex = [blk for blk in prog.blocks if blk.kind == BlockKind.SIMPLEX]
    if simplex:
        rows = np.repeat(np.arange(len(simplex)), [blk.size for blk in simplex])
        cols = np.concatenate([blk.offset + np.arange(blk.size) for blk in simplex])
        S = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(len(simplex), n))
        A_eq.append(widen(S))
        b_eq.append(np.ones(len(simplex)))

    A_ub, b_ub = [], []
    if np.any(upper):
        A_ub.append(widen(K[upper]))
        b_ub.append(b[upper])
    if np.any(lower):
        A_ub.append(widen(-K[lower]))
        b_ub.append(-b[lower])
    if n_epi:
        minus_t = -sparse.identity(n_epi, format="csr")
        for slope in (lo, hi):
            A_ub.append(widen(sparse.diags(slope[epi]) @ K[epi], minus_t))
            b_ub.append(slope[epi] * b[epi])

    bounds = [(0.0, None)] * n + [(None, None)] * n_epi
    for blk in prog.blocks:
        if blk.kind == BlockKind.BOX:
            upper_bound = None if math.isinf(blk.hi) else blk.hi
            for j in range(blk.offset, blk.offset + blk.size):
                bounds[j] = (blk.lo, upper_bound)

    res = linprog(
        c,
        A_ub=sparse.vstack(A_ub).tocsr() if A_ub else None,
        b_ub=np.concatenate(b_ub) if b_ub else None,
        A_eq=sparse.vstack(A_eq).tocsr() if A_eq else None,
        b_eq=np.concatenate(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        logger.error(f"HiGHS falló en {prog.name}: {res.message}")
        raise SolverError(f"HiGHS no resolvió {prog.name}: {res.message}")
    logger.debug(f"HiGHS {prog.name}: óptimo {res.fun + constant:.9f}")
    return float(res.fun + constant), res.x[:n]

# --- instancias aleatorias pequeñas ---

def random_pwl_potential(rng: np.random.Generator, labels: int, max_pieces: int) -> PiecewiseLinearPotential:
    """K-1 piezas con dominio aleatorio más una pieza de dominio completo."""
    span = labels - 1
    K = int(rng.integers(1, max_pieces + 1))
    pieces = []
    for _ in range(K - 1):
        lo, hi = sorted(rng.integers(-span, span + 1, size=2).tolist())
        pieces.append(BoundedLinearPiece(alpha=rng.uniform(-1, 1), beta=rng.uniform(0, 2), h_lo=lo, h_hi=hi))
    pieces.append(BoundedLinearPiece(alpha=rng.uniform(-0.5, 0.5), beta=rng.uniform(1, 3), h_lo=-span, h_hi=span))
    return PiecewiseLinearPotential(pieces=pieces)

def random_convex_potential(rng: np.random.Generator, labels: int) -> ConvexHingePotential:
    span = labels - 1
    hinges = [
        HingeTerm(gamma=rng.uniform(0.1, 2.0), delta=int(rng.integers(-span, span + 1)))
        for _ in range(int(rng.integers(1, 3)))
    ]
    return ConvexHingePotential(alpha=rng.uniform(-1, 1), beta=rng.uniform(0, 1), hinges=hinges)

def random_instance(width: int, height: int, labels: int, seed: int, max_pieces: int = 3,
                    convex: bool = False) -> MrfInstance:
    """Grilla con θ ~ U(0,2), pesos U(0,1) y un potencial aleatorio por arista."""
    rng = np.random.default_rng(seed)
    topo = make_grid(width, height)
    E = topo.edge_count
    if convex:
        potentials = [random_convex_potential(rng, labels) for _ in range(E)]
    else:
        potentials = [random_pwl_potential(rng, labels, max_pieces) for _ in range(E)]
    return MrfInstance(
        topology=topo,
        labels=labels,
        unary=rng.uniform(0, 2, size=(topo.node_count, labels)),
        potentials=potentials or [pot.v_shape(1.0, 0.0, labels)],
        edge_potential=np.arange(E, dtype=np.int64),
        edge_weight=rng.uniform(0, 1, size=E),
    )

# --- arnés de equivalencia ---

def program_optimum(prog: StructuredProgram, backend: str = "highs",
                    config: Optional[SolverConfig] = None) -> Tuple[float, bool]:
    """(valor óptimo, convergió)."""
    if backend == "highs":
        value, _ = linprog_optimum(prog)
        return value, True
    if backend == "pdsolver":
        _, _, trace = solve(prog, config or SolverConfig(tol_gap=1e-6))
        return trace.best_dual, trace.termination == Termination.TOLERANCE
    raise ValueError(f"backend desconocido: {backend}")

def equivalence_harness(seeds: Union[int, Sequence[int]] = 30, width: int = 3, height: int = 3,
                        labels: int = 6, max_pieces: int = 3, backend: str = "highs",
                        config: Optional[SolverConfig] = None) -> List[EquivalenceRow]:
    """
    Por semilla: óptimo de build_full_lp (mínimo puntual de las piezas) contra
    build_compact (término a término) y su diferencia relativa.
    """
    seeds = range(seeds) if isinstance(seeds, int) else seeds
    rows: List[EquivalenceRow] = []
    for seed in seeds:
        inst = random_instance(width, height, labels, seed, max_pieces)
        try:
            opt_full, conv_full = program_optimum(build_full_lp(inst), backend, config)
            opt_compact, conv_compact = program_optimum(build_compact(inst), backend, config)
        except SolverError as e:
            logger.warning(f"Semilla {seed}: el solver no convergió ({e})")
            rows.append(EquivalenceRow(seed=seed, opt_full=math.nan, opt_compact=math.nan,
                                       rel_diff=math.nan, converged=False))
            continue
        rel = abs(opt_full - opt_compact) / (1.0 + abs(opt_full))
        converged = conv_full and conv_compact
        if not converged:
            logger.warning(f"Semilla {seed}: no convergió dentro del tope de iteraciones")
        logger.info(f"Semilla {seed}: full={opt_full:.6f} compact={opt_compact:.6f} rel={rel:.2e}")
        rows.append(EquivalenceRow(seed=seed, opt_full=opt_full, opt_compact=opt_compact,
                                   rel_diff=rel, converged=converged))
    return rows

def write_rows_csv(rows, path: Union[str, Path]) -> None:
    """Escribe filas pydantic como CSV con sus nombres de campo como encabezado."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = None
        for row in rows:
            data = row.model_dump()
            if writer is None:
                writer = csv.DictWriter(f, fieldnames=list(data))
                writer.writeheader()
            writer.writerow(data)
    logger.info(f"CSV escrito: {path} ({len(rows)} filas)")
