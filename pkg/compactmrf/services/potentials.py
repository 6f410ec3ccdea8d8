"""
Potenciales pairwise como función de la diferencia de etiquetas h = j - i.

Dos formas:
- PiecewiseLinearPotential: mínimo de piezas lineales con dominio entero acotado.
- ConvexHingePotential: alpha*h + beta + sum_k [gamma_k (h + delta_k)]_+, con
  paredes duras opcionales h_lo <= h <= h_hi.

Fuera de dominio la energía es INFINITE_ENERGY.
"""
import logging
import math
from typing import List, Sequence, Tuple, Union

import numpy as np

from compactmrf.models.schemas import (
    INFINITE_ENERGY,
    BoundedLinearPiece,
    ConvexHingePotential,
    HingeTerm,
    PiecewiseLinearPotential,
)

logger = logging.getLogger(__name__)

Potential = Union[PiecewiseLinearPotential, ConvexHingePotential]

def evaluate_pwl(p: PiecewiseLinearPotential, h: int) -> float:
    best = INFINITE_ENERGY
    for piece in p.pieces:
        if piece.h_lo <= h <= piece.h_hi:
            best = min(best, piece.alpha * h + piece.beta)
    return best

def evaluate_hinge(p: ConvexHingePotential, h: int) -> float:
    if (p.h_lo is not None and h < p.h_lo) or (p.h_hi is not None and h > p.h_hi):
        return INFINITE_ENERGY
    value = p.alpha * h + p.beta
    for term in p.hinges:
        value += max(term.gamma * (h + term.delta), 0.0)
    return value

def evaluate(p: Potential, h: int) -> float:
    if isinstance(p, PiecewiseLinearPotential):
        return evaluate_pwl(p, h)
    return evaluate_hinge(p, h)

def table(p: Potential, labels: int) -> np.ndarray:
    """Tabla densa de largo 2L-1; la posición h + L - 1 guarda el valor en h."""
    hs = np.arange(-(labels - 1), labels, dtype=float)
    if isinstance(p, PiecewiseLinearPotential):
        out = np.full(hs.shape, INFINITE_ENERGY)
        for piece in p.pieces:
            mask = (hs >= piece.h_lo) & (hs <= piece.h_hi)
            out[mask] = np.minimum(out[mask], piece.alpha * hs[mask] + piece.beta)
        return out
    out = p.alpha * hs + p.beta
    for term in p.hinges:
        out = out + np.maximum(term.gamma * (hs + term.delta), 0.0)
    if p.h_lo is not None:
        out[hs < p.h_lo] = INFINITE_ENERGY
    if p.h_hi is not None:
        out[hs > p.h_hi] = INFINITE_ENERGY
    return out

def _tolerance(value: float) -> float:
    return 1e-12 * max(1.0, abs(value))

def _candidate_pieces(v: np.ndarray, offset: int):
    """
    Rectas candidatas (pendiente, intercepto, lo, hi, máscara de muestras tocadas).

    Cada par i < j cuya recta queda por encima de las muestras intermedias se
    extiende al intervalo maximal donde sigue por encima; las muestras aisladas
    (vecinos infinitos) dan una pieza de un solo punto.
    """
    n = v.shape[0]
    finite = np.isfinite(v)
    idx = np.arange(n)
    seen = set()
    out = []

    def add(slope, intercept, i, j):
        line = slope * (idx - offset) + intercept
        ok = finite & (line >= v - 1e-12 * np.maximum(1.0, np.abs(np.where(finite, v, 0.0))))
        lo, hi = i, j
        while lo - 1 >= 0 and ok[lo - 1]:
            lo -= 1
        while hi + 1 < n and ok[hi + 1]:
            hi += 1
        mask = 0
        for k in range(lo, hi + 1):
            if abs(line[k] - v[k]) <= _tolerance(v[k]):
                mask |= 1 << k
        if (lo, hi, mask) not in seen:
            seen.add((lo, hi, mask))
            out.append((slope, intercept, lo, hi, mask))

    for i in range(n):
        if not finite[i]:
            continue
        steepest = -math.inf
        for j in range(i + 1, n):
            if not finite[j]:
                break
            slope = (v[j] - v[i]) / (j - i)
            # la recta (i, j) domina las muestras intermedias sii su pendiente
            # no es menor que la de ninguna recta (i, k), i < k < j
            if slope + _tolerance(slope) >= steepest:
                add(slope, v[i] - slope * (i - offset), i, j)
            steepest = max(steepest, slope)
        isolated = (i == 0 or not finite[i - 1]) and (i == n - 1 or not finite[i + 1])
        if isolated:
            add(0.0, float(v[i]), i, i)
    return out

def _min_cover(universe: int, masks: List[int], budget: int = 200_000) -> List[int]:
    """Mínimo número de máscaras cuya unión es `universe` (búsqueda exacta acotada)."""
    # descartar máscaras contenidas en otra (ante empate se queda la primera)
    first = {}
    for a, m in enumerate(masks):
        first.setdefault(m, a)
    keep: List[int] = []
    for a in sorted(first.values(), key=lambda a: (-masks[a].bit_count(), a)):
        m = masks[a]
        if not any((m | masks[b]) == masks[b] for b in keep if masks[b].bit_count() > m.bit_count()):
            keep.append(a)
    largest = max(masks[a].bit_count() for a in keep)

    # solución voraz inicial: más muestras nuevas, luego más muestras en total
    best, covered = [], 0
    while covered != universe:
        a = max(keep, key=lambda c: ((masks[c] & ~covered).bit_count(), masks[c].bit_count(), -c))
        best.append(a)
        covered |= masks[a]

    covering = {k: [a for a in keep if masks[a] >> k & 1] for k in range(universe.bit_length()) if universe >> k & 1}
    nodes = 0

    def search(covered: int, chosen: List[int]) -> None:
        nonlocal best, nodes
        if covered == universe:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        nodes += 1
        if nodes > budget:
            return
        missing = universe & ~covered
        if len(chosen) + -(-missing.bit_count() // largest) >= len(best):
            return
        k = min((k for k in covering if missing >> k & 1), key=lambda k: len(covering[k]))
        for a in covering[k]:
            chosen.append(a)
            search(covered | masks[a], chosen)
            chosen.pop()

    search(0, [])
    if nodes > budget:
        logger.warning(f"from_samples: búsqueda de cobertura mínima truncada en {budget} nodos")
    return sorted(best)

def from_samples(values: Sequence[float]) -> PiecewiseLinearPotential:
    """
    Representación exacta de una tabla ϑ^h, h en [-(L-1), L-1], con el menor
    número de piezas.

    Cada pieza queda por encima de las muestras en su dominio, así que el mínimo
    reproduce la tabla sii toda muestra finita es tocada por alguna pieza: se
    elige una cobertura mínima entre las rectas candidatas. Las muestras +inf
    no quedan cubiertas.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n % 2 != 1 or n < 1:
        raise ValueError(f"se esperaban 2L-1 muestras, llegaron {n}")
    offset = (n - 1) // 2  # índice de h = 0
    finite = np.isfinite(v)
    if not finite.any():
        raise ValueError("todas las muestras son infinitas")

    candidates = _candidate_pieces(v, offset)
    universe = sum(1 << int(k) for k in np.flatnonzero(finite))
    chosen = _min_cover(universe, [c[4] for c in candidates])
    pieces = [
        BoundedLinearPiece(alpha=float(slope), beta=float(intercept), h_lo=lo - offset, h_hi=hi - offset)
        for slope, intercept, lo, hi, _ in (candidates[a] for a in chosen)
    ]
    return PiecewiseLinearPotential(pieces=sorted(pieces, key=lambda pc: (pc.h_lo, pc.h_hi)))

def max_affine_to_hinge(affines: Sequence[Tuple[float, float]]) -> ConvexHingePotential:
    """Máximo de afines (pendiente, intercepto) -> forma con bisagras."""
    if not affines:
        raise ValueError("se requiere al menos una función afín")
    # misma pendiente: sólo sobrevive el mayor intercepto
    best = {}
    for slope, intercept in affines:
        slope, intercept = float(slope), float(intercept)
        if slope not in best or intercept > best[slope]:
            best[slope] = intercept
    lines = sorted(best.items())

    # envolvente superior (pendientes crecientes)
    hull: List[Tuple[float, float]] = []
    for slope, intercept in lines:
        while len(hull) >= 2:
            (a1, b1), (a2, b2) = hull[-2], hull[-1]
            # hull[-1] sobra si la nueva recta supera a hull[-2] antes que hull[-1]
            if (intercept - b1) * (a2 - a1) >= (b2 - b1) * (slope - a1):
                hull.pop()
            else:
                break
        hull.append((slope, intercept))

    alpha, beta = hull[0]
    hinges = []
    for (a1, b1), (a2, b2) in zip(hull, hull[1:]):
        breakpoint = (b1 - b2) / (a2 - a1)
        if not math.isclose(breakpoint, round(breakpoint), abs_tol=1e-9):
            raise ValueError(f"quiebre no entero en h={breakpoint}")
        hinges.append(HingeTerm(gamma=a2 - a1, delta=-int(round(breakpoint))))
    return ConvexHingePotential(alpha=alpha, beta=beta, hinges=hinges)

def min_of(potentials: Sequence[PiecewiseLinearPotential]) -> PiecewiseLinearPotential:
    if not potentials:
        raise ValueError("min_of necesita al menos un potencial")
    pieces = [piece for p in potentials for piece in p.pieces]
    return PiecewiseLinearPotential(pieces=pieces)

def mirror(p: PiecewiseLinearPotential) -> PiecewiseLinearPotential:
    """h -> ϑ(-h)."""
    return PiecewiseLinearPotential(pieces=[
        BoundedLinearPiece(alpha=-piece.alpha, beta=piece.beta, h_lo=-piece.h_hi, h_hi=-piece.h_lo)
        for piece in p.pieces
    ])

def to_piecewise(p: Potential, labels: int) -> PiecewiseLinearPotential:
    if isinstance(p, PiecewiseLinearPotential):
        return p
    return from_samples(table(p, labels))

def v_shape(alpha: float, beta: float, labels: int) -> PiecewiseLinearPotential:
    """alpha*|h| + beta en todo el rango."""
    span = labels - 1
    if alpha == 0:
        return PiecewiseLinearPotential(pieces=[BoundedLinearPiece(alpha=0.0, beta=beta, h_lo=-span, h_hi=span)])
    return PiecewiseLinearPotential(pieces=[
        BoundedLinearPiece(alpha=-alpha, beta=beta, h_lo=-span, h_hi=0),
        BoundedLinearPiece(alpha=alpha, beta=beta, h_lo=0, h_hi=span),
    ])

def l1_min(terms: Sequence[Tuple[float, float]], labels: int) -> PiecewiseLinearPotential:
    """min_k { alpha_k |h| + beta_k }."""
    return min_of([v_shape(a, b, labels) for a, b in terms])

def truncated_linear(tau: float, labels: int, scale: float = 1.0) -> PiecewiseLinearPotential:
    """scale * min{|h|, tau}."""
    span = labels - 1
    return PiecewiseLinearPotential(pieces=[
        BoundedLinearPiece(alpha=-scale, beta=0.0, h_lo=-span, h_hi=0),
        BoundedLinearPiece(alpha=scale, beta=0.0, h_lo=0, h_hi=span),
        BoundedLinearPiece(alpha=0.0, beta=scale * tau, h_lo=-span, h_hi=span),
    ])

def lipschitz(bound: int) -> ConvexHingePotential:
    """ı{|h| <= bound}."""
    return ConvexHingePotential(alpha=0.0, beta=0.0, hinges=[], h_lo=-bound, h_hi=bound)

def lipschitz_pwl(bound: int) -> PiecewiseLinearPotential:
    return PiecewiseLinearPotential(pieces=[BoundedLinearPiece(alpha=0.0, beta=0.0, h_lo=-bound, h_hi=bound)])

def as_l1_terms(p: PiecewiseLinearPotential, labels: int) -> List[Tuple[float, float]]:
    """
    Descompone p en términos alpha_k |h| + beta_k (estilo l1_min).

    Cada término es una pieza constante de dominio completo o un par de piezas
    (-a, b, [-(L-1), 0]) / (a, b, [0, L-1]). Lanza ValueError si no calza.
    """
    span = labels - 1

    def clip(piece):
        return max(piece.h_lo, -span), min(piece.h_hi, span)

    terms: List[Tuple[float, float]] = []
    left, right = [], []
    for piece in p.pieces:
        lo, hi = clip(piece)
        if piece.alpha == 0 and lo == -span and hi == span:
            terms.append((0.0, piece.beta))
        elif piece.alpha < 0 and lo == -span and hi == 0:
            left.append(piece)
        elif piece.alpha > 0 and lo == 0 and hi == span:
            right.append(piece)
        else:
            raise ValueError(f"la pieza {piece} no es parte de un término alpha|h| + beta")
    for piece in left:
        match = next((r for r in right if r.alpha == -piece.alpha and r.beta == piece.beta), None)
        if match is None:
            raise ValueError(f"la pieza {piece} no tiene su rama simétrica")
        right.remove(match)
        terms.append((match.alpha, piece.beta))
    if right:
        raise ValueError(f"piezas sin rama simétrica: {right}")
    return terms
