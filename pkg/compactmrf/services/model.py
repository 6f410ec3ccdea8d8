"""
Instancias MRF: grafo, etiquetas, unarios y potenciales por arista.

La energía de un etiquetado es
    E(Λ) = Σ_s θ_s^{Λ(s)} + Σ_{s~t} w_st · ϑ_st^{Λ(t) - Λ(s)}.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from compactmrf.models.schemas import (
    INFINITE_ENERGY,
    BoundedLinearPiece,
    ConvexHingePotential,
    HingeSpec,
    InstanceFile,
    PiecewiseLinearPotential,
    PotentialSpec,
)
from compactmrf.services import potentials as pot

logger = logging.getLogger(__name__)

HORIZONTAL = 0
VERTICAL = 1

@dataclass(frozen=True)
class GraphTopology:
    node_count: int
    edges: np.ndarray  # (E, 2) enteros
    width: Optional[int] = None
    height: Optional[int] = None
    orientation: Optional[np.ndarray] = None  # HORIZONTAL / VERTICAL por arista

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        if self.node_count < 1:
            raise ValueError(f"node_count debe ser >= 1, llegó {self.node_count}")
        if edges.size and (edges.min() < 0 or edges.max() >= self.node_count):
            raise ValueError("índice de nodo fuera de rango en 'edges'")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("no se permiten auto-aristas")

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def is_grid(self) -> bool:
        return self.width is not None

    def grid_neighbors(self):
        """(right_edge, down_edge): índice de arista por píxel, -1 si no existe."""
        if not self.is_grid:
            raise ValueError("la topología no tiene metadatos de grilla")
        right = np.full(self.node_count, -1, dtype=np.int64)
        down = np.full(self.node_count, -1, dtype=np.int64)
        for e, (s, _) in enumerate(self.edges):
            if self.orientation[e] == HORIZONTAL:
                right[s] = e
            else:
                down[s] = e
        return right, down

def make_grid(width: int, height: int) -> GraphTopology:
    """Grilla 4-conexa con diferencias hacia adelante (derecha y abajo)."""
    if width < 1 or height < 1:
        raise ValueError(f"dimensiones inválidas {width}x{height}")
    edges, orientation = [], []
    for y in range(height):
        for x in range(width):
            s = y * width + x
            if x + 1 < width:
                edges.append((s, s + 1))
                orientation.append(HORIZONTAL)
            if y + 1 < height:
                edges.append((s, s + width))
                orientation.append(VERTICAL)
    return GraphTopology(
        node_count=width * height,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        width=width,
        height=height,
        orientation=np.array(orientation, dtype=np.int8),
    )

@dataclass
class LabelAssignment:
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()

    def validate(self, node_count: int, labels: int) -> None:
        if self.labels.shape[0] != node_count:
            raise ValueError(f"se esperaban {node_count} etiquetas, llegaron {self.labels.shape[0]}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= labels):
            raise ValueError(f"etiqueta fuera de [0, {labels - 1}]")

@dataclass
class MrfInstance:
    topology: GraphTopology
    labels: int
    unary: np.ndarray  # (N, L)
    potentials: List[pot.Potential]
    edge_potential: np.ndarray  # índice en `potentials` por arista
    edge_weight: np.ndarray
    _tables: Dict[int, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=float)
        E = self.topology.edge_count
        self.edge_potential = np.asarray(self.edge_potential, dtype=np.int64).ravel()
        self.edge_weight = np.asarray(self.edge_weight, dtype=float).ravel()
        if self.labels < 1:
            raise ValueError("se requiere L >= 1")
        if self.unary.shape != (self.topology.node_count, self.labels):
            raise ValueError(
                f"unary tiene forma {self.unary.shape}, se esperaba "
                f"({self.topology.node_count}, {self.labels})"
            )
        if self.edge_potential.shape[0] != E or self.edge_weight.shape[0] != E:
            raise ValueError("edge_potential y edge_weight deben tener una entrada por arista")
        if E and (self.edge_potential.min() < 0 or self.edge_potential.max() >= len(self.potentials)):
            raise ValueError("edge_potential apunta fuera de 'potentials'")
        if np.any(self.edge_weight < 0) or not np.all(np.isfinite(self.edge_weight)):
            raise ValueError("edge_weight debe ser finito y no negativo")
        span = self.labels - 1
        for k, p in enumerate(self.potentials):
            if isinstance(p, PiecewiseLinearPotential):
                for piece in p.pieces:
                    if piece.h_lo < -span or piece.h_hi > span:
                        raise ValueError(
                            f"potencial {k}: dominio [{piece.h_lo}, {piece.h_hi}] fuera de [-{span}, {span}]"
                        )

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    @property
    def edges(self) -> np.ndarray:
        return self.topology.edges

    def edge_pot(self, e: int) -> pot.Potential:
        return self.potentials[int(self.edge_potential[e])]

    def table(self, k: int) -> np.ndarray:
        if k not in self._tables:
            self._tables[k] = pot.table(self.potentials[k], self.labels)
        return self._tables[k]

    def all_convex(self) -> bool:
        return all(isinstance(p, ConvexHingePotential) for p in self.potentials)

    def all_piecewise(self) -> bool:
        return all(isinstance(p, PiecewiseLinearPotential) for p in self.potentials)

    def as_piecewise(self) -> "MrfInstance":
        """Misma instancia con todos los potenciales en forma de piezas."""
        return MrfInstance(
            topology=self.topology,
            labels=self.labels,
            unary=self.unary,
            potentials=[pot.to_piecewise(p, self.labels) for p in self.potentials],
            edge_potential=self.edge_potential,
            edge_weight=self.edge_weight,
        )

def energy_of_labeling(inst: MrfInstance, a: Union[LabelAssignment, Sequence[int]]) -> float:
    if not isinstance(a, LabelAssignment):
        a = LabelAssignment(np.asarray(a))
    a.validate(inst.node_count, inst.labels)
    lab = a.labels
    energy = float(inst.unary[np.arange(inst.node_count), lab].sum())
    if inst.topology.edge_count == 0:
        return energy
    s, t = inst.edges[:, 0], inst.edges[:, 1]
    idx = lab[t] - lab[s] + inst.labels - 1
    values = np.empty(inst.topology.edge_count)
    for k in np.unique(inst.edge_potential):
        mask = inst.edge_potential == k
        values[mask] = inst.table(int(k))[idx[mask]]
    if not np.all(np.isfinite(values)):
        return INFINITE_ENERGY
    return energy + float(np.dot(inst.edge_weight, values))

class SplitMix64:
    """Generador SplitMix64: reproducible entre implementaciones."""

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)])

def gen_random_instance(width: int, height: int, labels: int, seed: int) -> MrfInstance:
    """
    Grilla con θ_s^i ~ U(0,2) y ϑ_st^h = α_st min{|h|, 2}, α_st ~ U(0,1).
    Se sortean primero los unarios (fila por fila) y luego los pesos por arista.
    """
    topo = make_grid(width, height)
    rng = SplitMix64(seed)
    unary = rng.uniform_array(topo.node_count * labels, 0.0, 2.0).reshape(topo.node_count, labels)
    weights = rng.uniform_array(topo.edge_count, 0.0, 1.0)
    return MrfInstance(
        topology=topo,
        labels=labels,
        unary=unary,
        potentials=[pot.truncated_linear(2, labels)],
        edge_potential=np.zeros(topo.edge_count, dtype=np.int64),
        edge_weight=weights,
    )

def round_superlevel(x_s: Sequence[float]) -> int:
    """
    Etiqueta de la isolínea 1/2 de la función de superlevel: max{i : X^i <= 1/2},
    con X^i = Σ_{j<i} x^j. Ej: (0.5, 0.5) -> 1.
    """
    return int(round_superlevel_rows(np.asarray(x_s, dtype=float)[None, :])[0])

def round_superlevel_rows(x: np.ndarray) -> np.ndarray:
    """Versión vectorizada para una matriz (N, L) de vectores del simplex."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    mass = x.sum(axis=1, keepdims=True)
    mass[mass <= 0] = 1.0
    x = x / mass
    X = np.cumsum(x, axis=1) - x  # exclusivo: X^0 = 0
    below = X <= 0.5 + 1e-12
    # último índice con X^i <= 1/2 (X es monótono)
    return below.shape[1] - 1 - np.argmax(below[:, ::-1], axis=1)

# --- Serialización JSON ---

def _potential_from_spec(spec: PotentialSpec) -> pot.Potential:
    if spec.pieces is not None:
        return PiecewiseLinearPotential(pieces=[
            BoundedLinearPiece(alpha=row[0], beta=row[1], h_lo=row[2], h_hi=row[3]) for row in spec.pieces
        ])
    h = spec.hinges
    return ConvexHingePotential(
        alpha=h.alpha,
        beta=h.beta,
        hinges=[{"gamma": g, "delta": d} for g, d in h.terms],
        h_lo=h.h_lo,
        h_hi=h.h_hi,
    )

def _potential_to_spec(p: pot.Potential) -> dict:
    if isinstance(p, PiecewiseLinearPotential):
        return {"pieces": [[pc.alpha, pc.beta, pc.h_lo, pc.h_hi] for pc in p.pieces]}
    hinge = HingeSpec(
        alpha=p.alpha, beta=p.beta,
        terms=[[t.gamma, t.delta] for t in p.hinges],
        h_lo=p.h_lo, h_hi=p.h_hi,
    )
    return {"hinges": hinge.model_dump()}

def instance_from_file(data: InstanceFile) -> MrfInstance:
    L = data.labels
    if data.width is not None:
        topo = make_grid(data.width, data.height)
        if data.edges is not None and [list(e) for e in topo.edges.tolist()] != data.edges:
            raise ValueError("'edges' no coincide con la grilla declarada")
    else:
        n = len(data.unary) // L
        topo = GraphTopology(node_count=max(n, 1), edges=np.array(data.edges, dtype=np.int64).reshape(-1, 2))
    if len(data.unary) != topo.node_count * L:
        raise ValueError(f"unary tiene {len(data.unary)} valores, se esperaban N·L = {topo.node_count * L}")
    potentials = [_potential_from_spec(s) for s in data.potentials]
    E = topo.edge_count
    edge_potential = data.edge_potential
    if not edge_potential and len(potentials) == 1:
        edge_potential = [0] * E
    if E and not potentials:
        raise ValueError("hay aristas pero no 'potentials'")
    edge_weight = data.edge_weight if data.edge_weight is not None else [1.0] * E
    return MrfInstance(
        topology=topo,
        labels=L,
        unary=np.array(data.unary, dtype=float).reshape(topo.node_count, L),
        potentials=potentials,
        edge_potential=np.array(edge_potential, dtype=np.int64),
        edge_weight=np.array(edge_weight, dtype=float),
    )

def read_instance(path: Union[str, Path]) -> MrfInstance:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        inst = instance_from_file(InstanceFile.model_validate(raw))
    except (OSError, json.JSONDecodeError, ValidationError, ValueError) as e:
        logger.error(f"Instancia inválida en {path}: {e}")
        raise ValueError(f"instancia inválida en {path}: {e}") from e
    logger.info(f"Instancia leída: {path} (N={inst.node_count}, E={inst.topology.edge_count}, L={inst.labels})")
    return inst

def instance_to_dict(inst: MrfInstance) -> dict:
    topo = inst.topology
    doc = {"labels": inst.labels}
    if topo.is_grid:
        doc["width"] = topo.width
        doc["height"] = topo.height
    else:
        doc["edges"] = topo.edges.tolist()
    doc["unary"] = inst.unary.ravel().tolist()
    doc["potentials"] = [_potential_to_spec(p) for p in inst.potentials]
    doc["edge_potential"] = inst.edge_potential.tolist()
    doc["edge_weight"] = inst.edge_weight.tolist()
    return doc

def write_instance(inst: MrfInstance, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance_to_dict(inst), f)
    logger.info(f"Instancia escrita: {path}")

def instances_equal(a: MrfInstance, b: MrfInstance) -> bool:
    return (
        a.labels == b.labels
        and a.topology.node_count == b.topology.node_count
        and np.array_equal(a.edges, b.edges)
        and a.topology.width == b.topology.width
        and a.topology.height == b.topology.height
        and np.array_equal(a.unary, b.unary)
        and list(a.potentials) == list(b.potentials)
        and np.array_equal(a.edge_potential, b.edge_potential)
        and np.array_equal(a.edge_weight, b.edge_weight)
    )
