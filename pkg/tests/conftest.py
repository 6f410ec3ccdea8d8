from pathlib import Path

import numpy as np
import pytest

from compactmrf.models.schemas import ConvexHingePotential, HingeTerm
from compactmrf.services import potentials as pot
from compactmrf.services.model import GraphTopology, MrfInstance, make_grid, read_instance

DATA_DIR = Path(__file__).resolve().parent.parent / "compactmrf" / "data"

@pytest.fixture
def chain_path() -> Path:
    return DATA_DIR / "chain_example.json"

@pytest.fixture
def chain_instance(chain_path) -> MrfInstance:
    """2 nodos, L=3, θ1=(0,1,2), θ2=(2,1,0), ϑ = min{|h|, 1}; óptimo (0, 2) con energía 1."""
    return read_instance(chain_path)

def grid_instance(width, height, labels, potential, seed=0, integer=False) -> MrfInstance:
    rng = np.random.default_rng(seed)
    topo = make_grid(width, height)
    if integer:
        unary = rng.integers(0, 5, size=(topo.node_count, labels)).astype(float)
        weights = rng.integers(1, 3, size=topo.edge_count).astype(float)
    else:
        unary = rng.uniform(0, 2, size=(topo.node_count, labels))
        weights = rng.uniform(0.2, 1.0, size=topo.edge_count)
    return MrfInstance(
        topology=topo,
        labels=labels,
        unary=unary,
        potentials=[potential],
        edge_potential=np.zeros(topo.edge_count, dtype=np.int64),
        edge_weight=weights,
    )

@pytest.fixture
def truncated_grid() -> MrfInstance:
    """Grilla 3x2, L=4, min{|h|, 2}, datos enteros."""
    return grid_instance(3, 2, 4, pot.truncated_linear(2, 4), seed=1, integer=True)

@pytest.fixture
def convex_grid() -> MrfInstance:
    """Grilla 2x2, L=4, |h| + [h - 1]_+ con pared h >= -2."""
    p = ConvexHingePotential(alpha=-1.0, beta=0.0, hinges=[HingeTerm(gamma=2.0, delta=0), HingeTerm(gamma=1.0, delta=-1)],
                             h_lo=-2)
    return grid_instance(2, 2, 4, p, seed=2, integer=True)

@pytest.fixture
def l1_grid() -> MrfInstance:
    """Grilla 2x2 homogénea con pesos unitarios y min{2|h|, |h| + 1}."""
    inst = grid_instance(2, 2, 3, pot.l1_min([(2.0, 0.0), (1.0, 1.0)], 3), seed=3, integer=True)
    inst.edge_weight = np.ones(inst.topology.edge_count)
    return inst

@pytest.fixture
def path_instance() -> MrfInstance:
    """Cadena de 3 nodos sin metadatos de grilla."""
    topo = GraphTopology(node_count=3, edges=np.array([[0, 1], [1, 2]]))
    return MrfInstance(
        topology=topo,
        labels=3,
        unary=np.array([[0.0, 2.0, 2.0], [1.0, 1.0, 0.0], [2.0, 0.0, 1.0]]),
        potentials=[pot.truncated_linear(1, 3)],
        edge_potential=np.zeros(2, dtype=np.int64),
        edge_weight=np.ones(2),
    )
