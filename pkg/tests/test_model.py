import json

import numpy as np
import pytest

from compactmrf.models.schemas import INFINITE_ENERGY
from compactmrf.services import potentials as pot
from compactmrf.services.model import (
    HORIZONTAL,
    VERTICAL,
    LabelAssignment,
    MrfInstance,
    SplitMix64,
    energy_of_labeling,
    gen_random_instance,
    instances_equal,
    make_grid,
    read_instance,
    round_superlevel,
    round_superlevel_rows,
    write_instance,
)

def test_make_grid_edges_and_orientation():
    topo = make_grid(3, 2)
    assert topo.node_count == 6
    assert topo.edge_count == 7
    assert topo.edges[0].tolist() == [0, 1]
    assert topo.edges[1].tolist() == [0, 3]
    assert topo.orientation[0] == HORIZONTAL and topo.orientation[1] == VERTICAL
    right, down = topo.grid_neighbors()
    assert right[2] == -1  # borde derecho
    assert down[3] == -1  # última fila

def test_make_grid_single_edge():
    assert make_grid(2, 1).edge_count == 1

def test_make_grid_rejects_empty():
    with pytest.raises(ValueError):
        make_grid(0, 3)

def test_chain_energies(chain_instance):
    assert energy_of_labeling(chain_instance, [0, 2]) == 1.0
    assert energy_of_labeling(chain_instance, [0, 0]) == 2.0
    assert energy_of_labeling(chain_instance, [1, 1]) == 2.0

def test_energy_out_of_domain_is_infinite():
    topo = make_grid(2, 1)
    inst = MrfInstance(topology=topo, labels=4, unary=np.zeros((2, 4)), potentials=[pot.lipschitz(1)],
                       edge_potential=[0], edge_weight=[1.0])
    assert energy_of_labeling(inst, [0, 2]) == INFINITE_ENERGY
    assert energy_of_labeling(inst, [1, 2]) == 0.0

def test_label_out_of_range_raises(chain_instance):
    with pytest.raises(ValueError):
        energy_of_labeling(chain_instance, [0, 3])
    with pytest.raises(ValueError):
        energy_of_labeling(chain_instance, [0])

def test_instance_validates_shapes():
    topo = make_grid(2, 1)
    with pytest.raises(ValueError):
        MrfInstance(topology=topo, labels=3, unary=np.zeros((2, 2)), potentials=[pot.v_shape(1, 0, 3)],
                    edge_potential=[0], edge_weight=[1.0])
    with pytest.raises(ValueError):
        MrfInstance(topology=topo, labels=3, unary=np.zeros((2, 3)), potentials=[pot.v_shape(1, 0, 3)],
                    edge_potential=[0], edge_weight=[-1.0])
    with pytest.raises(ValueError):
        # dominio más ancho que ±(L-1)
        MrfInstance(topology=topo, labels=3, unary=np.zeros((2, 3)), potentials=[pot.v_shape(1, 0, 5)],
                    edge_potential=[0], edge_weight=[1.0])

def test_splitmix64_reference_value():
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

def test_gen_random_instance_deterministic():
    a = gen_random_instance(4, 3, 5, seed=11)
    b = gen_random_instance(4, 3, 5, seed=11)
    c = gen_random_instance(4, 3, 5, seed=12)
    assert instances_equal(a, b)
    assert not instances_equal(a, c)
    assert a.node_count == 12 and a.labels == 5
    assert np.all((a.unary >= 0) & (a.unary < 2))
    assert np.all((a.edge_weight >= 0) & (a.edge_weight < 1))

def test_default_generator_size():
    inst = gen_random_instance(20, 20, 20, seed=0)
    assert inst.node_count == 400
    assert inst.topology.edge_count == 760

@pytest.mark.parametrize("x,label", [
    ([0.5, 0.5], 1),
    ([1.0, 0.0, 0.0], 0),
    ([0.0, 0.0, 1.0], 2),
    ([0.2, 0.2, 0.6], 2),
    ([0.6, 0.4], 0),
    ([0.3, 0.4, 0.3], 1),
])
def test_round_superlevel(x, label):
    assert round_superlevel(x) == label

def test_round_superlevel_rows_matches_single():
    rng = np.random.default_rng(0)
    x = rng.dirichlet(np.ones(6), size=20)
    expected = [round_superlevel(row) for row in x]
    assert round_superlevel_rows(x).tolist() == expected

def test_round_superlevel_integral_is_identity():
    eye = np.eye(5)
    assert round_superlevel_rows(eye).tolist() == [0, 1, 2, 3, 4]

def test_read_chain_example(chain_instance):
    assert chain_instance.node_count == 2
    assert chain_instance.labels == 3
    assert chain_instance.edges.tolist() == [[0, 1]]
    assert chain_instance.edge_pot(0).K == 3

def test_write_read_roundtrip(tmp_path, convex_grid):
    path = tmp_path / "inst.json"
    write_instance(convex_grid, path)
    again = read_instance(path)
    assert instances_equal(convex_grid, again)
    assert again.topology.is_grid

def test_same_seed_same_file(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_instance(gen_random_instance(3, 3, 4, seed=5), a)
    write_instance(gen_random_instance(3, 3, 4, seed=5), b)
    assert a.read_bytes() == b.read_bytes()

@pytest.mark.parametrize("doc", [
    {"labels": 3, "edges": [[0, 1]], "unary": [0, 1, 2, 2, 1]},  # unary corto
    {"labels": 3, "edges": [[0, 1]], "unary": [0] * 6},  # aristas sin potenciales
    {"labels": 3, "width": 2, "unary": [0] * 6, "potentials": [{"pieces": [[0, 0, 0, 0]]}]},  # sin height
    {"labels": 2, "edges": [[0, 1]], "unary": [0] * 4, "potentials": [{"pieces": [[0, 0, 0.5, 1]]}]},
])
def test_read_invalid_instance(tmp_path, doc):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ValueError):
        read_instance(path)

def test_read_missing_file_raises(tmp_path):
    with pytest.raises((ValueError, OSError)):
        read_instance(tmp_path / "missing.json")

def test_label_assignment_validate():
    LabelAssignment([0, 1]).validate(2, 2)
    with pytest.raises(ValueError):
        LabelAssignment([-1, 0]).validate(2, 2)
