import numpy as np
import pytest

from compactmrf.services.experiments import lipschitz_instance, smooth_signal
from compactmrf.services.graphcut import (
    CutError,
    CutGraph,
    build_cut_graph,
    extract_labeling,
    max_flow,
    solve_graphcut,
)
from compactmrf.services.model import energy_of_labeling
from compactmrf.services.oracle import brute_force_map, linprog_optimum, random_instance
from compactmrf.services.relaxations import build_convex_lp

@pytest.mark.parametrize("seed", range(20))
def test_graphcut_matches_brute_force(seed):
    inst = random_instance(2, 3, 5, seed=seed, convex=True)
    labeling, energy, cut_energy = solve_graphcut(inst)
    _, exact = brute_force_map(inst)
    assert energy == pytest.approx(exact, abs=1e-9)
    assert cut_energy == pytest.approx(energy, abs=1e-6)

@pytest.mark.parametrize("seed", range(3))
def test_graphcut_matches_convex_lp(seed):
    inst = random_instance(2, 3, 5, seed=seed, convex=True)
    _, energy, _ = solve_graphcut(inst)
    value, _ = linprog_optimum(build_convex_lp(inst))
    assert value == pytest.approx(energy, abs=1e-4)

def test_graphcut_with_walls(convex_grid):
    labeling, energy, _ = solve_graphcut(convex_grid)
    _, exact = brute_force_map(convex_grid)
    assert np.isfinite(energy)
    assert energy == pytest.approx(exact, abs=1e-9)

def test_graphcut_lipschitz_signal():
    signal = smooth_signal(6, 5, seed=1, noise=1.5)
    inst = lipschitz_instance(signal, 5, eta=0.2, convex=True)
    labeling, energy, _ = solve_graphcut(inst)
    _, exact = brute_force_map(inst)
    assert energy == pytest.approx(exact, abs=1e-9)
    assert np.all(np.abs(np.diff(labeling.labels)) <= 1)

def test_graphcut_rejects_piecewise(chain_instance):
    with pytest.raises(ValueError):
        build_cut_graph(chain_instance)

def test_graph_layout(convex_grid):
    g, _ = build_cut_graph(convex_grid)
    L = convex_grid.labels
    assert g.n_vertices == 2 + convex_grid.node_count * (L + 1)
    assert g.vertex(1, 0) == 2 + (L + 1)
    assert g.big_m > max(c for c, h in zip(g.caps, g.hard) if not h)

def test_negative_capacity_raises():
    g = CutGraph(node_count=1, labels=2)
    with pytest.raises(CutError):
        g.add_arc(0, 2, -1.0)

def test_max_flow_small_network():
    # fuente -> a (3), fuente -> b (2), a -> b (1), a -> sumidero (2), b -> sumidero (3)
    g = CutGraph(node_count=1, labels=1)
    a, b = 2, 3
    for u, v, c in [(0, a, 3), (0, b, 2), (a, b, 1), (a, 1, 2), (b, 1, 3)]:
        g.add_arc(u, v, c)
    g.finalize()
    flow, side = max_flow(g)
    assert flow == pytest.approx(5.0)
    assert side[0] and not side[1]

def test_extract_labeling_rejects_non_monotone_cut():
    g = CutGraph(node_count=1, labels=3)
    side = np.zeros(g.n_vertices, dtype=bool)
    side[[0, g.vertex(0, 0), g.vertex(0, 2)]] = True
    with pytest.raises(CutError):
        extract_labeling(g, side)

def test_extract_labeling_reads_column():
    g = CutGraph(node_count=1, labels=3)
    side = np.zeros(g.n_vertices, dtype=bool)
    side[[0, g.vertex(0, 0), g.vertex(0, 1)]] = True
    assert extract_labeling(g, side).labels.tolist() == [1]

def test_graphcut_energy_matches_labeling(convex_grid):
    labeling, energy, _ = solve_graphcut(convex_grid)
    assert energy == energy_of_labeling(convex_grid, labeling)
