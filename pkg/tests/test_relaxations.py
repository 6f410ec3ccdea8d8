import numpy as np
import pytest

from compactmrf.models.schemas import CompactStyle, IsoVariant
from compactmrf.services import potentials as pot
from compactmrf.services.model import energy_of_labeling
from compactmrf.services.oracle import brute_force_map, linprog_optimum, random_instance
from compactmrf.services.relaxations import (
    FREE,
    INTERVAL,
    L2BALL,
    build_compact,
    build_compact_isotropic,
    build_convex_lp,
    build_full_lp,
    count_sizes,
    dump_program,
    joint_branch_value,
    lift_labeling,
    objective_value,
    primal_feasible,
)
from tests.conftest import grid_instance

def random_labelings(inst, count, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, inst.labels, size=inst.node_count) for _ in range(count)]

def feasible_labelings(inst, count, seed=0):
    return [a for a in random_labelings(inst, count, seed) if np.isfinite(energy_of_labeling(inst, a))]

@pytest.mark.parametrize("builder", [build_full_lp, build_compact])
def test_lift_matches_energy_piecewise(builder, truncated_grid):
    prog = builder(truncated_grid)
    for a in random_labelings(truncated_grid, 25):
        x = lift_labeling(truncated_grid, a, prog)
        assert primal_feasible(prog, x)
        assert objective_value(prog, x) == pytest.approx(energy_of_labeling(truncated_grid, a), abs=1e-9)

def test_lift_matches_energy_l1_style(truncated_grid):
    prog = build_compact(truncated_grid, CompactStyle.L1_MIN)
    for a in random_labelings(truncated_grid, 25, seed=1):
        x = lift_labeling(truncated_grid, a, prog)
        assert objective_value(prog, x) == pytest.approx(energy_of_labeling(truncated_grid, a), abs=1e-9)

def test_lift_matches_energy_random_pieces():
    for seed in range(5):
        inst = random_instance(3, 2, 5, seed=seed, max_pieces=3)
        progs = [build_full_lp(inst), build_compact(inst)]
        for a in feasible_labelings(inst, 20, seed):
            for prog in progs:
                x = lift_labeling(inst, a, prog)
                assert objective_value(prog, x) == pytest.approx(energy_of_labeling(inst, a), abs=1e-9)

def test_lift_matches_energy_convex(convex_grid):
    prog = build_convex_lp(convex_grid)
    labelings = feasible_labelings(convex_grid, 40)
    assert labelings
    for a in labelings:
        x = lift_labeling(convex_grid, a, prog)
        assert objective_value(prog, x) == pytest.approx(energy_of_labeling(convex_grid, a), abs=1e-9)

def test_lift_rejects_infeasible_labeling(convex_grid):
    prog = build_convex_lp(convex_grid)
    # h = 0 - 3 = -3 viola la pared h >= -2 en la arista (0, 1)
    with pytest.raises(ValueError):
        lift_labeling(convex_grid, [3, 0, 0, 0], prog)

def test_compact_size_law():
    for L in (4, 8, 20, 64):
        for K, p in ((1, pot.v_shape(0, 1, L)), (2, pot.v_shape(1, 0, L)), (3, pot.truncated_linear(2, L))):
            inst = grid_instance(2, 1, L, p)
            sizes = count_sizes(build_compact(inst))
            assert inst.potentials[0].K == K
            assert sizes.per_edge_primal == [2 * K * L]
            assert sizes.per_edge_rows[0] <= 2 * L * (K + 1) + K
            assert sizes.node_primal == 2 * L

def test_full_lp_size(truncated_grid):
    sizes = count_sizes(build_full_lp(truncated_grid))
    L = truncated_grid.labels
    assert sizes.per_edge_primal == [L * L] * truncated_grid.topology.edge_count
    assert sizes.per_edge_rows == [2 * L] * truncated_grid.topology.edge_count

def test_full_lp_skips_infinite_pairs():
    inst = grid_instance(2, 1, 5, pot.lipschitz_pwl(1))
    sizes = count_sizes(build_full_lp(inst))
    # pares con |j - i| <= 1: 5 + 2·4
    assert sizes.per_edge_primal == [13]

def test_lipschitz_compact_rows_are_one_sided():
    inst = grid_instance(2, 1, 32, pot.lipschitz_pwl(2))
    prog = build_compact(inst)
    iv = prog.row_class == INTERVAL
    assert np.all(prog.row_lo[iv] == 0)
    assert np.all(np.isinf(prog.row_hi[iv]))
    assert prog.constant == 0

def test_chain_optimum_is_one(chain_instance):
    for prog in (build_full_lp(chain_instance), build_compact(chain_instance)):
        value, _ = linprog_optimum(prog)
        assert value == pytest.approx(1.0, abs=1e-7)

def test_compact_matches_full_lp_optimum(truncated_grid):
    full, _ = linprog_optimum(build_full_lp(truncated_grid))
    compact, _ = linprog_optimum(build_compact(truncated_grid))
    assert compact == pytest.approx(full, abs=1e-6)

def test_convex_lp_is_tight(convex_grid):
    _, exact = brute_force_map(convex_grid)
    value, _ = linprog_optimum(build_convex_lp(convex_grid))
    assert value == pytest.approx(exact, abs=1e-6)

def test_builder_potential_mismatch(truncated_grid, convex_grid):
    with pytest.raises(ValueError):
        build_convex_lp(truncated_grid)
    with pytest.raises(ValueError):
        build_compact(convex_grid)

def test_l1_style_rejects_bounded_piece():
    inst = grid_instance(2, 1, 4, pot.min_of([pot.v_shape(1, 0, 4), pot.lipschitz_pwl(1)]))
    with pytest.raises(ValueError):
        build_compact(inst, CompactStyle.L1_MIN)

def test_isotropic_requires_grid(path_instance):
    with pytest.raises(ValueError):
        build_compact_isotropic(path_instance)

def test_isotropic_requires_equal_weights(truncated_grid):
    truncated_grid.edge_weight = np.arange(1.0, truncated_grid.topology.edge_count + 1)
    with pytest.raises(ValueError):
        build_compact_isotropic(truncated_grid)

def test_isotropic_requires_symmetric_potential():
    inst = grid_instance(2, 2, 3, pot.from_samples([3, 1, 0, 2, 2]))
    inst.edge_weight = np.ones(inst.topology.edge_count)
    with pytest.raises(ValueError):
        build_compact_isotropic(inst)

def test_joint_terms_has_l2_groups(l1_grid):
    prog = build_compact_isotropic(l1_grid, IsoVariant.JOINT_TERMS)
    assert np.any(prog.row_class == L2BALL)
    assert np.any(prog.row_class == FREE)

def test_joint_terms_lift_bounded_by_anisotropic_energy(l1_grid):
    prog = build_compact_isotropic(l1_grid, IsoVariant.JOINT_TERMS)
    for a in random_labelings(l1_grid, 30):
        x = lift_labeling(l1_grid, a, prog)
        assert objective_value(prog, x) <= energy_of_labeling(l1_grid, a) + 1e-9
    constant = np.full(l1_grid.node_count, 1)
    x = lift_labeling(l1_grid, constant, prog)
    assert objective_value(prog, x) == pytest.approx(energy_of_labeling(l1_grid, constant), abs=1e-9)

def test_joint_branch_lift_value(l1_grid):
    prog = build_compact_isotropic(l1_grid, IsoVariant.JOINT_BRANCH)
    terms = pot.as_l1_terms(l1_grid.potentials[0], l1_grid.labels)
    right, down = l1_grid.topology.grid_neighbors()
    for a in random_labelings(l1_grid, 30, seed=4):
        expected = float(l1_grid.unary[np.arange(l1_grid.node_count), a].sum())
        for s in range(l1_grid.node_count):
            nbrs = [int(a[l1_grid.edges[e, 1]]) for e in (right[s], down[s]) if e >= 0]
            if nbrs:
                expected += float(joint_branch_value(terms, 1.0, int(a[s]), nbrs, l1_grid.labels).min())
        x = lift_labeling(l1_grid, a, prog)
        assert objective_value(prog, x) == pytest.approx(expected, abs=1e-9)

def unit_grid(potential, labels=3):
    inst = grid_instance(2, 2, labels, potential)
    inst.unary = np.zeros_like(inst.unary)
    inst.edge_weight = np.ones(inst.topology.edge_count)
    return inst

@pytest.mark.parametrize("variant, expected", [
    (IsoVariant.JOINT_TERMS, 2 + np.sqrt(2)),  # β‖(1,1)‖ en el píxel 0, β en los píxeles 1 y 2
    (IsoVariant.JOINT_BRANCH, 3.0),  # β una vez por píxel con aristas
])
def test_isotropic_constant_prior_couples_beta_per_pixel(variant, expected):
    inst = unit_grid(pot.l1_min([(0.0, 1.0)], 3))
    prog = build_compact_isotropic(inst, variant, CompactStyle.L1_MIN)
    x = lift_labeling(inst, np.zeros(4, dtype=int), prog)
    assert objective_value(prog, x) == pytest.approx(expected, abs=1e-9)

@pytest.mark.parametrize("variant, expected", [
    # píxel 0: α(√2 + 1) + β√2;  píxel 1: 2α + β;  píxel 2: α + β
    (IsoVariant.JOINT_TERMS, 5 + 1.5 * np.sqrt(2)),
    # píxel 0: β + α(√2 + 1);  píxel 1: β + 2α;  píxel 2: β + α
    (IsoVariant.JOINT_BRANCH, 5.5 + np.sqrt(2)),
])
def test_isotropic_lift_closed_form(variant, expected):
    inst = unit_grid(pot.l1_min([(1.0, 0.5)], 3))
    prog = build_compact_isotropic(inst, variant, CompactStyle.L1_MIN)
    x = lift_labeling(inst, np.array([0, 2, 1, 0]), prog)
    assert objective_value(prog, x) == pytest.approx(expected, abs=1e-9)

def test_joint_terms_rejects_negative_beta():
    inst = unit_grid(pot.l1_min([(1.0, -1.0)], 3))
    with pytest.raises(ValueError):
        build_compact_isotropic(inst, IsoVariant.JOINT_TERMS, CompactStyle.L1_MIN)

def test_joint_branch_rejects_general_style(l1_grid):
    with pytest.raises(ValueError):
        build_compact_isotropic(l1_grid, IsoVariant.JOINT_BRANCH, CompactStyle.GENERAL)

def test_dump_program_one_line_per_row(chain_instance):
    prog = build_compact(chain_instance)
    lines = dump_program(prog).splitlines()
    assert len(lines) == prog.n_rows + 1
    assert lines[0].startswith("# compact-general")

