import numpy as np
import pytest

from compactmrf.models.schemas import INFINITE_ENERGY
from compactmrf.services import potentials as pot
from compactmrf.services.experiments import integer_potential
from compactmrf.services.model import energy_of_labeling, gen_random_instance
from compactmrf.services.mplp import MplpSolver, lower_envelope, min_filter, mplp_solve
from compactmrf.services.oracle import brute_force_map, naive_envelope

def naive_min_filter(values, lo, hi):
    n = len(values)
    out = []
    for i in range(n):
        window = [values[j] for j in range(i + lo, i + hi + 1) if 0 <= j < n]
        out.append(min(window) if window else INFINITE_ENERGY)
    return np.array(out, dtype=float)

def test_min_filter_simple():
    assert min_filter([3, 1, 4, 1, 5], 0, 1).tolist() == [1, 1, 1, 1, 5]
    assert min_filter([3, 1, 4, 1, 5], -1, 0).tolist() == [3, 1, 1, 1, 1]

def test_min_filter_window_outside_array():
    assert min_filter([1, 2, 3], 5, 6).tolist() == [INFINITE_ENERGY] * 3

def test_min_filter_invalid_window():
    with pytest.raises(ValueError):
        min_filter([1, 2], 1, 0)

def test_min_filter_matches_naive_scan():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        values = rng.integers(-20, 20, size=n).astype(float)
        lo = int(rng.integers(-n - 2, n + 2))
        hi = int(rng.integers(lo, n + 3))
        assert np.array_equal(min_filter(values, lo, hi), naive_min_filter(values, lo, hi))

def test_lower_envelope_matches_naive():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        L = int(rng.integers(2, 129))
        K = int(rng.integers(1, 6))
        theta = rng.integers(0, 50, size=L).astype(float)
        p = integer_potential(rng, L, K)
        w = float(rng.integers(0, 4))
        assert np.array_equal(lower_envelope(theta, p, w), naive_envelope(theta, p, w))

def test_lower_envelope_chain_example(chain_instance):
    p = chain_instance.potentials[0]
    # min_j θ2[j] + ϑ(j - i) con θ2 = (2, 1, 0)
    assert lower_envelope([2.0, 1.0, 0.0], p).tolist() == [1.0, 1.0, 0.0]

def test_mplp_chain(chain_instance):
    dual, labeling, state = mplp_solve(chain_instance, sweeps=100)
    assert dual == pytest.approx(1.0, abs=1e-9)
    assert labeling.labels.tolist() == [0, 2]
    assert state.converged

def test_mplp_dual_monotone_and_bounded():
    for seed in range(3):
        inst = gen_random_instance(4, 4, 5, seed)
        dual, labeling, state = mplp_solve(inst, sweeps=200)
        history = np.array(state.dual_history)
        assert np.all(np.diff(history) >= -1e-10)
        assert dual <= energy_of_labeling(inst, labeling) + 1e-9

def test_mplp_handles_hinge_potentials(convex_grid):
    dual, labeling, _ = mplp_solve(convex_grid, sweeps=50)
    _, optimum = brute_force_map(convex_grid)
    assert dual <= optimum + 1e-9
    assert energy_of_labeling(convex_grid, labeling) >= optimum

def test_mplp_sweep_cap_reported(truncated_grid):
    solver = MplpSolver(truncated_grid)
    state = solver.run(1, tol=-1.0)
    assert state.sweeps == 1
    assert not state.converged
    assert len(state.dual_history) == 2

def test_mplp_no_edges():
    inst = gen_random_instance(1, 1, 4, seed=0)
    dual, labeling, _ = mplp_solve(inst, sweeps=5)
    assert dual == pytest.approx(float(inst.unary.min()))
    assert labeling.labels.tolist() == [int(np.argmin(inst.unary[0]))]

def test_mirror_is_used_for_reverse_messages(chain_instance):
    solver = MplpSolver(chain_instance)
    assert solver.backward[0] == pot.mirror(solver.forward[0])
