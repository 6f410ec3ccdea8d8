import itertools
import math

import numpy as np
import pytest
from pydantic import ValidationError

from compactmrf.models.schemas import (
    INFINITE_ENERGY,
    BoundedLinearPiece,
    ConvexHingePotential,
    HingeTerm,
    PiecewiseLinearPotential,
)
from compactmrf.services import potentials as pot

def min_abs_one():
    return PiecewiseLinearPotential(pieces=[
        BoundedLinearPiece(alpha=-1, beta=0, h_lo=-2, h_hi=0),
        BoundedLinearPiece(alpha=1, beta=0, h_lo=0, h_hi=2),
        BoundedLinearPiece(alpha=0, beta=1, h_lo=-2, h_hi=2),
    ])

@pytest.mark.parametrize("h,expected", [(0, 0.0), (1, 1.0), (-1, 1.0), (2, 1.0), (-2, 1.0)])
def test_evaluate_pwl_min_of_pieces(h, expected):
    assert pot.evaluate_pwl(min_abs_one(), h) == expected

def test_evaluate_pwl_outside_domain_is_infinite():
    assert pot.evaluate_pwl(min_abs_one(), 3) == INFINITE_ENERGY

def test_piece_with_empty_domain_rejected():
    with pytest.raises(ValidationError):
        BoundedLinearPiece(alpha=1, beta=0, h_lo=2, h_hi=1)

def test_piece_rejects_fractional_bound():
    with pytest.raises(ValidationError):
        BoundedLinearPiece(alpha=1, beta=0, h_lo=0.5, h_hi=1)

def test_table_layout():
    t = pot.table(pot.truncated_linear(2, 4), 4)
    assert t.shape == (7,)
    assert t.tolist() == [2.0, 2.0, 1.0, 0.0, 1.0, 2.0, 2.0]

def test_from_samples_truncated_linear_has_three_pieces():
    values = [2, 2, 1, 0, 1, 2, 2]
    p = pot.from_samples(values)
    assert p.K == 3
    assert pot.table(p, 4).tolist() == values
    lines = {(pc.alpha, pc.beta, pc.h_lo, pc.h_hi) for pc in p.pieces}
    assert lines == {(0.0, 2.0, -3, 3), (-1.0, 0.0, -3, 0), (1.0, 0.0, 0, 3)}

def test_from_samples_abs():
    p = pot.from_samples([3, 2, 1, 0, 1, 2, 3])
    assert p.K == 2
    assert {(pc.h_lo, pc.h_hi) for pc in p.pieces} == {(-3, 0), (0, 3)}

def test_from_samples_leaves_infinite_samples_uncovered():
    values = [math.inf, 1, 0, 1, math.inf]
    p = pot.from_samples(values)
    assert pot.evaluate_pwl(p, -2) == INFINITE_ENERGY
    assert pot.table(p, 3).tolist() == values

def test_from_samples_errors():
    with pytest.raises(ValueError):
        pot.from_samples([0, 1])
    with pytest.raises(ValueError):
        pot.from_samples([math.inf, math.inf, math.inf])

def test_from_samples_reproduces_random_tables():
    rng = np.random.default_rng(7)
    for _ in range(50):
        values = rng.integers(0, 6, size=9).astype(float)
        p = pot.from_samples(values)
        np.testing.assert_allclose(pot.table(p, 5), values, atol=1e-12)

def brute_force_min_pieces(values):
    """Menor K por enumeración de subconjuntos de rectas por pares de muestras."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    idx = np.arange(n)
    lines = [(v[i], 0.0, i, i) for i in range(n)]
    lines += [(v[i], (v[j] - v[i]) / (j - i), i, j) for i in range(n) for j in range(i + 1, n)]
    rows = []
    for v0, slope, i, j in lines:
        line = v0 + slope * (idx - i)
        ok = line >= v - 1e-9
        if not ok[i:j + 1].all():
            continue
        lo, hi = i, j
        while lo > 0 and ok[lo - 1]:
            lo -= 1
        while hi < n - 1 and ok[hi + 1]:
            hi += 1
        row = np.full(n, np.inf)
        row[lo:hi + 1] = line[lo:hi + 1]
        rows.append(row)
    rows = np.unique(np.array(rows), axis=0)
    for k in range(1, n + 1):
        for subset in itertools.combinations(range(len(rows)), k):
            if np.allclose(rows[list(subset)].min(axis=0), v, atol=1e-9):
                return k
    raise AssertionError("sin cobertura")

def test_from_samples_picks_fewest_pieces():
    values = [2, 4, 1, 2, 1, 1, 5, 4, 0]
    p = pot.from_samples(values)
    assert p.K == 4
    np.testing.assert_allclose(pot.table(p, 5), values, atol=1e-12)

@pytest.mark.parametrize("seed", range(12))
def test_from_samples_matches_brute_force_minimum(seed):
    rng = np.random.default_rng(100 + seed)
    values = rng.integers(0, 5, size=7).astype(float)
    p = pot.from_samples(values)
    np.testing.assert_allclose(pot.table(p, 4), values, atol=1e-12)
    assert p.K == brute_force_min_pieces(values)

def test_from_samples_has_no_redundant_piece():
    rng = np.random.default_rng(3)
    for _ in range(20):
        values = rng.integers(0, 6, size=11).astype(float)
        p = pot.from_samples(values)
        for drop in range(p.K):
            rest = PiecewiseLinearPotential(pieces=[pc for k, pc in enumerate(p.pieces) if k != drop])
            assert not np.allclose(pot.table(rest, 6), values)

def test_from_samples_convex_table_pairs_up_samples():
    hs = np.arange(-63, 64, dtype=float)
    p = pot.from_samples(hs ** 2)
    assert p.K == 64
    np.testing.assert_allclose(pot.table(p, 64), hs ** 2, atol=1e-9)

def test_max_affine_to_hinge_abs():
    p = pot.max_affine_to_hinge([(-1, 0), (1, 0)])
    assert p.alpha == -1
    assert p.hinges == [HingeTerm(gamma=2.0, delta=0)]
    for h in range(-4, 5):
        assert pot.evaluate_hinge(p, h) == abs(h)

def test_max_affine_to_hinge_drops_dominated_lines():
    p = pot.max_affine_to_hinge([(-1, 0), (0, -5), (1, 0)])
    assert len(p.hinges) == 1

def test_max_affine_to_hinge_errors():
    with pytest.raises(ValueError):
        pot.max_affine_to_hinge([])
    with pytest.raises(ValueError):
        pot.max_affine_to_hinge([(0, 0), (2, 1)])

def test_infinite_hinge_becomes_wall():
    p = ConvexHingePotential(hinges=[{"gamma": math.inf, "delta": -2}])
    assert p.h_hi == 2
    assert p.hinges == []
    assert pot.evaluate_hinge(p, 3) == INFINITE_ENERGY

def test_min_of_concatenates_pieces():
    p = pot.min_of([pot.v_shape(1, 0, 4), pot.v_shape(0, 2, 4)])
    assert p.K == 3
    assert pot.table(p, 4).tolist() == [2.0, 2.0, 1.0, 0.0, 1.0, 2.0, 2.0]

def test_min_of_empty_raises():
    with pytest.raises(ValueError):
        pot.min_of([])

def test_mirror():
    p = PiecewiseLinearPotential(pieces=[BoundedLinearPiece(alpha=2, beta=1, h_lo=-1, h_hi=3)])
    m = pot.mirror(p)
    for h in range(-4, 5):
        assert pot.evaluate_pwl(m, h) == pot.evaluate_pwl(p, -h)

def test_denoising_style_l1_min_has_six_pieces():
    p = pot.l1_min([(24, 0), (8, 1), (3.2, 2)], 64)
    assert p.K == 6
    assert pot.evaluate_pwl(p, 0) == 0.0
    assert pot.evaluate_pwl(p, 1) == pytest.approx(min(24, 9, 5.2))

def test_lipschitz_forms_agree():
    walls, single = pot.lipschitz(2), pot.lipschitz_pwl(2)
    assert np.array_equal(pot.table(walls, 6), pot.table(single, 6))
    assert pot.evaluate_hinge(walls, -3) == INFINITE_ENERGY

def test_to_piecewise_matches_hinge_table():
    p = ConvexHingePotential(alpha=-1, beta=0.5, hinges=[HingeTerm(gamma=2, delta=1)], h_lo=-3)
    pw = pot.to_piecewise(p, 5)
    np.testing.assert_allclose(pot.table(pw, 5), pot.table(p, 5), atol=1e-12)

def test_as_l1_terms():
    terms = pot.as_l1_terms(pot.truncated_linear(2, 5), 5)
    assert sorted(terms) == [(0.0, 2.0), (1.0, 0.0)]

def test_as_l1_terms_rejects_bounded_piece():
    p = PiecewiseLinearPotential(pieces=[BoundedLinearPiece(alpha=1, beta=0, h_lo=0, h_hi=2)])
    with pytest.raises(ValueError):
        pot.as_l1_terms(p, 5)
