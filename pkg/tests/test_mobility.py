import numpy as np
import pytest
from scipy import stats

from aoisched import geometry as geom
from aoisched import mobility


@pytest.fixture(scope="module")
def ring_model():
    cells = geom.ring_cells((10.0, 10.0), 3.0, 1.0)
    return mobility.build_random_walk(cells, 1.0, 0.90)


def test_two_neighbor_cell_splits_residual(ring_model):
    # every ring cell has exactly two neighbors: 0.90 stay, 0.05 each move
    t = ring_model.transition
    for i in range(ring_model.n_cells):
        row = sorted(t[i][t[i] > 0])
        assert row == pytest.approx([0.05, 0.05, 0.90])
        assert t[i, i] == pytest.approx(0.90)


def test_isolated_cell_self_loops():
    model = mobility.build_random_walk([(0.0, 0.0), (5.0, 5.0)], 1.0, 0.7)
    assert np.allclose(model.transition, np.eye(2))


def test_rows_sum_to_one(ring_model):
    assert np.allclose(ring_model.transition.sum(axis=1), 1.0, atol=1e-12)


def test_step_deterministic_row(rng):
    model = mobility.build_random_walk([(0.0, 0.0), (5.0, 5.0)], 1.0, 1.0)
    assert all(mobility.step(model, 2, rng) == 2 for _ in range(50))


def test_step_frequencies_match_row(ring_model, rng):
    n = 1_000_000
    counts = np.zeros(ring_model.n_cells)
    for _ in range(n):
        counts[mobility.step(ring_model, 1, rng) - 1] += 1
    row = ring_model.transition[0]
    for j in np.flatnonzero(row):
        sigma = np.sqrt(n * row[j] * (1 - row[j]))
        assert abs(counts[j] - n * row[j]) < 4 * sigma
    assert counts[row == 0].sum() == 0


def test_step_chi_square(ring_model, rng):
    n = 100_000
    counts = np.zeros(ring_model.n_cells)
    for _ in range(n):
        counts[mobility.step(ring_model, 5, rng) - 1] += 1
    row = ring_model.transition[4]
    support = row > 0
    result = stats.chisquare(counts[support], n * row[support])
    assert result.pvalue > 0.001


def test_n_step_distribution_basics(ring_model):
    start = 3
    zero = mobility.n_step_distribution(ring_model, start, 0)
    assert zero[start - 1] == 1.0 and zero.sum() == 1.0
    one = mobility.n_step_distribution(ring_model, start, 1)
    assert np.allclose(one, ring_model.transition[start - 1])


def test_n_step_rows_stay_stochastic(ring_model):
    for n in (2, 5, 17, 60):
        v = mobility.n_step_distribution(ring_model, 7, n)
        assert abs(v.sum() - 1.0) < 1e-9
        assert (v >= -1e-15).all()


def test_long_run_reaches_stationarity(ring_model):
    # lazy walk on a 24-cycle is irreducible and aperiodic
    a = mobility.n_step_distribution(ring_model, 1, 6000)
    b = mobility.n_step_distribution(ring_model, 1, 6001)
    assert 0.5 * np.abs(a - b).sum() < 1e-6
    assert np.allclose(a, 1.0 / ring_model.n_cells, atol=1e-6)


def test_empty_cells_rejected():
    with pytest.raises(ValueError):
        mobility.build_random_walk([], 1.0, 0.9)
